"""Named parameter collections and seeded initialisers."""
from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


class ParameterSet(Mapping):
    """Ordered map ``name -> Tensor`` whose tensors carry gradient accumulators.

    Every tensor's ``.grad`` is allocated up front with the value's shape, so
    ``backward()`` accumulates in place and the optimiser can always read it.
    """

    def __init__(self, values: Mapping[str, np.ndarray] | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, value in (values or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        data = np.array(value.data if isinstance(value, Tensor) else value, copy=True)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(DEFAULT_DTYPE)
        t = Tensor(data, requires_grad=True)
        t.grad = np.zeros_like(data)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad[...] = 0.0

    def detached(self) -> dict[str, Tensor]:
        """Non-differentiable views for inference: no graph is recorded."""
        return {name: Tensor(t.data) for name, t in self._tensors.items()}

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet({n: t.data.astype(dtype) for n, t in self._tensors.items()})

    def copy(self) -> "ParameterSet":
        return ParameterSet({n: t.data for n, t in self._tensors.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for name, value in state.items():
            t = self._tensors[name]
            if t.data.shape != np.shape(value):
                raise ValueError(f"shape mismatch for {name}: {t.data.shape} vs {np.shape(value)}")
            t.data[...] = value

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self._tensors.values())


def uniform_fan_in(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(DEFAULT_DTYPE)


def normal_embedding(rng: np.random.Generator, rows: int, dim: int, std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=(rows, dim)).astype(DEFAULT_DTYPE)


def zeros(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=DEFAULT_DTYPE)


def ones(*shape: int) -> np.ndarray:
    return np.ones(shape, dtype=DEFAULT_DTYPE)

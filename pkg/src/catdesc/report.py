"""Serialising run reports as canonical JSON or flat CSV tables."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .harness import GENERATION_METRICS, ZERO_SHOT_METRICS, RunReport

FORMATS = ("json", "csv")


def csv_columns() -> list[str]:
    cols = ["condition", "mode", "decode", "fold"]
    cols += [f"{part}_{m}" for part in ("seen", "unseen") for m in ZERO_SHOT_METRICS]
    return cols + list(GENERATION_METRICS)


def _split(name: str) -> tuple[str, str]:
    return tuple(name.split("/", 1)) if "/" in name else ("", "")


def csv_rows(report: RunReport) -> list[dict]:
    """One row per (condition, fold), then a mean and a std row per condition."""
    rows = []
    for name in report.conditions:
        mode, dec = _split(name)
        for f in report.folds:
            block = f.conditions[name]
            row = {"condition": name, "mode": mode, "decode": dec, "fold": str(f.fold_id)}
            for part in ("seen", "unseen"):
                row.update({f"{part}_{m}": block[part][m] for m in ZERO_SHOT_METRICS})
            row.update({m: block["generation"][m] for m in GENERATION_METRICS})
            rows.append(row)
    for name in report.conditions:
        mode, dec = _split(name)
        agg = report.aggregate[name]
        for stat in ("mean", "std"):
            row = {"condition": name, "mode": mode, "decode": dec, "fold": stat}
            for part in ("seen", "unseen"):
                row.update({f"{part}_{m}": agg[part][m][stat] for m in ZERO_SHOT_METRICS})
            row.update({m: agg["generation"][m][stat] for m in GENERATION_METRICS})
            rows.append(row)
    return rows


def render(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return report.dumps()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=csv_columns(), lineterminator="\n")
        writer.writeheader()
        for row in csv_rows(report):
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}; choose from {list(FORMATS)}")


def emit_report(report: RunReport, path, fmt: str = "json") -> Path:
    path = Path(path)
    text = render(report, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path

import numpy as np
import pytest

from catdesc.classifier import ClassifierConfig, class_logits, class_score, classify, init_classifier_params
from catdesc.neural import Tensor, cross_entropy
from conftest import gradcheck_error, unit_scale

CFG = ClassifierConfig(feature_dim=6, n_classes=5, emb_dim=4, h1=7, h2=5)


@pytest.fixture
def params():
    rng = np.random.default_rng(0)
    return unit_scale(init_classifier_params(CFG, rng), rng)


def scalar_score(x, v, p):
    """Per-class oracle written out with plain loops over the explicit concatenation."""
    W1, b1, W2, b2, W3 = (p[k].data for k in ("cls.W1", "cls.b1", "cls.W2", "cls.b2", "cls.W3"))
    f1 = [max(0.0, sum(x[i] * W1[i, j] for i in range(len(x))) + b1[j]) for j in range(len(b1))]
    joint = f1 + list(v)
    f2 = [max(0.0, sum(joint[i] * W2[i, j] for i in range(len(joint))) + b2[j]) for j in range(len(b2))]
    return sum(f2[j] * W3[j, 0] for j in range(len(f2)))


def test_identical_rows_give_uniform_probabilities(params):
    params["emb.V"].data[...] = params["emb.V"].data[0]
    x = np.random.default_rng(1).normal(size=CFG.feature_dim)
    np.testing.assert_allclose(classify(x, params, CFG), np.full(CFG.n_classes, 1 / CFG.n_classes), rtol=1e-12)


def test_probabilities_sum_to_one(params):
    x = np.random.default_rng(2).normal(size=(4, CFG.feature_dim))
    probs = classify(x, params, CFG)
    assert probs.shape == (4, CFG.n_classes)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_scores_match_scalar_oracle(params):
    rng = np.random.default_rng(3)
    x = rng.normal(size=CFG.feature_dim)
    logits = class_logits(Tensor(x), params.detached(), CFG).data[0]
    for c in range(CFG.n_classes):
        oracle = scalar_score(x, params["emb.V"].data[c], params)
        assert logits[c] == pytest.approx(oracle, rel=1e-10, abs=1e-12)
        assert class_score(x, c, params.detached(), CFG) == pytest.approx(oracle, rel=1e-10, abs=1e-12)


def test_hand_set_two_class_case():
    cfg = ClassifierConfig(feature_dim=2, n_classes=2, emb_dim=1, h1=2, h2=1)
    p = init_classifier_params(cfg, np.random.default_rng(0)).astype(np.float64)
    p["cls.W1"].data[...] = [[1.0, 0.0], [0.0, 1.0]]
    p["cls.W2"].data[...] = [[1.0], [1.0], [2.0]]
    p["cls.W3"].data[...] = [[1.0]]
    p["emb.V"].data[...] = [[0.5], [-3.0]]
    x = np.array([1.0, 2.0])
    # f1 = [1, 2]; class 0: relu(1 + 2 + 1) = 4; class 1: relu(3 - 6) = 0
    logits = class_logits(Tensor(x), p.detached(), cfg).data[0]
    np.testing.assert_allclose(logits, [4.0, 0.0])
    probs = classify(x, p, cfg)
    np.testing.assert_allclose(probs, [np.exp(4) / (np.exp(4) + 1), 1 / (np.exp(4) + 1)])


def test_permuting_rows_permutes_scores(params):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, CFG.feature_dim))
    V = params["emb.V"].data
    perm = rng.permutation(CFG.n_classes)
    base = classify(x, params, CFG)
    np.testing.assert_allclose(classify(x, params, CFG, V=V[perm]), base[:, perm], rtol=1e-12)
    swapped = V.copy()
    swapped[[0, 1]] = swapped[[1, 0]]
    a, b = class_score(x[0], 0, params, CFG), class_score(x[0], 1, params, CFG)
    assert class_score(x[0], 0, params, CFG, V=swapped) == pytest.approx(b)
    assert class_score(x[0], 1, params, CFG, V=swapped) == pytest.approx(a)


def test_scores_do_not_depend_on_other_rows(params):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, CFG.feature_dim))
    det = params.detached()
    base = class_logits(Tensor(x), det, CFG).data
    V = params["emb.V"].data.copy()
    V[2] += rng.normal(size=CFG.emb_dim) * 10
    after = class_logits(Tensor(x), det, CFG, V=V).data
    keep = [0, 1, 3, 4]
    np.testing.assert_array_equal(after[:, keep], base[:, keep])
    assert not np.allclose(after[:, 2], base[:, 2])


def test_classifier_gradients(params):
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(4, CFG.feature_dim)))
    y = rng.integers(0, CFG.n_classes, size=4)
    assert gradcheck_error(lambda q: cross_entropy(class_logits(x, q, CFG), y), params) < 1e-4


def test_errors(params):
    with pytest.raises(ValueError):
        classify(np.zeros(CFG.feature_dim + 1), params, CFG)
    with pytest.raises(IndexError):
        class_score(np.zeros(CFG.feature_dim), CFG.n_classes, params, CFG)

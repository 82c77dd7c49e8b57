import numpy as np
import pytest

from catdesc.classifier import class_logits, classify
from catdesc.data import EOS_ID, make_folds
from catdesc.decoding import DecodeConfig
from catdesc.describer import (Describer, DescriberHyper, ExemplarCache, select_exemplars, teacher_forcing_batch,
                               train_describer, training_triples)
from catdesc.neural import Tensor, cross_entropy, decoder_logits
from catdesc.neural.gradcheck import backward_gradients
from conftest import gradcheck_error, tiny_world, unit_scale

SMALL = DescriberHyper(emb_dim=8, h1=8, h2=8, d_model=8, n_layers=1, n_heads=2, max_len=12, epochs=5, lr=3e-3,
                       batch_size=16)


def make(mode, world, hyper=SMALL, scale=True):
    d = Describer(mode, world.vocab, world.n_classes, world.feature_dim, hyper)
    if scale:
        d.params = unit_scale(d.params, np.random.default_rng(0), std=0.3)
    return d


def batch(world, n=4):
    idx = np.arange(0, 10 * n, 10)
    return world.features[idx].astype(np.float64), world.labels[idx], [world.descriptions[i][0] for i in idx]


@pytest.mark.parametrize("mode", ["prototype", "exemplar", "both"])
def test_describer_loss_gradients(world, fold, mode):
    d = make(mode, world, DescriberHyper(emb_dim=6, h1=5, h2=4, d_model=4, n_layers=1, n_heads=2, max_len=12))
    if mode != "prototype":
        d.update_exemplar_cache(world, fold.train)
    x, y, texts = batch(world, 3)
    has = [True, False, True]
    assert gradcheck_error(lambda q: d.loss(x, y, texts, has, p=q), d.params) < 1e-4


def test_undescribed_examples_only_pay_classifier_ce(world):
    d = make("prototype", world)
    x, y, texts = batch(world)
    loss = float(d.loss(x, y, texts, [False] * 4, p=d.params.detached()).data)
    ce = float(cross_entropy(class_logits(Tensor(x), d.params.detached(), d.cls_cfg), y).data) / 4
    assert loss == pytest.approx(ce, rel=1e-12)


def test_two_token_description_matches_hand_summed_terms(world):
    d = make("prototype", world)
    det = d.params.detached()
    x = world.features[:1].astype(np.float64)
    y = world.labels[:1]
    desc = world.descriptions[0][0][:2]
    total = float(d.loss(x, y, [desc], [True], p=det).data)
    probs = classify(x[0], d.params, d.cls_cfg)
    terms = [-np.log(probs[y[0]])]
    rep = d.class_reps(y, det)
    prefix, targets = [0], list(desc) + [EOS_ID]
    for i, target in enumerate(targets):
        logits = decoder_logits(np.array([prefix[: i + 1]]), rep, det, d.dec_cfg).data[0, -1]
        logits = logits - logits.max()
        terms.append(-(logits[target] - np.log(np.exp(logits).sum())))
        if i < len(desc):
            prefix.append(desc[i])
    assert total == pytest.approx(sum(terms), rel=1e-9)


def test_empty_description_marked_described_is_an_error(world):
    d = make("prototype", world)
    x, y, texts = batch(world, 2)
    with pytest.raises(ValueError):
        d.loss(x, y, [(), texts[1]], [True, True])


def test_teacher_forcing_layout():
    inputs, targets = teacher_forcing_batch([(5, 6), (7,)], max_len=8)
    assert inputs.tolist() == [[0, 5, 6], [0, 7, 2]]
    assert targets.tolist() == [[5, 6, 1], [7, 1, 2]]
    inputs, targets = teacher_forcing_batch([(5, 6, 7, 8)], max_len=3)
    assert targets.tolist() == [[5, 6, 1]]


def test_exemplar_cache_matches_brute_force_scan():
    world = tiny_world(n_classes=4, images_per_class=6)
    d = make("exemplar", world)
    train = world.image_ids
    cache = select_exemplars(d.params, d.cls_cfg, world, train)
    for c in range(4):
        best, best_id = -1.0, None
        for i, img in enumerate(world.image_ids):
            if world.labels[i] != c:
                continue
            p = classify(world.features[i], d.params, d.cls_cfg)[c]
            if p > best or (p == best and img < best_id):
                best, best_id = p, img
        assert cache.image_ids[c] == best_id
        np.testing.assert_array_equal(cache.features[c], world.features[world.index_of(best_id)])


def test_exemplar_ties_go_to_lowest_image_id():
    world = tiny_world(n_classes=3, noise_sigma=0.0)
    d = make("exemplar", world)
    cache = select_exemplars(d.params, d.cls_cfg, world, world.image_ids[::-1])
    for c in range(3):
        assert cache.image_ids[c] == min(world.image_ids[i] for i in world.images_of_class(c))


def test_exemplar_needs_candidates(world):
    d = make("exemplar", world)
    with pytest.raises(ValueError):
        select_exemplars(d.params, d.cls_cfg, world, world.image_ids[:5])


def test_class_representations(world, fold):
    d = make("both", world)
    with pytest.raises(RuntimeError):
        d.exemplar_rep(0)
    d.update_exemplar_cache(world, fold.train)
    both = d.both_rep(1)
    assert both.shape == (SMALL.emb_dim + world.feature_dim,)
    np.testing.assert_array_equal(both[:SMALL.emb_dim], d.prototype_rep(1).data)
    assert any(np.array_equal(d.exemplar_rep(1), world.features[i]) for i in world.images_of_class(1))
    before = d.prototype_rep(1).data.copy()
    d.params["emb.V"].data[1] += 1.0
    assert not np.array_equal(d.prototype_rep(1).data, before)
    with pytest.raises(IndexError):
        d.prototype_rep(world.n_classes)


def test_exemplar_features_are_data_not_parameters(world, fold):
    from catdesc.neural import AdamState, adam_step
    d = make("exemplar", world)
    d.update_exemplar_cache(world, fold.train)
    frozen = d.cache.features.copy()
    assert not any(n.startswith("cache") for n in d.params)
    x, y, texts = batch(world)
    d.loss(x, y, texts, [True] * 4).backward()
    adam_step(d.params, AdamState(lr=0.1))
    np.testing.assert_array_equal(d.cache.features, frozen)


def test_unseen_training_examples_hide_descriptions(world, fold):
    triples = training_triples(world, fold)
    for i, desc, described in triples:
        assert described == (int(world.labels[i]) not in fold.unseen)
        assert (desc == ()) == (not described)


@pytest.fixture(scope="module")
def pilot():
    world = tiny_world()
    fold = make_folds(world, n_folds=2, n_unseen=2, seed=0)[0]
    return world, fold, train_describer(world, fold, "exemplar", SMALL)


def test_training_reduces_loss_and_never_sees_unseen_text(pilot):
    world, fold, run = pilot
    assert run.log[4]["loss"] < run.log[0]["loss"]
    assert run.counters.decoder_unseen_examples == 0
    assert run.counters.classifier_examples > run.counters.decoder_examples > 0
    assert run.counters.cache_refreshes == SMALL.epochs + 1
    assert 1 <= run.best_epoch <= SMALL.epochs


def test_prototype_mode_never_builds_a_cache(world, fold):
    run = train_describer(world, fold, "prototype", DescriberHyper(**{**SMALL.to_json(), "epochs": 1}))
    assert run.describer.cache is None and run.counters.cache_refreshes == 0


def test_training_is_deterministic(world, fold):
    hyper = DescriberHyper(**{**SMALL.to_json(), "epochs": 2})
    a, b = train_describer(world, fold, "both", hyper), train_describer(world, fold, "both", hyper)
    assert a.log == b.log
    for k, v in a.describer.state().items():
        np.testing.assert_array_equal(v, b.describer.state()[k])


def test_generation_contract(pilot):
    world, fold, run = pilot
    d = run.describer
    for method in ("greedy", "beam"):
        cfg = DecodeConfig(method, beam_width=2, max_len=6)
        a = d.generate(fold.unseen[0], cfg)
        assert a == d.generate(fold.unseen[0], cfg)
        assert len(a.tokens) <= 6 and all(0 <= t < len(world.vocab) for t in a.tokens)
    words = d.generate_description(fold.seen[0], DecodeConfig("nucleus", max_len=6), np.random.default_rng(0))
    assert all(w in world.vocab for w in words)


def test_state_round_trip(pilot):
    _, fold, run = pilot
    d = run.describer
    back = Describer.from_state(d.meta(), d.state())
    cfg = DecodeConfig("beam", max_len=8)
    assert back.generate(fold.seen[0], cfg) == d.generate(fold.seen[0], cfg)
    assert isinstance(back.cache, ExemplarCache) and back.cache.image_ids == d.cache.image_ids


def test_trained_description_names_true_attributes():
    world = tiny_world(noise_sigma=0.0, descriptions_per_image=4)
    fold = make_folds(world, n_folds=2, n_unseen=2, seed=0)[0]
    hyper = DescriberHyper(emb_dim=16, h1=16, h2=16, d_model=32, n_layers=2, n_heads=2, max_len=16,
                           epochs=12, lr=3e-3, batch_size=16)
    d = train_describer(world, fold, "prototype", hyper).describer
    cfg = DecodeConfig("beam", beam_width=2, max_len=16)
    hits = 0
    for c in fold.seen:
        attrs = set(world.meta["assignments"][c].values())
        hits += bool(attrs & set(d.generate_description(c, cfg)))
    assert hits == len(fold.seen)

import itertools
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catdesc.data import (BOS_ID, EOS_ID, PAD_ID, UNK_ID, SyntheticWorldConfig, Vocabulary, build_vocabulary,
                          generate_synthetic_world, load_corpus, load_folds, make_folds, read_feature_matrix,
                          save_corpus, save_folds, split_by_seen, tokenize, write_feature_matrix)
from catdesc.data.corpus import write_feature_csv
from conftest import tiny_world


def test_special_token_ids():
    v = build_vocabulary(["a bird ."])
    assert v.to_list() == ["<bos>", "<eos>", "<pad>", "<unk>", "a", "bird", "."]
    assert (BOS_ID, EOS_ID, PAD_ID, UNK_ID) == (0, 1, 2, 3)


def test_vocabulary_counts_duplicates_once():
    assert len(build_vocabulary(["a a a", "a b"])) == 6


def test_tokenize_lowercases_and_detaches_punctuation():
    assert tokenize("This bird has a Long, curved bill.") == [
        "this", "bird", "has", "a", "long", ",", "curved", "bill", "."]


def test_unknown_tokens_map_to_unk():
    v = build_vocabulary(["a red bill"])
    assert v.encode("a green bill") == [4, UNK_ID, 6]


def test_vocabulary_round_trip_and_validation():
    v = build_vocabulary(["x y z"])
    assert Vocabulary.from_list(v.to_list()).to_list() == v.to_list()
    with pytest.raises(ValueError):
        Vocabulary.from_list(["x", "y"])
    with pytest.raises(ValueError):
        build_vocabulary([])


def test_descriptions_round_trip(world):
    texts = [" ".join(world.vocab.decode(d)) for ds in world.descriptions for d in ds]
    for t, ds in zip(texts, (d for ds in world.descriptions for d in ds)):
        assert tuple(world.vocab.encode(t)) == ds


@given(st.lists(st.sampled_from(["red", "bill", ",", "wing", "."]), min_size=1, max_size=12))
@settings(max_examples=50, deadline=None)
def test_encode_decode_property(tokens):
    v = build_vocabulary(["red bill , wing ."])
    assert v.decode(v.encode(" ".join(tokens))) == tokens


def _write_toy(tmp_path, rows, labels, feats, csv_features=False):
    (tmp_path / "d.tsv").write_text("".join(f"{a}\t{b}\t{c}\n" for a, b, c in rows))
    (tmp_path / "l.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in labels))
    if csv_features:
        write_feature_csv(tmp_path / "f.csv", [a for a, _ in labels], feats)
        return tmp_path / "d.tsv", tmp_path / "f.csv", tmp_path / "l.tsv"
    write_feature_matrix(tmp_path / "f.bin", feats)
    return tmp_path / "d.tsv", tmp_path / "f.bin", tmp_path / "l.tsv"


def test_load_three_image_fixture(tmp_path):
    rows = [("i1", "1", "a red bill ."), ("i2", "2", "a blue wing ."), ("i3", "1", "red wing")]
    labels = [("i1", "1"), ("i2", "2"), ("i3", "1")]
    c = load_corpus(*_write_toy(tmp_path, rows, labels, np.eye(3, dtype=np.float32)))
    assert len(c.image_ids) == 3 and c.n_classes == 2
    assert set(c.vocab.to_list()[4:]) == {"a", "red", "bill", ".", "blue", "wing"}
    assert list(c.labels) == [0, 1, 0]


def test_load_csv_features_in_any_order(tmp_path):
    rows = [("i1", "a", "x"), ("i2", "b", "y")]
    paths = _write_toy(tmp_path, rows, [("i1", "a"), ("i2", "b")], np.array([[1.0], [2.0]]), csv_features=True)
    (tmp_path / "f.csv").write_text("i2,2.0\ni1,1.0\n")
    c = load_corpus(*paths)
    np.testing.assert_array_equal(c.features[:, 0], [1.0, 2.0])


def test_load_errors(tmp_path):
    labels = [("i1", "1"), ("i2", "2")]
    feats = np.zeros((2, 3), dtype=np.float32)
    with pytest.raises(ValueError, match="no descriptions"):
        load_corpus(*_write_toy(tmp_path, [], labels, feats))
    with pytest.raises(ValueError, match="unknown image ids"):
        load_corpus(*_write_toy(tmp_path, [("i9", "1", "x")], labels, feats))
    with pytest.raises(ValueError, match="rows but"):
        load_corpus(*_write_toy(tmp_path, [("i1", "1", "x")], labels, np.zeros((3, 3), dtype=np.float32)))
    with pytest.raises(ValueError, match="disagrees"):
        load_corpus(*_write_toy(tmp_path, [("i1", "2", "x")], labels, feats))


def test_truncated_feature_file(tmp_path):
    path = tmp_path / "f.bin"
    write_feature_matrix(path, np.ones((2, 3)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError):
        read_feature_matrix(path)


def test_save_load_corpus_round_trip(tmp_path, world):
    back = load_corpus(*(save_corpus(world, tmp_path)[k] for k in ("descriptions", "features", "labels")))
    np.testing.assert_array_equal(back.features, world.features)
    np.testing.assert_array_equal(back.labels, world.labels)
    assert back.image_ids == world.image_ids
    decode = lambda c: [[c.vocab.decode(d) for d in ds] for ds in c.descriptions]
    assert decode(back) == decode(world)


def test_fold_unseen_sets_are_disjoint_by_enumeration():
    c = tiny_world(n_classes=10)
    folds = make_folds(c, n_folds=2, n_unseen=2, seed=4)
    for a, b in itertools.combinations(folds, 2):
        assert not set(a.unseen) & set(b.unseen)
    for f in folds:
        assert set(f.seen) | set(f.unseen) == set(range(10)) and not set(f.seen) & set(f.unseen)
        splits = [set(f.train), set(f.val), set(f.test)]
        assert sum(map(len, splits)) == len(c.image_ids)
        assert set.union(*splits) == set(c.image_ids)
        for label in range(10):
            n_val = sum(int(c.labels[c.index_of(i)]) == label for i in f.val)
            n_test = sum(int(c.labels[c.index_of(i)]) == label for i in f.test)
            assert n_val == n_test == 1


def test_folds_are_deterministic_and_round_trip(tmp_path, world):
    a, b = make_folds(world, 2, 2, seed=9), make_folds(world, 2, 2, seed=9)
    assert a == b
    save_folds(tmp_path / "folds.json", a)
    assert load_folds(tmp_path / "folds.json") == a


def test_fold_errors(world):
    with pytest.raises(ValueError, match="no seen classes"):
        make_folds(world, n_folds=1, n_unseen=world.n_classes)
    with pytest.raises(ValueError):
        make_folds(world, n_folds=5, n_unseen=2)


def test_split_by_seen(world, fold):
    seen_ids, unseen_ids = split_by_seen(world, fold, "test")
    assert all(int(world.labels[world.index_of(i)]) in fold.unseen for i in unseen_ids)
    assert len(seen_ids) + len(unseen_ids) == len(fold.test)


def test_zero_noise_world_has_identical_features_per_class():
    c = tiny_world(noise_sigma=0.0)
    for label in range(c.n_classes):
        rows = c.features[c.images_of_class(label)]
        assert np.all(rows == rows[0])


def test_class_assignments_are_distinct():
    c = generate_synthetic_world(SyntheticWorldConfig(n_classes=30, seed=1))
    keys = [tuple(sorted(a.items())) for a in c.meta["assignments"]]
    assert len(set(keys)) == 30
    with pytest.raises(ValueError):
        generate_synthetic_world(SyntheticWorldConfig(n_classes=10, parts=["a", "b"], attributes=["x"],
                                                      attributes_per_class=2))


def test_nearest_signature_oracle_is_perfect():
    cfg = SyntheticWorldConfig(n_classes=30, attributes=["red", "blue", "yellow", "black", "white", "brown",
                                                         "grey", "green"],
                               attributes_per_class=5, noise_sigma=0.1, images_per_class=20, seed=0)
    c = generate_synthetic_world(cfg)
    sig = c.meta["signatures"]
    d = ((c.features[:, None, :] - sig[None]) ** 2).sum(-1)
    assert np.mean(d.argmin(1) == c.labels) == 1.0


def test_descriptions_mention_true_attributes(world):
    for label in range(world.n_classes):
        truth = world.meta["assignments"][label]
        for d in world.texts_of_class(label):
            words = world.vocab.decode(d)
            mentioned = [(words[i + 1], words[i]) for i in range(len(words) - 1) if words[i + 1] in truth]
            assert len(mentioned) >= 2
            assert all(truth[part] == attr for part, attr in mentioned)


def test_synthetic_world_is_deterministic():
    a, b = tiny_world(), tiny_world()
    np.testing.assert_array_equal(a.features, b.features)
    assert a.descriptions == b.descriptions


CUB_DIR = os.environ.get("CATDESC_CUB_DIR")


@pytest.mark.skipif(not CUB_DIR, reason="set CATDESC_CUB_DIR to a CUB corpus to check split sizes")
def test_cub_split_sizes():
    d = Path(CUB_DIR)
    c = load_corpus(d / "descriptions.tsv", d / "features.bin", d / "labels.tsv")
    assert (len(c.image_ids), c.n_classes) == (11788, 200)
    # per-fold seen/unseen shares depend on which classes are held out; totals do not
    f = make_folds(c)[0]
    sizes = {s: sum(map(len, split_by_seen(c, f, s))) for s in ("train", "val", "test")}
    assert sizes == {"train": 8482 + 948, "val": 1060 + 119, "test": 1060 + 119}

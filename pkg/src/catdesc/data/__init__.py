"""Corpora, folds, vocabularies and the synthetic concept world."""
from .corpus import Corpus, Example, load_corpus, read_feature_matrix, save_corpus, write_feature_matrix
from .folds import FoldSpec, load_folds, make_folds, save_folds, split_by_seen
from .synthetic import SyntheticWorldConfig, generate_synthetic_world
from .vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary, build_vocabulary, tokenize

__all__ = [
    "BOS_ID", "Corpus", "EOS_ID", "Example", "FoldSpec", "PAD_ID", "SyntheticWorldConfig", "UNK_ID",
    "Vocabulary", "build_vocabulary", "generate_synthetic_world", "load_corpus", "load_folds",
    "make_folds", "read_feature_matrix", "save_corpus", "save_folds", "split_by_seen", "tokenize",
    "write_feature_matrix",
]

"""Generation and zero-shot classification metrics."""
from .bleu import bleu
from .cider import cider, cider_scores
from .discriminativity import (DiscriminativityStats, Lexicons, NPFeature, disc_description, disc_feature,
                               extract_np_features, perplexity)
from .ranking import accuracy_at_k, macro_mean, mean_rank, rank_from_scores, true_ranks

__all__ = [
    "DiscriminativityStats", "Lexicons", "NPFeature", "accuracy_at_k", "bleu", "cider", "cider_scores",
    "disc_description", "disc_feature", "extract_np_features", "macro_mean", "mean_rank", "perplexity",
    "rank_from_scores", "true_ranks",
]

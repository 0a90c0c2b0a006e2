"""Attention-weighted CKA projector distillation plus logits distillation, at toy scale.

Core numerics live in :mod:`.similarity` (CKA, AwCKA, projector loss),
:mod:`.losses` (temperature KL, cross-entropy, loss composition),
:mod:`.attention` (teacher attention to token weights) and :mod:`.metrics`.
:mod:`.toy` holds the miniature teacher/student models and training loop;
:mod:`.estimators` wraps them in scikit-learn style classes.
"""
from .attention import QueryPolicy, SegmentSpans, token_weights
from .losses import Direction, LossBundle, Segment, SegmentedLogits, cross_entropy, segment_kl_loss, total_loss
from .metrics import MetricsReport, compute_metrics
from .similarity import DegenerateEmbeddingError, awcka, hsic, linear_cka, pdist_loss

__version__ = "0.1.0"

__all__ = [
    "DegenerateEmbeddingError",
    "Direction",
    "LossBundle",
    "MetricsReport",
    "QueryPolicy",
    "Segment",
    "SegmentSpans",
    "SegmentedLogits",
    "awcka",
    "compute_metrics",
    "cross_entropy",
    "hsic",
    "linear_cka",
    "pdist_loss",
    "segment_kl_loss",
    "token_weights",
    "total_loss",
]

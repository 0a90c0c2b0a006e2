"""Linear CKA and its attention-weighted variant, with gradients for the student side."""
from __future__ import annotations

import numpy as np

from .attention import check_token_weights

# denominators below this are treated as a zero-variance embedding
DEGENERATE_EPS = 1e-30


class DegenerateEmbeddingError(ValueError):
    pass


def _matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D tokens x features matrix, got shape {x.shape}")
    return x


def center_columns(x) -> np.ndarray:
    """Subtract the per-feature mean taken over tokens (rows)."""
    x = _matrix(x, "x")
    return x - x.mean(axis=0, keepdims=True)


def apply_weights(x, w) -> np.ndarray:
    """Scale row ``i`` of ``x`` by ``w[i]``."""
    x = _matrix(x, "x")
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != x.shape[0]:
        raise ValueError(f"weight length {w.shape} does not match {x.shape[0]} tokens")
    return x * w[:, None]


def hsic(x, y) -> float:
    """Linear-kernel HSIC (unnormalised): ``||Yc^T Xc||_F^2``."""
    xc = center_columns(x)
    yc = center_columns(y)
    if xc.shape[0] != yc.shape[0]:
        raise ValueError(f"row counts differ: {xc.shape} vs {yc.shape}")
    cross = yc.T @ xc
    return float(np.sum(cross * cross))


def _cka_parts(x, y):
    x = _matrix(x, "x")
    y = _matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise DegenerateEmbeddingError("zero-variance embedding: need at least 2 tokens")
    xc = center_columns(x)
    yc = center_columns(y)
    cross = xc.T @ yc
    gx = xc.T @ xc
    gy = yc.T @ yc
    nx = np.sqrt(np.sum(gx * gx))
    ny = np.sqrt(np.sum(gy * gy))
    if nx < DEGENERATE_EPS or ny < DEGENERATE_EPS:
        raise DegenerateEmbeddingError("zero-variance embedding")
    value = float(np.sum(cross * cross) / (nx * ny))
    return value, xc, yc, cross, gy, nx, ny


def linear_cka(x, y) -> float:
    """Linear CKA between two token-aligned representations of any widths."""
    value = _cka_parts(x, y)[0]
    # the ratio can exceed 1 by a rounding error
    return min(value, 1.0)


def awcka(teacher, student, w) -> float:
    """CKA after scaling every token of both embeddings by its attention weight.

    Weighting is applied to the raw embeddings; centering happens afterwards.
    """
    teacher = _matrix(teacher, "teacher")
    w = check_token_weights(w, teacher.shape[0])
    return linear_cka(apply_weights(teacher, w), apply_weights(student, w))


def linear_cka_grad(x, y):
    """CKA value and its gradient with respect to ``y``; ``x`` is held fixed."""
    value, xc, yc, cross, gy, nx, ny = _cka_parts(x, y)
    grad_c = (2.0 / (nx * ny)) * (xc @ cross) - (2.0 * value / (ny * ny)) * (yc @ gy)
    # chain through centering (symmetric projector)
    grad = grad_c - grad_c.mean(axis=0, keepdims=True)
    return value, grad


def pdist_loss(teacher, student, w=None):
    """Projector distillation loss ``1 - AwCKA`` and its gradient w.r.t. the student.

    ``w=None`` means uniform weights, i.e. plain linear CKA. The weights are
    treated as constants.
    """
    teacher = _matrix(teacher, "teacher")
    student = _matrix(student, "student")
    if w is None:
        w = np.full(teacher.shape[0], 1.0 / teacher.shape[0])
    w = check_token_weights(w, teacher.shape[0])
    value, grad_weighted = linear_cka_grad(apply_weights(teacher, w), apply_weights(student, w))
    return 1.0 - min(value, 1.0), -grad_weighted * w[:, None]

"""Logit distillation losses, cross-entropy and the composed objective.

All gradients are with respect to the student's raw (pre-temperature) logits.
KL terms are averaged over the positions of a segment; cross-entropy is summed
over response positions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .attention import SegmentSpans

PROB_FLOOR = 1e-12
DIST_TOL = 1e-6


class Segment(str, enum.Enum):
    AUDIO = "Audio"
    PROMPT = "Prompt"
    RESPONSE = "Response"


class Direction(str, enum.Enum):
    FORWARD = "Forward"
    REVERSE = "Reverse"


@dataclass(frozen=True)
class SegmentedLogits:
    z: np.ndarray
    spans: SegmentSpans

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim != 2:
            raise ValueError(f"logits must be L x V, got shape {z.shape}")
        if z.shape[0] != self.spans.total:
            raise ValueError(f"logits have {z.shape[0]} rows but spans cover {self.spans.total}")
        if z.shape[1] < 2:
            raise ValueError("vocabulary size must be at least 2")
        object.__setattr__(self, "z", z)

    @property
    def vocab_size(self) -> int:
        return self.z.shape[1]

    def segment(self, which: Segment) -> np.ndarray:
        which = Segment(which)
        if which is Segment.AUDIO:
            return self.z[self.spans.audio_slice()]
        if which is Segment.PROMPT:
            return self.z[self.spans.prompt_slice()]
        return self.z[self.spans.response_slice()]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def temp_softmax(z, t: float = 1.0) -> np.ndarray:
    """Softmax of ``z / t`` along the last axis."""
    if not t > 0:
        raise ValueError(f"temperature must be positive, got {t}")
    s = np.asarray(z, dtype=np.float64) / t
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > DIST_TOL:
        raise ValueError(f"{name} is not a probability vector")
    return p


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q); zero-mass terms of p drop out, q is floored."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.maximum(q, PROB_FLOOR))), 0.0)
    return terms.sum(axis=-1)


def forward_kl(p_teacher, p_student) -> float:
    """KL(teacher || student) between two probability vectors."""
    p = _check_distribution(p_teacher, "teacher distribution")
    q = _check_distribution(p_student, "student distribution")
    if p.shape != q.shape:
        raise ValueError(f"distribution sizes differ: {p.shape} vs {q.shape}")
    return float(_kl_rows(p, q))


def reverse_kl(p_teacher, p_student) -> float:
    """KL(student || teacher)."""
    return forward_kl(p_student, p_teacher)


def kl_rows_with_grad(z_teacher, z_student, t: float, direction=Direction.FORWARD):
    """Per-row KL between temperature softmaxes and d(sum of rows)/d z_student."""
    direction = Direction(direction)
    p = temp_softmax(z_teacher, t)
    q = temp_softmax(z_student, t)
    if direction is Direction.FORWARD:
        kl = _kl_rows(p, q)
        grad = (q - p) / t
    else:
        kl = _kl_rows(q, p)
        g = np.log(np.maximum(q, PROB_FLOOR)) - np.log(np.maximum(p, PROB_FLOOR))
        grad = q * (g - np.sum(q * g, axis=-1, keepdims=True)) / t
    return kl, grad


def segment_kl_loss(
    teacher: SegmentedLogits,
    student: SegmentedLogits,
    segment: Segment | str,
    t: float,
    direction: Direction | str = Direction.FORWARD,
):
    """Mean per-position KL over one segment, and the gradient on that segment's student logits."""
    segment = Segment(segment)
    if segment is Segment.PROMPT:
        raise ValueError("prompt tokens are excluded from distillation")
    if teacher.spans != student.spans or teacher.z.shape != student.z.shape:
        raise ValueError(
            f"teacher/student logits mismatch: {teacher.z.shape} {teacher.spans} vs {student.z.shape} {student.spans}"
        )
    zt = teacher.segment(segment)
    zs = student.segment(segment)
    kl, grad = kl_rows_with_grad(zt, zs, t, direction)
    n = zs.shape[0]
    return float(kl.mean()), grad / n


def cross_entropy(student: SegmentedLogits, labels):
    """Summed negative log-likelihood of the response labels (temperature 1)."""
    zr = student.segment(Segment.RESPONSE)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != zr.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {zr.shape[0]} response positions")
    if np.any(labels < 0) or np.any(labels >= zr.shape[1]):
        raise ValueError(f"label id out of range [0, {zr.shape[1]})")
    return ce_with_grad(zr, labels)


def ce_with_grad(z: np.ndarray, labels: np.ndarray):
    logp = _log_softmax(z)
    rows = np.arange(z.shape[0])
    value = float(-np.sum(logp[rows, labels]))
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return value, grad


@dataclass(frozen=True)
class LossBundle:
    ce: float
    dp: float
    da: float
    dr: float
    alpha: float
    beta: float
    gamma: float
    temperature: float
    total: float

    def as_row(self) -> tuple[float, float, float, float, float]:
        return (self.ce, self.dp, self.da, self.dr, self.total)


def total_loss(ce, dp, da, dr, alpha=1.0, beta=0.8, gamma=1.0, temperature=2.0) -> LossBundle:
    """``ce + alpha*dp + beta*da + gamma*dr``."""
    parts = {"ce": ce, "dp": dp, "da": da, "dr": dr, "alpha": alpha, "beta": beta, "gamma": gamma}
    for name, v in parts.items():
        if not math.isfinite(v):
            raise FloatingPointError(f"loss component {name} is not finite ({v})")
    total = ce + alpha * dp + beta * da + gamma * dr
    return LossBundle(
        float(ce), float(dp), float(da), float(dr), float(alpha), float(beta), float(gamma), float(temperature), float(total)
    )

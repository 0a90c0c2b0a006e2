"""Finite-difference verification of the analytic loss gradients on random shapes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import SegmentSpans
from .losses import Direction, Segment, SegmentedLogits, cross_entropy, segment_kl_loss
from .numeric import Rng, finite_diff_grad, max_relative_error
from .similarity import pdist_loss

TOLERANCE = 1e-4
OPERATIONS = ("pdist_loss", "segment_kl_loss[forward]", "segment_kl_loss[reverse]", "cross_entropy")


@dataclass
class OpResult:
    name: str
    max_error: float = 0.0
    worst_shape: tuple = ()
    trials: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, err: float, shape: tuple, tol: float) -> None:
        self.trials += 1
        if err > self.max_error or not self.worst_shape:
            self.max_error, self.worst_shape = err, shape
        if not err < tol:
            self.failures.append((shape, err))


def _random_spans(rng: Rng) -> SegmentSpans:
    return SegmentSpans(int(rng.integers(1, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))


def _check_pdist(rng: Rng, bias: float):
    L = int(rng.integers(3, 13))
    et, es = int(rng.integers(2, 9)), int(rng.integers(2, 7))
    teacher = rng.normal((L, et))
    student = rng.normal((L, es))
    w = None
    if rng.uniform() < 0.5:
        w = np.exp(rng.normal(L))
        w /= w.sum()
    _, grad = pdist_loss(teacher, student, w)
    num = finite_diff_grad(lambda s: pdist_loss(teacher, s, w)[0], student)
    return max_relative_error(grad + bias, num), (L, et, es, "weighted" if w is not None else "uniform")


def _check_kl(rng: Rng, bias: float, direction: Direction):
    spans = _random_spans(rng)
    V = int(rng.integers(2, 9))
    segment = Segment.AUDIO if rng.uniform() < 0.5 else Segment.RESPONSE
    t = 1.0 + 3.0 * float(rng.uniform())
    teacher = SegmentedLogits(2.0 * rng.normal((spans.total, V)), spans)
    zs = 2.0 * rng.normal((spans.total, V))
    _, grad = segment_kl_loss(teacher, SegmentedLogits(zs, spans), segment, t, direction)
    sl = spans.audio_slice() if segment is Segment.AUDIO else spans.response_slice()
    num = finite_diff_grad(lambda z: segment_kl_loss(teacher, SegmentedLogits(z, spans), segment, t, direction)[0], zs)
    return max_relative_error(grad + bias, num[sl]), (spans.total, V, segment.value, round(t, 3))


def _check_ce(rng: Rng, bias: float):
    spans = _random_spans(rng)
    V = int(rng.integers(2, 9))
    labels = rng.integers(0, V, size=spans.response)
    z = 2.0 * rng.normal((spans.total, V))
    _, grad = cross_entropy(SegmentedLogits(z, spans), labels)
    num = finite_diff_grad(lambda x: cross_entropy(SegmentedLogits(x, spans), labels)[0], z)
    return max_relative_error(grad + bias, num[spans.response_slice()]), (spans.total, V)


def run_gradcheck(seed: int = 0, trials: int = 20, tol: float = TOLERANCE, bias: float = 0.0) -> list[OpResult]:
    """Check every loss operation on ``trials`` random shapes each.

    ``bias`` is added to every analytic gradient before comparison; a nonzero
    value simulates a broken implementation and must make the check fail.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    checks = {
        "pdist_loss": lambda r: _check_pdist(r, bias),
        "segment_kl_loss[forward]": lambda r: _check_kl(r, bias, Direction.FORWARD),
        "segment_kl_loss[reverse]": lambda r: _check_kl(r, bias, Direction.REVERSE),
        "cross_entropy": lambda r: _check_ce(r, bias),
    }
    root = Rng(seed)
    results = []
    for k, name in enumerate(OPERATIONS):
        rng = root.spawn(k)
        res = OpResult(name)
        for _ in range(trials):
            err, shape = checks[name](rng)
            res.record(err, shape, tol)
        results.append(res)
    return results

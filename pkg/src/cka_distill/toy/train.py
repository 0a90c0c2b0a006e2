"""Teacher pretraining and student distillation for the toy models."""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..attention import QueryPolicy, extract_raw_scores, normalize_weights
from ..losses import Direction, LossBundle, ce_with_grad, kl_rows_with_grad, total_loss
from ..metrics import MetricsReport, compute_metrics
from ..numeric import Rng
from ..similarity import pdist_loss
from .data import SyntheticDataset
from .model import ToyModelConfig, backward, forward, init_params, predict_classes, trainable_keys

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    SFT = "SFT"
    FORWARD_KL = "ForwardKL"
    REVERSE_KL = "ReverseKL"
    LDIST_ONLY = "LDistOnly"
    LDIST_PLUS_CKA = "LDistPlusCKA"
    PL_DISTILL = "PLDistill"


# (projector term, audio KL, response KL, response KL direction, attention-weighted projector term)
_TERMS = {
    Strategy.SFT: (False, False, False, Direction.FORWARD, False),
    Strategy.FORWARD_KL: (False, False, True, Direction.FORWARD, False),
    Strategy.REVERSE_KL: (False, False, True, Direction.REVERSE, False),
    Strategy.LDIST_ONLY: (False, True, True, Direction.FORWARD, False),
    Strategy.LDIST_PLUS_CKA: (True, True, True, Direction.FORWARD, False),
    Strategy.PL_DISTILL: (True, True, True, Direction.FORWARD, True),
}


class TrainingDivergedError(FloatingPointError):
    pass


class TeacherNotConvergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    strategy: Strategy = Strategy.PL_DISTILL
    alpha: float = 1.0
    beta: float = 0.8
    gamma: float = 1.0
    temperature: float = 2.0
    lr: float = 1e-3
    steps: int = 200
    batch_size: int = 1
    grad_accum: int = 16
    seed: int = 0
    query_policy: QueryPolicy = QueryPolicy.FIRST_RESPONSE_TOKEN
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.query_policy = QueryPolicy(self.query_policy)
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.steps < 0 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("steps >= 0, batch_size >= 1 and grad_accum >= 1 required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["query_policy"] = self.query_policy.value
        return d


@dataclass
class PretrainConfig:
    lr: float = 3e-3
    max_steps: int = 3000
    min_steps: int = 0
    batch_size: int = 32
    eval_every: int = 50
    ua_threshold: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0


class Adam:
    """Adam with optional decoupled weight decay; constants follow Kingma & Ba."""

    def __init__(self, keys, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.keys = list(keys)
        self.lr, self.beta1, self.beta2, self.eps, self.weight_decay = lr, beta1, beta2, eps, weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in self.keys:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * params[k]
            params[k] = params[k] - update


class _BatchStream:
    """Endless epoch-shuffled stream of sample indices."""

    def __init__(self, n: int, rng: Rng):
        self.n, self.rng = n, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while len(out) < k:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            take = min(k - len(out), self.n - self.pos)
            out.extend(self.order[self.pos : self.pos + take])
            self.pos += take
        return np.array(out, dtype=np.int64)


def evaluate(params: dict, config: ToyModelConfig, X: np.ndarray, y: np.ndarray) -> MetricsReport:
    return compute_metrics(y, predict_classes(params, config, X), config.num_classes)


def pretrain_teacher(
    config: ToyModelConfig,
    data: SyntheticDataset,
    rng: Rng,
    encoder: np.ndarray,
    settings: PretrainConfig | None = None,
) -> dict[str, np.ndarray]:
    """Train a teacher with cross-entropy only until its test UA reaches the gate.

    Raises ``TeacherNotConvergedError`` if ``max_steps`` pass without reaching
    ``ua_threshold``; distilling from an unconverged teacher is refused.
    """
    return fit_teacher(config, *data.train_arrays(), *data.test_arrays(), rng, encoder, settings)


def fit_teacher(
    config: ToyModelConfig,
    Xtr: np.ndarray,
    ytr: np.ndarray,
    Xte: np.ndarray,
    yte: np.ndarray,
    rng: Rng,
    encoder: np.ndarray,
    settings: PretrainConfig | None = None,
) -> dict[str, np.ndarray]:
    """Array-level form of :func:`pretrain_teacher`; ``(Xte, yte)`` feed the UA gate."""
    settings = settings or PretrainConfig()
    params = init_params(config, rng, encoder)
    opt = Adam(trainable_keys(params), lr=settings.lr, weight_decay=settings.weight_decay)
    stream = _BatchStream(len(ytr), rng)
    best = 0.0
    for step in range(1, settings.max_steps + 1):
        idx = stream.take(settings.batch_size)
        out = forward(params, config, Xtr[idx])
        r = out.spans.response_slice().start
        _, g = ce_with_grad(out.logits[:, r], ytr[idx])
        dZ = np.zeros_like(out.logits)
        dZ[:, r] = g / len(idx)
        opt.step(params, backward(params, config, out, dZ))
        if step % settings.eval_every == 0:
            ua = evaluate(params, config, Xte, yte).ua
            best = max(best, ua)
            log.debug("teacher step %d test UA %.4f", step, ua)
            if ua >= settings.ua_threshold and step >= settings.min_steps:
                log.info("teacher reached UA %.4f at step %d", ua, step)
                return params
    raise TeacherNotConvergedError(
        f"teacher test UA {best:.3f} stayed below {settings.ua_threshold} after {settings.max_steps} steps; "
        "lower noise_sigma, raise samples_per_class or max_steps"
    )


@dataclass
class TeacherTargets:
    """Frozen-teacher outputs for a fixed sample set, indexed like that set."""

    audio_embeddings: np.ndarray  # (N, L_a, E_T)
    logits: np.ndarray  # (N, L, V)
    weights: np.ndarray  # (N, L_a)


def teacher_targets(
    teacher: dict, config: ToyModelConfig, X: np.ndarray, query_policy=QueryPolicy.FIRST_RESPONSE_TOKEN
) -> TeacherTargets:
    out = forward(teacher, config, X, keep_cache=False)
    w = np.stack([normalize_weights(extract_raw_scores(a, out.spans, query_policy)) for a in out.attention])
    return TeacherTargets(out.audio_embeddings, out.logits, w)


def distillation_loss(
    params: dict,
    config: ToyModelConfig,
    X: np.ndarray,
    y: np.ndarray,
    targets: TeacherTargets | None,
    train: TrainConfig,
):
    """Summed per-sample loss components and parameter gradients for one micro-batch.

    Returns ``(sums, grads)`` where ``sums`` holds the per-component totals over
    the batch (ce, dp, da, dr) and ``grads`` is the gradient of
    ``sum_i total_i`` with the strategy's coefficients applied.
    """
    use_dp, use_da, use_dr, direction, weighted = _TERMS[train.strategy]
    out = forward(params, config, X)
    spans = out.spans
    r = spans.response_slice()
    a = spans.audio_slice()
    B = X.shape[0]

    dZ = np.zeros_like(out.logits)
    ce, g = ce_with_grad(out.logits[:, r].reshape(-1, out.logits.shape[-1]), np.repeat(y, spans.response))
    dZ[:, r] = g.reshape(B, spans.response, -1)
    dp = da = dr = 0.0
    dH = None
    if use_dr:
        kl, g = kl_rows_with_grad(targets.logits[:, r], out.logits[:, r], train.temperature, direction)
        dr = float(kl.mean(axis=1).sum())
        if train.gamma:
            dZ[:, r] += train.gamma * g / spans.response
    if use_da:
        kl, g = kl_rows_with_grad(targets.logits[:, a], out.logits[:, a], train.temperature, Direction.FORWARD)
        da = float(kl.mean(axis=1).sum())
        if train.beta:
            dZ[:, a] += train.beta * g / spans.audio
    if use_dp:
        dH = np.zeros_like(out.audio_embeddings)
        for i in range(B):
            w = targets.weights[i] if weighted else None
            v, gi = pdist_loss(targets.audio_embeddings[i], out.audio_embeddings[i], w)
            dp += v
            dH[i] = train.alpha * gi
        if not train.alpha:
            dH = None
    grads = backward(params, config, out, dZ, dH)
    return (ce, dp, da, dr), grads


@dataclass
class DistillResult:
    params: dict
    report: MetricsReport
    history: list[LossBundle] = field(default_factory=list)


def distill(
    teacher: dict | None,
    teacher_config: ToyModelConfig | None,
    student_config: ToyModelConfig,
    data: SyntheticDataset,
    train: TrainConfig,
    encoder: np.ndarray,
    train_indices: np.ndarray | None = None,
    student_params: dict | None = None,
) -> DistillResult:
    """Train a student with the configured strategy and report test metrics.

    ``history[s]`` holds the batch-mean loss components of update ``s``,
    measured before that update is applied. ``train_indices`` restricts the
    student to a subset of ``data.train``.
    """
    Xtr, ytr = data.train_arrays()
    if train_indices is not None:
        Xtr, ytr = Xtr[train_indices], ytr[train_indices]
    params, history = fit_student(teacher, teacher_config, student_config, Xtr, ytr, train, encoder, student_params)
    report = evaluate(params, student_config, *data.test_arrays())
    return DistillResult(params, report, history)


def fit_student(
    teacher: dict | None,
    teacher_config: ToyModelConfig | None,
    student_config: ToyModelConfig,
    Xtr: np.ndarray,
    ytr: np.ndarray,
    train: TrainConfig,
    encoder: np.ndarray,
    student_params: dict | None = None,
) -> tuple[dict, list[LossBundle]]:
    """Array-level form of :func:`distill`; returns ``(params, history)``."""
    rng = Rng(train.seed)
    params = dict(student_params) if student_params is not None else init_params(student_config, rng.spawn(1), encoder)

    targets = None
    if train.strategy is not Strategy.SFT:
        if teacher is None or teacher_config is None:
            raise ValueError(f"strategy {train.strategy.value} needs a teacher")
        targets = teacher_targets(teacher, teacher_config, Xtr, train.query_policy)
        if targets.logits.shape[-1] != student_config.vocab_size:
            raise ValueError("teacher and student vocabularies differ")

    opt = Adam(
        trainable_keys(params),
        lr=train.lr,
        beta1=train.adam_beta1,
        beta2=train.adam_beta2,
        eps=train.adam_eps,
        weight_decay=train.weight_decay,
    )
    stream = _BatchStream(len(ytr), rng.spawn(2))
    history: list[LossBundle] = []
    per_step = train.batch_size * train.grad_accum
    for step in range(train.steps):
        sums = np.zeros(4)
        acc: dict[str, np.ndarray] = {}
        idx_all = stream.take(per_step)
        for j in range(train.grad_accum):
            idx = idx_all[j * train.batch_size : (j + 1) * train.batch_size]
            tgt = None
            if targets is not None:
                tgt = TeacherTargets(targets.audio_embeddings[idx], targets.logits[idx], targets.weights[idx])
            parts, grads = distillation_loss(params, student_config, Xtr[idx], ytr[idx], tgt, train)
            sums += parts
            for k, g in grads.items():
                acc[k] = g if k not in acc else acc[k] + g
        ce, dp, da, dr = sums / per_step
        try:
            bundle = total_loss(ce, dp, da, dr, train.alpha, train.beta, train.gamma, train.temperature)
        except FloatingPointError as exc:
            raise TrainingDivergedError(
                f"non-finite loss at step {step}: ce={ce} dp={dp} da={da} dr={dr}"
            ) from exc
        history.append(bundle)
        opt.step(params, {k: g / per_step for k, g in acc.items()})
    return params, history

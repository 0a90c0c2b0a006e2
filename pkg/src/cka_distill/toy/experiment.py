"""End-to-end runs driven by an :class:`~cka_distill.config.ExperimentConfig`."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..attention import QueryPolicy
from ..metrics import MetricsReport
from ..numeric import Rng
from .data import SyntheticDataset, generate_dataset
from .model import ToyModelConfig, make_encoder
from .train import DistillResult, Strategy, distill, evaluate, pretrain_teacher, teacher_targets

ABLATION_STRATEGIES = (Strategy.LDIST_ONLY, Strategy.LDIST_PLUS_CKA, Strategy.PL_DISTILL)


@dataclass
class PreparedRun:
    """Everything a student run needs that does not depend on the strategy."""

    data: SyntheticDataset
    encoder: np.ndarray
    teacher_config: ToyModelConfig
    teacher: dict
    teacher_report: MetricsReport
    student_indices: np.ndarray | None
    teacher_seconds: float = 0.0

    def cue_attention_mass(self, query_policy=QueryPolicy.FIRST_RESPONSE_TOKEN) -> float:
        """Mean teacher attention mass (response query, head mean) on cue frames over the test set."""
        X, _ = self.data.test_arrays()
        w = teacher_targets(self.teacher, self.teacher_config, X, query_policy).weights
        return float(np.mean([w[i, s.cue_positions].sum() for i, s in enumerate(self.data.test)]))


def student_subset(labels: np.ndarray, per_class: int, num_classes: int) -> np.ndarray | None:
    """First ``per_class`` training indices of each class, in class order; None means all."""
    if per_class == 0:
        return None
    idx = [np.flatnonzero(labels == c)[:per_class] for c in range(num_classes)]
    if any(len(i) < per_class for i in idx):
        raise ValueError(f"fewer than {per_class} training samples in some class")
    return np.concatenate(idx)


def prepare(config) -> PreparedRun:
    root = Rng(config.seed)
    data = generate_dataset(
        config.num_classes,
        config.samples_per_class,
        config.audio_len,
        config.cue_count,
        config.noise_sigma,
        root.spawn(0),
        feature_dim=config.feature_dim,
        signal_scale=config.signal_scale,
        test_fraction=config.test_fraction,
        nuisance_dim=config.nuisance_dim,
        nuisance_sigma=config.nuisance_sigma,
    )
    encoder = make_encoder(config.feature_dim, root.spawn(1))
    tcfg = config.teacher_model()
    t0 = time.perf_counter()
    teacher = pretrain_teacher(tcfg, data, root.spawn(2), encoder, config.pretrain_config())
    seconds = time.perf_counter() - t0
    report = evaluate(teacher, tcfg, *data.test_arrays())
    _, ytr = data.train_arrays()
    idx = student_subset(ytr, config.student_samples_per_class, config.num_classes)
    return PreparedRun(data, encoder, tcfg, teacher, report, idx, seconds)


def run_student(prepared: PreparedRun, config, strategy=None) -> DistillResult:
    return distill(
        prepared.teacher,
        prepared.teacher_config,
        config.student_model(),
        prepared.data,
        config.train_config(strategy),
        prepared.encoder,
        train_indices=prepared.student_indices,
    )


@dataclass
class AblationRow:
    seed: int
    teacher_ua: float
    cue_mass: float
    student_ua: dict[str, float] = field(default_factory=dict)
    # total loss of the first and last update, per strategy
    loss_span: dict[str, tuple[float, float]] = field(default_factory=dict)


def run_ablation(config, seeds, strategies=ABLATION_STRATEGIES, progress=None) -> list[AblationRow]:
    """One teacher per seed, then every strategy's student against it."""
    rows = []
    for seed in seeds:
        cfg = config.replace(seed=seed)
        prepared = prepare(cfg)
        row = AblationRow(seed, prepared.teacher_report.ua, prepared.cue_attention_mass(cfg.query_policy))
        for s in strategies:
            name = Strategy(s).value
            result = run_student(prepared, cfg, s)
            row.student_ua[name] = result.report.ua
            if result.history:
                row.loss_span[name] = (result.history[0].total, result.history[-1].total)
        rows.append(row)
        if progress:
            progress(row)
    return rows


def median_ua(rows: list[AblationRow]) -> dict[str, float]:
    names = rows[0].student_ua.keys()
    return {s: float(np.median([r.student_ua[s] for r in rows])) for s in names}

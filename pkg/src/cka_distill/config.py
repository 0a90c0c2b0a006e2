"""Experiment configuration: a flat ``key = value`` text format.

Lines starting with ``#`` and blank lines are ignored; inline ``#`` comments
are stripped. Every key has a default, unknown keys are rejected, and
:meth:`ExperimentConfig.to_text` writes the full effective configuration so a
run can be reproduced from its own echo.

Key groups
----------
run
    ``seed``: root seed. Data, encoder, teacher and student streams are
    derived from it.
data
    ``num_classes``, ``samples_per_class`` (teacher pool per class before the
    split), ``audio_len``, ``cue_count``, ``noise_sigma``, ``feature_dim``,
    ``signal_scale``, ``nuisance_dim``, ``nuisance_sigma``, ``test_fraction``,
    ``student_samples_per_class`` (student subset size per class, drawn from
    the teacher's training split; 0 means use all of it).
models
    ``teacher_embed_dim``, ``teacher_heads``, ``teacher_layers``,
    ``student_embed_dim``, ``student_heads``, ``student_layers``,
    ``vocab_size``, ``prompt_len``, ``mlp_ratio``.
teacher pretraining
    ``teacher_lr``, ``teacher_max_steps``, ``teacher_min_steps``,
    ``teacher_batch_size``, ``teacher_eval_every``, ``teacher_ua_threshold``,
    ``teacher_weight_decay``.
student training
    ``strategy`` (SFT, ForwardKL, ReverseKL, LDistOnly, LDistPlusCKA,
    PLDistill), ``alpha``, ``beta``, ``gamma``, ``temperature``, ``lr``,
    ``steps``, ``batch_size``, ``grad_accum``, ``weight_decay``,
    ``adam_beta1``, ``adam_beta2``, ``adam_eps``, ``query_policy``
    (FirstResponseToken or MeanOverResponseTokens).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .attention import QueryPolicy
from .toy.model import ToyModelConfig
from .toy.train import PretrainConfig, Strategy, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0

    num_classes: int = 4
    samples_per_class: int = 1000
    audio_len: int = 32
    cue_count: int = 4
    noise_sigma: float = 0.3
    feature_dim: int = 64
    signal_scale: float = 1.0
    nuisance_dim: int = 8
    nuisance_sigma: float = 2.0
    test_fraction: float = 0.2
    student_samples_per_class: int = 50

    teacher_embed_dim: int = 32
    teacher_heads: int = 4
    teacher_layers: int = 1
    student_embed_dim: int = 16
    student_heads: int = 2
    student_layers: int = 1
    vocab_size: int = 12
    prompt_len: int = 3
    mlp_ratio: int = 2

    teacher_lr: float = 3e-3
    teacher_max_steps: int = 3000
    teacher_min_steps: int = 3000
    teacher_batch_size: int = 32
    teacher_eval_every: int = 50
    teacher_ua_threshold: float = 0.9
    teacher_weight_decay: float = 0.1

    strategy: str = Strategy.PL_DISTILL.value
    alpha: float = 1.0
    beta: float = 0.8
    gamma: float = 1.0
    temperature: float = 2.0
    lr: float = 3e-3
    steps: int = 600
    batch_size: int = 16
    grad_accum: int = 1
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    query_policy: str = QueryPolicy.FIRST_RESPONSE_TOKEN.value

    def __post_init__(self):
        try:
            Strategy(self.strategy)
        except ValueError:
            raise ConfigError(f"strategy: unknown value {self.strategy!r}") from None
        try:
            QueryPolicy(self.query_policy)
        except ValueError:
            raise ConfigError(f"query_policy: unknown value {self.query_policy!r}") from None
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.student_samples_per_class < 0:
            raise ConfigError("student_samples_per_class must be >= 0")
        if self.teacher_embed_dim <= self.student_embed_dim:
            raise ConfigError("teacher_embed_dim must exceed student_embed_dim")
        # Surface model and optimizer validation errors at load time.
        try:
            self.teacher_model()
            self.student_model()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def _model(self, embed_dim, heads, layers) -> ToyModelConfig:
        return ToyModelConfig(
            encoder_dim=self.feature_dim,
            embed_dim=embed_dim,
            heads=heads,
            decoder_layers=layers,
            vocab_size=self.vocab_size,
            max_audio_len=self.audio_len,
            num_classes=self.num_classes,
            prompt_len=self.prompt_len,
            mlp_ratio=self.mlp_ratio,
        )

    def teacher_model(self) -> ToyModelConfig:
        return self._model(self.teacher_embed_dim, self.teacher_heads, self.teacher_layers)

    def student_model(self) -> ToyModelConfig:
        return self._model(self.student_embed_dim, self.student_heads, self.student_layers)

    def pretrain_config(self) -> PretrainConfig:
        return PretrainConfig(
            lr=self.teacher_lr,
            max_steps=self.teacher_max_steps,
            min_steps=self.teacher_min_steps,
            batch_size=self.teacher_batch_size,
            eval_every=self.teacher_eval_every,
            ua_threshold=self.teacher_ua_threshold,
            weight_decay=self.teacher_weight_decay,
            seed=self.seed,
        )

    def train_config(self, strategy: str | Strategy | None = None) -> TrainConfig:
        return TrainConfig(
            strategy=Strategy(strategy if strategy is not None else self.strategy),
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            temperature=self.temperature,
            lr=self.lr,
            steps=self.steps,
            batch_size=self.batch_size,
            grad_accum=self.grad_accum,
            seed=self.seed,
            query_policy=QueryPolicy(self.query_policy),
            weight_decay=self.weight_decay,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(getattr(self, k))}\n" for k in self.keys())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
            values[key] = _convert(key, value, types[key])
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _format(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _convert(key: str, value: str, type_name: str):
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {type_name}") from None
    return value

"""scikit-learn style wrappers around the toy teacher and student.

Inputs are 3-dim arrays ``(n_samples, audio_len, feature_dim)`` of encoder
features; labels may be any sortable values and are mapped to class-token ids
in sorted order, as ``ClassifierMixin`` expects.

>>> teacher = ToyLALMClassifier(random_state=0).fit(X_train, y_train)    # doctest: +SKIP
>>> student = DistilledStudentClassifier(teacher, strategy="PLDistill")  # doctest: +SKIP
>>> student.fit(X_subset, y_subset).score(X_test, y_test)                # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted

from .attention import QueryPolicy
from .numeric import Rng
from .toy.model import ToyModelConfig, forward, make_encoder, predict_classes
from .toy.train import PretrainConfig, Strategy, TrainConfig, fit_student, fit_teacher, teacher_targets


def _check_features(X, feature_dim: int | None = None) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
    if X.ndim != 3:
        raise ValueError(f"expected (n_samples, audio_len, feature_dim) features, got shape {X.shape}")
    if feature_dim is not None and X.shape[2] != feature_dim:
        raise ValueError(f"X has feature_dim {X.shape[2]}, estimator was fitted with {feature_dim}")
    return X


class _ToyClassifierBase(ClassifierMixin, BaseEstimator):
    def _encode_labels(self, y) -> np.ndarray:
        y = np.asarray(y)
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if np.any(self.classes_[idx] != y):
            raise ValueError(f"labels not seen during fit: {sorted(set(y.tolist()) - set(self.classes_.tolist()))}")
        return idx.astype(np.int64)

    def _validated(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = _check_features(X, self.n_features_in_)
        if X.shape[1] > self.config_.max_audio_len:
            raise ValueError(f"audio_len {X.shape[1]} exceeds fitted maximum {self.config_.max_audio_len}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._validated(X)
        return self.classes_[predict_classes(self.params_, self.config_, X)]

    def predict_proba(self, X) -> np.ndarray:
        """Softmax over the class-token logits at the response position."""
        X = self._validated(X)
        out = forward(self.params_, self.config_, X, keep_cache=False)
        z = out.logits[:, out.spans.response_slice().start, : self.config_.num_classes]
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def embed(self, X) -> np.ndarray:
        """Projector outputs, shape ``(n_samples, audio_len, embed_dim)``."""
        X = self._validated(X)
        return forward(self.params_, self.config_, X, keep_cache=False).audio_embeddings


class ToyLALMClassifier(_ToyClassifierBase):
    """Teacher model: frozen random encoder, trainable projector and decoder, CE training.

    ``fit`` stops once UA on ``eval_set`` (the training data when omitted)
    reaches ``ua_threshold`` after at least ``min_steps`` updates, and raises
    ``TeacherNotConvergedError`` if ``max_steps`` pass first.
    """

    def __init__(
        self,
        embed_dim=32,
        heads=4,
        decoder_layers=1,
        prompt_len=3,
        lr=3e-3,
        max_steps=3000,
        min_steps=0,
        batch_size=32,
        eval_every=50,
        ua_threshold=0.9,
        weight_decay=0.0,
        encoder=None,
        random_state=0,
    ):
        self.embed_dim = embed_dim
        self.heads = heads
        self.decoder_layers = decoder_layers
        self.prompt_len = prompt_len
        self.lr = lr
        self.max_steps = max_steps
        self.min_steps = min_steps
        self.batch_size = batch_size
        self.eval_every = eval_every
        self.ua_threshold = ua_threshold
        self.weight_decay = weight_decay
        self.encoder = encoder
        self.random_state = random_state

    def fit(self, X, y, eval_set=None):
        X = _check_features(X)
        check_classification_targets(y)
        self.classes_ = np.unique(np.asarray(y))
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        y_ids = self._encode_labels(y)
        if eval_set is None:
            Xe, ye = X, y_ids
        else:
            Xe = _check_features(eval_set[0], X.shape[2])
            ye = self._encode_labels(eval_set[1])
        root = Rng(self.random_state)
        D = X.shape[2]
        if self.encoder is None:
            self.encoder_ = make_encoder(D, root.spawn(1))
        else:
            self.encoder_ = np.array(self.encoder, dtype=np.float64)
            if self.encoder_.shape != (D, D):
                raise ValueError(f"encoder must be {D} x {D}, got {self.encoder_.shape}")
        C = len(self.classes_)
        self.config_ = ToyModelConfig(
            encoder_dim=D,
            embed_dim=self.embed_dim,
            heads=self.heads,
            decoder_layers=self.decoder_layers,
            vocab_size=C + self.prompt_len + 1,
            max_audio_len=X.shape[1],
            num_classes=C,
            prompt_len=self.prompt_len,
        )
        settings = PretrainConfig(
            lr=self.lr,
            max_steps=self.max_steps,
            min_steps=self.min_steps,
            batch_size=self.batch_size,
            eval_every=self.eval_every,
            ua_threshold=self.ua_threshold,
            weight_decay=self.weight_decay,
        )
        self.params_ = fit_teacher(self.config_, X, y_ids, Xe, ye, root.spawn(2), self.encoder_, settings)
        self.n_features_in_ = D
        return self

    def attention_weights(self, X, query_policy=QueryPolicy.FIRST_RESPONSE_TOKEN) -> np.ndarray:
        """Normalized last-layer attention of the response query over audio frames."""
        X = self._validated(X)
        return teacher_targets(self.params_, self.config_, X, QueryPolicy(query_policy)).weights


class DistilledStudentClassifier(_ToyClassifierBase):
    """Smaller student trained from a fitted :class:`ToyLALMClassifier`.

    ``strategy`` picks the loss: ``SFT`` (no teacher needed), ``ForwardKL``,
    ``ReverseKL``, ``LDistOnly``, ``LDistPlusCKA`` or ``PLDistill``. The student
    reuses the teacher's frozen encoder and class vocabulary. ``history_``
    holds one ``LossBundle`` per update.
    """

    def __init__(
        self,
        teacher=None,
        strategy="PLDistill",
        alpha=1.0,
        beta=0.8,
        gamma=1.0,
        temperature=2.0,
        embed_dim=8,
        heads=2,
        decoder_layers=1,
        lr=1e-3,
        steps=200,
        batch_size=1,
        grad_accum=16,
        weight_decay=0.0,
        query_policy="FirstResponseToken",
        random_state=0,
    ):
        self.teacher = teacher
        self.strategy = strategy
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.temperature = temperature
        self.embed_dim = embed_dim
        self.heads = heads
        self.decoder_layers = decoder_layers
        self.lr = lr
        self.steps = steps
        self.batch_size = batch_size
        self.grad_accum = grad_accum
        self.weight_decay = weight_decay
        self.query_policy = query_policy
        self.random_state = random_state

    def fit(self, X, y):
        strategy = Strategy(self.strategy)
        if self.teacher is None:
            raise ValueError("a fitted ToyLALMClassifier teacher is required (it supplies the frozen encoder)")
        check_is_fitted(self.teacher, "params_")
        X = _check_features(X, self.teacher.n_features_in_)
        check_classification_targets(y)
        self.classes_ = self.teacher.classes_
        y_ids = self._encode_labels(y)
        tcfg = self.teacher.config_
        self.config_ = ToyModelConfig(
            encoder_dim=tcfg.encoder_dim,
            embed_dim=self.embed_dim,
            heads=self.heads,
            decoder_layers=self.decoder_layers,
            vocab_size=tcfg.vocab_size,
            max_audio_len=tcfg.max_audio_len,
            num_classes=tcfg.num_classes,
            prompt_len=tcfg.prompt_len,
        )
        train = TrainConfig(
            strategy=strategy,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            temperature=self.temperature,
            lr=self.lr,
            steps=self.steps,
            batch_size=self.batch_size,
            grad_accum=self.grad_accum,
            seed=self.random_state,
            query_policy=QueryPolicy(self.query_policy),
            weight_decay=self.weight_decay,
        )
        self.params_, self.history_ = fit_student(
            self.teacher.params_, tcfg, self.config_, X, y_ids, train, self.teacher.encoder_
        )
        self.n_features_in_ = X.shape[2]
        return self

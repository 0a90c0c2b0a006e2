"""Synthetic emotion-like sequence data with class evidence at a few frames."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numeric import Rng


@dataclass(frozen=True)
class SyntheticSample:
    audio_features: np.ndarray  # (L_a, feature_dim)
    label: int
    cue_positions: np.ndarray
    sample_id: int


@dataclass
class SyntheticDataset:
    train: list[SyntheticSample]
    test: list[SyntheticSample]
    patterns: np.ndarray = field(repr=False)
    num_classes: int = 0
    nuisance_basis: np.ndarray | None = field(default=None, repr=False)

    @staticmethod
    def stack(samples: list[SyntheticSample]) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([s.audio_features for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        return X, y

    def train_arrays(self):
        return self.stack(self.train)

    def test_arrays(self):
        return self.stack(self.test)


def generate_dataset(
    num_classes: int,
    samples_per_class: int,
    L_a: int,
    cue_count: int,
    noise_sigma: float,
    rng: Rng,
    feature_dim: int = 16,
    signal_scale: float = 1.0,
    test_fraction: float = 0.2,
    nuisance_dim: int = 0,
    nuisance_sigma: float = 0.0,
) -> SyntheticDataset:
    """Draw a class-balanced dataset and split it per class into train and test.

    Every class owns a random unit-norm pattern vector. A sample places its
    class pattern (times ``signal_scale``) on ``cue_count`` distinct random
    frames; every frame, cue or not, also receives isotropic Gaussian noise of
    std ``noise_sigma``, so frames off the cue positions carry no class
    information.

    ``nuisance_dim > 0`` adds class-independent structured variation to every
    frame: Gaussian coordinates of std ``nuisance_sigma`` in a fixed random
    ``nuisance_dim``-dimensional subspace (speaker/channel-like variability).
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    # cue_count == L_a is allowed: every frame carries the pattern
    if L_a < 2 or not 1 <= cue_count <= L_a:
        raise ValueError(f"invalid cue_count={cue_count} for L_a={L_a}")
    if samples_per_class < 2 or feature_dim < 1 or noise_sigma < 0:
        raise ValueError("invalid dataset shape parameters")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if not 0 <= nuisance_dim <= feature_dim or nuisance_sigma < 0:
        raise ValueError("invalid nuisance subspace parameters")

    patterns = rng.normal((num_classes, feature_dim))
    patterns /= np.linalg.norm(patterns, axis=1, keepdims=True)
    basis = None
    if nuisance_dim:
        basis = np.linalg.qr(rng.normal((feature_dim, nuisance_dim)))[0].T

    by_class: list[list[SyntheticSample]] = []
    sid = 0
    for c in range(num_classes):
        samples = []
        for _ in range(samples_per_class):
            frames = rng.normal((L_a, feature_dim), scale=noise_sigma)
            if basis is not None:
                frames += rng.normal((L_a, nuisance_dim), scale=nuisance_sigma) @ basis
            cues = np.sort(rng.choice(L_a, cue_count, replace=False))
            frames[cues] += signal_scale * patterns[c]
            samples.append(SyntheticSample(frames, c, cues, sid))
            sid += 1
        by_class.append(samples)

    n_test = max(1, int(round(samples_per_class * test_fraction)))
    train, test = [], []
    for samples in by_class:
        order = rng.permutation(len(samples))
        test.extend(samples[i] for i in order[:n_test])
        train.extend(samples[i] for i in order[n_test:])
    train = [train[i] for i in rng.permutation(len(train))]
    test.sort(key=lambda s: s.sample_id)
    return SyntheticDataset(train, test, patterns, num_classes, basis)

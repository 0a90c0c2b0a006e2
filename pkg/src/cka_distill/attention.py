"""Per-audio-token importance weights taken from a teacher attention map."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class QueryPolicy(str, enum.Enum):
    FIRST_RESPONSE_TOKEN = "FirstResponseToken"
    MEAN_OVER_RESPONSE_TOKENS = "MeanOverResponseTokens"


@dataclass(frozen=True)
class SegmentSpans:
    """Lengths of the audio, prompt and response spans of one sequence.

    Spans are laid out as audio ``[0, La)``, prompt ``[La, La+Lp)`` and response
    ``[La+Lp, L)``.
    """

    audio: int
    prompt: int
    response: int

    def __post_init__(self):
        if self.audio < 1:
            raise ValueError("audio span must be non-empty")
        if self.response < 1:
            raise ValueError("response span must be non-empty")
        if self.prompt < 0:
            raise ValueError("prompt span length must be non-negative")

    @property
    def total(self) -> int:
        return self.audio + self.prompt + self.response

    def audio_slice(self) -> slice:
        return slice(0, self.audio)

    def prompt_slice(self) -> slice:
        return slice(self.audio, self.audio + self.prompt)

    def response_slice(self) -> slice:
        return slice(self.audio + self.prompt, self.total)

    @classmethod
    def parse(cls, text: str) -> "SegmentSpans":
        """Parse ``"La,Lp,Lr"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"spans must be 'audio,prompt,response', got {text!r}")
        return cls(*(int(p) for p in parts))


def check_attention_map(scores, tol: float = 1e-6) -> np.ndarray:
    """Validate a post-softmax ``heads x L x L`` map (a 2-D map is taken as one head)."""
    a = np.asarray(scores, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"attention map must be heads x L x L, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("attention map contains NaN or Inf")
    if a.min() < -tol or a.max() > 1 + tol:
        raise ValueError("attention entries must lie in [0, 1]")
    if np.max(np.abs(a.sum(axis=-1) - 1.0)) > tol:
        raise ValueError("attention rows must sum to 1 (expected post-softmax scores)")
    return a


def extract_raw_scores(
    scores,
    spans: SegmentSpans,
    query_policy: QueryPolicy | str = QueryPolicy.FIRST_RESPONSE_TOKEN,
) -> np.ndarray:
    """Head-averaged attention from the response query row(s) onto the audio keys."""
    a = check_attention_map(scores)
    policy = QueryPolicy(query_policy)
    if a.shape[1] != spans.total:
        raise ValueError(f"attention map length {a.shape[1]} does not match spans total {spans.total}")
    mean_heads = a.mean(axis=0)
    rows = mean_heads[spans.response_slice(), spans.audio_slice()]
    if rows.shape[0] == 0:
        raise ValueError("empty response span")
    if policy is QueryPolicy.FIRST_RESPONSE_TOKEN:
        return rows[0].copy()
    return rows.mean(axis=0)


def normalize_weights(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("attention scores must be a vector")
    if np.any(a < 0):
        raise ValueError("attention scores must be non-negative")
    total = a.sum()
    if not total > 0:
        raise ValueError("no attention mass on audio tokens")
    return a / total


def token_weights(scores, spans: SegmentSpans, query_policy=QueryPolicy.FIRST_RESPONSE_TOKEN) -> np.ndarray:
    return normalize_weights(extract_raw_scores(scores, spans, query_policy))


def check_token_weights(w, length: int | None = None, tol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("token weights must be a vector")
    if length is not None and w.shape[0] != length:
        raise ValueError(f"token weights have length {w.shape[0]}, expected {length}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > tol:
        raise ValueError("token weights must be non-negative and sum to 1")
    return w

"""Tiny audio-language model: frozen encoder, affine projector, causal attention decoder.

Sequence layout per sample: ``L_a`` audio embeddings from the projector, a fixed
prompt of ``prompt_len`` tokens, then one answer-slot token whose logits score
the emotion class. Class ``c`` is vocabulary id ``c``.

Parameters live in a flat ``dict[str, ndarray]``. Forward passes are batched
(``B x L_a x feature_dim`` input) and the backward pass is written out by hand.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..attention import SegmentSpans
from ..numeric import Rng

LN_EPS = 1e-5
ENCODER_KEY = "encoder.weight"
FROZEN_KEYS = frozenset({ENCODER_KEY})


@dataclass(frozen=True)
class ToyModelConfig:
    encoder_dim: int = 16
    embed_dim: int = 32
    heads: int = 4
    decoder_layers: int = 1
    vocab_size: int = 12
    max_audio_len: int = 32
    num_classes: int = 4
    prompt_len: int = 3
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if not 1 <= self.decoder_layers <= 2:
            raise ValueError("decoder_layers must be 1 or 2")
        if self.vocab_size < self.num_classes + self.prompt_len + 1:
            raise ValueError("vocab_size too small for class, prompt and answer-slot tokens")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def text_ids(self) -> np.ndarray:
        """Prompt token ids followed by the answer-slot id."""
        start = self.num_classes
        return np.arange(start, start + self.prompt_len + 1)

    def spans(self, L_a: int) -> SegmentSpans:
        return SegmentSpans(L_a, self.prompt_len, 1)

    def to_dict(self) -> dict:
        return asdict(self)


def make_encoder(encoder_dim: int, rng: Rng) -> np.ndarray:
    """Frozen random linear encoder shared by teacher and student."""
    return rng.normal((encoder_dim, encoder_dim), scale=1.0 / np.sqrt(encoder_dim))


def init_params(config: ToyModelConfig, rng: Rng, encoder: np.ndarray) -> dict[str, np.ndarray]:
    E, D, V = config.embed_dim, config.encoder_dim, config.vocab_size
    H = config.mlp_ratio * E
    L = config.max_audio_len + config.prompt_len + 1
    if encoder.shape != (D, D):
        raise ValueError(f"encoder weight must be {D}x{D}, got {encoder.shape}")
    p: dict[str, np.ndarray] = {ENCODER_KEY: encoder}
    p["projector.weight"] = rng.normal((D, E), scale=1.0 / np.sqrt(D))
    p["projector.bias"] = np.zeros(E)
    p["token_embedding"] = rng.normal((V, E), scale=0.5)
    p["position_embedding"] = rng.normal((L, E), scale=0.1)
    for i in range(config.decoder_layers):
        pre = f"layers.{i}."
        p[pre + "ln1.gain"] = np.ones(E)
        p[pre + "ln1.bias"] = np.zeros(E)
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + "attn." + name] = rng.normal((E, E), scale=1.0 / np.sqrt(E))
        p[pre + "ln2.gain"] = np.ones(E)
        p[pre + "ln2.bias"] = np.zeros(E)
        p[pre + "mlp.w1"] = rng.normal((E, H), scale=1.0 / np.sqrt(E))
        p[pre + "mlp.b1"] = np.zeros(H)
        p[pre + "mlp.w2"] = rng.normal((H, E), scale=1.0 / np.sqrt(H))
        p[pre + "mlp.b2"] = np.zeros(E)
    p["final_ln.gain"] = np.ones(E)
    p["final_ln.bias"] = np.zeros(E)
    p["head.weight"] = rng.normal((E, V), scale=1.0 / np.sqrt(E))
    return p


def trainable_keys(params: dict) -> list[str]:
    return [k for k in params if k not in FROZEN_KEYS]


# --- primitives -----------------------------------------------------------------


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * gain + bias, (xhat, rstd)


def _layer_norm_back(dy, gain, cache):
    xhat, rstd = cache
    dgain = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dbias = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gain
    dx = rstd * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _silu(u):
    s = 1.0 / (1.0 + np.exp(-u))
    return u * s, s


def _split_heads(x, h):
    B, L, E = x.shape
    return x.reshape(B, L, h, E // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, L, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, h * d)


def _sum_rows(x):
    return x.reshape(-1, x.shape[-1]).sum(axis=0)


def _weight_grad(inp, dout):
    return inp.reshape(-1, inp.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])


# --- forward / backward --------------------------------------------------------


@dataclass
class ForwardOutput:
    audio_embeddings: np.ndarray  # (B, L_a, E)
    logits: np.ndarray  # (B, L, V)
    attention: np.ndarray  # last layer, (B, heads, L, L)
    spans: SegmentSpans
    cache: dict


def encode(params: dict, X: np.ndarray) -> np.ndarray:
    return X @ params[ENCODER_KEY]


def forward(params: dict, config: ToyModelConfig, X: np.ndarray, keep_cache: bool = True) -> ForwardOutput:
    """Run a batch ``X`` of shape ``(B, L_a, encoder_dim)`` through the model."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != config.encoder_dim:
        raise ValueError(f"audio features must be (B, L_a, {config.encoder_dim}), got {X.shape}")
    B, L_a, _ = X.shape
    if not 2 <= L_a <= config.max_audio_len:
        raise ValueError(f"audio length {L_a} outside [2, {config.max_audio_len}]")
    spans = config.spans(L_a)
    L = spans.total
    h = config.heads
    scale = 1.0 / np.sqrt(config.head_dim)

    feats = encode(params, X)
    H_a = feats @ params["projector.weight"] + params["projector.bias"]
    text = params["token_embedding"][config.text_ids]
    x = np.concatenate([H_a, np.broadcast_to(text, (B,) + text.shape)], axis=1)
    x = x + params["position_embedding"][:L]

    mask = np.tril(np.ones((L, L), dtype=bool))
    layer_caches = []
    P = None
    for i in range(config.decoder_layers):
        pre = f"layers.{i}."
        a, ln1 = _layer_norm(x, params[pre + "ln1.gain"], params[pre + "ln1.bias"])
        q = _split_heads(a @ params[pre + "attn.wq"], h)
        k = _split_heads(a @ params[pre + "attn.wk"], h)
        v = _split_heads(a @ params[pre + "attn.wv"], h)
        s = np.where(mask, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
        s = s - s.max(axis=-1, keepdims=True)
        P = np.exp(s)
        P /= P.sum(axis=-1, keepdims=True)
        o = _merge_heads(P @ v)
        x = x + o @ params[pre + "attn.wo"]
        m, ln2 = _layer_norm(x, params[pre + "ln2.gain"], params[pre + "ln2.bias"])
        u = m @ params[pre + "mlp.w1"] + params[pre + "mlp.b1"]
        act, sig = _silu(u)
        x = x + act @ params[pre + "mlp.w2"] + params[pre + "mlp.b2"]
        if keep_cache:
            layer_caches.append(dict(a=a, ln1=ln1, q=q, k=k, v=v, P=P, o=o, m=m, ln2=ln2, u=u, act=act, sig=sig))

    f, lnf = _layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])
    Z = f @ params["head.weight"]
    cache = dict(feats=feats, layers=layer_caches, f=f, lnf=lnf) if keep_cache else {}
    return ForwardOutput(H_a, Z, P, spans, cache)


def backward(
    params: dict,
    config: ToyModelConfig,
    out: ForwardOutput,
    dZ: np.ndarray,
    dH_a: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of all trainable parameters given upstream ``dL/dZ`` and optional ``dL/dH_a``."""
    if not out.cache:
        raise ValueError("forward was run without keep_cache")
    c = out.cache
    h = config.heads
    scale = 1.0 / np.sqrt(config.head_dim)
    g: dict[str, np.ndarray] = {}

    g["head.weight"] = _weight_grad(c["f"], dZ)
    df = dZ @ params["head.weight"].T
    dx, g["final_ln.gain"], g["final_ln.bias"] = _layer_norm_back(df, params["final_ln.gain"], c["lnf"])

    for i in reversed(range(config.decoder_layers)):
        pre = f"layers.{i}."
        lc = c["layers"][i]
        # mlp
        g[pre + "mlp.w2"] = _weight_grad(lc["act"], dx)
        g[pre + "mlp.b2"] = _sum_rows(dx)
        dact = dx @ params[pre + "mlp.w2"].T
        sig = lc["sig"]
        du = dact * (sig + lc["u"] * sig * (1.0 - sig))
        g[pre + "mlp.w1"] = _weight_grad(lc["m"], du)
        g[pre + "mlp.b1"] = _sum_rows(du)
        dm = du @ params[pre + "mlp.w1"].T
        dln, g[pre + "ln2.gain"], g[pre + "ln2.bias"] = _layer_norm_back(dm, params[pre + "ln2.gain"], lc["ln2"])
        dx = dx + dln
        # attention
        g[pre + "attn.wo"] = _weight_grad(lc["o"], dx)
        do = _split_heads(dx @ params[pre + "attn.wo"].T, h)
        P, q, k, v = lc["P"], lc["q"], lc["k"], lc["v"]
        dP = do @ v.transpose(0, 1, 3, 2)
        dv = P.transpose(0, 1, 3, 2) @ do
        ds = P * (dP - np.sum(dP * P, axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        a = lc["a"]
        g[pre + "attn.wq"] = _weight_grad(a, dq)
        g[pre + "attn.wk"] = _weight_grad(a, dk)
        g[pre + "attn.wv"] = _weight_grad(a, dv)
        da = dq @ params[pre + "attn.wq"].T + dk @ params[pre + "attn.wk"].T + dv @ params[pre + "attn.wv"].T
        dln, g[pre + "ln1.gain"], g[pre + "ln1.bias"] = _layer_norm_back(da, params[pre + "ln1.gain"], lc["ln1"])
        dx = dx + dln

    L = dx.shape[1]
    L_a = out.spans.audio
    pos = np.zeros_like(params["position_embedding"])
    pos[:L] = dx.sum(axis=0)
    g["position_embedding"] = pos
    tok = np.zeros_like(params["token_embedding"])
    np.add.at(tok, config.text_ids, dx[:, L_a:].sum(axis=0))
    g["token_embedding"] = tok
    dH = dx[:, :L_a]
    if dH_a is not None:
        dH = dH + dH_a
    g["projector.weight"] = _weight_grad(c["feats"], dH)
    g["projector.bias"] = _sum_rows(dH)
    return {k: g[k] for k in trainable_keys(params)}


def predict_classes(params: dict, config: ToyModelConfig, X: np.ndarray) -> np.ndarray:
    """Argmax over class-token logits at the first response position (ties -> lowest id)."""
    out = forward(params, config, X, keep_cache=False)
    return class_argmax(out.logits[:, out.spans.response_slice().start], config.num_classes)


def class_argmax(response_logits: np.ndarray, num_classes: int) -> np.ndarray:
    return np.argmax(np.asarray(response_logits)[..., :num_classes], axis=-1)

"""Next-symptom inquiry policy: a small transformer encoder-classifier.

The network embeds a window of recent symptom indices, runs pre-norm
residual attention/feed-forward blocks with pad positions masked out of
attention, reads the representation at the most recent position, and emits a
softmax distribution over the N symptom actions.

Everything is hand-rolled on numpy with exact analytic backpropagation, so
training is reproducible bit-for-bit from a seed and gradients can be checked
coordinate-wise against central finite differences. Parameters are stored as
float32 (the checkpoint format); all arithmetic runs in float64.

Positional encodings are sinusoidal over *recency* (row 0 encodes the most
recent symptom), which makes the output independent of the configured window
length for any given logical state: the real tokens always occupy the same
recency rows and pad slots never enter attention.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import StateActionPair
from .errors import ConfigError, ParseError, UnsupportedVersionError

CHECKPOINT_MAGIC = b"SSNV"
CHECKPOINT_VERSION = 1

_LN_EPS = 1e-5
_MASK_BIAS = -1e30
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class PolicyConfig:
    """Architecture hyperparameters; defaults are small enough to train on CPU."""

    n_symbols: int
    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 128
    max_window: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n_symbols < 2:
            raise ConfigError(f"n_symbols must be >= 2, got {self.n_symbols}")
        if self.embed_dim < 1 or self.embed_dim % self.n_heads != 0:
            raise ConfigError(
                f"embed_dim ({self.embed_dim}) must be a positive multiple of n_heads ({self.n_heads})"
            )
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.ff_dim < 1:
            raise ConfigError(f"ff_dim must be >= 1, got {self.ff_dim}")
        if self.max_window < 1:
            raise ConfigError(f"max_window must be >= 1, got {self.max_window}")

    def to_dict(self) -> dict:
        return {
            "n_symbols": self.n_symbols,
            "embed_dim": self.embed_dim,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "ff_dim": self.ff_dim,
            "max_window": self.max_window,
            "seed": self.seed,
        }


_LAYER_FIELDS = (
    "attn_norm_scale",
    "attn_norm_offset",
    "w_query",
    "w_key",
    "w_value",
    "w_output",
    "ff_norm_scale",
    "ff_norm_offset",
    "ff_w1",
    "ff_b1",
    "ff_w2",
    "ff_b2",
)


def tensor_specs(cfg: PolicyConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declared (name, shape) order; also the checkpoint serialization order."""
    d, ff = cfg.embed_dim, cfg.ff_dim
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("token_embedding", (cfg.n_symbols + 1, d)),
        ("position_encoding", (cfg.max_window, d)),
    ]
    for i in range(cfg.n_layers):
        shapes = {
            "attn_norm_scale": (d,),
            "attn_norm_offset": (d,),
            "w_query": (d, d),
            "w_key": (d, d),
            "w_value": (d, d),
            "w_output": (d, d),
            "ff_norm_scale": (d,),
            "ff_norm_offset": (d,),
            "ff_w1": (d, ff),
            "ff_b1": (ff,),
            "ff_w2": (ff, d),
            "ff_b2": (d,),
        }
        specs.extend((f"layers.{i}.{field}", shapes[field]) for field in _LAYER_FIELDS)
    specs.append(("head_weight", (d, cfg.n_symbols)))
    specs.append(("head_bias", (cfg.n_symbols,)))
    return specs


def trainable_names(cfg: PolicyConfig) -> list[str]:
    """All tensors except the fixed sinusoidal positional encodings."""
    return [name for name, _ in tensor_specs(cfg) if name != "position_encoding"]


@dataclass
class PolicyParameters:
    """All weights of the policy, as float32 arrays keyed by tensor name."""

    config: PolicyConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(self.config, {k: v.copy() for k, v in self.tensors.items()})


def _recency_encoding(max_window: int, dim: int) -> np.ndarray:
    """Sinusoidal table indexed by distance from the most recent symptom."""
    pe = np.zeros((max_window, dim), dtype=np.float64)
    recency = np.arange(max_window, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-math.log(10000.0) / dim))
    pe[:, 0::2] = np.sin(recency * div)
    pe[:, 1::2] = np.cos(recency * div[: pe[:, 1::2].shape[1]])
    return pe


def init_policy(cfg: PolicyConfig) -> PolicyParameters:
    """Seeded uniform init scaled by 1/sqrt(fan_in); norms at identity, biases zero."""
    rng = np.random.default_rng(cfg.seed)
    d, ff = cfg.embed_dim, cfg.ff_dim
    fan_in = {"w1": d, "w2": ff}
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_specs(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if name == "position_encoding":
            value = _recency_encoding(cfg.max_window, d)
        elif leaf in ("attn_norm_scale", "ff_norm_scale"):
            value = np.ones(shape)
        elif leaf in ("attn_norm_offset", "ff_norm_offset", "ff_b1", "ff_b2", "head_bias"):
            value = np.zeros(shape)
        else:
            if leaf == "ff_w1":
                bound = 1.0 / math.sqrt(fan_in["w1"])
            elif leaf == "ff_w2":
                bound = 1.0 / math.sqrt(fan_in["w2"])
            else:
                bound = 1.0 / math.sqrt(d)
            value = rng.uniform(-bound, bound, size=shape)
        tensors[name] = value.astype(np.float32)
    return PolicyParameters(config=cfg, tensors=tensors)


def _as_float64(tensors: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}


def encode_states(states: Sequence[Sequence[int]], cfg: PolicyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad states to the window length; returns (tokens, real-position mask)."""
    if not states:
        raise ValueError("batch of states must be non-empty")
    L, n = cfg.max_window, cfg.n_symbols
    tokens = np.full((len(states), L), n, dtype=np.int64)
    mask = np.zeros((len(states), L), dtype=bool)
    for b, state in enumerate(states):
        if len(state) == 0:
            raise ValueError("state must contain at least one symptom")
        if len(state) > L:
            raise ValueError(f"state length {len(state)} exceeds window {L}")
        for s in state:
            if not 0 <= s < n:
                raise ValueError(f"symptom index {s} out of range [0, {n})")
        tokens[b, L - len(state):] = state
        mask[b, L - len(state):] = True
    return tokens, mask


def _layer_norm_forward(x: np.ndarray, scale: np.ndarray, offset: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = centered * inv_std
    return xhat * scale + offset, (xhat, inv_std)


def _layer_norm_backward(dy: np.ndarray, scale: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std = cache
    axes = tuple(range(dy.ndim - 1))
    dscale = (dy * xhat).sum(axis=axes)
    doffset = dy.sum(axis=axes)
    dxhat = dy * scale
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dscale, doffset


def _gelu(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inner = _GELU_C * (u + _GELU_A * u**3)
    th = np.tanh(inner)
    return 0.5 * u * (1.0 + th), th


def _gelu_grad(u: np.ndarray, th: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * u * u)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, n_heads, length, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, n_heads * dh)


def _forward_core(t64: Mapping[str, np.ndarray], cfg: PolicyConfig, tokens: np.ndarray, mask: np.ndarray):
    """Full forward pass in float64; returns (log-probs, probs, cache)."""
    nh = cfg.n_heads
    scale = 1.0 / math.sqrt(cfg.embed_dim // nh)
    pe_slots = t64["position_encoding"][::-1]
    x = t64["token_embedding"][tokens] + pe_slots[None, :, :]
    key_bias = np.where(mask[:, None, None, :], 0.0, _MASK_BIAS)

    layer_caches = []
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        h, ln1 = _layer_norm_forward(x, t64[p + "attn_norm_scale"], t64[p + "attn_norm_offset"])
        qh = _split_heads(h @ t64[p + "w_query"], nh)
        kh = _split_heads(h @ t64[p + "w_key"], nh)
        vh = _split_heads(h @ t64[p + "w_value"], nh)
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + key_bias
        scores -= scores.max(axis=-1, keepdims=True)
        attn = np.exp(scores)
        attn /= attn.sum(axis=-1, keepdims=True)
        merged = _merge_heads(attn @ vh)
        x_attn = x + merged @ t64[p + "w_output"]

        h2, ln2 = _layer_norm_forward(x_attn, t64[p + "ff_norm_scale"], t64[p + "ff_norm_offset"])
        u = h2 @ t64[p + "ff_w1"] + t64[p + "ff_b1"]
        g, th = _gelu(u)
        x_out = x_attn + g @ t64[p + "ff_w2"] + t64[p + "ff_b2"]

        layer_caches.append(
            dict(h=h, ln1=ln1, qh=qh, kh=kh, vh=vh, attn=attn, merged=merged,
                 h2=h2, ln2=ln2, u=u, g=g, th=th)
        )
        x = x_out

    readout = x[:, -1, :]
    logits = readout @ t64["head_weight"] + t64["head_bias"]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - log_z
    probs = np.exp(logp)
    cache = dict(tokens=tokens, layers=layer_caches, readout=readout, attn_scale=scale)
    return logp, probs, cache


def _backward_core(t64: Mapping[str, np.ndarray], cfg: PolicyConfig, cache, dlogits: np.ndarray):
    """Exact gradients of a scalar loss wrt every trainable tensor, from dloss/dlogits."""
    nh = cfg.n_heads
    scale = cache["attn_scale"]
    grads: dict[str, np.ndarray] = {}

    readout = cache["readout"]
    grads["head_weight"] = readout.T @ dlogits
    grads["head_bias"] = dlogits.sum(axis=0)
    dx = np.zeros((dlogits.shape[0], cfg.max_window, cfg.embed_dim))
    dx[:, -1, :] = dlogits @ t64["head_weight"].T

    for i in reversed(range(cfg.n_layers)):
        p = f"layers.{i}."
        lc = cache["layers"][i]
        d, ff = cfg.embed_dim, cfg.ff_dim

        # feed-forward block: x_out = x_attn + gelu(LN2(x_attn) @ W1 + b1) @ W2 + b2
        df = dx
        dg = df @ t64[p + "ff_w2"].T
        grads[p + "ff_w2"] = lc["g"].reshape(-1, ff).T @ df.reshape(-1, d)
        grads[p + "ff_b2"] = df.sum(axis=(0, 1))
        du = dg * _gelu_grad(lc["u"], lc["th"])
        grads[p + "ff_w1"] = lc["h2"].reshape(-1, d).T @ du.reshape(-1, ff)
        grads[p + "ff_b1"] = du.sum(axis=(0, 1))
        dh2 = du @ t64[p + "ff_w1"].T
        dln2, dscale2, doffset2 = _layer_norm_backward(dh2, t64[p + "ff_norm_scale"], lc["ln2"])
        grads[p + "ff_norm_scale"] = dscale2
        grads[p + "ff_norm_offset"] = doffset2
        dx_attn = dx + dln2

        # attention block: x_attn = x + merge(softmax(qk^T) v) @ Wo
        dproj = dx_attn
        grads[p + "w_output"] = lc["merged"].reshape(-1, d).T @ dproj.reshape(-1, d)
        dctx = _split_heads(dproj @ t64[p + "w_output"].T, nh)
        dattn = dctx @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["attn"].transpose(0, 1, 3, 2) @ dctx
        attn = lc["attn"]
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dqh = dscores @ lc["kh"] * scale
        dkh = dscores.transpose(0, 1, 3, 2) @ lc["qh"] * scale
        dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
        h2d = lc["h"].reshape(-1, d)
        grads[p + "w_query"] = h2d.T @ dq.reshape(-1, d)
        grads[p + "w_key"] = h2d.T @ dk.reshape(-1, d)
        grads[p + "w_value"] = h2d.T @ dv.reshape(-1, d)
        dh = dq @ t64[p + "w_query"].T + dk @ t64[p + "w_key"].T + dv @ t64[p + "w_value"].T
        dln1, dscale1, doffset1 = _layer_norm_backward(dh, t64[p + "attn_norm_scale"], lc["ln1"])
        grads[p + "attn_norm_scale"] = dscale1
        grads[p + "attn_norm_offset"] = doffset1
        dx = dx_attn + dln1

    demb = np.zeros((cfg.n_symbols + 1, cfg.embed_dim))
    np.add.at(demb, cache["tokens"].reshape(-1), dx.reshape(-1, cfg.embed_dim))
    grads["token_embedding"] = demb
    return grads


def forward_batch(params: PolicyParameters, states: Sequence[Sequence[int]]) -> np.ndarray:
    """Action distributions for a batch of states; rows sum to 1."""
    tokens, mask = encode_states(states, params.config)
    _, probs, _ = _forward_core(_as_float64(params.tensors), params.config, tokens, mask)
    return probs


def forward(params: PolicyParameters, state: Sequence[int]) -> np.ndarray:
    """Action distribution for one state (length-N vector)."""
    return forward_batch(params, [state])[0]


def top_actions(probs: np.ndarray, k: int) -> list[int]:
    """Indices of the k most probable actions, ties broken by lower index."""
    order = np.lexsort((np.arange(len(probs)), -probs))
    return [int(i) for i in order[:k]]


def objective_grad(
    params: PolicyParameters,
    states: Sequence[Sequence[int]],
    actions: Sequence[int],
    ce_weights: Sequence[float],
    entropy_coeff: float = 0.0,
):
    """Shared gradient engine for the weighted objectives.

    Computes the loss ``-(1/B) sum_i w_i log pi(a_i|s_i) + c*(1/B) sum_i H_i``
    where H_i is the policy entropy at state i and c = ``entropy_coeff``
    (negative c rewards entropy). Returns per-sample log-probs, per-sample
    entropies, and the gradient dict over trainable tensors.
    """
    cfg = params.config
    tokens, mask = encode_states(states, cfg)
    actions_arr = np.asarray(actions, dtype=np.int64)
    if actions_arr.shape != (len(states),):
        raise ValueError("one action per state required")
    if np.any((actions_arr < 0) | (actions_arr >= cfg.n_symbols)):
        raise ValueError("action index out of range")
    weights = np.asarray(ce_weights, dtype=np.float64)
    if weights.shape != (len(states),):
        raise ValueError("one weight per sample required")
    if not np.all(np.isfinite(weights)):
        raise ValueError("loss weights must be finite")

    t64 = _as_float64(params.tensors)
    logp, probs, cache = _forward_core(t64, cfg, tokens, mask)
    batch = len(states)
    rows = np.arange(batch)
    sample_logp = logp[rows, actions_arr]
    plogp = np.where(probs > 0.0, probs * logp, 0.0)
    entropies = -plogp.sum(axis=-1)

    dlogits = probs * weights[:, None]
    dlogits[rows, actions_arr] -= weights
    dlogits /= batch
    if entropy_coeff != 0.0:
        # dH/dlogit_j = -p_j (log p_j + H)
        dentropy = -probs * (logp + entropies[:, None])
        dlogits += (entropy_coeff / batch) * dentropy

    grads = _backward_core(t64, cfg, cache, dlogits)
    return sample_logp, entropies, grads


def log_prob_and_grad(
    params: PolicyParameters,
    batch: Sequence[StateActionPair],
    weights: Sequence[float],
):
    """Weighted negative log-likelihood of the batch actions, with exact gradients."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    states = [pair.state for pair in batch]
    actions = [pair.action for pair in batch]
    sample_logp, _, grads = objective_grad(params, states, actions, weights)
    loss = float(-(np.asarray(weights, dtype=np.float64) * sample_logp).mean())
    return loss, grads


def save_checkpoint(params: PolicyParameters, path: str | Path) -> None:
    """Binary checkpoint: magic, version, config block, float32 LE tensors."""
    config_blob = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", CHECKPOINT_VERSION))
        handle.write(struct.pack("<I", len(config_blob)))
        handle.write(config_blob)
        for name, _ in tensor_specs(params.config):
            handle.write(np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> PolicyParameters:
    """Load a checkpoint; the round-trip is bit-exact."""
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise ParseError("checkpoint file truncated before header")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"bad checkpoint magic {blob[:4]!r}")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {version} not supported (expected {CHECKPOINT_VERSION})"
        )
    config_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + config_len:
        raise ParseError("checkpoint file truncated inside config block")
    try:
        config_doc = json.loads(blob[12 : 12 + config_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"checkpoint config block is not valid JSON: {exc}") from exc
    expected_keys = set(PolicyConfig(n_symbols=2).to_dict())
    if set(config_doc) != expected_keys:
        raise ParseError(f"checkpoint config keys {sorted(config_doc)} do not match {sorted(expected_keys)}")
    try:
        cfg = PolicyConfig(**config_doc)
    except (ConfigError, TypeError) as exc:
        raise ParseError(f"checkpoint config invalid: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    offset = 12 + config_len
    for name, shape in tensor_specs(cfg):
        count = int(np.prod(shape))
        nbytes = count * 4
        if len(blob) < offset + nbytes:
            raise ParseError(f"checkpoint file truncated inside tensor {name!r}")
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ParseError(f"{len(blob) - offset} trailing bytes after declared tensors")
    return PolicyParameters(config=cfg, tensors=tensors)

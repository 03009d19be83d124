"""Set-conditioned value-distribution predictor.

The predictor maps a query position plus an arbitrary set of observed
(position, value) samples to distribution parameters for the value at the
query. Samples are embedded individually (Fourier position features plus
a value projection), mixed by full self-attention, and queries read from
the resulting embeddings through cross-attention only. Nothing in the
architecture depends on sample order or on the other queries in a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .distribution import BinLayout, DistParams, head_to_params
from .errors import ConfigError, InputError
from .tensor import Tensor

ModelParams = dict  # parameter path -> Tensor


@dataclass(frozen=True)
class SampleSet:
    """Observed (position, value) pairs conditioning a prediction.

    positions: [K, p] in [-1, 1]^p; values: [K, d]. K = 0 is allowed only
    for the unconditional debugging mode.
    """

    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        val = np.asarray(self.values, dtype=np.float64)
        if pos.ndim != 2 or val.ndim != 2 or pos.shape[0] != val.shape[0]:
            raise InputError(f"sample set shapes {pos.shape} / {val.shape} do not pair up")
        if pos.size and (pos.min() < -1.0 or pos.max() > 1.0):
            raise InputError("sample positions must lie in [-1, 1]^p")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", val)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def extended(self, positions: np.ndarray, values: np.ndarray) -> "SampleSet":
        """New set with extra samples appended."""
        return SampleSet(
            np.concatenate([self.positions, np.atleast_2d(positions)]),
            np.concatenate([self.values, np.atleast_2d(values)]),
        )


@dataclass(frozen=True)
class QueryBatch:
    """Positions at which value distributions are requested; [Q, p]."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2:
            raise InputError(f"query positions must be [Q, p], got shape {pos.shape}")
        if pos.size and (pos.min() < -1.0 or pos.max() > 1.0):
            raise InputError("query positions must lie in [-1, 1]^p")
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ModelConfig:
    pos_dim: int
    value_dim: int
    n_bins: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 4
    n_dec_layers: int = 2
    n_fourier_octaves: int = 8

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def ffw_dim(self) -> int:
        return 4 * self.d_model

    @property
    def fourier_dim(self) -> int:
        return 2 * self.pos_dim * self.n_fourier_octaves

    @property
    def head_dim(self) -> int:
        return self.n_bins * (self.value_dim + 2)


def fourier_features(x: np.ndarray, n_octaves: int) -> np.ndarray:
    """Sinusoidal multi-frequency embedding of positions.

    For each coordinate and each octave l in 0..L-1 emits
    sin(2^l pi x) and cos(2^l pi x); output has 2*p*L features.
    """
    if n_octaves < 1:
        raise ConfigError(f"need at least one octave, got {n_octaves}")
    x = np.asarray(x, dtype=np.float64)
    parts = []
    for level in range(n_octaves):
        ang = (2.0**level) * np.pi * x
        parts.append(np.sin(ang))
        parts.append(np.cos(ang))
    return np.concatenate(parts, axis=-1)


def param_schema(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter path -> shape for every learned tensor of the model."""
    dm, fd = cfg.d_model, cfg.ffw_dim
    schema: dict[str, tuple[int, ...]] = {
        "enc.embed_pos.w": (cfg.fourier_dim, dm),
        "enc.embed_pos.b": (dm,),
        "enc.embed_val.w": (cfg.value_dim, dm),
        "enc.embed_val.b": (dm,),
        "dec.embed_pos.w": (cfg.fourier_dim, dm),
        "dec.embed_pos.b": (dm,),
        "head.w": (dm, cfg.head_dim),
        "head.b": (cfg.head_dim,),
    }

    def block(prefix: str):
        schema[f"{prefix}.ln1.g"] = (dm,)
        schema[f"{prefix}.ln1.b"] = (dm,)
        for name in ("wq", "wk", "wv", "wo"):
            schema[f"{prefix}.attn.{name}"] = (dm, dm)
        for name in ("bq", "bk", "bv", "bo"):
            schema[f"{prefix}.attn.{name}"] = (dm,)
        schema[f"{prefix}.ln2.g"] = (dm,)
        schema[f"{prefix}.ln2.b"] = (dm,)
        schema[f"{prefix}.ffw.w1"] = (dm, fd)
        schema[f"{prefix}.ffw.b1"] = (fd,)
        schema[f"{prefix}.ffw.w2"] = (fd, dm)
        schema[f"{prefix}.ffw.b2"] = (dm,)

    for i in range(cfg.n_enc_layers):
        block(f"enc.{i}")
    schema["enc.out_ln.g"] = (dm,)
    schema["enc.out_ln.b"] = (dm,)
    for i in range(cfg.n_dec_layers):
        block(f"dec.{i}")
    schema["dec.out_ln.g"] = (dm,)
    schema["dec.out_ln.b"] = (dm,)
    return schema


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Fresh parameters: scaled uniform fan-in weights, zero biases.

    Layer-norm gains start at 1; the output head starts at zero so the
    initial prediction is the uniform-bin, zero-offset, unit-sigma
    distribution everywhere.
    """
    rng = np.random.default_rng(seed)
    params: ModelParams = {}
    for path, shape in param_schema(cfg).items():
        leaf = path.rsplit(".", 1)[-1]
        if path.startswith("head."):
            data = np.zeros(shape)
        elif leaf == "g":
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        params[path] = Tensor(data, requires_grad=True)
    return params


def _linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]


def _attention(q_in: Tensor, kv_in: Tensor, params: ModelParams, prefix: str, n_heads: int) -> Tensor:
    """Multi-head attention of q_in rows over kv_in rows."""
    m, dm = q_in.shape
    k = kv_in.shape[0]
    dh = dm // n_heads

    def heads(x: Tensor, n: int, which: str) -> Tensor:
        proj = x @ params[f"{prefix}.w{which}"] + params[f"{prefix}.b{which}"]
        return T.transpose(T.reshape(proj, (n, n_heads, dh)), (1, 0, 2))

    qh = heads(q_in, m, "q")
    kh = heads(kv_in, k, "k")
    vh = heads(kv_in, k, "v")
    scores = T.matmul(qh, T.transpose(kh, (0, 2, 1))) * (1.0 / math.sqrt(dh))
    att = T.softmax(scores, axis=-1)
    mixed = T.matmul(att, vh)
    merged = T.reshape(T.transpose(mixed, (1, 0, 2)), (m, dm))
    return merged @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def _ffw(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    h = T.gelu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    return h @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _ln(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return T.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def encode_samples(samples: SampleSet, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Permutation-equivariant embeddings of the conditioning samples, [K, d_model].

    K = 0 returns an empty [0, d_model] tensor without running the stack.
    """
    if len(samples) == 0:
        return Tensor(np.zeros((0, cfg.d_model)))
    ff = fourier_features(samples.positions, cfg.n_fourier_octaves)
    x = _linear(Tensor(ff), params, "enc.embed_pos") + _linear(
        Tensor(samples.values), params, "enc.embed_val"
    )
    for i in range(cfg.n_enc_layers):
        pre = f"enc.{i}"
        h = _ln(x, params, f"{pre}.ln1")
        x = x + _attention(h, h, params, f"{pre}.attn", cfg.n_heads)
        x = x + _ffw(_ln(x, params, f"{pre}.ln2"), params, f"{pre}.ffw")
    return _ln(x, params, "enc.out_ln")


def predict(
    queries: QueryBatch,
    samples: SampleSet,
    params: ModelParams,
    cfg: ModelConfig,
    layout: BinLayout,
) -> DistParams:
    """Value distribution at each query position given the sample set.

    Returns batched DistParams with one entry per query. Each entry is a
    function of its own position and the sample set only: queries never
    attend to each other, so batching is exact.
    """
    if queries.positions.shape[1] != cfg.pos_dim:
        raise ConfigError(f"query positions have dim {queries.positions.shape[1]}, model expects {cfg.pos_dim}")
    if len(samples) and samples.positions.shape[1] != cfg.pos_dim:
        raise ConfigError(f"sample positions have dim {samples.positions.shape[1]}, model expects {cfg.pos_dim}")
    if len(samples) and samples.values.shape[1] != cfg.value_dim:
        raise ConfigError(f"sample values have dim {samples.values.shape[1]}, model expects {cfg.value_dim}")

    memory = encode_samples(samples, params, cfg) if len(samples) else None
    ff = fourier_features(queries.positions, cfg.n_fourier_octaves)
    x = _linear(Tensor(ff), params, "dec.embed_pos")
    for i in range(cfg.n_dec_layers):
        pre = f"dec.{i}"
        if memory is not None:
            x = x + _attention(_ln(x, params, f"{pre}.ln1"), memory, params, f"{pre}.attn", cfg.n_heads)
        x = x + _ffw(_ln(x, params, f"{pre}.ln2"), params, f"{pre}.ffw")
    x = _ln(x, params, "dec.out_ln")
    raw = _linear(x, params, "head")
    return head_to_params(T.reshape(raw, (len(queries), cfg.n_bins, cfg.value_dim + 2)), layout)

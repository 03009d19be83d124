"""Mean-signal inference and randomized-order autoregressive generation.

Generation draws a fresh random permutation of the grid, samples the first
n_prime locations one at a time (each conditioned on everything sampled so
far), then fills the rest in a single batched mean prediction conditioned
on the enlarged sample set. n_prime = 0 therefore degenerates to the mean
signal and n_prime >= N to a fully autoregressive draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .distribution import BinLayout, expected_value, sample_value
from .errors import ConfigError, UsageError
from .model import ModelConfig, ModelParams, QueryBatch, SampleSet, predict
from .signals import Signal, grid_positions

DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class SamplerConfig:
    """Hybrid-generation knobs. Temperature is fixed at 1 by design."""

    n_prime: int = 2048
    order_seed: int | None = None
    clamp_observed: bool = True

    def __post_init__(self):
        if self.n_prime < 0:
            raise ConfigError(f"n_prime must be >= 0, got {self.n_prime}")


@dataclass(frozen=True)
class GenerationResult:
    signal: Signal
    order: np.ndarray
    n_autoregressive: int


def _mean_fill(
    s: SampleSet,
    positions: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    layout: BinLayout,
    chunk_size: int,
) -> np.ndarray:
    """Expected value at each position, predicted in fixed-size chunks.

    Query independence makes the chunking invisible in exact arithmetic;
    keeping one shared implementation makes the n_prime = 0 boundary of
    sample_signal agree with infer_mean bit-for-bit as well.
    """
    out = np.empty((positions.shape[0], cfg.value_dim))
    with T.no_grad():
        for start in range(0, positions.shape[0], chunk_size):
            batch = positions[start : start + chunk_size]
            dist = predict(QueryBatch(batch), s, params, cfg, layout)
            out[start : start + batch.shape[0]] = np.asarray(expected_value(dist, layout).data)
    return out


def infer_mean(
    s: SampleSet,
    grid_shape,
    params: ModelParams,
    cfg: ModelConfig,
    layout: BinLayout,
    chunk_size: int = DEFAULT_CHUNK,
) -> Signal:
    """Expected signal on the grid given the observations (no sampling).

    One mean prediction per grid cell, all conditioned on s only; chunked
    to bound memory. Values are clipped into the layout's value range (the
    head's offsets are unbounded, so raw means can spill a hair outside).
    """
    if len(s) < 1:
        raise UsageError("infer_mean needs at least one observed sample")
    vals = _mean_fill(s, grid_positions(grid_shape), params, cfg, layout, chunk_size)
    lo, hi = layout.value_range[:, 0], layout.value_range[:, 1]
    return Signal(tuple(grid_shape), np.clip(vals, lo, hi))


def _nearest_cells(positions: np.ndarray, grid_shape) -> np.ndarray:
    """Flat row-major index of the cell center nearest each position."""
    strides = np.cumprod((1,) + tuple(grid_shape)[::-1][:-1])[::-1]
    idx = np.zeros(positions.shape[0], dtype=np.int64)
    for a, n in enumerate(grid_shape):
        t = (positions[:, a] + 1.0) * 0.5 * n - 0.5
        idx += np.clip(np.rint(t), 0, n - 1).astype(np.int64) * strides[a]
    return idx


def sample_signal(
    s0: SampleSet,
    grid_shape,
    params: ModelParams,
    cfg: ModelConfig,
    layout: BinLayout,
    sampler: SamplerConfig,
    rng: np.random.Generator,
    chunk_size: int = DEFAULT_CHUNK,
) -> GenerationResult:
    """Draw one signal consistent with the observations.

    The conditioning set grows by one sample per autoregressive step, so
    step n sees |s0| + n - 1 samples. Remaining cells are filled with the
    mean conditioned on s0 plus everything sampled. With clamp_observed,
    cells coinciding with an observation (nearest cell) keep the observed
    value verbatim.
    """
    if len(s0) < 1:
        raise UsageError("sample_signal needs at least one observed sample")
    grid_shape = tuple(grid_shape)
    n = int(np.prod(grid_shape))
    positions = grid_positions(grid_shape)
    order_rng = rng if sampler.order_seed is None else np.random.default_rng(sampler.order_seed)
    order = order_rng.permutation(n)
    n_auto = min(sampler.n_prime, n)

    out = np.empty((n, cfg.value_dim))
    cond = s0
    with T.no_grad():
        for j in range(n_auto):
            cell = int(order[j])
            dist = predict(QueryBatch(positions[cell][None]), cond, params, cfg, layout)
            v = sample_value(dist[0], layout, rng)
            out[cell] = v
            cond = cond.extended(positions[cell], v)

    rest = np.sort(order[n_auto:])  # canonical order: fill order is irrelevant by query independence
    if rest.size:
        out[rest] = _mean_fill(cond, positions[rest], params, cfg, layout, chunk_size)

    lo, hi = layout.value_range[:, 0], layout.value_range[:, 1]
    if sampler.clamp_observed:
        cells = _nearest_cells(s0.positions, grid_shape)
        out[cells] = s0.values
    out = np.clip(out, lo, hi)
    return GenerationResult(Signal(grid_shape, out), order, n_auto)


@dataclass(frozen=True)
class QuerySummary:
    """Per-bin distribution readout at one position, plus its mean."""

    q: np.ndarray              # [B]
    center_plus_mu: np.ndarray  # [B, d]
    sigma: np.ndarray          # [B]
    expected: np.ndarray       # [d]


def query_point(
    x: np.ndarray,
    s: SampleSet,
    params: ModelParams,
    cfg: ModelConfig,
    layout: BinLayout,
) -> QuerySummary:
    """Full distribution summary at a single position."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    with T.no_grad():
        dist = predict(QueryBatch(x), s, params, cfg, layout)
        single = dist[0]
        expected = np.asarray(expected_value(single, layout).data)
    return QuerySummary(
        q=np.asarray(single.q.data, dtype=np.float64).copy(),
        center_plus_mu=np.asarray(single.mu.data, dtype=np.float64) + layout.centers,
        sigma=np.asarray(single.sigma.data, dtype=np.float64).copy(),
        expected=expected.astype(np.float64),
    )

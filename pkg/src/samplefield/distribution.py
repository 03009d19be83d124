"""Binned mixture-of-Gaussians value distributions.

A predicted distribution over values in R^d is a set of B bins with fixed
centers; the head assigns each bin a probability q^b, a mean offset mu^b
and a scale sigma^b. Scoring a value uses only the bin closest to it:

    log p(v) = log q* - alpha * (log sigma* + ||v - c* - mu*||^2 / sigma*^2)

where ``*`` marks the closest bin. The expected value has the closed form
sum_b q^b (c^b + mu^b).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

SIGMA_MIN = 1e-3
SIGMA_MAX = 1.0

DEFAULT_ALPHA = 0.1

_LATTICE_CAP = 1 << 20


@dataclass(frozen=True)
class BinLayout:
    """Fixed bin centers over the value space.

    centers: [B, d] array, all within ``value_range``.
    value_range: [d, 2] array of per-channel (lo, hi).
    """

    centers: np.ndarray
    value_range: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.centers.shape[0]

    @property
    def value_dim(self) -> int:
        return self.centers.shape[1]


def _as_range(value_range, d: int) -> np.ndarray:
    r = np.asarray(value_range, dtype=np.float64)
    if r.shape == (2,):
        r = np.tile(r, (d, 1))
    if r.shape != (d, 2) or not np.all(r[:, 0] < r[:, 1]):
        raise ConfigError(f"value_range must be (lo, hi) or [d, 2] with lo < hi, got {value_range!r}")
    return r


def _uniform_centers(n: int, lo: float, hi: float) -> np.ndarray:
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


def make_bins(
    n_bins: int,
    value_dim: int,
    value_range,
    training_values: np.ndarray | None = None,
    seed: int = 0,
) -> BinLayout:
    """Place ``n_bins`` centers over the value space.

    1-D values get exactly uniform spacing. Multi-channel values use
    k-means over ``training_values`` when provided (fixed seed, 20 Lloyd
    iterations), otherwise the first ``n_bins`` points of a uniform
    lattice.
    """
    if n_bins < 1:
        raise ConfigError(f"bin count must be >= 1, got {n_bins}")
    rng_range = _as_range(value_range, value_dim)
    if value_dim == 1:
        centers = _uniform_centers(n_bins, rng_range[0, 0], rng_range[0, 1])[:, None]
    elif training_values is not None:
        centers = _kmeans_centers(np.asarray(training_values, dtype=np.float64), n_bins, seed)
    else:
        if n_bins > _LATTICE_CAP:
            raise ConfigError(f"bin count {n_bins} exceeds lattice capacity {_LATTICE_CAP}")
        per_dim = 1
        while per_dim**value_dim < n_bins:
            per_dim += 1
        axes = [_uniform_centers(per_dim, lo, hi) for lo, hi in rng_range]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, value_dim)
        centers = grid[:n_bins]
    return BinLayout(centers=np.ascontiguousarray(centers, dtype=np.float64), value_range=rng_range)


def _kmeans_centers(values: np.ndarray, k: int, seed: int, iters: int = 20) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if values.shape[0] < k:
        raise ConfigError(f"k-means needs at least {k} training values, got {values.shape[0]}")
    centers = values[rng.choice(values.shape[0], size=k, replace=False)].copy()
    for _ in range(iters):
        d2 = ((values[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        assign = d2.argmin(axis=1)
        for j in range(k):
            members = values[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                # Re-seed empty clusters so centers stay pairwise distinct.
                centers[j] = values[rng.integers(values.shape[0])]
    return centers


@dataclass
class DistParams:
    """Distribution parameters, optionally with a leading query-batch axis.

    q: [..., B] bin probabilities, mu: [..., B, d] offsets,
    sigma: [..., B] scales in [SIGMA_MIN, SIGMA_MAX].
    """

    q: Tensor
    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        self.q = self.q if isinstance(self.q, Tensor) else Tensor(self.q)
        self.mu = self.mu if isinstance(self.mu, Tensor) else Tensor(self.mu)
        self.sigma = self.sigma if isinstance(self.sigma, Tensor) else Tensor(self.sigma)

    @property
    def batched(self) -> bool:
        return self.q.ndim == 2

    def __len__(self) -> int:
        if not self.batched:
            raise TypeError("len() on unbatched DistParams")
        return self.q.shape[0]

    def __getitem__(self, i: int) -> "DistParams":
        if not self.batched:
            raise TypeError("indexing on unbatched DistParams")
        return DistParams(self.q[i], self.mu[i], self.sigma[i])

    def validate(self, atol: float = 1e-6) -> None:
        q = self.q.data
        if np.any(q < -atol) or not np.allclose(q.sum(axis=-1), 1.0, atol=atol):
            raise ValueError("bin probabilities must be nonnegative and sum to 1")
        s = self.sigma.data
        if np.any(s < SIGMA_MIN - 1e-9) or np.any(s > SIGMA_MAX + 1e-9):
            raise ValueError(f"sigma out of [{SIGMA_MIN}, {SIGMA_MAX}]")


def closest_bin(v: np.ndarray, layout: BinLayout) -> np.ndarray:
    """Index of the closest center per value; lowest index wins ties."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    d2 = ((v[:, None, :] - layout.centers[None, :, :]) ** 2).sum(-1)
    return d2.argmin(axis=1)


def log_likelihood(v_star, params: DistParams, layout: BinLayout, alpha: float = DEFAULT_ALPHA) -> Tensor:
    """Closest-bin log-likelihood of true values under ``params``.

    Accepts a single value [d] (returns a scalar tensor) or a batch [Q, d]
    paired with batched params (returns [Q]). Values are assumed to lie
    within the layout's value range. Differentiable in ``params``.
    """
    v = np.asarray(v_star, dtype=np.float64)
    single = not params.batched
    v2 = v.reshape(1, -1) if single else v.reshape(v.shape[0], -1)
    bstar = closest_bin(v2, layout)

    q = _lift(params.q) if single else params.q
    mu = _lift(params.mu) if single else params.mu
    sigma = _lift(params.sigma) if single else params.sigma

    q_star = T.gather(q, bstar[:, None], axis=-1)[:, 0]
    sig_star = T.gather(sigma, bstar[:, None], axis=-1)[:, 0]
    d = layout.value_dim
    idx = np.repeat(bstar[:, None, None], d, axis=2)
    mu_star = T.gather(mu, idx, axis=1)[:, 0, :]

    resid = Tensor(v2 - layout.centers[bstar]) - mu_star
    sq = T.tsum(T.square(resid), axis=-1)
    ll = T.log(q_star) - alpha * (T.log(sig_star) + sq / T.square(sig_star))
    return ll[0] if single else ll


def _lift(t: Tensor) -> Tensor:
    return t[None, ...]


def expected_value(params: DistParams, layout: BinLayout) -> Tensor:
    """E[v] = sum_b q^b (c^b + mu^b); shape [d] or [Q, d]."""
    means = params.mu + Tensor(layout.centers)
    return T.tsum(params.q[..., None] * means, axis=-2)


def sample_value(params: DistParams, layout: BinLayout, rng: np.random.Generator) -> np.ndarray:
    """Draw one value per query: bin ~ Categorical(q), then the bin's Gaussian.

    Samples are clamped to the layout's value range. Returns [d] or [Q, d].
    """
    q = params.q.data
    mu = params.mu.data
    sigma = params.sigma.data
    single = q.ndim == 1
    if single:
        q, mu, sigma = q[None], mu[None], sigma[None]
    nq, d = mu.shape[0], mu.shape[-1]
    cum = np.cumsum(q, axis=-1)
    u = rng.random((nq, 1)) * cum[:, -1:]
    bins = np.minimum((cum < u).sum(axis=-1), q.shape[-1] - 1)
    centers = layout.centers[bins]
    noise = rng.standard_normal((nq, d))
    out = centers + mu[np.arange(nq), bins] + sigma[np.arange(nq), bins, None] * noise
    lo, hi = layout.value_range[:, 0], layout.value_range[:, 1]
    out = np.clip(out, lo, hi)
    return out[0] if single else out


def head_to_params(raw: Tensor, layout: BinLayout) -> DistParams:
    """Map raw head output [..., B, d+2] to normalized DistParams.

    Per bin the raw row is (logit, mu[0:d], log_sigma). Probabilities are a
    softmax over bins; sigma is exp(log_sigma) clamped to
    [SIGMA_MIN, SIGMA_MAX].
    """
    B, d = layout.n_bins, layout.value_dim
    if raw.shape[-1] == B * (d + 2) and (raw.ndim == 1 or raw.shape[-1] != d + 2):
        raw = T.reshape(raw, raw.shape[:-1] + (B, d + 2))
    if raw.shape[-2:] != (B, d + 2):
        raise ShapeError(f"head output {raw.shape} does not match layout [{B}, {d + 2}]")
    q = T.softmax(raw[..., 0], axis=-1)
    mu = raw[..., 1 : 1 + d]
    sigma = T.clip(T.exp(raw[..., 1 + d]), SIGMA_MIN, SIGMA_MAX)
    return DistParams(q=q, mu=mu, sigma=sigma)

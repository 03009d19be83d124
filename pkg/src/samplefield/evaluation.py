"""Reconstruction metrics for trained models.

Shared by the eval subcommand and the test suite: per-size sweeps of mean
MSE, sampled-reconstruction MSE, average predictive sigma, and held-out
NLL, plus the constant-Gaussian reference every trained model should beat.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .distribution import DEFAULT_ALPHA, log_likelihood
from .inference import SamplerConfig, infer_mean, sample_signal
from .model import QueryBatch, predict
from .signals import Signal, grid_positions, sample_set_from_grid
from .training import Checkpoint, nll_loss


def constant_gaussian_nll(train_values: np.ndarray, eval_values: np.ndarray, alpha: float = DEFAULT_ALPHA) -> float:
    """Score of the best single Gaussian fit to the training values.

    The reference model ignores positions entirely: one bin at the fitted
    mean with the fitted sigma, scored under the same alpha-weighted rule
    as the learned head (q = 1, so the bin term contributes nothing).
    """
    train_values = np.asarray(train_values, dtype=np.float64).reshape(-1)
    eval_values = np.asarray(eval_values, dtype=np.float64).reshape(-1)
    m = train_values.mean()
    s = max(train_values.std(), 1e-3)
    ll = -alpha * (np.log(s) + (eval_values - m) ** 2 / s**2)
    return float(-ll.mean())


def signal_metrics(
    sig: Signal,
    s_size: int,
    ckpt: Checkpoint,
    rng: np.random.Generator,
    num_draws: int = 3,
    n_prime: int | None = None,
) -> dict:
    """All four metrics for one signal at one conditioning-set size.

    The conditioning set is s_size distinct grid cells; queries are every
    grid center scored against the stored values.
    """
    n = sig.n_locations
    cells = rng.choice(n, size=min(s_size, n), replace=False)
    s = sample_set_from_grid(sig, cells)
    params, mcfg, layout = ckpt.params, ckpt.model_cfg, ckpt.layout

    mean_sig = infer_mean(s, sig.grid_shape, params, mcfg, layout)
    mean_mse = float(np.mean((mean_sig.values - sig.values) ** 2))

    sample_mse = 0.0
    for _ in range(num_draws):
        sampler = SamplerConfig(n_prime=n if n_prime is None else n_prime)
        out = sample_signal(s, sig.grid_shape, params, mcfg, layout, sampler, rng)
        sample_mse += float(np.mean((out.signal.values - sig.values) ** 2))
    sample_mse /= num_draws

    with T.no_grad():
        dist = predict(QueryBatch(grid_positions(sig.grid_shape)), s, params, mcfg, layout)
        nll = float(nll_loss([dist], [sig.values], layout).item())
        q = np.asarray(dist.q.data, dtype=np.float64)
        sigma = np.asarray(dist.sigma.data, dtype=np.float64)
        mean_sigma = float(np.mean(np.sum(q * sigma, axis=-1)))

    return {
        "s_size": s_size,
        "mean_mse": mean_mse,
        "sample_mse": sample_mse,
        "mean_sigma": mean_sigma,
        "eval_nll": nll,
    }


def sweep_sizes(
    signals,
    sizes,
    ckpt: Checkpoint,
    seed: int = 0,
    num_draws: int = 3,
    n_prime: int | None = None,
) -> list:
    """Metric rows averaged over signals, one row per conditioning size.

    Deterministic for a fixed seed: each (size, signal) pair gets its own
    seeded rng, so row order or partial runs never change the numbers.
    """
    rows = []
    for size in sizes:
        acc = {"mean_mse": 0.0, "sample_mse": 0.0, "mean_sigma": 0.0, "eval_nll": 0.0}
        for i, sig in enumerate(signals):
            rng = np.random.default_rng([seed, size, i])
            m = signal_metrics(sig, size, ckpt, rng, num_draws=num_draws, n_prime=n_prime)
            for k in acc:
                acc[k] += m[k]
        row = {k: v / len(signals) for k, v in acc.items()}
        row["s_size"] = size
        rows.append(row)
    return rows


def write_metrics_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("s_size,mean_mse,sample_mse,mean_sigma,eval_nll\n")
        for r in rows:
            f.write(
                f"{r['s_size']},{r['mean_mse']:.6f},{r['sample_mse']:.6f},"
                f"{r['mean_sigma']:.6f},{r['eval_nll']:.6f}\n"
            )


def scored_log_likelihood(dist, vstar, layout, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Per-query log-likelihood as plain floats (no graph)."""
    with T.no_grad():
        ll = log_likelihood(np.asarray(vstar), dist, layout, alpha)
    return np.asarray(ll.data, dtype=np.float64)

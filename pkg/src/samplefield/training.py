"""Self-supervised training and checkpointing.

Each step draws (conditioning set, query batch) pairs from a handful of
signals, scores the predicted distributions at the true query values, and
minimizes the mean negative log-likelihood with Adam under a cosine
learning-rate decay. Checkpoints use a small language-neutral binary
format that round-trips predictions bit-exactly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .distribution import DEFAULT_ALPHA, BinLayout, log_likelihood, make_bins
from .errors import FormatError, TrainingAbort, UsageError
from .model import ModelConfig, ModelParams, init_params, param_schema, predict
from .signals import DrawConfig, Signal, draw_sq
from .tensor import Tensor

CKPT_MAGIC = b"PXTF"
CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    draw: DrawConfig
    alpha: float = DEFAULT_ALPHA
    lr: float = 3e-4
    lr_min: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 1000
    signals_per_step: int = 4
    seed: int = 0
    eval_every: int = 100
    eval_signals: int = 16

    def __post_init__(self):
        if self.alpha <= 0:
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if self.lr <= 0:
            raise UsageError(f"lr must be positive, got {self.lr}")


def nll_loss(dist_list, vstar_list, layout: BinLayout, alpha: float = DEFAULT_ALPHA) -> Tensor:
    """Mean negative log-likelihood over every query in the lists."""
    if len(dist_list) == 0:
        raise UsageError("nll_loss: empty batch")
    if len(dist_list) != len(vstar_list):
        raise UsageError(f"nll_loss: {len(dist_list)} distributions vs {len(vstar_list)} targets")
    total = None
    count = 0
    for dist, vstar in zip(dist_list, vstar_list):
        ll = log_likelihood(np.asarray(vstar), dist, layout, alpha)
        count += max(ll.size, 1)
        s = T.tsum(ll) if ll.ndim else ll
        total = s if total is None else total + s
    return total * (-1.0 / count)


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Cosine decay from cfg.lr (step 0) to cfg.lr_min (last step)."""
    if cfg.steps <= 1:
        return cfg.lr
    progress = step / (cfg.steps - 1)
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


class Adam:
    """Standard Adam with bias correction; state arrays match param dtypes."""

    def __init__(self, params: ModelParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params: ModelParams, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for path, p in params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[path]
            v = self.v[path]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.grad = None


def train_step(
    params: ModelParams,
    opt: Adam,
    batch,
    tcfg: TrainConfig,
    mcfg: ModelConfig,
    layout: BinLayout,
    rng,
    lr: float | None = None,
    step: int | None = None,
) -> float:
    """One optimization step over a batch of signals; returns the loss.

    Per signal: draw (S, Q), predict, score. The losses are averaged
    across signals, backpropagated, and applied with Adam. A non-finite
    loss aborts before any parameter is touched.
    """
    per_signal = []
    sizes = []
    for sig in batch:
        s, q, vstar = draw_sq(sig, tcfg.draw, rng)
        dist = predict(q, s, params, mcfg, layout)
        per_signal.append(nll_loss([dist], [vstar], layout, tcfg.alpha))
        sizes.append(len(s))
    loss = per_signal[0]
    for extra in per_signal[1:]:
        loss = loss + extra
    loss = loss * (1.0 / len(per_signal))
    loss_val = float(loss.item())
    if not math.isfinite(loss_val):
        T.clear_tape()
        where = f"step {step}" if step is not None else "current step"
        raise TrainingAbort(f"non-finite loss {loss_val} at {where} (|S| per signal: {sizes})")
    T.backward(loss)
    opt.step(params, lr_at(tcfg, step or 0) if lr is None else lr)
    return loss_val


def _eval_nll(eval_set, params, tcfg, mcfg, layout, eval_seed: int) -> float:
    """Mean held-out NLL on fixed draws (same positions every call)."""
    rng = np.random.default_rng(eval_seed)
    total = 0.0
    with T.no_grad():
        for sig in eval_set:
            s, q, vstar = draw_sq(sig, tcfg.draw, rng)
            dist = predict(q, s, params, mcfg, layout)
            total += float(nll_loss([dist], [vstar], layout, tcfg.alpha).item())
    return total / len(eval_set)


def train(dataset, tcfg: TrainConfig, mcfg: ModelConfig, log_path=None) -> "Checkpoint":
    """Full training run; returns the final checkpoint.

    dataset is either a sequence of Signals (10% held out by fixed-seed
    shuffle) or a callable rng -> Signal, in which case held-out instances
    are generated fresh. Rows "step,loss,eval_nll" are written to log_path
    every eval_every steps.
    """
    rng = np.random.default_rng(tcfg.seed)
    value_range = (-1.0, 1.0)
    if callable(dataset):
        eval_rng = np.random.default_rng(tcfg.seed + 1)
        eval_set = [dataset(eval_rng) for _ in range(tcfg.eval_signals)]
        pick = lambda: dataset(rng)  # noqa: E731
        if eval_set:
            value_range = eval_set[0].value_range
    else:
        signals = list(dataset)
        if not signals:
            raise UsageError("train: empty dataset")
        value_range = signals[0].value_range
        order = np.random.default_rng(tcfg.seed + 1).permutation(len(signals))
        n_eval = max(1, len(signals) // 10)
        eval_set = [signals[i] for i in order[:n_eval]]
        train_set = [signals[i] for i in order[n_eval:]] or signals
        pick = lambda: train_set[int(rng.integers(len(train_set)))]  # noqa: E731

    vr = np.tile(np.asarray(value_range, dtype=np.float64), (mcfg.value_dim, 1))
    layout = make_bins(mcfg.n_bins, mcfg.value_dim, vr)
    params = init_params(mcfg, seed=tcfg.seed)
    opt = Adam(params, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    eval_seed = tcfg.seed + 2

    rows = []
    for step in range(tcfg.steps):
        batch = [pick() for _ in range(tcfg.signals_per_step)]
        loss = train_step(params, opt, batch, tcfg, mcfg, layout, rng, step=step)
        if tcfg.eval_every > 0 and (step + 1) % tcfg.eval_every == 0:
            rows.append((step + 1, loss, _eval_nll(eval_set, params, tcfg, mcfg, layout, eval_seed)))

    if log_path is not None:
        with open(log_path, "w") as f:
            f.write("step,loss,eval_nll\n")
            for r in rows:
                f.write(f"{r[0]},{r[1]:.6f},{r[2]:.6f}\n")

    return Checkpoint(
        model_cfg=mcfg,
        layout=layout,
        params=params,
        opt=opt,
        seed=tcfg.seed,
        step=tcfg.steps,
        value_range=tuple(value_range),
        eval_log=rows,
    )


@dataclass
class Checkpoint:
    """Everything needed to reproduce predictions (and resume training)."""

    model_cfg: ModelConfig
    layout: BinLayout
    params: ModelParams
    opt: Adam | None
    seed: int
    step: int
    value_range: tuple = (-1.0, 1.0)
    eval_log: list = field(default_factory=list)


def _write_section(f, path: str, arr: np.ndarray) -> None:
    name = path.encode("utf-8")
    f.write(struct.pack("<I", len(name)))
    f.write(name)
    f.write(struct.pack("<I", arr.ndim))
    for extent in arr.shape:
        f.write(struct.pack("<I", extent))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the PXTF binary checkpoint.

    Layout: magic "PXTF", u32 format version, u64 metadata byte length,
    UTF-8 JSON metadata, then one section per array: u32 path length,
    path, u32 rank, u32 extents, little-endian float32 payload.
    """
    meta = {
        "format_version": CKPT_VERSION,
        "model": asdict(ckpt.model_cfg),
        "layout": {
            "centers": ckpt.layout.centers.tolist(),
            "value_range": ckpt.layout.value_range.tolist(),
        },
        "value_range": list(ckpt.value_range),
        "seed": ckpt.seed,
        "step": ckpt.step,
        "opt_t": None if ckpt.opt is None else ckpt.opt.t,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name, p in sorted(ckpt.params.items()):
            _write_section(f, f"param.{name}", p.data)
        if ckpt.opt is not None:
            for name in sorted(ckpt.opt.m):
                _write_section(f, f"adam_m.{name}", ckpt.opt.m[name])
            for name in sorted(ckpt.opt.v):
                _write_section(f, f"adam_v.{name}", ckpt.opt.v[name])


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"checkpoint truncated while reading {what} (wanted {n} bytes, got {len(buf)})")
    return buf


def load_checkpoint(path) -> Checkpoint:
    """Read a PXTF checkpoint; fails cleanly without partial state."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != CKPT_MAGIC:
            raise FormatError(f"{path}: not a PXTF checkpoint")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(f, 8, "metadata length"))
        try:
            meta = json.loads(_read_exact(f, meta_len, "metadata"))
        except ValueError as e:
            raise FormatError(f"{path}: metadata is not valid JSON ({e})") from None

        sections: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError("checkpoint truncated inside a section header")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(f, name_len, "section name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, f"rank of section {name}"))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4, f"extents of section {name}"))[0] for _ in range(rank)
            )
            count = int(np.prod(shape)) if shape else 1
            payload = _read_exact(f, 4 * count, f"payload of section {name}")
            sections[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()

    mcfg = ModelConfig(**meta["model"])
    layout = BinLayout(
        centers=np.asarray(meta["layout"]["centers"], dtype=np.float64),
        value_range=np.asarray(meta["layout"]["value_range"], dtype=np.float64),
    )
    schema = param_schema(mcfg)
    params: ModelParams = {}
    for name in schema:
        key = f"param.{name}"
        if key not in sections:
            raise FormatError(f"{path}: missing parameter section {key}")
        params[name] = Tensor(sections[key], requires_grad=True, dtype="keep")

    opt = None
    if meta.get("opt_t") is not None:
        opt = Adam(params)
        opt.t = int(meta["opt_t"])
        for name in schema:
            mk, vk = f"adam_m.{name}", f"adam_v.{name}"
            if mk not in sections or vk not in sections:
                raise FormatError(f"{path}: missing optimizer section for {name}")
            opt.m[name] = sections[mk]
            opt.v[name] = sections[vk]

    return Checkpoint(
        model_cfg=mcfg,
        layout=layout,
        params=params,
        opt=opt,
        seed=int(meta["seed"]),
        step=int(meta["step"]),
        value_range=tuple(meta["value_range"]),
    )

"""Command-line front end: train, generate, eval, serve.

Configuration is a flat JSON object of dotted keys merged as
flags > config file > defaults. Unknown keys are rejected, and every
artifact-producing command writes the fully resolved configuration next
to its outputs so a run can be reproduced from its own artifacts.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import SampleFieldError, TrainingAbort, UsageError
from .evaluation import sweep_sizes, write_metrics_csv
from .inference import SamplerConfig, infer_mean, sample_signal
from .model import ModelConfig, SampleSet
from .signals import DrawConfig, Signal, gen_polynomial, load_idx, write_pgm, write_ppm
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

DEFAULTS = {
    "data.task": "idx",
    "data.path": None,
    "data.resolution": None,
    "data.degree": 6,
    "data.n_cells": 128,
    "data.limit": None,
    "model.d_model": 128,
    "model.n_heads": 4,
    "model.n_enc_layers": 4,
    "model.n_dec_layers": 2,
    "model.n_fourier_octaves": 8,
    "model.n_bins": 16,
    "draw.s_min": 4,
    "draw.s_max": 2048,
    "draw.q_size": 2048,
    "draw.log_uniform": True,
    "train.alpha": 0.1,
    "train.lr": 3e-4,
    "train.lr_min": 3e-5,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.adam_eps": 1e-8,
    "train.steps": 1000,
    "train.signals_per_step": 4,
    "train.seed": 0,
    "train.eval_every": 100,
    "train.eval_signals": 16,
    "sample.n_prime": 2048,
    "sample.clamp_observed": True,
    "eval.sizes": [4, 16, 64, 256],
    "eval.num_images": 32,
    "eval.num_draws": 3,
    "serve.host": "127.0.0.1",
    "serve.port": 8000,
    "serve.session_cap": 64,
}

# The 1-d polynomial protocol is small in every way; picking the task
# swaps in these before file/flag overrides apply.
POLY_DEFAULTS = {
    "model.n_bins": 1,
    "draw.s_min": 4,
    "draw.s_max": 20,
    "draw.q_size": 20,
    "draw.log_uniform": False,
}


def resolve_config(task: str | None, config_path: str | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if task == "polynomial":
        cfg.update(POLY_DEFAULTS)
        cfg["data.task"] = "polynomial"
    if config_path is not None:
        try:
            with open(config_path) as f:
                loaded = json.load(f)
        except OSError as e:
            raise UsageError(f"cannot read config file: {e}") from None
        except ValueError as e:
            raise UsageError(f"{config_path}: invalid JSON ({e})") from None
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"{config_path}: unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _parse_grid(text: str) -> tuple:
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise UsageError(f"bad grid size {text!r}; want e.g. 16x16 or 128") from None
    if not parts or any(p < 1 for p in parts):
        raise UsageError(f"bad grid size {text!r}")
    return tuple(parts)


def _resolution(cfg) -> tuple | None:
    r = cfg["data.resolution"]
    if r is None:
        return None
    if isinstance(r, int):
        return (r, r)
    if isinstance(r, str):
        parts = _parse_grid(r)
        return parts * 2 if len(parts) == 1 else parts
    return tuple(int(v) for v in r)


def _model_config(cfg: dict, pos_dim: int, value_dim: int) -> ModelConfig:
    return ModelConfig(
        pos_dim=pos_dim,
        value_dim=value_dim,
        n_bins=cfg["model.n_bins"],
        d_model=cfg["model.d_model"],
        n_heads=cfg["model.n_heads"],
        n_enc_layers=cfg["model.n_enc_layers"],
        n_dec_layers=cfg["model.n_dec_layers"],
        n_fourier_octaves=cfg["model.n_fourier_octaves"],
    )


def _train_config(cfg: dict) -> TrainConfig:
    draw = DrawConfig(
        s_min=cfg["draw.s_min"],
        s_max=cfg["draw.s_max"],
        q_size=cfg["draw.q_size"],
        log_uniform=cfg["draw.log_uniform"],
    )
    return TrainConfig(
        draw=draw,
        alpha=cfg["train.alpha"],
        lr=cfg["train.lr"],
        lr_min=cfg["train.lr_min"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        adam_eps=cfg["train.adam_eps"],
        steps=cfg["train.steps"],
        signals_per_step=cfg["train.signals_per_step"],
        seed=cfg["train.seed"],
        eval_every=cfg["train.eval_every"],
        eval_signals=cfg["train.eval_signals"],
    )


def _load_dataset(cfg: dict):
    """Dataset per the data.* config: signal list or generator callable."""
    if cfg["data.task"] == "polynomial":
        degree, n_cells = cfg["data.degree"], cfg["data.n_cells"]
        return lambda rng: gen_polynomial(rng, degree=degree, n_cells=n_cells), 1, 1
    if cfg["data.path"] is None:
        raise UsageError("idx task needs --data (or data.path in the config)")
    signals = load_idx(cfg["data.path"], resolution=_resolution(cfg))
    if cfg["data.limit"]:
        signals = signals[: int(cfg["data.limit"])]
    return signals, 2, 1


def _write_resolved(cfg: dict, out_dir: str) -> None:
    safe = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}
    with open(os.path.join(out_dir, "config.resolved.json"), "w") as f:
        json.dump(safe, f, indent=2, sort_keys=True)
        f.write("\n")


def read_observations(path: str, pos_dim: int, value_dim: int) -> SampleSet:
    """Parse whitespace-separated rows of x coordinates then value entries."""
    width = pos_dim + value_dim
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != width:
                raise UsageError(f"{path}:{ln}: expected {width} numbers (x then v), got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise UsageError(f"{path}:{ln}: {e}") from None
    if not rows:
        raise UsageError(f"{path}: no observations found")
    arr = np.asarray(rows)
    return SampleSet(arr[:, :pos_dim], arr[:, pos_dim:])


def _write_signal(sig: Signal, stem: str) -> str:
    """Write a signal as PGM/PPM when it is an image, else as CSV."""
    if sig.pos_dim == 2 and sig.value_dim == 1:
        write_pgm(sig, stem + ".pgm")
        return stem + ".pgm"
    if sig.pos_dim == 2 and sig.value_dim == 3:
        write_ppm(sig, stem + ".ppm")
        return stem + ".ppm"
    from .signals import grid_positions

    path = stem + ".csv"
    pos = grid_positions(sig.grid_shape)
    with open(path, "w") as f:
        f.write(",".join([f"x{i}" for i in range(sig.pos_dim)] + [f"v{i}" for i in range(sig.value_dim)]) + "\n")
        for p, v in zip(pos, sig.values):
            f.write(",".join(f"{t:.8f}" for t in (*p, *v)) + "\n")
    return path


def cmd_train(args) -> int:
    try:
        cfg = resolve_config(args.task, args.config, {
            "data.task": args.task,
            "data.path": args.data,
            "data.resolution": args.resolution,
            "train.steps": args.steps,
            "train.seed": args.seed,
        })
        dataset, pos_dim, value_dim = _load_dataset(cfg)
        mcfg = _model_config(cfg, pos_dim, value_dim)
        tcfg = _train_config(cfg)
        os.makedirs(args.out, exist_ok=True)
    except (SampleFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        _write_resolved(cfg, args.out)
        ckpt = train(dataset, tcfg, mcfg, log_path=os.path.join(args.out, "train_log.csv"))
        save_checkpoint(ckpt, os.path.join(args.out, "ckpt.pxtf"))
    except TrainingAbort as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 1
    except (SampleFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_generate(args) -> int:
    try:
        cfg = resolve_config(None, args.config, {
            "sample.n_prime": args.n_prime,
            "data.resolution": args.resolution,
        })
        ckpt = load_checkpoint(args.ckpt)
        mcfg = ckpt.model_cfg
        if (args.observe is None) == (args.from_signal is None):
            raise UsageError("need exactly one of --observe or --from-signal")
        rng = np.random.default_rng(args.seed)
        if args.observe is not None:
            s0 = read_observations(args.observe, mcfg.pos_dim, mcfg.value_dim)
            if args.grid is None:
                raise UsageError("--observe needs --grid (e.g. --grid 16x16)")
            grid_shape = _parse_grid(args.grid)
        else:
            src, _, idx = args.from_signal.partition(":")
            sig = load_idx(src, resolution=_resolution(cfg))[int(idx) if idx else 0]
            if args.num_observed < 1:
                raise UsageError("--num-observed must be >= 1 (the sampler needs a non-empty set)")
            from .signals import sample_set_from_grid

            cells = rng.choice(sig.n_locations, size=min(args.num_observed, sig.n_locations), replace=False)
            s0 = sample_set_from_grid(sig, cells)
            grid_shape = sig.grid_shape if args.grid is None else _parse_grid(args.grid)
        os.makedirs(args.out, exist_ok=True)
    except (SampleFieldError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        _write_resolved(cfg, args.out)
        mean = infer_mean(s0, grid_shape, ckpt.params, mcfg, ckpt.layout)
        artifacts = [_write_signal(mean, os.path.join(args.out, "mean"))]
        sampler = SamplerConfig(n_prime=cfg["sample.n_prime"], clamp_observed=cfg["sample.clamp_observed"])
        orders = []
        for i in range(args.num_samples):
            out = sample_signal(
                s0, grid_shape, ckpt.params, mcfg, ckpt.layout, sampler,
                np.random.default_rng([args.seed, i]),
            )
            artifacts.append(_write_signal(out.signal, os.path.join(args.out, f"sample_{i:02d}")))
            orders.append({"order": out.order.tolist(), "n_autoregressive": out.n_autoregressive})
        sidecar = {
            "seed": args.seed,
            "grid_shape": list(grid_shape),
            "observations": {"positions": s0.positions.tolist(), "values": s0.values.tolist()},
            "samples": orders,
            "artifacts": [os.path.basename(a) for a in artifacts],
        }
        with open(os.path.join(args.out, "generate.json"), "w") as f:
            json.dump(sidecar, f, indent=2)
            f.write("\n")
    except (SampleFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    try:
        cfg = resolve_config(args.task, args.config, {
            "data.task": args.task,
            "data.path": args.data,
            "data.resolution": args.resolution,
            "eval.num_images": args.num_images,
            "eval.num_draws": args.num_draws,
            "eval.sizes": [int(t) for t in args.sizes.split(",")] if args.sizes else None,
        })
        ckpt = load_checkpoint(args.ckpt)
        if cfg["data.task"] == "polynomial":
            signals = [
                gen_polynomial(np.random.default_rng([args.seed, 7, i]), degree=cfg["data.degree"], n_cells=cfg["data.n_cells"])
                for i in range(cfg["eval.num_images"])
            ]
        else:
            signals, _, _ = _load_dataset(cfg)
            signals = signals[: cfg["eval.num_images"]]
        if not signals:
            raise UsageError("no evaluation signals")
        os.makedirs(args.out, exist_ok=True)
    except (SampleFieldError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        _write_resolved(cfg, args.out)
        rows = sweep_sizes(
            signals, cfg["eval.sizes"], ckpt,
            seed=args.seed, num_draws=cfg["eval.num_draws"], n_prime=cfg["sample.n_prime"],
        )
        write_metrics_csv(rows, os.path.join(args.out, "eval.csv"))
    except (SampleFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    try:
        cfg = resolve_config(None, args.config, {
            "serve.host": args.host,
            "serve.port": args.port,
            "serve.session_cap": args.session_cap,
        })
        checkpoints = {}
        for spec_arg in args.ckpt:
            name, eq, path = spec_arg.partition("=")
            if not eq:
                name, path = os.path.splitext(os.path.basename(spec_arg))[0], spec_arg
            checkpoints[name] = load_checkpoint(path)
        if not checkpoints:
            raise UsageError("serve needs at least one --ckpt")
    except (SampleFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        import uvicorn

        from .service import create_app

        app = create_app(checkpoints, session_cap=cfg["serve.session_cap"])
        uvicorn.run(app, host=cfg["serve.host"], port=cfg["serve.port"], log_level="info")
    except Exception as e:  # noqa: BLE001 - surface anything from the server stack
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samplefield", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--task", choices=["polynomial", "idx"], default=None)
    p.add_argument("--config")
    p.add_argument("--data", help="IDX image file (idx task)")
    p.add_argument("--resolution", help="box-average images to this size, e.g. 16 or 16x16")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="mean + sampled signals from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--observe", help="text file of observations: x coords then value entries per line")
    p.add_argument("--from-signal", help="IDX file with optional index, e.g. digits.idx:3")
    p.add_argument("--num-observed", type=int, default=32)
    p.add_argument("--num-samples", type=int, default=3)
    p.add_argument("--n-prime", type=int, default=None)
    p.add_argument("--grid", help="output grid, e.g. 16x16 (defaults to the source signal's)")
    p.add_argument("--resolution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("eval", help="reconstruction metrics across conditioning sizes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--task", choices=["polynomial", "idx"], default=None)
    p.add_argument("--data")
    p.add_argument("--resolution")
    p.add_argument("--sizes", help="comma-separated |S| sweep, default 4,16,64,256")
    p.add_argument("--num-images", type=int)
    p.add_argument("--num-draws", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="HTTP API over one or more checkpoints")
    p.add_argument("--ckpt", action="append", default=[], help="checkpoint path or name=path; repeatable")
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--session-cap", type=int)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

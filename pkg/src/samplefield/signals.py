"""Discrete signals on grids, continuous-coordinate sampling, and dataset I/O.

A Signal is a grid of values mapped affinely onto [-1, 1]^p with cell-center
alignment: along an axis with n cells, cell i sits at -1 + 2*(i + 0.5)/n.
Everything downstream (training draws, generation rasters, the service)
shares this one convention.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .model import QueryBatch, SampleSet

IDX_IMAGE_MAGIC = 0x00000803
_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class Signal:
    """Values on a p-dimensional grid, row-major, one row per location.

    values has shape [N, d] with N = product(grid_shape). meta carries
    free-form diagnostics (e.g. the rescale factor of a generated signal)
    and never affects behavior.
    """

    grid_shape: tuple
    values: np.ndarray
    value_range: tuple = (-1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.grid_shape)
        if not shape or any(n < 1 for n in shape):
            raise InputError(f"bad grid shape {shape}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        n = int(np.prod(shape))
        if vals.ndim != 2 or vals.shape[0] != n:
            raise InputError(f"expected {n} value rows for grid {shape}, got array of shape {vals.shape}")
        lo, hi = self.value_range
        if vals.size and (vals.min() < lo - _RANGE_TOL or vals.max() > hi + _RANGE_TOL):
            raise InputError(f"values outside declared range [{lo}, {hi}]")
        # Tiny float spill from resampling is tolerated above, then removed
        # so the stored invariant is exact.
        vals = np.clip(vals, lo, hi)
        object.__setattr__(self, "grid_shape", shape)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "value_range", (float(lo), float(hi)))

    @property
    def pos_dim(self) -> int:
        return len(self.grid_shape)

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    def as_grid(self) -> np.ndarray:
        """Values reshaped to grid_shape + (d,)."""
        return self.values.reshape(self.grid_shape + (self.value_dim,))


@dataclass(frozen=True)
class DrawConfig:
    """How (S, Q) pairs are drawn from a signal during training."""

    s_min: int
    s_max: int
    q_size: int
    log_uniform: bool = True

    def __post_init__(self):
        if not (1 <= self.s_min <= self.s_max):
            raise ConfigError(f"need 1 <= s_min <= s_max, got [{self.s_min}, {self.s_max}]")
        if self.q_size < 1:
            raise ConfigError(f"q_size must be >= 1, got {self.q_size}")


def grid_positions(grid_shape) -> np.ndarray:
    """Cell-center coordinates for every location, row-major, [N, p]."""
    axes = [-1.0 + 2.0 * (np.arange(n) + 0.5) / n for n in grid_shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def sample_bilinear(sig: Signal, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of the signal at continuous positions.

    Accepts one position [p] or a batch [M, p]. Coordinates beyond the
    outermost cell centers clamp to the edge value, so the interpolant is
    defined on all of [-1, 1]^p (and is exact at cell centers).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != sig.pos_dim:
        raise InputError(f"positions of shape {x.shape} do not match a {sig.pos_dim}-d signal")
    if not np.isfinite(pts).all():
        raise InputError("non-finite position")

    shape = sig.grid_shape
    p = sig.pos_dim
    # Continuous cell index: center of cell i maps to exactly i.
    lows = np.empty((pts.shape[0], p), dtype=np.int64)
    fracs = np.empty_like(pts)
    for a, n in enumerate(shape):
        t = np.clip((pts[:, a] + 1.0) * 0.5 * n - 0.5, 0.0, n - 1.0)
        i0 = np.minimum(np.floor(t).astype(np.int64), max(n - 2, 0))
        lows[:, a] = i0
        fracs[:, a] = t - i0 if n > 1 else 0.0

    strides = np.cumprod((1,) + shape[::-1][:-1])[::-1]
    out = np.zeros((pts.shape[0], sig.value_dim))
    for corner in itertools.product((0, 1), repeat=p):
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        w = np.ones(pts.shape[0])
        for a, bit in enumerate(corner):
            cell = np.minimum(lows[:, a] + bit, shape[a] - 1)
            idx += cell * strides[a]
            w *= fracs[:, a] if bit else (1.0 - fracs[:, a])
        out += w[:, None] * sig.values[idx]
    return out[0] if single else out


def gen_polynomial(rng, degree: int = 6, coeff_range=(-1.0, 1.0), n_cells: int = 128) -> Signal:
    """Random-polynomial signal (p = 1, d = 1) rasterized at cell centers.

    Coefficients are i.i.d. uniform over coeff_range. When the rasterized
    values exceed the value range they are divided by their max magnitude;
    the factor applied is recorded in meta["scale"].
    """
    if degree < 0:
        raise ConfigError(f"degree must be >= 0, got {degree}")
    coeffs = rng.uniform(coeff_range[0], coeff_range[1], size=degree + 1)
    xs = grid_positions((n_cells,))[:, 0]
    vals = np.zeros_like(xs)
    for c in coeffs[::-1]:  # Horner, coeffs[k] multiplies x^k
        vals = vals * xs + c
    peak = np.abs(vals).max()
    scale = max(1.0, peak)  # only shrink; small signals stay verbatim
    return Signal((n_cells,), vals / scale, meta={"scale": scale, "coeffs": coeffs.tolist()})


def draw_sq(sig: Signal, cfg: DrawConfig, rng):
    """Draw a conditioning set and query batch from one signal.

    |S| is log-uniform (or uniform) over [s_min, s_max]; all positions are
    i.i.d. uniform over the continuous domain, with values interpolated
    from the grid. Returns (SampleSet, QueryBatch, true query values).
    """
    if cfg.log_uniform:
        u = rng.uniform(np.log(cfg.s_min), np.log(cfg.s_max + 1))
        n_s = min(int(np.exp(u)), cfg.s_max)
    else:
        n_s = int(rng.integers(cfg.s_min, cfg.s_max + 1))
    s_pos = rng.uniform(-1.0, 1.0, size=(n_s, sig.pos_dim))
    q_pos = rng.uniform(-1.0, 1.0, size=(cfg.q_size, sig.pos_dim))
    s = SampleSet(s_pos, sample_bilinear(sig, s_pos))
    q = QueryBatch(q_pos)
    return s, q, sample_bilinear(sig, q_pos)


def sample_set_from_grid(sig: Signal, indices: np.ndarray) -> SampleSet:
    """Conditioning set from chosen grid locations of a signal."""
    indices = np.asarray(indices, dtype=np.int64)
    pos = grid_positions(sig.grid_shape)[indices]
    return SampleSet(pos, sig.values[indices])


# --- box-average resampling ------------------------------------------------

def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging n_in cells into n_out cells.

    Output cell j covers the interval [j*r, (j+1)*r) in input-cell units
    (r = n_in/n_out); each input cell contributes its fractional overlap.
    Works for any ratio, including non-integer ones like 28 -> 16.
    """
    r = n_in / n_out
    w = np.zeros((n_out, n_in))
    for j in range(n_out):
        lo, hi = j * r, (j + 1) * r
        i0, i1 = int(np.floor(lo)), int(np.ceil(hi))
        for i in range(i0, min(i1, n_in)):
            w[j, i] = min(hi, i + 1) - max(lo, i)
    return w / r


def box_resample(grid: np.ndarray, new_shape) -> np.ndarray:
    """Fractional-area box average of a [*spatial, d] array to new_shape."""
    out = grid
    for axis, n_out in enumerate(new_shape):
        w = _overlap_matrix(out.shape[axis], n_out)
        out = np.tensordot(w, np.moveaxis(out, axis, 0), axes=(1, 0))
        out = np.moveaxis(out, 0, axis)
    return out


# --- IDX image files --------------------------------------------------------

def load_idx(path, resolution=None) -> list:
    """Read an IDX u8 image file into signals with values in [-1, 1].

    The header is big-endian: magic 0x00000803 then counts [n, rows, cols].
    Pixels map via v = 2*(u/255) - 1. When resolution (rows, cols) is given
    each image is box-averaged down to it.
    """
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated header, file ends at byte {len(buf)}")
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at byte 0 (want 0x{IDX_IMAGE_MAGIC:08x})")
    need = 16 + n * rows * cols
    if len(buf) < need:
        raise FormatError(f"{path}: expected {need} bytes, file ends at byte {len(buf)}")
    pixels = np.frombuffer(buf[16:need], dtype=np.uint8).reshape(n, rows, cols)
    signals = []
    for img in pixels:
        grid = 2.0 * (img.astype(np.float64) / 255.0) - 1.0
        shape = (rows, cols)
        if resolution is not None:
            shape = tuple(int(v) for v in resolution)
            grid = box_resample(grid[..., None], shape)[..., 0]
        signals.append(Signal(shape, grid.reshape(-1, 1)))
    return signals


def write_idx(path, images: np.ndarray) -> None:
    """Write u8 images [n, rows, cols] in the IDX format load_idx reads."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


# --- PGM / PPM --------------------------------------------------------------

def _to_bytes(sig: Signal) -> np.ndarray:
    lo, hi = sig.value_range
    u = np.rint((sig.values - lo) / (hi - lo) * 255.0)
    return np.clip(u, 0, 255).astype(np.uint8)


def write_pgm(sig: Signal, path) -> None:
    """Binary PGM (P5, maxval 255) of a 2-D single-channel signal."""
    if sig.pos_dim != 2 or sig.value_dim != 1:
        raise InputError(f"PGM needs a 2-d scalar signal, got p={sig.pos_dim} d={sig.value_dim}")
    rows, cols = sig.grid_shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(_to_bytes(sig).tobytes())


def write_ppm(sig: Signal, path) -> None:
    """Binary PPM (P6, maxval 255) of a 2-D RGB signal."""
    if sig.pos_dim != 2 or sig.value_dim != 3:
        raise InputError(f"PPM needs a 2-d 3-channel signal, got p={sig.pos_dim} d={sig.value_dim}")
    rows, cols = sig.grid_shape
    with open(path, "wb") as f:
        f.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(_to_bytes(sig).tobytes())


def read_pgm(path) -> Signal:
    """Read back a P5/P6 file written by this module (maxval must be 255)."""
    with open(path, "rb") as f:
        buf = f.read()
    fields = buf.split(maxsplit=4)
    if len(fields) < 5 or fields[0] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    cols, rows, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    d = 1 if fields[0] == b"P5" else 3
    need = rows * cols * d
    if len(buf) < need:
        raise FormatError(f"{path}: pixel payload truncated, file ends at byte {len(buf)}")
    raw = buf[len(buf) - need :]
    u = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    return Signal((rows, cols), (2.0 * u / 255.0 - 1.0).reshape(rows * cols, d))

"""Heatmap decoding: integer peaks, multi-peak candidates, sub-pixel offsets.

Coordinates are ``(x, y)`` with x the column and y the row; pixel (0, 0) is
the centre of the top-left pixel.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidConfigurationError, InvalidInputError


class NoPeakWarning(UserWarning):
    """A heatmap channel is constant, so its argmax carries no information."""


class BorderPeakWarning(UserWarning):
    """A peak lies on the heatmap border and cannot be sub-pixel refined."""


@dataclass(frozen=True)
class HeatmapStack:
    """Per-landmark likelihood grids stored channel-major, shape (C, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3:
            raise InvalidInputError(f"heatmaps must be (C, H, W), got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.floating):
            v = v.astype(np.float64)
        c, h, w = v.shape
        if c < 1 or h < 3 or w < 3:
            raise InvalidInputError(f"need >= 1 channel of at least 3x3, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("heatmap contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)"""
        return self.width, self.height


@dataclass(frozen=True)
class DecodeConfig:
    r: float = 0.75
    D: float = 5.0
    max_candidates: int = 3
    # "udp": endpoint-aligned x * (W - 1) / (W' - 1); "plain": x * W / W'
    scale_convention: str = "udp"

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise InvalidConfigurationError(f"r must lie in (0, 1], got {self.r}")
        if not self.D >= 1:
            raise InvalidConfigurationError(f"D must be >= 1, got {self.D}")
        if int(self.max_candidates) != self.max_candidates or self.max_candidates < 1:
            raise InvalidConfigurationError("max_candidates must be a positive integer")
        if self.scale_convention not in ("udp", "plain"):
            raise InvalidConfigurationError(f"unknown scale convention {self.scale_convention!r}")


@dataclass(frozen=True)
class CandidateSet:
    """Per-landmark peak candidates; each entry is an (n_k, 3) array of (x, y, value)
    rows sorted by descending value."""

    candidates: tuple

    def __post_init__(self):
        cands = tuple(np.asarray(c, dtype=np.float64).reshape(-1, 3) for c in self.candidates)
        if not cands:
            raise InvalidInputError("candidate set has no landmarks")
        for i, c in enumerate(cands):
            if len(c) == 0:
                raise InvalidInputError(f"landmark {i} has no candidates")
            c.setflags(write=False)
        object.__setattr__(self, "candidates", cands)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, k):
        return self.candidates[k]

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.candidates], dtype=np.int64)

    def padded_xy(self) -> np.ndarray:
        """(K, max count, 2) coordinates, zero padded."""
        out = np.zeros((len(self), int(self.counts.max()), 2))
        for k, c in enumerate(self.candidates):
            out[k, : len(c)] = c[:, :2]
        return out


def argmax_decode(h: HeatmapStack):
    """Integer (x, y) of each channel's global maximum.

    Ties resolve to the smallest y, then smallest x. Returns the (C, 2)
    coordinates and a boolean no-peak flag per channel (constant channels).
    """
    flat = h.values.reshape(h.channels, -1)
    idx = np.argmax(flat, axis=1)
    ys, xs = np.divmod(idx, h.width)
    no_peak = flat.min(axis=1) == flat.max(axis=1)
    for k in np.flatnonzero(no_peak):
        warnings.warn(f"channel {k} is constant; argmax is arbitrary", NoPeakWarning, stacklevel=2)
    return np.column_stack([xs, ys]).astype(np.int64), no_peak


def _channel_candidates(channel: np.ndarray, cfg: DecodeConfig) -> np.ndarray:
    w = channel.shape[1]
    top = int(np.argmax(channel))
    top_y, top_x = divmod(top, w)
    vmax = channel[top_y, top_x]
    ys, xs = kernels.strict_local_maxima(channel)
    vals = channel[ys, xs]
    keep = vals >= cfg.r * vmax
    ys, xs, vals = ys[keep], xs[keep], vals[keep]
    # plateau maxima are not strict; the argmax must survive regardless
    if not np.any((ys == top_y) & (xs == top_x)):
        ys = np.append(ys, top_y)
        xs = np.append(xs, top_x)
        vals = np.append(vals, vmax)
    # descending value, row-major among equals
    order = np.lexsort((xs, ys, -vals))
    kept = []
    d2 = cfg.D * cfg.D
    for i in order:
        x, y = xs[i], ys[i]
        if all((x - kx) ** 2 + (y - ky) ** 2 >= d2 for kx, ky, _ in kept):
            kept.append((x, y, vals[i]))
            if len(kept) == cfg.max_candidates:
                break
    return np.array(kept, dtype=np.float64)


def extract_candidates(h: HeatmapStack, cfg: DecodeConfig = DecodeConfig()) -> CandidateSet:
    """Strict 8-neighbourhood maxima, thresholded at ``r`` times the channel
    maximum, then greedy suppression within radius ``D`` and a top-k cap."""
    values = np.asarray(h.values, dtype=np.float64)
    return CandidateSet(tuple(_channel_candidates(ch, cfg) for ch in values))


def _taylor_offset(patch: np.ndarray) -> np.ndarray:
    # log of a Gaussian is an exact quadratic, so the step is exact there
    p = np.log(patch) if np.all(patch > 0) else patch
    dx = 0.5 * (p[1, 2] - p[1, 0])
    dy = 0.5 * (p[2, 1] - p[0, 1])
    dxx = p[1, 2] - 2 * p[1, 1] + p[1, 0]
    dyy = p[2, 1] - 2 * p[1, 1] + p[0, 1]
    dxy = 0.25 * (p[2, 2] - p[2, 0] - p[0, 2] + p[0, 0])
    det = dxx * dyy - dxy * dxy
    if not (dxx < 0 and det > 0):
        return np.zeros(2)
    off = -np.array([dyy * dx - dxy * dy, dxx * dy - dxy * dx]) / det
    return np.clip(off, -0.5, 0.5)


def subpixel_refine(h: HeatmapStack, coords):
    """Second-order Taylor refinement of integer peaks.

    The offset is ``-H^-1 g`` from central differences of the log heatmap
    (raw values when the 3x3 patch is not strictly positive), clamped to
    half a pixel per axis, and zero when the Hessian is not negative
    definite. Peaks on the border are passed through and flagged.
    Returns (C, 2) float coordinates and the per-channel border flags.
    """
    coords = np.asarray(coords)
    if coords.shape != (h.channels, 2):
        raise InvalidInputError(f"need one (x, y) per channel, got shape {coords.shape}")
    values = np.asarray(h.values, dtype=np.float64)
    out = coords.astype(np.float64)
    border = np.zeros(h.channels, dtype=bool)
    for k, (x, y) in enumerate(coords.astype(np.int64)):
        if not (1 <= x < h.width - 1 and 1 <= y < h.height - 1):
            border[k] = True
            warnings.warn(f"channel {k} peak at ({x}, {y}) is on the border; not refined",
                          BorderPeakWarning, stacklevel=2)
            continue
        out[k] += _taylor_offset(values[k, y - 1:y + 2, x - 1:x + 2])
    return out, border


def _scale_factors(src_size, dst_size, convention):
    src = np.asarray(src_size, dtype=np.float64)
    dst = np.asarray(dst_size, dtype=np.float64)
    if src.shape != (2,) or dst.shape != (2,):
        raise InvalidConfigurationError("sizes must be (width, height) pairs")
    if np.any(src < 2) or np.any(dst < 2):
        raise InvalidConfigurationError("every dimension must be >= 2")
    if convention == "udp":
        return (dst - 1) / (src - 1)
    if convention == "plain":
        return dst / src
    raise InvalidConfigurationError(f"unknown scale convention {convention!r}")


def heatmap_to_image(coords, heatmap_size, image_size, convention="udp") -> np.ndarray:
    """Map (x, y) heatmap coordinates to image coordinates.

    Sizes are (width, height). The default keeps the first and last pixel
    centres of both grids aligned.
    """
    return np.asarray(coords, dtype=np.float64) * _scale_factors(heatmap_size, image_size, convention)


def image_to_heatmap(coords, heatmap_size, image_size, convention="udp") -> np.ndarray:
    return np.asarray(coords, dtype=np.float64) / _scale_factors(heatmap_size, image_size, convention)

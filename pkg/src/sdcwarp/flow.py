"""Coarse-to-fine block matching for backward flow.

A plain stand-in for a learned flow network: a 3-level pyramid, 8x8
windows, exhaustive integer search of +/-4 px per level with an L1 window
cost, and bilinear upsampling of the field between levels.  The window is
slid densely, so every pixel gets its own vector.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .core import FlowField, Frame
from .resample import DimensionError, warp_vector_array

BLOCK = 8
RADIUS = 4
LEVELS = 3
# cost added per pixel of displacement; resolves flat regions to zero motion
MOTION_PENALTY = 1e-3


def _gray(frame) -> np.ndarray:
    a = frame.data if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    return a


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    p = np.pad(img, ((0, h % 2), (0, w % 2)), mode="edge")
    return p.reshape(p.shape[0] // 2, 2, p.shape[1] // 2, 2).mean(axis=(1, 3))


def _upsample_field(f: np.ndarray, shape) -> np.ndarray:
    """Bilinear resize of a coarse field onto ``shape`` (pixel-center aligned), values doubled."""
    h, w = shape
    ch, cw = f.shape
    ys = np.clip((np.arange(h) + 0.5) / 2 - 0.5, 0, ch - 1)
    xs = np.clip((np.arange(w) + 0.5) / 2 - 0.5, 0, cw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, ch - 1)
    x1 = np.minimum(x0 + 1, cw - 1)
    b = (ys - y0)[:, None]
    a = (xs - x0)[None, :]
    top = (1 - a) * f[y0][:, x0] + a * f[y0][:, x1]
    bot = (1 - a) * f[y1][:, x0] + a * f[y1][:, x1]
    return 2.0 * ((1 - b) * top + b * bot)


def block_match(prev: np.ndarray, nxt: np.ndarray, init_u=None, init_v=None,
                radius: int = RADIUS, block: int = BLOCK, penalty: float = MOTION_PENALTY):
    """Per-pixel integer refinement of ``(init_u, init_v)`` within ``+/-radius``.

    Each candidate is scored by the mean absolute difference over a
    ``block x block`` window between ``nxt`` and ``prev`` warped by the
    candidate, plus ``penalty`` times the candidate's L1 length so that
    featureless windows settle on zero motion.  Exact ties keep the
    candidate closest to the initial vector.
    Inputs may be ``(H, W)`` or ``(H, W, C)``.
    """
    if prev.ndim == 2:
        prev, nxt = prev[:, :, None], nxt[:, :, None]
    h, w = prev.shape[:2]
    iu = np.zeros((h, w)) if init_u is None else np.round(init_u)
    iv = np.zeros((h, w)) if init_v is None else np.round(init_v)
    offsets = sorted(((dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)),
                     key=lambda d: (abs(d[0]) + abs(d[1]), abs(d[1]), d[1], d[0]))
    best = np.full((h, w), np.inf)
    bu, bv = iu.copy(), iv.copy()
    for dx, dy in offsets:
        cu, cv = iu + dx, iv + dy
        warped = warp_vector_array(prev, cu, cv)
        cost = uniform_filter(np.abs(warped - nxt).sum(axis=2), size=block, mode="nearest")
        cost = cost + penalty * (np.abs(cu) + np.abs(cv))
        better = cost < best - 1e-12
        best = np.where(better, cost, best)
        bu = np.where(better, cu, bu)
        bv = np.where(better, cv, bv)
    return bu, bv


def estimate_flow(prev, nxt, levels: int = LEVELS, radius: int = RADIUS, block: int = BLOCK) -> FlowField:
    """Backward flow: for each pixel of ``nxt``, the displacement to its source in ``prev``."""
    a, b = _gray(prev), _gray(nxt)
    if a.shape != b.shape:
        raise DimensionError(f"frame sizes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < block or a.shape[1] < block:
        raise DimensionError(f"frames {a.shape} are smaller than one {block}x{block} block")
    pa, pb = [a], [b]
    for _ in range(levels - 1):
        pa.append(_downsample(pa[-1]))
        pb.append(_downsample(pb[-1]))
    u = v = None
    for la, lb in zip(reversed(pa), reversed(pb)):
        if u is not None:
            u, v = _upsample_field(u, la.shape), _upsample_field(v, la.shape)
        u, v = block_match(la, lb, u, v, radius, block)
    return FlowField(u, v)

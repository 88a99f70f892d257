"""Vector-based, kernel-based and spatially-displaced-convolution warps.

All three operators gather from the source frame with replicate-border
(edge clamp) addressing and use cross-correlation tap order: tap ``(i, j)``
of an ``N x N`` kernel at output pixel ``(x, y)`` reads the source at
``(x - N//2 + j, y - N//2 + i)``, displaced by ``(u, v)`` for the SDC.

The SDC evaluates every tap of a pixel at the same fractional offset, so
the bilinear blend folds into the separable kernel: each 1-D kernel of
length ``N`` becomes an ``N + 1`` tap kernel over integer pixels
(``(1 - a) k[j] + a k[j - 1]``).  Forward and backward passes both work on
that ``(N + 1) x (N + 1)`` integer patch.

Work is split over disjoint blocks of output rows; no reduction crosses
pixels, so results do not depend on the block size or worker count.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FlowField, Frame, _frozen

DEFAULT_N = 11
DEFAULT_KERNEL_N = 51
PARAMS_MAGIC = b"SDCP"
PARAMS_VERSION = 1

# element budget for one gathered block (rows * W * taps * C)
_BLOCK_ELEMS = 1 << 22


class DimensionError(ValueError):
    pass


# ------------------------------------------------------------------- types


@dataclass(frozen=True)
class MotionField:
    """Learned per-pixel displacement; same sign convention as ``FlowField``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise DimensionError(f"u and v must be matching 2-D arrays, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("motion contains non-finite values")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "v", _frozen(v))

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def zeros(cls, height: int, width: int) -> "MotionField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height: int, width: int, u: float, v: float) -> "MotionField":
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)))

    @classmethod
    def from_flow(cls, flow: FlowField) -> "MotionField":
        return cls(flow.u, flow.v)

    def to_flow(self) -> FlowField:
        return FlowField(self.u, self.v)


def middle_one_hot(n: int) -> np.ndarray:
    """Length-``n`` vector with a single one at the center index."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {n}")
    e = np.zeros(n)
    e[n // 2] = 1.0
    return e


@dataclass(frozen=True)
class SeparableKernelField:
    """Per-pixel horizontal (``ku``) and vertical (``kv``) 1-D kernels, ``(H, W, N)``.

    Weights are unconstrained: no normalization or sign constraint.
    """

    ku: np.ndarray
    kv: np.ndarray

    def __post_init__(self):
        ku = np.asarray(self.ku, dtype=np.float64)
        kv = np.asarray(self.kv, dtype=np.float64)
        if ku.ndim != 3 or ku.shape != kv.shape:
            raise DimensionError(f"ku and kv must be matching HxWxN arrays, got {ku.shape} and {kv.shape}")
        if ku.shape[2] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {ku.shape[2]}")
        if not (np.all(np.isfinite(ku)) and np.all(np.isfinite(kv))):
            raise ValueError("kernels contain non-finite values")
        object.__setattr__(self, "ku", _frozen(ku))
        object.__setattr__(self, "kv", _frozen(kv))

    @property
    def n(self) -> int:
        return self.ku.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.ku.shape[:2]

    @classmethod
    def identity(cls, height: int, width: int, n: int = DEFAULT_N) -> "SeparableKernelField":
        e = np.broadcast_to(middle_one_hot(n), (height, width, n))
        return cls(e, e)


@dataclass(frozen=True)
class KernelField2D:
    """Per-pixel ``N x N`` kernels, ``(H, W, N, N)``; row index is vertical."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise DimensionError(f"weights must be HxWxNxN, got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {w.shape[2]}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernels contain non-finite values")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.weights.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape[:2]


@dataclass(frozen=True)
class TransformParams:
    """Motion plus separable kernels: ``2N + 2`` scalars per pixel."""

    motion: MotionField
    kernels: SeparableKernelField

    def __post_init__(self):
        if self.motion.shape != self.kernels.shape:
            raise DimensionError(f"motion {self.motion.shape} and kernels {self.kernels.shape} differ in size")

    @property
    def shape(self) -> tuple[int, int]:
        return self.motion.shape

    @property
    def n(self) -> int:
        return self.kernels.n

    @property
    def num_scalars(self) -> int:
        return sum(a.size for a in (self.motion.u, self.motion.v, self.kernels.ku, self.kernels.kv))

    @classmethod
    def identity(cls, height: int, width: int, n: int = DEFAULT_N) -> "TransformParams":
        return cls(MotionField.zeros(height, width), SeparableKernelField.identity(height, width, n))

    def save(self, path) -> None:
        """Binary layout: ``b"SDCP"``, int32 H, W, N, version, then float32 u, v, ku, kv (LE)."""
        h, w = self.shape
        with open(path, "wb") as f:
            f.write(PARAMS_MAGIC)
            f.write(struct.pack("<4i", h, w, self.n, PARAMS_VERSION))
            for arr in (self.motion.u, self.motion.v, self.kernels.ku, self.kernels.kv):
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "TransformParams":
        raw = Path(path).read_bytes()
        if raw[:4] != PARAMS_MAGIC:
            raise ValueError(f"{path}: bad magic")
        if len(raw) < 20:
            raise ValueError(f"{path}: truncated header")
        h, w, n, version = struct.unpack("<4i", raw[4:20])
        if version != PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if h < 1 or w < 1 or n < 1:
            raise ValueError(f"{path}: invalid header {h}x{w} N={n}")
        count = h * w * (2 * n + 2)
        if len(raw) < 20 + 4 * count:
            raise ValueError(f"{path}: truncated payload")
        flat = np.frombuffer(raw, dtype="<f4", count=count, offset=20).astype(np.float64)
        hw = h * w
        u, v = flat[:hw].reshape(h, w), flat[hw:2 * hw].reshape(h, w)
        ku = flat[2 * hw:2 * hw + hw * n].reshape(h, w, n)
        kv = flat[2 * hw + hw * n:].reshape(h, w, n)
        return cls(MotionField(u, v), SeparableKernelField(ku, kv))


@dataclass(frozen=True)
class TransformGradients:
    d_u: np.ndarray
    d_v: np.ndarray
    d_ku: np.ndarray
    d_kv: np.ndarray


# ------------------------------------------------------------- primitives


def _array(frame) -> np.ndarray:
    data = frame.data if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    return data


def bilinear_sample(frame, x: float, y: float, c: int = 0) -> float:
    """Bilinear value at subpixel ``(x, y)``, coordinates clamped to the image."""
    img = _array(frame)
    h, w = img.shape[:2]
    x = min(max(float(x), 0.0), w - 1.0)
    y = min(max(float(y), 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    a, b = x - x0, y - y0
    top = (1 - a) * img[y0, x0, c] + a * img[y0, x1, c]
    bot = (1 - a) * img[y1, x0, c] + a * img[y1, x1, c]
    return float((1 - b) * top + b * bot)


def _check_hw(img: np.ndarray, shape, what: str) -> None:
    if tuple(shape) != img.shape[:2]:
        raise DimensionError(f"{what} size {tuple(shape)} does not match frame {img.shape[:2]}")


def _row_blocks(h: int, per_row: int) -> list[tuple[int, int]]:
    step = max(1, _BLOCK_ELEMS // max(per_row, 1))
    return [(r, min(h, r + step)) for r in range(0, h, step)]


def _run_blocks(fn, blocks, workers: int) -> None:
    if workers <= 1 or len(blocks) == 1:
        for b in blocks:
            fn(*b)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda b: fn(*b), blocks))


def warp_vector_array(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xs = np.clip(np.arange(w)[None, :] + u, 0.0, w - 1.0)
    ys = np.clip(np.arange(h)[:, None] + v, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    a = (xs - x0)[:, :, None]
    b = (ys - y0)[:, :, None]
    top = (1 - a) * img[y0, x0] + a * img[y0, x1]
    bot = (1 - a) * img[y1, x0] + a * img[y1, x1]
    return (1 - b) * top + b * bot


def warp_vector(frame: Frame, motion: MotionField) -> Frame:
    """Bilinear backward warp: ``out(x, y) = I(x + u, y + v)``."""
    img = _array(frame)
    _check_hw(img, motion.shape, "motion")
    return Frame(warp_vector_array(img, motion.u, motion.v))


def expand_separable(kernels: SeparableKernelField) -> KernelField2D:
    """Outer products ``weights[y, x, i, j] = kv[y, x, i] * ku[y, x, j]``."""
    return KernelField2D(kernels.kv[:, :, :, None] * kernels.ku[:, :, None, :])


def warp_kernel_array(img: np.ndarray, weights: np.ndarray, workers: int = 1) -> np.ndarray:
    h, w, c = img.shape
    n = weights.shape[2]
    r = n // 2
    offs = np.arange(n) - r
    cols = np.clip(np.arange(w)[:, None] + offs[None, :], 0, w - 1)  # (W, N)
    out = np.empty_like(img)

    def block(r0, r1):
        rows = np.clip(np.arange(r0, r1)[:, None] + offs[None, :], 0, h - 1)  # (R, N)
        patch = img[rows[:, None, :, None], cols[None, :, None, :]]  # (R, W, N, N, C)
        out[r0:r1] = np.einsum("rwijc,rwij->rwc", patch, weights[r0:r1])

    _run_blocks(block, _row_blocks(h, w * n * n * c), workers)
    return out


def warp_kernel(frame: Frame, kernels: KernelField2D, workers: int = 1) -> Frame:
    """Per-pixel ``N x N`` gather centered at the output pixel."""
    img = _array(frame)
    _check_hw(img, kernels.shape, "kernels")
    return Frame(warp_kernel_array(img, kernels.weights, workers))


# ----------------------------------------------------------------- SDC


def _shifted(k: np.ndarray, frac: np.ndarray) -> np.ndarray:
    """Fold a bilinear fraction into a kernel: ``(1-f) k[j] + f k[j-1]`` for ``j = 0..N``."""
    pad = np.zeros(k.shape[:-1] + (1,))
    lo = np.concatenate([k, pad], axis=-1)
    hi = np.concatenate([pad, k], axis=-1)
    f = frac[..., None]
    return (1 - f) * lo + f * hi


def _sdc_geometry(u, v, n, r0, r1, h, w):
    r = n // 2
    xs = np.arange(w)[None, :] + u[r0:r1]
    ys = np.arange(r0, r1)[:, None] + v[r0:r1]
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    a = xs - x0
    b = ys - y0
    taps = np.arange(n + 1) - r
    cols = np.clip(x0.astype(np.intp)[..., None] + taps, 0, w - 1)  # (R, W, N+1)
    rows = np.clip(y0.astype(np.intp)[..., None] + taps, 0, h - 1)
    return a, b, rows, cols


def warp_sdc_array(img, u, v, ku, kv, workers: int = 1) -> np.ndarray:
    h, w, c = img.shape
    n = ku.shape[2]
    out = np.empty_like(img)

    def block(r0, r1):
        a, b, rows, cols = _sdc_geometry(u, v, n, r0, r1, h, w)
        hk = _shifted(ku[r0:r1], a)
        vk = _shifted(kv[r0:r1], b)
        patch = img[rows[:, :, :, None], cols[:, :, None, :]]  # (R, W, N+1, N+1, C)
        rowsum = np.einsum("rwijc,rwj->rwic", patch, hk)
        out[r0:r1] = np.einsum("rwic,rwi->rwc", rowsum, vk)

    _run_blocks(block, _row_blocks(h, w * (n + 1) ** 2 * c), workers)
    return out


def _check_params(img: np.ndarray, params: TransformParams) -> None:
    _check_hw(img, params.shape, "transform parameters")


def warp_sdc(frame: Frame, params: TransformParams, workers: int = 1) -> Frame:
    """Separable kernel applied to the patch centered at ``(x + u, y + v)``.

    Taps are bilinear samples of the original frame.
    """
    img = _array(frame)
    _check_params(img, params)
    return Frame(warp_sdc_array(img, params.motion.u, params.motion.v,
                                params.kernels.ku, params.kernels.kv, workers))


def sdc_backward_array(img, u, v, ku, kv, grad, workers: int = 1):
    h, w, c = img.shape
    n = ku.shape[2]
    d_u = np.empty((h, w))
    d_v = np.empty((h, w))
    d_ku = np.empty((h, w, n))
    d_kv = np.empty((h, w, n))

    def block(r0, r1):
        a, b, rows, cols = _sdc_geometry(u, v, n, r0, r1, h, w)
        k_u, k_v = ku[r0:r1], kv[r0:r1]
        hk = _shifted(k_u, a)
        vk = _shifted(k_v, b)
        patch = img[rows[:, :, :, None], cols[:, :, None, :]]
        g = grad[r0:r1]
        # contract channels against the output gradient first
        gp = np.einsum("rwijc,rwc->rwij", patch, g)
        d_vk = np.einsum("rwij,rwj->rwi", gp, hk)  # d/d vk[i]
        d_hk = np.einsum("rwij,rwi->rwj", gp, vk)  # d/d hk[j]
        # sum_j k[j] (d[j+1] - d[j]): tap differences vanish exactly on flat patches
        d_u[r0:r1] = np.einsum("rwj,rwj->rw", np.diff(d_hk, axis=-1), k_u)
        d_v[r0:r1] = np.einsum("rwi,rwi->rw", np.diff(d_vk, axis=-1), k_v)
        fa, fb = a[..., None], b[..., None]
        d_ku[r0:r1] = (1 - fa) * d_hk[..., :n] + fa * d_hk[..., 1:]
        d_kv[r0:r1] = (1 - fb) * d_vk[..., :n] + fb * d_vk[..., 1:]

    _run_blocks(block, _row_blocks(h, w * (n + 1) ** 2 * c), workers)
    return d_u, d_v, d_ku, d_kv


def sdc_backward(frame: Frame, params: TransformParams, output_grad, workers: int = 1) -> TransformGradients:
    """Gradients of ``sum(output_grad * warp_sdc(frame, params))``.

    Derivatives with respect to the motion use the right-hand derivative
    where ``x + u`` or ``y + v`` is an integer.
    """
    img = _array(frame)
    _check_params(img, params)
    g = _array(output_grad)
    if g.shape != img.shape:
        raise DimensionError(f"output gradient shape {g.shape} does not match frame {img.shape}")
    d_u, d_v, d_ku, d_kv = sdc_backward_array(img, params.motion.u, params.motion.v,
                                              params.kernels.ku, params.kernels.kv, g, workers)
    return TransformGradients(d_u, d_v, d_ku, d_kv)


def apply_method(method: str, img: np.ndarray, params: TransformParams, workers: int = 1) -> np.ndarray:
    """Run one of ``vector``, ``kernel`` or ``sdc`` on an image array."""
    if method == "vector":
        return warp_vector_array(img, params.motion.u, params.motion.v)
    if method == "kernel":
        ks = params.kernels
        return warp_kernel_array(img, ks.kv[:, :, :, None] * ks.ku[:, :, None, :], workers)
    if method == "sdc":
        return warp_sdc_array(img, params.motion.u, params.motion.v, params.kernels.ku, params.kernels.kv, workers)
    raise ValueError(f"unknown method {method!r}")

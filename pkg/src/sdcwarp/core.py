"""Image and flow containers, file I/O, and synthetic test scenes.

Frames are dense ``(H, W, C)`` float64 arrays with values nominally in
``[0, 1]``.  Flow fields hold per-pixel displacements ``(u, v)`` in pixels
using the backward convention: the output pixel ``(x, y)`` samples the
source at ``(x + u, y + v)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

FLO_MAGIC = 202021.25


class FrameFormatError(ValueError):
    """Raised when an image or flow file cannot be decoded."""


def _frozen(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Frame:
    """An ``H x W x C`` image, ``C`` in {1, 3}.

    A 2-D array is promoted to a single-channel frame.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"frame must be HxW or HxWxC, got shape {data.shape}")
        h, w, c = data.shape
        if h < 1 or w < 1:
            raise ValueError(f"frame dimensions must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise ValueError(f"frame must have 1 or 3 channels, got {c}")
        if not np.all(np.isfinite(data)):
            raise ValueError("frame contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True)
class FlowField:
    """Per-pixel backward displacement ``(u, v)`` in pixels."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be matching 2-D arrays, got {u.shape} and {v.shape}")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise ValueError("flow dimensions must be >= 1")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow contains non-finite values")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "v", _frozen(v))

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    def stacked(self) -> np.ndarray:
        """``(H, W, 2)`` view with ``u`` then ``v``."""
        return np.stack([self.u, self.v], axis=-1)


@dataclass(frozen=True)
class SyntheticScene:
    """Frames plus, for every frame after the first, its backward flow and
    the disocclusion-corrected sampling field."""

    frames: list[Frame]
    gt_backward_flow: list[FlowField] = field(default_factory=list)
    correct_sampling: list[FlowField] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise ValueError("scene needs at least one frame")
        shape = self.frames[0].shape
        if any(f.shape != shape for f in self.frames):
            raise ValueError("scene frames must share dimensions")
        n = len(self.frames) - 1
        if len(self.gt_backward_flow) != n or len(self.correct_sampling) != n:
            raise ValueError("flow lists must have one entry per frame after the first")


# ---------------------------------------------------------------- image I/O


def load_frame(path) -> Frame:
    """Read an 8-bit PNG or binary PPM into a frame scaled to ``[0, 1]``.

    Grayscale files give ``C=1``, color files ``C=3``.  Alpha is dropped.
    """
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise FrameFormatError(f"cannot read image {path}: {exc}") from exc
    if img.mode in ("L", "P"):
        img = img.convert("L")
    elif img.mode in ("RGB", "RGBA", "LA"):
        img = img.convert("RGB") if img.mode != "LA" else img.convert("L")
    else:
        raise FrameFormatError(f"unsupported bit depth / mode {img.mode!r} in {path}")
    arr = np.asarray(img)
    if arr.size == 0:
        raise FrameFormatError(f"image {path} has a zero dimension")
    return Frame(arr.astype(np.float64) / 255.0)


def quantize(frame: Frame) -> np.ndarray:
    """Clamp to ``[0, 1]`` and map to uint8 with round-half-up."""
    data = np.clip(np.asarray(frame.data), 0.0, 1.0)
    return np.floor(data * 255.0 + 0.5).astype(np.uint8)


def save_frame(frame: Frame, path) -> None:
    """Write ``frame`` as 8-bit PNG, or binary PPM (``.ppm``) / PGM (``.pgm``)."""
    path = Path(path)
    q = quantize(frame)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        img = Image.fromarray(np.repeat(q, 3, axis=2) if q.shape[2] == 1 else q, mode="RGB")
        img.save(path, format="PPM")
    elif suffix == ".pgm":
        if q.shape[2] != 1:
            raise ValueError("PGM output needs a single-channel frame")
        Image.fromarray(q[:, :, 0], mode="L").save(path, format="PPM")
    else:
        img = Image.fromarray(q[:, :, 0], mode="L") if q.shape[2] == 1 else Image.fromarray(q, mode="RGB")
        # fixed compression settings keep the bytes reproducible
        img.save(path, format="PNG", optimize=False, compress_level=6)


# ----------------------------------------------------------------- .flo I/O


def write_flo(flow: FlowField, path) -> None:
    """Write a Middlebury ``.flo`` file (little-endian float32)."""
    h, w = flow.height, flow.width
    with open(path, "wb") as f:
        f.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(flow.stacked().astype("<f4").tobytes())


def read_flo(path) -> FlowField:
    """Read a Middlebury ``.flo`` file.

    Raises
    ------
    FrameFormatError
        On a bad magic number, truncated payload, or non-finite values.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FrameFormatError(f"{path}: truncated header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FrameFormatError(f"{path}: bad magic {magic!r}")
    w, h = (int(x) for x in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if w < 1 or h < 1:
        raise FrameFormatError(f"{path}: invalid dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(raw) < need:
        raise FrameFormatError(f"{path}: truncated payload ({len(raw)} of {need} bytes)")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    if not np.all(np.isfinite(data)):
        raise FrameFormatError(f"{path}: non-finite flow values")
    return FlowField(data[:, :, 0], data[:, :, 1])


# --------------------------------------------------------- synthetic scenes


def _coverage(lo: float, hi: float, width: int) -> np.ndarray:
    """Fraction of each unit pixel column ``[k, k+1)`` inside ``[lo, hi)``."""
    edges = np.arange(width, dtype=np.float64)
    return np.clip(np.minimum(edges + 1, hi) - np.maximum(edges, lo), 0.0, 1.0)


def make_translating_square(canvas, square_size: int, speed: float, steps: int) -> SyntheticScene:
    """A bright square sliding right over a black background.

    The square's left edge starts at column ``speed`` so the strip it
    uncovers at every step stays inside the canvas.  Rows are centered and
    clipped to the canvas, so a one-row canvas gives a 1-D slice of the
    square.

    Parameters
    ----------
    canvas : (int, int)
        ``(height, width)``.
    square_size : int
        Side length in pixels.
    speed : float
        Horizontal displacement per step in pixels (non-integral speeds
        render by area coverage).
    steps : int
        Number of frames.
    """
    h, w = (int(c) for c in canvas)
    if h < 1 or w < 1:
        raise ValueError("canvas must be at least 1x1")
    if square_size < 1 or steps < 1 or speed < 0:
        raise ValueError("square_size and steps must be >= 1 and speed >= 0")
    x_start = float(speed)
    if x_start + speed * (steps - 1) + square_size > w:
        raise ValueError("square leaves canvas")
    top = max(0, (h - square_size) // 2)
    rows = slice(top, min(h, top + square_size))

    frames, gt, correct = [], [], []
    for t in range(steps):
        x0 = x_start + speed * t
        cover = _coverage(x0, x0 + square_size, w)
        img = np.zeros((h, w))
        img[rows] = cover
        frames.append(Frame(img))
        if t == 0:
            continue
        on_square = cover > 0
        strip = (_coverage(x0 - speed, x0, w) > 0) & (cover < 1)
        u_gt = np.zeros((h, w))
        u_gt[rows, on_square] = -speed
        u_fix = u_gt.copy()
        u_fix[rows, strip] = -speed
        gt.append(FlowField(u_gt, np.zeros((h, w))))
        correct.append(FlowField(u_fix, np.zeros((h, w))))
    return SyntheticScene(frames, gt, correct)


def make_texture(height: int, width: int, seed: int = 0, smooth: float = 2.0, channels: int = 1) -> np.ndarray:
    """Band-limited random texture in ``[0.1, 0.9]``, deterministic in ``seed``."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width, channels))
    tex = gaussian_filter(noise, sigma=(smooth, smooth, 0), mode="wrap")
    tex -= tex.min()
    peak = tex.max()
    if peak > 0:
        tex /= peak
    return 0.1 + 0.8 * tex


def make_translating_texture(height: int, width: int, velocity, steps: int, seed: int = 0,
                             smooth: float = 2.0, channels: int = 1) -> list[Frame]:
    """Crops of a larger texture whose content moves ``velocity`` px per step.

    The backward flow between consecutive frames is ``-velocity``.
    """
    vx, vy = (int(round(c)) for c in velocity)
    pad_x, pad_y = abs(vx) * steps + 1, abs(vy) * steps + 1
    big = make_texture(height + 2 * pad_y, width + 2 * pad_x, seed=seed, smooth=smooth, channels=channels)
    frames = []
    for t in range(steps):
        oy, ox = pad_y - vy * t, pad_x - vx * t
        frames.append(Frame(big[oy:oy + height, ox:ox + width]))
    return frames


def frame_paths(directory) -> list[Path]:
    """Sorted image files (``.png``/``.ppm``/``.pgm``) in ``directory``."""
    directory = Path(directory)
    exts = {".png", ".ppm", ".pgm"}
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in exts)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path

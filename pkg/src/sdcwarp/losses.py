"""Training losses and evaluation metrics.

Pixel losses (L1, L2) average over all ``H*W*C`` elements.  Feature losses
run over a small fixed-weight convolutional extractor that stands in for a
pretrained classification network; every level is scaled by
``1 / (C_l H_l W_l)``.  Each loss has a ``*_grad`` twin returning
``(value, gradient)`` for use by the fitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import correlate1d

from .core import Frame
from .resample import DimensionError, middle_one_hot, SeparableKernelField

DEFAULT_WEIGHTS = (0.2, 0.06, 36.0)  # (w_l, w_p, w_s)


def _arr(x) -> np.ndarray:
    a = x.data if isinstance(x, Frame) else np.asarray(x, dtype=np.float64)
    return a[:, :, None] if a.ndim == 2 else a


def _pair(pred, target):
    p, t = _arr(pred), _arr(target)
    if p.shape != t.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {t.shape}")
    return p, t


# ------------------------------------------------------------ pixel losses


def loss_l1_grad(pred, target):
    p, t = _pair(pred, target)
    d = p - t
    return float(np.abs(d).mean()), np.sign(d) / d.size


def loss_l1(pred, target) -> float:
    """Mean absolute difference."""
    return loss_l1_grad(pred, target)[0]


def loss_l2_grad(pred, target):
    p, t = _pair(pred, target)
    d = p - t
    return float((d * d).mean()), 2.0 * d / d.size


def loss_l2(pred, target) -> float:
    """Mean squared difference."""
    return loss_l2_grad(pred, target)[0]


def flow_loss(pred_flow, target_flow, kind: str = "l2") -> float:
    """L1/L2 between two flow fields treated as 2-channel images.

    Not used by the default schedules; supervising motion with flow fails
    at disocclusions.
    """
    p = np.stack([pred_flow.u, pred_flow.v], axis=-1)
    t = np.stack([target_flow.u, target_flow.v], axis=-1)
    if p.shape != t.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {t.shape}")
    d = p - t
    if kind == "l1":
        return float(np.abs(d).mean())
    if kind == "l2":
        return float((d * d).mean())
    raise ValueError(f"unknown flow loss {kind!r}")


# -------------------------------------------------------- feature extractor


@dataclass(frozen=True)
class LayerSpec:
    """One extractor level: 3x3 conv (zero padded), ReLU, average pool.

    ``weight=None`` makes the level an identity map (no conv, no ReLU);
    ``pool=1`` disables pooling.
    """

    weight: np.ndarray | None
    bias: np.ndarray | None = None
    pool: int = 2
    relu: bool = True


@dataclass(frozen=True)
class FeatureMap:
    """Activations ``(C_l, H_l, W_l)``."""

    data: np.ndarray

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def kappa(self) -> float:
        return 1.0 / self.data.size


def _orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return q.T if rows <= cols else q


@dataclass(frozen=True)
class FeatureExtractor:
    layers: tuple[LayerSpec, ...]
    seed: int | None = None

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("extractor needs at least one layer")

    @classmethod
    def default(cls, seed: int = 0, channels=(16, 32, 64)) -> "FeatureExtractor":
        """Three conv/ReLU/pool levels with orthogonal weights drawn from ``seed``."""
        rng = np.random.default_rng(seed)
        layers, cin = [], 3
        for cout in channels:
            w = _orthogonal(cout, cin * 9, rng).reshape(cout, cin, 3, 3)
            layers.append(LayerSpec(w, np.zeros(cout)))
            cin = cout
        return cls(tuple(layers), seed)

    @classmethod
    def identity(cls) -> "FeatureExtractor":
        return cls((LayerSpec(None, None, pool=1, relu=False),))

    @property
    def downsample(self) -> int:
        return int(np.prod([l.pool for l in self.layers]))


def _conv3x3(x, w, b):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (Cin, H, W, 3, 3)
    y = np.einsum("chwij,ocij->ohw", win, w)
    if b is not None:
        y += b[:, None, None]
    return y


def _conv3x3_back(dy, w, shape):
    cin, h, wd = shape
    dxp = np.zeros((cin, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd] += np.einsum("ohw,oc->chw", dy, w[:, :, i, j])
    return dxp[:, 1:-1, 1:-1]


def _pool(x, k):
    if k == 1:
        return x
    c, h, w = x.shape
    hh, ww = h // k, w // k
    return x[:, :hh * k, :ww * k].reshape(c, hh, k, ww, k).mean(axis=(2, 4))


def _pool_back(dy, k, shape):
    if k == 1:
        return dy
    dx = np.zeros(shape)
    hh, ww = dy.shape[1:]
    dx[:, :hh * k, :ww * k] = np.repeat(np.repeat(dy, k, axis=1), k, axis=2) / (k * k)
    return dx


def _input_chw(frame, extractor: FeatureExtractor) -> np.ndarray:
    img = _arr(frame)
    if img.shape[0] < extractor.downsample or img.shape[1] < extractor.downsample:
        raise DimensionError(
            f"frame {img.shape[:2]} is smaller than the extractor's downsampling factor {extractor.downsample}")
    first = extractor.layers[0]
    if first.weight is not None and img.shape[2] == 1 and first.weight.shape[1] == 3:
        img = np.repeat(img, 3, axis=2)
    return np.transpose(img, (2, 0, 1))


def _forward(frame, extractor):
    x = _input_chw(frame, extractor)
    feats, cache = [], []
    for layer in extractor.layers:
        xin = x
        if layer.weight is not None:
            pre = _conv3x3(x, layer.weight, layer.bias)
            x = np.maximum(pre, 0.0) if layer.relu else pre
        else:
            pre = None
        mid_shape = x.shape
        x = _pool(x, layer.pool)
        cache.append((xin.shape, pre, mid_shape))
        feats.append(x)
    return feats, cache


def _backward(extractor, cache, dfeats, channels):
    dx = None
    for layer, (in_shape, pre, mid_shape), df in zip(reversed(extractor.layers), reversed(cache), reversed(dfeats)):
        d = df if dx is None else dx + df
        d = _pool_back(d, layer.pool, mid_shape)
        if layer.weight is not None:
            if layer.relu:
                d = d * (pre > 0)
            d = _conv3x3_back(d, layer.weight, in_shape)
        dx = d
    grad = np.transpose(dx, (1, 2, 0))
    if grad.shape[2] != channels:
        grad = grad.sum(axis=2, keepdims=True)
    return grad


def extract_features(frame, extractor: FeatureExtractor | None = None) -> list[FeatureMap]:
    """Feature maps from every level, coarsest last."""
    extractor = extractor or FeatureExtractor.default()
    feats, _ = _forward(frame, extractor)
    return [FeatureMap(f) for f in feats]


def _gram(f):
    flat = f.reshape(f.shape[0], -1)
    return np.einsum("ik,jk->ij", flat, flat)


def _feature_terms(pred, target, extractor, w_perc, w_style, need_grad):
    p, t = _pair(pred, target)
    fp, cache = _forward(p, extractor)
    ft, _ = _forward(t, extractor)
    perc = style = 0.0
    dfeats = []
    for a, b in zip(fp, ft):
        kappa = 1.0 / a.size
        diff = a - b
        perc += kappa * np.abs(diff).sum()
        dg = _gram(a) - _gram(b)
        style += kappa * np.abs(dg).sum()
        if need_grad:
            d = w_perc * kappa * np.sign(diff)
            if w_style:
                s = w_style * kappa * np.sign(dg)
                flat = a.reshape(a.shape[0], -1)
                d = d + np.einsum("ij,jk->ik", s + s.T, flat).reshape(a.shape)
            dfeats.append(d)
    grad = _backward(extractor, cache, dfeats, p.shape[2]) if need_grad else None
    return float(perc), float(style), grad


def loss_perceptual(pred, target, extractor: FeatureExtractor | None = None) -> float:
    """Sum over levels of ``kappa_l * ||feat(pred) - feat(target)||_1``."""
    return _feature_terms(pred, target, extractor or FeatureExtractor.default(), 1.0, 0.0, False)[0]


def loss_perceptual_grad(pred, target, extractor: FeatureExtractor | None = None):
    perc, _, g = _feature_terms(pred, target, extractor or FeatureExtractor.default(), 1.0, 0.0, True)
    return perc, g


def loss_style(pred, target, extractor: FeatureExtractor | None = None) -> float:
    """Sum over levels of ``kappa_l * ||Gram(pred) - Gram(target)||_1``.

    Gram matrices are unnormalized channel inner products over space.
    """
    return _feature_terms(pred, target, extractor or FeatureExtractor.default(), 0.0, 1.0, False)[1]


def loss_style_grad(pred, target, extractor: FeatureExtractor | None = None):
    _, style, g = _feature_terms(pred, target, extractor or FeatureExtractor.default(), 0.0, 1.0, True)
    return style, g


@dataclass(frozen=True)
class LossWeights:
    w_l: float = DEFAULT_WEIGHTS[0]
    w_p: float = DEFAULT_WEIGHTS[1]
    w_s: float = DEFAULT_WEIGHTS[2]

    def __post_init__(self):
        for name in ("w_l", "w_p", "w_s"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {val}")


def loss_finetune_grad(pred, target, extractor: FeatureExtractor | None = None,
                       weights: LossWeights | None = None):
    weights = weights or LossWeights()
    extractor = extractor or FeatureExtractor.default()
    l1, g = loss_l1_grad(pred, target)
    total = weights.w_l * l1
    grad = weights.w_l * g
    if weights.w_p or weights.w_s:
        perc, style, gf = _feature_terms(pred, target, extractor, weights.w_p, weights.w_s, True)
        total += weights.w_s * style + weights.w_p * perc
        grad = grad + gf
    return float(total), grad


def loss_finetune(pred, target, extractor: FeatureExtractor | None = None,
                  weights: LossWeights | None = None) -> float:
    """``w_l * L1 + w_s * style + w_p * perceptual``."""
    weights = weights or LossWeights()
    extractor = extractor or FeatureExtractor.default()
    total = weights.w_l * loss_l1(pred, target)
    if weights.w_p or weights.w_s:
        perc, style, _ = _feature_terms(pred, target, extractor, 0.0, 0.0, False)
        total += weights.w_s * style + weights.w_p * perc
    return float(total)


# ------------------------------------------------------------- kernel loss


def loss_kernel_init_grad(ku: np.ndarray, kv: np.ndarray):
    e = middle_one_hot(ku.shape[-1])
    du, dv = ku - e, kv - e
    return float((du * du).sum() + (dv * dv).sum()), 2.0 * du, 2.0 * dv


def loss_kernel_init(kernels: SeparableKernelField) -> float:
    """Summed squared distance of every ``ku``/``kv`` to the middle-one-hot vector."""
    return loss_kernel_init_grad(kernels.ku, kernels.kv)[0]


# ------------------------------------------------------------------ metrics


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def metric_psnr(pred, target) -> float:
    """PSNR in dB with peak 1.0; ``inf`` for identical frames."""
    return psnr_from_mse(loss_l2(pred, target))


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _valid_filter(x, g):
    r = len(g) // 2
    y = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return y[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim_map(pred, target, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every full 11x11 window, per channel ``(H-10, W-10, C)``."""
    p, t = _pair(pred, target)
    if p.shape[0] < SSIM_WINDOW or p.shape[1] < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {p.shape[:2]}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    out = []
    for c in range(p.shape[2]):
        x, y = p[:, :, c], t[:, :, c]
        mx, my = _valid_filter(x, g), _valid_filter(y, g)
        sxx = _valid_filter(x * x, g) - mx * mx
        syy = _valid_filter(y * y, g) - my * my
        sxy = _valid_filter(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        out.append(num / den)
    return np.stack(out, axis=-1)


def metric_ssim(pred, target) -> float:
    """Mean SSIM (Gaussian 11x11, sigma 1.5, K1=0.01, K2=0.03), channels averaged."""
    return float(ssim_map(pred, target).mean())


def all_metrics(pred, target) -> dict[str, float]:
    """L1, L2, PSNR and SSIM (``nan`` when the frame is below the SSIM window)."""
    p, t = _pair(pred, target)
    try:
        ssim = metric_ssim(p, t)
    except DimensionError:
        ssim = float("nan")
    return {"l1": loss_l1(p, t), "l2": loss_l2(p, t), "psnr": metric_psnr(p, t), "ssim": ssim}

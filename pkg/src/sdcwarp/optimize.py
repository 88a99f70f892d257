"""Adam and the phased direct fit of per-pixel transform parameters.

The fit optimizes motion and separable kernels directly (no network) so
that ``warp_sdc(source, params)`` matches ``target``.  It follows a staged
recipe: motion alone under L1, kernels pulled to middle-one-hot, everything
jointly under L1, then everything under the perceptual/style finetune loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Frame
from .flow import block_match
from .losses import (FeatureExtractor, LossWeights, loss_finetune_grad, loss_kernel_init_grad,
                     loss_l1_grad, metric_psnr, metric_ssim)
from .resample import (DimensionError, MotionField, SeparableKernelField, TransformParams,
                       middle_one_hot, sdc_backward_array, warp_sdc_array)

TRAINABLE = ("motion", "kernels", "all")
LOSSES = ("l1", "kernel_init", "finetune")

# reference learning rates and desk-scale iteration counts per phase (mode "paper")
PAPER_LRS = (1e-4, 1e-4, 1e-5, 1e-5)
PAPER_ITERS = (1500, 500, 1000, 500)
QUICK_ITERS = (300, 150, 200)
# direct per-pixel fitting needs larger steps than network training
DIRECT_LR_SCALE = 100.0
DEFAULT_SMOOTHNESS = 0.05
INIT_NOISE = 0.01


class NonFiniteError(FloatingPointError):
    pass


class FitError(RuntimeError):
    pass


# -------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.lr < 0 or self.eps < 0:
            raise ValueError("lr and eps must be >= 0")


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update, no weight decay.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"params {params.shape} and grads {grads.shape} differ")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient")
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    t = state.step + 1
    m = state.beta1 * m + (1 - state.beta1) * grads
    v = state.beta2 * v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=t)


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class FitPhase:
    trainable: str
    loss: str
    lr: float
    iterations: int
    smoothness: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.trainable not in TRAINABLE:
            raise ValueError(f"trainable must be one of {TRAINABLE}, got {self.trainable!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.iterations < 1:
            raise ValueError("iteration count must be >= 1")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ValueError(f"learning rate must be finite and > 0, got {self.lr}")
        if self.smoothness < 0:
            raise ValueError("smoothness must be >= 0")

    @property
    def trains_motion(self) -> bool:
        return self.trainable in ("motion", "all")

    @property
    def trains_kernels(self) -> bool:
        return self.trainable in ("kernels", "all")


@dataclass(frozen=True)
class FitSchedule:
    phases: tuple[FitPhase, ...]

    def __post_init__(self):
        if len(self.phases) < 1:
            raise ValueError("schedule needs at least one phase")

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.phases)


def default_schedule(mode: str = "paper", iterations=None, lr_scale: float = DIRECT_LR_SCALE,
                     smoothness: float = DEFAULT_SMOOTHNESS) -> FitSchedule:
    """Four-phase ``paper`` schedule or its three-phase ``quick`` cut.

    Phases: motion under L1, kernels under the kernel-init loss, all under
    L1, all under the finetune loss (``paper`` only).  Learning rates are
    ``(1e-4, 1e-4, 1e-5, 1e-5) * lr_scale``; ``lr_scale=1`` gives the
    network-training values unchanged.
    """
    if mode not in ("paper", "quick"):
        raise ValueError(f"unknown schedule mode {mode!r}")
    specs = [("motion", "l1", "motion-l1"), ("kernels", "kernel_init", "kernel-init"),
             ("all", "l1", "joint-l1"), ("all", "finetune", "finetune")]
    count = 4 if mode == "paper" else 3
    iters = list(iterations) if iterations is not None else list(PAPER_ITERS if mode == "paper" else QUICK_ITERS)
    if len(iters) != count:
        raise ValueError(f"{mode} schedule needs {count} iteration counts, got {len(iters)}")
    phases = []
    for k in range(count):
        trainable, loss, name = specs[k]
        smooth = smoothness if trainable in ("motion", "all") else 0.0
        phases.append(FitPhase(trainable, loss, PAPER_LRS[k] * lr_scale, int(iters[k]), smooth, name))
    return FitSchedule(tuple(phases))


# ------------------------------------------------------------------ report


@dataclass(frozen=True)
class IterationRecord:
    phase: int
    phase_name: str
    iteration: int
    loss: float
    psnr: float
    ssim: float


@dataclass
class FitReport:
    records: list[IterationRecord]
    params: TransformParams
    prediction: Frame
    phase_end_params: list[TransformParams] = field(default_factory=list)

    def losses(self, phase: int | None = None) -> np.ndarray:
        return np.array([r.loss for r in self.records if phase is None or r.phase == phase])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["phase", "phase_name", "iteration", "loss", "psnr", "ssim"])
            for r in self.records:
                w.writerow([r.phase, r.phase_name, r.iteration, repr(r.loss), repr(r.psnr), repr(r.ssim)])


# --------------------------------------------------------------------- fit


def motion_smoothness_grad(u: np.ndarray, v: np.ndarray, weight: float):
    """``weight * sum of squared neighbour differences of u and v / (H*W)``."""
    h, w = u.shape
    total = 0.0
    gu = np.zeros_like(u)
    gv = np.zeros_like(v)
    if weight == 0:
        return 0.0, gu, gv
    scale = weight / (h * w)
    for f, g in ((u, gu), (v, gv)):
        dx = f[:, 1:] - f[:, :-1]
        dy = f[1:, :] - f[:-1, :]
        total += (dx * dx).sum() + (dy * dy).sum()
        g[:, 1:] += 2 * dx
        g[:, :-1] -= 2 * dx
        g[1:, :] += 2 * dy
        g[:-1, :] -= 2 * dy
    return float(scale * total), scale * gu, scale * gv


def _metrics(pred, target):
    psnr = metric_psnr(pred, target)
    try:
        ssim = metric_ssim(pred, target)
    except DimensionError:
        ssim = float("nan")
    return psnr, ssim


def initial_params(height: int, width: int, n: int, seed: int = 0, noise: float = INIT_NOISE) -> TransformParams:
    """Zero motion and middle-one-hot kernels plus uniform noise in ``[-noise, noise]``."""
    rng = np.random.default_rng(seed)
    e = middle_one_hot(n)
    ku = e + rng.uniform(-noise, noise, (height, width, n))
    kv = e + rng.uniform(-noise, noise, (height, width, n))
    return TransformParams(MotionField.zeros(height, width), SeparableKernelField(ku, kv))


def grid_search_motion(source: np.ndarray, target: np.ndarray, radius: int = 4, block: int = 8):
    """Per-pixel integer motion in ``[-radius, radius]^2`` minimizing a windowed L1 cost."""
    return block_match(source, target, None, None, radius, block)


def fit_transform(source, target, n: int = 11, schedule: FitSchedule | None = None,
                  init: TransformParams | None = None, *, seed: int = 0,
                  extractor: FeatureExtractor | None = None, weights: LossWeights | None = None,
                  grid_search_radius: int | None = None, track_metrics: bool = True,
                  workers: int = 1) -> FitReport:
    """Optimize per-pixel ``TransformParams`` so the SDC of ``source`` matches ``target``.

    Each phase updates only its trainable subset with a fresh Adam state
    (``beta1=0.9``, ``beta2=0.999``, ``eps=1e-8``).  One record is kept
    per iteration, holding the loss and metrics of the parameters *before*
    that iteration's update.

    Parameters
    ----------
    init : TransformParams, optional
        Starting point.  Defaults to :func:`initial_params` with ``seed``.
    grid_search_radius : int, optional
        When set, motion is first seeded by an exhaustive integer search.
    """
    src = source.data if isinstance(source, Frame) else np.asarray(source, dtype=np.float64)
    tgt = target.data if isinstance(target, Frame) else np.asarray(target, dtype=np.float64)
    if src.ndim == 2:
        src, tgt = src[:, :, None], tgt[:, :, None]
    if src.shape != tgt.shape:
        raise DimensionError(f"source {src.shape} and target {tgt.shape} differ")
    h, w = src.shape[:2]
    schedule = schedule or default_schedule("paper")
    if init is None:
        init = initial_params(h, w, n, seed)
    elif init.shape != (h, w):
        raise DimensionError(f"init parameters {init.shape} do not match frames {(h, w)}")
    n = init.n
    needs_features = any(p.loss == "finetune" for p in schedule.phases)
    if needs_features:
        extractor = extractor or FeatureExtractor.default(seed)
    weights = weights or LossWeights()

    u = np.array(init.motion.u)
    v = np.array(init.motion.v)
    ku = np.array(init.kernels.ku)
    kv = np.array(init.kernels.kv)
    if grid_search_radius:
        u, v = grid_search_motion(src, tgt, grid_search_radius)

    records: list[IterationRecord] = []
    ends: list[TransformParams] = []
    it = 0
    for pi, phase in enumerate(schedule.phases):
        label = phase.name or f"{phase.trainable}-{phase.loss}"
        state = AdamState(lr=phase.lr)
        for _ in range(phase.iterations):
            pred = warp_sdc_array(src, u, v, ku, kv, workers)
            if phase.loss == "l1":
                loss, gpred = loss_l1_grad(pred, tgt)
            elif phase.loss == "finetune":
                loss, gpred = loss_finetune_grad(pred, tgt, extractor, weights)
            else:
                loss, gku, gkv = loss_kernel_init_grad(ku, kv)
                gpred = None
            if gpred is not None:
                gu, gv, gku, gkv = sdc_backward_array(src, u, v, ku, kv, gpred, workers)
            else:
                gu = gv = None
            if phase.trains_motion and phase.smoothness:
                s, su, sv = motion_smoothness_grad(u, v, phase.smoothness)
                loss += s
                if gu is None:
                    gu, gv = su, sv
                else:
                    gu, gv = gu + su, gv + sv
            if not math.isfinite(loss):
                raise FitError(f"non-finite loss in phase {pi} ({label}) at iteration {it}")
            psnr, ssim = _metrics(pred, tgt) if track_metrics else (float("nan"), float("nan"))
            records.append(IterationRecord(pi, label, it, float(loss), psnr, ssim))

            parts = []
            if phase.trains_motion:
                parts += [gu if gu is not None else np.zeros_like(u), gv if gv is not None else np.zeros_like(v)]
            if phase.trains_kernels:
                parts += [gku, gkv]
            grad = np.concatenate([p.ravel() for p in parts])
            flat = np.concatenate([a.ravel() for a in
                                   ([u, v] if phase.trains_motion else []) + ([ku, kv] if phase.trains_kernels else [])])
            try:
                flat, state = adam_step(flat, grad, state)
            except NonFiniteError as exc:
                raise FitError(f"non-finite gradient in phase {pi} ({label}) at iteration {it}") from exc
            off = 0
            if phase.trains_motion:
                u = flat[off:off + u.size].reshape(u.shape)
                off += u.size
                v = flat[off:off + v.size].reshape(v.shape)
                off += v.size
            if phase.trains_kernels:
                ku = flat[off:off + ku.size].reshape(ku.shape)
                off += ku.size
                kv = flat[off:off + kv.size].reshape(kv.shape)
            it += 1
        ends.append(TransformParams(MotionField(u, v), SeparableKernelField(ku, kv)))

    final = ends[-1]
    pred = Frame(warp_sdc_array(src, u, v, ku, kv, workers))
    return FitReport(records, final, pred, ends)

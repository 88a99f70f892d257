"""Shared oracles for the test modules: finite differences and scalar references."""

import math

import numpy as np

from sdcwarp.core import Frame
from sdcwarp.losses import loss_kernel_init
from sdcwarp.optimize import FitPhase, FitSchedule, fit_transform
from sdcwarp.resample import (MotionField, SeparableKernelField, TransformParams, expand_separable,
                              sdc_backward_array, warp_kernel, warp_sdc, warp_sdc_array, warp_vector)


def rel_err(analytic, numeric, floor=1e-6):
    """Elementwise relative error with an absolute floor near zero."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def random_sdc_instance(rng, h=None, w=None, c=None, n=None, motion=2.5):
    h = h or int(rng.integers(1, 9))
    w = w or int(rng.integers(1, 9))
    c = c or int(rng.choice([1, 3]))
    n = n or int(rng.choice([1, 3, 5]))
    img = rng.random((h, w, c))
    u = rng.uniform(-motion, motion, (h, w))
    v = rng.uniform(-motion, motion, (h, w))
    ku = rng.normal(size=(h, w, n))
    kv = rng.normal(size=(h, w, n))
    grad = rng.normal(size=(h, w, c))
    return img, u, v, ku, kv, grad


def sdc_fd_errors(img, u, v, ku, kv, grad, step=1e-3):
    """Max relative error of ``sdc_backward_array`` against finite differences.

    Every output pixel depends only on its own parameters, so perturbing one
    parameter slot at all pixels at once yields every per-pixel difference
    quotient in a single forward pass.  Motion entries whose sample
    coordinate lies within ``2 * step`` of an integer knot are checked with
    the one-sided quotient that stays inside the analytic piece.
    """
    h, w = u.shape
    d_u, d_v, d_ku, d_kv = sdc_backward_array(img, u, v, ku, kv, grad)

    def objective(uu, vv, kku, kkv):
        return (grad * warp_sdc_array(img, uu, vv, kku, kkv)).sum(axis=2)

    base = objective(u, v, ku, kv)
    errs = {}
    ys, xs = np.mgrid[0:h, 0:w]
    for name, pos, analytic in (("u", xs + u, d_u), ("v", ys + v, d_v)):
        e = np.zeros((h, w))
        e[:] = step
        plus = objective(u + e, v, ku, kv) if name == "u" else objective(u, v + e, ku, kv)
        minus = objective(u - e, v, ku, kv) if name == "u" else objective(u, v - e, ku, kv)
        frac = pos - np.floor(pos)
        fd = (plus - minus) / (2 * step)
        fd = np.where(frac < 2 * step, (plus - base) / step, fd)
        fd = np.where(frac > 1 - 2 * step, (base - minus) / step, fd)
        errs[name] = rel_err(analytic, fd).max()
    for name, k, analytic in (("ku", ku, d_ku), ("kv", kv, d_kv)):
        worst = 0.0
        for j in range(k.shape[2]):
            kp, km = k.copy(), k.copy()
            kp[:, :, j] += step
            km[:, :, j] -= step
            if name == "ku":
                fd = (objective(u, v, kp, kv) - objective(u, v, km, kv)) / (2 * step)
            else:
                fd = (objective(u, v, ku, kp) - objective(u, v, ku, km)) / (2 * step)
            worst = max(worst, rel_err(analytic[:, :, j], fd).max())
        errs[name] = worst
    return errs


def scalar_fd(fn, x, idx, step=1e-6):
    """Central difference of scalar ``fn`` at flat indices ``idx`` of array ``x``."""
    out = []
    for i in idx:
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        out.append((fn(xp) - fn(xm)) / (2 * step))
    return np.array(out)


def non_composition_witness():
    """SDC with sub-pixel motion vs. kernel-after-vector on a ramp with a step."""
    row = np.array([0.0, 0.1, 0.2, 0.3, 1.0, 1.1, 1.2, 1.3])
    f = Frame(np.tile(row, (3, 1)))
    h, w = f.height, f.width
    motion = MotionField.constant(h, w, 0.5, 0.0)
    avg = np.full((h, w, 3), 1 / 3)
    params = TransformParams(motion, SeparableKernelField(avg, avg))
    sdc = warp_sdc(f, params).data
    composed = warp_kernel(warp_vector(f, motion), expand_separable(params.kernels)).data
    return np.max(np.abs(sdc - composed))


def run_kernel_init(seed: int, n: int, iterations: int = 500):
    """Kernels-only fit under the kernel-init loss from uniform[-1, 1] kernels."""
    rng = np.random.default_rng(seed)
    h, w = 4, 4
    init = TransformParams(MotionField.zeros(h, w),
                           SeparableKernelField(rng.uniform(-1, 1, (h, w, n)), rng.uniform(-1, 1, (h, w, n))))
    schedule = FitSchedule((FitPhase("kernels", "kernel_init", 1e-2, iterations),))
    report = fit_transform(np.zeros((h, w)), np.zeros((h, w)), init=init, schedule=schedule, track_metrics=False)
    losses = np.append(report.losses(), loss_kernel_init(report.params.kernels))
    return losses


def ref_ssim(x, y):
    """Window-by-window SSIM with a separable Gaussian written out as a 2-D table."""
    g = [math.exp(-((k - 5) ** 2) / (2 * 1.5 ** 2)) for k in range(11)]
    z = sum(g)
    g = [v / z for v in g]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w, c = x.shape
    scores = []
    for ch in range(c):
        for i in range(h - 10):
            for j in range(w - 10):
                mx = my = sxx = syy = sxy = 0.0
                for a in range(11):
                    for b in range(11):
                        wt = g[a] * g[b]
                        p, q = x[i + a, j + b, ch], y[i + a, j + b, ch]
                        mx += wt * p
                        my += wt * q
                        sxx += wt * p * p
                        syy += wt * q * q
                        sxy += wt * p * q
                sxx -= mx * mx
                syy -= my * my
                sxy -= mx * my
                scores.append((2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2)))
    return sum(scores) / len(scores)


def ref_psnr(x, y):
    flat = list(zip(np.ravel(x), np.ravel(y)))
    mse = sum((a - b) ** 2 for a, b in flat) / len(flat)
    return 10 * math.log10(1.0 / mse)


def check_loss_gradient(grad_fn, value_fn, pred, target, rng, count=24, step=1e-6, tol=1e-3):
    _, g = grad_fn(pred, target)
    idx = rng.choice(pred.size, size=min(count, pred.size), replace=False)
    fd = scalar_fd(lambda x: value_fn(x, target), pred, idx, step)
    return rel_err(g.ravel()[idx], fd).max() <= tol

"""Pixel, perceptual and style losses, plus PSNR and SSIM."""
import numpy as np

from sdcwarp.core import Frame, make_texture
from sdcwarp.losses import (FeatureExtractor, extract_features, loss_finetune, loss_l1, loss_l2,
                            loss_perceptual, loss_style, metric_psnr, metric_ssim)

a = Frame(make_texture(32, 32, seed=1))
noisy = Frame(np.clip(a.data + np.random.default_rng(0).normal(0, 0.05, a.data.shape), 0, 1))

print("L1", loss_l1(a, noisy), "L2", loss_l2(a, noisy))
print("PSNR", metric_psnr(a, noisy), "SSIM", metric_ssim(a, noisy))
print("PSNR of identical frames:", metric_psnr(a, a))

ext = FeatureExtractor.default()
for level, fm in enumerate(extract_features(a, ext)):
    print("feature level", level, "shape", fm.data.shape, "kappa", fm.kappa)
print("perceptual", loss_perceptual(a, noisy, ext), "style", loss_style(a, noisy, ext))
print("finetune total", loss_finetune(a, noisy, ext))

flat = Frame(np.full((32, 32), 0.4))
print("style of two flat frames:", loss_style(flat, flat, ext))

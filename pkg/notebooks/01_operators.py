"""Walk through the three warping operators and how they relate.

Run with ``python notebooks/01_operators.py``.
"""
import numpy as np

from sdcwarp.core import Frame, make_texture
from sdcwarp.pipeline import memory_report
from sdcwarp.resample import (MotionField, SeparableKernelField, TransformParams, expand_separable,
                              warp_kernel, warp_sdc, warp_vector)

img = Frame(make_texture(24, 32, seed=0))
h, w = img.height, img.width

# a sub-pixel shift: every output pixel reads 1.25 px to the right
motion = MotionField.constant(h, w, 1.25, 0.0)
shifted = warp_vector(img, motion)
print("vector warp, sample at (5,5):", shifted.data[5, 5, 0], "vs source (6.25,5) blend")

# SDC with one-hot kernels is the vector warp
ident = TransformParams(motion, SeparableKernelField.identity(h, w, 5))
print("SDC(one-hot) == vector warp:", np.allclose(warp_sdc(img, ident).data, shifted.data, atol=1e-12))

# SDC with zero motion is a plain per-pixel separable convolution
rng = np.random.default_rng(0)
kernels = SeparableKernelField(rng.random((h, w, 5)), rng.random((h, w, 5)))
still = TransformParams(MotionField.zeros(h, w), kernels)
direct = warp_kernel(img, expand_separable(kernels))
print("SDC(zero motion) == kernel warp:", np.allclose(warp_sdc(img, still).data, direct.data, atol=1e-12))

# with fractional motion and a wide kernel the two steps do not commute
avg = SeparableKernelField(np.full((h, w, 3), 1 / 3), np.full((h, w, 3), 1 / 3))
mixed = TransformParams(motion, avg)
sdc = warp_sdc(img, mixed).data
two_step = warp_kernel(warp_vector(img, motion), expand_separable(avg)).data
print("max |SDC - kernel(vector)|:", np.abs(sdc - two_step).max())

# parameter budget per pixel
print("parameters per pixel for n=11:", memory_report(1, 1, 11)["params_per_pixel"])

"""A bright square sliding over a dark background.

Shows why the naive backward flow leaves a copy of the square behind and
how the corrected sampling field fills the vacated strip.
"""
import numpy as np

from sdcwarp.core import make_translating_square
from sdcwarp.resample import MotionField, warp_vector

scene = make_translating_square((1, 8), square_size=2, speed=1, steps=3)
for k, f in enumerate(scene.frames):
    print(f"frame {k}:", f.data[0, :, 0].astype(int).tolist())

src, dst = scene.frames[1], scene.frames[2]
naive = warp_vector(src, MotionField.from_flow(scene.gt_backward_flow[1])).data[0, :, 0]
fixed = warp_vector(src, MotionField.from_flow(scene.correct_sampling[1])).data[0, :, 0]
print("naive flow u:    ", scene.gt_backward_flow[1].u[0].tolist())
print("corrected u:     ", scene.correct_sampling[1].u[0].tolist())
print("naive warp:      ", naive.astype(int).tolist())
print("corrected warp:  ", fixed.astype(int).tolist())
print("target:          ", dst.data[0, :, 0].astype(int).tolist())
print("corrected exact:", np.array_equal(fixed, dst.data[0, :, 0]))

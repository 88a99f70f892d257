"""Fit per-pixel SDC parameters that map one frame onto the next.

A short schedule keeps this quick; ``default_schedule("paper")`` gives the
full four-phase run.
"""
from sdcwarp.core import Frame, make_texture
from sdcwarp.losses import loss_l1
from sdcwarp.optimize import default_schedule, fit_transform
from sdcwarp.resample import MotionField, warp_vector

src = Frame(make_texture(24, 24, seed=2))
# known warp: every pixel samples (2, -1) away
tgt = warp_vector(src, MotionField.constant(24, 24, 2.0, -1.0))

schedule = default_schedule("quick", iterations=(150, 100, 100))
report = fit_transform(src, tgt, n=5, schedule=schedule, seed=0)

for p in range(len(schedule.phases)):
    losses = report.losses(p)
    print(f"phase {p} ({schedule.phases[p].name}): loss {losses[0]:.4f} -> {losses[-1]:.4f}")
print("copy L1", loss_l1(src, tgt), "fitted L1", loss_l1(report.prediction, tgt))
print("mean motion", report.params.motion.u.mean(), report.params.motion.v.mean())

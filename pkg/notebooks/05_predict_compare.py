"""Predict future frames of a moving square and compare warping methods."""
from sdcwarp.core import make_translating_square, make_translating_texture
from sdcwarp.pipeline import (Config, SequenceInput, centroid, compare_methods, predict_multi,
                              report_csv)

cfg = Config(predict_iterations=(60, 40, 40))

scene = make_translating_square((24, 48), 6, 1, 10)
seq = SequenceInput(scene.frames[:5])
run = predict_multi(seq, "sdc", 3, config=cfg, ground_truth=scene.frames[5:8])
for k, (pred, m) in enumerate(zip(run.predictions, run.metrics)):
    gx, gy = centroid(scene.frames[5 + k])
    px, py = centroid(pred)
    print(f"step {k + 1}: centroid ({px:.2f}, {py:.2f}) truth ({gx:.2f}, {gy:.2f}) psnr {m['psnr']:.2f}")

frames = make_translating_texture(24, 24, (1, 0), 4, seed=7)
rows = compare_methods(SequenceInput(frames[:3]), frames[3], cfg)
print(report_csv(rows))

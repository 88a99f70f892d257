import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdcwarp.core import FlowField, Frame, make_texture, make_translating_square, make_translating_texture
from sdcwarp.flow import estimate_flow
from sdcwarp.losses import loss_l1, loss_l2, metric_psnr
from sdcwarp.pipeline import (Config, SequenceInput, centroid, compare_methods, extrapolate_params,
                              format_memory_report, interior, memory_estimate, memory_report,
                              predict_multi, predict_next, report_csv, tent_kernels)
from sdcwarp.resample import (DimensionError, MotionField, SeparableKernelField, TransformParams,
                              warp_sdc, warp_vector)

FAST = Config(predict_iterations=(60, 40, 40))

# -------------------------------------------------------------------- flow


def test_flow_identical_frames_is_zero():
    tex = Frame(make_texture(32, 32, seed=3))
    flow = estimate_flow(tex, tex)
    assert not np.any(flow.u) and not np.any(flow.v)


def test_flow_recovers_global_shift():
    big = make_texture(60, 60, seed=4)
    prev = Frame(big[10:42, 10:42])
    nxt = Frame(big[8:40, 13:45])  # content moved by (-3, +2): sources sit at (+3, -2)
    flow = estimate_flow(prev, nxt)
    assert abs(np.median(flow.u) - 3) <= 0.5 and abs(np.median(flow.v) + 2) <= 0.5


def test_flow_on_square_scene():
    s = make_translating_square((24, 32), 8, 1, 2)
    flow = estimate_flow(*s.frames)
    gt = s.gt_backward_flow[0]
    square = gt.u != 0
    core = square & np.roll(square, 2, axis=1) & np.roll(square, -2, axis=1)
    assert np.all(flow.u[core] == -1)
    assert np.all(flow.u[:, -6:] == 0) and np.all(flow.v[:, -6:] == 0)


def test_flow_errors():
    with pytest.raises(DimensionError):
        estimate_flow(np.zeros((16, 16)), np.zeros((16, 17)))
    with pytest.raises(DimensionError):
        estimate_flow(np.zeros((7, 16)), np.zeros((7, 16)))


# ---------------------------------------------------------------- sequence


def test_sequence_validation():
    f = Frame(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        SequenceInput([f])
    with pytest.raises(DimensionError):
        SequenceInput([f, Frame(np.zeros((4, 5)))])
    with pytest.raises(ValueError):
        SequenceInput([f, f], [FlowField.zeros(4, 4)] * 2)


def test_sequence_advance_keeps_window():
    frames = [Frame(np.full((8, 8), k / 10)) for k in range(5)]
    seq = SequenceInput(frames).advance(Frame(np.ones((8, 8))), 5)
    assert len(seq.frames) == 5 and seq.frames[0] is frames[1] and seq.last.data[0, 0, 0] == 1.0


# ------------------------------------------------------------- extrapolate


def test_tent_kernels_reproduce_bilinear(rng):
    h, w = 10, 11
    flow = FlowField(rng.uniform(-2, 2, (h, w)), rng.uniform(-2, 2, (h, w)))
    img = Frame(rng.random((h, w, 1)))
    by_kernel = warp_sdc(img, TransformParams(MotionField.zeros(h, w), tent_kernels(flow, 5))).data
    by_vector = warp_vector(img, MotionField.from_flow(flow)).data
    assert np.max(np.abs(by_kernel - by_vector)) <= 1e-12


def test_extrapolate_constant_field_is_unchanged():
    p = TransformParams(MotionField.constant(6, 7, -1.0, 0.0), SeparableKernelField.identity(6, 7, 3))
    q = extrapolate_params(p)
    assert np.array_equal(q.motion.u, p.motion.u) and np.array_equal(q.kernels.ku, p.kernels.ku)


def test_extrapolate_moves_parameters_along_motion():
    u = np.zeros((1, 6))
    u[0, 2:4] = -1.0  # square pixels sample one to the left
    q = extrapolate_params(TransformParams(MotionField(u, np.zeros((1, 6))), SeparableKernelField.identity(1, 6, 1)))
    # the square's vectors move right; the vacated pixel keeps its own -1, the corrected fill
    assert q.motion.u[0].tolist() == [0, 0, -1, -1, -1, 0]


# ---------------------------------------------------------------- predict


def _static(n=5, size=24):
    f = Frame(make_texture(size, size, seed=2))
    return SequenceInput([f] * n)


def test_predict_static_sequence():
    seq = _static()
    pred = predict_next(seq, "sdc", config=FAST)
    assert loss_l1(pred, seq.last) <= 1e-3


def test_predict_multi_static_sequence():
    seq = _static()
    run = predict_multi(seq, "sdc", 5, config=FAST, ground_truth=[seq.last] * 5)
    assert run.steps == 5 and len(run.metrics) == 5
    assert all(loss_l1(p, seq.last) <= 5e-3 for p in run.predictions)
    ssim = [m["ssim"] for m in run.metrics]
    for a, b in zip(ssim, ssim[1:]):
        assert a - b <= 1e-3


def test_predict_multi_one_step_equals_predict_next():
    seq = SequenceInput(make_translating_texture(24, 24, (1, 0), 3, seed=5))
    single = predict_next(seq, "vector", config=FAST)
    run = predict_multi(seq, "vector", 1, config=FAST)
    assert np.array_equal(single.data, run.predictions[0].data)


def test_predict_square_with_correct_sampling_file(tmp_path):
    s = make_translating_square((1, 6), 2, 1, 3)
    # corrected sampling for the frame 1 -> 2 step, applied to frame 1
    params = TransformParams(MotionField.from_flow(s.correct_sampling[1]), SeparableKernelField.identity(1, 6, 1))
    path = tmp_path / "fix.sdc"
    params.save(path)
    seq = SequenceInput(s.frames[:2])
    pred = predict_next(seq, "vector", path)
    assert np.array_equal(pred.data, s.frames[2].data)


def test_predict_translating_texture_sdc():
    frames = make_translating_texture(32, 32, (1, 0), 4, seed=6)
    seq = SequenceInput(frames[:3])
    pred = predict_next(seq, "sdc")
    assert metric_psnr(interior(pred.data, 6), interior(frames[3].data, 6)) >= 30.0


def test_predict_errors(tmp_path):
    seq = _static(2, 16)
    with pytest.raises(FileNotFoundError):
        predict_next(seq, "sdc", tmp_path / "missing.sdc")
    with pytest.raises(ValueError):
        predict_next(seq, "warp", TransformParams.identity(16, 16, 1))
    with pytest.raises(DimensionError):
        predict_next(seq, "sdc", TransformParams.identity(8, 8, 1))
    with pytest.raises(ValueError):
        predict_multi(seq, "sdc", 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), method=st.sampled_from(["vector", "sdc"]))
def test_output_is_resampling_of_newest_frame(seed, method):
    r = np.random.default_rng(seed)
    frames = [Frame(r.random((9, 10, 1))) for _ in range(4)]
    motion = MotionField(r.uniform(-4, 4, (9, 10)), r.uniform(-4, 4, (9, 10)))
    params = TransformParams(motion, SeparableKernelField.identity(9, 10, 3))
    pred = predict_next(SequenceInput(frames), method, params).data
    last = frames[-1].data
    # convex bilinear blends may round one ulp past the extremes
    assert pred.min() >= last.min() - 1e-15 and pred.max() <= last.max() + 1e-15
    zeroed = SequenceInput([Frame(np.zeros((9, 10)))] * 3 + [frames[-1]])
    assert np.array_equal(predict_next(zeroed, method, params).data, pred)


def test_square_multi_step_tracks_centroid():
    s = make_translating_square((24, 48), 6, 1, 10)
    seq = SequenceInput(s.frames[:5])
    truth = s.frames[5:]
    run = predict_multi(seq, "sdc", 3, config=FAST, ground_truth=truth)
    for k, (pred, gt) in enumerate(zip(run.predictions, truth)):
        cx, cy = centroid(pred)
        gx, gy = centroid(gt)
        assert abs(cx - gx) <= 0.5 and abs(cy - gy) <= 0.5, k
        assert loss_l2(pred, gt) < loss_l2(seq.last, gt)


# ---------------------------------------------------------------- compare


def test_compare_schema_and_static():
    seq = _static(3, 16)
    text = report_csv(compare_methods(seq, seq.last, FAST))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["method"] for r in rows] == ["copylast", "vector", "kernel", "sdc"]
    assert list(rows[0]) == ["method", "l1", "l2", "psnr", "ssim"]
    assert float(rows[0]["ssim"]) == 1.0
    assert all(float(r["ssim"]) >= 0.99 for r in rows)


def test_compare_translating_texture_beats_copylast():
    frames = make_translating_texture(24, 24, (1, 0), 4, seed=7)
    rows = compare_methods(SequenceInput(frames[:3]), frames[3], FAST)
    base = rows[0]["l2"]
    assert all(r["l2"] < base for r in rows[1:])


def test_compare_is_deterministic():
    frames = make_translating_texture(16, 16, (1, 0), 3, seed=8)
    seq = SequenceInput(frames[:2])
    assert report_csv(compare_methods(seq, frames[2], FAST)) == report_csv(compare_methods(seq, frames[2], FAST))


# ------------------------------------------------------------------ memory


def test_memory_examples():
    assert memory_estimate(1920, 1080, 11, 4) == 199_065_600
    assert memory_report(1, 1, 1)["params_per_pixel"] == 4
    rep = memory_report(1920, 1080, 11, 51, 4)
    assert rep["kernel_bytes"] == 2601 * 1920 * 1080 * 4
    assert rep["kernel_bytes"] >= 100 * rep["sdc_bytes"]
    text = format_memory_report(1920, 1080)
    assert "199,065,600" in text and "174MB" in text
    with pytest.raises(ValueError):
        memory_estimate(10, 10, 4)


# ------------------------------------------------------------------ config


def test_config_from_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("iterations = 5, 4, 3, 2\nlr_scale = 10  # scaled\nextractor_seed = 3\n")
    cfg = Config.from_file(path)
    assert cfg.iterations == (5, 4, 3, 2) and cfg.lr_scale == 10.0 and cfg.extractor_seed == 3
    assert [p.iterations for p in cfg.schedule("paper").phases] == [5, 4, 3, 2]
    path.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        Config.from_file(path)

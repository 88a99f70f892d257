import csv
import subprocess
import sys

import numpy as np
import pytest

from sdcwarp.cli import main
from sdcwarp.core import Frame, load_frame, make_translating_texture, read_flo, save_frame
from sdcwarp.resample import TransformParams


@pytest.fixture
def texture_dir(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    frames = make_translating_texture(16, 16, (1, 0), 4, seed=3)
    for k, f in enumerate(frames[:3]):
        save_frame(f, d / f"f{k}.png")
    save_frame(frames[3], tmp_path / "gt.png")
    return d


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text("iterations = 10 6 6 4\nquick_iterations = 8 4 4\npredict_iterations = 8 4 4\n")
    return path


def test_synth(tmp_path, capsys):
    out = tmp_path / "sq"
    assert main(["synth", "--scene", "square", "--width", "6", "--height", "1", "--size", "2",
                 "--speed", "1", "--steps", "2", "--out", str(out)]) == 0
    assert load_frame(out / "frame_000.png").data[0, :, 0].tolist() == [0, 1, 1, 0, 0, 0]
    assert read_flo(out / "gt_flow_001.flo").u[0].tolist() == [0, 0, -1, -1, 0, 0]
    assert read_flo(out / "correct_001.flo").u[0].tolist() == [0, -1, -1, -1, 0, 0]
    assert "wrote 2 frames" in capsys.readouterr().out


def test_flow(tmp_path, texture_dir):
    out = tmp_path / "f.flo"
    assert main(["flow", "--prev", str(texture_dir / "f0.png"), "--next", str(texture_dir / "f1.png"),
                 "--out", str(out)]) == 0
    assert np.median(read_flo(out).u) == -1


def test_fit(tmp_path, texture_dir, fast_config):
    out = tmp_path / "p.sdc"
    report = tmp_path / "r.csv"
    assert main(["fit", "--source", str(texture_dir / "f0.png"), "--target", str(texture_dir / "f1.png"),
                 "--n", "3", "--schedule", "paper", "--out", str(out), "--report", str(report),
                 "--config", str(fast_config)]) == 0
    assert TransformParams.load(out).n == 3
    rows = list(csv.DictReader(report.open()))
    assert len(rows) == 26 and rows[0]["phase_name"] == "motion-l1"
    assert (tmp_path / "p_pred.png").exists()


def test_predict(tmp_path, texture_dir, fast_config):
    out = tmp_path / "pred"
    assert main(["predict", "--frames", str(texture_dir), "--method", "vector", "--steps", "2",
                 "--out", str(out), "--config", str(fast_config)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["pred_001.png", "pred_002.png"]


def test_predict_with_params_files(tmp_path, texture_dir):
    sdc = tmp_path / "id.sdc"
    TransformParams.identity(16, 16, 3).save(sdc)
    out = tmp_path / "a"
    assert main(["predict", "--frames", str(texture_dir), "--method", "sdc", "--params", str(sdc),
                 "--out", str(out)]) == 0
    assert np.array_equal(load_frame(out / "pred_001.png").data, load_frame(texture_dir / "f2.png").data)
    flo = tmp_path / "f.flo"
    main(["flow", "--prev", str(texture_dir / "f1.png"), "--next", str(texture_dir / "f2.png"), "--out", str(flo)])
    assert main(["predict", "--frames", str(texture_dir), "--method", "vector", "--params", str(flo),
                 "--out", str(tmp_path / "b")]) == 0


def test_compare(tmp_path, texture_dir, fast_config, capsys):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--frames", str(texture_dir), "--gt", str(tmp_path / "gt.png"), "--out", str(out),
                 "--config", str(fast_config)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["method"] for r in rows] == ["copylast", "vector", "kernel", "sdc"]
    assert "copylast" in capsys.readouterr().out


def test_mem(capsys):
    assert main(["mem", "--width", "1920", "--height", "1080", "--n", "11"]) == 0
    text = capsys.readouterr().out
    assert "199,065,600 bytes" in text and "174MB" in text


def test_bad_arguments(tmp_path):
    with pytest.raises(SystemExit):
        main(["mem", "--width", "10"])
    (tmp_path / "one").mkdir()
    save_frame(Frame(np.zeros((8, 8))), tmp_path / "one" / "a.png")
    with pytest.raises(SystemExit):
        main(["predict", "--frames", str(tmp_path / "one"), "--out", str(tmp_path / "o")])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sdcwarp", "mem", "--width", "4", "--height", "2", "--n", "1"],
                         capture_output=True, text=True, check=True)
    assert "128 bytes" in res.stdout

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cider import fixtures, imageio
from cider import pipeline as pl
from cider import tensor as tc
from cider.cli import main

GOLDEN = Path(__file__).parent / "golden" / "deconvolve_chart64_t10.json"


@pytest.fixture
def work(tmp_path):
    k = tc.gaussian_kernel(5, 1.0)
    x = fixtures.test_chart(64)
    y = pl.simulate_blur(x, pl.DegradationSpec(k, "gaussian", 0.01), seed=1)
    imageio.write_image(tmp_path / "x.png", x)
    imageio.write_image(tmp_path / "y.png", y)
    imageio.write_image(tmp_path / "y.pfm", y)
    tc.save_kernel(tmp_path / "k.txt", k)
    tc.save_kernel(tmp_path / "delta.txt", tc.delta_kernel())
    return tmp_path


def run(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_metrics_identical(work, capsys):
    code, out, _ = run(capsys, "metrics", "--a", work / "x.png", "--b", work / "x.png")
    assert code == 0 and out == "psnr=100.000000 ssim=1.000000\n"


def test_rl_delta_one_iteration(work, capsys):
    code, out, _ = run(capsys, "rl", "--input", work / "y.png", "--kernel", work / "delta.txt",
                       "--output", work / "r.png", "--iters", 1)
    assert code == 0 and out.startswith("output=")
    a, b = imageio.read_image(work / "y.png"), imageio.read_image(work / "r.png")
    assert np.max(np.abs(a - b)) <= 1 / 255


def test_deconvolve_golden(work, capsys):
    code, out, err = run(capsys, "deconvolve", "--input", work / "y.pfm", "--kernel", work / "k.txt",
                         "--output", work / "o.pfm", "--iters", 10)
    assert code == 0 and len(out.strip().splitlines()) == 1
    rep = json.loads((work / "o.pfm.json").read_text())
    gold = json.loads(GOLDEN.read_text())
    assert rep["config_hash"] == gold["config_hash"]
    assert rep["param_count"] == gold["param_count"] == 387_321
    assert np.allclose(rep["loss_trace"], gold["loss_trace"], rtol=1e-5, atol=0)
    assert imageio.read_image(work / "o.pfm").shape == (64, 64)
    assert (work / "o.pfm.loss.png").exists()


def test_deconvolve_deterministic(work, capsys):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "deconvolve", "--input", work / "y.png", "--kernel", work / "k.txt",
                         "--output", work / f"{name}.png", "--report", work / "rep.json", "--iters", 4)
        assert code == 0
        rep = json.loads((work / "rep.json").read_text())
        rep.pop("timing")
        rep.pop("output")
        (work / f"{name}.rep").write_text(json.dumps(rep, sort_keys=True))
    assert (work / "a.png").read_bytes() == (work / "b.png").read_bytes()
    assert (work / "a.rep").read_bytes() == (work / "b.rep").read_bytes()


def test_config_file_and_flag_override(work, capsys):
    cfg = pl.RestoreConfig(iterations=50, seed=3).to_dict()
    (work / "cfg.json").write_text(json.dumps(cfg))
    code, _, _ = run(capsys, "deconvolve", "--input", work / "y.png", "--kernel", work / "k.txt",
                     "--output", work / "o.png", "--config", work / "cfg.json", "--iters", 2)
    rep = json.loads((work / "o.png.json").read_text())
    assert code == 0 and rep["config"]["iterations"] == 2 and rep["config"]["seed"] == 3
    assert len(rep["loss_trace"]) == 2


def test_bad_config_exit_1(work, capsys):
    (work / "cfg.json").write_text('{"iterations": 0}')
    code, _, err = run(capsys, "deconvolve", "--input", work / "y.png", "--kernel", work / "k.txt",
                       "--output", work / "o.png", "--config", work / "cfg.json")
    assert code == 1 and "iterations" in err


def test_microscopy_background(work, capsys):
    img = fixtures.spots_on_background(128, seed=0)[0]
    imageio.write_image(work / "s.pfm", img)
    code, out, _ = run(capsys, "deconvolve", "--input", work / "s.pfm", "--kernel", work / "k.txt",
                       "--output", work / "o.pfm", "--iters", 2, "--microscopy", "--save-background", work / "bg.pfm")
    assert code == 0
    assert imageio.read_image(work / "bg.pfm").shape == (128, 128)
    code, _, _ = run(capsys, "background", "--input", work / "s.pfm", "--output", work / "c.pfm",
                     "--save-background", work / "bg2.pfm")
    assert code == 0
    assert np.array_equal(imageio.read_image(work / "bg.pfm"), imageio.read_image(work / "bg2.pfm"))


def test_simulate_command(work, capsys):
    code, out, _ = run(capsys, "simulate", "--input", work / "x.png", "--kernel", work / "delta.txt",
                       "--output", work / "s.png")
    assert code == 0 and out.startswith("output=")
    assert np.array_equal(imageio.read_image(work / "s.png"), imageio.read_image(work / "x.png"))


def test_rgb_processed_per_channel(work, capsys):
    rgb = np.stack([fixtures.test_chart(32), 1 - fixtures.test_chart(32), np.full((32, 32), 0.5)])
    imageio.write_image(work / "rgb.png", rgb)
    code, _, _ = run(capsys, "rl", "--input", work / "rgb.png", "--kernel", work / "k.txt",
                     "--output", work / "rgb_out.png", "--iters", 3)
    assert code == 0 and imageio.read_image(work / "rgb_out.png").shape == (3, 32, 32)


def test_benchmark_command(work, capsys):
    (work / "data").mkdir()
    (work / "kern").mkdir()
    imageio.write_image(work / "data" / "a.png", fixtures.test_chart(32))
    tc.save_kernel(work / "kern" / "g.txt", tc.gaussian_kernel(3, 0.7))
    (work / "cfg.json").write_text(json.dumps({"channels": [4, 4, 4], "rl_iterations": 2}))
    code, out, _ = run(capsys, "benchmark", "--input", work / "data", "--kernel", work / "kern",
                       "--report", work / "out" / "bench.json", "--iters", 2, "--config", work / "cfg.json")
    assert code == 0 and "records=1" in out
    assert (work / "out" / "bench.csv").exists() and (work / "out" / "bench_ssim.png").exists()


@pytest.mark.parametrize("argv", [
    ["metrics", "--a", "x.png", "--b", "x.png", "--bogus"],
    ["explode"],
    [],
    ["deconvolve", "--input", "y.png"],
])
def test_usage_errors_exit_1(work, capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == "" and "usage" in err


def test_missing_input_exit_1(work, capsys):
    code, _, err = run(capsys, "metrics", "--a", work / "nope.png", "--b", work / "x.png")
    assert code == 1 and "no such file" in err


def test_internal_error_exit_2(work, capsys, monkeypatch):
    import cider.cli as cli

    monkeypatch.setattr(cli, "psnr", lambda a, b: 1 / 0)
    code, _, _ = run(capsys, "metrics", "--a", work / "x.png", "--b", work / "x.png")
    assert code == 2


def test_console_script(work):
    proc = subprocess.run([sys.executable, "-m", "cider.cli", "metrics", "--a", str(work / "x.png"),
                           "--b", str(work / "x.png")], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "psnr=100.000000 ssim=1.000000\n"

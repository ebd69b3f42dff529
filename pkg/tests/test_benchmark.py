import csv
import json

import numpy as np
import pytest

from cider import imageio
from cider import tensor as tc
from cider.benchmark import METRICS, benchmark
from cider.errors import InputError
from cider.pipeline import RestoreConfig

FAST = RestoreConfig(iterations=2, rl_iterations=2, channels=(4, 4, 4), skip_channels=2)


def make_dataset(root, n_images, kernels):
    data, kdir = root / "sharp", root / "kernels"
    data.mkdir()
    kdir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(n_images):
        imageio.write_image(data / f"im{i + 1}.png", rng.random((16, 16)))
    for name, k in kernels.items():
        tc.save_kernel(kdir / f"{name}.txt", k)
    return data, kdir


def test_degenerate_delta_benchmark(tmp_path):
    data, kdir = make_dataset(tmp_path, 1, {"delta": tc.delta_kernel()})
    rep = benchmark(data, kdir, FAST, tmp_path / "r.json", noise_sigma=0.0, rl_iterations=2)
    (rec,) = rep.records
    assert rec.psnr_input == 100.0 and rec.error is None
    assert rec.psnr_cider is not None and rec.psnr_rl_baseline is not None
    assert rec.ssim_cider is not None and rec.ssim_rl_baseline is not None
    assert rec.config_hash == FAST.config_hash()


def test_levin_layout_and_outputs(tmp_path):
    kernels = {f"k{j + 1}": tc.Kernel.normalized(np.random.default_rng(j).random((3, 3))) for j in range(8)}
    data, kdir = make_dataset(tmp_path, 4, kernels)
    out = tmp_path / "report" / "levin.json"
    rep = benchmark(data, kdir, FAST, out, rl_iterations=2)
    assert len(rep.records) == 32 and len(rep.per_image) == 4
    assert all(m["count"] == 8 for m in rep.per_image.values())
    for m in METRICS:
        vals = [getattr(r, m) for r in rep.records]
        assert abs(rep.aggregate[m] - sum(vals) / len(vals)) <= 1e-9
        for name, means in rep.per_image.items():
            own = [getattr(r, m) for r in rep.records if r.name == name]
            assert abs(means[m] - sum(own) / len(own)) <= 1e-9
    saved = json.loads(out.read_text())
    assert set(saved["records"][0]) >= {"name", "kernel", "wall_seconds", "config_hash", *METRICS}
    rows = list(csv.reader(open(out.with_suffix(".csv"))))
    assert len(rows) == 1 + 32 + 4 + 1
    for fig in ("levin_ssim.png", "levin_psnr.png", "levin_scatter.png"):
        assert (out.parent / fig).read_bytes()[:4] == b"\x89PNG"


def _strip_timing(text):
    d = json.loads(text)
    for r in d["records"]:
        r.pop("wall_seconds")
    return json.dumps(d, sort_keys=True)


def test_rerun_is_byte_identical(tmp_path):
    data, kdir = make_dataset(tmp_path, 2, {"g": tc.gaussian_kernel(3, 0.7)})
    a = benchmark(data, kdir, FAST, tmp_path / "a.json", rl_iterations=2, figures=False)
    b = benchmark(data, kdir, FAST, tmp_path / "b.json", rl_iterations=2, figures=False)
    assert a.to_json(timing=False) == b.to_json(timing=False)
    assert _strip_timing((tmp_path / "a.json").read_text()) == _strip_timing((tmp_path / "b.json").read_text())


def test_preblurred_file_is_used(tmp_path):
    data, kdir = make_dataset(tmp_path, 1, {"g": tc.gaussian_kernel(3, 0.7)})
    (data / "blurred").mkdir()
    sharp = imageio.read_image(data / "im1.png")
    imageio.write_image(data / "blurred" / "im1_g.png", sharp)
    rep = benchmark(data, kdir, FAST, None, rl_iterations=2)
    assert rep.records[0].psnr_input == 100.0


def test_failures_are_recorded(tmp_path):
    data, kdir = make_dataset(tmp_path, 1, {"g": tc.gaussian_kernel(3, 0.7)})
    (data / "broken.png").write_bytes(b"garbage")
    rep = benchmark(data, kdir, FAST, tmp_path / "r.json", rl_iterations=2)
    errs = [r for r in rep.records if r.error]
    assert len(rep.records) == 2 and len(errs) == 1 and errs[0].name == "broken"
    assert rep.aggregate["count"] == 1


def test_empty_dataset(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "k").mkdir()
    with pytest.raises(InputError):
        benchmark(tmp_path / "d", tmp_path / "k", FAST)

"""Non-blind deblurring benchmark over a directory of sharp images and kernels.

Every (image, kernel) pair is degraded (or a pre-degraded file is loaded),
restored with both the Richardson-Lucy baseline and CiDeR, and scored with
PSNR and SSIM against the sharp image. Results go to a JSON report, a CSV
table and a few PNG figures next to it.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import imageio, plotting
from . import tensor as tc
from .errors import CiderError, InputError
from .losses import psnr, ssim
from .pipeline import DegradationSpec, RestoreConfig, restore, simulate_blur
from .rl import RLConfig, rl_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pfm", ".tif", ".tiff")
KERNEL_SUFFIXES = (".txt",) + IMAGE_SUFFIXES
METRICS = ("psnr_input", "ssim_input", "psnr_rl_baseline", "ssim_rl_baseline", "psnr_cider", "ssim_cider")


@dataclass
class Record:
    name: str
    kernel: str
    psnr_input: float | None = None
    ssim_input: float | None = None
    psnr_rl_baseline: float | None = None
    ssim_rl_baseline: float | None = None
    psnr_cider: float | None = None
    ssim_cider: float | None = None
    wall_seconds: float = 0.0
    config_hash: str = ""
    error: str | None = None


@dataclass
class BenchmarkReport:
    config_hash: str
    config: dict
    records: list[Record] = field(default_factory=list)
    per_image: dict = field(default_factory=dict)
    aggregate: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        recs = [asdict(r) for r in self.records]
        if not timing:
            for r in recs:
                r.pop("wall_seconds")
        return {"config_hash": self.config_hash, "config": self.config, "records": recs,
                "per_image": self.per_image, "aggregate": self.aggregate}

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"


def _means(records: list[Record]) -> dict:
    ok = [r for r in records if r.error is None]
    out = {"count": len(ok)}
    for m in METRICS:
        out[m] = float(np.mean([getattr(r, m) for r in ok])) if ok else None
    return out


def summarize(report: BenchmarkReport) -> None:
    """Fill per-image averages (over kernels) and the grand mean."""
    names = sorted({r.name for r in report.records})
    report.per_image = {n: _means([r for r in report.records if r.name == n]) for n in names}
    report.aggregate = _means(report.records)


def load_kernel_file(path: Path) -> tc.Kernel:
    if path.suffix == ".txt":
        return tc.load_kernel(path)
    img = imageio.read_image(path)
    if img.ndim == 3:
        img = img.mean(axis=0)
    return tc.Kernel.normalized(img)


def _listing(directory: Path, suffixes) -> list[Path]:
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in suffixes)


def _job(args) -> Record:
    name, img_path, kid, k_path, blurred_path, cfg_dict, spec_noise, sigma, rl_iters, seed = args
    cfg = RestoreConfig.from_dict(cfg_dict)
    rec = Record(name=name, kernel=kid, config_hash=cfg.config_hash())
    start = time.perf_counter()
    try:
        x = imageio.read_image(img_path)
        if x.ndim == 3:
            x = x.mean(axis=0)
        k = load_kernel_file(Path(k_path))
        if blurred_path is not None:
            y = imageio.read_image(blurred_path)
            if y.ndim == 3:
                y = y.mean(axis=0)
        else:
            y = simulate_blur(x, DegradationSpec(k, spec_noise, sigma), seed=seed, boundary=cfg.boundary)
        base = rl_image(y, k, RLConfig(rl_iters, boundary=cfg.boundary))
        out = restore(y, k, cfg).image
        rec.psnr_input, rec.ssim_input = psnr(y, x), ssim(y, x)
        rec.psnr_rl_baseline, rec.ssim_rl_baseline = psnr(base, x), ssim(base, x)
        rec.psnr_cider, rec.ssim_cider = psnr(out, x), ssim(out, x)
    except CiderError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s/%s failed: %s", name, kid, rec.error)
    rec.wall_seconds = time.perf_counter() - start
    return rec


def benchmark(dataset_dir, kernels_dir, cfg: RestoreConfig = RestoreConfig(), out=None,
              noise_sigma: float = 0.01, rl_iterations: int = 50, workers: int = 1,
              figures: bool = True) -> BenchmarkReport:
    """Run the benchmark; ``out`` (a ``.json`` path) receives the report.

    A file ``<dataset_dir>/blurred/<image>_<kernel>.<ext>`` is used as the
    degraded observation when present, otherwise one is simulated with
    Gaussian noise of standard deviation ``noise_sigma``.
    """
    dataset_dir, kernels_dir = Path(dataset_dir), Path(kernels_dir)
    images = _listing(dataset_dir, IMAGE_SUFFIXES)
    kernels = _listing(kernels_dir, KERNEL_SUFFIXES)
    if not images:
        raise InputError(f"{dataset_dir}: no sharp images found")
    if not kernels:
        raise InputError(f"{kernels_dir}: no kernels found")
    blurred_dir = dataset_dir / "blurred"
    noise = "gaussian" if noise_sigma > 0 else "none"
    jobs = []
    for img in images:
        for ker in kernels:
            blurred = None
            if blurred_dir.is_dir():
                hits = [p for p in _listing(blurred_dir, IMAGE_SUFFIXES) if p.stem == f"{img.stem}_{ker.stem}"]
                blurred = str(hits[0]) if hits else None
            jobs.append((img.stem, str(img), ker.stem, str(ker), blurred, cfg.to_dict(), noise,
                         noise_sigma, rl_iterations, cfg.seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_job, jobs))
    else:
        records = []
        for j in jobs:
            records.append(_job(j))
            r = records[-1]
            log.info("%s/%s ssim %s -> rl %s -> cider %s", r.name, r.kernel, r.ssim_input, r.ssim_rl_baseline, r.ssim_cider)
    report = BenchmarkReport(config_hash=cfg.config_hash(), config=cfg.to_dict(), records=records)
    summarize(report)
    if out is not None:
        write_report(report, out, figures=figures)
    return report


def write_report(report: BenchmarkReport, out, figures: bool = True) -> list[Path]:
    """Write ``out`` (JSON), a sibling CSV and, optionally, PNG figures."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    written = [out]
    table = out.with_suffix(".csv")
    cols = list(Record.__dataclass_fields__)
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report.records:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in cols])
        for name, means in report.per_image.items():
            w.writerow([name, "mean"] + [means[m] for m in METRICS] + ["", report.config_hash, ""])
        w.writerow(["all", "mean"] + [report.aggregate[m] for m in METRICS] + ["", report.config_hash, ""])
    written.append(table)
    if figures and report.aggregate["count"]:
        stem = out.with_suffix("")
        written.append(plotting.metric_bars(report.per_image, "ssim", f"{stem}_ssim.png"))
        written.append(plotting.metric_bars(report.per_image, "psnr", f"{stem}_psnr.png"))
        written.append(plotting.gain_scatter([asdict(r) for r in report.records], f"{stem}_scatter.png"))
    return written

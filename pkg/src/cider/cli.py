"""Command-line entry point.

Each subcommand prints exactly one ``key=value`` result line on stdout; human
readable progress goes to stderr. Exit status is 0 on success, 1 for bad
input or usage and 2 for internal failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import background as bgmod
from . import imageio, plotting
from .benchmark import benchmark, load_kernel_file
from .errors import ConfigurationError, InputError
from .losses import psnr, ssim
from .pipeline import DegradationSpec, RestoreConfig, restore, simulate_blur
from .rl import RLConfig, rl_image

log = logging.getLogger("cider")


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _channels(img: np.ndarray) -> list[np.ndarray]:
    return [img] if img.ndim == 2 else list(img)


def _stack(chans: list[np.ndarray]) -> np.ndarray:
    return chans[0] if len(chans) == 1 else np.stack(chans)


def load_config(args) -> RestoreConfig:
    cfg = RestoreConfig()
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{args.config}: expected a JSON object")
        cfg = RestoreConfig.from_dict(data)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "iters", None) is not None:
        changes["iterations"] = args.iters
    if getattr(args, "microscopy", False):
        changes["microscopy"] = True
    return cfg.updated(**changes) if changes else cfg


def _bits(args) -> int:
    return getattr(args, "bits", 8)


def cmd_deconvolve(args) -> str:
    cfg = load_config(args)
    y = imageio.read_image(args.input)
    k = load_kernel_file(Path(args.kernel))
    start = time.perf_counter()
    outs, backgrounds, traces, count = [], [], [], 0
    for c, chan in enumerate(_channels(y)):
        def progress(t, value, parts, c=c):
            if t % 100 == 0 or t == cfg.iterations:
                log.info("channel %d iteration %d/%d loss %.6f", c, t, cfg.iterations, value)
        res = restore(chan, k, cfg, callback=progress)
        outs.append(res.image)
        traces.append(res.loss_trace)
        count = res.param_count
        if res.background is not None:
            backgrounds.append(res.background[0])
    image = _stack(outs)
    imageio.write_image(args.output, image, _bits(args))
    if args.save_background:
        if not backgrounds:
            raise ConfigurationError("--save-background needs --microscopy")
        imageio.write_image(args.save_background, _stack(backgrounds), _bits(args))
    sidecar = Path(args.report) if args.report else Path(str(args.output) + ".json")
    report = {
        "input": str(args.input),
        "kernel": str(args.kernel),
        "output": str(args.output),
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "param_count": count,
        "loss_trace": traces[0] if len(traces) == 1 else traces,
        "timing": {"wall_seconds": time.perf_counter() - start},
    }
    sidecar.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    figure = plotting.loss_curve(traces[0], sidecar.with_suffix(".loss.png"))
    final = traces[0][-1] if traces[0] else float("nan")
    log.info("wrote %s, report %s and %s", args.output, sidecar, figure)
    return f"output={args.output} report={sidecar} config_hash={cfg.config_hash()} final_loss={final:.6f}"


def cmd_rl(args) -> str:
    y = imageio.read_image(args.input)
    k = load_kernel_file(Path(args.kernel))
    iters = args.iters if args.iters is not None else 50
    out = _stack([rl_image(c, k, RLConfig(iters)) for c in _channels(y)])
    imageio.write_image(args.output, out, _bits(args))
    return f"output={args.output} iterations={iters}"


def cmd_simulate(args) -> str:
    x = imageio.read_image(args.input)
    k = load_kernel_file(Path(args.kernel))
    spec = DegradationSpec(k, args.noise, args.sigma, args.peak)
    seed = args.seed if args.seed is not None else 0
    y = _stack([simulate_blur(c, spec, seed=seed) for c in _channels(x)])
    imageio.write_image(args.output, y, _bits(args))
    return f"output={args.output} noise={args.noise} seed={seed}"


def cmd_background(args) -> str:
    y = imageio.read_image(args.input)
    iters = args.iters if args.iters is not None else 3
    cleaned, bgs = [], []
    for c in _channels(y):
        est = bgmod.estimate_background(c, iters, args.levels)
        cleaned.append(bgmod.remove_background(c, estimate=est))
        bgs.append(est.background)
    imageio.write_image(args.output, _stack(cleaned), _bits(args))
    if args.save_background:
        imageio.write_image(args.save_background, _stack(bgs), _bits(args))
    mean_bg = float(np.mean([b.mean() for b in bgs]))
    return f"output={args.output} background_mean={mean_bg:.6f}"


def cmd_metrics(args) -> str:
    a, b = imageio.read_image(args.a), imageio.read_image(args.b)
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    p = psnr(a, b)
    s = float(np.mean([ssim(ca, cb) for ca, cb in zip(_channels(a), _channels(b))]))
    return f"psnr={p:.6f} ssim={s:.6f}"


def cmd_benchmark(args) -> str:
    cfg = load_config(args)
    out = Path(args.report or "benchmark.json")
    rep = benchmark(args.input, args.kernel, cfg, out, noise_sigma=args.sigma, workers=args.workers)
    agg = rep.aggregate
    for name, m in rep.per_image.items():
        log.info("%-12s ssim %.4f / rl %.4f / cider %.4f", name, m["ssim_input"] or 0, m["ssim_rl_baseline"] or 0, m["ssim_cider"] or 0)
    fmt = lambda v: "nan" if v is None else f"{v:.6f}"  # noqa: E731
    return (f"report={out} records={len(rep.records)} ok={agg['count']} "
            f"ssim_rl_baseline={fmt(agg['ssim_rl_baseline'])} ssim_cider={fmt(agg['ssim_cider'])}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cider", description="Non-blind deconvolution with deconvolved-feature image priors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io(sp, kernel=True, output=True):
        sp.add_argument("--input", required=True)
        if kernel:
            sp.add_argument("--kernel", required=True)
        if output:
            sp.add_argument("--output", required=True)
        sp.add_argument("--bits", type=int, choices=(8, 16), default=8, help="PNG depth")

    d = sub.add_parser("deconvolve", help="restore an image")
    io(d)
    d.add_argument("--config")
    d.add_argument("--seed", type=int)
    d.add_argument("--iters", type=int)
    d.add_argument("--microscopy", action="store_true")
    d.add_argument("--save-background")
    d.add_argument("--report", help="JSON sidecar path (default: <output>.json)")
    d.set_defaults(fn=cmd_deconvolve)

    r = sub.add_parser("rl", help="Richardson-Lucy baseline")
    io(r)
    r.add_argument("--iters", type=int)
    r.set_defaults(fn=cmd_rl)

    s = sub.add_parser("simulate", help="blur and add noise")
    io(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", choices=("none", "gaussian", "poisson"), default="none")
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--peak", type=float, default=1.0)
    s.set_defaults(fn=cmd_simulate)

    b = sub.add_parser("background", help="wavelet background removal")
    io(b, kernel=False)
    b.add_argument("--iters", type=int)
    b.add_argument("--levels", type=int, default=7)
    b.add_argument("--save-background")
    b.set_defaults(fn=cmd_background)

    m = sub.add_parser("metrics", help="PSNR and SSIM of two images")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(fn=cmd_metrics)

    bm = sub.add_parser("benchmark", help="score a directory of images against a directory of kernels")
    bm.add_argument("--input", required=True, help="directory of sharp images")
    bm.add_argument("--kernel", required=True, help="directory of kernels")
    bm.add_argument("--report", help="JSON report path; CSV and figures are written next to it")
    bm.add_argument("--config")
    bm.add_argument("--seed", type=int)
    bm.add_argument("--iters", type=int)
    bm.add_argument("--microscopy", action="store_true")
    bm.add_argument("--sigma", type=float, default=0.01, help="noise level when simulating")
    bm.add_argument("--workers", type=int, default=1)
    bm.set_defaults(fn=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"cider: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        line = args.fn(args)
    except (InputError, OSError) as exc:
        print(f"cider: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return 2
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``wdfqdet <subcommand> ...``.

Failures print ``error: <CODE>: <message>`` on stderr and exit with the
error's status (see :mod:`wdfqdet.errors`).
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import diagnostics, gradcheck, pipeline, tensorfile, wavelet
from . import tensor as T
from .config import load_config
from .errors import ArgumentError, StatisticsError, WDFQError
from .imageio import load_pair

GRADCHECK_TOLERANCE = 1e-5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ArgumentError.exit_status, f"error: {ArgumentError.code}: {message}\n")


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_decompose(args):
    x = tensorfile.load(args.tensor)
    if x.ndim < 2:
        raise ArgumentError(f"decompose needs a tensor of rank >= 2, got rank {x.ndim}")
    lead = x.shape[:-2]
    x4 = x.reshape((1,) * (4 - x.ndim) + x.shape)
    bands = wavelet.decompose(x4)
    _ensure_dir(args.out_dir)
    for name in ("ll", "lh", "hl", "hh"):
        band = T.value_of(getattr(bands, name))
        tensorfile.save(os.path.join(args.out_dir, f"{name}.tensor"), band.reshape(lead + band.shape[-2:]))
    return 0


def _forward(args, keep):
    cfg = load_config(args.config)
    rgb, ir = load_pair(args.rgb, args.ir)
    params = pipeline.build_params(cfg)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            return cfg, pipeline.forward(rgb, ir, params, cfg, keep=keep, pool=pool)
    return cfg, pipeline.forward(rgb, ir, params, cfg, keep=keep)


def cmd_infer(args):
    _, result = _forward(args, keep=args.heatmaps is not None)
    _write_text(args.json, pipeline.detections_json(pipeline.detections(result)[0]))
    if args.heatmaps:
        _ensure_dir(args.heatmaps)
        for name in sorted(result.intermediates):
            pipeline.export_heatmap(result.intermediates[name], os.path.join(args.heatmaps, f"{name}.pgm"))
    return 0


def cmd_train_toy(args):
    cfg = load_config(args.config)
    samples = pipeline.load_dataset(args.dataset)
    _, trace = pipeline.train_toy(samples, cfg, threads=args.threads, steps=args.steps)
    pipeline.write_trace(args.trace, trace)
    return 0


def cmd_gradcheck(args):
    cfg = load_config(args.config)
    names = gradcheck.MODULES if args.module == "all" else (args.module,)
    worst = 0.0
    for name in names:
        err = gradcheck.check_module(name, cfg, instances=args.instances)
        worst = max(worst, err)
        status = "ok" if err <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name}: max relative error {err:.3e} [{status}]")
    return 0 if worst <= GRADCHECK_TOLERANCE else 1


def cmd_diag(args):
    _, result = _forward(args, keep=True)
    inter = result.intermediates
    report = {}
    for level in pipeline.LEVELS:
        maps = [T.value_of(inter[f"{kind}_l{level}"]) for kind in ("low_ir", "low_rgb", "high_ir", "high_rgb")]
        try:
            report[f"l{level}"] = diagnostics.level_report(*maps)
        except StatisticsError as exc:
            # too few positions at this level for a covariance estimate
            report[f"l{level}"] = {"skipped": f"{exc.code}: {exc}"}
    _write_text(args.json, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser():
    parser = _Parser(prog="wdfqdet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="one-level Haar analysis of a tensor file")
    p.add_argument("tensor")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_decompose)

    for name, func, help_text in (("infer", cmd_infer, "detect on one RGB/IR pair"),
                                  ("diag", cmd_diag, "per-level frequency statistics")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("rgb")
        p.add_argument("ir")
        p.add_argument("--json", required=True)
        if name == "infer":
            p.add_argument("--heatmaps", help="directory for intermediate-map PGM heatmaps")
        p.add_argument("--threads", type=_threads, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("train-toy", help="gradient descent on a small paired dataset")
    p.add_argument("config")
    p.add_argument("dataset")
    p.add_argument("--trace", required=True)
    p.add_argument("--threads", type=_threads, default=1)
    p.add_argument("--steps", type=int, help="override the configured step count")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument("config")
    p.add_argument("--module", required=True, choices=gradcheck.MODULES + ("all",))
    p.add_argument("--instances", type=int, default=3)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WDFQError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error: E_IO: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands::

    plumbline calibrate IMG [IMG ...] --out params.json
    plumbline undistort IMG PARAMS --out corrected.png [--mask mask.png]
    plumbline synth --trials 20 --gammas 1e-5,2e-5 --noise 0,0.1,0.3 --out study/
    plumbline inspect IMG [--params PARAMS] --out inspect/
    plumbline replay MANIFEST

Every command writes a JSON manifest next to its outputs; ``replay`` re-runs
the recorded command line.

Exit codes: 0 success, 2 usage error (including images of differing size),
3 I/O error, 4 numeric or feasibility failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np

from .edgels import EdgelSet, ExtractionConfig, extract_edgels
from .hough import DEFAULT_BINS, entropy, hough_1d
from .imageio import atomic_write_text, read_gray, read_params, write_gray, write_mask, write_params
from .model import DomainError, transform_edgels
from .optim import OptimConfig, TooFewEdgelsError, mcdh_calibrate
from .synth import STUDY_BINS, SceneConfig, SceneError, run_study

log = logging.getLogger("plumbline")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

CLUTTER_FLAGS = {"points": "uncorrelated_points", "ellipses": "correlated_ellipses"}


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def default_threads() -> int:
    env = os.environ.get("PLUMBLINE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"PLUMBLINE_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise UsageError("PLUMBLINE_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# argument types
# ---------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return vals


def _gamma_list(text):
    vals = _float_list(text)
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("gammas must be non-negative")
    return vals


def _noise_list(text):
    vals = _float_list(text)
    bad = [v for v in vals if not 0.0 <= v < 1.0]
    if bad:
        raise argparse.ArgumentTypeError(f"noise fractions must lie in [0, 1), got {bad}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumbline",
        description="Lens distortion self-calibration from straight edges by Hough entropy.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def threads_flag(p):
        p.add_argument("--threads", type=_positive_int, default=None,
                       help="worker threads (default: $PLUMBLINE_THREADS or all cores)")

    def edgel_flags(p):
        p.add_argument("--edgels", type=_positive_int, default=ExtractionConfig.target_edgels,
                       help="target edgel count per image")
        p.add_argument("--sigma-vote", type=_positive_float, default=ExtractionConfig.sigma_vote,
                       help="tensor voting scale in pixels")

    def optim_flags(p, bins):
        p.add_argument("--bins", type=_positive_int, default=bins, help="Hough bins")
        p.add_argument("--restarts", type=_positive_int, default=OptimConfig.restarts)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--radial-only", action="store_true",
                       help="fit center and gamma only, anisotropy frozen at 0")

    p = sub.add_parser("calibrate", help="estimate distortion parameters from images")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("--out", type=Path, default=Path("params.json"))
    optim_flags(p, DEFAULT_BINS)
    edgel_flags(p)
    threads_flag(p)

    p = sub.add_parser("undistort", help="resample an image through fitted parameters")
    p.add_argument("image", type=Path)
    p.add_argument("params", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mask", type=Path, default=None, help="write the 1-bit coverage mask here")
    p.add_argument("--size", type=str, default=None, help="output size WxH (default: input size)")
    threads_flag(p)

    p = sub.add_parser("synth", help="run a seeded synthetic recovery study")
    p.add_argument("--trials", type=_positive_int, default=20)
    p.add_argument("--gammas", type=_gamma_list, default=[1e-5, 2e-5])
    p.add_argument("--noise", type=_noise_list, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    p.add_argument("--clutter", choices=sorted(CLUTTER_FLAGS), default="points")
    p.add_argument("--out", type=Path, default=Path("synth_out"))
    optim_flags(p, STUDY_BINS)
    threads_flag(p)

    p = sub.add_parser("inspect", help="dump edgels and their orientation histogram")
    p.add_argument("image", type=Path)
    p.add_argument("--params", type=Path, default=None,
                   help="correct the edgels with these parameters first")
    p.add_argument("--out", type=Path, default=Path("inspect_out"))
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--seed", type=int, default=0)
    edgel_flags(p)
    threads_flag(p)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _manifest_path(out: Path) -> Path:
    if out.suffix:
        return out.with_name(out.stem + ".manifest.json")
    return out / "manifest.json"


def write_manifest(out: Path, argv, args, config: dict, inputs, outputs) -> Path:
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "inputs": [str(p) for p in inputs],
        "config": config,
        "seed": getattr(args, "seed", None),
        "threads": args.threads,
        "tool_version": tool_version(),
        "outputs": [str(p) for p in outputs],
    }
    path = _manifest_path(out)
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _extraction_config(args) -> ExtractionConfig:
    return ExtractionConfig(sigma_vote=args.sigma_vote, target_edgels=args.edgels,
                            rng_seed=args.seed)


def _load_images(paths):
    images = []
    for path in paths:
        img, bits = read_gray(path)
        images.append((img, bits))
    shapes = {img.shape for img, _ in images}
    if len(shapes) > 1:
        raise UsageError(f"images differ in size {sorted(shapes)}; all must share one size")
    return images


def _parse_size(text):
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--size expects WxH, got {text!r}")
    if w < 1 or h < 1:
        raise UsageError("--size must be positive")
    return h, w


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_calibrate(args, argv) -> int:
    images = _load_images(args.images)
    ecfg = _extraction_config(args)
    sets = []
    for path, (img, _) in zip(args.images, images):
        es = extract_edgels(img, ecfg, threads=args.threads)
        log.info("%s: %d edgels", path, len(es))
        sets.append(es)
    edgels = EdgelSet.concatenate(sets)
    h, w = images[0][0].shape
    ocfg = OptimConfig(restarts=args.restarts, rng_seed=args.seed, radial_only=args.radial_only)
    res = mcdh_calibrate(edgels.positions, edgels.normals, (w, h), ocfg,
                         n_bins=args.bins, threads=args.threads)
    log.info("entropy %.6f bits (identity %.6f), gamma %.6g", res.cost, res.identity_cost,
             res.params.gamma)

    out = args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    trace = out.with_name(out.stem + ".trace.csv")
    figure = out.with_name(out.stem + ".hough.png")
    write_params(out, res.params)
    res.write_trace(trace)
    _plot_before_after(edgels, res.params, args.bins, figure)
    config = {"extraction": asdict(ecfg), "optim": asdict(ocfg), "bins": args.bins,
              "image_size": [w, h], "edgels_per_image": [len(s) for s in sets],
              "n_edgels": len(edgels), "entropy": res.cost, "identity_entropy": res.identity_cost}
    write_manifest(out, argv, args, config, args.images, [out, trace, figure])
    return EXIT_OK


def _plot_before_after(edgels, params, n_bins, path):
    from .plotting import plot_histograms

    hists = {"input": hough_1d(edgels.normals, n_bins)}
    if len(edgels):
        _, nrm, valid = transform_edgels(params, edgels.positions, edgels.normals)
        hists["corrected"] = hough_1d(nrm[valid], n_bins)
    plot_histograms(hists, path)


def cmd_undistort(args, argv) -> int:
    from .warp import undistort_image

    img, bits = read_gray(args.image)
    params = read_params(args.params)
    shape = _parse_size(args.size) if args.size else img.shape
    out_img, mask = undistort_image(img, params, out_shape=shape)
    log.info("%d of %d output pixels covered", int(mask.sum()), mask.size)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_gray(args.out, out_img, bits=bits)
    outputs = [args.out]
    if args.mask is not None:
        write_mask(args.mask, mask)
        outputs.append(args.mask)
    config = {"params": params.to_dict(), "output_size": [shape[1], shape[0]],
              "interpolation": "catmull-rom", "bit_depth": bits}
    write_manifest(args.out, argv, args, config, [args.image, args.params], outputs)
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    from .plotting import plot_noise_study

    kind = CLUTTER_FLAGS[args.clutter]
    base = SceneConfig(rng_seed=args.seed)
    ocfg = OptimConfig(restarts=args.restarts, radial_only=args.radial_only,
                       min_edgels=base.n_lines * base.pts_per_line)
    report = run_study(args.gammas, args.noise, args.trials, kind=kind, base_cfg=base,
                       optim_cfg=ocfg, n_bins=args.bins, threads=args.threads)
    failed = sum(t.failed for t in report.trials)
    if failed:
        log.warning("%d of %d trials failed", failed, len(report.trials))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    trials_csv = out / "trials.csv"
    summary_csv = out / "summary.csv"
    figure = out / "noise_study.png"
    report.write_csv(trials_csv)
    report.write_summary_csv(summary_csv)
    plot_noise_study(report, figure)
    for c in report.summary():
        log.info("gamma %g noise %.2f: median %.4g [%.4g, %.4g]", c.gamma_true, c.noise,
                 c.median, c.p10, c.p90)
    config = {"scene": asdict(base), "optim": asdict(ocfg), "bins": args.bins,
              "trials": args.trials, "gammas": args.gammas, "noise": args.noise,
              "clutter": kind}
    write_manifest(out, argv, args, config, [], [trials_csv, summary_csv, figure])
    return EXIT_OK


def cmd_inspect(args, argv) -> int:
    from .plotting import plot_histograms

    img, _ = read_gray(args.image)
    params = read_params(args.params) if args.params is not None else None
    ecfg = _extraction_config(args)
    edgels = extract_edgels(img, ecfg, threads=args.threads)
    if len(edgels) == 0:
        log.warning("no salient edgels found in %s", args.image)
    hists = {"input": hough_1d(edgels.normals, args.bins)}
    dumped = edgels
    if params is not None and len(edgels):
        pos, nrm, valid = transform_edgels(params, edgels.positions, edgels.normals)
        dumped = EdgelSet(pos[valid], nrm[valid], edgels.weights[valid])
        hists["corrected"] = hough_1d(dumped.normals, args.bins)
    final = hists.get("corrected", hists["input"])

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    edgel_csv = out / "edgels.csv"
    hist_csv = out / "histogram.csv"
    figure = out / "histogram.png"
    dumped.to_csv(edgel_csv)
    final.to_csv(hist_csv)
    plot_histograms(hists, figure)
    config = {"extraction": asdict(ecfg), "bins": args.bins, "n_edgels": len(dumped),
              "params": params.to_dict() if params is not None else None,
              "entropy": {k: (entropy(h) if h.total > 0 else None) for k, h in hists.items()}}
    write_manifest(out, argv, args, config, [args.image] + ([args.params] if params else []),
                   [edgel_csv, hist_csv, figure])
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        recorded = manifest["argv"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise OSError(f"cannot read manifest {args.manifest}: {exc}") from exc
    log.info("replaying: plumbline %s", " ".join(recorded))
    return main(recorded)


COMMANDS = {
    "calibrate": cmd_calibrate,
    "undistort": cmd_undistort,
    "synth": cmd_synth,
    "inspect": cmd_inspect,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else
                        logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "threads", 1) is None:
            args.threads = default_threads()
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"plumbline: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"plumbline: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TooFewEdgelsError, DomainError, SceneError, FloatingPointError) as exc:
        print(f"plumbline: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # malformed parameter files and similar bad input data
        print(f"plumbline: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hdtrack <command> [options]``.

Data goes to the files named on the command line, summaries to stdout.
Failures print one JSON line ``{"error": ..., "message": ...}`` to
stderr and exit with status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config

log = logging.getLogger("hdtrack")


class CommandError(Exception):
    pass


def _floats(text: str, count: int, what: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise CommandError(f"{what}: expected {count} numbers") from None
    if len(values) != count:
        raise CommandError(f"{what}: expected {count} numbers, got {len(values)}")
    return np.array(values)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.replace(seed=args.seed, workers=args.workers)


def _require_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise CommandError("this command is randomized; pass --seed (or set seed in the config)")
    return cfg.seed


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as f:
        f.write(text)


# -- commands -----------------------------------------------------------------------

def cmd_condnum(args) -> None:
    from .condnum import Subgroup, default_probes, monte_carlo_study, write_histogram_csv

    cfg = _config(args)
    seed = _require_seed(cfg)
    subgroups = list(Subgroup) if args.subgroup == "all" else [Subgroup(args.subgroup)]
    samples = args.samples or cfg.samples
    result = monte_carlo_study(cfg.ranges(), samples, subgroups, seed=seed,
                               probes=default_probes(cfg.probe_size), workers=cfg.workers)
    with open(args.out, "w") as f:
        rows = result.write_csv(f)
    hist_path = args.histogram or str(Path(args.out).with_suffix("")) + "_hist.csv"
    with open(hist_path, "w") as f:
        for sg in subgroups:
            f.write(f"# subgroup {sg.value}\n")
            write_histogram_csv(f, result.histogram(sg))
    for name, s in result.summary().items():
        print(f"{name}: max={s['max']:.6g} p99={s['p99']:.6g} median={s['median']:.6g} "
              f"rejected={s['rejected']} evaluated={s['evaluated']}")
    print(f"wrote {rows} rows to {args.out} and histogram to {hist_path}")


def cmd_raystudy(args) -> None:
    from .condnum import Subgroup, default_probes, ray_study

    cfg = _config(args)
    result = ray_study(args.steps, probes=default_probes(cfg.probe_size), ranges=cfg.ranges())
    lines = ["ratio,subgroup,cond"] + [f"{r!r},{sg},{c!r}" for r, sg, c in result.rows()]
    _write_text(args.out, "\n".join(lines) + "\n")
    for sg in Subgroup:
        print(f"{sg.value}: nondecreasing steps {result.increasing_fraction(sg):.3f}")


def cmd_warp(args) -> None:
    from .geometry import read_homographies
    from .raster import read_pgm, warp_centered, warp_homography, write_pgm

    img = read_pgm(args.input)
    if args.h_file:
        with open(args.h_file) as f:
            hs = read_homographies(f)
        if not hs:
            raise CommandError(f"{args.h_file}: no homography")
        h = hs[0]
    else:
        h = _floats(args.h, 9, "--h").reshape(3, 3)
    shape = img.shape if args.size is None else (args.size[1], args.size[0])
    warp = warp_centered if args.centered else warp_homography
    write_pgm(args.out, warp(img, h, shape, args.policy))
    print(f"wrote {shape[1]}x{shape[0]} image to {args.out}")


def cmd_rsew(args) -> None:
    from .raster import read_pgm, rsew_warp, write_pgm

    img = read_pgm(args.input)
    out = rsew_warp(img, tuple(args.center), centered=not args.uncentered)
    write_pgm(args.out, out)
    print(f"wrote {out.shape[1]}x{out.shape[0]} warped image to {args.out}")


def cmd_simest(args) -> None:
    from .geometry import format_homography
    from .raster import read_pgm
    from .simest import estimate_similarity

    cfg = _config(args)
    est = estimate_similarity(read_pgm(args.template), read_pgm(args.search), cfg.similarity_config())
    print(f"t1={est.t[0]!r} t2={est.t[1]!r} gamma={est.gamma!r} theta={est.theta!r} "
          f"confidence={est.confidence!r}")
    if args.out:
        _write_text(args.out, format_homography(est.matrix()) + "\n")


def cmd_resest(args) -> None:
    from .geometry import PARAM_NAMES, box_corners, format_homography
    from .raster import read_pgm
    from .resest import dlt_from_offsets, refine_residual

    cfg = _config(args)
    if args.offsets is not None:
        h = dlt_from_offsets(box_corners(cfg.template_size - 1), _floats(args.offsets, 8, "--offsets").reshape(4, 2))
        print("dlt")
    else:
        if not (args.template and args.search):
            raise CommandError("pass --template and --search, or --offsets")
        res = refine_residual(read_pgm(args.template), read_pgm(args.search), cfg.refine_config())
        h = res.h
        values = " ".join(f"{k}={v!r}" for k, v in zip(PARAM_NAMES, res.params.as_array().tolist()))
        print(f"{values} rms={res.rms!r} correlation={res.correlation!r} lost={str(res.lost).lower()}")
    if args.out:
        _write_text(args.out, format_homography(h) + "\n")
    else:
        print(format_homography(h))


def cmd_track(args) -> None:
    from .bench import format_corners, list_frames
    from .geometry import write_homographies
    from .raster import read_pgm
    from .tracker import Tracker

    cfg = _config(args)
    paths = list_frames(args.frames)
    p0 = _floats(args.init, 8, "--init").reshape(4, 2)
    tracker = Tracker(cfg.tracker_config())
    out = tracker.run((read_pgm(p) for p in paths), p0)
    _write_text(args.out, "".join(format_corners(o.corners, [o.confidence]) + "\n" for o in out))
    sidecar = args.homographies or str(Path(args.out).with_suffix("")) + "_homographies.txt"
    with open(sidecar, "w") as f:
        write_homographies(f, [o.h for o in out])
    lost = sum(o.lost for o in out)
    print(f"tracked {len(out)} frames ({lost} lost); corners in {args.out}, homographies in {sidecar}")


def cmd_synth(args) -> None:
    from .bench import Challenges, MotionAmplitude, random_script, save_sequence, synthesize, textured_image
    from .raster import read_pgm

    cfg = _config(args)
    seed = _require_seed(cfg)
    base = read_pgm(args.base) if args.base else textured_image(args.base_size, seed=seed + 100)
    ch = Challenges(
        blur_sigma=args.blur, noise_sigma=args.noise, gain=args.gain, bias=args.bias,
        occlusion_frames=tuple(args.occlude) if args.occlude else None,
    )
    amp = MotionAmplitude(nu=args.perspective)
    script = random_script(args.frames, seed, amplitude=amp, challenges=ch)
    script.check_deltas(cfg.ranges())
    seq = synthesize(base, script, seed=seed, object_size=args.object_size, template_size=cfg.template_size)
    save_sequence(seq, args.out)
    print(f"wrote {len(seq.frames)} frames to {args.out}; initial corners: "
          + " ".join(f"{v:.6g}" for v in seq.corners[0].ravel()))


def _read_quads(path: str) -> list[np.ndarray]:
    from .bench import read_ground_truth

    with open(path) as f:
        first = next((line for line in f if line.strip()), "")
    columns = len(first.replace(",", " ").split())
    if columns not in (8, 9):
        raise CommandError(f"{path}: expected 8 or 9 columns, got {columns}")
    with open(path) as f:
        return read_ground_truth(f, columns)


def cmd_eval(args) -> None:
    from .bench import evaluate
    from .geometry import read_homographies

    pred, gt = _read_quads(args.pred), _read_quads(args.gt)
    if len(pred) != len(gt):
        raise CommandError(f"{len(pred)} predictions for {len(gt)} ground-truth frames")
    pred_h = gt_h = None
    if args.pred_h and args.gt_h:
        with open(args.pred_h) as f:
            pred_h = read_homographies(f)
        with open(args.gt_h) as f:
            gt_h = read_homographies(f)
    cfg = _config(args)
    report = evaluate(pred, gt, pred_h, gt_h, template_size=cfg.template_size)
    if args.report:
        _write_text(args.report, report.curves_csv())
    print(report.summary())


def cmd_losscheck(args) -> None:
    from .losses import gradient_check_suite

    cfg = _config(args)
    seed = _require_seed(cfg)
    results = gradient_check_suite(seed=seed, points=args.points)
    for r in results:
        print(f"{r.name}: {'PASS' if r.passed else 'FAIL'} max_rel_error={r.max_error:.3e} tol={r.tolerance:.0e}")
    if not all(r.passed for r in results):
        raise CommandError("gradient check failed")


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (required by randomized commands)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--config", help="key = value configuration file")

    parser = argparse.ArgumentParser(prog="hdtrack", description="Homography-decomposition planar tracking tools.")
    parser.add_argument("--version", action="version",
                        version=f"hdtrack {__version__} (config schema {SCHEMA_VERSION})")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("condnum", parents=[common], help="Monte-Carlo condition-number study")
    p.add_argument("--samples", type=int)
    p.add_argument("--subgroup", default="all",
                   choices=["all", "full8", "translation_known", "similarity_known"])
    p.add_argument("--out", required=True, help="per-sample CSV")
    p.add_argument("--histogram", help="histogram CSV (default: <out>_hist.csv)")
    p.set_defaults(func=cmd_condnum)

    p = sub.add_parser("raystudy", parents=[common], help="condition number along a parameter ray")
    p.add_argument("--steps", type=int, default=51)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_raystudy)

    p = sub.add_parser("warp", parents=[common], help="inverse-warp a PGM by a homography")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--h", help="9 row-major numbers")
    g.add_argument("--h-file", help="file whose first line holds 9 numbers")
    p.add_argument("--size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--policy", default="zero", choices=["zero", "clamp", "circular_vertical"])
    p.add_argument("--centered", action="store_true", help="homography acts on centered coordinates")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("rsew", parents=[common], help="rotation-scale equivariant warp of a square PGM")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("DU", "DV"))
    p.add_argument("--uncentered", action="store_true", help="index log-radius from 0 instead of -n/2")
    p.set_defaults(func=cmd_rsew)

    p = sub.add_parser("simest", parents=[common], help="estimate the similarity between template and search")
    p.add_argument("--template", required=True)
    p.add_argument("--search", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simest)

    p = sub.add_parser("resest", parents=[common], help="estimate the residual homography")
    p.add_argument("--template")
    p.add_argument("--search")
    p.add_argument("--offsets", help="8 numbers: corner offsets for a direct DLT solve")
    p.add_argument("--out")
    p.set_defaults(func=cmd_resest)

    p = sub.add_parser("track", parents=[common], help="track a planar object through PGM frames")
    p.add_argument("--frames", required=True, help="directory of .pgm frames (sorted by name)")
    p.add_argument("--init", required=True, help="8 numbers: initial corners u1 v1 ... u4 v4")
    p.add_argument("--out", required=True)
    p.add_argument("--homographies", help="sidecar path (default: <out>_homographies.txt)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic sequence with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--base", help="PGM to use as the textured plane")
    p.add_argument("--base-size", type=int, default=640)
    p.add_argument("--object-size", type=int, default=101)
    p.add_argument("--perspective", type=float, default=8e-4, help="keyframe perspective amplitude")
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--occlude", type=int, nargs=2, metavar=("START", "STOP"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[common], help="score predicted corners against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred-h")
    p.add_argument("--gt-h")
    p.add_argument("--report", help="curves CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losscheck", parents=[common], help="finite-difference check of every loss gradient")
    p.add_argument("--points", type=int, default=100)
    p.set_defaults(func=cmd_losscheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, ConfigError, ValueError, OSError) as exc:
        kind = type(exc).__name__
        print(json.dumps({"error": kind, "command": args.command, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

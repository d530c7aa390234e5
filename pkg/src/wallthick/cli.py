"""``wallthick`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BoundarySpec, WallThickError
from .grid import DEFAULT_SPACING, load_mask
from .imageio import read_pfm, write_pfm, write_pgm
from .laplace import SolverConfig

# CLI flag -> SolverConfig field
_SOLVER_FLAGS = {
    "ds": "d_s",
    "omega": "omega",
    "tolerance": "tolerance",
    "max_iterations": "max_iterations",
    "max_steps": "max_steps",
    "fill_k": "fill_k",
    "fill_lambda": "fill_lambda",
    "psi_inner": "psi_inner",
    "seed": "seed",
}
BOUNDARY_CODES = {0: 0, 128: 1, 255: 2}


class UsageError(Exception):
    pass


def _solver_options(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="F", help="JSON file of solver settings; later flags override it")
    p.add_argument("--ds", type=float, metavar="PX", help="streamline step length in pixels")
    p.add_argument("--omega", type=float, help="SOR relaxation factor, in (0, 2)")
    p.add_argument("--tolerance", type=float, help="sweep-change convergence threshold (relative)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--fill-k", type=int)
    p.add_argument("--fill-lambda", type=float)
    p.add_argument("--psi-inner", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wallthick", description="Dense wall thickness of annular masks.")
    parser.add_argument("--version", action="version", version=f"wallthick {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("measure", help="thickness map of one PGM mask")
    _solver_options(p)
    p.add_argument("--spacing", type=float, metavar="MM", help="pixel spacing (default: sidecar JSON, else 1.36)")
    p.add_argument("--dump-psi", metavar="P", help="write the potential as PFM")
    p.add_argument("--dump-flags", metavar="P", help="write per-pixel assignment flags as PGM")
    p.add_argument("--boundaries", metavar="LABELS.pgm", help="manual boundaries: 0 none, 128 inner, 255 outer")
    p.add_argument("input", metavar="IN.pgm")
    p.add_argument("-o", "--output", required=True, metavar="OUT.pfm")

    p = sub.add_parser("synth", help="generate a synthetic (mask, thickness) corpus")
    _solver_options(p)
    p.add_argument("-n", "--count", type=int, required=True)
    p.add_argument("-o", "--output", required=True, metavar="DIR")
    p.add_argument("--recipe", metavar="F", help="JSON shape recipe")
    p.add_argument("--jobs", type=int, default=1, metavar="N")

    p = sub.add_parser("eval", help="MAE/MSE of predicted maps against ground truth")
    p.add_argument("--pred", required=True, metavar="DIR")
    p.add_argument("--gt", required=True, metavar="DIR")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("-o", "--output", metavar="REPORT.json")
    p.add_argument("--whole", action="store_true", help="score every pixel instead of the wall")
    p.add_argument("--jobs", type=int, default=1, metavar="N")

    p = sub.add_parser("aha", help="17-segment bullseye from basal/mid/apical maps")
    p.add_argument("--maps", nargs=3, required=True, metavar=("BASAL", "MID", "APICAL"))
    p.add_argument("--apex", type=float, required=True, metavar="MM")
    p.add_argument("--angle", type=float, default=90.0, metavar="DEG")
    p.add_argument("--sense", choices=("cw", "ccw"), default="ccw")
    p.add_argument("-o", "--output", required=True, metavar="OUT.svg")

    p = sub.add_parser("bench", help="time each pipeline stage on one mask")
    _solver_options(p)
    p.add_argument("--spacing", type=float, metavar="MM")
    p.add_argument("input", metavar="IN.pgm")

    sub.add_parser("info", help="print version and default settings")
    return parser


def resolve_config(args) -> SolverConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    for flag, name in _SOLVER_FLAGS.items():
        if getattr(args, flag) is not None:
            data[name] = getattr(args, flag)
    try:
        return SolverConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def resolve_spacing(flag, input_path: str) -> float:
    if flag is not None:
        if not flag > 0:
            raise UsageError("--spacing must be positive")
        return flag
    sidecar = Path(input_path).with_suffix(".json")
    if sidecar.is_file():
        meta = json.loads(sidecar.read_text())
        if "spacing_mm" in meta:
            return float(meta["spacing_mm"])
    return DEFAULT_SPACING


def _read(path) -> bytes:
    return Path(path).read_bytes()


def _load_input(args):
    spacing = resolve_spacing(args.spacing, args.input)
    return load_mask(_read(args.input), spacing)


def _boundary_labels(path, shape):
    from .imageio import read_pgm

    raw = read_pgm(_read(path))
    if raw.shape != shape:
        raise BoundarySpec(f"boundary image {raw.shape} does not match mask {shape}")
    bad = ~np.isin(raw, list(BOUNDARY_CODES))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise BoundarySpec(f"boundary pixel ({r},{c}) has value {raw[r, c]}; expected 0, 128 or 255")
    lut = np.zeros(256, dtype=np.uint8)
    for k, v in BOUNDARY_CODES.items():
        lut[k] = v
    return lut[raw]


def _summary(tmap) -> str:
    wall = tmap.wall
    mean = float(tmap.thickness[wall].mean()) if wall.any() else 0.0
    return f"mean_mm={mean:.6f} max_mm={float(tmap.thickness.max(initial=0.0)):.6f}"


def cmd_measure(args, out):
    from .streamline import measure_detailed

    cfg = resolve_config(args)
    mask = _load_input(args)
    labels = _boundary_labels(args.boundaries, mask.wall.shape) if args.boundaries else None
    res = measure_detailed(mask, cfg, labels)
    Path(args.output).write_bytes(write_pfm(res.thickness.thickness))
    if args.dump_psi:
        Path(args.dump_psi).write_bytes(write_pfm(res.field.psi))
    if args.dump_flags:
        Path(args.dump_flags).write_bytes(write_pgm(res.thickness.assigned))
    print(_summary(res.thickness), file=out)


def cmd_synth(args, out):
    from .synth import ShapeRecipe, gen_dataset, load_recipe

    cfg = resolve_config(args)
    if args.count < 0:
        raise UsageError("-n must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        recipe = load_recipe(args.recipe) if args.recipe else ShapeRecipe()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad recipe: {exc}") from None
    manifest = gen_dataset(args.count, recipe, args.output, cfg.seed, cfg, args.jobs)
    maxima = [e.max_thickness_mm for e in manifest.entries]
    lo = min(maxima, default=0.0)
    hi = max(maxima, default=0.0)
    print(f"count={len(manifest.entries)} attempts={manifest.attempts} "
          f"min_max_mm={lo:.6f} max_max_mm={hi:.6f} manifest={Path(args.output) / 'manifest.csv'}", file=out)


def cmd_eval(args, out):
    from .metrics import eval_dataset

    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    report = eval_dataset(args.pred, args.gt, args.manifest, whole=args.whole, jobs=args.jobs)
    if args.output:
        Path(args.output).write_text(report.to_json())
    print(f"count={len(report.per_image)} region={report.region} mae={report.mae_str} mse={report.mse_str}",
          file=out)
    out.write(report.to_csv())


def cmd_aha(args, out):
    from .aha import assemble_17, bullseye_svg, segment_slice
    from .streamline import ThicknessMap

    reps = []
    for level, path in zip(("basal", "mid", "apical"), args.maps):
        tmap = ThicknessMap.from_array(read_pfm(_read(path)))
        reps.append(segment_slice(tmap, level, args.angle, args.sense))
    full = assemble_17(*reps, args.apex)
    hi = max(full.mean_thickness)
    Path(args.output).write_text(bullseye_svg(full, (0.0, hi if hi > 0 else 1.0)))
    out.write(full.to_csv())


def cmd_bench(args, out):
    from .streamline import measure_detailed

    cfg = resolve_config(args)
    mask = _load_input(args)
    t0 = time.perf_counter()
    res = measure_detailed(mask, cfg)
    total = time.perf_counter() - t0
    # timings go to stderr so stdout stays reproducible
    print("stage,seconds", file=sys.stderr)
    for stage, sec in res.timings.items():
        print(f"{stage},{sec:.6f}", file=sys.stderr)
    print(f"total,{total:.6f}", file=sys.stderr)
    f = res.field
    print(f"shape={mask.wall.shape[1]}x{mask.wall.shape[0]} sweeps={f.iterations_used} "
          f"converged={int(f.converged)} streamlines={len(res.streamlines)} "
          f"coverage={res.thickness.coverage():.6f} {_summary(res.thickness)}", file=out)


def cmd_info(args, out):
    from .synth import ShapeRecipe

    doc = {
        "version": __version__,
        "default_spacing_mm": DEFAULT_SPACING,
        "solver": asdict(SolverConfig()),
        "recipe": ShapeRecipe().to_dict(),
        "boundary_codes": {"none": 0, "inner": 128, "outer": 255},
    }
    out.write(json.dumps(doc, indent=2) + "\n")


COMMANDS = {
    "measure": cmd_measure,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "aha": cmd_aha,
    "bench": cmd_bench,
    "info": cmd_info,
}


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"wallthick {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except WallThickError as exc:
        print(f"error={exc.kind} detail={_one_line(exc)}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error=FileNotFound detail={_one_line(exc)}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error={type(exc).__name__} detail={_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

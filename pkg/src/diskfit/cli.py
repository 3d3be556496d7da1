"""Command-line front end: ``diskfit {detect,pupil,synth,bench}``.

Every command prints one JSON document to stdout (``bench`` may print its
text tables instead when ``--output`` is given). Failures print an error
object and exit with 2 (input validation), 3 (data/geometry) or 4 (I/O).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .circlefit import EdgePolarity, fit_closed_form, fit_geometric_iterative
from .empupil import fit_pupil_em, init_params
from .errors import EXIT_IO, EXIT_OK, DiskFitError, OutputError, ValidationError
from .imagepipe import KernelConfig, extract_edge_points, gradient_field
from .pgm import read_pgm, write_pgm
from .synthbench import (
    DEFAULT_NOISE_LEVELS,
    DEFAULT_POINT_COUNTS,
    POSITION_RANGES,
    TECHNIQUES,
    SynthAnnulusConfig,
    SynthDiskConfig,
    render_annulus,
    render_disk,
    run_benchmark,
)

SCHEMA_VERSION = "1.0"
METHODS = ("closed", "iterative", "warm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _emit(doc: dict, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _error_doc(command: str, exc: DiskFitError) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "error",
        "error": {"code": exc.code, "message": str(exc)},
    }


def _load_points(path, max_points, seed, timing):
    t0 = time.perf_counter()
    image = read_pgm(path)
    t1 = time.perf_counter()
    grad = gradient_field(image, KernelConfig())
    t2 = time.perf_counter()
    points = extract_edge_points(grad, max_points, seed)
    t3 = time.perf_counter()
    timing.update(read_s=t1 - t0, gradient_s=t2 - t1, edges_s=t3 - t2)
    return image, points


def cmd_detect(args) -> dict:
    timing: dict = {}
    _, points = _load_points(args.image, args.max_points, args.seed, timing)
    polarity = EdgePolarity(args.polarity)
    t0 = time.perf_counter()
    if args.method == "closed":
        fit, iterations, converged = fit_closed_form(points, polarity), 0, True
    else:
        init = fit_closed_form(points, polarity) if args.method == "warm" else None
        rep = fit_geometric_iterative(points, init, args.rel_tol, args.max_iter)
        fit, iterations, converged = rep.fit, rep.iterations, rep.converged
    timing["fit_s"] = time.perf_counter() - t0
    warnings = [] if converged else ["not_converged"]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "detect",
        "status": "ok",
        "method": args.method,
        "polarity": polarity.value,
        "fit": fit.as_dict(),
        "points_used": len(points),
        "iterations": iterations,
        "converged": converged,
        "timing": timing,
        "warnings": warnings,
    }


def cmd_pupil(args) -> dict:
    timing: dict = {}
    image, points = _load_points(args.image, args.max_points, args.seed, timing)
    t0 = time.perf_counter()
    init = init_params(points, math.hypot(image.width, image.height))
    params, trace = fit_pupil_em(points, init, args.rel_tol, args.max_iter)
    timing["fit_s"] = time.perf_counter() - t0
    warnings = [] if trace.converged else ["not_converged"]
    if trace.flagged_points:
        warnings.append("underflow_points")
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "pupil",
        "status": "ok",
        "polarity": EdgePolarity.OUTER.value,
        "fit": params.as_dict(),
        "circle": params.circle.as_dict(),
        "em": trace.summary(),
        "points_used": len(points),
        "timing": timing,
        "warnings": warnings,
    }


def _sidecar_path(output: Path) -> Path:
    return output.with_suffix(".json")


def cmd_synth(args) -> dict:
    common = dict(
        width=args.width,
        height=args.height,
        r_min=args.r_min,
        r_max=args.r_max,
        foreground=args.foreground,
        background=args.background,
        noise_lambda=args.noise_lambda,
        seed=args.seed,
        x0=args.x0,
        y0=args.y0,
        r=args.radius,
    )
    common = {k: v for k, v in common.items() if v is not None or k in ("noise_lambda", "seed")}
    if args.kind == "disk":
        cfg = SynthDiskConfig(position_range=args.position_range, **common)
        image, truth = render_disk(cfg)
        truth_doc = {"circle": truth.as_dict()}
    else:
        cfg = SynthAnnulusConfig(
            inner_r=args.inner_r,
            spider_count=args.spiders,
            spider_width=args.spider_width,
            **common,
        )
        image, outer, inner = render_annulus(cfg)
        truth_doc = {"outer": outer.as_dict(), "inner": inner.as_dict()}

    output = Path(args.output)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "synth",
        "status": "ok",
        "kind": args.kind,
        "image": output.name,
        "config": asdict(cfg),
        "truth": truth_doc,
    }
    write_pgm(image, output, binary=not args.ascii)
    try:
        _sidecar_path(output).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write sidecar: {exc}") from exc
    return doc


def _csv(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def cmd_bench(args) -> dict | None:
    cfg = SynthDiskConfig(position_range=args.position_range)
    t0 = time.perf_counter()
    report = run_benchmark(
        noise_levels=args.noise_levels,
        point_counts=args.point_counts,
        trials=args.trials,
        techniques=args.techniques,
        seed=args.seed,
        disk_config=cfg,
        rel_tol=args.rel_tol,
        workers=args.workers,
    )
    doc = {"command": "bench", "status": "ok", "timing": {"total_s": time.perf_counter() - t0}, **report.to_dict()}
    tables = report.format_table("centre_error") + "\n\n" + report.format_table("radius_error") + "\n"
    try:
        if args.table:
            Path(args.table).write_text(tables)
        if args.output:
            Path(args.output).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write report: {exc}") from exc
    if args.output:
        sys.stdout.write(tables)
        return None
    return doc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diskfit", description="Gradient-based disk and annulus fitting.")
    p.add_argument("--version", action="version", version=f"diskfit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="fit one disk edge in a PGM image")
    d.add_argument("image")
    d.add_argument("--polarity", choices=[e.value for e in EdgePolarity], default="outer")
    d.add_argument("--max-points", type=int, default=320)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--method", choices=METHODS, default="closed")
    d.add_argument("--rel-tol", type=float, default=1e-4)
    d.add_argument("--max-iter", type=int, default=100)

    u = sub.add_parser("pupil", help="EM fit of the outer edge of an annulus image")
    u.add_argument("image")
    u.add_argument("--max-points", type=int, default=1000)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--rel-tol", type=float, default=1e-6)
    u.add_argument("--max-iter", type=int, default=200)

    s = sub.add_parser("synth", help="render a synthetic disk or annulus to PGM plus truth JSON")
    s.add_argument("kind", choices=("disk", "annulus"))
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--r-min", type=float)
    s.add_argument("--r-max", type=float)
    s.add_argument("--x0", type=float)
    s.add_argument("--y0", type=float)
    s.add_argument("--radius", type=float)
    s.add_argument("--foreground", type=float)
    s.add_argument("--background", type=float)
    s.add_argument("--noise-lambda", type=float, default=None, help="Poisson background level; omit for no noise")
    s.add_argument("--position-range", choices=POSITION_RANGES, default="per_axis")
    s.add_argument("--inner-r", type=float, default=40.0)
    s.add_argument("--spiders", type=int, default=4)
    s.add_argument("--spider-width", type=float, default=4.0)
    s.add_argument("--ascii", action="store_true", help="write P2 instead of P5")

    b = sub.add_parser("bench", help="percentile benchmark on synthetic disks")
    b.add_argument("--noise-levels", type=_csv(float), default=list(DEFAULT_NOISE_LEVELS))
    b.add_argument("--point-counts", type=_csv(int), default=list(DEFAULT_POINT_COUNTS))
    b.add_argument("--techniques", type=_csv(str), default=list(TECHNIQUES))
    b.add_argument("--trials", type=int, default=500)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--rel-tol", type=float, default=1e-4)
    b.add_argument("--position-range", choices=POSITION_RANGES, default="per_axis")
    b.add_argument("--workers", type=int, default=None, help="process count (capped by DISKFIT_MAX_WORKERS)")
    b.add_argument("--output", "-o", help="write the JSON report here and print tables to stdout")
    b.add_argument("--table", help="also write the text tables to this file")
    return p


COMMANDS = {"detect": cmd_detect, "pupil": cmd_pupil, "synth": cmd_synth, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), "diskfit")
    try:
        args = parser.parse_args(argv)
        doc = COMMANDS[args.command](args)
    except DiskFitError as exc:
        _emit(_error_doc(command, exc))
        return exc.exit_code
    except OSError as exc:
        _emit({"schema_version": SCHEMA_VERSION, "command": command, "status": "error",
               "error": {"code": "io_error", "message": str(exc)}})
        return EXIT_IO
    if doc is not None:
        _emit(doc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

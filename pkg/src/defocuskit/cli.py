"""Command-line front end.

Subcommands: ``blur``, ``restore``, ``estimate``, ``sweep`` and ``pipeline``.
Values come from flags, then an optional ``--config`` key=value file, then
built-in defaults.  Exit codes: 0 success, 2 usage or configuration error,
3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .blur import BlurOperator, synthesize_data
from .core import ApertureSpec, DefocusModel, DimensionError, NoiseSpec, relative_rms, threshold_data
from .estimate import EstimationError
from .imageio import read_image, write_image
from .solve import NumericalFailure, SolverConfig, restore_dr, restore_pg

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("defocuskit")

# option name -> (type, default); names double as config-file keys
MODEL_OPTIONS = {
    "model_n": (int, None),
    "dof_size": (int, None),
    "blur_coeff": (float, None),
    "focal_pos": (float, None),
    "psf_size": (int, None),
    "orientation": (str, "rows"),
    "aperture_fraction": (float, 0.5),
    "oversample": (int, 1),
    "zernike": (str, "noll"),
}
SOLVER_OPTIONS = {
    "iters": (int, 250),
    "stepsize": (str, "safe"),
    "t0": (float, 1.0),
    "change_tol": (float, None),
    "method": (str, "dr"),
}
COMMON_OPTIONS = {
    "noise": (str, "none"),
    "seed": (int, 0),
    "threshold": (float, None),
}


class UsageError(Exception):
    """Bad flags or configuration; exit status 2."""


def _bool_zernike(name: str) -> bool:
    if name not in ("noll", "unit"):
        raise UsageError(f"--zernike must be 'noll' or 'unit', got {name!r}")
    return name == "noll"


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def write_config_file(path: str, values: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(values):
            if values[key] is not None:
                fh.write(f"{key} = {values[key]}\n")


def model_hash(model: DefocusModel) -> str:
    return hashlib.sha256(json.dumps(model.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """Effective settings of one invocation after merging flags, config file and defaults."""

    command: str
    values: dict = field(default_factory=dict)

    def get(self, key):
        return self.values.get(key)

    def model(self, require_blur: bool = True) -> DefocusModel:
        v = self.values
        needed = ["model_n", "dof_size", "focal_pos", "psf_size"] + (["blur_coeff"] if require_blur else [])
        missing = [k for k in needed if v.get(k) is None]
        if missing:
            flags = ", ".join("--" + k.replace("_", "-") for k in missing)
            raise UsageError(f"missing model parameters: {flags}")
        try:
            aperture = ApertureSpec(v["psf_size"], v["aperture_fraction"], v["oversample"],
                                    _bool_zernike(v["zernike"]))
            return DefocusModel(v["model_n"], v["dof_size"], v.get("blur_coeff") or 0.0,
                                v["focal_pos"], v["psf_size"], v["orientation"], aperture)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def solver(self) -> SolverConfig:
        v = self.values
        step = v["stepsize"]
        if step not in ("safe", "paper"):
            try:
                step = float(step)
            except ValueError:
                raise UsageError(f"--stepsize must be paper, safe or a number, got {step!r}") from None
        try:
            return SolverConfig(step, v["t0"], v["iters"], v.get("change_tol"))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def noise(self) -> NoiseSpec:
        try:
            return NoiseSpec.parse(str(self.values["noise"]))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


def _add_options(p: argparse.ArgumentParser, options: dict) -> None:
    for name in options:
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defocuskit", description="Depth-dependent defocus blur and its removal.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, solver=False):
        p.add_argument("--config", help="key=value file; flags take precedence")
        p.add_argument("--out", help="output path (file for blur/restore, directory otherwise)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if model:
            _add_options(p, MODEL_OPTIONS)
        if solver:
            _add_options(p, SOLVER_OPTIONS)
        _add_options(p, COMMON_OPTIONS)

    p = sub.add_parser("blur", help="synthesize a data image from an object")
    p.add_argument("input", help="object image with intensities in [0, 1]")
    p.add_argument("--bits", type=int, default=16, choices=[8, 16])
    common(p)

    p = sub.add_parser("restore", help="remove defocus from a data image")
    p.add_argument("input", help="data image of size (l+rho-1, w+rho-1)")
    p.add_argument("--truth", help="ground-truth object; adds an RMS column to the trace")
    p.add_argument("--bits", type=int, default=16, choices=[8, 16])
    common(p, solver=True)

    p = sub.add_parser("estimate", help="estimate focal position and blur coefficient from a guide star")
    p.add_argument("input", help="guide-star region image")
    p.add_argument("--candidates", default="0.01:0.05:17",
                   help="start:stop:count or a comma-separated list of blur coefficients")
    p.add_argument("--statistic", default="max", choices=["max", "p95"])
    common(p)

    p = sub.add_parser("sweep", help="run a simulated parameter sweep")
    p.add_argument("kind", help="solvability, noise, convergence, focal_offset, blur_offset or timing")
    p.add_argument("--grid", help="comma-separated grid values (default: the published grid)")
    p.add_argument("--iters", dest="iters", default=None)
    p.add_argument("--truth", help="ground-truth object (default: bundled chart)")
    common(p, model=False)

    p = sub.add_parser("pipeline", help="distort and correct a directory of 32x32 images")
    p.add_argument("input", help="directory of 32x32 images")
    p.add_argument("--blur-coeff", dest="blur_coeff", default=None)
    p.add_argument("--iters", dest="iters", default=None)
    p.add_argument("--make-samples", type=int, default=0,
                   help="first write this many synthetic sample images into the input directory")
    common(p, model=False)
    return parser


def merge_config(args: argparse.Namespace) -> RunConfig:
    """Flags over config file over sidecar over defaults; values are type-converted."""
    spec = {**MODEL_OPTIONS, **SOLVER_OPTIONS, **COMMON_OPTIONS}
    layers = []
    if args.command == "restore":
        sidecar = args.input + ".params"
        if os.path.isfile(sidecar):
            layers.append(read_config_file(sidecar))
    if args.config:
        layers.append(read_config_file(args.config))
    values = {}
    for key, (typ, default) in spec.items():
        raw = getattr(args, key, None)
        if raw is None:
            for layer in reversed(layers):
                if key in layer:
                    raw = layer[key]
                    break
        if raw is None or (isinstance(raw, str) and raw.lower() == "none" and key != "noise"):
            values[key] = default
            continue
        try:
            values[key] = typ(raw)
        except ValueError:
            raise UsageError(f"invalid value for {key}: {raw!r}") from None
    return RunConfig(args.command, values)


def _need_input(path: str) -> None:
    if not os.path.exists(path):
        raise UsageError(f"input not found: {path}")


def _check_output(path: str | None, force: bool) -> str:
    if not path:
        raise UsageError("--out is required")
    if os.path.exists(path) and not force:
        raise UsageError(f"refusing to overwrite {path} (use --force)")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return path


def _read(path: str) -> np.ndarray:
    _need_input(path)
    image = read_image(path)
    if image.ndim != 2:
        raise UsageError(f"{path}: expected a grayscale image, got shape {image.shape}")
    return image


def cmd_blur(args, cfg: RunConfig) -> int:
    obj = _read(args.input)
    out = _check_output(args.out, args.force)
    model = cfg.model()
    try:
        op = BlurOperator.from_model(model, obj.shape)
        data = synthesize_data(op, obj, cfg.noise(), cfg.get("seed"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_image(out, data, args.bits)
    sidecar = dict(cfg.values)
    sidecar.update(model_hash=model_hash(model), object_shape=f"{obj.shape[0]}x{obj.shape[1]}")
    for k in ("iters", "stepsize", "t0", "change_tol", "method", "threshold"):
        sidecar.pop(k, None)
    write_config_file(out + ".params", sidecar)
    print(f"wrote {out} {data.shape[0]}x{data.shape[1]} model_hash={model_hash(model)}")
    return EXIT_OK


def cmd_restore(args, cfg: RunConfig) -> int:
    data = _read(args.input)
    out = _check_output(args.out, args.force)
    model = cfg.model()
    solver = cfg.solver()
    rho = model.psf_size
    shape = (data.shape[0] - rho + 1, data.shape[1] - rho + 1)
    if min(shape) < 1:
        raise UsageError(f"data {data.shape} is smaller than the PSF size {rho}")
    truth = _read(args.truth) if args.truth else None
    try:
        op = BlurOperator.from_model(model, shape)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if truth is not None and truth.shape != shape:
        raise UsageError(f"truth shape {truth.shape} does not match the object shape {shape}")
    if solver.stepsize == "safe":
        log.info("safe stepsize: lambda = 1/rho = %g", solver.step(rho))
    else:
        log.info("stepsize lambda = %g", solver.step(rho))
    data = threshold_data(data, cfg.get("threshold"))
    method = cfg.get("method")
    if method not in ("dr", "pg"):
        raise UsageError("--method must be dr or pg")
    solve = restore_dr if method == "dr" else restore_pg
    x, trace = solve(op, data, solver, truth)
    write_image(out, x, args.bits)
    trace_path = os.path.splitext(out)[0] + ".trace.csv"
    trace.to_csv(trace_path)
    sidecar = dict(cfg.values)
    sidecar.update(model_hash=model_hash(model), iterations=trace.iterations,
                   termination=trace.termination, lambda_=solver.step(rho))
    write_config_file(out + ".params", sidecar)
    msg = f"wrote {out} ({trace.iterations} iterations) model_hash={model_hash(model)}"
    if truth is not None:
        msg += f" rms_data={relative_rms(op.central_crop(data), truth):.3f}%"
        msg += f" rms_restored={relative_rms(x, truth):.3f}%"
    print(msg)
    return EXIT_OK


def parse_candidates(text: str) -> list[float]:
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return list(np.linspace(float(start), float(stop), int(count)))
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse candidates {text!r}") from None


def cmd_estimate(args, cfg: RunConfig) -> int:
    import csv

    from .estimate import GuideStar, estimate_blur_coefficient, estimate_focal_position, sharpness_curve

    region = _read(args.input)
    out_dir = args.out or "."
    model = cfg.model(require_blur=False)
    gs = GuideStar(region, model.orientation)
    curve = sharpness_curve(gs, args.statistic)
    n0 = estimate_focal_position(curve, model.dof_size)
    template = model.replace(focal_position=n0)
    try:
        est = estimate_blur_coefficient(gs, parse_candidates(args.candidates), template, args.statistic)
    except DimensionError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "sharpness.csv"), os.path.join(out_dir, "candidates.csv")]
    for p in paths:
        _check_output(p, args.force)
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "sharpness"])
        w.writerows([i, repr(float(v))] for i, v in enumerate(curve.values))
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["blur_coefficient", "variation"])
        w.writerows([repr(c), repr(v)] for c, v in zip(est.candidates, est.candidate_variations))
    print(f"focal_position={n0} blur_coefficient={est.value:.6g} variation={est.variation:.6g}"
          + (" (clamped)" if est.clamped else ""))
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .bench import sweeps

    if args.kind not in sweeps.KINDS:
        raise UsageError(f"unknown sweep kind {args.kind!r}; expected one of {', '.join(sweeps.KINDS)}")
    grid = None
    if args.grid:
        try:
            grid = [float(v) for v in args.grid.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"cannot parse grid {args.grid!r}") from None
    iters = int(args.iters) if args.iters is not None else None
    spec = sweeps.default_spec(args.kind, grid, cfg.get("seed"), iters)
    if args.noise is not None and args.kind in ("solvability", "convergence", "focal_offset", "blur_offset"):
        spec = sweeps.SweepSpec(spec.kind, spec.base_model, spec.grid, spec.solver, spec.seed, cfg.noise())
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = _check_output(os.path.join(out_dir, f"{args.kind}.csv"), args.force)
    truth = _read(args.truth) if args.truth else None
    result = sweeps.run_sweep(spec, truth)
    result.to_csv(csv_path)
    files = [csv_path]
    for name, trace in result.traces.items():
        path = os.path.join(out_dir, f"{args.kind}_{name.replace('@', '_')}.trace.csv")
        trace.to_csv(path)
        files.append(path)
    sweeps.write_manifest(os.path.join(out_dir, f"{args.kind}_manifest.json"), spec, result, files,
                          {"effective_config": cfg.values})
    print(f"wrote {csv_path} ({len(result.records)} rows)")
    return EXIT_OK


def cmd_pipeline(args, cfg: RunConfig) -> int:
    from .bench import pipeline

    if args.make_samples:
        pipeline.write_sample_set(args.input, args.make_samples, cfg.get("seed"))
    if not os.path.isdir(args.input):
        raise UsageError(f"input directory not found: {args.input}")
    d = cfg.get("blur_coeff")
    d = 0.2 if d is None else d
    iters = int(args.iters) if args.iters is not None else 20
    out_dir = args.out or "."
    manifest_path = os.path.join(out_dir, f"manifest_{d:g}.json")
    _check_output(manifest_path, args.force)
    noise = cfg.noise() if args.noise is not None else pipeline.PipelineConfig(d).noise
    conf = pipeline.PipelineConfig(d, cfg.get("seed"), noise, iters, threshold=cfg.get("threshold"))
    manifest = pipeline.run_classification_pipeline(args.input, out_dir, d, cfg.get("seed"), conf)
    print(f"processed {len(manifest['images'])} images, skipped {len(manifest['skipped'])}; "
          f"mean RMS distorted {manifest['mean_rms_distorted']}, corrected {manifest['mean_rms_corrected']}")
    return EXIT_OK


COMMANDS = {"blur": cmd_blur, "restore": cmd_restore, "estimate": cmd_estimate,
            "sweep": cmd_sweep, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merge_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"defocuskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, EstimationError) as exc:
        print(f"defocuskit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"defocuskit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"defocuskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

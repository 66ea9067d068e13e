"""Parameter sweeps on the simulated scene: solvability, noise, convergence,
model sensitivity and gradient timing.

Each sweep returns a :class:`SweepResult` with one record per grid value.
Records carry the DR restoration and, where the protocol has one, a
baseline: projected gradient for the noise and convergence sweeps, the
dense-mask gradient for the timing sweep.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..blur import BlurOperator, synthesize_data
from ..core import ApertureSpec, DefocusModel, NoiseSpec, relative_rms
from ..grad import GradientWorkspace, grad_fast, grad_naive
from ..parallel import ordered_map
from ..solve import SolverConfig, SolverTrace, initial_guess, restore_dr, restore_pg
from .chart import make_test_chart

KINDS = ("solvability", "noise", "convergence", "focal_offset", "blur_offset", "timing")

# name of the swept parameter, first CSV column
PARAMETER = {
    "solvability": "blur_coefficient",
    "noise": "snr_db",
    "convergence": "convergence_blur_coefficient",
    "focal_offset": "focal_offset_dof",
    "blur_offset": "blur_coefficient_offset",
    "timing": "gradient_evaluations",
}
COLUMNS = ("input_rms", "restored_rms", "iterations", "wall_time_s",
           "baseline_rms", "baseline_iterations", "baseline_wall_time_s")

# Simulated imaging setup for the sweeps.  The photon scale matches double-valued
# images passed through a Poisson generator that counts in units of 1e-12, which
# leaves the noise far below the blur; the chart is pre-smoothed to mimic a scene
# band-limited by the optics that recorded it.
PHOTON_PEAK = 1e12
CHART_SMOOTHING = 0.6
CHART_BACKGROUND = 0.0
BENCH_APERTURE = dict(pupil_radius_fraction=0.5, oversample=1, noll_normalized=False)


def benchmark_model(blur_coefficient: float = 0.1, **changes) -> DefocusModel:
    """The 423x423 solvability setup: 141 zones of 3 rows, focus at zone 71, 65x65 PSFs."""
    params = dict(n_zones=141, dof_size=3, blur_coefficient=blur_coefficient,
                  focal_position=71, psf_size=65)
    params.update(changes)
    aperture = ApertureSpec(params["psf_size"], **BENCH_APERTURE)
    return DefocusModel(aperture=aperture, **params)


def default_scene(size: int = 423) -> np.ndarray:
    """The bundled chart, smoothed by a small Gaussian."""
    from scipy.ndimage import gaussian_filter

    chart = make_test_chart(size, background=CHART_BACKGROUND)
    if CHART_SMOOTHING > 0:
        chart = gaussian_filter(chart, CHART_SMOOTHING, mode="nearest")
    return np.clip(chart, 0.0, 1.0)


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    base_model: DefocusModel
    grid: tuple
    solver: SolverConfig = SolverConfig("paper", max_iterations=250)
    seed: int = 0
    noise: NoiseSpec = NoiseSpec("poisson", peak=PHOTON_PEAK)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ValueError("sweep grid must not be empty")
        object.__setattr__(self, "grid", grid)

    def describe(self) -> dict:
        s = self.solver
        return {
            "kind": self.kind,
            "model": self.base_model.as_dict(),
            "grid": list(self.grid),
            "solver": {"stepsize": s.stepsize, "t0": s.t0, "max_iterations": s.max_iterations,
                       "change_tolerance": s.change_tolerance, "oracle_tolerance": s.oracle_tolerance},
            "seed": self.seed,
            "noise": str(self.noise),
        }

    def config_hash(self, truth: np.ndarray | None = None) -> str:
        h = hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode())
        if truth is not None:
            h.update(np.ascontiguousarray(truth, dtype=float).tobytes())
        return h.hexdigest()[:16]


@dataclass
class SweepRecord:
    value: float
    input_rms: float = math.nan
    restored_rms: float = math.nan
    iterations: int = 0
    wall_time_s: float = math.nan
    baseline_rms: float = math.nan
    baseline_iterations: int = 0
    baseline_wall_time_s: float = math.nan


@dataclass
class SweepResult:
    kind: str
    records: list[SweepRecord]
    seed: int = 0
    config_hash: str = ""
    traces: dict[str, SolverTrace] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return self.column("value")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([PARAMETER[self.kind], *COLUMNS])
            for r in self.records:
                w.writerow([repr(r.value)] + [repr(getattr(r, c)) for c in COLUMNS])

    @classmethod
    def from_csv(cls, path, seed: int = 0, config_hash: str = "") -> "SweepResult":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        kinds = [k for k, p in PARAMETER.items() if p == header[0]]
        if len(kinds) != 1 or tuple(header[1:]) != COLUMNS:
            raise ValueError(f"{path}: not a sweep CSV (header {header})")
        records = []
        for row in body:
            rec = SweepRecord(float(row[0]))
            for name, text in zip(COLUMNS, row[1:]):
                setattr(rec, name, int(text) if name.endswith("iterations") else float(text))
            records.append(rec)
        return cls(kinds[0], records, seed, config_hash)


def point_seed(seed: int, index: int) -> int:
    """Independent noise seed for grid point ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _operator(model: DefocusModel, shape) -> BlurOperator:
    return BlurOperator.from_model(model, shape)


def _timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t


def _truth(truth) -> np.ndarray:
    return default_scene() if truth is None else np.asarray(truth, dtype=float)


def run_solvability_sweep(spec: SweepSpec, truth=None, workers: int | None = None) -> SweepResult:
    """Per blur coefficient: synthesize noisy data, restore with DR, record both errors."""
    truth = _truth(truth)

    def point(item):
        idx, d = item
        op = _operator(spec.base_model.replace(blur_coefficient=d), truth.shape)
        data = synthesize_data(op, truth, spec.noise, point_seed(spec.seed, idx))
        (x, trace), dt = _timed(restore_dr, op, data, spec.solver)
        return SweepRecord(d, relative_rms(initial_guess(op, data), truth), relative_rms(x, truth),
                           trace.iterations, dt)

    records = ordered_map(point, list(enumerate(spec.grid)), workers)
    return SweepResult(spec.kind, records, spec.seed, spec.config_hash(truth))


def run_noise_sweep(spec: SweepSpec, truth=None, workers: int | None = None) -> SweepResult:
    """Per SNR (dB): white Gaussian noise, DR and PG with the solver's stopping rules."""
    truth = _truth(truth)
    op = _operator(spec.base_model, truth.shape)

    def point(item):
        idx, snr = item
        data = synthesize_data(op, truth, NoiseSpec("gaussian", snr_db=snr), point_seed(spec.seed, idx))
        (x, tr), dt = _timed(restore_dr, op, data, spec.solver, truth)
        (xp, tp), dtp = _timed(restore_pg, op, data, spec.solver, truth)
        return SweepRecord(snr, relative_rms(initial_guess(op, data), truth), relative_rms(x, truth),
                           tr.iterations, dt, relative_rms(xp, truth), tp.iterations, dtp)

    records = ordered_map(point, list(enumerate(spec.grid)), workers)
    return SweepResult(spec.kind, records, spec.seed, spec.config_hash(truth))


def run_convergence_study(spec: SweepSpec, truth=None, workers: int | None = None) -> SweepResult:
    """Full DR and PG traces for each blur coefficient in the grid.

    Traces are kept under ``"DR@<d>"`` and ``"PG@<d>"``.
    """
    truth = _truth(truth)

    def point(item):
        idx, d = item
        op = _operator(spec.base_model.replace(blur_coefficient=d), truth.shape)
        data = synthesize_data(op, truth, spec.noise, point_seed(spec.seed, idx))
        (x, tr), dt = _timed(restore_dr, op, data, spec.solver, truth)
        (xp, tp), dtp = _timed(restore_pg, op, data, spec.solver, truth)
        rec = SweepRecord(d, tr.initial_rms, relative_rms(x, truth), tr.iterations, dt,
                          relative_rms(xp, truth), tp.iterations, dtp)
        return rec, tr, tp

    out = ordered_map(point, list(enumerate(spec.grid)), workers)
    result = SweepResult(spec.kind, [o[0] for o in out], spec.seed, spec.config_hash(truth))
    for d, (_, tr, tp) in zip(spec.grid, out):
        result.traces[f"DR@{d:g}"] = tr
        result.traces[f"PG@{d:g}"] = tp
    return result


def run_sensitivity_sweep(spec: SweepSpec, truth=None, workers: int | None = None) -> SweepResult:
    """Data from the true model; restoration with a perturbed one.

    ``focal_offset`` grids are in DoF (zones) added to the focal position;
    ``blur_offset`` grids are added to the blur coefficient.
    """
    if spec.kind not in ("focal_offset", "blur_offset"):
        raise ValueError("sensitivity sweeps take kind 'focal_offset' or 'blur_offset'")
    truth = _truth(truth)
    base = spec.base_model
    data = synthesize_data(_operator(base, truth.shape), truth, spec.noise, point_seed(spec.seed, 0))

    def point(offset):
        if spec.kind == "focal_offset":
            model = base.replace(focal_position=base.focal_position + offset)
        else:
            model = base.replace(blur_coefficient=base.blur_coefficient + offset)
        op = _operator(model, truth.shape)
        (x, tr), dt = _timed(restore_dr, op, data, spec.solver)
        return SweepRecord(offset, relative_rms(initial_guess(op, data), truth), relative_rms(x, truth),
                           tr.iterations, dt)

    records = ordered_map(point, spec.grid, workers)
    return SweepResult(spec.kind, records, spec.seed, spec.config_hash(truth))


def run_timing_comparison(spec: SweepSpec, truth=None, repeats: int = 1) -> SweepResult:
    """Wall time of K gradient evaluations: banded fast path versus dense masks.

    ``wall_time_s`` holds the fast path and ``baseline_wall_time_s`` the
    dense-mask evaluation; both start from the same data and iterate.
    Runs sequentially so the two timings do not compete for cores.
    """
    truth = _truth(truth)
    op = _operator(spec.base_model, truth.shape)
    data = synthesize_data(op, truth, spec.noise, point_seed(spec.seed, 0))
    x0 = initial_guess(op, data)
    ws = GradientWorkspace(op)
    records = []
    for k in spec.grid:
        k = int(k)
        best_fast = best_dense = math.inf
        for _ in range(repeats):
            t = time.perf_counter()
            for _ in range(k):
                grad_fast(op, data, x0, ws)
            best_fast = min(best_fast, time.perf_counter() - t)
            t = time.perf_counter()
            for _ in range(k):
                grad_naive(op, data, x0)
            best_dense = min(best_dense, time.perf_counter() - t)
        records.append(SweepRecord(k, iterations=k, wall_time_s=best_fast,
                                   baseline_iterations=k, baseline_wall_time_s=best_dense))
    return SweepResult(spec.kind, records, spec.seed, spec.config_hash(truth))


def speedup(result: SweepResult) -> np.ndarray:
    """Dense-mask time over fast-path time for a timing sweep."""
    return result.column("baseline_wall_time_s") / result.column("wall_time_s")


RUNNERS = {
    "solvability": run_solvability_sweep,
    "noise": run_noise_sweep,
    "convergence": run_convergence_study,
    "focal_offset": run_sensitivity_sweep,
    "blur_offset": run_sensitivity_sweep,
    "timing": run_timing_comparison,
}

# grids and solver settings of the published protocols
DEFAULT_GRIDS = {
    "solvability": tuple(np.round(np.arange(0.1, 0.45 + 1e-9, 0.025), 4)),
    "noise": tuple(np.linspace(30.0, 60.0, 11)),
    "convergence": (0.1,),
    "focal_offset": tuple(np.linspace(-2.0, 2.0, 9)),
    "blur_offset": tuple(np.round(np.linspace(-0.012, 0.012, 13), 4)),
    "timing": (5,),
}


def default_spec(kind: str, grid=None, seed: int = 0, max_iterations: int | None = None) -> SweepSpec:
    """The published setup for ``kind`` on the 423x423 scene."""
    if kind not in KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; expected one of {KINDS}")
    d = {"noise": 0.1, "convergence": 0.1, "focal_offset": 0.125,
         "blur_offset": 0.125, "timing": 0.125}.get(kind, 0.1)
    if kind == "noise":
        solver = SolverConfig("paper", max_iterations=150, oracle_tolerance=1e-4)
    elif kind == "convergence":
        solver = SolverConfig("paper", max_iterations=2500)
    else:
        solver = SolverConfig("paper", max_iterations=250)
    if max_iterations is not None:
        solver = SolverConfig(solver.stepsize, solver.t0, max_iterations,
                              solver.change_tolerance, solver.oracle_tolerance)
    return SweepSpec(kind, benchmark_model(d), DEFAULT_GRIDS[kind] if grid is None else tuple(grid),
                     solver, seed)


def run_sweep(spec: SweepSpec, truth=None, workers: int | None = None) -> SweepResult:
    runner = RUNNERS[spec.kind]
    if spec.kind == "timing":
        return runner(spec, truth)
    return runner(spec, truth, workers)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, spec: SweepSpec, result: SweepResult, files=(), extra: dict | None = None) -> None:
    """JSON manifest: effective configuration plus provenance, with a hash per emitted file."""
    doc = {
        "sweep": spec.describe(),
        "config_hash": result.config_hash,
        "seed": result.seed,
        "photon_peak": spec.noise.peak if spec.noise.kind == "poisson" else None,
        "chart_smoothing": CHART_SMOOTHING,
        "chart_background": CHART_BACKGROUND,
        "files": {str(f): file_sha256(f) for f in files},
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")

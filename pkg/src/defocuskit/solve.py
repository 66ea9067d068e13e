"""Box-constrained least squares: accelerated (DR) and plain projected gradient."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .blur import BlurOperator
from .core import DimensionError, as_image, relative_rms
from .grad import GradientWorkspace, grad_fast

log = logging.getLogger(__name__)


class NumericalFailure(ArithmeticError):
    """The objective became non-finite during a solve."""


@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings.

    ``stepsize`` is a positive number, ``"safe"`` (1/rho, the step with a
    convergence guarantee) or ``"paper"`` (1, the step used for the published
    experiments).  ``oracle_tolerance`` only takes effect when ground truth is
    passed to the solver, i.e. in experiment harnesses: the solve stops once
    an iteration improves the relative RMS by less than the tolerance, and if
    that iteration made the RMS worse the previous iterate is returned.
    """

    stepsize: float | str = "safe"
    t0: float = 1.0
    max_iterations: int = 250
    change_tolerance: float | None = None
    oracle_tolerance: float | None = None

    def __post_init__(self):
        if isinstance(self.stepsize, str):
            if self.stepsize not in ("safe", "paper"):
                raise ValueError(f"unknown stepsize mode {self.stepsize!r}")
        elif not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    def step(self, psf_size: int) -> float:
        if self.stepsize == "safe":
            return 1.0 / psf_size
        if self.stepsize == "paper":
            return 1.0
        return float(self.stepsize)


@dataclass
class SolverTrace:
    objective: list[float] = field(default_factory=list)
    change: list[float] = field(default_factory=list)
    rms: list[float] | None = None
    initial_objective: float = math.nan
    initial_rms: float | None = None
    termination: str = "budget"

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def to_csv(self, path) -> None:
        header = ["iteration", "objective", "change"] + (["rms_vs_truth"] if self.rms is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.iterations):
                row = [k + 1, repr(self.objective[k]), repr(self.change[k])]
                if self.rms is not None:
                    row.append(repr(self.rms[k]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "SolverTrace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        trace = cls()
        trace.objective = [float(r["objective"]) for r in rows]
        trace.change = [float(r["change"]) for r in rows]
        if rows and "rms_vs_truth" in rows[0]:
            trace.rms = [float(r["rms_vs_truth"]) for r in rows]
        return trace


def next_t(t: float) -> float:
    """Momentum parameter update ``(1 + sqrt(1 + 4 t^2)) / 2``."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))


def project_box(x) -> np.ndarray:
    """Elementwise clamp onto [0, 1]."""
    return np.clip(x, 0.0, 1.0)


def initial_guess(op: BlurOperator, i) -> np.ndarray:
    i = as_image(i, "data")
    if i.shape != op.image_shape:
        raise DimensionError(f"data shape {i.shape} != {op.image_shape}")
    return project_box(op.central_crop(i))


def _solve(op: BlurOperator, i, cfg: SolverConfig, truth, accelerate: bool):
    x = initial_guess(op, i)
    i = np.asarray(i, dtype=float)
    if truth is not None:
        truth = op.check_object(truth)
    lam = cfg.step(op.psf_size)
    ws = GradientWorkspace(op)
    trace = SolverTrace(rms=[] if truth is not None else None)

    lx = op.apply(x, ws.buffers)
    r0 = lx - i
    trace.initial_objective = 0.5 * float(np.vdot(r0, r0).real)
    if truth is not None:
        trace.initial_rms = relative_rms(x, truth)
    if cfg.max_iterations == 0:
        return x, trace

    o, lo, t = x, lx, float(cfg.t0)
    for k in range(1, cfg.max_iterations + 1):
        g = grad_fast(op, i, o, ws, forward=lo)
        x_new = project_box(o - lam * g)
        lx_new = op.apply(x_new, ws.buffers)
        r = lx_new - i
        f = 0.5 * float(np.vdot(r, r).real)
        if not math.isfinite(f):
            raise NumericalFailure(f"objective is {f} at iteration {k} (stepsize {lam:g})")
        change = float(np.linalg.norm(x_new - x))
        if accelerate:
            t_new = next_t(t)
            beta = (t - 1.0) / t_new
            o = x_new + beta * (x_new - x)
            # L is linear, so L(o) needs no extra forward pass
            lo = (1.0 + beta) * lx_new - beta * lx
            t = t_new
        else:
            o, lo = x_new, lx_new
        x_prev = x
        x, lx = x_new, lx_new

        trace.objective.append(f)
        trace.change.append(change)
        if truth is not None:
            trace.rms.append(relative_rms(x, truth))
        if cfg.change_tolerance is not None and change <= cfg.change_tolerance:
            trace.termination = "change"
            break
        if truth is not None and cfg.oracle_tolerance is not None:
            prev = trace.rms[-2] if k > 1 else trace.initial_rms
            if prev - trace.rms[-1] < cfg.oracle_tolerance:
                trace.termination = "oracle"
                if trace.rms[-1] > prev:
                    # quality dropped: report the estimate from before the drop
                    x = x_prev
                break
    log.debug("%s stopped after %d iterations (%s)", "DR" if accelerate else "PG",
              trace.iterations, trace.termination)
    return x, trace


def restore_dr(op: BlurOperator, i, cfg: SolverConfig = SolverConfig(), truth=None):
    """Accelerated projected gradient (FISTA) from the cropped data.

    Returns the last projected iterate, which always lies in [0, 1], and the trace.
    """
    return _solve(op, i, cfg, truth, accelerate=True)


def restore_pg(op: BlurOperator, i, cfg: SolverConfig = SolverConfig(), truth=None):
    """Projected gradient without momentum; same interface as :func:`restore_dr`."""
    return _solve(op, i, cfg, truth, accelerate=False)

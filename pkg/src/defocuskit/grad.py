"""Gradient of ``f(x) = 0.5 * ||i - L(x)||^2``, evaluated two ways.

``grad_naive`` follows the textbook formula with dense full-image masks per
zone.  ``grad_fast`` touches only the zone slabs and overlapping residual
windows, which is where the speedup comes from.  Both return ``L*(L(x) - i)``.
"""
from __future__ import annotations

import numpy as np

from .blur import BlurOperator, SpectralBuffers
from .core import DimensionError, as_image


class GradientWorkspace:
    """Reusable scratch space bound to one operator; not shared between threads."""

    def __init__(self, op: BlurOperator):
        self.op = op
        self.buffers: SpectralBuffers | None = op.new_buffers() if op.backend == "fft" else None
        self.residual = np.empty(op.image_shape)
        self.forward = np.empty(op.image_shape)


def objective(op: BlurOperator, i, x) -> float:
    r = op.apply(x) - i
    return 0.5 * float(np.vdot(r, r).real)


def _check(op: BlurOperator, i, x):
    x = op.check_object(x)
    i = as_image(i, "data")
    if i.shape != op.image_shape:
        raise DimensionError(f"data shape {i.shape} != {op.image_shape}")
    return i, x


def grad_naive(op: BlurOperator, i, x) -> np.ndarray:
    """Dense-mask evaluation: every zone convolves a full masked copy of ``x``."""
    i, x = _check(op, i, x)
    xr = op._to_rows(x)
    ir = op._to_rows(i)
    masks = [m.to_array(xr.shape, "rows") for m in op.masks]
    forward = np.zeros(ir.shape)
    for n, mask in enumerate(masks):
        forward += op._zone_conv_full(mask * xr, n)
    residual = forward - ir
    g = np.zeros(xr.shape)
    for n, mask in enumerate(masks):
        g += mask * op._zone_corr_valid(residual, n)
    return op._from_rows(g)


def grad_fast(op: BlurOperator, i, x, ws: GradientWorkspace | None = None,
              forward: np.ndarray | None = None) -> np.ndarray:
    """Banded evaluation on zone slabs.

    ``forward`` may carry a precomputed ``L(x)``; the solvers use this to get
    the gradient at an extrapolated point from two projected-point products.
    On return ``ws.forward`` and ``ws.residual`` hold ``L(x)`` and ``L(x) - i``.
    """
    i, x = _check(op, i, x)
    ws = ws or GradientWorkspace(op)
    if forward is None:
        forward = op._from_rows(op._forward_rows(op._to_rows(x), ws.buffers))
    if forward is not ws.forward:
        np.copyto(ws.forward, forward)
    np.subtract(ws.forward, i, out=ws.residual)
    return op._from_rows(op._adjoint_rows(op._to_rows(ws.residual), ws.buffers))

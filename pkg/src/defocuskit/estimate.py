"""Guide-star estimation of the focal position and the blur coefficient.

A guide star is a straight sharp edge crossing every defocus band.  Its
sharpness, measured band by band, peaks at the in-focus zone and decays with
defocus; the decay rate grows with the blur coefficient.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .blur import BlurOperator
from .core import DefocusModel, DimensionError, Orientation, as_image
from .parallel import ordered_map

STATISTICS = ("max", "p95")


class EstimationError(RuntimeError):
    """The guide star carries no usable sharpness information."""


class ExtrapolationWarning(UserWarning):
    """The guide-star slope falls outside the candidate range; the result is clamped."""


@dataclass(frozen=True, eq=False)
class GuideStar:
    """A sub-image holding an edge that runs across the defocus bands.

    ``edge_axis`` is the band orientation of the model: for ``ROWS`` the
    sharpness curve runs down the rows, for ``COLUMNS`` along the columns.
    """

    region: np.ndarray
    edge_axis: Orientation = Orientation.ROWS

    def __post_init__(self):
        region = as_image(self.region, "guide-star region")
        if region.shape[0] < 2 or region.shape[1] < 2:
            raise DimensionError(f"guide-star region must be at least 2x2, got {region.shape}")
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "edge_axis", Orientation.parse(self.edge_axis))

    def banded(self) -> np.ndarray:
        """Region with the banded axis first."""
        return self.region if self.edge_axis is Orientation.ROWS else self.region.T

    @property
    def length(self) -> int:
        return self.banded().shape[0]


def smooth3(values) -> np.ndarray:
    """3-tap moving average with edge replication."""
    v = np.asarray(values, dtype=float)
    return np.convolve(np.pad(v, 1, mode="edge"), np.ones(3) / 3.0, mode="valid")


def fit_range_about(peak: int, n: int) -> tuple[int, int]:
    """Default slope window: from the peak to 85% of the length.

    When the peak sits too close to the far end the window mirrors to the
    rising side, from 15% of the length up to the peak.
    """
    end = max(int(round(0.85 * n)), 1)
    if end - peak >= 3:
        return peak, end
    start = n - end
    if peak + 1 - start >= 3:
        return start, peak + 1
    return 0, n


@dataclass(frozen=True, eq=False)
class SharpnessCurve:
    """Per-band sharpness values and the window used for slope fitting.

    ``peak`` is the position taken as the in-focus band; a window starting at
    the peak measures the falling side, any other window the rising side.
    """

    values: np.ndarray
    fit_range: tuple[int, int]
    peak: int

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("sharpness values must be nonnegative")
        lo, hi = self.fit_range
        if not 0 <= lo < hi <= len(self.values):
            raise ValueError(f"invalid fit range {self.fit_range} for {len(self.values)} values")

    def slope(self) -> float:
        """Least-squares slope over ``fit_range`` (end exclusive)."""
        lo, hi = self.fit_range
        if hi - lo < 2:
            return 0.0
        return float(np.polyfit(np.arange(lo, hi, dtype=float), self.values[lo:hi], 1)[0])

    def variation(self) -> float:
        """Rate at which sharpness decays away from focus; positive for a defocused edge."""
        return -self.slope() if self.fit_range[0] >= self.peak else self.slope()


def edge_contrast(region) -> float:
    """Robust step height: spread between the 2nd and 98th intensity percentiles."""
    lo, hi = np.percentile(region, [2, 98])
    return float(hi - lo)


def sharpness_curve(gs: GuideStar, statistic: str = "max", fit_range: tuple[int, int] | None = None,
                    peak: int | None = None, normalize: bool = True) -> SharpnessCurve:
    """Per-band sharpness: the largest central-difference gradient magnitude across the band.

    ``statistic="p95"`` takes the 95th percentile instead of the maximum,
    which is less sensitive to isolated noisy pixels.  With ``normalize`` the
    curve is divided by the edge contrast, so a guide star of any step height
    compares directly with the unit-contrast simulated edge.  ``peak``
    defaults to the argmax of the smoothed curve.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}")
    a = gs.banded()
    g0, g1 = np.gradient(a)
    mag = np.hypot(g0, g1)
    values = mag.max(axis=1) if statistic == "max" else np.percentile(mag, 95, axis=1)
    if normalize:
        contrast = edge_contrast(a)
        if contrast <= 0:
            raise EstimationError("guide-star region has no contrast")
        values = values / contrast
    if peak is None:
        peak = int(np.argmax(smooth3(values)))
    if fit_range is None:
        fit_range = fit_range_about(peak, len(values))
    return SharpnessCurve(values, (int(fit_range[0]), int(fit_range[1])), int(peak))


def estimate_focal_position(curve: SharpnessCurve, dof_size: int) -> int:
    """1-based in-focus zone, ``round(p / s)`` for the 1-based position p of the smoothed maximum."""
    values = np.asarray(curve.values, dtype=float)
    if values.size == 0:
        raise EstimationError("empty sharpness curve")
    if np.ptp(values) <= 1e-12 * max(float(values.max()), 1.0):
        raise EstimationError("sharpness curve is flat; no focal maximum")
    position = int(np.argmax(smooth3(values))) + 1
    n_zones = -(-values.size // dof_size)
    return int(min(max(1, round(position / dof_size)), n_zones))


def focal_pixel(model: DefocusModel) -> int:
    """0-based pixel at the centre of the in-focus zone, clipped to the extent."""
    p = int(round((model.focal_position - 0.5) * model.dof_size - 0.5))
    return min(max(p, 0), model.extent - 1)


def synthetic_edge(model: DefocusModel, width: int) -> np.ndarray:
    """A unit step crossing all bands, passed through the forward model.

    The object is edge-padded across the bands by the PSF size so the step
    sees no artificial border; the result is cropped back to ``width``.
    """
    if width < 2:
        raise DimensionError("edge width must be >= 2")
    pad = model.psf_size
    full = width + 2 * pad
    profile = np.zeros(full)
    profile[pad + width // 2:] = 1.0
    obj = np.tile(profile, (model.extent, 1))
    if model.orientation is Orientation.COLUMNS:
        obj = obj.T
    op = BlurOperator.from_model(model, obj.shape)
    image = op.central_crop(op.apply(obj))
    if model.orientation is Orientation.COLUMNS:
        image = image.T
    image = image[:, pad:pad + width]
    return image if model.orientation is Orientation.ROWS else image.T


@dataclass(frozen=True)
class BlurEstimate:
    value: float
    variation: float
    candidates: tuple[float, ...]
    candidate_variations: tuple[float, ...]
    fit_range: tuple[int, int]
    clamped: bool


def estimate_blur_coefficient(gs: GuideStar, candidates, model_template: DefocusModel,
                              statistic: str = "max", fit_range: tuple[int, int] | None = None,
                              workers: int | None = None) -> BlurEstimate:
    """Grid search: match the guide star's sharpness decay against simulated edges.

    Each candidate blur coefficient is plugged into ``model_template``; a
    simulated edge of the guide star's size is measured over the same fit range,
    and the estimate interpolates linearly between the bracketing candidates.
    """
    cands = [float(c) for c in candidates]
    if len(cands) < 2:
        raise ValueError("need at least two candidates")
    if any(b <= a for a, b in zip(cands, cands[1:])):
        raise ValueError("candidates must be strictly increasing")
    if Orientation.parse(gs.edge_axis) is not model_template.orientation:
        raise ValueError("guide-star edge axis does not match the model orientation")
    if gs.length != model_template.extent:
        raise DimensionError(
            f"guide star spans {gs.length} pixels across the bands, model extent is {model_template.extent}")

    # anchor the window on the template's focus: the guide star's own argmax is noisy
    peak = focal_pixel(model_template)
    curve = sharpness_curve(gs, statistic, fit_range, peak)
    target = curve.variation()
    width = gs.banded().shape[1]

    def measure(d: float) -> float:
        edge = synthetic_edge(model_template.replace(blur_coefficient=d), width)
        c = sharpness_curve(GuideStar(edge, model_template.orientation), statistic,
                            curve.fit_range, peak)
        return c.variation()

    variations = ordered_map(measure, cands, workers)
    if any(b <= a for a, b in zip(variations, variations[1:])):
        raise EstimationError(
            "candidate sharpness variation is not increasing in the blur coefficient; "
            "check the PSF size and sampling")
    clamped = not variations[0] <= target <= variations[-1]
    if clamped:
        warnings.warn(f"guide-star variation {target:.4g} lies outside the candidate range "
                      f"[{variations[0]:.4g}, {variations[-1]:.4g}]; result clamped",
                      ExtrapolationWarning, stacklevel=2)
    value = float(np.interp(target, variations, cands))
    return BlurEstimate(value, target, tuple(cands), tuple(float(v) for v in variations),
                        curve.fit_range, clamped)

"""Shared domain types: the defocus model and zone masks, plus noise and metric helpers.

Images are plain 2-D ``float64`` numpy arrays throughout the package.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not match the model they are used with."""


class Orientation(str, enum.Enum):
    """Direction of the defocus bands."""

    ROWS = "rows"        # horizontal bands, zone index grows down the rows
    COLUMNS = "columns"  # vertical bands, zone index grows along the columns

    @classmethod
    def parse(cls, value: "str | Orientation") -> "Orientation":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"rows": cls.ROWS, "row": cls.ROWS, "rowbands": cls.ROWS,
                   "columns": cls.COLUMNS, "column": cls.COLUMNS, "cols": cls.COLUMNS,
                   "columnbands": cls.COLUMNS}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown orientation {value!r}") from None


@dataclass(frozen=True)
class ApertureSpec:
    """Sampling of the binary circular pupil.

    ``pupil_radius_fraction`` is the aperture radius relative to the half-grid.
    ``oversample`` (odd) evaluates the pupil on an ``oversample * grid_size`` grid
    and crops the PSF back to ``grid_size``, which truncates large defocus blur
    instead of letting it wrap around the window.
    """

    grid_size: int
    pupil_radius_fraction: float = 0.5
    oversample: int = 1
    noll_normalized: bool = True

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        if not 0.0 < self.pupil_radius_fraction <= 1.0:
            raise ValueError("pupil_radius_fraction must lie in (0, 1]")
        if self.oversample < 1 or self.oversample % 2 == 0:
            raise ValueError("oversample must be a positive odd integer")


@dataclass(frozen=True)
class DefocusModel:
    """Everything needed to build the zone masks and the PSF stack."""

    n_zones: int
    dof_size: int
    blur_coefficient: float
    focal_position: float
    psf_size: int
    orientation: Orientation = Orientation.ROWS
    aperture: ApertureSpec | None = None

    def __post_init__(self):
        if self.n_zones < 1 or self.dof_size < 1:
            raise ValueError("n_zones and dof_size must be >= 1")
        if self.psf_size < 1 or self.psf_size % 2 == 0:
            raise ValueError("psf_size must be odd and >= 1")
        if not math.isfinite(self.blur_coefficient) or not math.isfinite(self.focal_position):
            raise ValueError("blur_coefficient and focal_position must be finite")
        object.__setattr__(self, "orientation", Orientation.parse(self.orientation))
        if self.aperture is None:
            object.__setattr__(self, "aperture", ApertureSpec(self.psf_size))
        elif self.aperture.grid_size != self.psf_size:
            raise ValueError("aperture.grid_size must equal psf_size")

    @property
    def extent(self) -> int:
        """Object size along the banded axis."""
        return self.n_zones * self.dof_size

    def depths(self) -> np.ndarray:
        """Normalized depth of every zone, ``d * (n0 - n)`` for n = 1..N."""
        n = np.arange(1, self.n_zones + 1, dtype=float)
        return self.blur_coefficient * (self.focal_position - n)

    def replace(self, **changes) -> "DefocusModel":
        from dataclasses import replace
        return replace(self, **changes)

    def as_dict(self) -> dict:
        ap = self.aperture
        return {
            "n_zones": self.n_zones,
            "dof_size": self.dof_size,
            "blur_coefficient": self.blur_coefficient,
            "focal_position": self.focal_position,
            "psf_size": self.psf_size,
            "orientation": self.orientation.value,
            "pupil_radius_fraction": ap.pupil_radius_fraction,
            "oversample": ap.oversample,
            "noll_normalized": ap.noll_normalized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DefocusModel":
        psf_size = int(d["psf_size"])
        aperture = ApertureSpec(
            psf_size,
            float(d.get("pupil_radius_fraction", 0.5)),
            int(d.get("oversample", 1)),
            _as_bool(d.get("noll_normalized", True)),
        )
        return cls(int(d["n_zones"]), int(d["dof_size"]), float(d["blur_coefficient"]),
                   float(d["focal_position"]), psf_size,
                   Orientation.parse(d.get("orientation", "rows")), aperture)


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


@dataclass(frozen=True)
class ZoneMask:
    """Band ``[band_start, band_end)`` along the banded axis; 1-based zone index."""

    zone_index: int
    band_start: int
    band_end: int

    def to_array(self, shape: tuple[int, int], orientation: Orientation) -> np.ndarray:
        mask = np.zeros(shape)
        if Orientation.parse(orientation) is Orientation.ROWS:
            mask[self.band_start:self.band_end, :] = 1.0
        else:
            mask[:, self.band_start:self.band_end] = 1.0
        return mask


def build_masks(model: DefocusModel, object_height: int, object_width: int) -> list[ZoneMask]:
    extent = object_height if model.orientation is Orientation.ROWS else object_width
    if extent != model.extent:
        raise DimensionError(
            f"banded axis has {extent} pixels but the model needs "
            f"{model.n_zones} x {model.dof_size} = {model.extent}")
    s = model.dof_size
    return [ZoneMask(n + 1, n * s, (n + 1) * s) for n in range(model.n_zones)]


def as_image(a, name: str = "image") -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def relative_rms(estimate, truth) -> float:
    """Relative RMS error in percent, ``100 * ||estimate - truth||_F / ||truth||_F``."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if est.shape != ref.shape:
        raise DimensionError(f"shape mismatch {est.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise ValueError("truth has zero norm")
    return float(100.0 * np.linalg.norm(est - ref) / denom)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model: ``none``, ``poisson`` (with peak photon count) or ``gaussian`` (SNR in dB)."""

    kind: str = "none"
    peak: float = 1e4
    snr_db: float = math.inf

    def __post_init__(self):
        if self.kind not in ("none", "poisson", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "poisson" and not self.peak > 0:
            raise ValueError("poisson peak must be positive")
        if self.kind == "gaussian" and not self.snr_db > 0:
            raise ValueError("gaussian SNR must be positive")

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """Parse ``none``, ``poisson:<peak>`` or ``gaussian:<snr_db>``."""
        kind, _, arg = text.strip().lower().partition(":")
        if kind == "none":
            return cls()
        if kind == "poisson":
            return cls("poisson", peak=float(arg) if arg else 1e4)
        if kind == "gaussian":
            if not arg:
                raise ValueError("gaussian noise needs an SNR, e.g. gaussian:40")
            return cls("gaussian", snr_db=float(arg))
        raise ValueError(f"unknown noise spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "poisson":
            return f"poisson:{self.peak:g}"
        if self.kind == "gaussian":
            return f"gaussian:{self.snr_db:g}"
        return "none"


def add_noise(image, noise: NoiseSpec, seed: int | None = 0) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if noise.kind == "none":
        return img.copy()
    rng = np.random.default_rng(seed)
    if noise.kind == "poisson":
        if np.any(img < 0):
            raise ValueError("poisson noise needs a nonnegative image")
        return rng.poisson(img * noise.peak) / noise.peak
    if math.isinf(noise.snr_db):
        return img.copy()
    sigma = np.sqrt(np.mean(img ** 2)) / 10.0 ** (noise.snr_db / 20.0)
    return img + rng.normal(0.0, sigma, size=img.shape)


def threshold_data(image, tau: float | None) -> np.ndarray:
    """Zero every pixel below ``tau`` (dark-background suppression); ``None`` is a no-op."""
    img = np.asarray(image, dtype=float)
    if tau is None:
        return img
    return np.where(img < tau, 0.0, img)

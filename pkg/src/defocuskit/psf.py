"""Defocus PSF synthesis from a binary pupil and the Zernike defocus mode."""
from __future__ import annotations

import functools
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ApertureSpec, DefocusModel

SQRT3 = np.sqrt(3.0)


class PsfTruncationWarning(UserWarning):
    """A PSF spreads beyond its ``psf_size`` window."""


def _radius_grid(grid_size: int) -> np.ndarray:
    """Distance from the grid center, normalized so the inscribed circle is r = 1."""
    if grid_size == 1:
        return np.zeros((1, 1))
    c = (grid_size - 1) / 2.0
    yy, xx = np.mgrid[:grid_size, :grid_size] - c
    return np.hypot(xx, yy) / c


def zernike_defocus(grid_size: int, normalized: bool = True) -> np.ndarray:
    """Z_2^0 on the unit disk inscribed in the grid, zero outside.

    With ``normalized`` the Noll factor sqrt(3) is applied so that the mode has
    unit mean square over the disk.
    """
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    r = _radius_grid(grid_size)
    z = 2.0 * r ** 2 - 1.0
    if normalized:
        z = SQRT3 * z
    return np.where(r <= 1.0, z, 0.0)


def pupil_mask(grid_size: int, radius_fraction: float) -> np.ndarray:
    return (_radius_grid(grid_size) <= radius_fraction).astype(float)


def second_moment_radius(kernel: np.ndarray) -> float:
    """RMS distance of the kernel mass from the center pixel."""
    n = kernel.shape[0]
    c = (n - 1) / 2.0
    yy, xx = np.mgrid[:n, :n] - c
    total = kernel.sum()
    return float(np.sqrt(np.sum(kernel * (xx ** 2 + yy ** 2)) / total))


def _raw_psf(aperture: ApertureSpec, depth: float) -> tuple[np.ndarray, float]:
    rho = aperture.grid_size
    m = rho * aperture.oversample
    field_ = pupil_mask(m, aperture.pupil_radius_fraction) * np.exp(
        1j * depth * zernike_defocus(m, aperture.noll_normalized))
    # ifftshift puts the grid center at index 0 so the DFT of the symmetric pupil is exact-even
    intensity = np.abs(np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field_)))) ** 2
    lo = (m - rho) // 2
    kernel = intensity[lo:lo + rho, lo:lo + rho]
    lost = 1.0 - kernel.sum() / intensity.sum()
    return kernel, float(lost)


@functools.lru_cache(maxsize=32)
def _in_focus_loss(aperture: ApertureSpec) -> float:
    return _raw_psf(aperture, 0.0)[1]


def _truncated(kernel: np.ndarray, lost: float, aperture: ApertureSpec) -> bool:
    if aperture.oversample > 1:
        # diffraction tails always leak a little; flag what defocus adds on top
        return lost - _in_focus_loss(aperture) > 0.01
    # on the bare grid there is no outside, only wrap-around; use the moment radius
    return second_moment_radius(kernel) > 0.9 * aperture.grid_size / 2.0


def make_psf(aperture: ApertureSpec, depth: float, *, warn: bool = True) -> np.ndarray:
    """Squared modulus of the centered DFT of the defocused pupil, L1-normalized.

    The result is symmetrized about the center pixel, which only removes
    round-off since the exact kernel is centrosymmetric.
    """
    kernel, lost = _raw_psf(aperture, depth)
    kernel = 0.5 * (kernel + kernel[::-1, ::-1])
    if warn and aperture.grid_size > 1 and _truncated(kernel, lost, aperture):
        warnings.warn(f"PSF at depth {depth:g} exceeds the {aperture.grid_size}x"
                      f"{aperture.grid_size} window", PsfTruncationWarning, stacklevel=2)
    return kernel / kernel.sum()


@dataclass(frozen=True, eq=False)
class PsfStack:
    """One normalized ``size x size`` kernel per depth zone."""

    kernels: np.ndarray  # (N, rho, rho)
    depths: np.ndarray   # (N,)

    @property
    def n_zones(self) -> int:
        return self.kernels.shape[0]

    @property
    def size(self) -> int:
        return self.kernels.shape[1]

    def __len__(self):
        return self.n_zones

    def __getitem__(self, n):
        return self.kernels[n]

    def save(self, directory: str, model: DefocusModel | None = None) -> None:
        """Write every kernel as a peak-normalized 16-bit PGM plus ``metadata.txt``."""
        from .imageio import write_pgm

        os.makedirs(directory, exist_ok=True)
        width = len(str(self.n_zones))
        for n, k in enumerate(self.kernels, start=1):
            write_pgm(os.path.join(directory, f"psf_{n:0{width}d}.pgm"), k / k.max(), bits=16)
        with open(os.path.join(directory, "metadata.txt"), "w") as fh:
            if model is not None:
                fh.write(f"blur_coefficient={model.blur_coefficient!r}\n")
                fh.write(f"focal_position={model.focal_position!r}\n")
            fh.write(f"n_zones={self.n_zones}\npsf_size={self.size}\n")
            fh.write("depths=" + ",".join(repr(float(d)) for d in self.depths) + "\n")


def build_psf_stack(model: DefocusModel) -> PsfStack:
    depths = model.depths()
    truncated = []
    kernels = np.empty((model.n_zones, model.psf_size, model.psf_size))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PsfTruncationWarning)
        for n, depth in enumerate(depths):
            kernels[n] = make_psf(model.aperture, depth)
            if caught:
                truncated.append(n + 1)
                caught.clear()
    if truncated:
        warnings.warn(f"{len(truncated)} of {model.n_zones} PSFs exceed the "
                      f"{model.psf_size}x{model.psf_size} window (zones {truncated[0]}.."
                      f"{truncated[-1]})", PsfTruncationWarning, stacklevel=2)
    return PsfStack(kernels, depths)

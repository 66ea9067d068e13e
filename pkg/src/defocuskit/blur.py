"""Forward operator ``L(x) = sum_n (mu_n * x) conv p_n``, its adjoint and data synthesis.

The object of shape (l, w) maps to a full-convolution image of shape
(l + rho - 1, w + rho - 1).  Internally every operator works in "row band"
layout; column-banded models are handled by transposing.

Two convolution backends exist:

``direct``
    ``scipy.signal`` spatial convolution of each zone slab (reference path).
``fft``
    each slab row is transformed along the band direction and the rho kernel
    rows are summed directly across it, batched over all zones at once.
    Exact up to round-off, and the only practical choice at rho = 65.
"""
from __future__ import annotations

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .core import (DefocusModel, DimensionError, NoiseSpec, Orientation, ZoneMask,
                   add_noise, as_image, build_masks)
from .psf import PsfStack, build_psf_stack

BACKENDS = ("fft", "direct")


def fft_workers() -> int:
    from .parallel import worker_count
    return worker_count()


class SpectralBuffers:
    """Scratch arrays reused by the ``fft`` backend between calls."""

    def __init__(self, n_zones: int, dof_size: int, rho: int, n_freq: int):
        l = n_zones * dof_size
        self.acc = np.empty((l + rho - 1, n_freq), dtype=complex)
        self.tmp = np.empty((n_zones, dof_size, n_freq), dtype=complex)
        self.grad = np.empty((n_zones, dof_size, n_freq), dtype=complex)


class BlurOperator:
    """Banded spatially-variant blur bound to an object shape."""

    def __init__(self, masks: list[ZoneMask], psfs: PsfStack, object_shape: tuple[int, int],
                 orientation: Orientation | str = Orientation.ROWS, backend: str = "fft"):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
        self.orientation = Orientation.parse(orientation)
        self.object_shape = (int(object_shape[0]), int(object_shape[1]))
        self.masks = list(masks)
        self.psfs = psfs
        self.backend = backend
        if len(self.masks) != psfs.n_zones:
            raise DimensionError(f"{len(self.masks)} masks for {psfs.n_zones} PSFs")
        rows = self.object_shape[0] if self.orientation is Orientation.ROWS else self.object_shape[1]
        s = self.masks[0].band_end - self.masks[0].band_start
        for n, m in enumerate(self.masks):
            if (m.band_start, m.band_end) != (n * s, (n + 1) * s):
                raise DimensionError("masks must be equal contiguous bands in zone order")
        if s * len(self.masks) != rows:
            raise DimensionError(f"masks cover {s * len(self.masks)} of {rows} banded pixels")
        self.dof_size = s
        rho = psfs.size
        self.image_shape = (self.object_shape[0] + rho - 1, self.object_shape[1] + rho - 1)
        # canonical row-band layout
        self._kernels = (psfs.kernels if self.orientation is Orientation.ROWS
                         else np.ascontiguousarray(psfs.kernels.transpose(0, 2, 1)))
        self._width = self.object_shape[1] if self.orientation is Orientation.ROWS else self.object_shape[0]
        self._n_fft = sfft.next_fast_len(self._width + rho - 1, real=True)
        self._kh = None
        self._khc = None

    @classmethod
    def from_model(cls, model: DefocusModel, object_shape: tuple[int, int],
                   backend: str = "fft", psfs: PsfStack | None = None) -> "BlurOperator":
        masks = build_masks(model, *object_shape)
        if psfs is None:
            psfs = build_psf_stack(model)
        return cls(masks, psfs, object_shape, model.orientation, backend)

    @property
    def n_zones(self) -> int:
        return len(self.masks)

    @property
    def psf_size(self) -> int:
        return self.psfs.size

    @property
    def n_freq(self) -> int:
        return self._n_fft // 2 + 1

    def _spectra(self):
        if self._kh is None:
            self._kh = sfft.rfft(self._kernels, n=self._n_fft, axis=2, workers=fft_workers())
            self._khc = np.conj(self._kh)
        return self._kh, self._khc

    def new_buffers(self) -> SpectralBuffers:
        return SpectralBuffers(self.n_zones, self.dof_size, self.psf_size, self.n_freq)

    # -- layout ---------------------------------------------------------------
    def _to_rows(self, a: np.ndarray) -> np.ndarray:
        return a if self.orientation is Orientation.ROWS else a.T

    _from_rows = _to_rows

    def check_object(self, x) -> np.ndarray:
        x = as_image(x, "object")
        if x.shape != self.object_shape:
            raise DimensionError(f"object shape {x.shape} != {self.object_shape}")
        return x

    def check_image(self, y) -> np.ndarray:
        y = as_image(y, "image")
        if y.shape != self.image_shape:
            raise DimensionError(f"image shape {y.shape} != {self.image_shape}")
        return y

    # -- banded (slab) evaluation ---------------------------------------------
    def _forward_rows(self, xr: np.ndarray, buffers: SpectralBuffers | None = None) -> np.ndarray:
        n, s, rho = self.n_zones, self.dof_size, self.psf_size
        l, w = xr.shape
        if self.backend == "direct":
            out = np.zeros((l + rho - 1, w + rho - 1))
            for z in range(n):
                out[z * s:z * s + s + rho - 1] += signal.convolve2d(
                    xr[z * s:(z + 1) * s], self._kernels[z], mode="full")
            return out
        kh, _ = self._spectra()
        b = buffers or self.new_buffers()
        xh = sfft.rfft(xr, n=self._n_fft, axis=1, workers=fft_workers()).reshape(n, s, -1)
        acc, tmp = b.acc, b.tmp
        acc.fill(0.0)
        flat = tmp.reshape(l, -1)
        for a in range(rho):
            np.multiply(xh, kh[:, a, None, :], out=tmp)
            acc[a:a + l] += flat
        return sfft.irfft(acc, n=self._n_fft, axis=1, workers=fft_workers())[:, :w + rho - 1]

    def _adjoint_rows(self, yr: np.ndarray, buffers: SpectralBuffers | None = None) -> np.ndarray:
        n, s, rho = self.n_zones, self.dof_size, self.psf_size
        l = n * s
        w = yr.shape[1] - rho + 1
        if self.backend == "direct":
            out = np.empty((l, w))
            for z in range(n):
                out[z * s:(z + 1) * s] = signal.correlate2d(
                    yr[z * s:z * s + s + rho - 1], self._kernels[z], mode="valid")
            return out
        _, khc = self._spectra()
        b = buffers or self.new_buffers()
        yh = sfft.rfft(yr, n=self._n_fft, axis=1, workers=fft_workers())
        g, tmp = b.grad, b.tmp
        g.fill(0.0)
        for a in range(rho):
            np.multiply(yh[a:a + l].reshape(n, s, -1), khc[:, a, None, :], out=tmp)
            g += tmp
        return sfft.irfft(g.reshape(l, -1), n=self._n_fft, axis=1, workers=fft_workers())[:, :w]

    # -- one zone applied to a whole (dense) array, used by the naive gradient --
    def _zone_conv_full(self, xr: np.ndarray, zone: int) -> np.ndarray:
        if self.backend == "direct":
            return signal.convolve2d(xr, self._kernels[zone], mode="full")
        kh, _ = self._spectra()
        h, w = xr.shape
        rho = self.psf_size
        xh = sfft.rfft(xr, n=self._n_fft, axis=1, workers=fft_workers())
        acc = np.zeros((h + rho - 1, xh.shape[1]), dtype=complex)
        for a in range(rho):
            acc[a:a + h] += xh * kh[zone, a]
        return sfft.irfft(acc, n=self._n_fft, axis=1, workers=fft_workers())[:, :w + rho - 1]

    def _zone_corr_valid(self, yr: np.ndarray, zone: int) -> np.ndarray:
        if self.backend == "direct":
            return signal.correlate2d(yr, self._kernels[zone], mode="valid")
        _, khc = self._spectra()
        rho = self.psf_size
        h, w = yr.shape[0] - rho + 1, yr.shape[1] - rho + 1
        yh = sfft.rfft(yr, n=self._n_fft, axis=1, workers=fft_workers())
        g = np.zeros((h, yh.shape[1]), dtype=complex)
        for a in range(rho):
            g += yh[a:a + h] * khc[zone, a]
        return sfft.irfft(g, n=self._n_fft, axis=1, workers=fft_workers())[:, :w]

    # -- public ---------------------------------------------------------------
    def apply(self, x, buffers: SpectralBuffers | None = None) -> np.ndarray:
        x = self.check_object(x)
        return self._from_rows(self._forward_rows(self._to_rows(x), buffers))

    def adjoint(self, y, buffers: SpectralBuffers | None = None) -> np.ndarray:
        y = self.check_image(y)
        return self._from_rows(self._adjoint_rows(self._to_rows(y), buffers))

    def central_crop(self, y) -> np.ndarray:
        """The object-sized central part of an image-sized array."""
        c = (self.psf_size - 1) // 2
        l, w = self.object_shape
        return np.asarray(y)[c:c + l, c:c + w]


def apply(op: BlurOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: BlurOperator, y) -> np.ndarray:
    return op.adjoint(y)


def synthesize_data(op: BlurOperator, obj, noise: NoiseSpec = NoiseSpec(), seed: int | None = 0) -> np.ndarray:
    """Blur an object in [0, 1] and add noise: the full data image ``L(o) + w``."""
    obj = op.check_object(obj)
    if obj.min() < 0.0 or obj.max() > 1.0:
        raise ValueError("object intensities must lie in [0, 1]")
    clean = op.apply(obj)
    if noise.kind == "poisson":
        # round-off can leave tiny negatives in FFT output
        clean = np.maximum(clean, 0.0)
    return add_noise(clean, noise, seed)

"""Dataset distortion and correction for small images.

Every 32x32 image is edge-padded to 64x64, blurred with 64 one-row zones
(focus at row 16, 9x9 PSFs) into a 72x72 data image and corrupted with
Poisson noise.  The distorted version B is the central 32x32 of the data.
The corrected version C restores the central 64x64 of the data, padded
back to 72x72 with its edge values, by 20 DR iterations with unit stepsize,
and keeps the central 32x32 of the estimate.  Colour images are processed
channel by channel with the same PSF stack.
"""
from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass

import numpy as np

from ..blur import BlurOperator, synthesize_data
from ..core import ApertureSpec, DefocusModel, NoiseSpec, relative_rms, threshold_data
from ..imageio import read_image, write_image
from ..solve import SolverConfig, restore_dr
from .sweeps import BENCH_APERTURE, PHOTON_PEAK, file_sha256

IMAGE_SIZE = 32
PADDED_SIZE = 64
IMAGE_EXTENSIONS = (".pgm", ".ppm", ".pnm", ".png", ".npy")

log = logging.getLogger(__name__)


def pipeline_model(blur_coefficient: float) -> DefocusModel:
    """64 zones of one row, focus at zone 16, 9x9 PSFs."""
    return DefocusModel(64, 1, blur_coefficient, 16, 9,
                        aperture=ApertureSpec(9, **BENCH_APERTURE))


@dataclass(frozen=True)
class PipelineConfig:
    blur_coefficient: float
    seed: int = 0
    noise: NoiseSpec = NoiseSpec("poisson", peak=PHOTON_PEAK)
    iterations: int = 20
    stepsize: float | str = "paper"
    threshold: float | None = None

    def describe(self) -> dict:
        return {"blur_coefficient": self.blur_coefficient, "seed": self.seed, "noise": str(self.noise),
                "iterations": self.iterations, "stepsize": self.stepsize, "threshold": self.threshold,
                "model": pipeline_model(self.blur_coefficient).as_dict()}


def image_seed(seed: int, name: str) -> int:
    """Noise seed tied to the image name, independent of directory order."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def _channels(image: np.ndarray) -> list[np.ndarray]:
    return [image] if image.ndim == 2 else [image[..., c] for c in range(image.shape[2])]


def _stack(channels: list[np.ndarray], like: np.ndarray) -> np.ndarray:
    return channels[0] if like.ndim == 2 else np.stack(channels, axis=-1)


class DistortionPipeline:
    """Distort and correct single images with one shared operator."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.op = BlurOperator.from_model(pipeline_model(config.blur_coefficient),
                                          (PADDED_SIZE, PADDED_SIZE))
        self.solver = SolverConfig(config.stepsize, max_iterations=config.iterations)

    def _one_channel(self, channel: np.ndarray, seed) -> tuple[np.ndarray, np.ndarray]:
        pad = (PADDED_SIZE - IMAGE_SIZE) // 2
        c = (self.op.psf_size - 1) // 2
        obj = np.pad(channel, pad, mode="edge")
        data = synthesize_data(self.op, obj, self.config.noise, seed)
        lo = pad + c
        distorted = data[lo:lo + IMAGE_SIZE, lo:lo + IMAGE_SIZE]
        # the solver sees only the object-sized centre, padded back to full size
        observed = np.pad(data[c:c + PADDED_SIZE, c:c + PADDED_SIZE], c, mode="edge")
        observed = threshold_data(observed, self.config.threshold)
        x, _ = restore_dr(self.op, observed, self.solver)
        corrected = x[pad:pad + IMAGE_SIZE, pad:pad + IMAGE_SIZE]
        return distorted, corrected

    def process(self, image, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (distorted, corrected) versions of a 32x32 (x channels) image in [0, 1]."""
        image = np.asarray(image, dtype=float)
        if image.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE) or image.ndim not in (2, 3):
            raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {image.shape}")
        if image.min() < 0 or image.max() > 1:
            raise ValueError("image intensities must lie in [0, 1]")
        chans = _channels(image)
        seeds = np.random.SeedSequence(seed).spawn(len(chans))
        out = [self._one_channel(ch, s) for ch, s in zip(chans, seeds)]
        return _stack([o[0] for o in out], image), _stack([o[1] for o in out], image)


def _output_name(name: str, image: np.ndarray) -> str:
    stem = os.path.splitext(name)[0]
    return stem + (".ppm" if image.ndim == 3 else ".pgm")


def run_classification_pipeline(input_dir, output_dir, d: float, seed: int = 0,
                                config: PipelineConfig | None = None) -> dict:
    """Write distorted (``B_<d>``) and corrected (``C_<d>``) sets plus a manifest.

    Unreadable or wrongly sized inputs are skipped and listed in the manifest.
    Returns the manifest dictionary, which also lands in ``manifest_<d>.json``.
    """
    config = config or PipelineConfig(d, seed)
    if config.blur_coefficient != d or config.seed != seed:
        raise ValueError("config disagrees with the d and seed arguments")
    tag = f"{d:g}"
    dir_b = os.path.join(output_dir, f"B_{tag}")
    dir_c = os.path.join(output_dir, f"C_{tag}")
    os.makedirs(dir_b, exist_ok=True)
    os.makedirs(dir_c, exist_ok=True)
    pipe = DistortionPipeline(config)

    images, skipped = [], []
    for name in sorted(os.listdir(input_dir)):
        path = os.path.join(input_dir, name)
        if not os.path.isfile(path) or os.path.splitext(name)[1].lower() not in IMAGE_EXTENSIONS:
            continue
        try:
            image = read_image(path)
            distorted, corrected = pipe.process(image, image_seed(seed, name))
        except Exception as exc:  # noqa: BLE001 - any bad input is logged and skipped
            log.warning("skipping %s: %s", path, exc)
            skipped.append({"name": name, "reason": str(exc)})
            continue
        out = _output_name(name, image)
        write_image(os.path.join(dir_b, out), distorted)
        write_image(os.path.join(dir_c, out), corrected)
        images.append({
            "name": name,
            "input_sha256": file_sha256(path),
            "seed": image_seed(seed, name),
            "rms_distorted": relative_rms(distorted, image),
            "rms_corrected": relative_rms(corrected, image),
            "distorted": os.path.relpath(os.path.join(dir_b, out), output_dir),
            "corrected": os.path.relpath(os.path.join(dir_c, out), output_dir),
            "distorted_sha256": file_sha256(os.path.join(dir_b, out)),
            "corrected_sha256": file_sha256(os.path.join(dir_c, out)),
        })
    manifest = {
        "config": config.describe(),
        "input_dir": os.path.abspath(input_dir),
        "images": images,
        "skipped": skipped,
        "mean_rms_distorted": float(np.mean([r["rms_distorted"] for r in images])) if images else None,
        "mean_rms_corrected": float(np.mean([r["rms_corrected"] for r in images])) if images else None,
    }
    with open(os.path.join(output_dir, f"manifest_{tag}.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def make_sample_image(rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    """A random RGB scene: smooth background plus a few coloured shapes."""
    yy, xx = np.mgrid[:size, :size] / (size - 1)
    base = rng.uniform(0.1, 0.9, 3)
    tilt = rng.uniform(-0.3, 0.3, (2, 3))
    img = base + yy[..., None] * tilt[0] + xx[..., None] * tilt[1]
    for _ in range(rng.integers(2, 6)):
        colour = rng.uniform(0.0, 1.0, 3)
        cy, cx = rng.uniform(0.1, 0.9, 2)
        ry, rx = rng.uniform(0.08, 0.35, 2)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        else:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        img[mask] = colour
    if rng.random() < 0.5:
        freq = rng.uniform(2, 6)
        angle = rng.uniform(0, np.pi)
        stripes = 0.15 * np.sin(2 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)))
        img = img + stripes[..., None]
    return np.clip(img, 0.0, 1.0)


def write_sample_set(directory, count: int = 100, seed: int = 0) -> list[str]:
    """Write ``count`` random 32x32 RGB images as 8-bit PPM files."""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for k in range(count):
        path = os.path.join(directory, f"sample_{k:04d}.ppm")
        write_image(path, make_sample_image(rng))
        paths.append(path)
    return paths

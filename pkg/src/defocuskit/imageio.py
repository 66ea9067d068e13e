"""Image files: binary PGM/PPM (8 or 16 bit), PNG through Pillow, and ``.npy``.

Intensities map linearly onto [0, 1] by the maximum code value.  Writing
clips to [0, 1] and quantizes with round-half-up.
"""
from __future__ import annotations

import os

import numpy as np


def _read_pnm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6", b"P2"):
            raise ValueError(f"{path}: unsupported PNM type {magic!r}")
        # read the header byte-wise so the raster starts exactly after one whitespace
        header = []
        buf = b""
        while len(header) < 3:
            ch = fh.read(1)
            if not ch:
                raise ValueError(f"{path}: truncated header")
            if ch == b"#":
                fh.readline()
                continue
            if ch.isspace():
                if buf:
                    header.append(int(buf))
                    buf = b""
            else:
                buf += ch
        width, height, maxval = header
        channels = 3 if magic == b"P6" else 1
        if magic == b"P2":
            data = np.array(fh.read().split(), dtype=np.int64)
        else:
            dtype = np.dtype(">u2" if maxval > 255 else "u1")
            data = np.frombuffer(fh.read(width * height * channels * dtype.itemsize), dtype=dtype)
        shape = (height, width, channels) if channels == 3 else (height, width)
        return data.reshape(shape).astype(float) / maxval


def read_image(path: str) -> np.ndarray:
    """Read an image as floats in [0, 1] (or raw floats for ``.npy``)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".npy":
        return np.load(path).astype(float)
    if ext in (".pgm", ".ppm", ".pnm"):
        return _read_pnm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=float)
            return arr / (65535.0 if arr.max() > 255 else 255.0)
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return np.asarray(im, dtype=float) / 255.0


def quantize(image, bits: int = 8) -> np.ndarray:
    maxval = (1 << bits) - 1
    return np.floor(np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * maxval + 0.5).astype(np.int64)


def write_pgm(path: str, image, bits: int = 8) -> None:
    """Binary PGM (2-D input) or PPM (H x W x 3 input)."""
    arr = np.asarray(image, dtype=float)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    codes = quantize(arr, bits)
    magic = b"P6" if arr.ndim == 3 else b"P5"
    h, w = arr.shape[:2]
    dtype = ">u2" if bits == 16 else np.uint8
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n%d\n" % (w, h, (1 << bits) - 1))
        fh.write(codes.astype(dtype).tobytes())


def write_image(path: str, image, bits: int = 8) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".npy":
        np.save(path, np.asarray(image, dtype=float))
    elif ext in (".pgm", ".ppm", ".pnm"):
        write_pgm(path, image, bits)
    else:
        from PIL import Image

        codes = quantize(image, 8).astype(np.uint8)
        Image.fromarray(codes).save(path)

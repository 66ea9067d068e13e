"""Deterministic synthetic test chart: text and geometric shapes on a gray field."""
from __future__ import annotations

import numpy as np

# 5x7 glyphs, one 5-bit row per entry, MSB on the left
_GLYPHS = {
    " ": (0, 0, 0, 0, 0, 0, 0),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
}


def glyph(ch: str) -> np.ndarray:
    rows = _GLYPHS[ch.upper()]
    return np.array([[(r >> (4 - b)) & 1 for b in range(5)] for r in rows], dtype=float)


def draw_text(canvas: np.ndarray, text: str, top: int, left: int, scale: int, value: float) -> None:
    """Stamp ``text`` in place; glyphs are 5x7 cells magnified by ``scale``."""
    x = left
    for ch in text:
        g = np.kron(glyph(ch), np.ones((scale, scale)))
        h, w = g.shape
        region = canvas[top:top + h, x:x + w]
        hh, ww = region.shape
        if hh and ww:
            sub = g[:hh, :ww]
            region[sub > 0] = value
        x += 6 * scale


def make_test_chart(size: int = 423, background: float = 0.2) -> np.ndarray:
    """Square chart in [0, 1]; the layout scales with ``size``."""
    u = size / 423.0
    yy, xx = np.mgrid[:size, :size] / u
    chart = np.full((size, size), background)

    # smooth horizontal ramp across the lower band
    band = (yy > 300) & (yy < 405) & (xx > 20) & (xx < 403)
    chart[band] = 0.25 + 0.7 * (xx[band] - 20) / 383.0

    chart[(yy - 95) ** 2 + (xx - 95) ** 2 < 70 ** 2] = 0.85
    chart[(yy - 95) ** 2 + (xx - 95) ** 2 < 30 ** 2] = 0.45
    ring = np.hypot(yy - 100, xx - 320)
    chart[(ring < 75) & (ring > 45)] = 0.7
    chart[(yy > 175) & (yy < 285) & (xx > 30) & (xx < 150)] = 0.6
    tri = (yy > 180) & (yy < 290) & (np.abs(xx - 372) < (yy - 180) * 0.4)
    chart[tri] = 0.95

    scale = max(1, int(round(4 * u)))
    draw_text(chart, "DEFOCUS", int(190 * u), int(158 * u), scale, 1.0)
    draw_text(chart, "REMOVAL", int(232 * u), int(158 * u), scale, 0.05)
    small = max(1, int(round(2 * u)))
    draw_text(chart, "0123456789", int(330 * u), int(60 * u), small, 0.0)
    draw_text(chart, "TEST CHART", int(365 * u), int(220 * u), small, 1.0)
    return np.clip(chart, 0.0, 1.0)

"""PNG export of spectrograms and snake overlays.

Grid coordinates (x = frame, y = bin with y = 0 at DC) map to image pixels as
column = x, row = height - 1 - y, so low frequencies sit at the bottom of the
rendered picture. Pixel value is round(255 * I): energy is dark.
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image, ImageDraw

from .snakes import Snake
from .spectrogram import as_grid

COLOR_TRUE = (40, 220, 60)
COLOR_FALSE = (230, 40, 40)
COLOR_UNKNOWN = (240, 200, 40)


def to_pixels(image) -> np.ndarray:
    """8-bit grayscale pixel array (rows = flipped y, cols = x)."""
    grid = as_grid(image)
    return np.rint(255.0 * grid.T[::-1]).astype(np.uint8)


def spectrogram_png(image) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_pixels(image), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def overlay_png(image, snakes: list[Snake], verdicts: list[bool | None] | None = None) -> bytes:
    """Draw snakes on the spectrogram; verdicts pick the color per snake
    (True = detection, False = rejected, None = unclassified)."""
    pixels = to_pixels(image)
    height = pixels.shape[0]
    img = Image.fromarray(pixels, mode="L").convert("RGB")
    draw = ImageDraw.Draw(img)
    verdicts = verdicts or [None] * len(snakes)
    for snake, verdict in zip(snakes, verdicts):
        color = COLOR_UNKNOWN if verdict is None else (COLOR_TRUE if verdict else COLOR_FALSE)
        xy = [(float(x), float(height - 1 - y)) for x, y in snake.points]
        draw.line(xy, fill=color, width=1)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()

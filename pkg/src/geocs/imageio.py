"""Grayscale image ingestion and export (PNG / PGM via Pillow).

All internal arithmetic is double precision on [0, 1]; quantization to 8- or
16-bit integers happens only when a file is written.
"""

import numpy as np
from PIL import Image

from .sampling import FormatError


def load_image(path):
    """Read a grayscale PNG/PGM and scale intensities to [0, 1] float64."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("I;16", "I;16B", "I;16L"):
                data = np.asarray(img.convert("I"), dtype=np.float64)
                scale = 65535.0
            elif img.mode == "I":
                data = np.asarray(img, dtype=np.float64)
                scale = float(data.max()) if data.max() > 255 else 255.0
            else:
                data = np.asarray(img.convert("L"), dtype=np.float64)
                scale = 255.0
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from exc
    if data.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image")
    return data / scale


def save_image(img, path, bits=16):
    """Quantize a [0, 1] image to 8- or 16-bit grayscale and write it."""
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        quantized = np.round(img * 255.0).astype(np.uint8)
        Image.fromarray(quantized, mode="L").save(path)
    else:
        quantized = np.round(img * 65535.0).astype(np.uint16)
        Image.fromarray(quantized).save(path)

"""Minimal PNG heatmap writer — stdlib only, no plotting dependency.

Images are a convenience view of matrices; nothing downstream depends on
them. Matrices are rendered with a small perceptually-ordered colormap,
nearest-neighbor upscaled so small mode matrices stay legible.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

# sparse viridis-like anchors, interpolated linearly in RGB
_ANCHORS = np.array([
    [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142],
    [33, 144, 141], [39, 173, 129], [92, 200, 99], [170, 220, 50], [253, 231, 37],
], dtype=np.float64)


def _colormap(values: np.ndarray) -> np.ndarray:
    x = np.clip(values, 0.0, 1.0) * (len(_ANCHORS) - 1)
    lo = np.floor(x).astype(int)
    hi = np.minimum(lo + 1, len(_ANCHORS) - 1)
    frac = (x - lo)[..., None]
    rgb = _ANCHORS[lo] * (1 - frac) + _ANCHORS[hi] * frac
    return rgb.astype(np.uint8)


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def write_png(path, rgb: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as an 8-bit RGB PNG."""
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[row].tobytes() for row in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n")
        fh.write(_png_chunk(b"IHDR", header))
        fh.write(_png_chunk(b"IDAT", zlib.compress(raw, 9)))
        fh.write(_png_chunk(b"IEND", b""))


def write_heatmap(path, values, min_size: int = 320, symmetric: bool = False) -> None:
    """Render a real matrix as a colormapped PNG.

    With ``symmetric`` the color scale is centered on zero (for signed
    quantities such as density-matrix parts); otherwise it spans
    [0, max(values)].
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D matrix, got shape {v.shape}")
    if symmetric:
        span = np.max(np.abs(v)) or 1.0
        norm = (v + span) / (2 * span)
    else:
        span = np.max(v) or 1.0
        norm = np.clip(v, 0.0, None) / span
    scale = max(1, int(np.ceil(min_size / max(v.shape))))
    big = np.kron(norm, np.ones((scale, scale)))
    write_png(path, _colormap(big))

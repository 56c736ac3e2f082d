"""Image, heightmap and field I/O."""

from __future__ import annotations

import math
import os

import numpy as np
from PIL import Image

__all__ = [
    "IOFormatError",
    "load_image",
    "save_image",
    "load_heightmap",
    "save_heightmap_csv",
    "read_csv_field",
    "write_csv_field",
    "HGT_VOID",
]

HGT_VOID = -32768


class IOFormatError(ValueError):
    pass


def load_image(path):
    """Load PNG/PGM/PPM as floats in ``[0, 1]``.

    Returns one ``(M, N)`` array for grey images and a list of three for
    colour images.
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise IOFormatError(f"cannot read image {path}: {exc}") from exc
    if img.format not in ("PNG", "PPM"):
        raise IOFormatError(f"unsupported image format {img.format} (PNG, PGM or PPM expected)")
    mode = img.mode
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        a = np.asarray(img, dtype=float)
        top = 65535.0 if mode.startswith("I;16") or a.max() > 255 else 255.0
        return a / top
    if mode in ("1", "L", "P", "LA"):
        return np.asarray(img.convert("L"), dtype=float) / 255.0
    a = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    return [a[..., c] for c in range(3)]


def save_image(path, u, bits: int = 8):
    """Clip to ``[0, 1]`` and save as 8- or 16-bit grey (or RGB for a list of three)."""
    if isinstance(u, (list, tuple)):
        if bits != 8:
            raise IOFormatError("colour output is 8-bit only")
        a = np.stack([np.clip(c, 0.0, 1.0) for c in u], axis=-1)
        Image.fromarray(np.rint(a * 255).astype(np.uint8), "RGB").save(path)
        return
    a = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    if bits == 8:
        Image.fromarray(np.rint(a * 255).astype(np.uint8), "L").save(path)
    elif bits == 16:
        if not str(path).lower().endswith(".png"):
            raise IOFormatError("16-bit output needs PNG")
        Image.fromarray(np.rint(a * 65535).astype(np.uint16)).save(path)
    else:
        raise IOFormatError(f"bit depth must be 8 or 16, got {bits}")


def write_csv_field(path, a):
    """Row-major CSV with a ``rows,cols`` header line."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise IOFormatError("CSV export expects a 2-D array")
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]},{a.shape[1]}\n")
        np.savetxt(fh, a, delimiter=",", fmt="%.17g")


def read_csv_field(path) -> np.ndarray:
    try:
        with open(path) as fh:
            header = fh.readline()
            rows, cols = (int(x) for x in header.strip().split(","))
            a = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (ValueError, OSError) as exc:
        raise IOFormatError(f"cannot parse CSV field {path}: {exc}") from exc
    if a.shape != (rows, cols):
        raise IOFormatError(f"CSV body has shape {a.shape}, header says {(rows, cols)}")
    return a


save_heightmap_csv = write_csv_field


def load_heightmap(path, fmt: str | None = None):
    """Load heights from CSV or an SRTM ``.hgt`` tile.

    Returns ``(heights, valid)``; for ``.hgt`` the void value ``-32768``
    marks invalid samples (their height is set to 0).
    """
    fmt = fmt or os.path.splitext(str(path))[1].lstrip(".").lower()
    if fmt == "csv":
        a = read_csv_field(path)
        return a, np.isfinite(a)
    if fmt != "hgt":
        raise IOFormatError(f"unknown heightmap format {fmt!r}")
    size = os.path.getsize(path)
    n = math.isqrt(size // 2)
    if size % 2 or n * n * 2 != size:
        hint = ", ".join(f"{k}x{k} ({2 * k * k} bytes)" for k in (1201, 3601))
        raise IOFormatError(f"{path}: {size} bytes is not a square int16 tile; expected e.g. {hint}")
    raw = np.fromfile(path, dtype=">i2").reshape(n, n)
    valid = raw != HGT_VOID
    return np.where(valid, raw, 0).astype(float), valid

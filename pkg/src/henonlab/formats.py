"""Bit-exact artifact formats: canonical JSON, PGM/PPM rasters, CSV tables.

Images use uncompressed binary formats so golden-file comparison needs
no codecs.  Floating point values in text tables are printed with 17
significant digits; canonical JSON uses the shortest round-trip float
representation with sorted keys and fixed separators, so identical
configurations hash identically.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import core

VERDICT_SHADE = {core.INSIDE: 0, core.ESCAPED: 255, core.UNRESOLVED: 128}

PARAM_COLOR = {
    "connected": (0, 0, 255),
    "disconnected": (255, 0, 0),
    "unresolved": (128, 128, 128),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


def write_pgm(path, pixels: np.ndarray) -> None:
    """Binary 8-bit PGM, row 0 at the top."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_ppm(path, pixels: np.ndarray) -> None:
    """Binary 8-bit RGB PPM, row 0 at the top."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def grid_to_pgm_pixels(cells: np.ndarray) -> np.ndarray:
    out = np.zeros(cells.shape, dtype=np.uint8)
    for code, shade in VERDICT_SHADE.items():
        out[cells == code] = shade
    # image row 0 on top corresponds to the largest imaginary part
    return out[::-1, :]


def verdicts_to_ppm_pixels(grid: np.ndarray) -> np.ndarray:
    codes = {0: "connected", 1: "disconnected", 2: "unresolved"}
    out = np.zeros(grid.shape + (3,), dtype=np.uint8)
    for code, name in codes.items():
        out[grid == code] = PARAM_COLOR[name]
    return out[::-1, :, :]


def fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> None:
    """Rows of floats/strings; floats rendered with 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [fmt17(v) if isinstance(v, float) else str(v) for v in row]
            fh.write(",".join(cells) + "\n")


def load_mapspec(path) -> core.MapSpec:
    with open(path) as fh:
        return core.mapspec_from_dict(json.load(fh))


def save_mapspec(path, f: core.MapSpec) -> None:
    write_json(path, core.mapspec_to_dict(f))

"""Image files: 8/16-bit grayscale PNG and a little-endian float map (PFMg).

PNG values are scaled to [0, 1] on read and quantised on write. The float
map stores ``b"PFMg\\n<H> <W>\\n"`` followed by H*W float32 values in row
order, so intermediate results round-trip exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, InputError

PFM_MAGIC = b"PFMg\n"


def _is_pfm(path: Path) -> bool:
    return path.suffix.lower() == ".pfm"


def write_pfm(path, img) -> None:
    a = np.asarray(img, dtype="<f4")
    if a.ndim != 2:
        raise InputError(f"float map must be 2-D, got shape {a.shape}")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(PFM_MAGIC + f"{h} {w}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(PFM_MAGIC):
        raise FormatError(f"{path}: not a PFMg float map")
    end = data.find(b"\n", len(PFM_MAGIC))
    if end < 0:
        raise FormatError(f"{path}: truncated header")
    try:
        h, w = (int(v) for v in data[len(PFM_MAGIC):end].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad size line") from exc
    body = data[end + 1:]
    if h < 1 or w < 1 or len(body) != 4 * h * w:
        raise FormatError(f"{path}: expected {h}x{w} floats, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def read_image(path) -> np.ndarray:
    """Read an image as float32 in [0, 1].

    Grayscale files give ``(H, W)``; colour files give ``(C, H, W)``.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    if _is_pfm(path):
        return read_pfm(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                a = np.asarray(im, dtype=np.float64) / 65535.0
            elif im.mode in ("L", "1"):
                a = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            elif im.mode == "F":
                a = np.asarray(im, dtype=np.float64)
            else:
                a = np.asarray(im.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return a.astype(np.float32)


def quantize(img, bits: int = 8) -> np.ndarray:
    peak = (1 << bits) - 1
    q = np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * peak)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


def write_image(path, img, bits: int = 8) -> None:
    """Write ``(H, W)`` or ``(C, H, W)`` data; ``.pfm`` keeps full precision."""
    path = Path(path)
    a = np.asarray(img)
    if not np.all(np.isfinite(a)):
        raise InputError("refusing to write an image with non-finite values")
    if _is_pfm(path):
        if a.ndim == 3 and a.shape[0] == 1:
            a = a[0]
        write_pfm(path, a)
        return
    if bits not in (8, 16):
        raise InputError(f"PNG depth must be 8 or 16, got {bits}")
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    q = quantize(a, bits)
    if q.ndim == 3:
        if bits != 8 or q.shape[0] != 3:
            raise InputError("colour output must be 3 channels at 8 bits")
        Image.fromarray(np.ascontiguousarray(q.transpose(1, 2, 0)), "RGB").save(path)
    elif bits == 16:
        Image.fromarray(q).save(path)
    else:
        Image.fromarray(q, "L").save(path)

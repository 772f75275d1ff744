"""Netpbm (PGM/PPM) reading and writing, with PNG through Pillow when installed."""
from __future__ import annotations

import os

import numpy as np

from ._validation import check_image

_MAGICS = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}


class ImageFormatError(ValueError):
    pass


def _tokens(data: bytes, start: int, count: int):
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    out = []
    i = start
    n = len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise ImageFormatError("truncated netpbm header")
        out.append(data[i:j])
        i = j
    return out, i


def decode_netpbm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in _MAGICS:
        raise ImageFormatError(f"not a PGM/PPM file (magic {magic!r})")
    channels, binary = _MAGICS[magic]
    (w, h, maxval), pos = _tokens(data, 2, 3)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("non-numeric netpbm header field") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad size {w}x{h}")
    if not 1 <= maxval <= 255:
        raise ImageFormatError(f"only 8-bit samples are supported (maxval {maxval})")
    count = w * h * channels
    if binary:
        # exactly one whitespace byte separates the header from the raster
        body = data[pos + 1:pos + 1 + count]
        if len(body) != count:
            raise ImageFormatError(f"expected {count} raster bytes, found {len(body)}")
        arr = np.frombuffer(body, dtype=np.uint8).copy()
    else:
        vals, _ = _tokens(data, pos, count) if count else ([], pos)
        try:
            arr = np.array([int(v) for v in vals], dtype=np.int64)
        except ValueError:
            raise ImageFormatError("non-numeric sample in plain netpbm raster") from None
    if arr.size and arr.max() > maxval:
        raise ImageFormatError("sample exceeds maxval")
    arr = arr.astype(np.uint8)
    return arr.reshape((h, w) if channels == 1 else (h, w, 3))


def encode_netpbm(image) -> bytes:
    """Binary P5 for gray or P6 for color, maxval 255."""
    img = check_image(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    magic = b"P5" if img.ndim == 2 else b"P6"
    h, w = img.shape[:2]
    return magic + b"\n%d %d\n255\n" % (w, h) + img.tobytes()


def _is_png(path) -> bool:
    return str(path).lower().endswith(".png")


def read_image(path) -> np.ndarray:
    if _is_png(path):
        Image = _pillow()
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "F"):
                raise ImageFormatError(f"only 8-bit samples are supported (PNG mode {im.mode})")
            im = im.convert("L" if im.mode in ("1", "L", "LA") else "RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_image(path, image) -> None:
    if _is_png(path):
        Image = _pillow()
        img = check_image(image)
        Image.fromarray(img[:, :, 0] if img.ndim == 3 and img.shape[2] == 1 else img).save(path)
        return
    data = encode_netpbm(image)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _pillow():
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on the environment
        raise ImageFormatError("PNG support needs Pillow (pip install 'artifact[png]')") from None
    return Image

"""Secret keys, orbit generation and keystream derivation."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import numpy as np

from .maps import EXPONENT_PERIOD, PI, MapId, MapParams, step_scphm

KEY_BITS = 52
KEY_MASK = (1 << KEY_BITS) - 1
KEY_FIELDS = ("x0", "y0", "a", "b", "n0")
N0_BASE = 1000
N0_SPAN = 10_000
QUANT_SCALE = 1e10


class KeyFileError(ValueError):
    pass


def _decode_unit(code: int) -> float:
    # odd numerators keep the endpoints out of the open interval
    return (2 * code + 1) / float(1 << (KEY_BITS + 1))


def _encode_unit(u: float) -> int:
    return min(max(round((u * (1 << (KEY_BITS + 1)) - 1) / 2), 0), KEY_MASK)


def _encode(value: float, scale: float, shift: float) -> int:
    """Code of ``value = scale * unit - shift``.

    The division rounds, so a neighbouring code is checked for an exact
    decoding before falling back to the nearest one.
    """
    guess = _encode_unit((value + shift) / scale)
    for c in (guess, guess - 1, guess + 1):
        if 0 <= c <= KEY_MASK and scale * _decode_unit(c) - shift == value:
            return c
    return guess


@dataclass(frozen=True)
class KeyBundle:
    """The five secret keys: initial state, map parameters, discard count.

    Every key has a 52-bit code; the real values are decoded as
    ``x0, y0 in (-1, 1)``, ``a, b in (0, 25)`` and ``n0 in [1000, 11000)``.
    Bundles may also be built straight from real values, in which case
    :meth:`codes` returns the nearest encoding.
    """

    x0: float
    y0: float
    a: float
    b: float
    n0: int

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x0, self.y0, self.a, self.b)):
            raise ValueError("key values must be finite")
        if int(self.n0) != self.n0 or self.n0 < 0:
            raise ValueError(f"n0 must be a non-negative integer, got {self.n0!r}")
        object.__setattr__(self, "n0", int(self.n0))
        MapParams(self.a, self.b).validate_scphm()

    @property
    def params(self) -> MapParams:
        return MapParams(self.a, self.b)

    @classmethod
    def from_codes(cls, codes: Sequence[int]) -> "KeyBundle":
        if len(codes) != 5:
            raise ValueError("expected five key codes")
        for c in codes:
            if not 0 <= c <= KEY_MASK:
                raise ValueError(f"key code {c!r} is not a 52-bit value")
        cx, cy, ca, cb, cn = codes
        return cls(
            x0=2.0 * _decode_unit(cx) - 1.0,
            y0=2.0 * _decode_unit(cy) - 1.0,
            a=25.0 * _decode_unit(ca),
            b=25.0 * _decode_unit(cb),
            n0=N0_BASE + cn % N0_SPAN,
        )

    def codes(self) -> Tuple[int, int, int, int, int]:
        if N0_BASE <= self.n0 < N0_BASE + N0_SPAN:
            cn = self.n0 - N0_BASE
        else:
            cn = self.n0 & KEY_MASK
        return (
            _encode(self.x0, 2.0, 1.0),
            _encode(self.y0, 2.0, 1.0),
            _encode(self.a, 25.0, 0.0),
            _encode(self.b, 25.0, 0.0),
            cn,
        )

    @classmethod
    def random(cls, rng=None) -> "KeyBundle":
        rng = np.random.default_rng(rng)
        return cls.from_codes([int(rng.integers(0, 1 << KEY_BITS)) for _ in range(5)])

    def flip_lsb(self, field: str) -> "KeyBundle":
        """Bundle with the least-significant code bit of ``field`` flipped."""
        idx = KEY_FIELDS.index(field)
        codes = list(self.codes())
        codes[idx] ^= 1
        return KeyBundle.from_codes(codes)

    def with_n0(self, n0: int) -> "KeyBundle":
        return replace(self, n0=n0)

    def diffusion_seed(self) -> int:
        """XOR-fold of the five 7-byte key encodings."""
        c0 = 0
        for code in self.codes():
            for byte in code.to_bytes(7, "big"):
                c0 ^= byte
        return c0

    def to_hex_lines(self) -> list:
        return [f"{c:013x}" for c in self.codes()]


def read_keyfile(path) -> KeyBundle:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise KeyFileError(f"{path}: not a text key file") from exc
    return parse_keys(text.splitlines(), source=str(path))


def parse_keys(lines: Iterable[str], source: str = "<keys>") -> KeyBundle:
    codes = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if len(line) != 13 or any(ch not in "0123456789abcdef" for ch in line):
            raise KeyFileError(f"{source}:{lineno}: expected 13 lowercase hex digits, got {line!r}")
        codes.append(int(line, 16))
    if len(codes) != 5:
        raise KeyFileError(f"{source}: expected 5 keys (x0, y0, a, b, N0), found {len(codes)}")
    return KeyBundle.from_codes(codes)


def write_keyfile(path, keys: KeyBundle) -> None:
    body = "# x0, y0, a, b, N0 as 52-bit hex codes\n" + "\n".join(keys.to_hex_lines()) + "\n"
    Path(path).write_text(body)
    os.chmod(path, 0o600)


@dataclass(frozen=True)
class ChaoticOrbit:
    xs: np.ndarray
    ys: np.ndarray
    params: MapParams
    map_id: MapId = MapId.SCPHM

    def __post_init__(self):
        if self.xs.shape != self.ys.shape:
            raise ValueError("xs and ys differ in length")

    def __len__(self) -> int:
        return len(self.xs)

    def interleaved(self) -> np.ndarray:
        out = np.empty(2 * len(self.xs))
        out[0::2] = self.xs
        out[1::2] = self.ys
        return out


@dataclass(frozen=True)
class KeystreamPartition:
    x_s: np.ndarray
    y_ctrl: np.ndarray


def iterate_scphm(x0: float, y0: float, params: MapParams, n_steps: int, discard: int = 0):
    """Iterate the map ``n_steps`` times and return the trailing iterates as lists.

    The initial state is not part of the output; the first ``discard`` iterates
    are dropped.
    """
    a, b = params.a, params.b
    sin, cos, fmod, copysign = math.sin, math.cos, math.fmod, math.copysign
    period, pi = EXPONENT_PERIOD, PI
    keep = n_steps - discard
    xs, ys = [], []
    push_x, push_y = xs.append, ys.append
    x, y = x0, y0
    try:
        for _ in range(min(discard, n_steps)):
            px = copysign(abs(x) ** pi, x)
            py = copysign(abs(y) ** pi, y)
            x, y = a * sin(pi ** fmod(y * y, period) - px), b * cos(pi ** fmod(x * x, period) - py)
        for _ in range(max(keep, 0)):
            px = copysign(abs(x) ** pi, x)
            py = copysign(abs(y) ** pi, y)
            x, y = a * sin(pi ** fmod(y * y, period) - px), b * cos(pi ** fmod(x * x, period) - py)
            push_x(x)
            push_y(y)
    except (OverflowError, ValueError):
        # re-run the offending step through the checked path for a precise error
        step_scphm((x, y), params)
        raise
    if keep > 0 and not (math.isfinite(x) and math.isfinite(y)):
        step_scphm((x, y), params)
    return xs, ys


def orbit_pairs(dims: Tuple[int, int], channels: int = 1) -> int:
    m, n = dims
    return -(-(channels * (m * n + 3)) // 2)


def generate_orbit(keys: KeyBundle, dims: Tuple[int, int], channels: int = 1) -> ChaoticOrbit:
    """Iterate the keyed map, drop ``n0`` transient pairs and keep enough
    pairs for ``channels`` segments of ``M*N + 3`` values each."""
    m, n = dims
    if m < 1 or n < 1:
        raise ValueError(f"image dimensions must be positive, got {dims!r}")
    keep = orbit_pairs(dims, channels)
    xs, ys = iterate_scphm(keys.x0, keys.y0, keys.params, keys.n0 + keep, discard=keys.n0)
    return ChaoticOrbit(np.array(xs), np.array(ys), keys.params)


def partition_keystream(orbit: ChaoticOrbit, dims: Tuple[int, int], channel: int = 0) -> KeystreamPartition:
    m, n = dims
    size = m * n + 3
    start = channel * size
    need = -(-(start + size) // 2)
    if len(orbit) < need:
        raise ValueError(f"orbit holds {len(orbit)} pairs, channel {channel} needs {need}")
    seg = orbit.interleaved()[start:start + size]
    return KeystreamPartition(x_s=seg[: m * n].copy(), y_ctrl=seg[m * n:].copy())


def quantize_bytes(values) -> np.ndarray:
    """Map reals to bytes via ``floor(|v| * 1e10) mod 256``."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    return (np.floor(np.abs(v) * QUANT_SCALE).astype(np.int64) % 256).astype(np.uint8)

"""Pixel scan orders as explicit permutations, including Kun-SCAN.

A scan of an ``M x N`` image is stored as ``forward``: the raster indices of
the pixels in the order they are visited.  Applying a scan gathers
``pixels[forward]``; the result can be reshaped back to ``M x N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from .maps import MapParams
from .keys import iterate_scphm


class ScanPattern(str, Enum):
    RASTER = "raster"
    CONTINUOUS_RASTER = "continuous_raster"
    SPIRAL = "spiral"
    ZIGZAG = "zigzag"
    ZORDER = "zorder"
    ZMIRROR = "zmirror"
    GRAY = "gray"
    HILBERT = "hilbert"
    UINDEX = "uindex"


@dataclass(frozen=True, eq=False)
class PermutationMap:
    forward: np.ndarray
    dims: Tuple[int, int]

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.int64)
        object.__setattr__(self, "forward", fwd)
        m, n = self.dims
        if fwd.shape != (m * n,):
            raise ValueError(f"permutation of length {fwd.size} does not match dims {self.dims}")

    def __len__(self):
        return self.forward.size

    def __eq__(self, other):
        return (
            isinstance(other, PermutationMap)
            and tuple(self.dims) == tuple(other.dims)
            and np.array_equal(self.forward, other.forward)
        )

    def is_bijection(self) -> bool:
        return bool(np.array_equal(np.sort(self.forward), np.arange(self.forward.size)))

    def compose(self, other: "PermutationMap") -> "PermutationMap":
        """Map equivalent to applying ``self`` and then ``other``."""
        return PermutationMap(self.forward[other.forward], self.dims)

    def power(self, k: int) -> "PermutationMap":
        out = np.arange(self.forward.size)
        for _ in range(k):
            out = out[self.forward]
        return PermutationMap(out, self.dims)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.forward, np.arange(self.forward.size)))


def identity(dims) -> PermutationMap:
    return PermutationMap(np.arange(dims[0] * dims[1]), tuple(dims))


def apply_permutation(pixels, p: PermutationMap) -> np.ndarray:
    """``out[i] = pixels[forward[i]]`` along the first axis."""
    arr = np.asarray(pixels)
    if arr.shape[0] != len(p):
        raise ValueError(f"{arr.shape[0]} pixels, permutation expects {len(p)}")
    return arr[p.forward]


def invert_permutation(p: PermutationMap) -> PermutationMap:
    inv = np.empty_like(p.forward)
    inv[p.forward] = np.arange(p.forward.size)
    return PermutationMap(inv, p.dims)


# -- classical scans --------------------------------------------------------

def _boustrophedon(rows: np.ndarray, cols: np.ndarray, ncols: int) -> np.ndarray:
    grid = rows[:, None] * ncols + cols[None, :]
    grid[1::2] = grid[1::2, ::-1]
    return grid.ravel()


def _spiral(m: int, n: int) -> np.ndarray:
    out = []
    top, bottom, left, right = 0, m - 1, 0, n - 1
    while top <= bottom and left <= right:
        out.extend(top * n + c for c in range(left, right + 1))
        out.extend(r * n + right for r in range(top + 1, bottom + 1))
        if top < bottom:
            out.extend(bottom * n + c for c in range(right - 1, left - 1, -1))
        if left < right:
            out.extend(r * n + left for r in range(bottom - 1, top, -1))
        top, bottom, left, right = top + 1, bottom - 1, left + 1, right - 1
    return np.array(out, dtype=np.int64)


def _zigzag(m: int, n: int) -> np.ndarray:
    r, c = np.indices((m, n))
    s = (r + c).ravel()
    r = r.ravel()
    # even diagonals run bottom-left -> top-right, odd ones the other way
    key_r = np.where(s % 2 == 0, -r, r)
    order = np.lexsort((key_r, s))
    return order.astype(np.int64)


def _deinterleave(d: np.ndarray, k: int):
    """Split Morton codes into (row, col) with the row bit more significant."""
    r = np.zeros_like(d)
    c = np.zeros_like(d)
    for bit in range(k):
        c |= ((d >> (2 * bit)) & 1) << bit
        r |= ((d >> (2 * bit + 1)) & 1) << bit
    return r, c


def _hilbert(k: int):
    side = 1 << k
    d = np.arange(side * side, dtype=np.int64)
    x = np.zeros_like(d)
    y = np.zeros_like(d)
    t = d.copy()
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        flip = (ry == 0) & (rx == 1)
        x = np.where(flip, s - 1 - x, x)
        y = np.where(flip, s - 1 - y, y)
        swap = ry == 0
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return y, x


def _uindex(k: int):
    # quadrants visited down, right, up at every level, no rotation
    side = 1 << k
    d = np.arange(side * side, dtype=np.int64)
    dr = np.array([0, 1, 1, 0])
    dc = np.array([0, 0, 1, 1])
    r = np.zeros_like(d)
    c = np.zeros_like(d)
    for level in range(k):
        digit = (d >> (2 * level)) & 3
        r |= dr[digit] << level
        c |= dc[digit] << level
    return r, c


def _curve(pattern: ScanPattern, k: int):
    side = 1 << k
    d = np.arange(side * side, dtype=np.int64)
    if pattern is ScanPattern.ZORDER:
        return _deinterleave(d, k)
    if pattern is ScanPattern.ZMIRROR:
        r, c = _deinterleave(d, k)
        return r, side - 1 - c
    if pattern is ScanPattern.GRAY:
        return _deinterleave(d ^ (d >> 1), k)
    if pattern is ScanPattern.HILBERT:
        return _hilbert(k)
    if pattern is ScanPattern.UINDEX:
        return _uindex(k)
    raise ValueError(pattern)


def _tiled_curve(pattern: ScanPattern, m: int, n: int) -> np.ndarray:
    """Cover the image with the largest 2^k tiles in raster order, each walked
    by the curve; leftover pixels follow in raster order."""
    k = int(math.floor(math.log2(min(m, n))))
    side = 1 << k
    tr, tc = _curve(pattern, k)
    parts = []
    covered = np.zeros((m, n), dtype=bool)
    for i in range(m // side):
        for j in range(n // side):
            rows = tr + i * side
            cols = tc + j * side
            parts.append(rows * n + cols)
    covered[: (m // side) * side, : (n // side) * side] = True
    parts.append(np.flatnonzero(~covered))
    return np.concatenate(parts).astype(np.int64)


def build_scan(pattern, dims) -> PermutationMap:
    m, n = dims
    if m < 1 or n < 1:
        raise ValueError(f"invalid dims {dims!r}")
    pattern = ScanPattern(pattern)
    if pattern is ScanPattern.RASTER:
        fwd = np.arange(m * n)
    elif pattern is ScanPattern.CONTINUOUS_RASTER:
        fwd = _boustrophedon(np.arange(m), np.arange(n), n)
    elif pattern is ScanPattern.SPIRAL:
        fwd = _spiral(m, n)
    elif pattern is ScanPattern.ZIGZAG:
        fwd = _zigzag(m, n)
    else:
        fwd = _tiled_curve(pattern, m, n)
    return PermutationMap(fwd, (m, n))


# -- Kun-SCAN ---------------------------------------------------------------

MAX_STRAND = 32
ORDER_TRANSIENT = 64


@dataclass(frozen=True)
class KunScanConfig:
    region_grid: Tuple[int, int] = (2, 2)
    rounds: int = 3
    ctrl: Tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        rr, rc = self.region_grid
        if rr < 1 or rc < 1:
            raise ValueError("region grid needs at least one row and column")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if len(self.ctrl) != 3:
            raise ValueError("ctrl must hold three values")
        object.__setattr__(self, "ctrl", tuple(float(c) for c in self.ctrl))


def _ctrl_fraction(c: float) -> Tuple[int, float]:
    scaled = abs(c) * 1e6
    whole = math.floor(scaled)
    return int(whole), scaled - whole


def _region_paths(m: int, n: int, rr: int, rc: int):
    row_edges = [i * (m // rr) for i in range(rr)] + [m]
    col_edges = [j * (n // rc) for j in range(rc)] + [n]
    paths = []
    for i in range(rr):
        for j in range(rc):
            corner = (i * rc + j) % 4
            rows = np.arange(row_edges[i], row_edges[i + 1])
            cols = np.arange(col_edges[j], col_edges[j + 1])
            if corner in (2, 3):
                rows = rows[::-1]
            if corner in (1, 2):
                cols = cols[::-1]
            paths.append(_boustrophedon(rows, cols, n))
    return paths


def strand_length(dims, region_grid) -> int:
    return max(1, min(MAX_STRAND, (dims[1] // region_grid[1]) // 4))


def _strand_keys(count: int, ctrl) -> np.ndarray:
    whole, frac = _ctrl_fraction(ctrl[0])
    a = 20.0 + 4.0 * frac
    xs, _ = iterate_scphm(ctrl[1] / 25.0, ctrl[2] / 25.0, MapParams(a, a),
                          ORDER_TRANSIENT + count, discard=ORDER_TRANSIENT)
    return np.asarray(xs)


def kun_scan_base(dims, config: KunScanConfig) -> PermutationMap:
    """One round of Kun-SCAN.

    Regions are walked boustrophedon from a corner that rotates with the
    region index.  With more than one region the walks are cut into short
    strands, enumerated round-robin across regions, and the strands are
    then reordered by a chaotic sequence seeded from the control values.
    """
    m, n = dims
    rr = min(config.region_grid[0], m)
    rc = min(config.region_grid[1], n)
    paths = _region_paths(m, n, rr, rc)
    if len(paths) == 1:
        return PermutationMap(paths[0], (m, n))
    length = strand_length((m, n), (rr, rc))
    per_region = [[p[s:s + length] for s in range(0, p.size, length)] for p in paths]
    whole, _ = _ctrl_fraction(config.ctrl[0])
    start = whole % len(paths)
    visit = per_region[start:] + per_region[:start]
    strands = []
    for k in range(max(len(r) for r in visit)):
        for region in visit:
            if k < len(region):
                strands.append(region[k])
    order = np.argsort(_strand_keys(len(strands), config.ctrl), kind="stable")
    return PermutationMap(np.concatenate([strands[i] for i in order]), (m, n))


def build_kun_scan(dims, config: KunScanConfig = KunScanConfig()) -> PermutationMap:
    return kun_scan_base(dims, config).power(config.rounds)


def scan_correlation_report(image, scan, repeats: int = 3):
    """Directional correlations (H, V, D, AD) after scanning ``repeats`` times.

    ``scan`` is a pattern name, a :class:`PermutationMap` or a
    :class:`KunScanConfig`.
    """
    from .metrics import DIRECTIONS, directional_correlation

    img = np.asarray(image)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError("need a 2D image of at least 2x2")
    if isinstance(scan, KunScanConfig):
        p = build_kun_scan(img.shape, scan)
    elif isinstance(scan, PermutationMap):
        p = scan
    else:
        p = build_scan(scan, img.shape)
    flat = img.ravel()
    for _ in range(repeats):
        flat = apply_permutation(flat, p)
    out = flat.reshape(img.shape)
    return tuple(directional_correlation(out, d) for d in DIRECTIONS)


def scan_benchmark(image, ctrl: Sequence[float], repeats: int = 3, region_grid=(2, 2)):
    """Rows of ``(method, h, v, d, ad)`` for every classical scan and Kun-SCAN.

    Every method gets ``repeats`` rounds; for Kun-SCAN that is ``repeats``
    applications of the single-round path.
    """
    rows = []
    for pattern in ScanPattern:
        rows.append((pattern.value,) + scan_correlation_report(image, pattern, repeats))
    cfg = KunScanConfig(region_grid=tuple(region_grid), rounds=1, ctrl=tuple(ctrl))
    rows.append(("kun_scan",) + scan_correlation_report(image, cfg, repeats))
    return rows

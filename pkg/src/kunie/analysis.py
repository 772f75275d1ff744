"""Bifurcation sweeps and Lyapunov spectra for the 2D maps.

Every routine iterates a whole batch of parameter cells at once; the arithmetic
is elementwise, so a cell's result does not depend on which batch it ran in.
"""
from __future__ import annotations

import csv
import math
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .maps import ChaosOverflowError, DynamicalMap, MapParams, get_map

SEED = (0.1, 0.1)


class DegenerateTangentError(ArithmeticError):
    """A tangent vector collapsed to zero during orthonormalisation."""


@dataclass
class BifurcationSample:
    param_value: float
    retained_states: np.ndarray  # (keep, 2); NaN rows mark overflowed states

    @property
    def gaps(self) -> int:
        return int(np.isnan(self.retained_states).any(axis=1).sum())


@dataclass(frozen=True)
class LyapunovPair:
    le1: float
    le2: float

    def __post_init__(self):
        if self.le1 < self.le2:
            raise ValueError("le1 must not be smaller than le2")


def _param_arrays(fmap: DynamicalMap, fixed, sweep_name, values):
    fixed_name, fixed_value = fixed
    names = fmap.param_names
    if {fixed_name, sweep_name} != set(names):
        raise ValueError(f"{fmap.name} takes parameters {names}, got {fixed_name!r} and {sweep_name!r}")
    fixed_arr = np.full_like(values, float(fixed_value))
    if names[0] == sweep_name:
        return values, fixed_arr
    return fixed_arr, values


def bifurcation_scan(map_id, fixed_param: Tuple[str, float], sweep: Tuple[str, float, float, int],
                     transient: int = 1000, keep: int = 200, seed=SEED) -> List[BifurcationSample]:
    """Iterate from ``seed`` at each of ``steps`` evenly spaced sweep values.

    The first ``transient`` states are dropped and the next ``keep`` retained.
    States that leave double range are kept as NaN gaps; the cell stays NaN
    from then on.
    """
    fmap = get_map(map_id)
    name, lo, hi, steps = sweep
    if steps < 2:
        raise ValueError("need at least 2 sweep steps")
    if keep < 1 or transient < 0:
        raise ValueError("keep must be >= 1 and transient >= 0")
    values = np.linspace(float(lo), float(hi), int(steps))
    p, q = _param_arrays(fmap, fixed_param, name, values)
    x = np.full_like(values, seed[0])
    y = np.full_like(values, seed[1])
    out = np.empty((int(steps), keep, 2))
    with np.errstate(all="ignore"):
        for i in range(transient + keep):
            x, y = fmap.step(x, y, p, q)
            bad = ~(np.isfinite(x) & np.isfinite(y))
            x[bad] = np.nan
            y[bad] = np.nan
            if i >= transient:
                out[:, i - transient, 0] = x
                out[:, i - transient, 1] = y
    return [BifurcationSample(float(v), out[k]) for k, v in enumerate(values)]


def benettin(fmap: DynamicalMap, p, q, n_iter: int, transient: int = 1000, seed=SEED):
    """Batched Benettin estimate of both Lyapunov exponents.

    Returns ``(le1, le2, status)`` arrays; status is 0 for a good cell,
    1 for overflow and 2 for a degenerate tangent space.
    """
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    p, q = np.broadcast_arrays(p, q)
    x = np.full(p.shape, float(seed[0]))
    y = np.full(p.shape, float(seed[1]))
    status = np.zeros(p.shape, dtype=np.int8)
    with np.errstate(all="ignore"):
        for _ in range(transient):
            x, y = fmap.step(x, y, p, q)
        # tangent basis e1 = (u1, w1), e2 = (u2, w2)
        u1, w1 = np.ones_like(x), np.zeros_like(x)
        u2, w2 = np.zeros_like(x), np.ones_like(x)
        s1 = np.zeros_like(x)
        s2 = np.zeros_like(x)
        for _ in range(n_iter):
            j11, j12, j21, j22 = fmap.jacobian(x, y, p, q)
            x, y = fmap.step(x, y, p, q)
            a1 = j11 * u1 + j12 * w1
            b1 = j21 * u1 + j22 * w1
            a2 = j11 * u2 + j12 * w2
            b2 = j21 * u2 + j22 * w2
            n1 = np.hypot(a1, b1)
            u1 = a1 / n1
            w1 = b1 / n1
            dot = a2 * u1 + b2 * w1
            a2 = a2 - dot * u1
            b2 = b2 - dot * w1
            n2 = np.hypot(a2, b2)
            u2 = a2 / n2
            w2 = b2 / n2
            s1 += np.log(n1)
            s2 += np.log(n2)
    le1 = s1 / n_iter
    le2 = s2 / n_iter
    overflow = ~(np.isfinite(x) & np.isfinite(y))
    degenerate = ~overflow & ~(np.isfinite(le1) & np.isfinite(le2))
    status[overflow] = 1
    status[degenerate] = 2
    # the Gram-Schmidt order already gives le1 >= le2 up to rounding
    hi = np.maximum(le1, le2)
    lo = np.minimum(le1, le2)
    return hi, lo, status


def lyapunov_pair(map_id, params, n_iter: int = 5000, transient: int = 1000, seed=SEED) -> LyapunovPair:
    if n_iter < 1000:
        raise ValueError("n_iter must be at least 1000")
    fmap = get_map(map_id)
    if isinstance(params, MapParams):
        params = (params.a, params.b)
    le1, le2, status = benettin(fmap, params[0], params[1], n_iter, transient, seed)
    if status[0] == 1:
        raise ChaosOverflowError(f"{fmap.name} orbit left double range at params {tuple(params)}")
    if status[0] == 2:
        raise DegenerateTangentError(f"tangent vectors collapsed at params {tuple(params)}")
    return LyapunovPair(float(le1[0]), float(le2[0]))


def cell_centres(lo: float, hi: float, n: int) -> np.ndarray:
    """Midpoints of ``n`` equal cells on ``[lo, hi]``; they stay off the open ends."""
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


@dataclass
class LyapunovGrid:
    a_values: np.ndarray
    b_values: np.ndarray
    le1: np.ndarray  # (len(a), len(b)); NaN marks a missing cell
    le2: np.ndarray

    @property
    def shape(self):
        return self.le1.shape

    def pair(self, i: int, j: int) -> Optional[LyapunovPair]:
        if np.isnan(self.le1[i, j]):
            return None
        return LyapunovPair(float(self.le1[i, j]), float(self.le2[i, j]))

    def means(self) -> Tuple[float, float]:
        return float(np.nanmean(self.le1)), float(np.nanmean(self.le2))

    def rows(self):
        for i, a in enumerate(self.a_values):
            for j, b in enumerate(self.b_values):
                yield float(a), float(b), float(self.le1[i, j]), float(self.le2[i, j])


def lyapunov_grid(map_id, a_range=(0.0, 25.0), b_range=(0.0, 25.0), resolution=50,
                  n_iter: int = 5000, transient: int = 1000, seed=SEED,
                  workers: int = 1) -> LyapunovGrid:
    """Evaluate :func:`lyapunov_pair` at the cell centres of a parameter grid.

    Cells that overflow or degenerate are NaN.  ``workers`` threads each take
    a block of rows; results are placed by index so the output is the same
    for any worker count.
    """
    ra, rb = (resolution, resolution) if np.isscalar(resolution) else resolution
    if ra < 2 or rb < 2:
        raise ValueError("resolution must be at least 2 per axis")
    fmap = get_map(map_id)
    av = cell_centres(*a_range, int(ra))
    bv = cell_centres(*b_range, int(rb))
    le1 = np.full((ra, rb), np.nan)
    le2 = np.full((ra, rb), np.nan)

    def block(rows):
        A, B = np.meshgrid(av[rows], bv, indexing="ij")
        l1, l2, st = benettin(fmap, A.ravel(), B.ravel(), n_iter, transient, seed)
        ok = st == 0
        l1 = np.where(ok, l1, np.nan).reshape(A.shape)
        l2 = np.where(ok, l2, np.nan).reshape(A.shape)
        le1[rows] = l1
        le2[rows] = l2

    chunks = [c for c in np.array_split(np.arange(ra), max(1, int(workers))) if c.size]
    if len(chunks) == 1:
        block(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(block, chunks))
    return LyapunovGrid(av, bv, le1, le2)


@contextmanager
def _writer(target):
    # target is a path or an open text stream
    if hasattr(target, "write"):
        yield csv.writer(target, lineterminator="\n")
        return
    with open(target, "w", newline="") as fh:
        yield csv.writer(fh, lineterminator="\n")


def write_bifurcation_csv(target, samples: Sequence[BifurcationSample]) -> None:
    with _writer(target) as w:
        w.writerow(["param", "x", "y"])
        for s in samples:
            for x, y in s.retained_states:
                w.writerow([repr(s.param_value), _fmt(x), _fmt(y)])


def write_lyapunov_csv(target, grid: LyapunovGrid) -> None:
    with _writer(target) as w:
        w.writerow(["a", "b", "le1", "le2"])
        for row in grid.rows():
            w.writerow([_fmt(v) for v in row])


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def occupancy(values, lo: float, hi: float, bins: int = 64) -> float:
    """Fraction of ``bins`` equal bins on ``[lo, hi]`` hit by finite ``values``."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    counts, _ = np.histogram(v, bins=bins, range=(lo, hi))
    return float(np.count_nonzero(counts)) / bins

"""A subset of the NIST SP 800-22 statistical tests.

Each test takes a 0/1 numpy array and returns a :class:`TestResult`.  The
statistics follow the definitions in SP 800-22 rev. 1a; reference
probabilities are the ones tabulated there except for the binary matrix
rank test, whose class probabilities are computed exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from ._validation import check_bits
from .keys import ChaoticOrbit, KeyBundle, iterate_scphm, quantize_bytes

ALPHA = 0.01


@dataclass
class TestResult:
    test_name: str
    p_value: float
    passed: bool = field(init=False)
    extra: Dict[str, float] = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        self.p_value = float(min(max(self.p_value, 0.0), 1.0))
        self.passed = self.p_value >= ALPHA


class StreamTooShortError(ValueError):
    pass


def bits_from_bytes(data) -> np.ndarray:
    return np.unpackbits(np.asarray(data, dtype=np.uint8))


def bits_from_orbit(orbit: ChaoticOrbit, n_bits: int, component: str = "x") -> np.ndarray:
    """Quantize one orbit component to bytes and unpack, most significant bit first."""
    values = orbit.xs if component == "x" else orbit.ys
    need = -(-n_bits // 8)
    if len(values) < need:
        raise StreamTooShortError(f"orbit gives {len(values) * 8} bits, {n_bits} requested")
    return bits_from_bytes(quantize_bytes(values[:need]))[:n_bits]


def keyed_streams(keys: KeyBundle, n_bits: int = 1_000_000):
    """x- and y-derived bit streams from the keyed orbit after its ``n0`` transient."""
    pairs = -(-n_bits // 8)
    xs, ys = iterate_scphm(keys.x0, keys.y0, keys.params, keys.n0 + pairs, discard=keys.n0)
    orbit = ChaoticOrbit(np.array(xs), np.array(ys), keys.params)
    return bits_from_orbit(orbit, n_bits, "x"), bits_from_orbit(orbit, n_bits, "y")


def _need(bits, n_min, name, strict=True, floor=2):
    # n_min is the recommended input size; strict=False only keeps the structural floor
    if not strict:
        n_min = floor
    if bits.size < n_min:
        raise StreamTooShortError(f"{name} needs at least {n_min} bits, got {bits.size}")


def frequency(bits, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 100, "frequency", strict)
    s = 2 * int(e.sum()) - e.size
    return TestResult("frequency", erfc(abs(s) / math.sqrt(2 * e.size)))


def block_frequency(bits, block_size: int = 128, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, max(100, block_size), "block_frequency", strict, block_size)
    n_blocks = e.size // block_size
    pi = e[: n_blocks * block_size].reshape(n_blocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * float(((pi - 0.5) ** 2).sum())
    return TestResult("block_frequency", gammaincc(n_blocks / 2.0, chi2 / 2.0))


def _cusum_p(z: float, n: int) -> float:
    sq = math.sqrt(n)
    total = 1.0
    for k in range(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1):
        total -= norm.cdf((4 * k + 1) * z / sq) - norm.cdf((4 * k - 1) * z / sq)
    for k in range(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1):
        total += norm.cdf((4 * k + 3) * z / sq) - norm.cdf((4 * k + 1) * z / sq)
    return total


def cumulative_sums(bits, strict: bool = True) -> TestResult:
    """Forward-mode p-value; the reverse-mode value is kept in ``extra``."""
    e = check_bits(bits)
    _need(e, 100, "cumulative_sums", strict)
    x = 2 * e.astype(np.int64) - 1
    fwd = max(int(np.abs(np.cumsum(x)).max()), 1)
    rev = max(int(np.abs(np.cumsum(x[::-1])).max()), 1)
    return TestResult("cumulative_sums", _cusum_p(fwd, e.size), {"reverse": float(_cusum_p(rev, e.size))})


def runs(bits, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 100, "runs", strict)
    n = e.size
    pi = e.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return TestResult("runs", 0.0, {"prerequisite_failed": 1.0})
    v = 1 + int(np.count_nonzero(e[1:] != e[:-1]))
    num = abs(v - 2 * n * pi * (1 - pi))
    return TestResult("runs", erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi))))


_LONGEST_RUN_TABLES = (
    # (min n, block size M, class edges (low, high), probabilities)
    (750_000, 10_000, (10, 16), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 9), (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 4), (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_ones(blocks: np.ndarray) -> np.ndarray:
    n_blocks, m = blocks.shape
    best = np.zeros(n_blocks, dtype=np.int64)
    cur = np.zeros(n_blocks, dtype=np.int64)
    for j in range(m):
        col = blocks[:, j].astype(bool)
        cur = np.where(col, cur + 1, 0)
        np.maximum(best, cur, out=best)
    return best


def longest_run(bits, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 128, "longest_run", strict, 128)
    for n_min, m, (lo, hi), probs in _LONGEST_RUN_TABLES:
        if e.size >= n_min:
            break
    n_blocks = e.size // m
    longest = _longest_ones(e[: n_blocks * m].reshape(n_blocks, m))
    classes = np.clip(longest, lo, hi) - lo
    nu = np.bincount(classes, minlength=hi - lo + 1)
    expected = n_blocks * np.asarray(probs)
    chi2 = float(((nu - expected) ** 2 / expected).sum())
    return TestResult("longest_run", gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def rank_probability(r: int, rows: int = 32, cols: int = 32) -> float:
    """Probability that a random binary rows x cols matrix has GF(2) rank r."""
    if r == 0:
        return 2.0 ** (-rows * cols)
    log2p = r * (rows + cols - r) - rows * cols
    prod = 1.0
    for i in range(r):
        prod *= (1 - 2.0 ** (i - rows)) * (1 - 2.0 ** (i - cols)) / (1 - 2.0 ** (i - r))
    return 2.0 ** log2p * prod


def gf2_rank(rows: Sequence[int]) -> int:
    """Rank over GF(2) of a matrix whose rows are given as integers."""
    pivots = {}
    rank = 0
    for row in rows:
        while row:
            top = row.bit_length() - 1
            if top in pivots:
                row ^= pivots[top]
            else:
                pivots[top] = row
                rank += 1
                break
    return rank


def binary_matrix_rank(bits, rows: int = 32, cols: int = 32, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    size = rows * cols
    _need(e, 38 * size, "binary_matrix_rank", strict, size)
    n_mat = e.size // size
    mats = e[: n_mat * size].reshape(n_mat, rows, cols)
    # pack each row into a Python int
    packed = np.packbits(mats, axis=2, bitorder="big")
    ranks = []
    for m in packed:
        row_ints = [int.from_bytes(r.tobytes(), "big") >> (packed.shape[2] * 8 - cols) for r in m]
        ranks.append(gf2_rank(row_ints))
    ranks = np.array(ranks)
    full = rank_probability(rows, rows, cols)
    minus = rank_probability(rows - 1, rows, cols)
    rest = 1.0 - full - minus
    f_full = int(np.sum(ranks == rows))
    f_minus = int(np.sum(ranks == rows - 1))
    f_rest = n_mat - f_full - f_minus
    chi2 = ((f_full - full * n_mat) ** 2 / (full * n_mat)
            + (f_minus - minus * n_mat) ** 2 / (minus * n_mat)
            + (f_rest - rest * n_mat) ** 2 / (rest * n_mat))
    return TestResult("binary_matrix_rank", math.exp(-chi2 / 2.0))


def dft(bits, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 1000, "dft", strict)
    n = e.size
    x = 2.0 * e - 1.0
    mod = np.abs(np.fft.fft(x))[: n // 2]
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = float(np.count_nonzero(mod < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return TestResult("dft", erfc(abs(d) / math.sqrt(2)))


def _pattern_counts(e: np.ndarray, m: int) -> np.ndarray:
    """Counts of every overlapping m-bit pattern, wrapping around the end."""
    if m == 0:
        return np.array([e.size])
    ext = np.concatenate([e, e[: m - 1]]).astype(np.int64)
    codes = np.zeros(e.size, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j:j + e.size]
    return np.bincount(codes, minlength=1 << m)


def approximate_entropy(bits, m: int = 2, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 100, "approximate_entropy", strict)
    n = e.size

    def phi(k):
        c = _pattern_counts(e, k) / n
        c = c[c > 0]
        return float((c * np.log(c)).sum())

    ap_en = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - ap_en)
    return TestResult("approximate_entropy", gammaincc(2 ** (m - 1), chi2 / 2.0))


def serial(bits, m: int = 3, strict: bool = True) -> TestResult:
    """First serial p-value; the second is kept in ``extra``."""
    e = check_bits(bits)
    _need(e, 100, "serial", strict)
    n = e.size

    def psi2(k):
        if k <= 0:
            return 0.0
        counts = _pattern_counts(e, k).astype(np.float64)
        return (2.0 ** k / n) * float((counts ** 2).sum()) - n

    d1 = psi2(m) - psi2(m - 1)
    d2 = psi2(m) - 2 * psi2(m - 1) + psi2(m - 2)
    p1 = gammaincc(2 ** (m - 2), d1 / 2.0)
    p2 = gammaincc(2 ** (m - 3), d2 / 2.0)
    return TestResult("serial", p1, {"p_value_2": float(p2)})


def berlekamp_massey(block: Sequence[int]) -> int:
    """Linear complexity of a binary sequence."""
    c, b = 1, 1
    length, m = 0, -1
    window = 0
    for i, bit in enumerate(block):
        window = (window << 1) | int(bit)
        # window bit j holds s_{i-j}; c bit j holds the j-th connection coefficient
        if (c & window).bit_count() & 1:
            t = c
            c ^= b << (i - m)
            if 2 * length <= i:
                length, m, b = i + 1 - length, i, t
    return length


# class probabilities as used by the NIST reference implementation
_LC_PROBS = (0.01047, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833)


def linear_complexity(bits, block_size: int = 500, strict: bool = True) -> TestResult:
    e = check_bits(bits)
    _need(e, 200 * block_size, "linear_complexity", strict, block_size)
    m = block_size
    n_blocks = e.size // m
    mu = m / 2.0 + (9.0 + (-1) ** (m + 1)) / 36.0 - (m / 3.0 + 2.0 / 9.0) / 2.0 ** m
    blocks = e[: n_blocks * m].reshape(n_blocks, m)
    lc = np.array([berlekamp_massey(row.tolist()) for row in blocks], dtype=np.float64)
    t = (-1) ** m * (lc - mu) + 2.0 / 9.0
    edges = np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5])
    classes = np.searchsorted(edges, t, side="left")
    nu = np.bincount(classes, minlength=7)
    expected = n_blocks * np.asarray(_LC_PROBS)
    chi2 = float(((nu - expected) ** 2 / expected).sum())
    return TestResult("linear_complexity", gammaincc(3.0, chi2 / 2.0))


TESTS: Dict[str, Callable[..., TestResult]] = {
    "frequency": frequency,
    "block_frequency": block_frequency,
    "cumulative_sums": cumulative_sums,
    "runs": runs,
    "longest_run": longest_run,
    "binary_matrix_rank": binary_matrix_rank,
    "dft": dft,
    "approximate_entropy": approximate_entropy,
    "serial": serial,
    "linear_complexity": linear_complexity,
}


def run_test(bits, test_name: str, **params) -> TestResult:
    try:
        fn = TESTS[test_name]
    except KeyError:
        raise ValueError(f"unknown test {test_name!r}; available: {', '.join(TESTS)}") from None
    return fn(bits, **params)


def run_suite(stream_x, stream_y, tests: Sequence[str] = tuple(TESTS), workers: int = 1) -> List[dict]:
    """Run every test on both streams.

    Returns one row per test with ``p_x``, ``p_y`` and ``passed`` (count of
    passing streams out of two); errors are recorded per row.
    """
    jobs = [(name, s) for name in tests for s in (stream_x, stream_y)]

    def one(job):
        name, s = job
        try:
            return run_test(s, name)
        except ValueError as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    rows = []
    for i, name in enumerate(tests):
        rx, ry = results[2 * i], results[2 * i + 1]
        row = {"test": name}
        for tag, r in (("x", rx), ("y", ry)):
            if isinstance(r, Exception):
                row[f"p_{tag}"] = None
                row[f"error_{tag}"] = str(r)
            else:
                row[f"p_{tag}"] = r.p_value
        row["passed"] = sum(isinstance(r, TestResult) and r.passed for r in (rx, ry))
        rows.append(row)
    return rows


def flat_results(rows: List[dict]) -> List[TestResult]:
    """Expand suite rows into one :class:`TestResult` per (test, stream)."""
    out = []
    for row in rows:
        for tag in ("x", "y"):
            p = row[f"p_{tag}"]
            out.append(TestResult(f"{row['test']}[{tag}]", 0.0 if p is None else p))
    return out

"""Statistical security measures for cipher images."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

DIRECTIONS = ("h", "v", "d", "ad")


class ZeroVarianceError(ValueError):
    pass


def histogram(image) -> np.ndarray:
    return np.bincount(np.asarray(image, dtype=np.uint8).ravel(), minlength=256)


def entropy(image) -> float:
    """Shannon entropy of the byte distribution, in bits per sample."""
    counts = histogram(image)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty image")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum() + 0.0)


def adjacent_pairs(image, direction: str):
    f = np.asarray(image)
    if f.ndim != 2:
        raise ValueError("adjacent pairs are defined on 2D planes")
    if direction == "h":
        return f[:, :-1], f[:, 1:]
    if direction == "v":
        return f[:-1, :], f[1:, :]
    if direction == "d":
        return f[:-1, :-1], f[1:, 1:]
    if direction == "ad":
        return f[:-1, 1:], f[1:, :-1]
    raise ValueError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")


def directional_correlation(image, direction: str) -> float:
    """Pearson coefficient over every adjacent pixel pair in ``direction``.

    Color images return the mean over channels.
    """
    img = np.asarray(image)
    if img.ndim == 3:
        return float(np.mean([directional_correlation(img[:, :, c], direction)
                              for c in range(img.shape[2])]))
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError("need an image of at least 2x2")
    a, b = adjacent_pairs(img, direction)
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    da = a - a.mean()
    db = b - b.mean()
    sa = np.dot(da, da)
    sb = np.dot(db, db)
    if sa == 0.0 or sb == 0.0:
        raise ZeroVarianceError(f"zero variance along direction {direction!r}")
    return float(np.dot(da, db) / np.sqrt(sa * sb))


def npcr_uaci(c1, c2) -> Tuple[float, float]:
    """NPCR and UACI in percent between two equally shaped cipher images."""
    a = np.asarray(getattr(c1, "pixels", c1))
    b = np.asarray(getattr(c2, "pixels", c2))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    a = a.astype(np.int16)
    b = b.astype(np.int16)
    npcr = 100.0 * float(np.mean(a != b))
    uaci = 100.0 * float(np.mean(np.abs(a - b))) / 255.0
    return npcr, uaci


@dataclass
class MetricsReport:
    entropy: float
    corr_h: float
    corr_v: float
    corr_d: float
    corr_ad: float
    npcr: Optional[float] = None
    uaci: Optional[float] = None
    histogram: List[int] = field(default_factory=list)
    elapsed: Optional[float] = None

    def to_dict(self, with_histogram: bool = True) -> dict:
        d = asdict(self)
        if not with_histogram:
            d.pop("histogram")
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _safe_corr(image, direction):
    try:
        return directional_correlation(image, direction)
    except ZeroVarianceError:
        return float("nan")


def image_report(image, elapsed: Optional[float] = None, npcr=None, uaci=None) -> MetricsReport:
    img = np.asarray(getattr(image, "pixels", image))
    corr = [_safe_corr(img, d) for d in DIRECTIONS]
    return MetricsReport(entropy(img), *corr, npcr=npcr, uaci=uaci,
                         histogram=histogram(img).tolist(), elapsed=elapsed)


def key_sensitivity_report(image, keys, field: Optional[str] = None, **encrypt_kw):
    """Encrypt under ``keys`` and under ``keys`` with one key's LSB flipped.

    Returns the two reports; both carry the NPCR/UACI between the ciphertexts.
    ``field=None`` means no perturbation.
    """
    from .cipher import encrypt

    other = keys if field is None else keys.flip_lsb(field)
    t0 = time.perf_counter()
    c1 = encrypt(image, keys, **encrypt_kw)
    t1 = time.perf_counter()
    c2 = encrypt(image, other, **encrypt_kw)
    t2 = time.perf_counter()
    npcr, uaci = npcr_uaci(c1, c2)
    return (image_report(c1, t1 - t0, npcr, uaci), image_report(c2, t2 - t1, npcr, uaci))


def differential_trials(image, keys, trials: int = 10, rng=None, **encrypt_kw):
    """Mean NPCR/UACI over single-pixel plaintext changes at random positions.

    Each trial adds a random nonzero amount (mod 256) to one random sample.
    """
    from .cipher import encrypt

    rng = np.random.default_rng(rng)
    img = np.array(image, dtype=np.uint8)
    base = encrypt(img, keys, **encrypt_kw)
    scores = []
    for _ in range(trials):
        idx = tuple(int(rng.integers(0, s)) for s in img.shape)
        changed = img.copy()
        changed[idx] = (int(changed[idx]) + int(rng.integers(1, 256))) % 256
        scores.append(npcr_uaci(base, encrypt(changed, keys, **encrypt_kw)))
    arr = np.array(scores)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())

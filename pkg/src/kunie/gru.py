"""A small GRU sequence model trained from scratch on chaotic orbits.

Forward pass, backpropagation through time and the optimiser are plain
numpy.  The model reads a window of scalars and predicts the next one;
:func:`generate` runs it closed-loop, feeding each prediction back in.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .keys import KeyBundle, iterate_scphm

CHECKPOINT_MAGIC = b"KGRU"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHII")  # magic, version, hidden, sequence_length

TOTAL_STEPS = 30_000
DISCARD_STEPS = 6_000

PARAM_ORDER = ("Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh", "Wo", "bo")


class TrainingDivergedError(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class GruConfig:
    hidden_units: int = 32
    sequence_length: int = 20
    learning_rate: float = 1e-2
    epochs: int = 200
    train_points: int = 24_000
    batch_size: int = 128
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1 or self.sequence_length < 1:
            raise ValueError("hidden_units and sequence_length must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class GruModel:
    """GRU cell weights plus a sigmoid output projection.

    Shapes: ``W*`` (1, H), ``U*`` (H, H), ``b*`` (H,), ``Wo`` (H,), ``bo`` (1,).
    """

    Wz: np.ndarray
    Wr: np.ndarray
    Wh: np.ndarray
    Uz: np.ndarray
    Ur: np.ndarray
    Uh: np.ndarray
    bz: np.ndarray
    br: np.ndarray
    bh: np.ndarray
    Wo: np.ndarray
    bo: np.ndarray
    sequence_length: int = 20

    @property
    def hidden_units(self) -> int:
        return self.bz.shape[0]

    def params(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_ORDER}

    def check(self) -> "GruModel":
        h = self.hidden_units
        shapes = {"Wz": (1, h), "Wr": (1, h), "Wh": (1, h), "Uz": (h, h), "Ur": (h, h),
                  "Uh": (h, h), "bz": (h,), "br": (h,), "bh": (h,), "Wo": (h,), "bo": (1,)}
        for k, shape in shapes.items():
            v = getattr(self, k)
            if v.shape != shape:
                raise ValueError(f"{k} has shape {v.shape}, expected {shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{k} holds non-finite weights")
        return self

    @classmethod
    def zeros(cls, hidden_units: int, sequence_length: int = 20) -> "GruModel":
        h = hidden_units
        return cls(np.zeros((1, h)), np.zeros((1, h)), np.zeros((1, h)),
                   np.zeros((h, h)), np.zeros((h, h)), np.zeros((h, h)),
                   np.zeros(h), np.zeros(h), np.zeros(h), np.zeros(h), np.zeros(1),
                   sequence_length)

    @classmethod
    def initialise(cls, hidden_units: int, sequence_length: int = 20, seed: int = 0) -> "GruModel":
        rng = np.random.default_rng(seed)
        h = hidden_units
        m = cls.zeros(h, sequence_length)
        lim_w = np.sqrt(6.0 / (1 + h))
        lim_u = np.sqrt(6.0 / (2 * h))
        for k in ("Wz", "Wr", "Wh"):
            setattr(m, k, rng.uniform(-lim_w, lim_w, (1, h)))
        for k in ("Uz", "Ur", "Uh"):
            setattr(m, k, rng.uniform(-lim_u, lim_u, (h, h)))
        m.Wo = rng.uniform(-lim_w, lim_w, h)
        return m

    def copy(self) -> "GruModel":
        return GruModel(**{k: v.copy() for k, v in self.params().items()},
                        sequence_length=self.sequence_length)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def cell(model: GruModel, x, h):
    """One GRU step for a batch: ``x`` (B,), ``h`` (B, H).  Returns new h and the gates."""
    x = x[:, None]
    z = _sigmoid(x * model.Wz + h @ model.Uz + model.bz)
    r = _sigmoid(x * model.Wr + h @ model.Ur + model.br)
    hc = np.tanh(x * model.Wh + (r * h) @ model.Uh + model.bh)
    return (1.0 - z) * h + z * hc, (z, r, hc)


def _readout(model: GruModel, h):
    return _sigmoid(h @ model.Wo + model.bo[0])


def forward_batch(model: GruModel, windows, keep_cache: bool = False):
    """Predict the value after each window.  ``windows`` is (B, T)."""
    X = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    h = np.zeros((X.shape[0], model.hidden_units))
    cache = []
    for t in range(X.shape[1]):
        h_new, gates = cell(model, X[:, t], h)
        if keep_cache:
            cache.append((X[:, t], h, gates))
        h = h_new
    y = _readout(model, h)
    return (y, h, cache) if keep_cache else y


def gru_forward(model: GruModel, window) -> float:
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != model.sequence_length:
        raise ValueError(f"window must hold {model.sequence_length} values, got shape {w.shape}")
    return float(forward_batch(model, w[None, :])[0])


def loss_and_grads(model: GruModel, windows, targets) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean squared one-step error and its gradient by backpropagation through the window."""
    targets = np.asarray(targets, dtype=np.float64)
    y, h_last, cache = forward_batch(model, windows, keep_cache=True)
    n = targets.shape[0]
    err = y - targets
    loss = float(np.mean(err * err))
    g = {k: np.zeros_like(v) for k, v in model.params().items()}

    dlogit = (2.0 / n) * err * y * (1.0 - y)
    g["Wo"] = h_last.T @ dlogit
    g["bo"] = np.array([dlogit.sum()])
    dh = dlogit[:, None] * model.Wo[None, :]
    for x, h_prev, (z, r, hc) in reversed(cache):
        x = x[:, None]
        dhc = dh * z
        dz = dh * (hc - h_prev)
        dh_prev = dh * (1.0 - z)

        da_h = dhc * (1.0 - hc * hc)
        g["Wh"] += (x * da_h).sum(axis=0, keepdims=True)
        g["Uh"] += (r * h_prev).T @ da_h
        g["bh"] += da_h.sum(axis=0)
        drh = da_h @ model.Uh.T
        dr = drh * h_prev
        dh_prev += drh * r

        da_z = dz * z * (1.0 - z)
        g["Wz"] += (x * da_z).sum(axis=0, keepdims=True)
        g["Uz"] += h_prev.T @ da_z
        g["bz"] += da_z.sum(axis=0)
        dh_prev += da_z @ model.Uz.T

        da_r = dr * r * (1.0 - r)
        g["Wr"] += (x * da_r).sum(axis=0, keepdims=True)
        g["Ur"] += h_prev.T @ da_r
        g["br"] += da_r.sum(axis=0)
        dh_prev += da_r @ model.Ur.T

        dh = dh_prev
    return loss, g


def sliding_windows(data, sequence_length: int):
    """All (window, next value) pairs of a 1D series."""
    d = np.asarray(data, dtype=np.float64)
    if d.ndim != 1 or d.size <= sequence_length:
        raise ValueError(f"need more than {sequence_length} data points")
    win = np.lib.stride_tricks.sliding_window_view(d[:-1], sequence_length)
    return win, d[sequence_length:]


def minmax(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise ValueError("series is constant; min-max scaling is undefined")
    return (v - lo) / (hi - lo)


def prepare_training_data(keys: KeyBundle, total: int = TOTAL_STEPS, discard: int = DISCARD_STEPS) -> np.ndarray:
    """x-component of the orbit from the key's initial state, min-max scaled.

    Element 0 is orbit step ``discard + 1`` (step 1 is the first iterate).
    """
    xs, _ = iterate_scphm(keys.x0, keys.y0, keys.params, total)
    return minmax(xs[discard:total])


@dataclass
class TrainingResult:
    model: GruModel
    losses: List[float] = field(default_factory=list)


def clip_gradients(grads, max_norm):
    """Scale ``grads`` in place so their global norm is at most ``max_norm``."""
    norm = np.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for v in grads.values():
            v *= scale
    return norm


def train_windows(X, Y, config: GruConfig, model: Optional[GruModel] = None) -> TrainingResult:
    """Mini-batch gradient descent on one-step mean squared error.

    Each epoch visits every (window, target) pair once in a seeded random
    order.  The recorded loss of an epoch is the mean of its mini-batch losses.
    """
    if model is None:
        model = GruModel.initialise(config.hidden_units, config.sequence_length, config.seed)
    else:
        model = model.copy()
    rng = np.random.default_rng(config.seed + 1)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(Y))
        total = 0.0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} in epoch {epoch + 1}")
            clip_gradients(grads, config.clip_norm)
            for k, gk in grads.items():
                getattr(model, k)[...] -= config.learning_rate * gk
            total += loss
            batches += 1
        losses.append(total / batches)
    return TrainingResult(model, losses)


def train(data, config: GruConfig = GruConfig(), model: Optional[GruModel] = None) -> TrainingResult:
    """Fit on the sliding windows of the first ``train_points`` values of ``data``."""
    d = np.asarray(data, dtype=np.float64)[: config.train_points]
    X, Y = sliding_windows(d, config.sequence_length)
    return train_windows(X, Y, config, model)


def generate(model: GruModel, seed_window, n: int) -> np.ndarray:
    """Run the model closed-loop for ``n`` values after warming up on ``seed_window``."""
    if n <= 0:
        return np.empty(0)
    w = np.asarray(seed_window, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("seed window is empty")
    h = np.zeros((1, model.hidden_units))
    for v in w:
        h, _ = cell(model, np.array([v]), h)
    out = np.empty(n)
    for i in range(n):
        y = _readout(model, h)
        out[i] = y[0]
        h, _ = cell(model, y, h)
    return out


# -- checkpoint ---------------------------------------------------------------

def save_checkpoint(model: GruModel, path) -> None:
    """Header then every parameter as little-endian float64, in :data:`PARAM_ORDER`."""
    model.check()
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                                   model.hidden_units, model.sequence_length))
        for k in PARAM_ORDER:
            fh.write(np.ascontiguousarray(getattr(model, k), dtype="<f8").tobytes())


def load_checkpoint(path) -> GruModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CKPT_HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, h, seq = _CKPT_HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    template = GruModel.zeros(h, seq)
    sizes = [getattr(template, k).size for k in PARAM_ORDER]
    body = blob[_CKPT_HEADER.size:]
    if len(body) != 8 * sum(sizes):
        raise CheckpointError(f"expected {8 * sum(sizes)} weight bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays = {}
    pos = 0
    for k, size in zip(PARAM_ORDER, sizes):
        arrays[k] = flat[pos:pos + size].reshape(getattr(template, k).shape).copy()
        pos += size
    return GruModel(**arrays, sequence_length=seq).check()


"""scikit-learn style wrappers around the cipher, the scan and the GRU model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import gru as _gru
from ._validation import check_image, image_planes
from .cipher import CipherText, batch_keys, decrypt, encrypt
from .keys import KeyBundle, read_keyfile
from .scan import KunScanConfig, apply_permutation, build_kun_scan, invert_permutation


def _is_batch(X) -> bool:
    if isinstance(X, (list, tuple)):
        return True
    return np.asarray(X).ndim == 4


class KunIECipher(TransformerMixin, BaseEstimator):
    """Image cipher as a transformer: ``transform`` encrypts, ``inverse_transform`` decrypts.

    Keys come from ``keys`` (a :class:`KeyBundle`) or ``key_file``.  A list
    of images (or a 4D array) is treated as a batch, so image ``j`` uses the
    batch key schedule for index ``j``.
    """

    def __init__(self, keys=None, key_file=None, region_grid=(2, 2), rounds=3):
        self.keys = keys
        self.key_file = key_file
        self.region_grid = region_grid
        self.rounds = rounds

    def fit(self, X=None, y=None):
        if self.keys is not None:
            if not isinstance(self.keys, KeyBundle):
                raise TypeError("keys must be a KeyBundle")
            self.keys_ = self.keys
        elif self.key_file is not None:
            self.keys_ = read_keyfile(self.key_file)
        else:
            raise ValueError("either keys or key_file is required")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        self.c0_ = self.keys_.diffusion_seed()
        return self

    def transform(self, X):
        check_is_fitted(self, "keys_")
        if _is_batch(X):
            return [encrypt(img, batch_keys(self.keys_, j), self.region_grid, self.rounds, c0=self.c0_).pixels
                    for j, img in enumerate(X)]
        return encrypt(X, self.keys_, self.region_grid, self.rounds).pixels

    def inverse_transform(self, X):
        check_is_fitted(self, "keys_")
        if _is_batch(X):
            return [decrypt(CipherText(check_image(c, "cipher"), self.c0_), batch_keys(self.keys_, j),
                            self.region_grid, self.rounds, c0=self.c0_)
                    for j, c in enumerate(X)]
        ct = CipherText(check_image(X, "cipher"), self.c0_)
        return decrypt(ct, self.keys_, self.region_grid, self.rounds)


class KunScanTransformer(TransformerMixin, BaseEstimator):
    """Reorder the pixels of each channel along the Kun-SCAN path.

    ``fit`` fixes the image geometry; the output keeps the input shape.
    """

    def __init__(self, region_grid=(2, 2), rounds=3, ctrl=(0.0, 0.0, 0.0)):
        self.region_grid = region_grid
        self.rounds = rounds
        self.ctrl = ctrl

    def fit(self, X, y=None):
        img = check_image(X)
        self.dims_ = img.shape[:2]
        self.permutation_ = build_kun_scan(
            self.dims_, KunScanConfig(tuple(self.region_grid), int(self.rounds), tuple(self.ctrl)))
        return self

    def _apply(self, X, inverse):
        check_is_fitted(self, "permutation_")
        perm = invert_permutation(self.permutation_) if inverse else self.permutation_
        img = check_image(X)
        if img.shape[:2] != tuple(self.dims_):
            raise ValueError(f"fitted for {self.dims_}, got {img.shape[:2]}")
        out = np.empty_like(img)
        for c, plane in enumerate(image_planes(img)):
            moved = apply_permutation(plane.ravel(), perm).reshape(self.dims_)
            if img.ndim == 2:
                out[:] = moved
            else:
                out[:, :, c] = moved
        return out

    def transform(self, X):
        return self._apply(X, inverse=False)

    def inverse_transform(self, X):
        return self._apply(X, inverse=True)


class GruSequenceRegressor(RegressorMixin, BaseEstimator):
    """One-step-ahead GRU regressor.

    ``fit(X, y)`` takes windows ``X`` (n, T) and next values ``y``; with
    ``y=None``, ``X`` is a 1D series that is cut into sliding windows.
    """

    def __init__(self, hidden_units=32, sequence_length=20, learning_rate=1e-2, epochs=200,
                 batch_size=128, clip_norm=1.0, random_state=0):
        self.hidden_units = hidden_units
        self.sequence_length = sequence_length
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _config(self, n_points):
        return _gru.GruConfig(self.hidden_units, self.sequence_length, self.learning_rate,
                              self.epochs, n_points, self.batch_size, self.clip_norm,
                              int(self.random_state or 0))

    def fit(self, X, y=None):
        if y is None:
            series = np.asarray(X, dtype=np.float64).ravel()
            result = _gru.train(series, self._config(series.size))
        else:
            X = np.asarray(X, dtype=np.float64)
            y = np.asarray(y, dtype=np.float64).ravel()
            if X.ndim != 2 or X.shape[1] != self.sequence_length or X.shape[0] != y.shape[0]:
                raise ValueError(f"X must be (n, {self.sequence_length}) with one target per row")
            result = _gru.train_windows(X, y, self._config(X.shape[0]))
        self.model_ = result.model
        self.loss_curve_ = result.losses
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.sequence_length:
            raise ValueError(f"windows must hold {self.sequence_length} values")
        return _gru.forward_batch(self.model_, X)

    def generate(self, seed_window, n):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before generate")
        return _gru.generate(self.model_, seed_window, n)

"""Encryption and decryption: keystream, Kun-SCAN permutation, XOR diffusion."""
from __future__ import annotations

import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._validation import check_bytes, check_image, image_planes
from .keys import KeyBundle, generate_orbit, partition_keystream, quantize_bytes
from .scan import KunScanConfig, apply_permutation, build_kun_scan, invert_permutation

MAGIC = b"KUNIE1"
HEADER = struct.Struct("<6sIIBB")
BATCH_N0_STRIDE = 17


class ContainerFormatError(ValueError):
    pass


def _aes_sbox() -> bytes:
    # multiplicative inverse in GF(2^8) followed by the AES affine map
    box = [0] * 256
    p = q = 1
    while True:
        p ^= ((p << 1) & 0xFF) ^ (0x1B if p & 0x80 else 0)
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        rot = lambda v, s: ((v << s) | (v >> (8 - s))) & 0xFF  # noqa: E731
        box[p] = q ^ rot(q, 1) ^ rot(q, 2) ^ rot(q, 3) ^ rot(q, 4) ^ 0x63
        if p == 1:
            break
    box[0] = 0x63
    return bytes(box)


SBOX = _aes_sbox()
_SBOX_ARR = np.frombuffer(SBOX, dtype=np.uint8)


@dataclass(eq=False)
class CipherText:
    pixels: np.ndarray
    c0: int

    @property
    def dims(self) -> Tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    def to_bytes(self) -> bytes:
        m, n = self.dims
        return HEADER.pack(MAGIC, m, n, self.channels, self.c0) + self.pixels.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CipherText":
        if len(blob) < HEADER.size:
            raise ContainerFormatError("truncated header")
        magic, m, n, channels, c0 = HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ContainerFormatError(f"bad magic {magic!r}")
        if channels not in (1, 3) or m < 1 or n < 1:
            raise ContainerFormatError(f"bad geometry {m}x{n}x{channels}")
        body = blob[HEADER.size:]
        if len(body) != m * n * channels:
            raise ContainerFormatError(f"expected {m * n * channels} pixel bytes, found {len(body)}")
        pixels = np.frombuffer(body, dtype=np.uint8).copy()
        shape = (m, n) if channels == 1 else (m, n, channels)
        return cls(pixels.reshape(shape), c0)


def xda_forward(pixels, keystream, c0: int) -> np.ndarray:
    """``C_i = P_i ^ C_{i-1} ^ K_i`` with ``C_0 = c0``."""
    p = check_bytes(pixels, "pixels")
    k = check_bytes(keystream, "keystream")
    if p.shape != k.shape:
        raise ValueError(f"pixels ({p.size}) and keystream ({k.size}) differ in length")
    return np.bitwise_xor.accumulate(p ^ k) ^ np.uint8(c0)


def xda_inverse(cipher, keystream, c0: int) -> np.ndarray:
    c = check_bytes(cipher, "cipher")
    k = check_bytes(keystream, "keystream")
    if c.shape != k.shape:
        raise ValueError(f"cipher ({c.size}) and keystream ({k.size}) differ in length")
    prev = np.empty_like(c)
    if c.size:
        prev[0] = c0
        prev[1:] = c[:-1]
    return c ^ prev ^ k


def feedback_backward(values, keystream, c0: int) -> np.ndarray:
    """Right-to-left chain ``D_j = V_j ^ K_j ^ S[D_{j+1} ^ D_{j+2}]``.

    ``S`` is a byte S-box; the chain starts from ``D_{n} = c0, D_{n+1} = 0``.
    """
    vk = (check_bytes(values, "values") ^ check_bytes(keystream, "keystream")).tobytes()
    n = len(vk)
    out = bytearray(n)
    sbox = SBOX
    d1, d2 = c0 & 0xFF, 0
    for j in range(n - 1, -1, -1):
        d = vk[j] ^ sbox[d1 ^ d2]
        out[j] = d
        d2 = d1
        d1 = d
    return np.frombuffer(bytes(out), dtype=np.uint8)


def feedback_backward_inverse(chained, keystream, c0: int) -> np.ndarray:
    d = check_bytes(chained, "chained")
    k = check_bytes(keystream, "keystream")
    if d.shape != k.shape:
        raise ValueError("length mismatch")
    ext = np.concatenate([d, np.array([c0 & 0xFF, 0], dtype=np.uint8)])
    n = d.size
    return d ^ k ^ _SBOX_ARR[ext[1:n + 1] ^ ext[2:n + 2]]


def diffuse(pixels, keystream, c0: int) -> np.ndarray:
    """Forward XOR chain followed by the nonlinear backward feedback pass."""
    return feedback_backward(xda_forward(pixels, keystream, c0), keystream, c0)


def undiffuse(cipher, keystream, c0: int) -> np.ndarray:
    return xda_inverse(feedback_backward_inverse(cipher, keystream, c0), keystream, c0)


def _channel_schedule(keys: KeyBundle, dims, channels, region_grid, rounds, keystream):
    orbit = generate_orbit(keys, dims, channels)
    mn = dims[0] * dims[1]
    out = []
    for c in range(channels):
        part = partition_keystream(orbit, dims, c)
        perm = build_kun_scan(dims, KunScanConfig(tuple(region_grid), rounds, tuple(part.y_ctrl)))
        if keystream is None:
            ks = quantize_bytes(part.x_s)
        else:
            ks = keystream[c * mn:(c + 1) * mn]
        out.append((perm, ks))
    return out


def _check_override(keystream, channels, dims):
    if keystream is None:
        return None
    ks = check_bytes(keystream, "keystream")
    need = channels * dims[0] * dims[1]
    if ks.size < need:
        raise ValueError(f"keystream override holds {ks.size} bytes, need {need}")
    return ks


def encrypt(image, keys: KeyBundle, region_grid=(2, 2), rounds: int = 3,
            keystream=None, c0: Optional[int] = None) -> CipherText:
    """Encrypt a gray (M, N) or color (M, N, 3) uint8 image.

    ``keystream`` optionally replaces the chaotic diffusion bytes (one run of
    ``M*N`` bytes per channel); the permutation always comes from the keys.
    """
    img = check_image(image)
    dims = img.shape[:2]
    planes = image_planes(img)
    c0 = keys.diffusion_seed() if c0 is None else c0
    ks = _check_override(keystream, len(planes), dims)
    out = np.empty_like(img)
    schedule = _channel_schedule(keys, dims, len(planes), region_grid, rounds, ks)
    for c, (plane, (perm, k)) in enumerate(zip(planes, schedule)):
        mixed = diffuse(apply_permutation(plane.ravel(), perm), k, c0).reshape(dims)
        if img.ndim == 2:
            out[:] = mixed
        else:
            out[:, :, c] = mixed
    return CipherText(out, c0)


def decrypt(cipher: CipherText, keys: KeyBundle, region_grid=(2, 2), rounds: int = 3,
            keystream=None, c0: Optional[int] = None) -> np.ndarray:
    """Invert :func:`encrypt`.  Wrong keys give noise, not an error."""
    img = check_image(cipher.pixels, "cipher")
    dims = img.shape[:2]
    planes = image_planes(img)
    c0 = keys.diffusion_seed() if c0 is None else c0
    ks = _check_override(keystream, len(planes), dims)
    out = np.empty_like(img)
    schedule = _channel_schedule(keys, dims, len(planes), region_grid, rounds, ks)
    for c, (plane, (perm, k)) in enumerate(zip(planes, schedule)):
        flat = undiffuse(plane.ravel(), k, c0)
        restored = apply_permutation(flat, invert_permutation(perm)).reshape(dims)
        if img.ndim == 2:
            out[:] = restored
        else:
            out[:, :, c] = restored
    return out


def batch_keys(keys: KeyBundle, index: int) -> KeyBundle:
    return keys.with_n0(keys.n0 + BATCH_N0_STRIDE * index)


def _encrypt_indexed(args):
    image, keys, index, c0 = args
    return encrypt(image, batch_keys(keys, index), c0=c0)


def _workers(max_workers):
    if max_workers is not None:
        return max(1, int(max_workers))
    return max(1, int(os.environ.get("KUNIE_THREADS", "1")))


def encrypt_batch(images: Sequence, keys: KeyBundle, max_workers: Optional[int] = None):
    """Encrypt several images; image ``j`` uses discard count ``n0 + 17 j``.

    Output ``j`` depends only on image ``j``, its index and the keys, so
    the result is the same however the work is scheduled.
    """
    if len(images) == 0:
        raise ValueError("need at least one image")
    c0 = keys.diffusion_seed()
    jobs = [(img, keys, j, c0) for j, img in enumerate(images)]
    workers = _workers(max_workers)
    if workers == 1 or len(jobs) == 1:
        return [_encrypt_indexed(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_encrypt_indexed, jobs))


def decrypt_batch(ciphers: Sequence[CipherText], keys: KeyBundle):
    c0 = keys.diffusion_seed()
    return [decrypt(ct, batch_keys(keys, j), c0=c0) for j, ct in enumerate(ciphers)]

"""Numpy fallback for the compiled kernels; same signatures, same results."""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def splitmix_block(key, start, n):
    # uint64 array arithmetic wraps modulo 2**64 without warnings
    z = np.arange(1, n + 1, dtype=np.uint64)
    z += np.uint64(start)
    z *= GAMMA
    z += np.uint64(key)
    z ^= z >> np.uint64(30)
    z *= _C1
    z ^= z >> np.uint64(27)
    z *= _C2
    z ^= z >> np.uint64(31)
    return z


def count_sketch(x, h, s, d):
    B = x.shape[0]
    # bincount accumulates in input order, like the compiled loop
    idx = (h[None, :] + d * np.arange(B)[:, None]).ravel()
    out = np.bincount(idx, weights=(s * x).ravel(), minlength=B * d)
    return out.reshape(B, d)


def count_sketch_t(g, h, s):
    return s * g[:, h]


def circconv(a, b):
    d = a.shape[1]
    out = np.zeros_like(a)
    for j in range(d):
        out += a[:, j:j + 1] * np.roll(b, j, axis=1)
    return out


def circcorr(g, b):
    d = g.shape[1]
    out = np.zeros_like(g)
    for m in range(d):
        out += b[:, m:m + 1] * np.roll(g, -m, axis=1)
    return out

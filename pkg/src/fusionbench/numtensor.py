"""Dense float64 arrays, the handful of maps the fusions need, and a portable RNG.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order; the
helpers here only add the exact-shape checks the rest of the package relies on.

The random generator is SplitMix64 used in counter mode::

    key      = mix64(seed)
    word_i   = mix64(key + i * 0x9E3779B97F4A7C15)      i = 1, 2, 3, ...
    mix64(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31                               (all mod 2**64)

Derived draws:

* uniform double: ``(word >> 11) * 2**-53`` in [0, 1)
* sign: ``+1`` if the top bit of the word is set, else ``-1``
* index in [1, d]: ``word % d + 1`` with rejection of words >= 2**64 - (2**64 % d)
* gaussian: Box-Muller cosine branch on two consecutive words,
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``

Every draw consumes a fixed number of words (rejections aside), so streams
are reproducible bit-for-bit from the seed on any platform with IEEE doubles.
"""

import math

import numpy as np

from . import _kernels
from .errors import DimensionError, ParameterError

Tensor = np.ndarray

_U64 = 1 << 64


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array (no copy when already one)."""
    return np.ascontiguousarray(x, dtype=np.float64)


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape {a.shape} does not match {b.shape}")


def matvec(W, x, b=None):
    """Affine map ``W @ x + b`` with ``W`` of shape [m, n]."""
    W = as_tensor(W)
    x = as_tensor(x)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec: matrix shape {W.shape} incompatible with vector shape {x.shape}")
    y = W @ x
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"matvec: bias shape {b.shape} incompatible with matrix shape {W.shape}")
        y = y + b
    return y


def hadamard(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    _same_shape(a, b, "hadamard")
    return a * b


def tanh_map(x):
    return np.tanh(as_tensor(x))


def resolve_mode(mode, d):
    """Map ``"auto"`` to ``direct`` below 64 and ``frequency`` from 64 up."""
    if mode == "auto":
        return "direct" if d < 64 else "frequency"
    if mode not in ("direct", "frequency"):
        raise ParameterError(f"unknown convolution mode {mode!r}")
    return mode


def _rows(x):
    return x.reshape(-1, x.shape[-1])


def circular_convolve(a, b, mode="direct", backend="auto"):
    """Circular convolution ``out[k] = sum_j a[j] b[(k - j) mod d]`` along the last axis.

    Leading axes are treated as a batch. ``direct`` is the O(d^2) definition,
    ``frequency`` goes through a real FFT.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim == 0 or a.shape[-1] < 1:
        raise DimensionError("circular_convolve: need at least one element")
    _same_shape(a, b, "circular_convolve")
    d = a.shape[-1]
    mode = resolve_mode(mode, d)
    if mode == "direct":
        out = _kernels.get_backend(backend).circconv(_rows(a), _rows(b))
        return out.reshape(a.shape)
    fa = np.fft.rfft(a, axis=-1)
    fb = np.fft.rfft(b, axis=-1)
    return np.fft.irfft(fa * fb, n=d, axis=-1)


def circular_correlate(g, b, mode="direct", backend="auto"):
    """Adjoint of convolution by ``b``: ``out[j] = sum_k g[k] b[(k - j) mod d]``."""
    g = as_tensor(g)
    b = as_tensor(b)
    _same_shape(g, b, "circular_correlate")
    d = g.shape[-1]
    mode = resolve_mode(mode, d)
    if mode == "direct":
        out = _kernels.get_backend(backend).circcorr(_rows(g), _rows(b))
        return out.reshape(g.shape)
    fg = np.fft.rfft(g, axis=-1)
    fb = np.fft.rfft(b, axis=-1)
    return np.fft.irfft(fg * np.conj(fb), n=d, axis=-1)


class Rng:
    """Counter-mode SplitMix64 stream. Single owner; not thread-safe."""

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self.key = _kernels.python.mix64(seed)
        self.counter = 0

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def words(self, n):
        """Next ``n`` raw 64-bit words."""
        out = _kernels.active.splitmix_block(self.key, self.counter, n)
        self.counter += n
        return out

    def uniform(self, n):
        return (self.words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_sign(self, n):
        _check_count(n)
        return np.where(self.words(n) >> np.uint64(63), 1, -1).astype(np.int64)

    def uniform_index(self, n, d):
        _check_count(n)
        if d < 1:
            raise ParameterError(f"index bound must be >= 1, got {d}")
        dd = np.uint64(d)
        w = self.words(n)
        rem = _U64 % d
        if rem:  # powers of two divide 2**64 and never reject
            limit = np.uint64(_U64 - rem)
            for i in np.flatnonzero(w >= limit):
                x = self.words(1)[0]
                while x >= limit:
                    x = self.words(1)[0]
                w[i] = x
        return (w % dd).astype(np.int64) + 1

    def gaussian(self, n, sigma=1.0):
        _check_count(n)
        if not sigma > 0:
            raise ParameterError(f"sigma must be positive, got {sigma}")
        u = self.uniform(2 * n)
        u1 = u[0::2]
        u2 = u[1::2]
        return sigma * np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)

    def permutation(self, n):
        """Random permutation of range(n): stable argsort of fresh words."""
        return np.argsort(self.words(n), kind="stable")


def _check_count(n):
    if n < 1:
        raise ParameterError(f"count must be >= 1, got {n}")


def rng_uniform_sign(rng, n):
    return rng.uniform_sign(n)


def rng_uniform_index(rng, n, d):
    return rng.uniform_index(n, d)


def rng_gaussian(rng, n, sigma):
    return rng.gaussian(n, sigma)

"""Count Sketch projections and the outer-product sketch used to check MCB."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, FormatError, ParameterError
from .numtensor import Rng, as_tensor


@dataclass(frozen=True, eq=False)
class SketchSpec:
    """Sign vector ``s`` in {-1, +1}^n and 1-indexed buckets ``h`` in [1, d]^n.

    Arrays are stored read-only; a spec never changes after construction.
    """

    n: int
    d: int
    s: np.ndarray
    h: np.ndarray
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ParameterError(f"sketch dims must be >= 1, got n={self.n}, d={self.d}")
        s = np.array(self.s, dtype=np.int64)
        h = np.array(self.h, dtype=np.int64)
        if s.shape != (self.n,) or h.shape != (self.n,):
            raise DimensionError(f"sketch vectors must have length n={self.n}, got s{s.shape} h{h.shape}")
        if not np.all(np.abs(s) == 1):
            raise ParameterError("sketch signs must be -1 or +1")
        if h.min() < 1 or h.max() > self.d:
            raise ParameterError(f"sketch buckets must lie in [1, {self.d}]")
        s.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "h", h)
        # kernel-side views: 0-indexed buckets, float signs
        h0 = np.ascontiguousarray(h - 1, dtype=np.intp)
        sf = s.astype(np.float64)
        h0.flags.writeable = False
        sf.flags.writeable = False
        object.__setattr__(self, "_h0", h0)
        object.__setattr__(self, "_sf", sf)

    def __eq__(self, other):
        if not isinstance(other, SketchSpec):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and self.seed == other.seed
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.h, other.h)
        )

    def to_text(self):
        lines = [
            f"{self.n} {self.d} {self.seed}",
            " ".join(str(int(v)) for v in self.s),
            " ".join(str(int(v)) for v in self.h),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lines(cls, lines, first_lineno=1, path=None):
        """Parse the three-line record; ``first_lineno`` is used in error messages."""
        if len(lines) < 3:
            raise FormatError("truncated sketch record", line=first_lineno + len(lines), path=path)
        try:
            n, d, seed = (int(t) for t in lines[0].split())
        except ValueError:
            raise FormatError("sketch header must be 'n d seed'", line=first_lineno, path=path) from None
        vecs = []
        for k in (1, 2):
            try:
                vals = [int(t) for t in lines[k].split()]
            except ValueError:
                raise FormatError("non-integer entry", line=first_lineno + k, path=path) from None
            if len(vals) != n:
                raise FormatError(f"expected {n} entries, got {len(vals)}", line=first_lineno + k, path=path)
            vecs.append(vals)
        try:
            return cls(n=n, d=d, s=vecs[0], h=vecs[1], seed=seed)
        except (ParameterError, DimensionError) as exc:
            raise FormatError(str(exc), line=first_lineno, path=path) from None


def make_sketch(n, d, rng):
    """Draw ``s`` then ``h`` from ``rng``; the spec records ``rng.seed``."""
    if n < 1 or d < 1:
        raise ParameterError(f"sketch dims must be >= 1, got n={n}, d={d}")
    seed = rng.seed
    s = rng.uniform_sign(n)
    h = rng.uniform_index(n, d)
    return SketchSpec(n=n, d=d, s=s, h=h, seed=seed)


def make_sketch_pair(n, d, master_seed):
    """Independent question/image sketches seeded ``master`` and ``master + 1``."""
    return make_sketch(n, d, Rng(master_seed)), make_sketch(n, d, Rng(master_seed + 1))


def apply_sketch(spec, x, backend="auto"):
    """``y[k] = sum over i with h_i = k of s_i x_i``; leading axes are a batch."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] != spec.n:
        raise DimensionError(f"apply_sketch: input shape {x.shape} does not end in n={spec.n}")
    rows = x.reshape(-1, spec.n)
    y = _kernels.get_backend(backend).count_sketch(rows, spec._h0, spec._sf, spec.d)
    return y.reshape(x.shape[:-1] + (spec.d,))


def apply_sketch_transpose(spec, g, backend="auto"):
    """Adjoint of :func:`apply_sketch`: ``x[i] = s_i g[h_i]``."""
    g = as_tensor(g)
    if g.ndim == 0 or g.shape[-1] != spec.d:
        raise DimensionError(f"apply_sketch_transpose: input shape {g.shape} does not end in d={spec.d}")
    rows = g.reshape(-1, spec.d)
    x = _kernels.get_backend(backend).count_sketch_t(rows, spec._h0, spec._sf)
    return x.reshape(g.shape[:-1] + (spec.n,))


def outer_sketch_oracle(spec_q, spec_v, q, v):
    """Sketch the explicit n x n outer product ``q v^T`` with the product sketch.

    Entry (i, j) goes to bucket ``((h_q[i] - 1 + h_v[j] - 1) mod d) + 1`` with
    sign ``s_q[i] s_v[j]``. Plain loops on purpose: this is the brute-force
    reference, it shares no code with the fast path.
    """
    if spec_q.d != spec_v.d:
        raise ParameterError(f"sketch output dims differ: {spec_q.d} vs {spec_v.d}")
    q = [float(t) for t in np.ravel(q)]
    v = [float(t) for t in np.ravel(v)]
    if len(q) != spec_q.n or len(v) != spec_v.n:
        raise DimensionError(f"oracle inputs of length {len(q)}, {len(v)} for sketches n={spec_q.n}, {spec_v.n}")
    d = spec_q.d
    outer = [[qi * vj for vj in v] for qi in q]
    out = [0.0] * d
    for i in range(len(q)):
        for j in range(len(v)):
            k = (int(spec_q.h[i]) - 1 + int(spec_v.h[j]) - 1) % d
            out[k] += int(spec_q.s[i]) * int(spec_v.s[j]) * outer[i][j]
    return np.array(out)


def save_sketch(spec, path):
    with open(path, "w") as f:
        f.write(spec.to_text())


def load_sketch(path):
    with open(path) as f:
        lines = f.read().splitlines()
    return SketchSpec.from_lines(lines, path=path)

"""Element-wise, MCB and MUTAN fusion with hand-written backward passes.

All operators accept a single pair of 1-D vectors or a batch (leading axes).
For batched inputs the parameter gradients returned by :func:`fusion_vjp`
are summed over the batch.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .numtensor import as_tensor, circular_convolve, circular_correlate, hadamard, resolve_mode
from .sketch import SketchSpec, apply_sketch, apply_sketch_transpose, make_sketch_pair


class FusionKind(str, enum.Enum):
    ELEMENTWISE = "elementwise"
    MCB = "mcb"
    MUTAN = "mutan"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(f"unknown fusion kind {value!r}; expected one of "
                                 f"{', '.join(k.value for k in cls)}") from None


@dataclass(frozen=True)
class McbConfig:
    n: int
    d: int
    spec_q: SketchSpec
    spec_v: SketchSpec
    normalize: bool = False
    mode: str = "auto"

    def __post_init__(self):
        for name, spec in (("spec_q", self.spec_q), ("spec_v", self.spec_v)):
            if spec.n != self.n or spec.d != self.d:
                raise DimensionError(f"{name} is [{spec.n}->{spec.d}], config expects [{self.n}->{self.d}]")
        resolve_mode(self.mode, self.d)

    @property
    def num_params(self):
        return 0


def make_mcb_config(n, d, master_seed, normalize=False, mode="auto"):
    spec_q, spec_v = make_sketch_pair(n, d, master_seed)
    return McbConfig(n=n, d=d, spec_q=spec_q, spec_v=spec_v, normalize=normalize, mode=mode)


@dataclass
class MutanParams:
    """Projections ``W_q`` [n_q, t_q], ``W_v`` [n_v, t_v] with biases, and the
    rank slices ``M`` [R, t_q, t_o], ``N`` [R, t_v, t_o] of the core."""

    W_q: np.ndarray
    b_q: np.ndarray
    W_v: np.ndarray
    b_v: np.ndarray
    M: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        if self.M.ndim != 3 or self.N.ndim != 3 or self.M.shape[0] < 1:
            raise ParameterError("MUTAN needs rank R >= 1 with M [R, t_q, t_o] and N [R, t_v, t_o]")
        n_q, t_q = self.W_q.shape
        n_v, t_v = self.W_v.shape
        R, mq, t_o = self.M.shape
        if (
            self.b_q.shape != (t_q,)
            or self.b_v.shape != (t_v,)
            or mq != t_q
            or self.N.shape != (R, t_v, t_o)
        ):
            raise DimensionError(
                f"inconsistent MUTAN shapes: W_q{self.W_q.shape} b_q{self.b_q.shape} W_v{self.W_v.shape} "
                f"b_v{self.b_v.shape} M{self.M.shape} N{self.N.shape}"
            )

    @property
    def dims(self):
        n_q, t_q = self.W_q.shape
        n_v, t_v = self.W_v.shape
        R, _, t_o = self.M.shape
        return n_q, n_v, t_q, t_v, t_o, R

    @property
    def num_params(self):
        n_q, n_v, t_q, t_v, t_o, R = self.dims
        return n_q * t_q + t_q + n_v * t_v + t_v + R * (t_q * t_o + t_v * t_o)

    def as_dict(self):
        return {"W_q": self.W_q, "b_q": self.b_q, "W_v": self.W_v, "b_v": self.b_v, "M": self.M, "N": self.N}


def init_mutan(rng, n_q, n_v, t_q, t_v, t_o, R):
    """Gaussian weights with sigma = 1/sqrt(fan-in), zero biases.

    Draw order is fixed: W_q, W_v, M_1..M_R, N_1..N_R.
    """
    for name, val in (("n_q", n_q), ("n_v", n_v), ("t_q", t_q), ("t_v", t_v), ("t_o", t_o), ("R", R)):
        if int(val) < 1:
            raise ParameterError(f"MUTAN dimension {name} must be >= 1, got {val}")
    W_q = rng.gaussian(n_q * t_q, 1.0 / np.sqrt(n_q)).reshape(n_q, t_q)
    W_v = rng.gaussian(n_v * t_v, 1.0 / np.sqrt(n_v)).reshape(n_v, t_v)
    M = np.stack([rng.gaussian(t_q * t_o, 1.0 / np.sqrt(t_q)).reshape(t_q, t_o) for _ in range(R)])
    N = np.stack([rng.gaussian(t_v * t_o, 1.0 / np.sqrt(t_v)).reshape(t_v, t_o) for _ in range(R)])
    return MutanParams(W_q=W_q, b_q=np.zeros(t_q), W_v=W_v, b_v=np.zeros(t_v), M=M, N=N)


@dataclass
class FullBilinearOracle:
    """Explicit core ``T[a, b, c] = sum_r M_r[a, c] N_r[b, c]``; test-only reference."""

    T: np.ndarray

    @classmethod
    def from_mutan(cls, p):
        _, _, t_q, t_v, t_o, R = p.dims
        T = np.zeros((t_q, t_v, t_o))
        for a in range(t_q):
            for b in range(t_v):
                for c in range(t_o):
                    acc = 0.0
                    for r in range(R):
                        acc += p.M[r, a, c] * p.N[r, b, c]
                    T[a, b, c] = acc
        return cls(T)

    def contract(self, qt, vt):
        t_q, t_v, t_o = self.T.shape
        z = np.zeros(t_o)
        for c in range(t_o):
            acc = 0.0
            for a in range(t_q):
                for b in range(t_v):
                    acc += qt[a] * vt[b] * self.T[a, b, c]
            z[c] = acc
        return z


def _check_last(x, n, what):
    if x.ndim == 0 or x.shape[-1] != n:
        raise DimensionError(f"{what}: shape {x.shape} does not end in {n}")


def fuse_elementwise(q, v):
    return hadamard(q, v)


def _signed_sqrt_l2(x):
    y = np.sign(x) * np.sqrt(np.abs(x))
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    return np.divide(y, norm, out=np.zeros_like(y), where=norm > 0), y, norm


def fuse_mcb(cfg, q, v, mode=None, backend="auto"):
    """Convolve the Count Sketches of ``q`` and ``v``: a sketch of ``q v^T``."""
    q = as_tensor(q)
    v = as_tensor(v)
    _check_last(q, cfg.n, "fuse_mcb q")
    _check_last(v, cfg.n, "fuse_mcb v")
    mode = resolve_mode(mode or cfg.mode, cfg.d)
    sq = apply_sketch(cfg.spec_q, q, backend)
    sv = apply_sketch(cfg.spec_v, v, backend)
    out = circular_convolve(sq, sv, mode, backend)
    if cfg.normalize:
        out = _signed_sqrt_l2(out)[0]
    return out


def _mutan_parts(p, q, v, linear):
    q = as_tensor(q)
    v = as_tensor(v)
    n_q, n_v, *_ = p.dims
    _check_last(q, n_q, "fuse_mutan q")
    _check_last(v, n_v, "fuse_mutan v")
    qt = q @ p.W_q + p.b_q
    vt = v @ p.W_v + p.b_v
    if not linear:
        qt = np.tanh(qt)
        vt = np.tanh(vt)
    P = np.einsum("...a,rac->...rc", qt, p.M)
    Q = np.einsum("...b,rbc->...rc", vt, p.N)
    return q, v, qt, vt, P, Q


def fuse_mutan(p, q, v, linear=False):
    """Latent pair representation ``z = sum_r (q~ M_r) * (v~ N_r)``.

    ``q~ = tanh(q W_q + b_q)``, ``v~ = tanh(v W_v + b_v)``; ``linear=True``
    drops the tanh (used to check bilinearity).
    """
    *_, P, Q = _mutan_parts(p, q, v, linear)
    return (P * Q).sum(axis=-2)


def fuse(kind, params, q, v, **kw):
    kind = FusionKind(kind)
    if kind is FusionKind.ELEMENTWISE:
        return fuse_elementwise(q, v)
    if kind is FusionKind.MCB:
        return fuse_mcb(params, q, v, **kw)
    return fuse_mutan(params, q, v, **kw)


def output_dim(kind, params, n=None):
    kind = FusionKind(kind)
    if kind is FusionKind.ELEMENTWISE:
        return n
    if kind is FusionKind.MCB:
        return params.d
    return params.dims[4]


def _batch_sum(g, ndim):
    # collapse leading batch axes of a per-sample gradient
    return g.reshape(-1, *g.shape[g.ndim - ndim:]).sum(axis=0) if g.ndim > ndim else g


def fusion_vjp(kind, params, q, v, upstream, mode=None, linear=False, backend="auto"):
    """Gradients of ``<upstream, fuse(q, v)>`` w.r.t. ``q``, ``v`` and parameters.

    Returns ``(grad_q, grad_v, grad_params)``; ``grad_params`` is an empty dict
    for the parameter-free fusions and keyed like :meth:`MutanParams.as_dict`
    for MUTAN.
    """
    kind = FusionKind(kind)
    q = as_tensor(q)
    v = as_tensor(v)
    g = as_tensor(upstream)

    if kind is FusionKind.ELEMENTWISE:
        if q.shape != v.shape or g.shape != q.shape:
            raise DimensionError(f"elementwise vjp: q{q.shape} v{v.shape} upstream{g.shape}")
        return g * v, g * q, {}

    if kind is FusionKind.MCB:
        cfg = params
        _check_last(q, cfg.n, "mcb vjp q")
        _check_last(v, cfg.n, "mcb vjp v")
        mode = resolve_mode(mode or cfg.mode, cfg.d)
        sq = apply_sketch(cfg.spec_q, q, backend)
        sv = apply_sketch(cfg.spec_v, v, backend)
        expect = np.broadcast_shapes(sq.shape, sv.shape)
        if g.shape != expect:
            raise DimensionError(f"mcb vjp: upstream shape {g.shape}, forward output shape {expect}")
        if cfg.normalize:
            x = circular_convolve(sq, sv, mode, backend)
            u, y, norm = _signed_sqrt_l2(x)
            safe = np.where(norm > 0, norm, 1.0)
            gy = np.where(norm > 0, (g - u * (u * g).sum(axis=-1, keepdims=True)) / safe, 0.0)
            absx = np.abs(x)
            g = np.divide(gy * 0.5, np.sqrt(absx), out=np.zeros_like(gy), where=absx > 0)
        gsq = circular_correlate(g, sv, mode, backend)
        gsv = circular_correlate(g, sq, mode, backend)
        return (
            apply_sketch_transpose(cfg.spec_q, gsq, backend),
            apply_sketch_transpose(cfg.spec_v, gsv, backend),
            {},
        )

    p = params
    q, v, qt, vt, P, Q = _mutan_parts(p, q, v, linear)
    t_o = p.dims[4]
    if g.shape != P.shape[:-2] + (t_o,):
        raise DimensionError(f"mutan vjp: upstream shape {g.shape}, forward output shape {P.shape[:-2] + (t_o,)}")
    gP = g[..., None, :] * Q
    gQ = g[..., None, :] * P
    qb = qt.reshape(-1, qt.shape[-1])
    vb = vt.reshape(-1, vt.shape[-1])
    gM = np.einsum("na,nrc->rac", qb, gP.reshape(-1, *gP.shape[-2:]))
    gN = np.einsum("nb,nrc->rbc", vb, gQ.reshape(-1, *gQ.shape[-2:]))
    gqt = np.einsum("...rc,rac->...a", gP, p.M)
    gvt = np.einsum("...rc,rbc->...b", gQ, p.N)
    if not linear:
        gqt = gqt * (1.0 - qt * qt)
        gvt = gvt * (1.0 - vt * vt)
    grads = {
        "W_q": q.reshape(-1, q.shape[-1]).T @ gqt.reshape(-1, gqt.shape[-1]),
        "b_q": _batch_sum(gqt, 1),
        "W_v": v.reshape(-1, v.shape[-1]).T @ gvt.reshape(-1, gvt.shape[-1]),
        "b_v": _batch_sum(gvt, 1),
        "M": gM,
        "N": gN,
    }
    return gqt @ p.W_q.T, gvt @ p.W_v.T, grads

"""Central finite-difference checks of the fusion backward passes."""

import numpy as np

from .fusion import FusionKind, fuse, fusion_vjp, init_mutan, make_mcb_config
from .numtensor import Rng

STEP = 1e-6
TOLERANCE = 1e-5


def numerical_grad(f, x, step=STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_error(analytic, numeric):
    """Max absolute difference scaled by the larger of the two max magnitudes."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    diff = np.abs(analytic - numeric).max(initial=0.0)
    if scale == 0.0:
        return diff
    return diff / scale


def random_instance(kind, seed):
    """Small random fusion problem: ``(params, q, v, upstream)``."""
    kind = FusionKind(kind)
    rng = Rng(seed)

    def dim(lo, hi):
        return int(rng.uniform_index(1, hi - lo + 1)[0]) + lo - 1

    if kind is FusionKind.ELEMENTWISE:
        n = dim(1, 8)
        return None, rng.gaussian(n), rng.gaussian(n), rng.gaussian(n)
    if kind is FusionKind.MCB:
        n, d = dim(1, 6), dim(1, 8)
        cfg = make_mcb_config(n, d, int(rng.words(1)[0] >> np.uint64(1)))
        return cfg, rng.gaussian(n), rng.gaussian(n), rng.gaussian(d)
    n_q, n_v, t_q, t_v, t_o, R = (dim(1, 4) for _ in range(6))
    p = init_mutan(rng, n_q, n_v, t_q, t_v, t_o, min(R, 3))
    p.b_q[:] = rng.gaussian(t_q, 0.5)
    p.b_v[:] = rng.gaussian(t_v, 0.5)
    return p, rng.gaussian(n_q), rng.gaussian(n_v), rng.gaussian(t_o)


def check_instance(kind, seed, mode=None):
    """Max relative error over q, v and every parameter for one random instance."""
    kind = FusionKind(kind)
    params, q, v, g = random_instance(kind, seed)
    kw = {"mode": mode} if kind is FusionKind.MCB and mode else {}

    def objective():
        return float(np.dot(g, fuse(kind, params, q, v, **kw)))

    gq, gv, gp = fusion_vjp(kind, params, q, v, g, **kw)
    pairs = [(gq, numerical_grad(objective, q)), (gv, numerical_grad(objective, v))]
    if kind is FusionKind.MUTAN:
        for name, arr in params.as_dict().items():
            pairs.append((gp[name], numerical_grad(objective, arr)))
    errs = []
    for a, n in pairs:
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
            return float("nan")
        errs.append(rel_error(a, n))
    return max(errs)


def trial_seeds(seed, trials):
    return [int(w) for w in Rng(seed).words(trials) >> np.uint64(1)]


def run_gradcheck(kind, trials, seed):
    """Return ``(max_error, worst_seed, first_nonfinite_seed_or_None)``."""
    worst, worst_seed = 0.0, None
    for ts in trial_seeds(seed, trials):
        modes = ("direct", "frequency") if FusionKind(kind) is FusionKind.MCB else (None,)
        for mode in modes:
            err = check_instance(kind, ts, mode)
            if not np.isfinite(err):
                return err, ts, ts
            if worst_seed is None or err > worst:
                worst, worst_seed = err, ts
    return worst, worst_seed, None

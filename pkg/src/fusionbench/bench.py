"""Forward-pass timing for the three fusions."""

import time

import numpy as np

from .fusion import fuse_elementwise, fuse_mcb, fuse_mutan, init_mutan, make_mcb_config
from .numtensor import Rng

HEADER = ("fusion", "dim", "mode", "ns_per_call")
AGREEMENT = 1e-9


def median_ns(fn, iters):
    """Median wall time per call (monotonic clock) after one warm-up call."""
    fn()
    samples = np.empty(iters, dtype=np.int64)
    for i in range(iters):
        t0 = time.perf_counter_ns()
        fn()
        samples[i] = time.perf_counter_ns() - t0
    return int(np.median(samples))


class KernelMismatch(RuntimeError):
    pass


def mcb_modes_agree(cfg, q, v, backend="auto"):
    direct = fuse_mcb(cfg, q, v, mode="direct", backend=backend)
    freq = fuse_mcb(cfg, q, v, mode="frequency", backend=backend)
    scale = max(np.abs(direct).max(), 1e-300)
    return float(np.abs(direct - freq).max() / scale)


def bench_rows(fusions, dims, iters, seed=0, mcb_n=1200, backend="auto",
               mutan_dims=(310, 310, 360, 13)):
    rng = Rng(seed)
    rows = []
    for kind in fusions:
        for dim in dims:
            if kind == "elementwise":
                q, v = rng.gaussian(dim), rng.gaussian(dim)
                rows.append((kind, dim, "hadamard", median_ns(lambda: fuse_elementwise(q, v), iters)))
            elif kind == "mcb":
                cfg = make_mcb_config(mcb_n, dim, seed)
                q, v = rng.gaussian(mcb_n), rng.gaussian(mcb_n)
                err = mcb_modes_agree(cfg, q, v, backend)
                if not err <= AGREEMENT:
                    raise KernelMismatch(f"mcb d={dim}: direct and frequency differ by {err:.3e}")
                for mode in ("direct", "frequency"):
                    ns = median_ns(lambda: fuse_mcb(cfg, q, v, mode=mode, backend=backend), iters)
                    rows.append((kind, dim, mode, ns))
            elif kind == "mutan":
                t_q, t_v, t_o, R = mutan_dims
                p = init_mutan(rng, dim, dim, t_q, t_v, t_o, R)
                q, v = rng.gaussian(dim), rng.gaussian(dim)
                rows.append((kind, dim, "decomposed", median_ns(lambda: fuse_mutan(p, q, v), iters)))
            else:
                raise ValueError(f"unknown fusion {kind!r}")
    return rows

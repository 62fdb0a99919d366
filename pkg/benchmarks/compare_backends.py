"""Time the compiled kernels against the numpy fallback.

    python benchmarks/compare_backends.py [--quick] [--iters N] [--out FILE]

Writes CSV ``kernel,size,backend,ns_per_call,speedup`` where ``speedup`` is
python time / compiled time (1.0 on the python rows). Outputs of the two
backends are compared before anything is timed.
"""

import argparse
import sys

import numpy as np

from fusionbench import _kernels, formats
from fusionbench.bench import median_ns
from fusionbench.numtensor import Rng
from fusionbench.sketch import make_sketch


def cases(quick):
    rng = Rng(0)
    sizes = [(1200, 512)] if quick else [(1200, 1200), (1200, 8000), (2400, 16000)]
    for n, d in sizes:
        spec = make_sketch(n, d, rng)
        x = rng.gaussian(n).reshape(1, n)
        g = rng.gaussian(d).reshape(1, d)
        yield "count_sketch", f"{n}x{d}", lambda k, x=x, spec=spec, d=d: k.count_sketch(x, spec._h0, spec._sf, d)
        yield "count_sketch_t", f"{n}x{d}", lambda k, g=g, spec=spec: k.count_sketch_t(g, spec._h0, spec._sf)
    for d in ([64] if quick else [64, 512, 2048]):
        a = rng.gaussian(d).reshape(1, d)
        b = rng.gaussian(d).reshape(1, d)
        yield "circconv", str(d), lambda k, a=a, b=b: k.circconv(a, b)
        yield "circcorr", str(d), lambda k, a=a, b=b: k.circcorr(a, b)
    for n in ([10_000] if quick else [10_000, 1_000_000]):
        yield "splitmix_block", str(n), lambda k, n=n: k.splitmix_block(0x1234, 0, n)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small sizes only")
    ap.add_argument("--iters", type=int, default=20)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for kernel, size, fn in cases(args.quick):
        ref = fn(_kernels.compiled)
        alt = fn(_kernels.python)
        scale = max(float(np.abs(ref).max()), 1e-300) if ref.dtype.kind == "f" else 1.0
        if ref.dtype.kind == "f":
            ok = np.abs(ref - alt).max() / scale <= 1e-12
        else:
            ok = np.array_equal(ref, alt)
        if not ok:
            print(f"{kernel} {size}: backends disagree", file=sys.stderr)
            return 1
        t_c = median_ns(lambda: fn(_kernels.compiled), args.iters)
        t_p = median_ns(lambda: fn(_kernels.python), args.iters)
        rows.append((kernel, size, "compiled", t_c, round(t_p / max(t_c, 1), 2)))
        rows.append((kernel, size, "python", t_p, 1.0))
    text = formats.csv_text(("kernel", "size", "backend", "ns_per_call", "speedup"), rows)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

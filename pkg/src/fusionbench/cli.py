"""``fusionbench`` command line.

Exit codes: 0 success, 1 property/divergence failure, 2 usage or config error.
"""

import argparse
import sys
from pathlib import Path


from . import __version__, formats
from .bench import HEADER as BENCH_HEADER, KernelMismatch, bench_rows
from .config import MODEL_SEED_OFFSET, bundled_config, load_config, resolve_seed
from .errors import DivergenceError, FusionBenchError, ParameterError
from .gradcheck import TOLERANCE, check_instance, run_gradcheck
from .numtensor import Rng
from .synth import elementwise_floor, gen_task, train
from .vqahead import build_model, count_params, load_model, save_model

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TABLES = {
    "lr": ["lr-baseline.cfg", "lr-mcb-8000.cfg", "lr-mutan.cfg"],
    "hr": ["hr-baseline.cfg", "hr-mcb-8000.cfg", "hr-mutan.cfg"],
    "ablation": ["ablation.cfg"],
}
SUMMARY_HEADER = ("config", "head", "fusion", "fusion_dim", "total")
FUSIONS = ("elementwise", "mcb", "mutan")


class UsageError(Exception):
    pass


def _err(msg):
    print(f"fusionbench: {msg}", file=sys.stderr)


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _dims(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("dims must be positive integers")
    return vals


def _summary_rows(cfg, strict):
    rows = []
    for head, spec in cfg.model_specs():
        rows.append((cfg.name, head, spec.fusion.value, spec.fusion_out, count_params(spec, strict).total))
    return rows


def cmd_params(args):
    if args.table:
        rows = []
        for name in TABLES[args.table]:
            rows += _summary_rows(load_config(bundled_config(name)), args.strict)
        sys.stdout.write(formats.csv_text(SUMMARY_HEADER, rows))
        return EXIT_OK
    if args.config is None:
        raise UsageError("params needs a config file or --table")
    cfg = load_config(args.config)
    specs = cfg.model_specs()
    if len(specs) == 1:
        sys.stdout.write(count_params(specs[0][1], args.strict).to_csv())
    else:
        sys.stdout.write(formats.csv_text(SUMMARY_HEADER, _summary_rows(cfg, args.strict)))
    return EXIT_OK


def cmd_gradcheck(args):
    kinds = FUSIONS if args.fusion == "all" else (args.fusion,)
    if args.replay is not None:
        status = EXIT_OK
        for kind in kinds:
            err = check_instance(kind, args.replay)
            print(f"{kind},replay={args.replay},max_rel_error={err:.3e}")
            if not err < TOLERANCE:
                status = EXIT_FAIL
        return status
    seed = resolve_seed(0, args.seed)
    print("fusion,trials,max_rel_error,worst_seed")
    status = EXIT_OK
    for kind in kinds:
        err, worst, nonfinite = run_gradcheck(kind, args.trials, seed)
        if nonfinite is not None:
            _err(f"{kind}: non-finite gradient; replay with: gradcheck --fusion {kind} --replay {nonfinite}")
            return EXIT_FAIL
        print(f"{kind},{args.trials},{err:.3e},{worst}")
        if not err < TOLERANCE:
            _err(f"{kind}: max relative error {err:.3e} >= {TOLERANCE:g}; replay with --replay {worst}")
            status = EXIT_FAIL
    return status


def cmd_bench(args):
    kinds = FUSIONS if args.fusion == "all" else (args.fusion,)
    seed = resolve_seed(0, args.seed)
    try:
        rows = bench_rows(kinds, args.dims, args.iters, seed=seed, mcb_n=args.mcb_n, backend=args.backend)
    except KernelMismatch as exc:
        _err(f"refusing to time an incorrect kernel: {exc}")
        return EXIT_FAIL
    text = formats.csv_text(BENCH_HEADER, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args):
    cfg = load_config(args.config, seed=args.seed)
    if cfg.task is None or cfg.train is None:
        raise UsageError(f"{args.config}: synth needs [task] and [train] sections")
    outdir = Path(args.output or cfg.output or f"runs/{cfg.name}")
    heads = cfg.model_specs()
    targets = [outdir / "summary.csv"]
    for name, _ in heads:
        targets += [outdir / f"{name}.report.csv", outdir / f"{name}.confusion.csv"]
    existing = [str(t) for t in targets if t.exists()]
    if existing and not args.force:
        raise UsageError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    outdir.mkdir(parents=True, exist_ok=True)

    data = gen_task(cfg.task)
    try:
        floor = elementwise_floor(data.train)
    except ParameterError:
        floor = None
        if cfg.check.get("above_floor"):
            raise UsageError(f"{args.config}: [check] above_floor needs n_q == n_v") from None
    recorded = cfg.check.get("floor")
    if recorded is not None and floor is not None and abs(floor - recorded) > 1e-9 * max(1.0, abs(recorded)):
        _err(f"recomputed element-wise floor {floor!r} differs from the recorded {recorded!r}")
        return EXIT_FAIL
    summary = []
    status = EXIT_OK
    for name, spec in heads:
        model = build_model(spec, Rng(cfg.seed + MODEL_SEED_OFFSET))
        try:
            report = train(model, data, cfg.train)
        except DivergenceError as exc:
            _err(f"{name}: training diverged at epoch {exc.epoch}")
            return EXIT_FAIL
        (outdir / f"{name}.report.csv").write_text(report.to_csv())
        (outdir / f"{name}.confusion.csv").write_text(report.confusion_csv())
        losses = [h[1] for h in report.history]
        last = report.history[-1]
        summary.append((name, spec.fusion.value, count_params(spec).total, last[1], min(losses), last[2], last[4],
                        "none" if floor is None else floor))
        print(f"{name}: final train loss {last[1]:.4g}, min {min(losses):.4g}, test acc {last[4]:.3f} "
              f"({report.wall_time:.1f}s)")
        if name in cfg.check.get("converge", ()) and not last[1] < cfg.check.get("converge_tol", 1e-2):
            _err(f"{name}: final train loss {last[1]:.4g} not below {cfg.check.get('converge_tol', 1e-2):g}")
            status = EXIT_FAIL
        if name in cfg.check.get("above_floor", ()) and min(losses) < floor:
            _err(f"{name}: train loss {min(losses):.6g} dropped below the element-wise floor {floor:.6g}")
            status = EXIT_FAIL
    formats.write_csv(outdir / "summary.csv",
                      ("head", "fusion", "params", "final_train_loss", "min_train_loss", "final_train_acc",
                       "final_test_acc", "elementwise_floor"), summary)
    if floor is not None:
        print(f"element-wise floor {floor:.6f}")
    print(f"reports in {outdir}")
    return status


def cmd_init(args):
    cfg = load_config(args.config, seed=args.seed)
    heads = cfg.model_specs()
    if len(heads) != 1:
        raise UsageError(f"{args.config}: init needs exactly one head, found {len(heads)}")
    out = Path(args.out)
    if out.exists() and not args.force:
        raise UsageError(f"refusing to overwrite {out} (use --force)")
    save_model(build_model(heads[0][1], Rng(cfg.seed + MODEL_SEED_OFFSET)), out)
    return EXIT_OK


def cmd_inspect(args):
    params = load_model(args.checkpoint)
    bd = count_params(params.spec)
    if bd.total != params.num_scalars():
        _err(f"scalar count {params.num_scalars()} disagrees with accountant total {bd.total}")
        return EXIT_FAIL
    sys.stdout.write(bd.to_csv())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="fusionbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="learned-parameter accounting as CSV")
    sp.add_argument("config", nargs="?")
    sp.add_argument("--table", choices=sorted(TABLES))
    sp.add_argument("--strict", action="store_true", help="leave MUTAN projection biases out")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("gradcheck", help="analytic VJP vs central finite differences")
    sp.add_argument("--fusion", choices=(*FUSIONS, "all"), default="all")
    sp.add_argument("--trials", type=_positive_int, default=100)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replay", type=int, help="re-run a single instance by its trial seed")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("bench", help="median forward time per call as CSV")
    sp.add_argument("--fusion", choices=(*FUSIONS, "all"), default="all")
    sp.add_argument("--dims", type=_dims, default=[1200])
    sp.add_argument("--iters", type=_positive_int, default=1000)
    sp.add_argument("--mcb-n", type=_positive_int, default=1200, help="MCB input width; --dims sets d")
    sp.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("synth", help="train heads on a synthetic bilinear task")
    sp.add_argument("config")
    sp.add_argument("--output")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("init", help="build a head from a config and write a checkpoint")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("inspect", help="load a checkpoint and print its parameter breakdown")
    sp.add_argument("checkpoint")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FusionBenchError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

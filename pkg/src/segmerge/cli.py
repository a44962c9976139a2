"""Command-line driver: ``segmerge {fit,predict,gen,bench}``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

from .baseline import cart_fit
from .bench import COLUMNS, BenchSpec, run_trials, summarize
from .evaluate import empirical_risk
from .grid import build_grid, build_tree
from .merge import MergeConfig, default_stop_count, estimate_sigma, greedy_merge
from .model import DatasetError, Kernel, NoiseSpec, read_csv, read_features_csv, write_csv
from .persist import ModelFormatError, load_model, save_model
from .synth import gen_synthetic

EXIT_USAGE = 1
EXIT_DATA = 2


def fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _sigma(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma must be a number or 'auto', got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("sigma must be non-negative")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segmerge", description="Multidimensional segmented regression by greedy merging.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a model to a CSV dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--d-prime", type=_positive, required=True, help="number of leading partition coordinates")
    f.add_argument("--kernel", choices=Kernel.KINDS, default="affine")
    f.add_argument("--sigma", type=_sigma, help="noise scale, or 'auto' for the heuristic estimate")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--stop", type=_positive, help="sibling groups kept unmerged per round")
    g.add_argument("--k", type=_positive, help="piece count; sets stop to k*ceil(log2 n)^d'")
    f.add_argument("--method", choices=("merging", "cart"), default="merging")
    f.add_argument("--max-leaves", type=_positive, help="leaf budget for --method cart")
    f.add_argument("--out", required=True)

    pr = sub.add_parser("predict", help="predict with a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", help="output CSV (default: stdout)")

    gn = sub.add_parser("gen", help="write a synthetic dataset")
    gn.add_argument("--n", type=_positive, required=True)
    gn.add_argument("--d", type=_positive, default=10)
    gn.add_argument("--d-prime", type=_positive, default=2)
    gn.add_argument("--k", type=_positive, default=16)
    gn.add_argument("--noise", choices=NoiseSpec.KINDS, default="gaussian")
    gn.add_argument("--variance", type=float, default=1.0)
    gn.add_argument("--affine", action="store_true", help="affine truth per cell instead of constants")
    gn.add_argument("--seed", type=int, default=0)
    gn.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="synthetic MSE sweep (CSV output)")
    b.add_argument("--n-list", type=_int_list, default=(96, 250, 500, 1000, 2000, 4000, 8000))
    b.add_argument("--trials", type=_positive, default=20)
    b.add_argument("--k", type=_positive, default=16)
    b.add_argument("--d", type=_positive, default=10)
    b.add_argument("--d-prime", type=_positive, default=2)
    b.add_argument("--sigma", type=float, default=1.0)
    b.add_argument("--stop-list", type=_int_list, default=(16, 8, 4, 2))
    b.add_argument("--baseline-leaves-list", type=_int_list, default=(16, 24))
    b.add_argument("--noise", choices=NoiseSpec.KINDS, default="gaussian")
    b.add_argument("--variance", type=float, default=1.0)
    b.add_argument("--kernel", choices=Kernel.KINDS, default="constant")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=_positive, default=None, help="parallel workers (default: $SEGMERGE_JOBS or 1)")
    b.add_argument("--out", help="output CSV (default: stdout)")
    return p


def cmd_fit(args, parser) -> int:
    data = read_csv(args.data, args.d_prime)
    t0 = time.perf_counter()
    if args.method == "cart":
        if args.max_leaves is None:
            parser.error("--method cart requires --max-leaves")
        model = cart_fit(data, args.max_leaves)
    else:
        if args.sigma is None:
            parser.error("--sigma is required for merging")
        if args.stop is None and args.k is None:
            parser.error("one of --stop or --k is required")
        kernel = Kernel(args.kernel)
        tree = build_tree(build_grid(data), data)
        sigma = estimate_sigma(tree, data, kernel) if args.sigma == "auto" else args.sigma
        stop = args.stop if args.stop is not None else default_stop_count(args.k, data.n, data.d_prime)
        model = greedy_merge(tree, data, MergeConfig(sigma, stop, kernel))
    elapsed = time.perf_counter() - t0
    save_model(model, args.out)
    print(f"pieces: {model.n_pieces}")
    print(f"empirical_risk: {fmt(empirical_risk(model, data))}")
    if args.method == "merging":
        print(f"sigma: {fmt(float(sigma))}")
        print(f"stop: {stop}")
    print(f"wall_time_s: {fmt(elapsed)}")
    return 0


def cmd_predict(args, parser) -> int:
    model = load_model(args.model)
    X = read_features_csv(args.data)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if X.size == 0 and X.shape[1] == 0:
            return 0
        if X.shape[1] != model.d:
            raise DatasetError(f"query has {X.shape[1]} features, model expects {model.d}", line=1)
        w = csv.writer(out)
        w.writerow(["prediction"])
        if X.shape[0]:
            for v in model.predict(X):
                w.writerow([fmt(float(v))])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_gen(args, parser) -> int:
    if args.noise == "none":
        noise = NoiseSpec.none()
    elif args.noise == "uniform":
        noise = NoiseSpec.uniform(args.variance)
    else:
        noise = NoiseSpec.gaussian(args.variance)
    ds = gen_synthetic(args.n, args.d, args.d_prime, args.k, noise, seed=args.seed, affine=args.affine)
    write_csv(ds, args.out)
    return 0


def _jobs(value):
    if value is not None:
        return value
    env = os.environ.get("SEGMERGE_JOBS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ValueError(f"SEGMERGE_JOBS must be an integer, got {env!r}") from None


def cmd_bench(args, parser) -> int:
    spec = BenchSpec(
        n_list=args.n_list,
        trials=args.trials,
        k=args.k,
        d=args.d,
        d_prime=args.d_prime,
        sigma=args.sigma,
        stop_list=args.stop_list,
        baseline_leaves=args.baseline_leaves_list,
        noise=args.noise,
        variance=args.variance if args.noise != "none" else 0.0,
        kernel=args.kernel,
        seed=args.seed,
    )
    rows = summarize(run_trials(spec, jobs=_jobs(args.jobs)))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in COLUMNS])
    finally:
        if args.out:
            out.close()
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "gen": cmd_gen, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except (DatasetError, ModelFormatError) as exc:
        print(f"segmerge: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"segmerge: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"segmerge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

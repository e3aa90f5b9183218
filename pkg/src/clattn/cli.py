"""Command-line interface: bench, fit, verify, and copytask subcommands.

Exit codes: 0 success (or zero violations), 1 verification failures,
2 usage errors, 3 I/O errors.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .bench import CSV_FIELDS, DEFAULT_FULL_CAP, METHODS, fit_slopes, run_bench
from .diagnostics import check_l1_dominance, check_lipschitz_bound, error_summary
from .attention import clustered_attention, full_attention, improved_clustered_attention
from .kmeans import cluster_queries
from .tasks import generate_masked_copy, make_gaussian_qkv
from .tensorfile import TensorFileError, load_tensor

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}") from exc


def _method_list(text: str):
    methods = [part for part in text.split(",") if part]
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(
                f"unknown method {m!r}; choose from {', '.join(METHODS)}"
            )
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clattn",
        description="Clustered-attention kernels: benchmarks, verification, fixtures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="time attention kernels over sequence lengths")
    p.add_argument("--method", type=_method_list, required=True,
                   help="comma-separated subset of: " + ",".join(METHODS))
    p.add_argument("--seq-lens", type=_int_list, required=True)
    p.add_argument("--clusters", type=int, default=100)
    p.add_argument("--topk", type=int, default=32)
    p.add_argument("--bits", type=int, default=63)
    p.add_argument("--lloyd", type=int, default=10)
    p.add_argument("--dk", type=int, default=64)
    p.add_argument("--dv", type=int, default=64)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0,
                   help="BLAS thread cap for timed kernels (0 = library default)")
    p.add_argument("--max-full-n", type=int, default=DEFAULT_FULL_CAP,
                   help="skip quadratic methods above this length")
    p.add_argument("--no-memory", action="store_true",
                   help="skip the tracemalloc memory pass")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", help="fit log-log complexity slopes from bench CSV")
    p.add_argument("csv_path", help="bench CSV file, or - for stdin")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="check the approximation bounds, emit JSON")
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seq-len", type=int, default=128)
    p.add_argument("--clusters", type=int, default=16)
    p.add_argument("--topk", type=int, default=32)
    p.add_argument("--dk", type=int, default=32)
    p.add_argument("--dv", type=int, default=32)
    p.add_argument("--bits", type=int, default=63)
    p.add_argument("--lloyd", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qkv", nargs=3, metavar=("Q", "K", "V"), default=None,
                   help="verify one instance loaded from three tensor files")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("copytask", help="emit masked-copy instances as CSV")
    p.add_argument("--length", type=int, default=31)
    p.add_argument("--symbols", type=int, default=10)
    p.add_argument("--mask-rate", type=float, default=0.2)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_copytask)

    return parser


def cmd_bench(args) -> int:
    if any(n < 1 for n in args.seq_lens):
        print("seq lengths must be positive", file=sys.stderr)
        return EXIT_USAGE
    threads = args.threads if args.threads > 0 else None
    with threadpool_limits(limits=threads):
        records = run_bench(
            methods=args.method,
            seq_lens=args.seq_lens,
            dk=args.dk,
            dv=args.dv,
            clusters=args.clusters,
            topk=args.topk,
            bits=args.bits,
            lloyd_iters=args.lloyd,
            repeats=args.repeats,
            warmup=args.warmup,
            seed=args.seed,
            full_cap=args.max_full_n,
            measure_memory=not args.no_memory,
        )
    print(f"# batch=1 threads={args.threads if args.threads > 0 else 'default'}")
    print(",".join(CSV_FIELDS))
    for rec in records:
        print(rec.to_csv_row())
    return EXIT_OK


def read_bench_csv(stream) -> list:
    rows = [line for line in stream if line.strip() and not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(rows))))


def cmd_fit(args) -> int:
    try:
        if args.csv_path == "-":
            rows = read_bench_csv(sys.stdin)
        else:
            with open(args.csv_path) as f:
                rows = read_bench_csv(f)
    except OSError as exc:
        print(f"cannot read {args.csv_path}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        fits = fit_slopes(rows)
    except (ValueError, KeyError) as exc:
        print(f"bad bench data: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("method,slope,residual,points")
    for method in sorted(fits):
        fit = fits[method]
        print(f"{method},{fit.slope:.4f},{fit.residual:.4f},{fit.points}")
    return EXIT_OK


def _verify_instance(q, k, v, clusters, topk, bits, lloyd, seed):
    clustering = cluster_queries(q, clusters, bits, lloyd, seed)
    drift = check_lipschitz_bound(q, k, clustering, scaled=False)
    dom = check_l1_dominance(q, k, clustering, topk)
    oracle = full_attention(q, k, v)
    clustered = clustered_attention(q, k, v, clustering)
    improved = improved_clustered_attention(q, k, v, clustering, topk)
    return {
        "lipschitz_violations": len(drift.violations),
        "lipschitz_max_slack": drift.max_slack(),
        "dominance_violations": len(dom.violations),
        "dominance_max_slack": dom.max_slack(),
        "clustered": error_summary(clustered, oracle).to_dict(),
        "improved": error_summary(improved, oracle).to_dict(),
    }


def cmd_verify(args) -> int:
    instances = []
    if args.qkv is not None:
        try:
            q, k, v = (load_tensor(path) for path in args.qkv)
        except OSError as exc:
            print(f"cannot read tensor file: {exc}", file=sys.stderr)
            return EXIT_IO
        except TensorFileError as exc:
            print(f"bad tensor file: {exc}", file=sys.stderr)
            return EXIT_IO
        instances.append((args.seed, (q, k, v)))
    else:
        seeds = np.random.SeedSequence(args.seed).generate_state(args.instances)
        for s in seeds:
            instances.append(
                (
                    int(s),
                    make_gaussian_qkv(
                        args.seq_len, args.dk, args.dv,
                        num_modes=4, spread=1.0, seed=int(s),
                    ),
                )
            )

    per_instance = []
    try:
        for s, (q, k, v) in instances:
            clusters = min(args.clusters, q.shape[0])
            topk = min(args.topk, k.shape[0])
            result = _verify_instance(q, k, v, clusters, topk, args.bits, args.lloyd, s)
            result["seed"] = s
            per_instance.append(result)
    except ValueError as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = {
        "instances": len(per_instance),
        "lipschitz_violations": sum(r["lipschitz_violations"] for r in per_instance),
        "dominance_violations": sum(r["dominance_violations"] for r in per_instance),
        "lipschitz_max_slack": max(r["lipschitz_max_slack"] for r in per_instance),
        "dominance_max_slack": max(r["dominance_max_slack"] for r in per_instance),
        "clustered_mean_l1": float(
            np.mean([r["clustered"]["mean_l1"] for r in per_instance])
        ),
        "clustered_max_l1": max(r["clustered"]["max_l1"] for r in per_instance),
        "improved_mean_l1": float(
            np.mean([r["improved"]["mean_l1"] for r in per_instance])
        ),
        "improved_max_l1": max(r["improved"]["max_l1"] for r in per_instance),
        "per_instance": per_instance,
    }
    print(json.dumps(report, indent=2))
    violations = report["lipschitz_violations"] + report["dominance_violations"]
    return EXIT_OK if violations == 0 else EXIT_VIOLATIONS


def cmd_copytask(args) -> int:
    try:
        for i in range(args.count):
            inst = generate_masked_copy(
                args.length, args.symbols, args.mask_rate, seed=args.seed + i
            )
            print(",".join(str(t) for t in inst.input_tokens))
            print(",".join(str(t) for t in inst.target_tokens))
    except ValueError as exc:
        print(f"bad copytask parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

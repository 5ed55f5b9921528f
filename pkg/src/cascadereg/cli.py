"""Command-line front end.

Subcommands: register (align two cloud files), synth (emit a corrupted
evaluation pair), bench (CSV timing/op-count table), selftest (hot-spot
checks). Exit codes: 0 success, 1 runtime failure, 2 bad flags.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from . import bench, io_synth, pipeline
from .geometry import metrics
from .network import init_random


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _nonnegative(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _sinkhorn_policy(text: str) -> tuple[str, int]:
    policy, _, count = text.partition(":")
    if policy not in ("fixed", "adaptive") or not count:
        raise argparse.ArgumentTypeError(
            f"expected fixed:N or adaptive:N, got {text!r}"
        )
    try:
        n = int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad pass count in {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"pass count must be >= 1, got {n}")
    return policy, n


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"need positive integers, got {text!r}")
    return values


def _mode_list(text: str) -> list[str]:
    modes = [t for t in text.split(",") if t]
    bad = [m for m in modes if m not in pipeline.MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"unknown modes {bad} in {text!r}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadereg",
        description="Iterative point-cloud registration with cascaded features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="align --src onto --ref")
    reg.add_argument("--src", required=True, help="source cloud (.xyz/.ply)")
    reg.add_argument("--ref", required=True, help="reference cloud (.xyz/.ply)")
    reg.add_argument("--mode", required=True, choices=pipeline.MODES)
    reg.add_argument("--weights", help="NTW weight file (baseline/cascade)")
    reg.add_argument("--iters", type=_positive_int, default=5)
    reg.add_argument("--k", type=_positive_int, default=64)
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--out", help="write the 12-number transform here")
    reg.add_argument(
        "--sinkhorn", type=_sinkhorn_policy, default=("adaptive", 10),
        metavar="fixed:N|adaptive:N",
    )
    reg.add_argument("--no-slack", action="store_true")
    reg.add_argument("--gt", help="ground-truth transform file; prints metrics")
    reg.add_argument("--threads", type=int, default=0, help="0 = all cores")

    syn = sub.add_parser("synth", help="emit a corrupted src/ref pair")
    syn.add_argument("--shape", default="helix", choices=sorted(io_synth._SHAPES))
    syn.add_argument("--n", type=_positive_int, default=1024)
    syn.add_argument("--keep", type=_fraction, default=0.7)
    syn.add_argument("--noise", type=_nonnegative, default=0.0)
    syn.add_argument("--max-rot", type=_nonnegative, default=45.0)
    syn.add_argument("--max-trans", type=_nonnegative, default=0.5)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out-prefix", required=True)

    ben = sub.add_parser("bench", help="CSV timing and op-count table")
    ben.add_argument("--sizes", type=_int_list, default=[256, 1024])
    ben.add_argument("--modes", type=_mode_list, default=["baseline", "cascade"])
    ben.add_argument("--repeat", type=_positive_int, default=5)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--k", type=_positive_int, default=64)
    ben.add_argument("--iters", type=_positive_int, default=5)
    ben.add_argument("--threads", type=int, default=0, help="0 = all cores")

    sub.add_parser("selftest", help="run the built-in consistency suites")
    return parser


def _failing_module(exc: BaseException) -> str:
    """Deepest package module on the traceback, for error attribution."""
    module = "cascadereg"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("cascadereg"):
            module = name
    return module


def _cmd_register(args) -> int:
    src = io_synth.read_cloud(args.src)
    ref = io_synth.read_cloud(args.ref)
    if args.mode == "handcrafted":
        weights = None
    elif args.weights:
        weights = io_synth.load_weights(args.weights)
    else:
        print(
            f"warning: no --weights given; synthesizing random weights "
            f"(seed {args.seed})",
            file=sys.stderr,
        )
        weights = init_random(args.seed, args.iters)
    policy, passes = args.sinkhorn
    cfg = pipeline.RegistrationConfig(
        mode=args.mode,
        l_iters=args.iters,
        k=args.k,
        slack=not args.no_slack,
        sinkhorn_policy=policy,
        sinkhorn_l=passes,
        seed=args.seed,
    )
    with bench._thread_limit(args.threads):
        result = pipeline.register(src, ref, cfg, weights)

    last = result.iterations[-1]
    print(f"mode {args.mode}: {len(src)} -> {len(ref)} points, {cfg.l_iters} iterations")
    print(
        f"final residual {last.residual:.6g}, mean weight {last.mean_weight:.4f}, "
        f"total {result.t_total_ms:.1f} ms"
    )
    report = None
    if args.gt:
        t_gt = io_synth.read_transform(args.gt)
        report = metrics(result.transform, t_gt, src)
        print(f"RE {report.re_deg:.4f} deg, TE {report.te:.6g}, CD {report.cd:.6g}")
    if args.out:
        io_synth.write_transform(result.transform, args.out)
        if report is not None:
            with open(args.out, "a", encoding="ascii") as fh:
                fh.write(f"# RE_deg {report.re_deg:.17g}\n")
                fh.write(f"# TE {report.te:.17g}\n")
                fh.write(f"# CD {report.cd:.17g}\n")
    return 0


def _cmd_synth(args) -> int:
    base = io_synth.make_base_shape(args.shape, args.n, seed=args.seed)
    cfg = io_synth.SynthConfig(
        n_points=args.n,
        keep_fraction=args.keep,
        noise_sigma=args.noise,
        max_rot_deg=args.max_rot,
        max_trans=args.max_trans,
        seed=args.seed,
    )
    src, ref, t_gt = io_synth.synth_pair(cfg, base)
    io_synth.write_cloud(src, f"{args.out_prefix}_src.xyz")
    io_synth.write_cloud(ref, f"{args.out_prefix}_ref.xyz")
    io_synth.write_transform(t_gt, f"{args.out_prefix}_gt.txt")
    print(
        f"wrote {args.out_prefix}_src.xyz ({len(src)} pts), "
        f"{args.out_prefix}_ref.xyz ({len(ref)} pts), {args.out_prefix}_gt.txt"
    )
    return 0


def _cmd_bench(args) -> int:
    records = bench.run_bench(
        sizes=args.sizes,
        modes=args.modes,
        repeat=args.repeat,
        seed=args.seed,
        k=args.k,
        l_iters=args.iters,
        threads=args.threads,
    )
    print(bench.CSV_HEADER)
    for record in records:
        print(record.csv_row())
    for line in bench.summarize(records):
        print(line)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "register":
            return _cmd_register(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return 0 if bench.run_selftest() else 1
    except BrokenPipeError:
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI error boundary
        print(f"error ({_failing_module(exc)}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

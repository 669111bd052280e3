"""Command-line interface: ``polarmm <command> ...``.

Every CSV artifact starts with one ``# {config json}`` line followed by a
header row and 17-digit numeric fields. The thread count never enters the
config, so outputs are byte-identical across ``--threads`` settings.

Exit codes: 0 success, 1 failed property check, 2 usage error, 3 data
error, 4 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from pathlib import Path

from .analysis import check_all
from .channels import (
    Bdmc,
    ChannelError,
    ChannelPair,
    channel_to_dict,
    check_common_symmetry,
    is_symmetric,
    load_channel,
    load_pair,
    mismatched_info,
    pair_from_dict,
    pe_single_use,
    standard_channel,
    symmetric_capacity,
    validate,
)
from .codec import DecodeInputError, MetricTable, PolarCode, simulate_frames
from .compound import ChannelFamily, compound_run, fmt
from .construct import InformationSet, construct_exact, construct_mc
from .polarize import CapacityExceededError, MergePolicy, evolve_all

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CAPACITY = 4

_SHORTHAND = re.compile(r"^(bsc|bec):([0-9.eE+-]+)$", re.IGNORECASE)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers ---------------------------------------------------------------------------


def channel_arg(text: str) -> Bdmc:
    """A channel file path, or the shorthand ``bsc:P`` / ``bec:E``."""
    m = _SHORTHAND.match(text.strip())
    if m:
        return standard_channel(m.group(1), float(m.group(2)))
    if not Path(text).exists():
        raise ChannelError(f"channel file {text!r} not found")
    return load_channel(text)


def _required(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _pair_from_args(args) -> ChannelPair:
    if args.pair:
        return load_pair(args.pair)
    if not args.w:
        raise UsageError("give --pair or --w (and optionally --v)")
    w = channel_arg(args.w)
    v = channel_arg(args.v) if args.v else w
    return ChannelPair(w, v)


def _policy(args) -> MergePolicy:
    if args.exact:
        return MergePolicy.exact(args.merge_limit or (1 << 20))
    return MergePolicy("quantized", args.merge_limit or 65536, 1 << args.grid_bits)


def _header(config: dict) -> str:
    return "# " + json.dumps(config, sort_keys=True) + "\n"


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_policy_flags(p):
    p.add_argument("--merge-limit", type=int, default=None, help="maximum atoms per density")
    p.add_argument("--grid-bits", type=int, default=12, help="quantization grid has 2**bits bins per axis")
    p.add_argument("--exact", action="store_true", help="exact merging only; fail above the limit")


def _add_pair_flags(p, pair=True):
    p.add_argument("--w", help="true channel: JSON file or bsc:P / bec:E")
    p.add_argument("--v", help="metric channel (default: same as --w)")
    if pair:
        p.add_argument("--pair", help="pair JSON file with 'w' and 'v' per output")


# -- commands ----------------------------------------------------------------------------


def cmd_channel_make(args) -> int:
    if (args.bsc is None) == (args.bec is None):
        raise UsageError("give exactly one of --bsc and --bec")
    ch = standard_channel("bsc", args.bsc) if args.bsc is not None else standard_channel("bec", args.bec)
    _emit(json.dumps(channel_to_dict(ch), indent=1) + "\n", args.output)
    return 0


def cmd_channel_inspect(args) -> int:
    data = json.loads(Path(args.file).read_text()) if Path(args.file).exists() else None
    if data is not None and any("v" in o for o in data.get("outputs", [])):
        pair = pair_from_dict(data)
    else:
        w = channel_arg(args.file)
        pair = ChannelPair(w, channel_arg(args.v)) if args.v else None
        if pair is None:
            problems = validate(w)
            lines = [
                f"outputs: {w.size}",
                f"valid: {not problems}",
                f"symmetric: {is_symmetric(w)}",
                f"capacity_bits: {fmt(symmetric_capacity(w))}",
            ]
            print("\n".join(lines + [f"problem: {p}" for p in problems]))
            return 0
    perm = check_common_symmetry(pair)
    lines = [
        f"outputs: {pair.size}",
        f"I_W: {fmt(symmetric_capacity(pair.w))}",
        f"I_V: {fmt(symmetric_capacity(pair.v))}",
        f"I_WV: {fmt(mismatched_info(pair))}",
        f"pe_single_use: {fmt(pe_single_use(pair))}",
        f"common_symmetry: {list(perm) if perm is not None else None}",
    ]
    print("\n".join(lines))
    return 0


def cmd_polarize(args) -> int:
    pair = _pair_from_args(args)
    policy = _policy(args)
    records = evolve_all(pair, args.n, policy, args.threads)
    config = {
        "command": "polarize",
        "w": args.w or args.pair,
        "v": args.v or args.w or args.pair,
        "n": args.n,
        "merge": {"mode": policy.mode, "max_atoms": policy.max_atoms, "grid": policy.grid},
    }
    rows = [(r.index, r.branch, r.I_wv, r.I_w, r.mu, r.atoms) for r in records]
    body = _csv(("index", "branch", "I_wv", "I_w", "mu", "atoms"), rows)
    _emit(_header(config) + body, args.output)
    return 0


def cmd_construct(args) -> int:
    if (args.rate is None) == (args.eps is None):
        raise UsageError("give exactly one of --rate and --eps")
    w = channel_arg(_required(args.w, "--w"))
    v = channel_arg(args.v) if args.v else w
    config = {
        "command": f"construct {args.method}",
        "w": args.w,
        "v": args.v or args.w,
        "n": args.n,
        "rate": args.rate,
        "eps": args.eps,
        "seed": args.seed,
    }
    if args.method == "exact":
        policy = _policy(args)
        config["merge"] = {"mode": policy.mode, "max_atoms": policy.max_atoms, "grid": policy.grid}
        info = construct_exact(ChannelPair(w, v), args.n, policy, eps=args.eps, rate=args.rate, workers=args.threads)
    else:
        config["trials"] = args.trials
        info = construct_mc(w, v, args.n, args.trials, args.seed, eps=args.eps, rate=args.rate, workers=args.threads)
    info.extra["config"] = config
    _emit(json.dumps(info.to_dict(), indent=1) + "\n", args.output)
    if args.code_out:
        info.code().save(args.code_out)
    return 0


def load_code(path: str) -> PolarCode:
    """A code file, or an information-set file (frozen values all zero)."""
    data = json.loads(Path(path).read_text())
    if "frozen_mask" in data:
        return PolarCode.from_dict(data)
    if "indices" in data:
        return InformationSet.from_dict(data).code()
    raise ChannelError(f"{path}: neither a code nor an information-set file")


def cmd_simulate(args) -> int:
    code = load_code(args.code)
    w = channel_arg(_required(args.w, "--w"))
    v = channel_arg(args.v) if args.v else w
    sim = simulate_frames(w, code, MetricTable.from_channel(v), args.frames, args.seed, args.threads, False)
    config = {
        "command": "simulate",
        "code": Path(args.code).name,
        "w": args.w,
        "v": args.v or args.w,
        "frames": args.frames,
        "seed": args.seed,
    }
    body = _csv(("seed", "frames", "fer", "ber", "ci95"), [(args.seed, sim.frames, sim.fer, sim.ber, sim.ci95)])
    _emit(_header(config) + body, args.output)
    return 0


def cmd_compound(args) -> int:
    fam = ChannelFamily.parse(args.family)
    report = compound_run(
        fam,
        args.rate,
        args.n,
        trials=args.trials,
        frames=args.frames,
        seed=args.seed,
        construction=args.construction,
        policy=MergePolicy("quantized", args.merge_limit or 65536, 1 << args.grid_bits),
        workers=args.threads,
    )
    _emit(report.to_csv(), args.output)
    return 0


def cmd_check(args) -> int:
    report = check_all(args.seed, quick=args.quick, which=args.group)
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n")
        print(report.table())
    else:
        print(report.to_json())
        print(report.table(), file=sys.stderr)
    return 0 if report.passed else EXIT_CHECK_FAILED


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polarmm", description="Polar codes under mismatched decoding.")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: POLARMM_THREADS or all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    ch = sub.add_parser("channel", help="make or inspect channel files")
    ch_sub = ch.add_subparsers(dest="action", parser_class=_Parser, required=True)
    make = ch_sub.add_parser("make", help="write a BSC or BEC channel file")
    make.add_argument("--bsc", type=float)
    make.add_argument("--bec", type=float)
    make.add_argument("-o", "--output")
    make.set_defaults(func=cmd_channel_make)
    insp = ch_sub.add_parser("inspect", help="print capacity, symmetry and pair statistics")
    insp.add_argument("file")
    insp.add_argument("--v", help="metric channel to pair with")
    insp.set_defaults(func=cmd_channel_inspect)

    pol = sub.add_parser("polarize", help="per-index profile CSV at level n")
    _add_pair_flags(pol)
    pol.add_argument("-n", type=int, required=True)
    _add_policy_flags(pol)
    pol.add_argument("-o", "--output")
    pol.set_defaults(func=cmd_polarize)

    con = sub.add_parser("construct", help="choose an information set")
    con.add_argument("method", choices=("exact", "mc"))
    _add_pair_flags(con, pair=False)
    con.add_argument("-n", type=int, required=True)
    con.add_argument("--trials", type=int, default=10_000)
    con.add_argument("--rate", type=float)
    con.add_argument("--eps", type=float)
    con.add_argument("--seed", type=int, default=0)
    _add_policy_flags(con)
    con.add_argument("-o", "--output")
    con.add_argument("--code-out", help="also write the code JSON")
    con.set_defaults(func=cmd_construct)

    sim = sub.add_parser("simulate", help="frame error rate of SC decoding")
    sim.add_argument("--code", required=True, help="code JSON or information-set JSON")
    _add_pair_flags(sim, pair=False)
    sim.add_argument("--frames", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("-o", "--output")
    sim.set_defaults(func=cmd_simulate)

    com = sub.add_parser("compound", help="one metric for a whole channel family")
    com.add_argument("--family", required=True, help="e.g. bsc:0.05:0.11:0.01")
    com.add_argument("--rate", type=float, required=True)
    com.add_argument("-n", type=int, required=True)
    com.add_argument("--trials", type=int, default=10_000)
    com.add_argument("--frames", type=int, default=1000)
    com.add_argument("--seed", type=int, default=0)
    com.add_argument("--construction", choices=("mc", "exact"), default="mc")
    com.add_argument("--merge-limit", type=int, default=None)
    com.add_argument("--grid-bits", type=int, default=12)
    com.add_argument("-o", "--output")
    com.set_defaults(func=cmd_compound)

    chk = sub.add_parser("check", help="numerical property suite")
    chk.add_argument(
        "group",
        choices=("all", "dual", "martingale", "supermartingale", "lemma2", "pebound", "bec", "profile"),
    )
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--quick", action="store_true", help="smaller corpora and shallower profile")
    chk.add_argument("-o", "--output")
    chk.set_defaults(func=cmd_check)
    return parser


def _fail(category: str, message: str, code: int) -> int:
    print(f"polarmm: error[{category}]: {message}".replace("\n", " "), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if getattr(args, "n", 0) is not None and getattr(args, "n", 0) < 0:
            raise UsageError("-n must be non-negative")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except CapacityExceededError as exc:
        return _fail("capacity", str(exc), EXIT_CAPACITY)
    except (ChannelError, DecodeInputError, ValueError, KeyError, OSError) as exc:
        return _fail("data", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())

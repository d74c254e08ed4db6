"""Command-line front end.

Subcommands: extract, convert, rate, entropy, ddg, ergo-check, selftest.
Results go to stdout (or --out) as JSON; traces can also be written as CSV.
Exit codes: 0 success, 1 invalid input (bad flags, malformed configs),
2 computation-contract failure (stall, cap exceeded, violated bound).

Identical argv (including seeds) produces byte-identical JSON when
--no-timestamp is passed; every run records its seed and configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Optional

import numpy as np

from . import bundles
from .bitseq import BitStream, FileStream, BitString, write_bits
from .blockmap import block_rate, BlockMap, load_block_table, von_neumann
from .ddg import (
    DdgGenerator,
    DdgTree,
    avg_rt,
    ddg_extract,
    tree_from_config,
)
from .errors import ComputationError, StallError, ValidationError
from .generators import (
    Generator,
    avg_oi,
    duplication,
    identity,
    oscillating_alpha,
    rate_report,
)
from .levinkautz import kautz_check, lk_convert, lk_rate
from .measures import Measure, format_rational, measure_from_config
from .ergodic import NShift, TreeShift, mixing_average, mixing_threshold


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map flag errors to 1
        raise ValidationError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the JSON report to this path instead of stdout")
    p.add_argument("--csv", help="also write the report's trace as CSV (columns: n,value)")
    p.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit the timestamp so identical runs are byte-identical",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="randext", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="exact or estimated extraction rates")
    p.add_argument("--gen", required=True, help="vn | identity | dup | osc | block:PATH | tree:CFG")
    p.add_argument("--measure", required=True, help="measure config (e.g. bernoulli:1/2)")
    p.add_argument("--n", type=int, help="input length for --exact (default: block size)")
    p.add_argument("--exact", action="store_true", help="print the exact rate as num/den")
    p.add_argument("--schedule", default="pow2:12", help="lin:a:b[:step] | pow2:K | geom:a:b:points")
    p.add_argument("--stream", help="seed:N or file:PATH to also trace the ratio along a stream")
    p.add_argument("--mc", type=int, default=256, help="Monte-Carlo samples per non-exact point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="a..b inclusive: run one report per seed")
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("entropy", help="closed-form entropy rate of a measure")
    p.add_argument("--measure", required=True)
    _add_common(p)

    p = sub.add_parser("convert", help="interval conversion between measures")
    p.add_argument("--from", dest="src", required=True, help="input measure config")
    p.add_argument("--to", dest="dst", required=True, help="output measure config")
    p.add_argument("--in", dest="source", help="seed:N or file:PATH input bits")
    p.add_argument("--seed", type=int, help="shorthand for --in seed:N")
    p.add_argument("--seeds", help="a..b inclusive: run one conversion per seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-bits", type=int, required=True, help="output bits to certify")
    p.add_argument("--cap", type=int, required=True, help="input bit cap")
    p.add_argument("--trace", help="write {n, g, mu_mass, nu_mass} checkpoints to this JSON path")
    p.add_argument("--trace-points", type=int, default=32)
    p.add_argument("--emit", help="write the certified output bits to this bitstream file")
    _add_common(p)

    p = sub.add_parser("extract", help="run an extractor over a bit stream")
    p.add_argument("--gen", required=True, help="vn | identity | dup | block:PATH | tree:CFG")
    p.add_argument("--measure", default="lebesgue", help="measure for seed-sampled input")
    p.add_argument("--in", dest="source", help="seed:N or file:PATH input bits")
    p.add_argument("--seed", type=int, help="shorthand for --in seed:N")
    p.add_argument("--bits", type=int, help="input bits to read (bit-valued extractors)")
    p.add_argument("--symbols", type=int, help="symbols to emit (tree extractors)")
    p.add_argument("--cap", type=int, default=1 << 22, help="input bit cap")
    p.add_argument("--emit", help="write extracted output to this file")
    _add_common(p)

    p = sub.add_parser("ddg", help="build and inspect a distribution-generating tree")
    p.add_argument("--dist", help="comma-separated rational probabilities")
    p.add_argument("--tree", help="tree config: ky:... | dist:... | terminal-list file")
    p.add_argument("--tail-tol", default="1/1000000000")
    _add_common(p)

    p = sub.add_parser("ergo-check", help="exact mixing checks for the bundled shifts")
    p.add_argument("--max-len", type=int, default=3, help="max |sigma|,|tau| to check")
    p.add_argument("--extra-steps", type=int, default=2, help="steps past the threshold")
    _add_common(p)

    p = sub.add_parser("selftest", help="exact-arithmetic invariant suites of all modules")
    _add_common(p)

    return parser


# ---------------------------------------------------------------------------
# Shared helpers


def _emit(obj: dict, args) -> None:
    if not args.no_timestamp:
        obj = {**obj, "timestamp": time.time()}
    text = json.dumps(obj, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "value"])
        for n, v in rows:
            writer.writerow([n, v])


def generator_from_spec(spec: str) -> Generator:
    head, _, rest = spec.partition(":")
    head = head.lower()
    if head == "vn":
        return von_neumann()
    if head == "identity":
        return identity()
    if head in ("dup", "duplication"):
        return duplication()
    if head in ("osc", "oscillating"):
        return oscillating_alpha()
    if head == "block":
        return load_block_table(rest)
    if head == "tree":
        return DdgGenerator(tree_from_config(rest))
    raise ValidationError(f"unknown generator spec: {spec!r}")


def stream_from_spec(spec: Optional[str], mu: Measure, seed: Optional[int]) -> BitStream:
    if spec is None:
        if seed is None:
            raise ValidationError("need --in seed:N / file:PATH or --seed")
        return mu.stream(seed)
    head, _, rest = spec.partition(":")
    if head == "seed":
        return mu.stream(int(rest))
    if head == "file":
        return FileStream(rest)
    raise ValidationError(f"unknown stream source: {spec!r}")


def schedule_from_spec(spec: str) -> list[int]:
    head, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    if head == "lin":
        if len(parts) == 2:
            a, b, step = int(parts[0]), int(parts[1]), 1
        elif len(parts) == 3:
            a, b, step = map(int, parts)
        else:
            raise ValidationError("lin schedule needs lin:a:b[:step]")
        return list(range(a, b + 1, step))
    if head == "pow2":
        k = int(parts[0])
        return [1 << i for i in range(k + 1)]
    if head == "geom":
        a, b, points = int(parts[0]), int(parts[1]), int(parts[2])
        return sorted(set(np.geomspace(a, b, points).astype(int).tolist()))
    raise ValidationError(f"unknown schedule spec: {spec!r}")


def _parse_seeds(arg: Optional[str], fallback: Optional[int]) -> list[int]:
    if arg is None:
        return [fallback if fallback is not None else 0]
    a, sep, b = arg.partition("..")
    if not sep:
        return [int(a)]
    return list(range(int(a), int(b) + 1))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_rate(args) -> int:
    phi = generator_from_spec(args.gen)
    mu = measure_from_config(args.measure)
    if args.exact:
        n = args.n or phi.block_size
        if n is None:
            raise ValidationError("--exact needs --n for generators without a block size")
        if isinstance(phi, BlockMap) and n == phi.n:
            value = block_rate(phi, mu)
        else:
            value = avg_oi(phi, mu, n)
        print(format_rational(value))
        return 0
    schedule = schedule_from_spec(args.schedule)
    seeds = _parse_seeds(args.seeds, args.seed)
    runs = []
    for seed in seeds:
        x = stream_from_spec(args.stream, mu, seed) if args.stream or args.seeds else None
        rep = rate_report(phi, mu, schedule, x=x, seed=seed, mc_samples=args.mc)
        runs.append(rep)
    body = runs[0].to_json_dict() if len(runs) == 1 else {"runs": [r.to_json_dict() for r in runs]}
    _emit(body, args)
    if args.csv and runs:
        trace = runs[0].oi_trace or [(p.n, float(p.value)) for p in runs[0].avg_by_n]
        _write_csv(args.csv, trace)
    return 0


def cmd_entropy(args) -> int:
    mu = measure_from_config(args.measure)
    print(repr(mu.entropy_rate()))
    return 0


def _convert_job(job: dict) -> dict:
    """One seeded conversion; module-level so worker processes can run it."""
    mu = measure_from_config(job["src"])
    nu = measure_from_config(job["dst"])
    stream = mu.stream(job["seed"])
    checkpoints = job.get("checkpoints")
    try:
        res = lk_convert(
            mu, nu, stream, out_len=job["out_bits"], input_cap=job["cap"],
            mass_checkpoints=checkpoints,
        )
        stalled = False
    except StallError as e:
        res = e.partial
        stalled = True
    g_final = res.certified
    summary = {
        "from": mu.name(),
        "to": nu.name(),
        "seed": job["seed"],
        "stream_id": res.stream_id,
        "consumed": res.consumed,
        "certified": g_final,
        "rate": (g_final / res.consumed) if res.consumed else None,
        "stalled": stalled,
    }
    return {
        "summary": summary,
        "mass_trace": res.mass_trace,
        "output_bits": res.output.to01() if len(res.output) <= 1 << 16 else None,
        "g_trace_tail": res.g_trace[-1] if res.g_by_n else (0, 0),
    }


def cmd_convert(args) -> int:
    source = args.source
    if source is None and args.seed is None and args.seeds is None:
        raise ValidationError("need --in, --seed, or --seeds")
    mu = measure_from_config(args.src)
    nu = measure_from_config(args.dst)
    checkpoints = None
    if args.trace:
        checkpoints = sorted(
            set(np.geomspace(1, max(args.cap, 2), args.trace_points).astype(int).tolist())
        )
    if source is not None and source.startswith("file:"):
        stream = stream_from_spec(source, mu, None)
        try:
            res = lk_convert(mu, nu, stream, out_len=args.out_bits,
                             input_cap=args.cap, mass_checkpoints=checkpoints)
            stalled = False
        except StallError as e:
            res, stalled = e.partial, True
        results = [{
            "summary": {
                "from": mu.name(), "to": nu.name(), "seed": None,
                "stream_id": res.stream_id, "consumed": res.consumed,
                "certified": res.certified,
                "rate": (res.certified / res.consumed) if res.consumed else None,
                "stalled": stalled,
            },
            "mass_trace": res.mass_trace,
            "output_bits": res.output.to01() if len(res.output) <= 1 << 16 else None,
        }]
        emitted = res.output
    else:
        if source is not None and source.startswith("seed:"):
            seeds = [int(source.partition(":")[2])]
        else:
            seeds = _parse_seeds(args.seeds, args.seed)
        jobs = [
            {
                "src": args.src, "dst": args.dst, "seed": s,
                "out_bits": args.out_bits, "cap": args.cap,
                "checkpoints": checkpoints,
            }
            for s in seeds
        ]
        if args.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_convert_job, jobs))
        else:
            results = [_convert_job(j) for j in jobs]
        emitted = None
        if len(results) == 1 and results[0]["output_bits"] is not None:
            emitted = BitString(results[0]["output_bits"])
    if args.trace:
        trace = results[0].get("mass_trace") or []
        with open(args.trace, "w") as fh:
            json.dump(trace, fh, sort_keys=True, indent=2)
    if args.emit and emitted is not None:
        write_bits(args.emit, emitted)
    body = results[0] if len(results) == 1 else {"runs": results}
    body = dict(body)
    body.pop("mass_trace", None)
    _emit(body, args)
    if args.csv:
        rows = [(t["n"], t["g"]) for t in (results[0].get("mass_trace") or [])]
        _write_csv(args.csv, rows)
    if any(r["summary"]["stalled"] for r in results):
        print("conversion stalled before reaching the requested output", file=sys.stderr)
        return 2
    return 0


def cmd_extract(args) -> int:
    phi = generator_from_spec(args.gen)
    mu = measure_from_config(args.measure)
    stream = stream_from_spec(args.source, mu, args.seed)
    if isinstance(phi, DdgGenerator):
        if not args.symbols:
            raise ValidationError("tree extraction needs --symbols")
        try:
            res = ddg_extract(phi.tree, stream, args.symbols, input_cap=args.cap)
            stalled = False
        except StallError as e:
            res, stalled = e.partial, True
        names = res.label_names(phi.tree)
        report = {
            "generator": phi.name,
            "stream_id": stream.stream_id,
            "symbols": len(res.labels),
            "consumed": res.consumed,
            "symbols_per_bit": (len(res.labels) / res.consumed) if res.consumed else None,
            "stalled": stalled,
        }
        if args.emit:
            with open(args.emit, "w") as fh:
                fh.write("".join(names) if all(len(n) == 1 for n in names)
                         else " ".join(names))
                fh.write("\n")
        _emit(report, args)
        return 2 if stalled else 0
    if not args.bits:
        raise ValidationError("bit extraction needs --bits")
    if args.bits > args.cap:
        raise ValidationError("--bits exceeds --cap")
    stream.reset()
    bits = stream.take(args.bits)
    out = phi.eval(BitString(bits))
    report = {
        "generator": phi.name,
        "stream_id": stream.stream_id,
        "consumed": args.bits,
        "emitted": len(out),
        "ratio": len(out) / args.bits,
    }
    if args.emit:
        write_bits(args.emit, out)
    _emit(report, args)
    return 0


def cmd_ddg(args) -> int:
    if not args.dist and not args.tree:
        raise ValidationError("need --dist or --tree")
    tol = Fraction(args.tail_tol)
    tree = (
        tree_from_config(args.tree, tail_tol=tol)
        if args.tree
        else tree_from_config("ky:" + args.dist, tail_tol=tol)
    )
    rt = avg_rt(tree, tail_tol=tol)
    report = {
        "name": getattr(tree, "name", "tree"),
        "alphabet": tree.labels,
        "finite": tree.is_finite(),
        "distribution": [format_rational(q) for q in tree.distribution()],
    }
    if isinstance(tree, DdgTree):
        report["terminals"] = {
            node.to01(): tree.labels[lab] for node, lab in tree.terminals
        }
        report["avg_rt"] = format_rational(rt)
    else:
        report["avg_rt"] = format_rational(rt.value)
        report["avg_rt_remainder_bound"] = format_rational(rt.remainder_bound)
        report["truncation_levels"] = rt.levels
    _emit(report, args)
    return 0


def cmd_ergo_check(args) -> int:
    meas = bundles.bundled_measures()
    trees = bundles.bundled_trees()
    cases = [
        ("2-shift/step2", NShift(2), meas["step2"]),
        ("tree-shift/half_quarter", TreeShift(trees["half_quarter"]), meas["lebesgue"]),
    ]
    table = []
    failures = 0
    for name, shift, mu in cases:
        for ls in range(1, args.max_len + 1):
            for lt in range(1, args.max_len + 1):
                for vs in range(1 << ls):
                    for vt in range(1 << lt):
                        sigma = BitString.from_int(vs, ls)
                        tau = BitString.from_int(vt, lt)
                        thr = mixing_threshold(shift, tau)
                        K = thr + args.extra_steps
                        seq = mixing_average(shift, mu, sigma, tau, K)
                        target = mu.cylinder_mass(sigma) * mu.cylinder_mass(tau)
                        ok = all(seq[i] == target for i in range(thr, K + 1))
                        if not ok:
                            failures += 1
                        table.append(
                            {
                                "case": name,
                                "sigma": sigma.to01(),
                                "tau": tau.to01(),
                                "threshold": thr,
                                "pass": ok,
                            }
                        )
    _emit(
        {
            "checks": len(table),
            "failures": failures,
            "table": table,
        },
        args,
    )
    return 2 if failures else 0


def cmd_selftest(args) -> int:
    from . import selftest

    failures = selftest.run(verbose=True)
    return 2 if failures else 0


_HANDLERS = {
    "rate": cmd_rate,
    "entropy": cmd_entropy,
    "convert": cmd_convert,
    "extract": cmd_extract,
    "ddg": cmd_ddg,
    "ergo-check": cmd_ergo_check,
    "selftest": cmd_selftest,
}


def run(argv=None) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (StallError, ComputationError) as e:
        print(f"computation failed: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""Command-line interface.

    mtcert certify  DATA --threshold B
    mtcert curve    DATA [--threshold B ...] [--grid N]
    mtcert episodic DATA [--threshold t]
    mtcert simulate --n N --m M [--env slip|bridge] [--policy ...] --output FILE
    mtcert validate --n N --m M --reps R

Exit status is 0 on success (trivial certificates included), 1 on bad input
data and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from typing import Optional, Sequence

import numpy as np

from mtcert import certify as cz
from mtcert import io as mio
from mtcert import simbench as sb
from mtcert.bounds import BinaryStats, BoundError, BoundSpec, Method, compute_bounds

log = logging.getLogger("mtcert")


class InputError(Exception):
    pass


def _unit_interval(name):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not 0.0 < v < 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {v}")
        return v

    return parse


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _add_confidence(p):
    p.add_argument("--delta", type=_unit_interval("delta"), default=0.01, help="global confidence parameter (default 0.01)")
    p.add_argument("--beta", type=_unit_interval("beta"), default=None, help="per-task confidence parameter (default delta/n)")


def _add_output(p, default_format):
    p.add_argument("--format", choices=("json", "csv"), default=default_format, help="structured object or delimited table")
    p.add_argument("--output", "-o", default=None, help="write here (atomically) instead of stdout")


def _add_data(p):
    p.add_argument("data", help="dataset path, or '-' for stdin")
    p.add_argument("--input-format", choices=mio.FORMATS, default=None, help="default: from the file extension")
    p.add_argument(
        "--bound",
        choices=[m.value for m in Method],
        default=None,
        help="per-task bound (default: cp for binary data, bernstein for real-valued data)",
    )


def _add_sim(p):
    p.add_argument("--env", choices=("slip", "bridge"), default="slip")
    p.add_argument("--policy", choices=[pol.value for pol in sb.Policy], default=None)
    p.add_argument("--n", type=_positive_int, default=250, help="sampled tasks")
    p.add_argument("--m", type=_positive_int, default=1000, help="rollouts per task")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtcert", description="Safety certificates for multi-task policies.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="certificate at one threshold")
    _add_data(p)
    p.add_argument("--threshold", type=float, required=True, help="performance threshold B")
    _add_confidence(p)
    _add_output(p, "json")

    p = sub.add_parser("curve", help="certified safety over all breakpoints")
    _add_data(p)
    p.add_argument("--threshold", type=float, action="append", default=[], help="extra threshold (repeatable)")
    p.add_argument("--grid", type=_positive_int, default=None, help="add N evenly spaced thresholds over the data range")
    _add_confidence(p)
    _add_output(p, "csv")

    p = sub.add_parser("episodic", help="single-episode guarantee from one rollout per task")
    _add_data(p)
    p.add_argument("--threshold", type=float, default=float("nan"), help="trajectory-level threshold t the indicators refer to")
    p.add_argument("--delta", type=_unit_interval("delta"), default=0.01)
    _add_output(p, "json")

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_sim(p)
    p.add_argument("--format", choices=mio.FORMATS, default="jsonl")
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("validate", help="coverage experiment against analytic ground truth")
    _add_sim(p)
    p.add_argument("--reps", type=int, default=200, help="repetitions R")
    p.add_argument("--threshold", type=float, action="append", default=None, help="check only these thresholds (default: all breakpoints)")
    _add_confidence(p)
    _add_output(p, "json")
    return parser


def _load(args) -> list:
    fmt = args.input_format
    if fmt is None:
        fmt = "csv" if args.data.endswith(".csv") else "jsonl"
    try:
        if args.data == "-":
            records = mio.parse_dataset(sys.stdin.buffer, fmt)
        else:
            with open(args.data, "rb") as fh:
                records = mio.parse_dataset(fh, fmt)
    except OSError as exc:
        raise InputError(f"cannot read {args.data}: {exc.strerror}") from None
    except mio.DatasetError as exc:
        raise InputError(str(exc)) from None
    if not records:
        raise InputError("no tasks in dataset")
    return records


def _method(args, records) -> Method:
    if args.bound is not None:
        return Method(args.bound)
    return Method.CLOPPER_PEARSON if isinstance(records[0].stats, BinaryStats) else Method.EMPIRICAL_BERNSTEIN


def _bounds(args, records):
    beta = args.beta if args.beta is not None else cz.default_beta(args.delta, len(records))
    try:
        return compute_bounds(records, BoundSpec(_method(args, records), beta)), beta
    except BoundError as exc:
        raise InputError(str(exc)) from None


def _emit(args, text: str) -> None:
    if args.output:
        mio.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def cmd_certify(args) -> int:
    records = _load(args)
    bounds, beta = _bounds(args, records)
    t0 = time.perf_counter()
    cert = cz.best_certificate(cz.CertificateRequest(bounds, args.threshold, args.delta, beta))
    solve_ms = 1e3 * (time.perf_counter() - t0)
    if not cert.feasible:
        log.warning(
            "trivial certificate at B=%g: %d of %d per-task bounds below the threshold or no feasible K",
            args.threshold,
            cert.k_of_B,
            cert.n,
        )
    else:
        log.info(
            "K*=%d also satisfies the 1-delta feasibility form: %s",
            cert.K_star,
            cz.feasibility_full_delta(cert.n, cert.k_of_B, cert.K_star, cert.beta, cert.delta),
        )
    out = mio.certificate_to_dict(cert, solve_ms)
    _emit(args, _dump(out) if args.format == "json" else mio.dicts_to_table([out]))
    return 0


def _grid(records, count: int) -> list[float]:
    lo = min(0.0 if isinstance(r.stats, BinaryStats) else r.stats.lo for r in records)
    hi = max(1.0 if isinstance(r.stats, BinaryStats) else r.stats.hi for r in records)
    return [float(x) for x in np.linspace(lo, hi, count)]


def cmd_curve(args) -> int:
    records = _load(args)
    bounds, beta = _bounds(args, records)
    extra = list(args.threshold)
    if args.grid:
        extra += _grid(records, args.grid)
    curve = cz.certificate_curve(bounds, args.delta, beta, extra)
    if args.format == "csv":
        _emit(args, mio.curve_to_table(curve))
    else:
        rows = [dict(zip(mio.CURVE_COLUMNS, row)) for row in mio.curve_rows(curve)]
        _emit(args, _dump({"n": len(bounds), "delta": args.delta, "beta": beta, "breakpoints": rows}))
    return 0


def cmd_episodic(args) -> int:
    records = _load(args)
    outcomes = []
    for r in records:
        if not isinstance(r.stats, BinaryStats):
            raise InputError(f"task {r.task_id!r}: episodic mode needs binary indicators")
        if r.stats.trials != 1:
            raise InputError(
                f"task {r.task_id!r} has {r.stats.trials} rollouts; episodic guarantees need exactly "
                "one rollout per task, since rollouts within a task are not independent"
            )
        outcomes.append(r.stats.successes)
    cert = cz.episodic_certificate(cz.EpisodicRequest(outcomes, args.threshold, args.delta))
    out = mio.episodic_to_dict(cert)
    _emit(args, _dump(out) if args.format == "json" else mio.dicts_to_table([out]))
    return 0


def _env(args):
    if args.env == "slip":
        policy = args.policy or sb.Policy.SLIP_FORWARD.value
        return sb.SlipGridTaskDist(), sb.Policy(policy)
    policy = args.policy or sb.Policy.BRIDGE_RIGHT.value
    return sb.BridgeWorldDist(), sb.Policy(policy)


def cmd_simulate(args) -> int:
    dist, policy = _env(args)
    _, records = sb.simulate_dataset(dist, policy, args.n, args.m, args.seed)
    text = mio.serialize_dataset(records, args.format)
    if args.output:
        mio.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    dist, policy = _env(args)
    report = sb.coverage_experiment(
        dist, policy, args.n, args.m, args.beta, args.delta, args.threshold, args.reps, args.seed
    )
    tight = sb.tightness_curve(dist, policy, args.n, args.m, args.beta, args.delta, args.seed)
    rows = [
        {"B": mio.round_near(B), "certified_safety": mio.round_down(c), "true_safety": mio.round_near(t)}
        for B, c, t in tight.rows()
    ]
    summary = {
        "repetitions": report.repetitions,
        "violations": report.violations,
        "thresholds": report.thresholds,
        "empirical_violation_rate": report.empirical_violation_rate,
        "delta": report.delta,
        "beta": report.beta,
        "n": report.n,
        "m": report.m,
        "binomial_p_value": report.binomial_p_value(),
    }
    if args.format == "json":
        _emit(args, _dump({"report": summary, "tightness_curve": rows}))
    else:
        sys.stderr.write(json.dumps(summary) + "\n")
        _emit(args, mio.dicts_to_table(rows))
    return 0


COMMANDS = {
    "certify": cmd_certify,
    "curve": cmd_curve,
    "episodic": cmd_episodic,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "validate" and args.reps < 1:
        parser.error("--reps must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

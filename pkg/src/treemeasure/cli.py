"""Command-line interface.

Exit codes: 0 on success, 1 on input or usage errors, 2 when ``compare``
cannot decide.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from decimal import Decimal
from fractions import Fraction

from . import engine
from .automaton import AutomatonError, load_automaton, load_process, validate_weak
from .distribution import DEFAULT_MAX_BITS, DistributionError, dirac
from .engine import EngineError, compare, decimal, enclose, enclose_branching, run_pipeline, run_pipeline_branching
from .formula import FormulaSizeError, build_compare, build_psi, build_psi_branching, emit_smt2, stats
from .game_oracle import OracleError, default_threads, enum_stage_distribution, monte_carlo

THREADS_ENV = "TREEMEASURE_THREADS"


class UsageError(Exception):
    def __init__(self, usage: str, message: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(self.format_usage(), f"{self.prog}: error: {message}")


def _budget(text: str):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid budget {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("budget must be at least 1")
    return values[0] if len(values) == 1 else values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _epsilon(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return value


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid rational {text!r}") from None


def _max_bits(text: str):
    if text in ("none", "inf", "0"):
        return None
    return _positive_int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treemeasure", description="Measures of languages of weak alternating tree automata.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, engine_flags=True):
        p.add_argument("automaton", help="automaton file (.aut text or .json)")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("-o", "--output", help="write output to this file instead of stdout")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help=f"worker threads (default: ${THREADS_ENV} or all cores)")
        if engine_flags:
            p.add_argument("--budget", type=_budget, default=30,
                           help="iterations per stage; a comma list sets stages 0, 1, ... (default 30)")
            p.add_argument("--mode", choices=("exact", "float"), default="exact")
            p.add_argument("--epsilon", type=_epsilon, default=1e-12, help="float-mode stopping threshold")
            p.add_argument("--max-bits", type=_max_bits, default=DEFAULT_MAX_BITS,
                           help="denominator size before outward rounding ('none' disables)")
            p.add_argument("--process", help="branching process file; default is the uniform measure")

    p = sub.add_parser("validate", help="parse and check weakness")
    common(p, engine_flags=False)

    p = sub.add_parser("measure", help="point estimate with a bound tag")
    common(p)
    p.add_argument("--report", action="store_true", help="print the per-stage report")

    p = sub.add_parser("enclose", help="sound interval for the measure")
    common(p)

    p = sub.add_parser("compare", help="compare the measure with a rational")
    common(p)
    p.add_argument("q", type=_rational)
    p.add_argument("--rel", choices=("lt", "eq", "gt"), default=None,
                   help="relation to test, read as 'measure REL q'")

    p = sub.add_parser("emit-formula", help="write the SMT-LIB formula for the measure")
    common(p, engine_flags=False)
    p.add_argument("--process", help="branching process file")
    p.add_argument("--compare", type=_rational, default=None, metavar="Q",
                   help="emit the closed sentence 'measure REL Q' instead")
    p.add_argument("--rel", choices=("lt", "eq", "gt"), default="eq")
    p.add_argument("--stats", action="store_true", help="print JSON size statistics")
    p.add_argument("--cap", type=_positive_int, default=None, help="atom cap for the size guard")

    p = sub.add_parser("oracle", help="independent checks")
    osub = p.add_subparsers(dest="oracle_command", required=True, parser_class=_Parser)
    q = osub.add_parser("enum", help="brute-force i-step distribution")
    common(q, engine_flags=False)
    q.add_argument("--base", default="full", help="'full', 'empty' or a comma list of state names")
    q.add_argument("--steps", type=int, default=1)
    q = osub.add_parser("sample", help="Monte Carlo bracket of the measure")
    common(q, engine_flags=False)
    q.add_argument("--process", help="branching process file")
    q.add_argument("--samples", type=_positive_int, default=10_000)
    q.add_argument("--depth", type=int, default=12)
    q.add_argument("--seed", type=int, default=0)
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return default_threads()


def _engine_kwargs(args) -> dict:
    kw = {"mode": args.mode, "max_bits": args.max_bits}
    if args.mode == "float":
        kw["epsilon"] = args.epsilon
    return kw


def _run_engine(args, automaton, enclosure: bool):
    kw = _engine_kwargs(args)
    if args.process:
        process = load_process(args.process)
        fn = enclose_branching if enclosure else run_pipeline_branching
        return fn(automaton, process, args.budget, **kw)
    fn = enclose if enclosure else run_pipeline
    return fn(automaton, args.budget, **kw)


_TAG_TEXT = {
    engine.TAG_EXACT: "exact fixpoint",
    engine.TAG_LOWER: "lower bound",
    engine.TAG_UPPER: "upper bound",
    engine.TAG_MIXED: "no certified direction",
}


def _fmt(v, rounding: str | None = None, digits: int = 12) -> str:
    """The rational if small, else ``digits`` significant digits rounded
    towards ``rounding`` (``"down"``/``"up"``) so interval ends stay sound."""
    if isinstance(v, float):
        return decimal(v)
    num, den = int(v.numerator), int(v.denominator)
    if den.bit_length() <= 64 or num == 0:
        return engine.format_value(v)
    # pick s with 10**(digits-1) <= num * 10**s / den < 10**digits
    s = digits - 1 - int((num.bit_length() - den.bit_length()) * 0.30103)
    while True:
        scaled = num * 10 ** s if s >= 0 else num
        d = den if s >= 0 else den * 10 ** -s
        q, r = divmod(scaled, d)
        if q >= 10 ** digits:
            s -= 1
        elif q < 10 ** (digits - 1):
            s += 1
        else:
            break
    if r and (rounding == "up" or (rounding is None and 2 * r >= d)):
        q += 1
    return format(Decimal(q).scaleb(-s).normalize(), "f" if -s >= -6 - digits else "e")


def cmd_validate(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton, check_weak=False)
    report = validate_weak(automaton)
    if args.json:
        body = {"weak": report.ok, "states": automaton.num_states, "letters": automaton.num_letters,
                "violations": [v.describe(automaton) for v in report.violations]}
        return (0 if report.ok else 1), json.dumps(body, sort_keys=True)
    if report.ok:
        return 0, f"ok: weak automaton with {automaton.num_states} states and {automaton.num_letters} letters"
    lines = ["not weak:"] + [f"  {v.describe(automaton)}" for v in report.violations]
    return 1, "\n".join(lines)


def cmd_measure(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton)
    result = _run_engine(args, automaton, enclosure=False)
    if args.json:
        return 0, result.to_json()
    v = result.measure_estimate
    rel = {engine.TAG_EXACT: "=", engine.TAG_LOWER: ">=", engine.TAG_UPPER: "<="}.get(result.tag, "~")
    rounding = {engine.TAG_LOWER: "down", engine.TAG_UPPER: "up"}.get(result.tag)
    text = f"measure {rel} {_fmt(v, rounding)} ({_TAG_TEXT[result.tag]})"
    if result.arithmetic == "float":
        text += " [float]"
    if args.report:
        text = result.report() + text
    return 0, text


def cmd_enclose(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton)
    result = _run_engine(args, automaton, enclosure=True)
    if args.json:
        return 0, result.to_json()
    lo, hi = result.measure_interval
    return 0, f"interval [{_fmt(lo, 'down')}, {_fmt(hi, 'up')}]"


def cmd_compare(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton)
    result = _run_engine(args, automaton, enclosure=True)
    verdict = compare(result, args.q)
    lo, hi = result.bounds()
    if args.json:
        body = {"verdict": verdict, "q": str(args.q), "interval": [engine.format_value(lo), engine.format_value(hi)],
                "interval_decimal": [decimal(lo), decimal(hi)]}
        if args.rel:
            body["rel"] = args.rel
            body["holds"] = engine.holds(verdict, args.rel)
        return (2 if verdict == engine.UNKNOWN else 0), json.dumps(body, sort_keys=True)
    if verdict == engine.UNKNOWN:
        return 2, f"UNKNOWN (interval [{_fmt(lo, 'down')}, {_fmt(hi, 'up')}]); try emit-formula"
    return 0, verdict


def cmd_emit(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton)
    kw = {} if args.cap is None else {"cap": args.cap}
    if args.process:
        psi = build_psi_branching(automaton, load_process(args.process), **kw)
    else:
        psi = build_psi(automaton, **kw)
    if args.compare is not None:
        psi = build_compare(psi, args.compare, args.rel)
    text = emit_smt2(psi)
    if args.stats:
        info = stats(psi, text)
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
            info["output"] = args.output
        return 0, json.dumps(info, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        return 0, f"wrote {args.output}; decide it with an SMT solver, e.g. z3 {args.output}"
    return 0, text.rstrip("\n")


def cmd_oracle(args) -> tuple[int, str]:
    automaton = load_automaton(args.automaton)
    if args.oracle_command == "enum":
        n = automaton.num_states
        if args.base == "full":
            mask = automaton.full_mask
        elif args.base == "empty":
            mask = 0
        else:
            mask = automaton.mask_of([s.strip() for s in args.base.split(",") if s.strip()])
        dist = enum_stage_distribution(automaton, dirac(n, mask), args.steps)
        if args.json:
            return 0, json.dumps({automaton.format_mask(p): engine.format_value(dist[p]) for p in range(dist.size)},
                                 sort_keys=False)
        return 0, dist.dump(automaton).rstrip("\n")
    process = load_process(args.process) if args.process else None
    result = monte_carlo(automaton, process, samples=args.samples, depth=args.depth, seed=args.seed,
                         threads=_threads(args))
    return 0, result.to_json()


COMMANDS = {
    "validate": cmd_validate,
    "measure": cmd_measure,
    "enclose": cmd_enclose,
    "compare": cmd_compare,
    "emit-formula": cmd_emit,
    "oracle": cmd_oracle,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    """Run one command; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        stderr.write(exc.usage)
        print(exc, file=stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        code, text = COMMANDS[args.command](args)
    except (AutomatonError, DistributionError, EngineError, OracleError, FormulaSizeError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    if args.output and args.command != "emit-formula":
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=stdout)
    return code


def main() -> None:
    sys.exit(run())

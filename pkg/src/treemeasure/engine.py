"""Stage-by-stage measure pipeline.

Stages run over priorities ``n = 0..N``.  Even stages are safety stages
(descending towards the greatest fixpoint below the stage base), odd stages
are reachability stages (ascending towards the least fixpoint above it).
Consecutive stages are linked by the pushforwards ``Q_<n`` (entering odd
``n``) and ``Q_>=n`` (entering even ``n``).  The measure is read off the base
of the last stage, so stage ``N`` itself is only iterated on request.

Every computed distribution carries a *bound tag* saying how it relates to
the true value in the stochastic order: ``exact``, ``lower``, ``upper`` or
``mixed`` (no guarantee).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from gmpy2 import mpq

from .automaton import BranchingProcess, WeakAutomaton
from .distribution import (
    ASCENDING, DEFAULT_MAX_BITS, DESCENDING, EXACT, FLOAT, FamilyDistribution, IterationResult,
    PreconditionError, StateSetDistribution, apply_F, apply_F_process, apply_Q_geq, apply_Q_lt,
    dirac, family_leq, format_value, leq_coupling, run_chain,
)

SAFETY = "S"
REACH = "R"

TAG_EXACT = "exact"
TAG_LOWER = "lower"
TAG_UPPER = "upper"
TAG_MIXED = "mixed"

LT, GT, EQ, UNKNOWN = "LT", "GT", "EQ", "UNKNOWN"


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class Stage:
    n: int
    kind: str
    between: tuple[str, int] | None  # ("lt", n) or ("geq", n); None for stage 0


@dataclass(frozen=True)
class StagePlan:
    N: int
    stages: tuple[Stage, ...]


def plan_stages(automaton: WeakAutomaton) -> StagePlan:
    """Smallest even ``N`` above the initial priority, and the stage list."""
    top = automaton.priority[automaton.initial]
    N = top + 1 if top % 2 else top + 2
    stages = []
    for n in range(N + 1):
        kind = SAFETY if n % 2 == 0 else REACH
        between = None if n == 0 else (("lt", n) if n % 2 else ("geq", n))
        stages.append(Stage(n, kind, between))
    return StagePlan(N, tuple(stages))


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class StageRecord:
    stage: Stage
    alpha: object
    alpha_tag: str
    beta: IterationResult | None = None
    beta_tag: str | None = None
    # enclosure mode keeps both ends
    alpha_hi: object = None
    beta_lo: IterationResult | None = None
    beta_hi: IterationResult | None = None


@dataclass(frozen=True)
class PipelineResult:
    plan: StagePlan
    stages: tuple[StageRecord, ...]
    measure_estimate: object
    measure_interval: tuple | None
    mode: str  # point | enclosure
    arithmetic: str  # exact | float
    tag: str
    branching: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def alpha_final(self):
        return self.stages[-1].alpha

    def bounds(self) -> tuple:
        """Interval known to contain the measure (trivial sides are 0 or 1)."""
        if self.measure_interval is not None:
            return self.measure_interval
        v = self.measure_estimate
        one, zero = (mpq(1), mpq(0)) if self.arithmetic == EXACT else (1.0, 0.0)
        if self.tag == TAG_EXACT:
            return (v, v)
        if self.tag == TAG_LOWER:
            return (v, one)
        if self.tag == TAG_UPPER:
            return (zero, v)
        return (zero, one)

    @property
    def certified(self) -> bool:
        return self.tag == TAG_EXACT and self.arithmetic == EXACT

    def to_dict(self) -> dict:
        stages = []
        for rec in self.stages:
            entry = {
                "n": rec.stage.n,
                "kind": rec.stage.kind,
                "between": None if rec.stage.between is None else f"{rec.stage.between[0]}({rec.stage.between[1]})",
                "alpha_tag": rec.alpha_tag,
            }
            for key, it in (("beta", rec.beta), ("beta_lo", rec.beta_lo), ("beta_hi", rec.beta_hi)):
                if it is not None:
                    entry[key] = {"iterations": it.iterations, "stopped_by": it.stopped_by,
                                  "direction": it.direction, "rounded": it.rounded}
            if rec.beta_tag is not None:
                entry["beta_tag"] = rec.beta_tag
            stages.append(entry)
        out = {
            "mode": self.mode,
            "arithmetic": self.arithmetic,
            "branching": self.branching,
            "N": self.plan.N,
            "tag": self.tag,
            "estimate": _num(self.measure_estimate),
            "estimate_decimal": decimal(self.measure_estimate),
            "stages": stages,
        }
        if self.measure_interval is not None:
            lo, hi = self.measure_interval
            out["interval"] = [_num(lo), _num(hi)]
            out["interval_decimal"] = [decimal(lo), decimal(hi)]
        out.update(self.meta)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def report(self) -> str:
        lines = [f"N = {self.plan.N} ({self.mode}, {self.arithmetic}{', branching' if self.branching else ''})"]
        for rec in self.stages:
            st = rec.stage
            enter = "base dirac(Q)" if st.between is None else f"enter via Q_{'<' if st.between[0] == 'lt' else '>='}{st.between[1]}"
            parts = [f"stage {st.n} {st.kind}: {enter}"]
            for label, it in (("", rec.beta), ("lo ", rec.beta_lo), ("hi ", rec.beta_hi)):
                if it is not None:
                    parts.append(f"{label}{it.iterations} it, {it.stopped_by}{', rounded' if it.rounded else ''}")
            if rec.beta_tag is not None:
                parts.append(f"tag {rec.beta_tag}")
            lines.append("; ".join(parts))
        lines.append(f"measure ~ {decimal(self.measure_estimate)} [{self.tag}]")
        if self.measure_interval is not None:
            lo, hi = self.measure_interval
            lines.append(f"interval [{decimal(lo)}, {decimal(hi)}]")
        return "\n".join(lines) + "\n"


def _num(v) -> str:
    return format_value(v)


def decimal(v, digits: int = 12) -> str:
    return format(float(v), f".{digits}g")


# --------------------------------------------------------------------------
# the two state spaces: plain distributions and letter-indexed families


class _PlainSpace:
    def __init__(self, automaton: WeakAutomaton, mode: str):
        self.automaton = automaton
        self.mode = mode

    def dirac(self, mask):
        return dirac(self.automaton.num_states, mask, self.mode)

    def step(self, x):
        return apply_F(x, self.automaton)

    def q_lt(self, x, n):
        return apply_Q_lt(x, self.automaton, n)

    def q_geq(self, x, n):
        return apply_Q_geq(x, self.automaton, n)

    def leq(self, x, y):
        return leq_coupling(x, y)

    def measure(self, x):
        return x.containing(1 << self.automaton.initial)


class _FamilySpace(_PlainSpace):
    def __init__(self, automaton: WeakAutomaton, process: BranchingProcess, mode: str):
        super().__init__(automaton, mode)
        self.process = process
        self.weights = [mpq(p.numerator, p.denominator) for p in process.init]

    def dirac(self, mask):
        return FamilyDistribution((dirac(self.automaton.num_states, mask, self.mode),) * self.automaton.num_letters)

    def step(self, x):
        return apply_F_process(x, self.automaton, self.process)

    def q_lt(self, x, n):
        return x.map(lambda d: apply_Q_lt(d, self.automaton, n))

    def q_geq(self, x, n):
        return x.map(lambda d: apply_Q_geq(d, self.automaton, n))

    def leq(self, x, y):
        return family_leq(x, y)

    def measure(self, x):
        total = mpq(0) if self.mode == EXACT else 0.0
        for w, d in zip(self.weights, x.members):
            if w:
                total += (w if self.mode == EXACT else float(w)) * d.containing(1 << self.automaton.initial)
        return total


def _budgets(budget, N: int) -> list[int]:
    if isinstance(budget, int):
        values = [budget] * (N + 1)
    elif isinstance(budget, Mapping):
        default = budget.get("default", 30)
        values = [int(budget.get(n, default)) for n in range(N + 1)]
    else:
        seq = list(budget)
        if not seq:
            raise EngineError("empty budget list")
        values = [int(seq[min(n, len(seq) - 1)]) for n in range(N + 1)]
    if any(b < 1 for b in values):
        raise EngineError("budget must be at least 1")
    return values


def _enter(space, stage: Stage, x):
    if stage.between is None:
        return x
    op, n = stage.between
    return space.q_lt(x, n) if op == "lt" else space.q_geq(x, n)


def _natural(kind: str) -> str:
    return TAG_UPPER if kind == SAFETY else TAG_LOWER


def _point_stage(space, stage: Stage, base, tag_in: str, budget: int, epsilon, max_bits, trace):
    """Iterate one stage from ``base`` and derive the bound tag of the result."""
    kind = stage.kind
    direction = DESCENDING if kind == SAFETY else ASCENDING
    natural = _natural(kind)
    check = None
    side_ok = True
    if tag_in == TAG_EXACT:
        def check(cur, nxt):
            ok = space.leq(nxt, cur) if kind == SAFETY else space.leq(cur, nxt)
            if not ok:
                raise PreconditionError(f"stage {stage.n}: base is not on the {direction} side of its image")
        out_tag = natural
    elif tag_in == natural or tag_in == TAG_MIXED:
        out_tag = tag_in
    else:
        # base bounds the true base from the side opposite to the chain
        image = space.step(base)
        side_ok = space.leq(base, image) if kind == SAFETY else space.leq(image, base)
        out_tag = tag_in
    side = "up" if out_tag == TAG_UPPER else "down"
    result = run_chain(base, space.step, direction=direction, budget=budget, epsilon=epsilon,
                       max_bits=max_bits, round_side=side, trace=trace, check=check)
    if tag_in == TAG_EXACT and result.exact_fixpoint and not result.rounded:
        out_tag = TAG_EXACT
    elif tag_in not in (TAG_EXACT, natural, TAG_MIXED) and not (side_ok or result.exact_fixpoint):
        out_tag = TAG_MIXED
    return result, out_tag


def _pipeline(space, budget, epsilon, max_bits, iterate_last, record_trace, branching) -> PipelineResult:
    automaton = space.automaton
    plan = plan_stages(automaton)
    budgets = _budgets(budget, plan.N)
    trace = space.measure if record_trace else None
    if space.mode == FLOAT:
        max_bits = None
    x = space.dirac(automaton.full_mask)
    tag = TAG_EXACT
    records = []
    for stage in plan.stages:
        x = _enter(space, stage, x)
        alpha, alpha_tag = x, tag
        if stage.n == plan.N and not iterate_last:
            records.append(StageRecord(stage, alpha, alpha_tag))
            break
        result, tag = _point_stage(space, stage, alpha, alpha_tag, budgets[stage.n], epsilon, max_bits, trace)
        records.append(StageRecord(stage, alpha, alpha_tag, result, tag))
        x = result.final
    final = records[-1]
    return PipelineResult(plan, tuple(records), space.measure(final.alpha), None, "point", space.mode,
                          final.alpha_tag, branching)


def run_pipeline(automaton: WeakAutomaton, budget=30, mode: str = EXACT, *, epsilon: float | None = 1e-12,
                 max_bits: int | None = DEFAULT_MAX_BITS, iterate_last: bool = False,
                 record_trace: bool = True) -> PipelineResult:
    """Point-estimate pipeline from the true stage bases.

    Args:
        automaton: A weak automaton.
        budget: Iterations per stage; an int, a per-stage sequence (the last
            entry repeats) or a mapping ``{n: count, "default": count}``.
        mode: ``"exact"`` (rationals) or ``"float"``.
        epsilon: Float-mode stopping threshold on the max-norm step.
        max_bits: Exact mode only; iterates whose denominators exceed this
            many bits are rounded outward in the order.  ``None`` disables
            rounding.
        iterate_last: Also iterate stage ``N`` (not needed for the measure).
        record_trace: Keep the measure functional of every iterate.
    """
    _check_mode(mode)
    return _pipeline(_PlainSpace(automaton, mode), budget, epsilon, max_bits, iterate_last, record_trace, False)


def run_pipeline_branching(automaton: WeakAutomaton, process: BranchingProcess, budget=30, mode: str = EXACT, *,
                           epsilon: float | None = 1e-12, max_bits: int | None = DEFAULT_MAX_BITS,
                           iterate_last: bool = False, record_trace: bool = True) -> PipelineResult:
    """Pipeline over letter-indexed families for a branching process.

    ``β[a]`` is the distribution of the root state set conditioned on the
    root label ``a``; the measure weighs these by the initial distribution.
    """
    _check_mode(mode)
    _check_alphabet(automaton, process)
    return _pipeline(_FamilySpace(automaton, process, mode), budget, epsilon, max_bits, iterate_last,
                     record_trace, True)


def _check_mode(mode: str) -> None:
    if mode not in (EXACT, FLOAT):
        raise EngineError(f"unknown mode {mode!r}")


def _check_alphabet(automaton: WeakAutomaton, process: BranchingProcess) -> None:
    if tuple(process.alphabet) != tuple(automaton.alphabet):
        raise EngineError(
            f"process alphabet {list(process.alphabet)} does not match automaton alphabet {list(automaton.alphabet)}")


# --------------------------------------------------------------------------
# enclosure


def _enclose(space, budget, epsilon, max_bits, branching, refine) -> PipelineResult:
    automaton = space.automaton
    plan = plan_stages(automaton)
    budgets = _budgets(budget, plan.N)
    if space.mode == FLOAT:
        max_bits = None
    lo = hi = space.dirac(automaton.full_mask)
    bottom = space.dirac(0)
    top = space.dirac(automaton.full_mask)
    records = []
    for stage in plan.stages:
        lo, hi = _enter(space, stage, lo), _enter(space, stage, hi)
        if stage.n == plan.N:
            records.append(StageRecord(stage, lo, TAG_LOWER, alpha_hi=hi))
            break
        b = budgets[stage.n]
        if stage.kind == SAFETY:
            # any upper bound of the base stays one; a lower start must be a post-fixpoint
            lo_start = lo if space.leq(lo, space.step(lo)) else bottom
            hi_start = hi
        else:
            lo_start = lo
            hi_start = hi if space.leq(space.step(hi), hi) else top
        direction = DESCENDING if stage.kind == SAFETY else ASCENDING
        lo_res = run_chain(lo_start, space.step, direction=direction, budget=b, epsilon=epsilon,
                           max_bits=max_bits, round_side="down")
        hi_res = run_chain(hi_start, space.step, direction=direction, budget=b, epsilon=epsilon,
                           max_bits=max_bits, round_side="up")
        records.append(StageRecord(stage, lo, TAG_LOWER, alpha_hi=hi, beta_lo=lo_res, beta_hi=hi_res))
        lo, hi = lo_res.final, hi_res.final
    m_lo, m_hi = space.measure(lo), space.measure(hi)
    meta = {}
    if refine and space.mode == EXACT:
        # exact-mode point tags are sound, so their bounds may be intersected in
        point = _pipeline(space, budget, epsilon, max_bits, False, False, branching)
        p_lo, p_hi = point.bounds()
        if p_lo > m_lo or p_hi < m_hi:
            m_lo, m_hi = max(m_lo, p_lo), min(m_hi, p_hi)
            meta["refined_by"] = f"point pipeline ({point.tag})"
    estimate = (m_lo + m_hi) / 2
    tag = TAG_EXACT if m_lo == m_hi and space.mode == EXACT else TAG_MIXED
    return PipelineResult(plan, tuple(records), estimate, (m_lo, m_hi), "enclosure", space.mode, tag, branching,
                          meta)


def enclose(automaton: WeakAutomaton, budget=30, mode: str = EXACT, *, epsilon: float | None = None,
            max_bits: int | None = DEFAULT_MAX_BITS, refine: bool = True) -> PipelineResult:
    """Sound interval for the measure from a pair of bracketing chains.

    In a safety stage the upper chain continues from the incoming upper
    bound; the lower chain continues from the incoming lower bound when that
    is a post-fixpoint and otherwise restarts at ``dirac(∅)``.  Reachability
    stages are dual, restarting the upper chain at ``dirac(Q)``.  Exact-mode
    rounding is outward, so the interval stays sound at every budget.
    With ``refine`` (exact mode) the interval is intersected with the bounds
    certified by the point pipeline.
    """
    _check_mode(mode)
    return _enclose(_PlainSpace(automaton, mode), budget, epsilon, max_bits, False, refine)


def enclose_branching(automaton: WeakAutomaton, process: BranchingProcess, budget=30, mode: str = EXACT, *,
                      epsilon: float | None = None, max_bits: int | None = DEFAULT_MAX_BITS,
                      refine: bool = True) -> PipelineResult:
    _check_mode(mode)
    _check_alphabet(automaton, process)
    return _enclose(_FamilySpace(automaton, process, mode), budget, epsilon, max_bits, True, refine)


# --------------------------------------------------------------------------
# comparison


def compare(result: PipelineResult, q) -> str:
    """``GT``/``LT`` when the known interval excludes ``q``, ``EQ`` when the
    measure is certified to equal ``q`` exactly, else ``UNKNOWN``."""
    q = Fraction(q) if not isinstance(q, Fraction) else q
    if not 0 <= q <= 1:
        raise EngineError("q must lie in [0, 1]")
    qq = mpq(q.numerator, q.denominator)
    lo, hi = result.bounds()
    if result.arithmetic == FLOAT:
        lo, hi, qq = float(lo), float(hi), float(qq)
    if lo > qq:
        return GT
    if hi < qq:
        return LT
    if result.certified and lo == hi == qq:
        return EQ
    return UNKNOWN


def holds(verdict: str, rel: str) -> bool | None:
    """Whether ``measure rel q`` holds given a verdict; ``None`` if unknown."""
    if verdict == UNKNOWN:
        return None
    return {"lt": verdict == LT, "gt": verdict == GT, "eq": verdict == EQ}[rel]

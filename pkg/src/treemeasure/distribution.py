"""Distributions over sets of automaton states, ordered by stochastic
dominance, and the one-step operators acting on them.

Exact mode stores ``gmpy2.mpq`` entries.  The one-step operator works on a
common denominator internally and reduces once per application.  Entries
whose denominators outgrow ``max_bits`` can be rounded *in the order*: all
entries are floored to a dyadic grid and the leftover mass is moved either to
the full set (rounding up) or to the empty set (rounding down).  Moving mass
to a superset only increases every up-set sum, so rounded iterates remain
one-sided bounds.
"""
from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpq, mpz

from .automaton import BranchingProcess, WeakAutomaton

FLOAT_SUM_TOL = 2.0 ** -40
DEFAULT_MAX_BITS = 1 << 14
BRUTEFORCE_MAX_STATES = 6

EXACT = "exact"
FLOAT = "float"


class DistributionError(ValueError):
    pass


class PreconditionError(DistributionError):
    """Start point lies on the wrong side of its image under the operator."""


def _to_mpq(value) -> mpq:
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


@dataclass(frozen=True, eq=False)
class StateSetDistribution:
    """Probability vector over the ``K = 2**width`` subsets of states.

    Exactly one of ``exact`` (tuple of ``mpq``) and ``floats`` (read-only
    float64 array) is set.
    """

    width: int
    exact: tuple | None = None
    floats: np.ndarray | None = field(default=None, repr=False)

    # construction -------------------------------------------------------

    @classmethod
    def from_values(cls, width: int, values: Iterable, *, check: bool = True) -> "StateSetDistribution":
        vals = tuple(_to_mpq(v) for v in values)
        dist = cls(width, exact=vals)
        if check:
            dist.check()
        return dist

    @classmethod
    def from_floats(cls, width: int, values, *, check: bool = True) -> "StateSetDistribution":
        arr = np.array(values, dtype=np.float64)
        arr.setflags(write=False)
        dist = cls(width, floats=arr)
        if check:
            dist.check()
        return dist

    def check(self) -> None:
        k = 1 << self.width
        if len(self) != k:
            raise DistributionError(f"expected {k} entries, got {len(self)}")
        if self.exact is not None:
            if any(v < 0 or v > 1 for v in self.exact):
                raise DistributionError("entry outside [0, 1]")
            if sum(self.exact, mpq(0)) != 1:
                raise DistributionError("entries do not sum to 1")
        else:
            if np.any(self.floats < 0) or np.any(self.floats > 1):
                raise DistributionError("entry outside [0, 1]")
            if abs(float(self.floats.sum()) - 1.0) > FLOAT_SUM_TOL:
                raise DistributionError("entries do not sum to 1")

    # access -------------------------------------------------------------

    @property
    def mode(self) -> str:
        return EXACT if self.exact is not None else FLOAT

    @property
    def size(self) -> int:
        return 1 << self.width

    def __len__(self) -> int:
        return len(self.exact) if self.exact is not None else len(self.floats)

    def __getitem__(self, mask: int):
        return self.exact[mask] if self.exact is not None else float(self.floats[mask])

    def values(self) -> list:
        return list(self.exact) if self.exact is not None else [float(v) for v in self.floats]

    def support(self) -> list[int]:
        if self.exact is not None:
            return [i for i, v in enumerate(self.exact) if v]
        return [int(i) for i in np.flatnonzero(self.floats)]

    def up_sum(self, upset) -> object:
        """Mass of an up-set given as a predicate or a ``K``-bit mask."""
        if callable(upset):
            idx = [p for p in range(self.size) if upset(p)]
        else:
            idx = [p for p in range(self.size) if upset >> p & 1]
        if self.exact is not None:
            return sum((self.exact[p] for p in idx), mpq(0))
        return float(self.floats[idx].sum()) if idx else 0.0

    def containing(self, state_mask: int):
        """Mass of all subsets that contain every state of ``state_mask``."""
        return self.up_sum(lambda p: p & state_mask == state_mask)

    def to_float(self) -> "StateSetDistribution":
        if self.floats is not None:
            return self
        return StateSetDistribution.from_floats(self.width, [float(v) for v in self.exact], check=False)

    def as_fractions(self) -> list[Fraction]:
        if self.exact is None:
            return [Fraction(float(v)) for v in self.floats]
        return [Fraction(int(v.numerator), int(v.denominator)) for v in self.exact]

    def bits(self) -> int:
        """Bits needed for the largest denominator, ``ceil(log2 den)``
        (0 in float mode), so ``2**b`` counts as ``b`` bits."""
        if self.exact is None:
            return 0
        return max((v.denominator - 1).bit_length() for v in self.exact)

    def max_abs_diff(self, other: "StateSetDistribution") -> float:
        a = self.to_float().floats
        b = other.to_float().floats
        return float(np.max(np.abs(a - b)))

    def __eq__(self, other):
        if not isinstance(other, StateSetDistribution):
            return NotImplemented
        if self.width != other.width or self.mode != other.mode:
            return False
        if self.exact is not None:
            return self.exact == other.exact
        return bool(np.array_equal(self.floats, other.floats))

    def __hash__(self):
        return hash((self.width, self.exact if self.exact is not None else self.floats.tobytes()))

    def round(self, side: str, max_bits: int | None) -> "StateSetDistribution":
        """Coarsen to denominators ``2**max_bits`` moving the leftover mass
        up (to the full set) or down (to the empty set)."""
        if self.exact is None or max_bits is None or self.bits() <= max_bits:
            return self
        scale = mpz(1) << max_bits
        floors = [gmpy2.f_div(v.numerator * scale, v.denominator) for v in self.exact]
        rest = scale - sum(floors)
        target = self.size - 1 if side == "up" else 0
        floors[target] += rest
        return StateSetDistribution(self.width, exact=tuple(mpq(n, scale) for n in floors))

    def dump(self, automaton: WeakAutomaton | None = None) -> str:
        """One line per subset, ``P={q0,q1} 3/8``, in canonical order."""
        lines = []
        for p in range(self.size):
            if automaton is not None:
                label = automaton.format_mask(p)
            else:
                label = "{" + ",".join(f"q{i}" for i in range(self.width) if p >> i & 1) + "}"
            lines.append(f"P={label} {format_value(self[p])}")
        return "\n".join(lines) + "\n"


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    v = mpq(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def parse_dump(text: str, width: int) -> StateSetDistribution:
    """Read the output of :meth:`StateSetDistribution.dump` back."""
    vals = []
    for line in text.splitlines():
        if not line.strip():
            continue
        _, _, value = line.rpartition(" ")
        vals.append(mpq(value) if "." not in value and "e" not in value else float(value))
    if any(isinstance(v, float) for v in vals):
        return StateSetDistribution.from_floats(width, vals)
    return StateSetDistribution.from_values(width, vals)


def dirac(width: int, mask: int, mode: str = EXACT) -> StateSetDistribution:
    """Point mass on the subset ``mask``."""
    k = 1 << width
    if not 0 <= mask < k:
        raise DistributionError("mask out of range")
    if mode == EXACT:
        return StateSetDistribution(width, exact=tuple(mpq(1) if p == mask else mpq(0) for p in range(k)))
    arr = np.zeros(k)
    arr[mask] = 1.0
    arr.setflags(write=False)
    return StateSetDistribution(width, floats=arr)


# --------------------------------------------------------------------------
# the order


@functools.lru_cache(maxsize=None)
def upsets(width: int) -> tuple[int, ...]:
    """All upward-closed families of subsets of a ``width``-element set,
    each as a ``2**width``-bit mask over subset indices."""
    if width > BRUTEFORCE_MAX_STATES:
        raise DistributionError(f"up-set enumeration limited to {BRUTEFORCE_MAX_STATES} states")
    if width == 0:
        return (0, 1)
    smaller = upsets(width - 1)
    half = 1 << (width - 1)
    # families without the top element (u0) must sit inside those with it (u1)
    return tuple(u0 | (u1 << half) for u1 in smaller for u0 in smaller if u0 & ~u1 == 0)


def is_upset(family: int, width: int) -> bool:
    for p in range(1 << width):
        if family >> p & 1:
            for q in range(width):
                if not family >> (p | 1 << q) & 1:
                    return False
    return True


def _common_integers(*dists: StateSetDistribution) -> list[list[int]]:
    """Scale several distributions to integer vectors over one denominator."""
    fracs = [d.as_fractions() for d in dists]
    den = 1
    for fs in fracs:
        for f in fs:
            den = den * f.denominator // gmpy2.gcd(den, f.denominator)
    den = int(den)
    return [[f.numerator * (den // f.denominator) for f in fs] for fs in fracs]


def leq_bruteforce(alpha: StateSetDistribution, beta: StateSetDistribution) -> bool:
    """α ⪯ β by checking every upward-closed family (|Q| ≤ 6)."""
    if alpha.width != beta.width:
        raise DistributionError("width mismatch")
    if alpha.width > BRUTEFORCE_MAX_STATES:
        raise DistributionError(f"brute-force order check limited to {BRUTEFORCE_MAX_STATES} states")
    if alpha.exact is None or beta.exact is None:
        diff = list(beta.to_float().floats - alpha.to_float().floats)
        floor = -FLOAT_TOL
    else:
        a, b = _common_integers(alpha, beta)
        diff = [y - x for x, y in zip(a, b)]
        floor = 0
    k = alpha.size
    for family in upsets(alpha.width):
        if sum(diff[p] for p in range(k) if family >> p & 1) < floor:
            return False
    return True


def _max_flow(n: int, cap: dict, source: int, sink: int) -> int:
    """Edmonds-Karp on an integer-capacity graph given as nested dicts."""
    flow = 0
    residual = {u: dict(vs) for u, vs in cap.items()}
    for u, vs in cap.items():
        for v in vs:
            residual.setdefault(v, {}).setdefault(u, 0)
    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, c in residual.get(u, {}).items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return flow
        path = []
        v = sink
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        push = min(residual[u][v] for u, v in path)
        for u, v in path:
            residual[u][v] -= push
            residual[v][u] += push
        flow += push


FLOAT_TOL = 1e-9
_FLOAT_SCALE = 1 << 50


def leq_coupling(alpha: StateSetDistribution, beta: StateSetDistribution) -> bool:
    """α ⪯ β iff mass of α can be routed along inclusions P ⊆ P' onto β.

    Builds source → P (capacity α(P)), P → P' for P ⊆ P' (unbounded),
    P' → sink (capacity β(P')) over a common integer denominator and checks
    that the maximum flow saturates.
    """
    if alpha.width != beta.width:
        raise DistributionError("width mismatch")
    slack = 0
    if alpha.exact is None or beta.exact is None:
        # float mode: quantize and accept a shortfall of FLOAT_TOL
        a = [round(float(v) * _FLOAT_SCALE) for v in alpha.to_float().floats]
        b = [round(float(v) * _FLOAT_SCALE) for v in beta.to_float().floats]
        slack = int(FLOAT_TOL * _FLOAT_SCALE) + 2 * alpha.size
        if abs(sum(a) - sum(b)) > slack:
            raise DistributionError("distributions have different total mass")
    else:
        a, b = _common_integers(alpha, beta)
        if sum(a) != sum(b):
            raise DistributionError("distributions have different total mass")
    total = sum(a)
    k = alpha.size
    source, sink = 2 * k, 2 * k + 1
    cap: dict[int, dict[int, int]] = {source: {}}
    big = total + 1
    for p in range(k):
        if a[p]:
            cap[source][p] = a[p]
            row = cap.setdefault(p, {})
            # superset enumeration of p
            sup = p
            while True:
                if b[sup]:
                    row[k + sup] = big
                if sup == k - 1:
                    break
                sup = (sup + 1) | p
    for p in range(k):
        if b[p]:
            cap.setdefault(k + p, {})[sink] = b[p]
    return _max_flow(2 * k + 2, cap, source, sink) >= total - slack


leq = leq_coupling


# --------------------------------------------------------------------------
# operators


def _table_lists(automaton: WeakAutomaton):
    table = automaton.delta_table()
    if table is None:
        return None
    cache = automaton._table
    if len(cache) < 2:
        cache.append(table.tolist())
    return cache[1]


def _pair_products(beta: StateSetDistribution):
    """Integer products ``n_i * n_j`` over a common denominator ``d``;
    returns ``(support, numerators, d)``."""
    support = beta.support()
    den = mpz(1)
    for i in support:
        d = beta.exact[i].denominator
        den = den * d // gmpy2.gcd(den, d)
    nums = {i: beta.exact[i].numerator * (den // beta.exact[i].denominator) for i in support}
    return support, nums, den


def _finish(width: int, acc: list, den) -> StateSetDistribution:
    return StateSetDistribution(width, exact=tuple(mpq(n, den) if n else mpq(0) for n in acc))


def apply_F(beta: StateSetDistribution, automaton: WeakAutomaton) -> StateSetDistribution:
    """One step: the distribution of Δ(P_L, a, P_R) when P_L, P_R are drawn
    independently from β and the letter ``a`` uniformly."""
    k = automaton.num_subsets
    letters = automaton.num_letters
    if beta.width != automaton.num_states:
        raise DistributionError("distribution width does not match the automaton")
    if beta.exact is None:
        table = automaton.delta_table()
        v = beta.floats
        out = np.zeros(k)
        if table is not None:
            outer = np.outer(v, v).ravel()
            for a in range(letters):
                out += np.bincount(table[a].ravel().astype(np.int64), weights=outer, minlength=k)
        else:
            sup = np.flatnonzero(v)
            for i in sup:
                for j in sup:
                    w = v[i] * v[j]
                    for a in range(letters):
                        out[automaton.delta_sets(int(i), a, int(j))] += w
        # renormalize: the map is quadratic, so lost mass would compound
        out /= out.sum()
        out.setflags(write=False)
        return StateSetDistribution(beta.width, floats=out)
    support, nums, den = _pair_products(beta)
    table = _table_lists(automaton)
    acc = [0] * k
    for i in support:
        ni = nums[i]
        for j in support:
            prod = ni * nums[j]
            if table is not None:
                for a in range(letters):
                    acc[table[a][i][j]] += prod
            else:
                for a in range(letters):
                    acc[automaton.delta_sets(i, a, j)] += prod
    return _finish(beta.width, acc, den * den * letters)


def pushforward(beta: StateSetDistribution, fn: Callable[[int], int]) -> StateSetDistribution:
    k = beta.size
    if beta.exact is None:
        out = np.zeros(k)
        for p in range(k):
            out[fn(p)] += beta.floats[p]
        out.setflags(write=False)
        return StateSetDistribution(beta.width, floats=out)
    acc = [mpq(0)] * k
    for p in beta.support():
        acc[fn(p)] += beta.exact[p]
    return StateSetDistribution(beta.width, exact=tuple(acc))


def apply_Q_lt(beta: StateSetDistribution, automaton: WeakAutomaton, n: int) -> StateSetDistribution:
    """Push β forward along P ↦ P ∩ Q_{<n}."""
    keep = automaton.states_below(n)
    return pushforward(beta, lambda p: p & keep)


def apply_Q_geq(beta: StateSetDistribution, automaton: WeakAutomaton, n: int) -> StateSetDistribution:
    """Push β forward along P ↦ P ∪ Q_{≥n}."""
    add = automaton.states_at_least(n)
    return pushforward(beta, lambda p: p | add)


# --------------------------------------------------------------------------
# letter-indexed families (branching processes)


@dataclass(frozen=True, eq=False)
class FamilyDistribution:
    """One distribution per letter; ordered coordinate-wise."""

    members: tuple[StateSetDistribution, ...]

    @property
    def width(self) -> int:
        return self.members[0].width

    @property
    def mode(self) -> str:
        return self.members[0].mode

    def __getitem__(self, letter: int) -> StateSetDistribution:
        return self.members[letter]

    def __len__(self) -> int:
        return len(self.members)

    def __eq__(self, other):
        if not isinstance(other, FamilyDistribution):
            return NotImplemented
        return self.members == other.members

    def __hash__(self):
        return hash(self.members)

    def bits(self) -> int:
        return max(m.bits() for m in self.members)

    def max_abs_diff(self, other: "FamilyDistribution") -> float:
        return max(a.max_abs_diff(b) for a, b in zip(self.members, other.members))

    def round(self, side: str, max_bits: int | None) -> "FamilyDistribution":
        return FamilyDistribution(tuple(m.round(side, max_bits) for m in self.members))

    def map(self, fn) -> "FamilyDistribution":
        return FamilyDistribution(tuple(fn(m) for m in self.members))

    def mixture(self, weights: Sequence) -> StateSetDistribution:
        """Σ_a w(a)·β_a."""
        if self.mode == EXACT:
            acc = [mpq(0)] * self.members[0].size
            for w, m in zip(weights, self.members):
                w = _to_mpq(w)
                if w:
                    for p in m.support():
                        acc[p] += w * m.exact[p]
            return StateSetDistribution(self.width, exact=tuple(acc))
        out = sum(float(w) * m.floats for w, m in zip(weights, self.members))
        out.setflags(write=False)
        return StateSetDistribution(self.width, floats=out)


def family_leq(alpha: FamilyDistribution, beta: FamilyDistribution) -> bool:
    return all(leq_coupling(a, b) for a, b in zip(alpha.members, beta.members))


def uniform_family(dist: StateSetDistribution, letters: int) -> FamilyDistribution:
    return FamilyDistribution((dist,) * letters)


def apply_F_process(family: FamilyDistribution, automaton: WeakAutomaton,
                    process: BranchingProcess) -> FamilyDistribution:
    """Lifted step for a branching process: for each letter ``a``,
    Σ_{(l,r)} τ(a)(l,r) · Σ_{Δ(P_L,a,P_R)=P} β_l(P_L)·β_r(P_R)."""
    k = automaton.num_subsets
    table = _table_lists(automaton)
    out = []
    if family.mode == FLOAT:
        np_table = automaton.delta_table()
        for a, row in enumerate(process.branch):
            acc = np.zeros(k)
            for (l, r), p in row:
                vl, vr = family[l].floats, family[r].floats
                if np_table is not None:
                    acc += float(p) * np.bincount(np_table[a].ravel().astype(np.int64),
                                                  weights=np.outer(vl, vr).ravel(), minlength=k)
                else:
                    for i in np.flatnonzero(vl):
                        for j in np.flatnonzero(vr):
                            acc[automaton.delta_sets(int(i), a, int(j))] += float(p) * vl[i] * vr[j]
            acc /= acc.sum()
            acc.setflags(write=False)
            out.append(StateSetDistribution(family.width, floats=acc))
        return FamilyDistribution(tuple(out))
    prepared = [_pair_products(m) for m in family.members]
    for a, row in enumerate(process.branch):
        den_all = mpz(1)
        for (l, r), p in row:
            d = prepared[l][2] * prepared[r][2] * p.denominator
            den_all = den_all * d // gmpy2.gcd(den_all, d)
        acc = [0] * k
        for (l, r), p in row:
            sl, nl, dl = prepared[l]
            sr, nr, dr = prepared[r]
            coef = p.numerator * (den_all // (dl * dr * p.denominator))
            for i in sl:
                ci = coef * nl[i]
                for j in sr:
                    target = table[a][i][j] if table is not None else automaton.delta_sets(i, a, j)
                    acc[target] += ci * nr[j]
        out.append(_finish(family.width, acc, den_all))
    return FamilyDistribution(tuple(out))


# --------------------------------------------------------------------------
# iteration

DESCENDING = "descending"
ASCENDING = "ascending"
STOP_BUDGET = "budget"
STOP_FIXPOINT = "exact-fixpoint"
STOP_EPSILON = "epsilon"


@dataclass(frozen=True)
class IterationResult:
    final: object
    iterations: int
    direction: str
    stopped_by: str
    trace: tuple | None = None
    rounded: bool = False

    @property
    def exact_fixpoint(self) -> bool:
        return self.stopped_by == STOP_FIXPOINT


def run_chain(start, step: Callable, *, direction: str, budget: int, epsilon: float | None = None,
              max_bits: int | None = DEFAULT_MAX_BITS, round_side: str | None = None,
              trace: Callable | None = None, check: Callable | None = None) -> IterationResult:
    """Apply ``step`` up to ``budget`` times starting from ``start``.

    ``check(start, step(start))`` is called once if given and must raise on
    a precondition violation.  In exact mode the chain stops as soon as two
    consecutive iterates coincide; in float mode when their max-norm distance
    drops below ``epsilon``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if direction not in (DESCENDING, ASCENDING):
        raise ValueError(f"unknown direction {direction!r}")
    side = round_side or ("up" if direction == DESCENDING else "down")
    cur = start
    values = [trace(cur)] if trace is not None else None
    rounded = False
    stopped = STOP_BUDGET
    done = 0
    for k in range(budget):
        nxt = step(cur)
        if k == 0 and check is not None:
            check(cur, nxt)
        done = k + 1
        if nxt.mode == EXACT:
            if nxt == cur:
                stopped = STOP_FIXPOINT
                cur = nxt
                if values is not None:
                    values.append(trace(cur))
                break
            if max_bits is not None and nxt.bits() > max_bits:
                nxt = nxt.round(side, max_bits)
                rounded = True
        cur_prev, cur = cur, nxt
        if values is not None:
            values.append(trace(cur))
        if cur.mode == FLOAT and epsilon is not None and cur.max_abs_diff(cur_prev) < epsilon:
            stopped = STOP_EPSILON
            break
    return IterationResult(cur, done, direction, stopped, tuple(values) if values is not None else None, rounded)


def iterate(start: StateSetDistribution, automaton: WeakAutomaton, direction: str = DESCENDING,
            budget: int = 30, epsilon: float | None = None, *, trace=None,
            max_bits: int | None = DEFAULT_MAX_BITS, check: bool = True,
            round_side: str | None = None) -> IterationResult:
    """Iterate the one-step operator from ``start``.

    Descending runs require ``apply_F(start) ⪯ start`` and ascending runs the
    reverse; both are verified with :func:`leq_coupling` unless ``check`` is
    false.  ``trace`` may be an up-set mask, a predicate on masks or a
    callable on distributions; its value is recorded for the start and every
    iterate.
    """
    if trace is not None and not _is_dist_callable(trace):
        upset = trace
        trace_fn = lambda d: d.up_sum(upset)  # noqa: E731
    else:
        trace_fn = trace

    def verify(cur, nxt):
        ok = leq_coupling(nxt, cur) if direction == DESCENDING else leq_coupling(cur, nxt)
        if not ok:
            raise PreconditionError(
                f"{direction} iteration needs the start to be "
                f"{'above' if direction == DESCENDING else 'below'} its image")

    return run_chain(start, lambda b: apply_F(b, automaton), direction=direction, budget=budget,
                     epsilon=epsilon, max_bits=max_bits, round_side=round_side, trace=trace_fn,
                     check=verify if check else None)


class _DistTrace:
    """Marks a callable as taking a distribution rather than a mask."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, d):
        return self.fn(d)


def on_distribution(fn) -> _DistTrace:
    return _DistTrace(fn)


def _is_dist_callable(trace) -> bool:
    return isinstance(trace, _DistTrace)


def containing_state(state: int) -> Callable[[int], bool]:
    """Predicate for the up-set {P : state ∈ P}."""
    return lambda p: bool(p >> state & 1)

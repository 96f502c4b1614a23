"""Compile the measure of an automaton into a prenex formula over the reals.

The formula ``psi(x)`` has four quantifier blocks::

    exists alpha_n, beta_n      (distributions, beta_n a fixpoint)
    forall theta                (distribution, fixpoint)
    exists iota_n               (up-set indicators)
    forall gamma_n              (up-set indicators)

Relativized quantifiers expand to conjunction under ``exists`` and
implication under ``forall``, which gives the matrix

    G_ab and (G_theta -> (G_iota and (G_gamma -> body)))

Distributions are vectors indexed by subset masks in ascending order.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from ..automaton import BranchingProcess, WeakAutomaton
from ..engine import plan_stages
from .ast import (
    EXISTS, FORALL, Add, And, Cmp, Implies, Mul, Not, Num, Or, RealFormula, Var, add, conj, walk,
)

DEFAULT_ATOM_CAP = 5_000_000

ZERO = Num(0)
ONE = Num(1)


class FormulaSizeError(ValueError):
    def __init__(self, estimate: int, cap: int):
        super().__init__(f"formula would have about {estimate} atoms, above the cap of {cap}")
        self.estimate = estimate
        self.cap = cap


# --------------------------------------------------------------------------
# variable naming


def names(prefix: str, K: int, n: int | None = None, letter: int | None = None) -> list[str]:
    """Variable names ``prefix[_n][_letter]_k`` for ``k < K``."""
    parts = [prefix]
    if n is not None:
        parts.append(str(n))
    if letter is not None:
        parts.append(str(letter))
    stem = "_".join(parts)
    return [f"{stem}_{k}" for k in range(K)]


def _vars(ns: Sequence[str]) -> list[Var]:
    return [Var(s) for s in ns]


# --------------------------------------------------------------------------
# gadgets


def dist(v: Sequence[Var]) -> And:
    """Entries sum to one and each lies in [0, 1]."""
    parts = [Cmp("=", add(*v), ONE)]
    for x in v:
        parts.append(Cmp("<=", ZERO, x))
        parts.append(Cmp("<=", x, ONE))
    return And(tuple(parts))


def strict_inclusions(width: int) -> list[tuple[int, int]]:
    """All pairs ``P ⊊ P'`` of subsets of a ``width``-element set."""
    k = 1 << width
    out = []
    for p in range(k):
        rest = (k - 1) & ~p
        sub = rest
        while sub:
            out.append((p, p | sub))
            sub = (sub - 1) & rest
    out.sort()
    return out


def upward(v: Sequence[Var], width: int) -> And:
    """0/1 entries describing an upward-closed family of subsets."""
    parts = [Or((Cmp("=", x, ZERO), Cmp("=", x, ONE))) for x in v]
    for p, q in strict_inclusions(width):
        parts.append(Implies(Cmp("=", v[p], ONE), Cmp("=", v[q], ONE)))
    return And(tuple(parts))


def minor(a: Sequence[Var], b: Sequence[Var], iota: Sequence[Var]) -> Cmp:
    """Mass of ``a`` on the family ``iota`` is at most that of ``b``."""
    lhs = add(*(Mul((x, i)) for x, i in zip(a, iota)))
    rhs = add(*(Mul((y, i)) for y, i in zip(b, iota)))
    return Cmp("<=", lhs, rhs)


def build_gadgets(automaton: WeakAutomaton) -> dict:
    """The three templates over fresh vectors ``a``, ``b``, ``i``."""
    K = automaton.num_subsets
    a, b, i = _vars(names("a", K)), _vars(names("b", K)), _vars(names("i", K))
    return {"dist": dist(a), "upward": upward(i, automaton.num_states), "minor": minor(a, b, i)}


# --------------------------------------------------------------------------
# operator equalities


def _delta_pairs(automaton: WeakAutomaton) -> list[list[tuple[int, int, int]]]:
    """For every target subset, the triples (left, letter, right) mapped onto it."""
    K = automaton.num_subsets
    out: list[list[tuple[int, int, int]]] = [[] for _ in range(K)]
    table = automaton.delta_table()
    for a in range(automaton.num_letters):
        for left in range(K):
            for right in range(K):
                target = int(table[a, left, right]) if table is not None else automaton.delta_sets(left, a, right)
                out[target].append((left, a, right))
    return out


def f_equalities(target: Sequence[Var], source: Sequence[Var], automaton: WeakAutomaton, pairs=None) -> list[Cmp]:
    """``target = F(source)`` coordinate-wise."""
    pairs = pairs if pairs is not None else _delta_pairs(automaton)
    coef = Num(Fraction(1, automaton.num_letters))
    out = []
    for p, triples in enumerate(pairs):
        if not triples:
            out.append(Cmp("=", target[p], ZERO))
            continue
        terms = [Mul((source[l], source[r])) for l, _, r in triples]
        out.append(Cmp("=", target[p], Mul((coef, add(*terms)))))
    return out


def f_process_equalities(target: Sequence[Sequence[Var]], source: Sequence[Sequence[Var]],
                         automaton: WeakAutomaton, process: BranchingProcess) -> list[Cmp]:
    """``target[a] = F_P(source)[a]`` for every letter ``a``."""
    K = automaton.num_subsets
    table = automaton.delta_table()
    out = []
    for a, row in enumerate(process.branch):
        buckets: list[list[tuple[int, int]]] = [[] for _ in range(K)]
        for left in range(K):
            for right in range(K):
                t = int(table[a, left, right]) if table is not None else automaton.delta_sets(left, a, right)
                buckets[t].append((left, right))
        for p in range(K):
            if not buckets[p]:
                out.append(Cmp("=", target[a][p], ZERO))
                continue
            terms = []
            for (l, r), prob in row:
                inner = add(*(Mul((source[l][x], source[r][y])) for x, y in buckets[p]))
                terms.append(Mul((Num(prob), inner)))
            out.append(Cmp("=", target[a][p], add(*terms)))
    return out


def pushforward_equalities(target: Sequence[Var], source: Sequence[Var], fn) -> list[Cmp]:
    K = len(target)
    pre: list[list[int]] = [[] for _ in range(K)]
    for p in range(K):
        pre[fn(p)].append(p)
    return [Cmp("=", target[p], add(*(source[s] for s in pre[p])) if pre[p] else ZERO) for p in range(K)]


# --------------------------------------------------------------------------
# size estimate


def estimate_atoms(automaton: WeakAutomaton, process: BranchingProcess | None = None) -> int:
    """Upper bound on the leaf count of :func:`build_psi` (or the branching
    variant), computed without building anything."""
    n = automaton.num_states
    K = 1 << n
    m = automaton.num_letters
    N = plan_stages(automaton).N
    stages = N + 1
    copies = 1 if process is None else m
    d = 5 * K + 1
    up = 4 * K + 4 * (3 ** n - 2 ** n)
    mi = 4 * K
    if process is None:
        f = 2 * K + 2 * m * K * K
    else:
        f = sum(K + len(row) * K + 2 * len(row) * K * K for row in process.branch)
    total = 0
    total += stages * 2 * d * copies + stages * f       # alpha/beta guards
    total += d * copies + f                              # theta guard
    total += 2 * stages * up * copies                    # iota and gamma guards
    total += 2 * K * copies                              # alpha_0
    total += N * (3 * K - 1) * copies                    # stage links
    total += stages * 3 * mi * copies                    # order conditions
    total += (K // 2) * copies * 2 + 1                   # final sum
    return total


# --------------------------------------------------------------------------
# psi


def _guard(check: int | None, estimate: int) -> None:
    if check is not None and estimate > check:
        raise FormulaSizeError(estimate, check)


def _body(automaton, N, alpha, beta, theta, iota, gamma, minor_fn, alpha0_fn, link_fn, x_term):
    parts = {}
    parts["alpha0"] = alpha0_fn(alpha[0])
    links = []
    for n in range(1, N + 1):
        op = "lt" if n % 2 else "geq"
        links.extend(link_fn(alpha[n], beta[n - 1], op, n))
    parts["b_to_a"] = And(tuple(links))
    order_ab = []
    order_bt = []
    for n in range(N + 1):
        if n % 2:
            order_ab.append(minor_fn(alpha[n], beta[n], gamma[n]))
            order_bt.append(Or((Not(minor_fn(alpha[n], theta, iota[n])), minor_fn(beta[n], theta, gamma[n]))))
        else:
            order_ab.append(minor_fn(beta[n], alpha[n], gamma[n]))
            order_bt.append(Or((Not(minor_fn(theta, alpha[n], iota[n])), minor_fn(theta, beta[n], gamma[n]))))
    parts["order_ab"] = And(tuple(order_ab))
    parts["order_bt"] = And(tuple(order_bt))
    parts["x"] = Cmp("=", x_term, Var("x"))
    return parts


def _assemble(parts: dict, guards: dict) -> object:
    body = And(tuple(parts[k] for k in ("alpha0", "b_to_a", "order_ab", "order_bt", "x")))
    inner = Implies(guards["gamma"], body)
    inner = conj(guards["iota"], inner)
    inner = Implies(guards["theta"], inner)
    return conj(guards["ab"], inner)


def build_psi(automaton: WeakAutomaton, *, cap: int | None = DEFAULT_ATOM_CAP) -> RealFormula:
    """The formula ``psi(x)`` whose unique solution is the measure."""
    _guard(cap, estimate_atoms(automaton))
    width = automaton.num_states
    K = automaton.num_subsets
    N = plan_stages(automaton).N
    alpha = [_vars(names("a", K, n)) for n in range(N + 1)]
    beta = [_vars(names("b", K, n)) for n in range(N + 1)]
    theta = _vars(names("th", K))
    iota = [_vars(names("i", K, n)) for n in range(N + 1)]
    gamma = [_vars(names("g", K, n)) for n in range(N + 1)]
    pairs = _delta_pairs(automaton)

    g_ab = []
    for n in range(N + 1):
        g_ab.extend([dist(alpha[n]), dist(beta[n])])
        g_ab.extend(f_equalities(beta[n], beta[n], automaton, pairs))
    guards = {
        "ab": conj(*g_ab),
        "theta": conj(dist(theta), *f_equalities(theta, theta, automaton, pairs)),
        "iota": conj(*(upward(v, width) for v in iota)),
        "gamma": conj(*(upward(v, width) for v in gamma)),
    }
    full = automaton.full_mask

    def alpha0(v):
        return And(tuple(Cmp("=", v[p], ONE if p == full else ZERO) for p in range(K)))

    def link(target, source, op, n):
        if op == "lt":
            keep = automaton.states_below(n)
            return pushforward_equalities(target, source, lambda p: p & keep)
        extra = automaton.states_at_least(n)
        return pushforward_equalities(target, source, lambda p: p | extra)

    init = automaton.initial
    x_term = add(*(alpha[N][p] for p in range(K) if p >> init & 1))
    parts = _body(automaton, N, alpha, beta, theta, iota, gamma, minor, alpha0, link, x_term)
    parts.update({f"guard_{k}": v for k, v in guards.items()})
    blocks = (
        (EXISTS, tuple(v.name for n in range(N + 1) for v in alpha[n] + beta[n])),
        (FORALL, tuple(v.name for v in theta)),
        (EXISTS, tuple(v.name for n in range(N + 1) for v in iota[n])),
        (FORALL, tuple(v.name for n in range(N + 1) for v in gamma[n])),
    )
    return RealFormula(blocks, _assemble(parts, guards), ("x",), parts)


def build_psi_branching(automaton: WeakAutomaton, process: BranchingProcess, *,
                        cap: int | None = DEFAULT_ATOM_CAP) -> RealFormula:
    """``psi(x)`` for the measure generated by a branching process; every
    distribution becomes a letter-indexed family."""
    if tuple(process.alphabet) != tuple(automaton.alphabet):
        raise ValueError("process alphabet does not match the automaton")
    _guard(cap, estimate_atoms(automaton, process))
    width = automaton.num_states
    K = automaton.num_subsets
    M = automaton.num_letters
    N = plan_stages(automaton).N

    def family(prefix, n=None):
        return [_vars(names(prefix, K, n, a)) for a in range(M)]

    alpha = [family("a", n) for n in range(N + 1)]
    beta = [family("b", n) for n in range(N + 1)]
    theta = family("th")
    iota = [family("i", n) for n in range(N + 1)]
    gamma = [family("g", n) for n in range(N + 1)]

    def fam_dist(f):
        return conj(*(dist(v) for v in f))

    def fam_upward(f):
        return conj(*(upward(v, width) for v in f))

    def fam_minor(a, b, i):
        return And(tuple(minor(a[l], b[l], i[l]) for l in range(M)))

    g_ab = []
    for n in range(N + 1):
        g_ab.extend([fam_dist(alpha[n]), fam_dist(beta[n])])
        g_ab.extend(f_process_equalities(beta[n], beta[n], automaton, process))
    guards = {
        "ab": conj(*g_ab),
        "theta": conj(fam_dist(theta), *f_process_equalities(theta, theta, automaton, process)),
        "iota": conj(*(fam_upward(f) for f in iota)),
        "gamma": conj(*(fam_upward(f) for f in gamma)),
    }
    full = automaton.full_mask

    def alpha0(f):
        return And(tuple(Cmp("=", v[p], ONE if p == full else ZERO) for v in f for p in range(K)))

    def link(target, source, op, n):
        if op == "lt":
            keep = automaton.states_below(n)
            fn = lambda p: p & keep  # noqa: E731
        else:
            extra = automaton.states_at_least(n)
            fn = lambda p: p | extra  # noqa: E731
        out = []
        for l in range(M):
            out.extend(pushforward_equalities(target[l], source[l], fn))
        return out

    init = automaton.initial
    terms = []
    for l, w in enumerate(process.init):
        if w:
            terms.append(Mul((Num(w), add(*(alpha[N][l][p] for p in range(K) if p >> init & 1)))))
    x_term = add(*terms)
    parts = _body(automaton, N, alpha, beta, theta, iota, gamma, fam_minor, alpha0, link, x_term)
    parts.update({f"guard_{k}": v for k, v in guards.items()})

    def flat(fams):
        return tuple(v.name for f in fams for vs in f for v in vs)

    blocks = (
        (EXISTS, tuple(v.name for n in range(N + 1) for f in (alpha[n], beta[n]) for vs in f for v in vs)),
        (FORALL, flat([theta])),
        (EXISTS, flat(iota)),
        (FORALL, flat(gamma)),
    )
    return RealFormula(blocks, _assemble(parts, guards), ("x",), parts)


# --------------------------------------------------------------------------
# comparison sentences


def integer_term(m: int):
    """``m`` over the signature (0, 1, +, *) by binary doubling:
    ``2k + b`` becomes ``(1 + 1) * k + b``."""
    if m < 0:
        raise ValueError("only natural numbers are rendered")
    if m <= 1:
        return Num(m)
    two = Add((ONE, ONE))
    term = ONE
    for bit in bin(m)[3:]:
        term = Mul((two, term))
        if bit == "1":
            term = Add((term, ONE))
    return term


def count_muls(term) -> int:
    return sum(1 for n in walk(term) if isinstance(n, Mul))


def build_compare(psi: RealFormula, q, rel: str) -> RealFormula:
    """Closed sentence ``exists x. psi(x) and (x rel q)``.

    ``rel`` reads as "measure rel q": ``gt`` asks whether the measure
    exceeds ``q``.  The rational is cleared of its denominator, so the
    atom is ``num rel' den * x`` with both integers written by doubling.
    """
    q = Fraction(q)
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if psi.free != ("x",):
        raise ValueError("formula must have exactly the free variable x")
    num, den = integer_term(q.numerator), integer_term(q.denominator)
    scaled = Mul((den, Var("x")))
    if rel == "eq":
        atom = Cmp("=", num, scaled)
    elif rel == "gt":
        atom = Cmp("<", num, scaled)
    elif rel == "lt":
        atom = Cmp("<", scaled, num)
    else:
        raise ValueError(f"unknown relation {rel!r}")
    quant, first = psi.blocks[0]
    if quant == EXISTS:
        blocks = ((EXISTS, ("x",) + first),) + psi.blocks[1:]
    else:
        blocks = ((EXISTS, ("x",)),) + psi.blocks
    parts = dict(psi.parts)
    parts["compare"] = atom
    return RealFormula(blocks, conj(atom, psi.matrix), (), parts)

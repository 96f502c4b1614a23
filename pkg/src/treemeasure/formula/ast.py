"""First-order formulas over the reals with rational constants."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Union

EXISTS = "exists"
FORALL = "forall"

CMP_OPS = ("=", "<=", "<", ">=", ">")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __init__(self, value):
        object.__setattr__(self, "value", Fraction(value))


@dataclass(frozen=True)
class Add:
    args: tuple


@dataclass(frozen=True)
class Mul:
    args: tuple


Term = Union[Var, Num, Add, Mul]


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Term
    rhs: Term

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class Implies:
    lhs: object
    rhs: object


Formula = Union[Cmp, And, Or, Not, Implies]

TRUE = And(())
FALSE = Or(())


def conj(*parts) -> And:
    """Conjunction, flattening nested conjunctions."""
    out = []
    for p in parts:
        if isinstance(p, And):
            out.extend(p.args)
        else:
            out.append(p)
    return And(tuple(out))


def add(*terms) -> Term:
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


@dataclass(frozen=True)
class RealFormula:
    """Prenex formula: quantifier blocks, a quantifier-free matrix, the free
    variables, and named conjuncts of the matrix body for inspection."""

    blocks: tuple[tuple[str, tuple[str, ...]], ...]
    matrix: object
    free: tuple[str, ...]
    parts: Mapping[str, object] = field(default_factory=dict, compare=False)

    @property
    def variables(self) -> tuple[str, ...]:
        out = list(self.free)
        for _, names in self.blocks:
            out.extend(names)
        return tuple(out)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def quantifier_pattern(self) -> str:
        return "".join("E" if q == EXISTS else "A" for q, _ in self.blocks)


# --------------------------------------------------------------------------
# traversal


def _children(node) -> tuple:
    if isinstance(node, (Add, Mul, And, Or)):
        return node.args
    if isinstance(node, Cmp):
        return (node.lhs, node.rhs)
    if isinstance(node, Not):
        return (node.arg,)
    if isinstance(node, Implies):
        return (node.lhs, node.rhs)
    return ()


def walk(node) -> Iterator:
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(_children(cur)))


def count_atoms(node) -> int:
    """Leaf occurrences (variables and numerals)."""
    return sum(1 for n in walk(node) if isinstance(n, (Var, Num)))


def count_comparisons(node) -> int:
    return sum(1 for n in walk(node) if isinstance(n, Cmp))


def is_quantifier_free(node) -> bool:
    return all(isinstance(n, (Var, Num, Add, Mul, Cmp, And, Or, Not, Implies)) for n in walk(node))


def free_names(node) -> set[str]:
    return {n.name for n in walk(node) if isinstance(n, Var)}


# --------------------------------------------------------------------------
# evaluation


def eval_term(term, env: Mapping[str, object]):
    if isinstance(term, Var):
        return env[term.name]
    if isinstance(term, Num):
        return term.value
    if isinstance(term, Add):
        total = 0
        for a in term.args:
            total = total + eval_term(a, env)
        return total
    if isinstance(term, Mul):
        prod = 1
        for a in term.args:
            prod = prod * eval_term(a, env)
        return prod
    raise TypeError(f"not a term: {term!r}")


def evaluate(formula, env: Mapping[str, object], tol: float = 0.0) -> bool:
    """Truth value of a quantifier-free formula.  With ``tol > 0``
    comparisons are relaxed by ``tol`` (for float witnesses)."""
    if isinstance(formula, Cmp):
        lhs = eval_term(formula.lhs, env)
        rhs = eval_term(formula.rhs, env)
        d = lhs - rhs
        if tol:
            d = float(d)
        op = formula.op
        if op == "=":
            return abs(d) <= tol
        if op == "<=":
            return d <= tol
        if op == "<":
            return d < tol if tol else d < 0
        if op == ">=":
            return d >= -tol
        return d > -tol if tol else d > 0
    if isinstance(formula, And):
        return all(evaluate(a, env, tol) for a in formula.args)
    if isinstance(formula, Or):
        return any(evaluate(a, env, tol) for a in formula.args)
    if isinstance(formula, Not):
        return not evaluate(formula.arg, env, tol)
    if isinstance(formula, Implies):
        return (not evaluate(formula.lhs, env, tol)) or evaluate(formula.rhs, env, tol)
    raise TypeError(f"not a formula: {formula!r}")

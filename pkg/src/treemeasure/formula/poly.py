"""Expansion of terms into polynomials with rational coefficients.

A polynomial is a dict from monomials (sorted tuples of variable names,
with repetition for powers) to non-zero ``Fraction`` coefficients.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Callable, Mapping

from .ast import Add, Cmp, Mul, Num, Var

Poly = dict


def _clean(p: Poly) -> Poly:
    return {m: c for m, c in p.items() if c}


def poly_add(p: Poly, q: Poly, scale: Fraction = Fraction(1)) -> Poly:
    out = dict(p)
    for m, c in q.items():
        out[m] = out.get(m, Fraction(0)) + scale * c
    return _clean(out)


def poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(sorted(m1 + m2))
            out[m] = out.get(m, Fraction(0)) + c1 * c2
    return _clean(out)


def expand(term, rename: Callable[[str], str] | None = None) -> Poly:
    """Expand ``term``; ``rename`` maps variable names (e.g. to collapse
    letter-indexed families onto one vector)."""
    if isinstance(term, Var):
        name = rename(term.name) if rename else term.name
        return {(name,): Fraction(1)}
    if isinstance(term, Num):
        return {(): term.value} if term.value else {}
    if isinstance(term, Add):
        out: Poly = {}
        for a in term.args:
            out = poly_add(out, expand(a, rename))
        return out
    if isinstance(term, Mul):
        out = {(): Fraction(1)}
        for a in term.args:
            out = poly_mul(out, expand(a, rename))
        return out
    raise TypeError(f"not a term: {term!r}")


def equation_poly(eq: Cmp, rename: Callable[[str], str] | None = None) -> Poly:
    """``lhs - rhs`` of an equality."""
    if eq.op != "=":
        raise ValueError("expected an equality")
    return poly_add(expand(eq.lhs, rename), expand(eq.rhs, rename), Fraction(-1))


def scale(p: Poly, factor: Fraction) -> Poly:
    return _clean({m: c * factor for m, c in p.items()})


def substitute(p: Poly, values: Mapping[str, Fraction]) -> Fraction:
    total = Fraction(0)
    for m, c in p.items():
        v = c
        for name in m:
            v *= values[name]
        total += v
    return total

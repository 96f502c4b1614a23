"""Variable assignments taken from engine results."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from ..distribution import FamilyDistribution, StateSetDistribution
from ..engine import PipelineResult
from .build import names


def _values(dist: StateSetDistribution) -> list:
    if dist.exact is not None:
        return [Fraction(int(v.numerator), int(v.denominator)) for v in dist.exact]
    return [float(v) for v in dist.floats]


def _put(env: dict, prefix: str, dist, n: int | None = None) -> None:
    if isinstance(dist, FamilyDistribution):
        for letter, member in enumerate(dist.members):
            env.update(zip(names(prefix, member.size, n, letter), _values(member)))
    elif isinstance(dist, StateSetDistribution):
        env.update(zip(names(prefix, dist.size, n), _values(dist)))
    else:
        # a plain sequence of numbers (e.g. an up-set indicator)
        env.update(zip(names(prefix, len(dist), n), dist))


def witness_assignment(result: PipelineResult, *, theta=None, iota: Sequence | None = None,
                       gamma: Sequence | None = None) -> dict:
    """Assignment of ``alpha_n``, ``beta_n`` and ``x`` from a point-mode
    result; ``beta_N`` is present only if the last stage was iterated.
    ``theta``, ``iota`` and ``gamma`` are filled in when given."""
    if result.mode != "point":
        raise ValueError("witnesses come from point-mode results")
    env: dict = {}
    for rec in result.stages:
        n = rec.stage.n
        _put(env, "a", rec.alpha, n)
        if rec.beta is not None:
            _put(env, "b", rec.beta.final, n)
    est = result.measure_estimate
    env["x"] = Fraction(int(est.numerator), int(est.denominator)) if result.arithmetic == "exact" else float(est)
    if theta is not None:
        _put(env, "th", theta)
    for prefix, seq in (("i", iota), ("g", gamma)):
        if seq is not None:
            for n, v in enumerate(seq):
                _put(env, prefix, v, n)
    return env

"""Shared fixtures: the shipped corpus and small helpers."""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import pytest

from treemeasure.automaton import load_automaton, load_process

CORPUS_DIR = Path(__file__).parent / "corpus"
PROCESS_DIR = CORPUS_DIR / "processes"


def corpus_paths() -> list[Path]:
    return sorted(CORPUS_DIR.glob("*.aut"))


@lru_cache(maxsize=None)
def load_corpus() -> dict:
    return {p.stem: load_automaton(p) for p in corpus_paths()}


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def reach(corpus):
    return corpus["reach"]


@pytest.fixture(scope="session")
def safety_half(corpus):
    return corpus["safety_half"]


@pytest.fixture(scope="session")
def processes():
    return {p.stem: load_process(p) for p in sorted(PROCESS_DIR.glob("*.proc"))}


def random_distribution(rng, width: int, support: int | None = None, den: int = 12):
    """Random exact distribution with small denominators."""
    from treemeasure.distribution import StateSetDistribution

    k = 1 << width
    support = support or rng.integers(1, k + 1)
    cells = rng.choice(k, size=min(support, k), replace=False)
    weights = rng.integers(1, den, size=len(cells))
    total = int(weights.sum())
    values = [Fraction(0)] * k
    for c, w in zip(cells, weights):
        values[int(c)] += Fraction(int(w), total)
    return StateSetDistribution.from_values(width, values)


def push_up(rng, dist):
    """A distribution above ``dist``: every cell's mass moves to a superset."""
    from treemeasure.distribution import StateSetDistribution

    k = dist.size
    values = [Fraction(0)] * k
    for p, v in enumerate(dist.as_fractions()):
        if v:
            values[p | int(rng.integers(0, k))] += v
    return StateSetDistribution.from_values(dist.width, values)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.acceptance_lines():
        terminalreporter.write_line(line)

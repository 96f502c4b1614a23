"""Reference automata and a seeded generator of small random weak automata."""
from __future__ import annotations

import random
from pathlib import Path

from .automaton import And, Atom, Or, WeakAutomaton, make_automaton, parse_automaton

ALL_ACCEPT = """\
# one state, even priority: every tree is accepted
alphabet: a
states: q0
initial: q0
priority: q0 0
delta: q0 a = (L q0) & (R q0)
"""

ALL_REJECT = """\
# one state, odd priority: no tree is accepted
alphabet: a
states: q0
initial: q0
priority: q0 1
delta: q0 a = (L q0) & (R q0)
"""

REACH = """\
# some branch reaches a node labelled a (then everything below is accepted)
alphabet: a b
states: q_r q_acc
initial: q_r
priority: q_r 1 q_acc 0
delta: q_r a = (L q_acc)
delta: q_r b = (L q_r) | (R q_r)
delta: q_acc a = (L q_acc) & (R q_acc)
delta: q_acc b = (L q_acc) & (R q_acc)
"""

SAFETY_HALF = """\
# some infinite branch avoids the letter b; measure 1/2
alphabet: a1 a2 b
states: q q_rej
initial: q
priority: q 2 q_rej 1
delta: q a1 = (L q) | (R q)
delta: q a2 = (L q) | (R q)
delta: q b = (L q_rej) & (R q_rej)
delta: q_rej a1 = (L q_rej) & (R q_rej)
delta: q_rej a2 = (L q_rej) & (R q_rej)
delta: q_rej b = (L q_rej) & (R q_rej)
"""

NAMED = {
    "all_accept": ALL_ACCEPT,
    "all_reject": ALL_REJECT,
    "reach": REACH,
    "safety_half": SAFETY_HALF,
}

# known measures under the uniform coin-flipping measure
KNOWN_MEASURES = {"all_accept": 1, "all_reject": 0, "reach": 1, "safety_half": 0.5}

RANDOM_SEEDS = tuple(range(1000, 1020))


def named(name: str) -> WeakAutomaton:
    return parse_automaton(NAMED[name])


def _random_formula(rng: random.Random, allowed: list[int], size: int):
    if size <= 1:
        return Atom(rng.choice("LR"), rng.choice(allowed))
    split = rng.randint(1, size - 1)
    node = And if rng.random() < 0.5 else Or
    return node(_random_formula(rng, allowed, split), _random_formula(rng, allowed, size - split))


def random_weak_automaton(seed: int, max_states: int = 3, max_letters: int = 3,
                          max_priority: int = 3, max_atoms: int = 3) -> WeakAutomaton:
    """A random weak automaton; targets of every atom have priority at most
    the source priority, so weakness holds by construction.  With
    probability 1/2 the last state is a sink (accepting or rejecting), which
    makes the measure depend on the letters seen."""
    rng = random.Random(seed)
    n = rng.randint(1, max_states)
    m = rng.randint(1, max_letters)
    priority = [rng.randint(0, max_priority) for _ in range(n)]
    sink = n >= 2 and rng.random() < 0.5
    if sink:
        priority[-1] = rng.randint(0, 1)
    delta = {}
    for q in range(n):
        allowed = [p for p in range(n) if priority[p] <= priority[q]]
        for a in range(m):
            if sink and q == n - 1:
                delta[(q, a)] = And(Atom("L", q), Atom("R", q))
            else:
                delta[(q, a)] = _random_formula(rng, allowed, rng.randint(1, max_atoms))
    states = [f"q{i}" for i in range(n)]
    alphabet = [f"a{i}" for i in range(m)]
    return make_automaton(alphabet, states, states[rng.randrange(n)],
                          dict(zip(states, priority)),
                          {(states[q], alphabet[a]): f for (q, a), f in delta.items()})


def corpus() -> dict[str, WeakAutomaton]:
    """The 24 reference automata: four named ones and 20 seeded random ones."""
    out = {name: named(name) for name in NAMED}
    for seed in RANDOM_SEEDS:
        out[f"random_{seed}"] = random_weak_automaton(seed)
    return out


def write_corpus(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, automaton in corpus().items():
        path = directory / f"{name}.aut"
        text = NAMED[name] if name in NAMED else automaton.to_text()
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written

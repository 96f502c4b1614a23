"""Independent checks of the engine via the acceptance game.

Three tools live here:

* :func:`solve_truncated` plays the acceptance game on a finite tree prefix,
  resolving plays that leave the prefix with a boundary assignment.
* :func:`enum_stage_distribution` recomputes iterates of the one-step
  operator by enumerating every labelled prefix and leaf assignment.
* :func:`monte_carlo` samples trees and brackets membership with a
  pessimistic and an optimistic boundary.

The two boundaries come from a finite parity game on the states alone.  In
the pessimistic game the opponent chooses every letter, so a state won there
is accepted on every tree.  In the optimistic game the automaton chooses the
letters, so a state lost there is rejected on every tree.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from gmpy2 import mpq

from .automaton import And, Atom, BranchingProcess, Or, WeakAutomaton, eval_transition, uniform_process
from .distribution import StateSetDistribution

EXISTS, FORALL = 0, 1
PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"
DEFAULT_WORK_BOUND = 5_000_000


class OracleError(ValueError):
    pass


# --------------------------------------------------------------------------
# finite parity games


@dataclass(frozen=True)
class ParityGame:
    """Finite game; player 0 wins a play iff the highest priority seen
    infinitely often is even."""

    owner: tuple[int, ...]
    priority: tuple[int, ...]
    succ: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.owner)


def _attractor(game: ParityGame, nodes: set, target: set, player: int) -> set:
    attr = set(target)
    pred: dict[int, list[int]] = {v: [] for v in nodes}
    out_deg = {}
    for v in nodes:
        succ = [w for w in game.succ[v] if w in nodes]
        out_deg[v] = len(succ)
        for w in succ:
            pred[w].append(v)
    queue = list(attr)
    while queue:
        w = queue.pop()
        for v in pred[w]:
            if v in attr:
                continue
            if game.owner[v] == player:
                attr.add(v)
                queue.append(v)
            else:
                out_deg[v] -= 1
                if out_deg[v] == 0:
                    attr.add(v)
                    queue.append(v)
    return attr


def solve_parity(game: ParityGame, nodes: set | None = None) -> tuple[set, set]:
    """Zielonka's recursive algorithm; returns the winning regions
    ``(W0, W1)`` on ``nodes`` (every node needs a successor inside)."""
    if nodes is None:
        nodes = set(range(len(game)))
    if not nodes:
        return set(), set()
    top = max(game.priority[v] for v in nodes)
    player = top % 2
    target = {v for v in nodes if game.priority[v] == top}
    a = _attractor(game, nodes, target, player)
    w = solve_parity(game, nodes - a)
    if not w[1 - player]:
        win = [set(), set()]
        win[player] = set(nodes)
        return win[0], win[1]
    b = _attractor(game, nodes, w[1 - player], 1 - player)
    w2 = solve_parity(game, nodes - b)
    win = [set(), set()]
    win[player] = w2[player]
    win[1 - player] = w2[1 - player] | b
    return win[0], win[1]


def _state_game(automaton: WeakAutomaton, letter_owner: int) -> tuple[ParityGame, list[int]]:
    """Acceptance game with trees abstracted away: at every state the
    ``letter_owner`` picks the next letter."""
    owner, prio, succ = [], [], []

    def node(o, p):
        owner.append(o)
        prio.append(p)
        succ.append([])
        return len(owner) - 1

    state_nodes = [node(letter_owner, automaton.priority[q]) for q in range(automaton.num_states)]

    def build(formula, p):
        if isinstance(formula, Atom):
            return state_nodes[formula.state]
        v = node(EXISTS if isinstance(formula, Or) else FORALL, p)
        succ[v] = [build(formula.left, p), build(formula.right, p)]
        return v

    for q in range(automaton.num_states):
        for a in range(automaton.num_letters):
            succ[state_nodes[q]].append(build(automaton.delta[(q, a)], automaton.priority[q]))
    game = ParityGame(tuple(owner), tuple(prio), tuple(tuple(s) for s in succ))
    return game, state_nodes


def universal_states(automaton: WeakAutomaton) -> int:
    """Mask of states won by the automaton even when the opponent picks
    every letter; such states accept every tree."""
    game, nodes = _state_game(automaton, FORALL)
    w0, _ = solve_parity(game)
    return sum(1 << q for q, v in enumerate(nodes) if v in w0)


def empty_states(automaton: WeakAutomaton) -> int:
    """Mask of states lost even when the automaton picks every letter;
    such states reject every tree."""
    game, nodes = _state_game(automaton, EXISTS)
    _, w1 = solve_parity(game)
    return sum(1 << q for q, v in enumerate(nodes) if v in w1)


def boundary_values(automaton: WeakAutomaton, kind: str) -> tuple[bool, ...]:
    """Per-state boundary verdicts: pessimistic wins only on universal
    states, optimistic loses only on empty states."""
    if kind == PESSIMISTIC:
        mask = universal_states(automaton)
        return tuple(bool(mask >> q & 1) for q in range(automaton.num_states))
    if kind == OPTIMISTIC:
        mask = empty_states(automaton)
        return tuple(not mask >> q & 1 for q in range(automaton.num_states))
    raise OracleError(f"unknown boundary kind {kind!r}")


def deterministic_tree_accepts(automaton: WeakAutomaton, process: BranchingProcess) -> bool:
    """Membership of the single tree generated by a process whose tables
    are all Dirac, solved as a parity game over (state, letter) pairs."""
    root = [a for a, p in enumerate(process.init) if p]
    if len(root) != 1 or any(len(row) != 1 for row in process.branch):
        raise OracleError("process is not deterministic")
    child = [row[0][0] for row in process.branch]
    owner, prio, succ = [], [], []

    def node(o, p):
        owner.append(o)
        prio.append(p)
        succ.append([])
        return len(owner) - 1

    letters = automaton.num_letters
    pos = {(q, a): node(EXISTS, automaton.priority[q])
           for q in range(automaton.num_states) for a in range(letters)}

    def build(formula, a, p):
        if isinstance(formula, Atom):
            side = 0 if formula.direction == "L" else 1
            return pos[(formula.state, child[a][side])]
        v = node(EXISTS if isinstance(formula, Or) else FORALL, p)
        succ[v] = [build(formula.left, a, p), build(formula.right, a, p)]
        return v

    for (q, a), v in pos.items():
        succ[v] = [build(automaton.delta[(q, a)], a, automaton.priority[q])]
    game = ParityGame(tuple(owner), tuple(prio), tuple(tuple(x) for x in succ))
    w0, _ = solve_parity(game)
    return pos[(automaton.initial, root[0])] in w0


# --------------------------------------------------------------------------
# tree prefixes and the truncated acceptance game


@dataclass(frozen=True)
class TreePrefix:
    """Labels of all nodes of depth ``<= depth``, stored in breadth-first
    (heap) order: node ``i`` has children ``2i+1`` (L) and ``2i+2`` (R)."""

    depth: int
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) != (1 << (self.depth + 1)) - 1:
            raise OracleError(f"prefix of depth {self.depth} needs {(1 << (self.depth + 1)) - 1} labels")

    def label(self, word: str) -> int:
        """Label of the node addressed by a word over ``{L, R}``."""
        i = 0
        for d in word:
            i = 2 * i + (1 if d == "L" else 2)
        return self.labels[i]

    @classmethod
    def constant(cls, depth: int, letter: int) -> "TreePrefix":
        return cls(depth, (letter,) * ((1 << (depth + 1)) - 1))


@dataclass(frozen=True)
class Arena:
    """Explicit finite arena of the acceptance game on a prefix.

    Positions are ``("state", q, v)``, ``("or"|"and", formula, v)`` and
    ``("atom", atom, v)``; state positions at depth ``depth + 1`` form the
    boundary.
    """

    positions: tuple
    owner: Mapping
    edges: Mapping
    boundary: frozenset


def build_arena(automaton: WeakAutomaton, prefix: TreePrefix, start: int) -> Arena:
    positions, owner, edges, boundary = [], {}, {}, set()
    seen = set()
    stack = [("state", start, 0)]
    while stack:
        pos = stack.pop()
        if pos in seen:
            continue
        seen.add(pos)
        positions.append(pos)
        kind, obj, v = pos
        if kind == "state":
            if v >= len(prefix.labels):
                boundary.add(pos)
                owner[pos] = EXISTS
                edges[pos] = ()
                continue
            formula = automaton.delta[(obj, prefix.labels[v])]
            nxt = (_kind_of(formula), formula, v)
            owner[pos] = EXISTS
            edges[pos] = (nxt,)
        elif kind == "atom":
            child = 2 * v + (1 if obj.direction == "L" else 2)
            nxt = ("state", obj.state, child)
            owner[pos] = EXISTS
            edges[pos] = (nxt,)
        else:
            owner[pos] = EXISTS if kind == "or" else FORALL
            edges[pos] = tuple((_kind_of(f), f, v) for f in (obj.left, obj.right))
        stack.extend(edges[pos])
    return Arena(tuple(positions), owner, edges, frozenset(boundary))


def _kind_of(formula) -> str:
    if isinstance(formula, Atom):
        return "atom"
    return "or" if isinstance(formula, Or) else "and"


def _boundary_map(automaton: WeakAutomaton, boundary) -> tuple[bool, ...]:
    if isinstance(boundary, str):
        return boundary_values(automaton, boundary)
    if isinstance(boundary, Mapping):
        return tuple(bool(boundary[q]) for q in range(automaton.num_states))
    return tuple(bool(b) for b in boundary)


def solve_truncated(automaton: WeakAutomaton, prefix: TreePrefix, state: int,
                    boundary=PESSIMISTIC) -> bool:
    """Winner of the acceptance game from ``(state, root)`` on ``prefix``.

    Plays that leave the prefix are decided by ``boundary``: a kind name
    (``"pessimistic"``/``"optimistic"``), a mapping from state index to
    bool, or a per-state sequence.  All plays are finite, so backward
    induction over the acyclic arena decides every position.
    """
    values = _boundary_map(automaton, boundary)
    arena = build_arena(automaton, prefix, state)
    memo: dict = {}

    def win(pos) -> bool:
        hit = memo.get(pos)
        if hit is not None:
            return hit
        if pos in arena.boundary:
            result = values[pos[1]]
        else:
            children = [win(p) for p in arena.edges[pos]]
            result = any(children) if arena.owner[pos] == EXISTS else all(children)
        memo[pos] = result
        return result

    return win(("state", state, 0))


def _step_table(automaton: WeakAutomaton) -> np.ndarray:
    """``table[a, L, R]``: states whose formula on ``a`` holds when the
    children are won from the state sets ``L`` and ``R`` (direct formula
    evaluation, independent of the engine's transition table)."""
    k = automaton.num_subsets
    table = np.zeros((automaton.num_letters, k, k), dtype=np.int64)
    for a in range(automaton.num_letters):
        for left in range(k):
            for right in range(k):
                table[a, left, right] = sum(
                    1 << q for q in range(automaton.num_states)
                    if eval_transition(automaton.delta[(q, a)], left, right))
    return table


def solve_batch(automaton: WeakAutomaton, labels: np.ndarray, depth: int, boundary,
                table: np.ndarray | None = None) -> np.ndarray:
    """Vectorized :func:`solve_truncated` from the initial state.

    ``labels`` has shape ``(trees, 2**(depth+1) - 1)`` in heap order.  The
    set of states won at each node is computed bottom-up from the sets won
    at its children.  Returns one bool per tree.
    """
    values = _boundary_map(automaton, boundary)
    if table is None:
        table = _step_table(automaton)
    boundary_set = sum(1 << q for q, v in enumerate(values) if v)
    k = automaton.num_subsets
    size = table.size
    dtype = np.uint8 if size <= 1 << 8 else np.uint16 if size <= 1 << 16 else np.int64
    flat = table.ravel().astype(dtype)
    labels = labels.astype(dtype)
    trees = labels.shape[0]
    won = np.full((trees, 1 << (depth + 1)), boundary_set, dtype=dtype)
    for level in range(depth, -1, -1):
        start = (1 << level) - 1
        count = 1 << level
        index = labels[:, start:start + count] * dtype(k * k)
        index += won[:, 0::2] * dtype(k)
        index += won[:, 1::2]
        won = flat[index]
    return (won[:, 0] >> automaton.initial & 1).astype(bool)


# --------------------------------------------------------------------------
# exhaustive enumeration


def enum_work(automaton: WeakAutomaton, base: StateSetDistribution, i: int) -> int:
    if i == 0:
        return 1
    return automaton.num_letters ** ((1 << i) - 1) * len(base.support()) ** (1 << i)


def enum_stage_distribution(automaton: WeakAutomaton, base: StateSetDistribution, i: int,
                            work_bound: int = DEFAULT_WORK_BOUND) -> StateSetDistribution:
    """The ``i``-step distribution by brute force.

    Enumerates every labelling of the ``2**i - 1`` nodes above depth ``i``
    and every assignment of base subsets to the ``2**i`` leaves, unrolls
    the powerset transition bottom-up with direct formula evaluation, and
    adds up the weights ``|A|**-(2**i - 1) * prod(base masses)``.
    """
    if i < 0:
        raise OracleError("i must be non-negative")
    if i == 0:
        return base
    work = enum_work(automaton, base, i)
    if work > work_bound:
        raise OracleError(f"enumeration needs {work} cases, above the bound {work_bound}")
    n = automaton.num_states
    support = base.support()
    masses = [mpq(base[p]) for p in support]
    interior = (1 << i) - 1
    leaves = 1 << i
    letter_weight = mpq(1, automaton.num_letters ** interior)
    acc = [mpq(0)] * (1 << n)

    def step(left: int, letter: int, right: int) -> int:
        out = 0
        for q in range(n):
            if eval_transition(automaton.delta[(q, letter)], left, right):
                out |= 1 << q
        return out

    for leaf_choice in itertools.product(range(len(support)), repeat=leaves):
        weight = letter_weight
        for c in leaf_choice:
            weight *= masses[c]
        leaf_sets = [support[c] for c in leaf_choice]
        for labelling in itertools.product(range(automaton.num_letters), repeat=interior):
            level = leaf_sets
            # heap order: the deepest interior level occupies the tail
            end = interior
            while len(level) > 1:
                count = len(level) // 2
                labs = labelling[end - count:end]
                level = [step(level[2 * k], labs[k], level[2 * k + 1]) for k in range(count)]
                end -= count
            acc[level[0]] += weight
    return StateSetDistribution(n, exact=tuple(acc))


# --------------------------------------------------------------------------
# sampling


def _thresholds(probs: Sequence[Fraction]) -> tuple[int, np.ndarray]:
    den = 1
    for p in probs:
        den = den * p.denominator // math.gcd(den, p.denominator)
    cum = np.cumsum([p.numerator * (den // p.denominator) for p in probs], dtype=object)
    if den >= 1 << 62:
        raise OracleError("probability denominators too large for sampling")
    return den, np.array(cum, dtype=np.int64)


class _Sampler:
    """Draw tables for a process: one categorical draw for the root and one
    per interior node for its ordered pair of children."""

    def __init__(self, process: BranchingProcess):
        m = len(process.alphabet)
        self.m = m
        self.root_den, self.root_cum = _thresholds(process.init)
        rows = [[process.branch_prob(a, l, r) for l in range(m) for r in range(m)] for a in range(m)]
        tables = [_thresholds(row) for row in rows]
        den = 1
        for d, _ in tables:
            den = den * d // math.gcd(den, d)
        if den >= 1 << 62:
            raise OracleError("probability denominators too large for sampling")
        self.den = den
        self.cum = np.array([cum * (den // d) for d, cum in tables], dtype=np.int64)
        # direct lookup (parent letter, draw) -> pair when the table is small
        self.lookup = None
        if m * den <= 1 << 20:
            u = np.arange(den)
            self.lookup = np.stack([(u[:, None] >= self.cum[a]).sum(axis=1) for a in range(m)])

    def draw(self, depth: int, rng: np.random.Generator) -> np.ndarray:
        """Root draw first, then one draw per interior node in
        breadth-first order, taken from a single bulk call."""
        labels = np.empty((1 << (depth + 1)) - 1, dtype=np.int64)
        u = rng.integers(0, self.root_den)
        labels[0] = int(np.searchsorted(self.root_cum, u, side="right"))
        if depth == 0:
            return labels
        draws = rng.integers(0, self.den, size=(1 << depth) - 1)
        for level in range(depth):
            start = (1 << level) - 1
            count = 1 << level
            parents = labels[start:start + count]
            u = draws[start:start + count]
            if self.lookup is not None:
                pair = self.lookup[parents, u]
            else:
                pair = (u[:, None] >= self.cum[parents]).sum(axis=1)
            child = 2 * start + 1
            labels[child:child + 2 * count:2] = pair // self.m
            labels[child + 1:child + 2 * count:2] = pair % self.m
        return labels


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def sample_tree(process: BranchingProcess | Sequence[str], depth: int, seed: int, index: int = 0) -> TreePrefix:
    """Sample a prefix top-down.  ``process`` may be an alphabet for the
    uniform measure.  The stream for ``(seed, index)`` is fixed: one draw
    for the root, then one per node in breadth-first order."""
    if not isinstance(process, BranchingProcess):
        process = uniform_process(process)
    labels = _Sampler(process).draw(depth, _rng(seed, index))
    return TreePrefix(depth, tuple(int(x) for x in labels))


@dataclass(frozen=True)
class MonteCarloResult:
    samples: int
    depth: int
    seed: int
    lo: float
    hi: float
    undecided: float
    halfwidth: float

    def to_dict(self) -> dict:
        return {"samples": self.samples, "depth": self.depth, "seed": self.seed, "lo": self.lo,
                "hi": self.hi, "undecided": self.undecided, "halfwidth": self.halfwidth}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def interval(self) -> tuple[float, float]:
        """Membership bracket widened by the confidence half-width."""
        return max(0.0, self.lo - self.halfwidth), min(1.0, self.hi + self.halfwidth)


def default_threads() -> int:
    env = os.environ.get("TREEMEASURE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def monte_carlo(automaton: WeakAutomaton, process: BranchingProcess | None = None, samples: int = 10_000,
                depth: int = 12, seed: int = 0, threads: int | None = None, chunk: int = 256) -> MonteCarloResult:
    """Estimate the measure by sampling prefixes and solving both
    boundary variants of the truncated game from the initial state.

    ``lo`` is the fraction won under the pessimistic boundary and ``hi`` one
    minus the fraction lost under the optimistic one; undecided samples are
    reported as ``hi - lo``.  Tree ``k`` always uses the stream
    ``(seed, k)``, so the result does not depend on ``threads``.
    """
    if samples < 1:
        raise OracleError("samples must be at least 1")
    if process is None:
        process = uniform_process(automaton.alphabet)
    elif tuple(process.alphabet) != tuple(automaton.alphabet):
        raise OracleError("process alphabet does not match the automaton")
    sampler = _Sampler(process)
    pess = boundary_values(automaton, PESSIMISTIC)
    opt = boundary_values(automaton, OPTIMISTIC)
    table = _step_table(automaton)

    def run(lo_idx: int, hi_idx: int) -> tuple[int, int]:
        labels = np.stack([sampler.draw(depth, _rng(seed, k)) for k in range(lo_idx, hi_idx)])
        wins = int(solve_batch(automaton, labels, depth, pess, table).sum())
        losses = int((~solve_batch(automaton, labels, depth, opt, table)).sum())
        return wins, losses

    bounds = [(s, min(s + chunk, samples)) for s in range(0, samples, chunk)]
    threads = threads or default_threads()
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: run(*b), bounds))
    else:
        parts = [run(*b) for b in bounds]
    wins = sum(p[0] for p in parts)
    losses = sum(p[1] for p in parts)
    lo = wins / samples
    hi = 1 - losses / samples
    return MonteCarloResult(samples, depth, seed, lo, hi, hi - lo, 3 * math.sqrt(1 / (4 * samples)))

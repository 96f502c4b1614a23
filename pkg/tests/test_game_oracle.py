import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_corpus
from treemeasure.automaton import make_process
from treemeasure.distribution import apply_F, dirac
from treemeasure.engine import enclose
from treemeasure.game_oracle import (
    OPTIMISTIC, PESSIMISTIC, OracleError, ParityGame, TreePrefix, boundary_values, deterministic_tree_accepts,
    empty_states, enum_stage_distribution, monte_carlo, sample_tree, solve_batch, solve_parity,
    solve_truncated, universal_states,
)

CORPUS = load_corpus()
NAMES = sorted(CORPUS)


def test_solve_parity_small():
    # 0 (player 0) can loop on priority 2 or move to 1, a player-1 loop on priority 1
    game = ParityGame(owner=(0, 1), priority=(2, 1), succ=((0, 1), (1,)))
    w0, w1 = solve_parity(game)
    assert w0 == {0} and w1 == {1}
    # player 1 owns node 0 now and escapes to the odd loop
    game = ParityGame(owner=(1, 1), priority=(2, 1), succ=((0, 1), (1,)))
    assert solve_parity(game) == (set(), {0, 1})


def test_solve_parity_nested_priorities():
    # player 0 must visit 4 infinitely often to beat the 3
    game = ParityGame(owner=(0, 1, 0), priority=(4, 3, 0), succ=((1,), (2,), (0, 2)))
    w0, _ = solve_parity(game)
    assert w0 == {0, 1, 2}


def test_boundary_states(reach, safety_half, corpus):
    assert universal_states(reach) == 0b10 and empty_states(reach) == 0
    assert universal_states(safety_half) == 0 and empty_states(safety_half) == 0b10
    assert universal_states(corpus["all_accept"]) == 1
    assert empty_states(corpus["all_reject"]) == 1
    assert boundary_values(reach, PESSIMISTIC) == (False, True)
    assert boundary_values(safety_half, OPTIMISTIC) == (True, False)
    with pytest.raises(OracleError):
        boundary_values(reach, "neutral")


def test_truncated_examples(reach):
    a, b = 0, 1
    root_a = TreePrefix(1, (a, b, b))
    assert solve_truncated(reach, root_a, 0, PESSIMISTIC)
    all_b = TreePrefix.constant(3, b)
    assert not solve_truncated(reach, all_b, 0, PESSIMISTIC)
    assert solve_truncated(reach, all_b, 0, OPTIMISTIC)
    assert TreePrefix(2, tuple(range(7))).label("RL") == 5


def test_prefix_size_checked():
    with pytest.raises(OracleError):
        TreePrefix(2, (0, 0, 0))


def _random_prefix(aut, depth, seed):
    return sample_tree(aut.alphabet, depth, seed)


@settings(max_examples=150, deadline=None)
@given(name=st.sampled_from(NAMES), depth=st.integers(0, 4), seed=st.integers(0, 10 ** 6))
def test_boundaries_and_deepening_monotone(name, depth, seed):
    aut = CORPUS[name]
    deep = _random_prefix(aut, depth + 1, seed)
    shallow = TreePrefix(depth, deep.labels[: (1 << (depth + 1)) - 1])
    pess = [solve_truncated(aut, p, aut.initial, PESSIMISTIC) for p in (shallow, deep)]
    opt = [solve_truncated(aut, p, aut.initial, OPTIMISTIC) for p in (shallow, deep)]
    assert pess[0] <= opt[0] and pess[1] <= opt[1]
    # deeper prefixes only sharpen both verdicts
    assert pess[0] <= pess[1]
    assert opt[1] <= opt[0]


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(NAMES), depth=st.integers(0, 5), seed=st.integers(0, 10 ** 6))
def test_batch_matches_recursive(name, depth, seed):
    aut = CORPUS[name]
    prefixes = [_random_prefix(aut, depth, seed + k) for k in range(4)]
    labels = np.array([p.labels for p in prefixes])
    for kind in (PESSIMISTIC, OPTIMISTIC):
        batch = solve_batch(aut, labels, depth, kind)
        assert list(batch) == [solve_truncated(aut, p, aut.initial, kind) for p in prefixes]


def test_oracle_equivalence_all_corpus():
    start = time.perf_counter()
    for aut in CORPUS.values():
        n = aut.num_states
        for base in (dirac(n, aut.full_mask), dirac(n, 0)):
            expected = base
            for i in (1, 2, 3):
                expected = apply_F(expected, aut)
                assert enum_stage_distribution(aut, base, i) == expected
    assert time.perf_counter() - start < 120


def test_enumeration_work_bound(safety_half):
    with pytest.raises(OracleError):
        enum_stage_distribution(safety_half, dirac(2, 0b11), 5, work_bound=1000)


def test_sampling_is_reproducible(reach):
    a = sample_tree(reach.alphabet, 5, seed=11, index=3)
    assert a == sample_tree(reach.alphabet, 5, seed=11, index=3)
    assert a != sample_tree(reach.alphabet, 5, seed=11, index=4)


def test_sampling_follows_process(reach):
    only_b = make_process(reach.alphabet, {"b": 1}, {"a": {("a", "a"): 1}, "b": {("b", "b"): 1}})
    assert set(sample_tree(only_b, 4, seed=0).labels) == {1}


def test_monte_carlo_deterministic_across_threads(safety_half):
    one = monte_carlo(safety_half, samples=600, depth=8, seed=5, threads=1, chunk=64)
    four = monte_carlo(safety_half, samples=600, depth=8, seed=5, threads=4, chunk=64)
    assert one == four
    assert one.to_json() == four.to_json()


def test_monte_carlo_reach(reach):
    res = monte_carlo(reach, samples=2000, depth=12, seed=1)
    assert res.lo == res.hi == 1.0


def test_monte_carlo_safety_half_overlaps_enclosure(safety_half):
    res = monte_carlo(safety_half, samples=2000, depth=12, seed=2)
    lo, hi = res.interval()
    e_lo, e_hi = enclose(safety_half, 40).measure_interval
    assert lo <= e_hi and e_lo <= hi
    assert res.lo == 0.0 and 0.45 < res.hi < 0.6


def test_deterministic_tree_membership(reach, safety_half):
    letters = reach.alphabet
    const = lambda r: make_process(letters, {r: 1}, {x: {(x, x): 1} for x in letters})  # noqa: E731
    assert deterministic_tree_accepts(reach, const("a"))
    assert not deterministic_tree_accepts(reach, const("b"))
    b_then_a = make_process(letters, {"b": 1}, {"a": {("a", "a"): 1}, "b": {("a", "a"): 1}})
    assert deterministic_tree_accepts(reach, b_then_a)
    s = safety_half.alphabet
    assert deterministic_tree_accepts(safety_half, make_process(s, {"a1": 1}, {x: {("a2", "a1"): 1} for x in s}))
    assert not deterministic_tree_accepts(safety_half, make_process(s, {"a1": 1}, {x: {("b", "b"): 1} for x in s}))
    with pytest.raises(OracleError):
        deterministic_tree_accepts(reach, make_process(letters, {"a": 1}, {
            "a": {("a", "a"): 0.5, ("b", "b"): 0.5}, "b": {("b", "b"): 1}}))

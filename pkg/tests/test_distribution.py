from fractions import Fraction

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from conftest import load_corpus, push_up, random_distribution
from treemeasure.automaton import uniform_process
from treemeasure.distribution import (
    ASCENDING, DESCENDING, DistributionError, FamilyDistribution, PreconditionError, STOP_FIXPOINT,
    StateSetDistribution, apply_F, apply_F_process, apply_Q_geq, apply_Q_lt, containing_state, dirac,
    is_upset, iterate, leq_bruteforce, leq_coupling, parse_dump, upsets, uniform_family,
)

CORPUS_NAMES = sorted(load_corpus())


def test_from_values_checks_mass():
    with pytest.raises(DistributionError):
        StateSetDistribution.from_values(1, [Fraction(1, 2), Fraction(1, 3)])
    with pytest.raises(DistributionError):
        StateSetDistribution.from_values(1, [Fraction(3, 2), Fraction(-1, 2)])
    with pytest.raises(DistributionError):
        StateSetDistribution.from_values(2, [1, 0])


def test_dirac_and_up_sums():
    d = dirac(2, 0b10)
    assert d[0b10] == 1
    assert d.up_sum(containing_state(1)) == 1
    assert d.containing(0b01) == 0
    assert d.support() == [0b10]


def test_dump_round_trip(reach):
    d = StateSetDistribution.from_values(2, [0, Fraction(1, 3), Fraction(1, 6), Fraction(1, 2)])
    assert parse_dump(d.dump(reach), 2) == d
    f = d.to_float()
    assert parse_dump(f.dump(), 2).max_abs_diff(f) < 1e-15


def test_reach_trace(reach):
    res = iterate(dirac(2, 0b10), reach, ASCENDING, budget=3, trace=containing_state(0), max_bits=None)
    assert list(res.trace) == [0, Fraction(1, 2), Fraction(7, 8), Fraction(127, 128)]


def test_reach_trace_closed_form(reach):
    res = iterate(dirac(2, 0b10), reach, ASCENDING, budget=8, trace=containing_state(0), max_bits=None)
    assert list(res.trace) == [1 - Fraction(1, 2 ** (2 ** i - 1)) for i in range(9)]


def test_safety_half_trace(safety_half):
    res = iterate(dirac(2, 0b01), safety_half, DESCENDING, budget=3, trace=containing_state(0), max_bits=None)
    assert list(res.trace) == [1, Fraction(2, 3), Fraction(16, 27), Fraction(1216, 2187)]


def test_q_operators(reach):
    full = dirac(2, 0b11)
    assert apply_Q_lt(full, reach, 1) == dirac(2, 0b10)
    assert apply_Q_geq(dirac(2, 0), reach, 1) == dirac(2, 0b01)
    assert apply_Q_geq(full, reach, 0) == full


def test_trivial_fixpoints(corpus):
    acc = corpus["all_accept"]
    res = iterate(dirac(1, 1), acc, DESCENDING, budget=5)
    assert res.stopped_by == STOP_FIXPOINT and res.iterations == 1


def test_precondition_enforced(safety_half):
    # dirac({q}) lies strictly above its image
    with pytest.raises(PreconditionError):
        iterate(dirac(2, 0b01), safety_half, ASCENDING, budget=2)
    iterate(dirac(2, 0b01), safety_half, ASCENDING, budget=2, check=False)


def test_rounding_is_outward(reach):
    res = iterate(dirac(2, 0b10), reach, ASCENDING, budget=6, max_bits=None)
    d = res.final
    assert d.bits() > 40
    up, down = d.round("up", 16), d.round("down", 16)
    assert up.bits() <= 16 and down.bits() <= 16
    assert leq_coupling(d, up) and leq_coupling(down, d)
    assert sum(up.values()) == 1


def test_upsets_small():
    assert len(upsets(1)) == 3
    assert len(upsets(2)) == 6
    assert len(upsets(3)) == 20
    assert all(is_upset(u, 3) for u in upsets(3))


def test_bruteforce_refuses_large():
    with pytest.raises(DistributionError):
        leq_bruteforce(dirac(7, 0), dirac(7, 1))


def test_float_order_tolerates_rounding_noise():
    a = dirac(2, 0b01).to_float()
    b = StateSetDistribution.from_floats(2, [0.0, 1.0 - 1e-13, 0.0, 1e-13])
    assert leq_coupling(a, b)
    assert not leq_coupling(dirac(2, 0b11).to_float(), b)


@pytest.mark.parametrize("width", [1, 2, 3, 4])
def test_coupling_agrees_with_bruteforce(width):
    rng = np.random.default_rng(width)
    agree = 0
    for _ in range(250):
        a = random_distribution(rng, width)
        b = push_up(rng, a) if rng.random() < 0.5 else random_distribution(rng, width)
        assert leq_coupling(a, b) == leq_bruteforce(a, b)
        agree += 1
    assert agree >= 200


@settings(max_examples=200, deadline=None)
@given(width=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_order_is_partial_order(width, seed):
    rng = np.random.default_rng(seed)
    a = random_distribution(rng, width)
    b = push_up(rng, a)
    c = push_up(rng, b)
    assert leq_coupling(a, a)
    assert leq_coupling(a, b) and leq_coupling(b, c) and leq_coupling(a, c)
    if leq_coupling(b, a):
        assert a == b


@settings(max_examples=150, deadline=None)
@given(name=st.sampled_from(CORPUS_NAMES), seed=st.integers(0, 2 ** 32 - 1))
def test_F_normalizes(name, seed):
    aut = load_corpus()[name]
    d = random_distribution(np.random.default_rng(seed), aut.num_states)
    img = apply_F(d, aut)
    assert sum(img.values()) == 1
    assert all(v >= 0 for v in img.values())
    fl = apply_F(d.to_float(), aut)
    assert fl.max_abs_diff(img.to_float()) < 1e-12


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_F_monotone(name):
    aut = load_corpus()[name]
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = random_distribution(rng, aut.num_states, den=6)
        b = push_up(rng, a)
        assert leq_coupling(apply_F(a, aut), apply_F(b, aut))


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_traces_monotone_in_every_upset(name):
    aut = load_corpus()[name]
    n = aut.num_states
    fams = upsets(n)
    for start, direction in ((dirac(n, aut.full_mask), DESCENDING), (dirac(n, 0), ASCENDING)):
        res = iterate(start, aut, direction, budget=6, trace=None, max_bits=None)
        chain = [start]
        cur = start
        for _ in range(res.iterations):
            cur = apply_F(cur, aut)
            chain.append(cur)
        for fam in fams:
            sums = [d.up_sum(lambda p, fam=fam: bool(fam >> p & 1)) for d in chain]
            pairs = zip(sums, sums[1:])
            assert all(x >= y for x, y in pairs) if direction == DESCENDING else all(x <= y for x, y in pairs)


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_uniform_process_step_matches_plain(name):
    aut = load_corpus()[name]
    proc = uniform_process(aut.alphabet)
    rng = np.random.default_rng(3)
    d = random_distribution(rng, aut.num_states)
    fam = uniform_family(d, aut.num_letters)
    out = apply_F_process(fam, aut, proc)
    weights = [Fraction(1, aut.num_letters)] * aut.num_letters
    assert out.mixture(weights) == apply_F(d, aut)


def test_family_members_are_conditional(reach):
    # from {q_acc} everywhere, q_r holds at the root exactly when it is labelled a
    fam = uniform_family(dirac(2, 0b10), 2)
    out = apply_F_process(fam, reach, uniform_process(reach.alphabet))
    assert isinstance(out, FamilyDistribution)
    assert out[0] == dirac(2, 0b11)
    assert out[1] == dirac(2, 0b10)
    assert out.mixture([mpq(1, 2), mpq(1, 2)]) == apply_F(dirac(2, 0b10), reach)

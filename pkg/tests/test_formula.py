import hashlib
import itertools
import math
import subprocess
import sys
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_corpus
from treemeasure.automaton import make_automaton, make_process, uniform_process
from treemeasure.distribution import StateSetDistribution, apply_F, upsets
from treemeasure.engine import plan_stages, run_pipeline
from treemeasure.formula import (
    FormulaSizeError, build_compare, build_gadgets, build_psi, build_psi_branching, count_atoms, emit_smt2,
    estimate_atoms, evaluate, integer_term, is_quantifier_free, parse_smt2, stats, witness_assignment,
)
from treemeasure.formula.ast import Cmp, Var, eval_term, free_names, walk
from treemeasure.formula.build import count_muls, f_equalities, f_process_equalities, names, strict_inclusions
from treemeasure.formula.poly import equation_poly, poly_add, scale

CORPUS = load_corpus()
NAMES = sorted(CORPUS)


@pytest.fixture(scope="module")
def psis():
    return {name: build_psi(aut) for name, aut in CORPUS.items()}


def test_block_structure(psis):
    for name, psi in psis.items():
        assert psi.num_blocks == 4, name
        assert psi.quantifier_pattern() == "EAEA"
        assert is_quantifier_free(psi.matrix)
        assert psi.free == ("x",)
        assert free_names(psi.matrix) <= set(psi.variables)


def test_variable_count(psis):
    for name, psi in psis.items():
        aut = CORPUS[name]
        N, K = plan_stages(aut).N, aut.num_subsets
        assert len(psi.variables) == (2 * (N + 1) + 1 + 2 * (N + 1)) * K + 1
        assert len(set(psi.variables)) == len(psi.variables)


def test_round_trip_through_reader(psis):
    for psi in psis.values():
        text = emit_smt2(psi)
        assert parse_smt2(text) == psi
        assert text.count("(") == text.count(")")


def test_size_estimate_is_tight_upper_bound(psis):
    for name, psi in psis.items():
        actual = count_atoms(psi.matrix)
        est = estimate_atoms(CORPUS[name])
        assert actual <= est <= 1.5 * actual


def test_size_guard_refuses(reach, safety_half):
    with pytest.raises(FormulaSizeError) as exc:
        build_psi(safety_half, cap=500)
    assert exc.value.estimate > 500
    with pytest.raises(FormulaSizeError):
        build_psi_branching(reach, uniform_process(reach.alphabet), cap=500)
    build_psi(reach, cap=None)


def _chain(n: int, letters: int, top: int = 0):
    states = [f"q{i}" for i in range(n)]
    alphabet = [f"a{j}" for j in range(letters)]
    delta = {}
    for i, s in enumerate(states):
        for j, a in enumerate(alphabet):
            nxt = states[(i + j + 1) % n]
            delta[(s, a)] = f"(L {s}) & (R {nxt})" if j % 2 == 0 else f"(L {nxt}) | (R {s})"
    return make_automaton(alphabet, states, states[0], {s: top for s in states}, delta)


@pytest.mark.parametrize("letters", [1, 2, 3, 4])
def test_atoms_scale_with_k_squared(letters):
    counts = [count_atoms(build_psi(_chain(n, letters)).matrix) for n in (1, 2, 3)]
    for small, big in zip(counts, counts[1:]):
        ratio = big / small
        assert 4 / 2 <= ratio <= 4 * 2


def test_atoms_scale_with_stages():
    # priority 0 gives N = 2, priority 2 gives N = 4
    for n in (1, 2, 3):
        low = count_atoms(build_psi(_chain(n, 2, top=0)).matrix)
        high = count_atoms(build_psi(_chain(n, 2, top=2)).matrix)
        assert 0.5 * 5 / 3 <= high / low <= 2 * 5 / 3


def test_gadgets(reach):
    g = build_gadgets(reach)
    env = {f"a_{k}": v for k, v in enumerate([0, Fraction(1, 4), 0, Fraction(3, 4)])}
    assert evaluate(g["dist"], env)
    env["a_0"] = Fraction(1, 2)
    assert not evaluate(g["dist"], env)
    for fam in upsets(2):
        ind = {f"i_{k}": int(fam >> k & 1) for k in range(4)}
        assert evaluate(g["upward"], ind)
    assert not evaluate(g["upward"], {"i_0": 1, "i_1": 0, "i_2": 0, "i_3": 1})
    assert len(strict_inclusions(3)) == 3 ** 3 - 2 ** 3


@pytest.mark.parametrize("name", NAMES)
def test_witness_parts_hold_at_engine_values(name, psis):
    psi = psis[name]
    res = run_pipeline(CORPUS[name], 12, iterate_last=True)
    env = witness_assignment(res)
    for part in ("alpha0", "b_to_a", "x"):
        assert evaluate(psi.parts[part], env), part
    flt = run_pipeline(CORPUS[name], 12, mode="float", iterate_last=True)
    fenv = witness_assignment(flt)
    for part in ("alpha0", "b_to_a", "x"):
        assert evaluate(psi.parts[part], fenv, tol=1e-9), part


def _one_state_fixpoints(aut):
    """Roots in [0, 1] of F(t) = t, where t is the mass on {q}."""
    def f(t):
        return apply_F(StateSetDistribution.from_values(1, [1 - t, t]), aut)[1]

    c0 = f(Fraction(0))
    c2 = (f(Fraction(1)) - 2 * f(Fraction(1, 2)) + c0) * 2
    c1 = f(Fraction(1)) - c0 - c2 - 1
    if c2 == 0:
        return [Fraction(-c0, c1)] if c1 else [Fraction(0), Fraction(1)]
    disc = float(c1 * c1 - 4 * c2 * c0)
    roots = [(-float(c1) + s * math.sqrt(max(disc, 0.0))) / (2 * float(c2)) for s in (1, -1)]
    return sorted({r for r in roots if -1e-12 <= r <= 1 + 1e-12})


@pytest.mark.parametrize("name", [n for n in NAMES if CORPUS[n].num_states == 1])
def test_full_witness_check_one_state(name, psis):
    aut = CORPUS[name]
    psi = psis[name]
    res = run_pipeline(aut, 12, iterate_last=True)
    assert res.certified
    N = res.plan.N
    fams = [[int(f >> k & 1) for k in range(2)] for f in upsets(1)]
    thetas = _one_state_fixpoints(aut)
    assert thetas
    for t in thetas:
        theta = [1 - t, t]
        found = False
        for iota in itertools.product(fams, repeat=N + 1):
            if all(evaluate(psi.matrix, witness_assignment(res, theta=theta, iota=iota, gamma=gamma), tol=1e-9)
                   for gamma in itertools.product(fams, repeat=N + 1)):
                found = True
                break
        assert found, t
    # a wrong value for x is never witnessed
    env = witness_assignment(res, theta=[1 - thetas[0], thetas[0]], iota=[fams[0]] * (N + 1),
                             gamma=[fams[0]] * (N + 1))
    env["x"] = 1 - env["x"] if env["x"] in (0, 1) else 0
    assert not evaluate(psi.parts["x"], env)


def _collapse(name: str) -> str:
    # b_0_1_3 (stage 0, letter 1, subset 3) -> b_0_3
    head, *mid, k = name.split("_")
    return "_".join([head] + mid[:-1] + [k])


@pytest.mark.parametrize("name", NAMES)
def test_uniform_process_polynomials_match_plain(name):
    aut = CORPUS[name]
    K, M = aut.num_subsets, aut.num_letters
    proc = uniform_process(aut.alphabet)
    src = [[Var(v) for v in names("b", K, 0, a)] for a in range(M)]
    tgt = [[Var(v) for v in names("t", K, 0, a)] for a in range(M)]
    fam = f_process_equalities(tgt, src, aut, proc)
    plain = f_equalities([Var(v) for v in names("t", K, 0)], [Var(v) for v in names("b", K, 0)], aut)
    for p in range(K):
        avg = {}
        for a in range(M):
            avg = poly_add(avg, scale(equation_poly(fam[a * K + p], _collapse), Fraction(1, M)))
        assert avg == equation_poly(plain[p])


def test_branching_size_is_affine_in_process_entries(reach):
    letters = reach.alphabet
    pairs = [(l, r) for l in letters for r in letters]
    counts = []
    for m in range(1, 5):
        row_a = {pr: Fraction(1, m) for pr in pairs[:m]}
        proc = make_process(letters, {"a": 1}, {"a": row_a, "b": {("b", "b"): 1}})
        assert proc.nonzero_entries == m + 1
        counts.append(count_atoms(build_psi_branching(reach, proc).matrix))
    steps = {b - a for a, b in zip(counts, counts[1:])}
    assert len(steps) == 1 and steps.pop() > 0


def test_dirac_process_references_own_letter(reach):
    letters = reach.alphabet
    proc = make_process(letters, {"a": 1}, {"a": {("a", "a"): 1}, "b": {("b", "b"): 1}})
    K = reach.num_subsets
    src = [[Var(v) for v in names("b", K, 0, a)] for a in range(2)]
    tgt = [[Var(v) for v in names("t", K, 0, a)] for a in range(2)]
    eqs = f_process_equalities(tgt, src, reach, proc)
    for a in range(2):
        used = set()
        for eq in eqs[a * K:(a + 1) * K]:
            used |= {n.name for n in walk(eq.rhs) if isinstance(n, Var)}
        assert used <= {v.name for v in src[a]}


def test_branching_formula_structure(reach, processes):
    psi = build_psi_branching(reach, processes["reach_biased"])
    assert psi.quantifier_pattern() == "EAEA"
    assert parse_smt2(emit_smt2(psi)) == psi
    res_vars = (2 * 3 + 1 + 2 * 3) * 4 * 2 + 1
    assert len(psi.variables) == res_vars


@settings(max_examples=200, deadline=None)
@given(m=st.integers(0, 10 ** 12))
def test_doubling_chain(m):
    term = integer_term(m)
    assert eval_term(term, {}) == m
    if m >= 2:
        assert count_muls(term) <= 2 * math.ceil(math.log2(m))


@pytest.mark.parametrize("rel, q, expected", [
    ("gt", Fraction(1, 2), True), ("lt", Fraction(1, 2), False), ("eq", Fraction(1, 2), False),
    ("eq", Fraction(1), True), ("lt", Fraction(1), False),
])
def test_compare_atom(reach, rel, q, expected):
    sentence = build_compare(build_psi(reach), q, rel)
    assert sentence.free == ()
    assert sentence.blocks[0][1][0] == "x"
    assert sentence.quantifier_pattern() == "EAEA"
    text = emit_smt2(sentence)
    assert text.rstrip().endswith("(check-sat)")
    assert parse_smt2(text) == sentence
    atom = sentence.parts["compare"]
    assert isinstance(atom, Cmp)
    assert evaluate(atom, {"x": Fraction(1)}) is expected


def test_compare_rejects_bad_input(reach):
    with pytest.raises(ValueError):
        build_compare(build_psi(reach), Fraction(3, 2), "gt")
    with pytest.raises(ValueError):
        build_compare(build_psi(reach), Fraction(1, 2), "ne")


def test_stats(reach):
    psi = build_psi(reach)
    info = stats(psi)
    assert info == {"atoms": count_atoms(psi.matrix), "variables": 53, "blocks": 4,
                    "bytes": len(emit_smt2(psi).encode())}


# pinned digest of the reachability formula; changes only with the emitter
REACH_SHA256 = "f2dd625a49d73263782b00b1f971ea9f0cc419a7487352ee8da2ede982982883"


def test_emission_byte_identical(reach):
    first = emit_smt2(build_psi(reach))
    assert emit_smt2(build_psi(reach)) == first
    code = ("import sys, hashlib; from treemeasure.corpus import named; "
            "from treemeasure.formula import build_psi, emit_smt2; "
            "sys.stdout.write(hashlib.sha256(emit_smt2(build_psi(named('reach'))).encode()).hexdigest())")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert out == hashlib.sha256(first.encode()).hexdigest() == REACH_SHA256

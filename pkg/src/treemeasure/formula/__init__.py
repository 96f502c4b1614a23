"""First-order formulas over the reals describing automaton measures."""
from .ast import RealFormula, count_atoms, evaluate, is_quantifier_free
from .build import (
    DEFAULT_ATOM_CAP, FormulaSizeError, build_compare, build_gadgets, build_psi, build_psi_branching,
    estimate_atoms, integer_term,
)
from .smt import emit_smt2, parse_smt2, stats
from .witness import witness_assignment

__all__ = [
    "DEFAULT_ATOM_CAP", "FormulaSizeError", "RealFormula", "build_compare", "build_gadgets", "build_psi",
    "build_psi_branching", "count_atoms", "emit_smt2", "estimate_atoms", "evaluate", "integer_term",
    "is_quantifier_free", "parse_smt2", "stats", "witness_assignment",
]

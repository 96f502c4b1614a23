"""Weak alternating parity tree automata, branching processes and the
powerset transition function.

Subsets of states are plain ``int`` bitmasks: bit ``i`` is set iff state ``i``
(in declaration order) belongs to the subset.  Vectors indexed by subsets use
ascending mask order, so index ``0`` is the empty set and index ``K - 1`` is
the full state set.
"""
from __future__ import annotations

import json
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Union

import numpy as np

MAX_STATES = 62
# full Δ table is materialized when 2*|Q| + log2|A| stays within this bound
TABLE_LOG2_LIMIT = 26
MEMO_SIZE = 1 << 16

IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class AutomatonError(ValueError):
    """Raised for malformed automata or branching processes."""


class ParseError(AutomatonError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


# --------------------------------------------------------------------------
# transition formulas


@dataclass(frozen=True)
class Atom:
    direction: str  # "L" or "R"
    state: int


@dataclass(frozen=True)
class And:
    left: "TransitionFormula"
    right: "TransitionFormula"


@dataclass(frozen=True)
class Or:
    left: "TransitionFormula"
    right: "TransitionFormula"


TransitionFormula = Union[Atom, And, Or]


def atoms(formula: TransitionFormula):
    """Yield every atom of ``formula``, left to right."""
    stack = [formula]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            yield node
        else:
            stack.append(node.right)
            stack.append(node.left)


def eval_transition(formula: TransitionFormula, left: int, right: int) -> bool:
    """Evaluate a positive formula under the valuation induced by the pair of
    child state sets ``(left, right)``: atom ``(d, q)`` holds iff ``q`` is in
    the set for direction ``d``."""
    if isinstance(formula, Atom):
        mask = left if formula.direction == "L" else right
        return bool(mask >> formula.state & 1)
    if isinstance(formula, And):
        return eval_transition(formula.left, left, right) and eval_transition(formula.right, left, right)
    return eval_transition(formula.left, left, right) or eval_transition(formula.right, left, right)


def _eval_vectorized(formula: TransitionFormula, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    if isinstance(formula, Atom):
        mask = left if formula.direction == "L" else right
        return (mask >> formula.state) & 1 == 1
    a = _eval_vectorized(formula.left, left, right)
    b = _eval_vectorized(formula.right, left, right)
    return a & b if isinstance(formula, And) else a | b


def format_formula(formula: TransitionFormula, states: tuple[str, ...]) -> str:
    """Render ``formula`` so that :func:`parse_formula` returns the same tree."""
    if isinstance(formula, Atom):
        return f"({formula.direction} {states[formula.state]})"
    op = " & " if isinstance(formula, And) else " | "
    left = format_formula(formula.left, states)
    right = format_formula(formula.right, states)
    # operators are left-associative; & binds tighter than |
    if isinstance(formula, And):
        if isinstance(formula.left, Or):
            left = f"({left})"
        if not isinstance(formula.right, Atom):
            right = f"({right})"
    else:
        if not isinstance(formula.right, (Atom, And)):
            right = f"({right})"
    return left + op + right


_FORMULA_TOKEN = re.compile(r"\s*(?:(?P<punct>[()&|])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<bad>\S))")


class _FormulaParser:
    def __init__(self, text: str, state_index: Mapping[str, int], line: int | None, offset: int):
        self.tokens: list[tuple[str, str, int]] = []
        self.line = line
        pos = 0
        while pos < len(text):
            m = _FORMULA_TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            if m.group("bad") is not None:
                raise ParseError(f"unexpected character {m.group('bad')!r}", line, offset + m.start("bad") + 1)
            if m.group("punct") is not None:
                self.tokens.append(("punct", m.group("punct"), offset + m.start("punct") + 1))
            else:
                self.tokens.append(("ident", m.group("ident"), offset + m.start("ident") + 1))
            pos = m.end()
        self.end_column = offset + len(text) + 1
        self.pos = 0
        self.state_index = state_index

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, value: str | None = None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula", self.line, self.end_column)
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}", self.line, tok[2])
        self.pos += 1
        return tok

    def parse(self) -> TransitionFormula:
        if not self.tokens:
            raise ParseError("empty formula", self.line, self.end_column)
        node = self.disjunction()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok[1]!r}", self.line, tok[2])
        return node

    def disjunction(self):
        node = self.conjunction()
        while (tok := self.peek()) is not None and tok[1] == "|":
            self.take()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self):
        node = self.primary()
        while (tok := self.peek()) is not None and tok[1] == "&":
            self.take()
            node = And(node, self.primary())
        return node

    def primary(self):
        tok = self.take("(")
        nxt = self.peek()
        if nxt is not None and nxt[0] == "ident" and nxt[1] in ("L", "R"):
            after = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if after is not None and after[0] == "ident":
                self.take()
                name_tok = self.take()
                if name_tok[1] not in self.state_index:
                    raise ParseError(f"unknown state {name_tok[1]!r}", self.line, name_tok[2])
                self.take(")")
                return Atom(nxt[1], self.state_index[name_tok[1]])
        if nxt is not None and nxt[0] == "ident" and nxt[1] in ("true", "false", "tt", "ff", "top", "bot"):
            raise ParseError("boolean constants are not allowed in transition formulas", self.line, nxt[2])
        if nxt is not None and nxt[0] == "ident":
            raise ParseError(f"expected direction L or R, found {nxt[1]!r}", self.line, nxt[2])
        node = self.disjunction()
        self.take(")")
        return node


def parse_formula(text: str, states: tuple[str, ...] | Mapping[str, int], *, line: int | None = None,
                  offset: int = 0) -> TransitionFormula:
    index = states if isinstance(states, Mapping) else {s: i for i, s in enumerate(states)}
    return _FormulaParser(text, index, line, offset).parse()


# --------------------------------------------------------------------------
# automata


@dataclass(frozen=True)
class Violation:
    state: int
    letter: int
    atom: Atom
    priority: int
    target_priority: int

    def describe(self, automaton: "WeakAutomaton") -> str:
        return (f"delta({automaton.states[self.state]}, {automaton.alphabet[self.letter]}) contains "
                f"({self.atom.direction} {automaton.states[self.atom.state]}) but priority "
                f"{self.priority} < {self.target_priority}")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True, eq=False)
class WeakAutomaton:
    """A weak alternating parity automaton over infinite binary trees.

    ``delta`` maps ``(state_index, letter_index)`` to a positive transition
    formula.  Construction checks totality and index ranges; pass
    ``check_weak=False`` to :func:`make_automaton` to build non-weak inputs
    for reporting purposes.
    """

    alphabet: tuple[str, ...]
    states: tuple[str, ...]
    initial: int
    priority: tuple[int, ...]
    delta: Mapping[tuple[int, int], TransitionFormula]
    _memo: dict = field(default_factory=OrderedDict, repr=False, compare=False)
    _table: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if not self.alphabet:
            raise AutomatonError("alphabet is empty")
        if not self.states:
            raise AutomatonError("state list is empty")
        for kind, names in (("letter", self.alphabet), ("state", self.states)):
            seen = set()
            for name in names:
                if not IDENT.fullmatch(name):
                    raise AutomatonError(f"invalid {kind} name {name!r}")
                if name in seen:
                    raise AutomatonError(f"duplicate {kind} {name!r}")
                seen.add(name)
        if len(self.states) > MAX_STATES:
            raise AutomatonError(f"at most {MAX_STATES} states are supported, got {len(self.states)}")
        if not 0 <= self.initial < len(self.states):
            raise AutomatonError("initial state out of range")
        if len(self.priority) != len(self.states) or any(p < 0 for p in self.priority):
            raise AutomatonError("priorities must be natural numbers, one per state")
        for q in range(len(self.states)):
            for a in range(len(self.alphabet)):
                if (q, a) not in self.delta:
                    raise AutomatonError(
                        f"missing transition for state {self.states[q]!r} and letter {self.alphabet[a]!r}")
                for atom in atoms(self.delta[(q, a)]):
                    if atom.direction not in ("L", "R") or not 0 <= atom.state < len(self.states):
                        raise AutomatonError(f"bad atom {atom!r}")

    # structure ----------------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_letters(self) -> int:
        return len(self.alphabet)

    @property
    def num_subsets(self) -> int:
        return 1 << len(self.states)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.states)) - 1

    def states_below(self, n: int) -> int:
        """Mask of states with priority strictly below ``n``."""
        return sum(1 << q for q, p in enumerate(self.priority) if p < n)

    def states_at_least(self, n: int) -> int:
        """Mask of states with priority at least ``n``."""
        return sum(1 << q for q, p in enumerate(self.priority) if p >= n)

    def mask_of(self, names) -> int:
        index = {s: i for i, s in enumerate(self.states)}
        return sum(1 << index[name] for name in names)

    def format_mask(self, mask: int) -> str:
        return "{" + ",".join(s for i, s in enumerate(self.states) if mask >> i & 1) + "}"

    # powerset transition function --------------------------------------

    @property
    def uses_table(self) -> bool:
        return 2 * self.num_states + (self.num_letters - 1).bit_length() <= TABLE_LOG2_LIMIT

    def delta_table(self) -> np.ndarray | None:
        """Full Δ table of shape ``(|A|, K, K)`` or ``None`` when it would
        exceed the size limit.  Built once; read-only afterwards."""
        if not self.uses_table:
            return None
        if not self._table:
            k = self.num_subsets
            left = np.arange(k, dtype=np.int64)[:, None]
            right = np.arange(k, dtype=np.int64)[None, :]
            dtype = np.uint32 if self.num_states <= 32 else np.uint64
            table = np.zeros((self.num_letters, k, k), dtype=dtype)
            for a in range(self.num_letters):
                for q in range(self.num_states):
                    hit = _eval_vectorized(self.delta[(q, a)], left, right)
                    table[a] |= hit.astype(dtype) << dtype(q)
            table.setflags(write=False)
            self._table.append(table)
        return self._table[0]

    def delta_sets(self, left: int, letter: int, right: int) -> int:
        """Δ(left, letter, right): states whose transition on ``letter`` is
        satisfied when the children are accepted from ``left``/``right``."""
        table = self.delta_table()
        if table is not None:
            return int(table[letter, left, right])
        key = (left, letter, right)
        memo = self._memo
        hit = memo.get(key)
        if hit is not None:
            memo.move_to_end(key)
            return hit
        result = 0
        for q in range(self.num_states):
            if eval_transition(self.delta[(q, letter)], left, right):
                result |= 1 << q
        memo[key] = result
        if len(memo) > MEMO_SIZE:
            memo.popitem(last=False)
        return result

    # output ------------------------------------------------------------

    def to_text(self) -> str:
        lines = [
            "alphabet: " + " ".join(self.alphabet),
            "states: " + " ".join(self.states),
            "initial: " + self.states[self.initial],
            "priority: " + " ".join(f"{s} {p}" for s, p in zip(self.states, self.priority)),
        ]
        for q, s in enumerate(self.states):
            for a, letter in enumerate(self.alphabet):
                lines.append(f"delta: {s} {letter} = {format_formula(self.delta[(q, a)], self.states)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "states": list(self.states),
            "initial": self.states[self.initial],
            "priority": {s: p for s, p in zip(self.states, self.priority)},
            "delta": {
                s: {letter: format_formula(self.delta[(q, a)], self.states)
                    for a, letter in enumerate(self.alphabet)}
                for q, s in enumerate(self.states)
            },
        }

    def __eq__(self, other):
        if not isinstance(other, WeakAutomaton):
            return NotImplemented
        return (self.alphabet, self.states, self.initial, self.priority, dict(self.delta)) == (
            other.alphabet, other.states, other.initial, other.priority, dict(other.delta))

    def __hash__(self):
        return hash((self.alphabet, self.states, self.initial, self.priority))


def validate_weak(automaton: WeakAutomaton) -> ValidationReport:
    """List every atom ``(d, q')`` in ``delta(q, a)`` with Ω(q) < Ω(q')."""
    found = []
    for (q, a), formula in sorted(automaton.delta.items()):
        for atom in atoms(formula):
            if automaton.priority[q] < automaton.priority[atom.state]:
                found.append(Violation(q, a, atom, automaton.priority[q], automaton.priority[atom.state]))
    return ValidationReport(tuple(found))


def make_automaton(alphabet, states, initial, priority, delta, *, check_weak: bool = True) -> WeakAutomaton:
    """Build an automaton from names.

    ``priority`` maps state names to naturals; ``delta`` maps
    ``(state_name, letter_name)`` to a formula string or tree.
    """
    alphabet = tuple(alphabet)
    states = tuple(states)
    s_index = {s: i for i, s in enumerate(states)}
    a_index = {a: i for i, a in enumerate(alphabet)}
    if initial not in s_index:
        raise AutomatonError(f"unknown state {initial!r}")
    for name in priority:
        if name not in s_index:
            raise AutomatonError(f"unknown state {name!r}")
    missing = [s for s in states if s not in priority]
    if missing:
        raise AutomatonError(f"missing priority for state {missing[0]!r}")
    table = {}
    for (s, a), formula in delta.items():
        if s not in s_index:
            raise AutomatonError(f"unknown state {s!r}")
        if a not in a_index:
            raise AutomatonError(f"unknown letter {a!r}")
        if isinstance(formula, str):
            formula = parse_formula(formula, s_index)
        table[(s_index[s], a_index[a])] = formula
    automaton = WeakAutomaton(alphabet, states, s_index[initial], tuple(int(priority[s]) for s in states), table)
    if check_weak:
        report = validate_weak(automaton)
        if not report.ok:
            raise AutomatonError("automaton is not weak: " + report.violations[0].describe(automaton))
    return automaton


# --------------------------------------------------------------------------
# line-oriented text format


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


def _split_directive(raw: str, lineno: int) -> tuple[str, str, int] | None:
    line = _strip_comment(raw)
    if not line.strip():
        return None
    m = re.match(r"\s*([A-Za-z_]+)\s*:", line)
    if m is None:
        col = len(line) - len(line.lstrip()) + 1
        raise ParseError("expected 'keyword:'", lineno, col)
    return m.group(1), line[m.end():], m.end()


def _names(rest: str, offset: int, lineno: int, kind: str) -> list[str]:
    names = []
    for m in re.finditer(r"\S+", rest):
        if not IDENT.fullmatch(m.group()):
            raise ParseError(f"invalid {kind} name {m.group()!r}", lineno, offset + m.start() + 1)
        names.append(m.group())
    return names


def parse_automaton(text: str, *, check_weak: bool = True) -> WeakAutomaton:
    """Parse the line-oriented automaton format.

    >>> a = parse_automaton('''
    ... alphabet: a
    ... states: q0
    ... initial: q0
    ... priority: q0 0
    ... delta: q0 a = (L q0) & (R q0)
    ... ''')
    >>> a.delta_sets(1, 0, 1)
    1
    """
    alphabet = states = initial = None
    priority: dict[str, int] = {}
    delta: dict[tuple[str, str], TransitionFormula] = {}
    pending_delta = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        split = _split_directive(raw, lineno)
        if split is None:
            continue
        key, rest, offset = split
        if key == "alphabet":
            if alphabet is not None:
                raise ParseError("duplicate declaration of alphabet", lineno, 1)
            alphabet = _names(rest, offset, lineno, "letter")
            if len(set(alphabet)) != len(alphabet):
                raise ParseError("duplicate letter in alphabet", lineno, offset + 1)
        elif key == "states":
            if states is not None:
                raise ParseError("duplicate declaration of states", lineno, 1)
            states = _names(rest, offset, lineno, "state")
            if len(set(states)) != len(states):
                raise ParseError("duplicate state in state list", lineno, offset + 1)
        elif key == "initial":
            if initial is not None:
                raise ParseError("duplicate declaration of initial state", lineno, 1)
            names = _names(rest, offset, lineno, "state")
            if len(names) != 1:
                raise ParseError("expected exactly one initial state", lineno, offset + 1)
            initial = (names[0], lineno, offset + rest.index(names[0]) + 1)
        elif key == "priority":
            tokens = list(re.finditer(r"\S+", rest))
            if len(tokens) % 2:
                raise ParseError("priority expects 'state number' pairs", lineno, offset + 1)
            for name_m, val_m in zip(tokens[::2], tokens[1::2]):
                if not val_m.group().isdigit():
                    raise ParseError(f"priority must be a natural number, got {val_m.group()!r}",
                                     lineno, offset + val_m.start() + 1)
                if name_m.group() in priority:
                    raise ParseError(f"duplicate priority for state {name_m.group()!r}",
                                     lineno, offset + name_m.start() + 1)
                priority[name_m.group()] = int(val_m.group())
                pending_delta.append(("priority", name_m.group(), lineno, offset + name_m.start() + 1))
        elif key == "delta":
            m = re.match(r"\s*(\S+)\s+(\S+)\s*=", rest)
            if m is None:
                raise ParseError("expected 'delta: state letter = formula'", lineno, offset + 1)
            pending_delta.append(("delta", (m.group(1), m.group(2), rest[m.end():]), lineno,
                                  (offset + m.start(1) + 1, offset + m.start(2) + 1, offset + m.end())))
        else:
            raise ParseError(f"unknown keyword {key!r}", lineno, 1)
    for what, name in (("alphabet", alphabet), ("states", states), ("initial", initial)):
        if name is None:
            raise ParseError(f"missing '{what}:' declaration")
    s_index = {s: i for i, s in enumerate(states)}
    a_index = {a: i for i, a in enumerate(alphabet)}
    if initial[0] not in s_index:
        raise ParseError(f"unknown state {initial[0]!r}", initial[1], initial[2])
    for kind, payload, lineno, col in pending_delta:
        if kind == "priority":
            if payload not in s_index:
                raise ParseError(f"unknown state {payload!r}", lineno, col)
            continue
        s, a, body = payload
        if s not in s_index:
            raise ParseError(f"unknown state {s!r}", lineno, col[0])
        if a not in a_index:
            raise ParseError(f"unknown letter {a!r}", lineno, col[1])
        if (s, a) in delta:
            raise ParseError(f"duplicate transition for ({s}, {a})", lineno, col[0])
        delta[(s, a)] = parse_formula(body, s_index, line=lineno, offset=col[2] - 1)
    for s in states:
        if s not in priority:
            raise ParseError(f"missing priority for state {s!r}")
        for a in alphabet:
            if (s, a) not in delta:
                raise ParseError(f"missing transition for state {s!r} and letter {a!r}")
    return make_automaton(alphabet, states, initial[0], priority, delta, check_weak=check_weak)


def automaton_from_json(data: dict | str, *, check_weak: bool = True) -> WeakAutomaton:
    if isinstance(data, str):
        data = json.loads(data)
    try:
        delta = {}
        for s, row in data["delta"].items():
            for a, formula in row.items():
                delta[(s, a)] = formula
        return make_automaton(data["alphabet"], data["states"], data["initial"], data["priority"], delta,
                              check_weak=check_weak)
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None


def load_automaton(path: str | Path, *, check_weak: bool = True) -> WeakAutomaton:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return automaton_from_json(text, check_weak=check_weak)
    return parse_automaton(text, check_weak=check_weak)


# --------------------------------------------------------------------------
# branching processes


@dataclass(frozen=True)
class BranchingProcess:
    """Random tree generator: the root label is drawn from ``init`` and the
    children of an ``a``-labelled node from ``branch[a]``, a distribution
    over ordered letter pairs.  Only nonzero entries are stored."""

    alphabet: tuple[str, ...]
    init: tuple[Fraction, ...]
    branch: tuple[tuple[tuple[tuple[int, int], Fraction], ...], ...]

    def __post_init__(self):
        n = len(self.alphabet)
        if n == 0:
            raise AutomatonError("alphabet is empty")
        if len(set(self.alphabet)) != n:
            raise AutomatonError("duplicate letter in alphabet")
        if len(self.init) != n or len(self.branch) != n:
            raise AutomatonError("process tables do not match the alphabet")
        _check_distribution(self.init, "initial distribution")
        for a, row in enumerate(self.branch):
            for (left, right), p in row:
                if not (0 <= left < n and 0 <= right < n):
                    raise AutomatonError("branch entry refers to an unknown letter")
            _check_distribution([p for _, p in row], f"branch distribution of {self.alphabet[a]!r}")

    def branch_prob(self, parent: int, left: int, right: int) -> Fraction:
        for pair, p in self.branch[parent]:
            if pair == (left, right):
                return p
        return Fraction(0)

    @property
    def nonzero_entries(self) -> int:
        return sum(len(row) for row in self.branch)

    def to_text(self) -> str:
        lines = ["alphabet: " + " ".join(self.alphabet),
                 "init: " + " ".join(f"{a} {_fmt_frac(p)}" for a, p in zip(self.alphabet, self.init) if p)]
        for a, row in enumerate(self.branch):
            pairs = " ".join(f"({self.alphabet[l]},{self.alphabet[r]}) {_fmt_frac(p)}" for (l, r), p in row)
            lines.append(f"branch: {self.alphabet[a]} -> {pairs}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "init": {a: _fmt_frac(p) for a, p in zip(self.alphabet, self.init) if p},
            "branch": {
                self.alphabet[a]: {f"({self.alphabet[l]},{self.alphabet[r]})": _fmt_frac(p) for (l, r), p in row}
                for a, row in enumerate(self.branch)
            },
        }


def _fmt_frac(p: Fraction) -> str:
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


def _check_distribution(values, what: str) -> None:
    for p in values:
        if not 0 <= p <= 1:
            raise AutomatonError(f"{what}: probability {_fmt_frac(p)} outside [0, 1]")
    total = sum(values, Fraction(0))
    if total != 1:
        raise AutomatonError(f"{what} sums to {_fmt_frac(total)}")


def make_process(alphabet, init: Mapping[str, Fraction], branch: Mapping[str, Mapping[tuple[str, str], Fraction]]
                 ) -> BranchingProcess:
    alphabet = tuple(alphabet)
    index = {a: i for i, a in enumerate(alphabet)}
    for name in list(init) + list(branch):
        if name not in index:
            raise AutomatonError(f"unknown letter {name!r}")
    for a in alphabet:
        if a not in branch:
            raise AutomatonError(f"missing branch distribution for letter {a!r}")
    rows = []
    for a in alphabet:
        row = []
        for (l, r), p in branch[a].items():
            if l not in index or r not in index:
                raise AutomatonError(f"unknown letter in pair ({l},{r})")
            p = Fraction(p)
            if p:
                row.append(((index[l], index[r]), p))
        row.sort()
        rows.append(tuple(row))
    return BranchingProcess(alphabet, tuple(Fraction(init.get(a, 0)) for a in alphabet), tuple(rows))


def uniform_process(alphabet) -> BranchingProcess:
    """The process generating the coin-flipping measure: every label is
    uniform and independent of its parent."""
    alphabet = tuple(alphabet)
    n = len(alphabet)
    init = {a: Fraction(1, n) for a in alphabet}
    branch = {a: {(l, r): Fraction(1, n * n) for l in alphabet for r in alphabet} for a in alphabet}
    return make_process(alphabet, init, branch)


_RATIONAL = re.compile(r"\d+(?:/\d+)?")


def _parse_rational(token: str, lineno: int | None, col: int | None) -> Fraction:
    if not _RATIONAL.fullmatch(token):
        raise ParseError(f"expected a rational 'num/den', got {token!r}", lineno, col)
    num, _, den = token.partition("/")
    if den and int(den) == 0:
        raise ParseError("zero denominator", lineno, col)
    return Fraction(int(num), int(den) if den else 1)


_PAIR = re.compile(r"\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*,\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)")


def _parse_pairs(rest: str, lineno: int | None, offset: int) -> dict[tuple[str, str], Fraction]:
    out: dict[tuple[str, str], Fraction] = {}
    pos = 0
    while True:
        while pos < len(rest) and rest[pos].isspace():
            pos += 1
        if pos >= len(rest):
            return out
        m = _PAIR.match(rest, pos)
        if m is None:
            raise ParseError("expected '(letter,letter) probability'", lineno, offset + pos + 1)
        pos = m.end()
        v = re.compile(r"\s*(\S+)").match(rest, pos)
        if v is None:
            raise ParseError("missing probability", lineno, offset + pos + 1)
        key = (m.group(1), m.group(2))
        if key in out:
            raise ParseError(f"duplicate pair ({key[0]},{key[1]})", lineno, offset + m.start() + 1)
        out[key] = _parse_rational(v.group(1), lineno, offset + v.start(1) + 1)
        pos = v.end()


def parse_process(text: str) -> BranchingProcess:
    """Parse the line-oriented branching process format::

        alphabet: a b
        init: a 1/2 b 1/2
        branch: a -> (a,a) 1/4 (a,b) 1/4 (b,a) 1/4 (b,b) 1/4
    """
    alphabet = None
    init: dict[str, Fraction] | None = None
    branch: dict[str, dict[tuple[str, str], Fraction]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        split = _split_directive(raw, lineno)
        if split is None:
            continue
        key, rest, offset = split
        if key == "alphabet":
            if alphabet is not None:
                raise ParseError("duplicate declaration of alphabet", lineno, 1)
            alphabet = _names(rest, offset, lineno, "letter")
        elif key == "init":
            if init is not None:
                raise ParseError("duplicate declaration of init", lineno, 1)
            tokens = list(re.finditer(r"\S+", rest))
            if len(tokens) % 2:
                raise ParseError("init expects 'letter probability' pairs", lineno, offset + 1)
            init = {}
            for name_m, val_m in zip(tokens[::2], tokens[1::2]):
                if name_m.group() in init:
                    raise ParseError(f"duplicate letter {name_m.group()!r}", lineno, offset + name_m.start() + 1)
                init[name_m.group()] = _parse_rational(val_m.group(), lineno, offset + val_m.start() + 1)
        elif key == "branch":
            m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*->", rest)
            if m is None:
                raise ParseError("expected 'branch: letter -> (l,r) p ...'", lineno, offset + 1)
            if m.group(1) in branch:
                raise ParseError(f"duplicate branch for letter {m.group(1)!r}", lineno, offset + m.start(1) + 1)
            branch[m.group(1)] = _parse_pairs(rest[m.end():], lineno, offset + m.end())
        else:
            raise ParseError(f"unknown keyword {key!r}", lineno, 1)
    if alphabet is None:
        raise ParseError("missing 'alphabet:' declaration")
    if init is None:
        raise ParseError("missing 'init:' declaration")
    return make_process(alphabet, init, branch)


def process_from_json(data: dict | str) -> BranchingProcess:
    if isinstance(data, str):
        data = json.loads(data)
    try:
        init = {a: _parse_rational(str(p), None, None) for a, p in data["init"].items()}
        branch = {}
        for a, row in data["branch"].items():
            text = " ".join(f"{pair} {p}" for pair, p in row.items())
            branch[a] = _parse_pairs(text, None, 0)
        return make_process(data["alphabet"], init, branch)
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None


def load_process(path: str | Path) -> BranchingProcess:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return process_from_json(text)
    return parse_process(text)

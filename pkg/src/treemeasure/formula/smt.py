"""SMT-LIB 2.6 output for real formulas, and a reader for the same subset."""
from __future__ import annotations

import json
import re
from fractions import Fraction

from .ast import (
    EXISTS, FORALL, Add, And, Cmp, Implies, Mul, Not, Num, Or, RealFormula, Var, count_atoms,
)


def _num(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator) if value >= 0 else f"(- {-value.numerator})"
    n, d = value.numerator, value.denominator
    return f"(/ {n} {d})" if n >= 0 else f"(- (/ {-n} {d}))"


_HEADS = {Add: "+", Mul: "*", And: "and", Or: "or"}


def _emit(node, out: list[str]) -> None:
    """Append the s-expression of ``node`` to ``out`` (explicit stack, so
    deep doubling chains do not hit the recursion limit)."""
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, str):
            out.append(cur)
        elif isinstance(cur, Var):
            out.append(cur.name)
        elif isinstance(cur, Num):
            out.append(_num(cur.value))
        elif isinstance(cur, (Add, Mul, And, Or)):
            if not cur.args:
                out.append({Add: "0", Mul: "1", And: "true", Or: "false"}[type(cur)])
                continue
            if len(cur.args) == 1 and isinstance(cur, (Add, Mul)):
                stack.append(cur.args[0])
                continue
            items = [f"({_HEADS[type(cur)]}"]
            for a in cur.args:
                items.extend([" ", a])
            items.append(")")
            stack.extend(reversed(items))
        elif isinstance(cur, Cmp):
            stack.extend(reversed([f"({cur.op} ", cur.lhs, " ", cur.rhs, ")"]))
        elif isinstance(cur, Not):
            stack.extend(reversed(["(not ", cur.arg, ")"]))
        elif isinstance(cur, Implies):
            stack.extend(reversed(["(=> ", cur.lhs, " ", cur.rhs, ")"]))
        else:
            raise TypeError(f"cannot emit {cur!r}")


def emit_term(node) -> str:
    out: list[str] = []
    _emit(node, out)
    return "".join(out)


def emit_smt2(formula: RealFormula) -> str:
    """One ``assert`` of the whole formula; free variables are declared as
    constants and ``check-sat`` is added for closed sentences."""
    lines = ["(set-logic NRA)" if formula.blocks else "(set-logic QF_NRA)"]
    for name in formula.free:
        lines.append(f"(declare-fun {name} () Real)")
    out: list[str] = ["(assert "]
    for quant, names in formula.blocks:
        binders = " ".join(f"({v} Real)" for v in names)
        out.append(f"({quant} ({binders}) ")
    _emit(formula.matrix, out)
    out.append(")" * len(formula.blocks))
    out.append(")")
    lines.append("".join(out))
    if not formula.free:
        lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def stats(formula: RealFormula, text: str | None = None) -> dict:
    text = emit_smt2(formula) if text is None else text
    return {
        "atoms": count_atoms(formula.matrix),
        "variables": len(formula.variables),
        "blocks": formula.num_blocks,
        "bytes": len(text.encode("utf-8")),
    }


def stats_json(formula: RealFormula, text: str | None = None) -> str:
    return json.dumps(stats(formula, text), sort_keys=True)


# --------------------------------------------------------------------------
# reader

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


class SmtParseError(ValueError):
    pass


def read_sexprs(text: str) -> list:
    """Parse s-expressions into nested Python lists of atom strings."""
    stack: list[list] = [[]]
    pos = 0
    text = re.sub(r";[^\n]*", "", text)
    while True:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        pos = m.end()
        if m.group(1):
            stack.append([])
        elif m.group(2):
            if len(stack) == 1:
                raise SmtParseError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(m.group(3))
    if text[pos:].strip():
        raise SmtParseError(f"unexpected text at offset {pos}")
    if len(stack) != 1:
        raise SmtParseError("unbalanced '('")
    return stack[0]


_NUMERAL = re.compile(r"\d+(?:\.\d+)?")
_CMP = {"=", "<=", "<", ">=", ">"}


def _term(sx):
    if isinstance(sx, str):
        if _NUMERAL.fullmatch(sx):
            return Num(Fraction(sx))
        return Var(sx)
    head, args = sx[0], sx[1:]
    if head == "/" and len(args) == 2:
        a, b = _term(args[0]), _term(args[1])
        if isinstance(a, Num) and isinstance(b, Num):
            return Num(a.value / b.value)
        raise SmtParseError("division only of numerals is supported")
    if head == "-" and len(args) == 1:
        a = _term(args[0])
        if isinstance(a, Num):
            return Num(-a.value)
        raise SmtParseError("negation only of numerals is supported")
    if head == "+":
        return Add(tuple(_term(a) for a in args))
    if head == "*":
        return Mul(tuple(_term(a) for a in args))
    raise SmtParseError(f"unsupported term head {head!r}")


def _formula(sx):
    if isinstance(sx, str):
        if sx == "true":
            return And(())
        if sx == "false":
            return Or(())
        raise SmtParseError(f"unexpected atom {sx!r}")
    head, args = sx[0], sx[1:]
    if head in _CMP:
        if len(args) != 2:
            raise SmtParseError(f"{head} expects two arguments")
        return Cmp(head, _term(args[0]), _term(args[1]))
    if head == "and":
        return And(tuple(_formula(a) for a in args))
    if head == "or":
        return Or(tuple(_formula(a) for a in args))
    if head == "not":
        return Not(_formula(args[0]))
    if head == "=>":
        return Implies(_formula(args[0]), _formula(args[1]))
    raise SmtParseError(f"unsupported formula head {head!r}")


def parse_smt2(text: str) -> RealFormula:
    """Read back the output of :func:`emit_smt2`."""
    free: list[str] = []
    body = None
    for cmd in read_sexprs(text):
        if not isinstance(cmd, list) or not cmd:
            raise SmtParseError("expected a command")
        head = cmd[0]
        if head == "declare-fun":
            if cmd[2] != [] or cmd[3] != "Real":
                raise SmtParseError("only real constants may be declared")
            free.append(cmd[1])
        elif head == "assert":
            if body is not None:
                raise SmtParseError("more than one assert")
            body = cmd[1]
        elif head in ("set-logic", "check-sat", "set-info", "exit"):
            continue
        else:
            raise SmtParseError(f"unsupported command {head!r}")
    if body is None:
        raise SmtParseError("no assert found")
    blocks = []
    while isinstance(body, list) and body and body[0] in (EXISTS, FORALL):
        quant, binders, body = body[0], body[1], body[2]
        blocks.append((quant, tuple(b[0] for b in binders)))
    return RealFormula(tuple(blocks), _formula(body), tuple(free))

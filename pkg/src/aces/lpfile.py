"""CPLEX-style LP text export and import for :class:`~aces.milp.MilpModel`.

Only the subset the writer produces is guaranteed to round-trip, but the
reader also accepts ``Minimize`` objectives (negated on load), ``>=`` rows,
``free`` bounds and the usual section-name aliases.
"""
from __future__ import annotations

import re

import numpy as np

from .milp import BINARY, CONTINUOUS, INTEGER, ModelBuilder, MilpModel

_SENSE_TEXT = {"<=": "<=", ">=": ">=", "==": "="}


class LPFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _num(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def _expr(names, cols, vals) -> list[str]:
    parts = []
    for k, (j, v) in enumerate(zip(cols, vals)):
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else f"{_num(mag)} "
        if k == 0:
            parts.append(f"{'-' if v < 0 else ''}{coef}{names[j]}")
        else:
            parts.append(f"{sign} {coef}{names[j]}")
    return parts or ["0"]


def _wrap(head: str, parts: list[str], width: int = 200) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + len(p) + 1 > width and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + p
    lines.append(cur)
    return lines


def write_lp(model: MilpModel, title: str = "aces") -> str:
    names = model.var_names
    out = [f"\\ {title}", "Maximize"]
    nz = np.flatnonzero(model.objective)
    out += _wrap(" obj:", _expr(names, nz, model.objective[nz]))
    out.append("Subject To")
    A = model.A.tocsr()
    for i, rname in enumerate(model.row_names):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        parts = _expr(names, A.indices[lo:hi], A.data[lo:hi])
        parts += [_SENSE_TEXT[model.senses[i]], _num(model.rhs[i])]
        out += _wrap(f" {rname}:", parts)
    out.append("Bounds")
    for j, n in enumerate(names):
        lb, ub = model.lb[j], model.ub[j]
        if model.var_kinds[j] == BINARY and lb == 0 and ub == 1:
            continue
        lo = "-inf" if np.isneginf(lb) else _num(lb)
        hi = "+inf" if np.isposinf(ub) else _num(ub)
        out.append(f" {lo} <= {n} <= {hi}")
    for header, kind in (("Binaries", BINARY), ("Generals", INTEGER)):
        cols = [names[j] for j in np.flatnonzero(model.var_kinds == kind)]
        if cols:
            out.append(header)
            out += _wrap("", cols)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTIONS = {
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st", "st.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen", "integers": "gen",
    "end": "end",
}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?|inf(?:inity)?\b)"
    r"|(?P<op><=|>=|=<|=>|<|>|=|\+|-)"
    r"|(?P<name>[A-Za-z_!\"#$%&/;?@`'{}|~][A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~]*))",
    re.IGNORECASE,
)


def _tokens(text: str, lineno: int) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LPFormatError(lineno, f"unexpected text {text[pos:pos + 20]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def _parse_linear(toks, lineno):
    """Parse ``[+-] [coef] name ...`` until a comparison operator; returns terms and rest."""
    terms: list[tuple[str, float]] = []
    const = 0.0
    i, sign, coef = 0, 1.0, None
    while i < len(toks):
        kind, val = toks[i]
        if kind == "op" and val in "+-":
            sign = -sign if val == "-" else sign
        elif kind == "num":
            if coef is not None:
                raise LPFormatError(lineno, "two coefficients in a row")
            coef = float(val) if not val.lower().startswith("inf") else np.inf
        elif kind == "name":
            terms.append((val, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        else:
            break
        i += 1
    if coef is not None:
        const += sign * coef
    return terms, const, toks[i:]


def read_lp(text: str) -> MilpModel:
    """Parse LP text into a maximisation :class:`MilpModel`."""
    statements: list[tuple[str, int, str]] = []  # (section, line, statement text)
    section = None
    current: list[str] = []
    start = 0

    def flush():
        if current:
            statements.append((section, start, " ".join(current)))
            current.clear()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            flush()
            section = _SECTIONS[key]
            if section == "end":
                break
            continue
        if section is None:
            raise LPFormatError(lineno, "content before the objective section")
        # A new statement starts on any line with a label or, in bounds/int
        # sections, on every line.
        has_label = re.match(r"^[^:<>=]+:(?!=)", line) is not None
        if section in ("st", "max", "min") and has_label and current:
            flush()
        if section in ("bounds",):
            flush()
        if not current:
            start = lineno
        current.append(line)
        if section in ("bin", "gen"):
            flush()
    flush()

    sense = None
    names: dict[str, int] = {}
    b = ModelBuilder()

    def var(n: str) -> int:
        if n not in names:
            names[n] = b.add_var(n, CONTINUOUS, 0.0, np.inf)
        return names[n]

    obj_terms: list[tuple[str, float]] = []
    rows = []
    for sec, lineno, stmt in statements:
        if sec in ("max", "min"):
            sense = sec
            body = stmt.split(":", 1)[1] if re.match(r"^[^:]+:", stmt) else stmt
            terms, _, rest = _parse_linear(_tokens(body, lineno), lineno)
            if rest:
                raise LPFormatError(lineno, "comparison in objective")
            obj_terms += terms
        elif sec == "st":
            label, body = (stmt.split(":", 1) if re.match(r"^[^:<>=]+:", stmt) else (f"R{len(rows)}", stmt))
            terms, _, rest = _parse_linear(_tokens(body, lineno), lineno)
            if len(rest) < 2 or rest[0][0] != "op" or rest[0][1] not in ("<=", ">=", "=<", "=>", "<", ">", "="):
                raise LPFormatError(lineno, f"constraint {label.strip()!r} lacks a comparison")
            op = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">=", "=": "=="}.get(rest[0][1], rest[0][1])
            rterms, rhs, tail = _parse_linear(rest[1:], lineno)
            if rterms or tail:
                raise LPFormatError(lineno, "right-hand side must be a constant")
            rows.append((label.strip(), [(var(n), c) for n, c in terms], op, rhs))
        elif sec == "bounds":
            toks = _tokens(stmt, lineno)
            if len(toks) == 2 and toks[1][1].lower() == "free":
                j = var(toks[0][1])
                b.lb[j], b.ub[j] = -np.inf, np.inf
                continue
            _apply_bound(b, var, toks, lineno)
        elif sec in ("bin", "gen"):
            for kind, n in _tokens(stmt, lineno):
                if kind != "name":
                    raise LPFormatError(lineno, f"expected a variable name, got {n!r}")
                j = var(n)
                if sec == "bin":
                    b.kinds[j] = BINARY
                    b.lb[j], b.ub[j] = max(b.lb[j], 0.0), min(b.ub[j], 1.0)
                else:
                    b.kinds[j] = INTEGER
    if sense is None:
        raise LPFormatError(1, "missing objective section")
    for n, c in obj_terms:
        j = var(n)
        b.obj[j] = b.obj.get(j, 0.0) + (c if sense == "max" else -c)
    for label, terms, op, rhs in rows:
        fam = label.split("(", 1)[0]
        name = label[len(fam) + 1 : -1] if label.endswith(")") and "(" in label else label
        r = len(b.senses)
        b.add_row(fam, name, terms, op, rhs)
        b.row_names[r] = label
    return b.build()


def _bound_value(toks, lineno) -> tuple[float, list]:
    sign = 1.0
    i = 0
    while i < len(toks) and toks[i][0] == "op" and toks[i][1] in "+-":
        sign = -sign if toks[i][1] == "-" else sign
        i += 1
    if i >= len(toks) or toks[i][0] != "num":
        raise LPFormatError(lineno, "expected a bound value")
    v = toks[i][1]
    val = np.inf if v.lower().startswith("inf") else float(v)
    return sign * val, toks[i + 1 :]


def _apply_bound(b: ModelBuilder, var, toks, lineno: int) -> None:
    ops = {"<=": "<=", "=<": "<=", "<": "<=", ">=": ">=", "=>": ">=", ">": ">=", "=": "=="}
    if toks and toks[0][0] == "name":
        j = var(toks[0][1])
        if len(toks) < 3 or toks[1][0] != "op" or toks[1][1] not in ops:
            raise LPFormatError(lineno, "malformed bound")
        v, rest = _bound_value(toks[2:], lineno)
        if rest:
            raise LPFormatError(lineno, "trailing text after bound")
        op = ops[toks[1][1]]
        if op == "<=":
            b.ub[j] = v
        elif op == ">=":
            b.lb[j] = v
        else:
            b.lb[j] = b.ub[j] = v
        return
    lo, rest = _bound_value(toks, lineno)
    if len(rest) < 2 or rest[0][1] not in ops or rest[1][0] != "name":
        raise LPFormatError(lineno, "malformed bound")
    op1 = ops[rest[0][1]]
    j = var(rest[1][1])
    if op1 == "<=":
        b.lb[j] = lo
    elif op1 == ">=":
        b.ub[j] = lo
    else:
        b.lb[j] = b.ub[j] = lo
    rest = rest[2:]
    if rest:
        if rest[0][0] != "op" or rest[0][1] not in ops:
            raise LPFormatError(lineno, "malformed bound")
        op2 = ops[rest[0][1]]
        hi, tail = _bound_value(rest[1:], lineno)
        if tail:
            raise LPFormatError(lineno, "trailing text after bound")
        if op2 == "<=":
            b.ub[j] = hi
        else:
            b.lb[j] = hi

"""Text formats for scenarios (``.sfep``), full embeddings (``.emb``) and agent-token plans (``.flat``).

All three are line oriented with ``[section]`` headers and ``#`` comments.
See ``docs/formats.md`` for the grammar.
"""
from __future__ import annotations

import re
from fractions import Fraction
from importlib import resources
from typing import Optional

import numpy as np

from .model import (
    AgentTrajectory,
    FactoryInstance,
    FlatEmbedding,
    FullEmbedding,
    GridLayout,
    Machine,
    ManufacturingProcedure,
    Multiset,
    NULL_TOKEN_ID,
    Process,
    Token,
    validate_factory,
)


class ParseError(ValueError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col
        self.message = message


ScenarioParseError = ParseError

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_SECTION = re.compile(r"\[([A-Za-z_]+)\]\Z")


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(data[: exc.start])
            line = head.count(b"\n") + 1
            col = exc.start - (head.rfind(b"\n") + 1) + 1
            raise ParseError(line, col, "invalid UTF-8") from None
    if not isinstance(data, str):
        raise ParseError(1, 1, f"expected text, got {type(data).__name__}")
    return data


def _lines(text: str):
    """Yield ``(lineno, col, content)`` for non-blank lines with comments stripped."""
    for n, raw in enumerate(text.splitlines(), 1):
        content = raw.split("#", 1)[0]
        stripped = content.strip()
        if stripped:
            yield n, len(content) - len(content.lstrip()) + 1, stripped


def _ident(s: str, line: int, col: int, what: str) -> str:
    if not _IDENT.match(s):
        raise ParseError(line, col, f"invalid {what} {s!r}")
    return s


def _int(s: str, line: int, col: int, what: str) -> int:
    if not re.fullmatch(r"[+-]?[0-9]{1,9}", s):
        raise ParseError(line, col, f"invalid {what} {s!r}")
    return int(s)


def _cell(s: str, line: int, col: int) -> tuple[int, int]:
    m = re.fullmatch(r"([0-9]{1,6}),([0-9]{1,6})", s)
    if not m:
        raise ParseError(line, col, f"invalid cell {s!r}, expected x,y")
    return int(m.group(1)), int(m.group(2))


def _fraction(s: str, line: int, col: int) -> Fraction:
    m = re.fullmatch(r"([0-9]{1,12})(?:/([0-9]{1,12}))?", s)
    if not m or (m.group(2) is not None and int(m.group(2)) == 0):
        raise ParseError(line, col, f"invalid rational {s!r}")
    return Fraction(int(m.group(1)), int(m.group(2) or 1))


def format_multiset(ms) -> str:
    items = ms.items() if hasattr(ms, "items") else ms
    parts = [tok if n == 1 else f"{tok}*{n}" for tok, n in sorted(items) if n]
    return "+".join(parts) if parts else "-"


def parse_multiset(s: str, line: int, col: int) -> Multiset:
    if s == "-":
        return ()
    out: dict[str, int] = {}
    for part in s.split("+"):
        tok, _, n = part.strip().partition("*")
        tok, n = tok.strip(), n.strip()
        _ident(tok, line, col, "token")
        cnt = _int(n, line, col, "count") if n else 1
        if cnt < 1:
            raise ParseError(line, col, f"count must be positive in {part!r}")
        out[tok] = out.get(tok, 0) + cnt
    return tuple(sorted(out.items()))


# Scenarios ---------------------------------------------------------------

_SCENARIO_SECTIONS = ("scenario", "tokens", "processes", "machines", "grid", "agents")


def parse_scenario(data) -> FactoryInstance:
    """Parse ``.sfep`` text (or bytes) into a validated :class:`FactoryInstance`."""
    text = _decode(data)
    if not text.strip():
        raise ParseError(1, 1, "empty scenario")
    # Grid rows may contain '#', so comments are only stripped outside [grid].
    sections, header = _grid_aware_sections(text)
    if not sections:
        raise ParseError(1, 1, "empty scenario: no sections")
    for required in ("tokens", "processes", "machines", "grid", "agents"):
        if required not in sections:
            last = text.count("\n") + 1
            raise ParseError(last, 1, f"missing [{required}] section")

    meta = {}
    for n, col, line in sections.get("scenario", []):
        key, eq, val = line.partition("=")
        if not eq:
            raise ParseError(n, col, "expected key = value")
        meta[key.strip()] = val.strip()

    tokens: list[Token] = []
    where: dict[str, int] = {}
    for n, col, line in sections["tokens"]:
        for tok in line.split():
            _ident(tok, n, col, "token")
            if tok == NULL_TOKEN_ID:
                raise ParseError(n, col, f"{NULL_TOKEN_ID!r} is reserved for the null token")
            if tok in where:
                raise ParseError(n, col, f"duplicate token {tok!r}")
            where[tok] = n
            tokens.append(Token(tok))

    processes: list[Process] = []
    output = None
    for n, col, line in sections["processes"]:
        head, colon, body = line.partition(":")
        if not colon:
            raise ParseError(n, col, "expected 'id: inputs -> outputs'")
        head = head.strip()
        flagged = head.endswith("(output)")
        pid = _ident(head[: -len("(output)")].strip() if flagged else head, n, col, "process id")
        lhs, arrow, rhs = body.partition("->")
        if not arrow:
            raise ParseError(n, col, "expected '->' between inputs and outputs")
        ins = parse_multiset(lhs.strip() or "-", n, col)
        outs = parse_multiset(rhs.strip() or "-", n, col)
        for tok, _ in ins + outs:
            if tok not in where:
                raise ParseError(n, col, f"unknown token {tok!r}")
        if pid in where:
            raise ParseError(n, col, f"duplicate id {pid!r}")
        where[pid] = n
        if flagged:
            if output is not None:
                raise ParseError(n, col, f"second output process {pid!r} (first: {output!r})")
            output = pid
        processes.append(Process(pid, ins, outs))
    if output is None:
        raise ParseError(header["processes"], 1, "no process is flagged (output)")

    pids = {p.id for p in processes}
    machines: list[Machine] = []
    for n, col, line in sections["machines"]:
        mid, colon, body = line.partition(":")
        if not colon:
            raise ParseError(n, col, "expected 'id: process=runtime ... [in=x,y] [out=x,y]'")
        mid = _ident(mid.strip(), n, col, "machine id")
        if mid in where:
            raise ParseError(n, col, f"duplicate id {mid!r}")
        where[mid] = n
        caps: dict[str, int] = {}
        cells: dict[str, tuple[int, int]] = {}
        for item in body.split():
            key, eq, val = item.partition("=")
            if not eq:
                raise ParseError(n, col, f"expected key=value, got {item!r}")
            if key in ("in", "out"):
                if key in cells:
                    raise ParseError(n, col, f"{key} cell given twice")
                cells[key] = _cell(val, n, col)
            else:
                if key not in pids or key in caps:
                    raise ParseError(n, col, f"unknown or repeated process {key!r}")
                rt = _int(val, n, col, "runtime")
                if rt < 1:
                    raise ParseError(n, col, f"runtime of {key} must be >= 1")
                caps[key] = rt
        machines.append(Machine(mid, caps, cells.get("in"), cells.get("out")))

    rows = [line for _, _, line in sections["grid"]]
    if not rows:
        raise ParseError(header["grid"], 1, "empty grid")
    for (n, col, line) in sections["grid"]:
        if len(line) != len(rows[0]):
            raise ParseError(n, col, f"grid row has {len(line)} cells, expected {len(rows[0])}")
        bad = re.search(r"[^.#A-Za-z0-9]", line)
        if bad:
            raise ParseError(n, col + bad.start(), f"invalid grid character {bad.group()!r}")
    layout = GridLayout.from_rows(rows)
    if not layout.traversable:
        raise ParseError(header["grid"], 1, "no traversable cells")

    agent_lines = sections["agents"]
    if len(agent_lines) != 1:
        raise ParseError(header["agents"], 1, "[agents] must hold exactly one integer")
    n, col, line = agent_lines[0]
    budget = _int(line, n, col, "agent budget")

    procedure = ManufacturingProcedure(tuple(tokens), tuple(processes), output)
    instance = FactoryInstance(procedure, tuple(machines), layout, budget, name=meta.get("name", ""))
    report = validate_factory(instance)
    if not report.ok:
        v = report.violations[0]
        line = where.get(v.subject, header.get("machines", 1)) if isinstance(v.subject, str) else header["machines"]
        raise ParseError(line, 1, f"{v.code}: {v.message}")
    return instance


def _grid_aware_sections(text: str):
    sections: dict[str, list[tuple[int, int, str]]] = {}
    header: dict[str, int] = {}
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if current == "grid" and stripped and not stripped.startswith("["):
            if stripped.startswith("#") and " " in stripped:
                continue  # a comment inside the grid block
            sections[current].append((n, len(raw) - len(raw.lstrip()) + 1, stripped))
            continue
        content = raw.split("#", 1)[0]
        stripped = content.strip()
        if not stripped:
            continue
        col = len(content) - len(content.lstrip()) + 1
        m = _SECTION.match(stripped)
        if m:
            name = m.group(1).lower()
            if name not in _SCENARIO_SECTIONS:
                raise ParseError(n, col, f"unknown section [{name}]")
            if name in sections:
                raise ParseError(n, col, f"duplicate section [{name}]")
            sections[name] = []
            header[name] = n
            current = name
            continue
        if current is None:
            raise ParseError(n, col, "content before the first [section]")
        sections[current].append((n, col, stripped))
    return sections, header


def serialize_scenario(instance: FactoryInstance) -> str:
    proc = instance.procedure
    out = ["[scenario]"]
    if instance.name:
        out.append(f"name = {instance.name}")
    out += ["", "[tokens]"] + [t.id for t in proc.tokens]
    out += ["", "[processes]"]
    for p in proc.processes:
        flag = " (output)" if p.id == proc.output_process else ""
        ins = format_multiset(p.inputs) if p.inputs else ""
        outs = format_multiset(p.outputs) if p.outputs else ""
        out.append(f"{p.id}{flag}: {ins} -> {outs}".replace("  ", " ").rstrip())
    out += ["", "[machines]"]
    for m in instance.machines:
        items = [f"{p}={d}" for p, d in m.capabilities]
        if m.input_cell is not None:
            items.append(f"in={m.input_cell[0]},{m.input_cell[1]}")
        if m.output_cell is not None:
            items.append(f"out={m.output_cell[0]},{m.output_cell[1]}")
        out.append(f"{m.id}: {' '.join(items)}")
    out += ["", "[grid]"]
    lay = instance.layout
    for y in range(lay.height):
        out.append("".join("." if (x, y) in lay.traversable else "#" for x in range(lay.width)))
    out += ["", "[agents]", str(instance.agent_budget)]
    return "\n".join(out) + "\n"


def bundled_scenarios() -> tuple[str, ...]:
    root = resources.files("aces") / "scenarios"
    return tuple(sorted(p.name[: -len(".sfep")] for p in root.iterdir() if p.name.endswith(".sfep")))


def load_bundled(name: str) -> FactoryInstance:
    path = resources.files("aces") / "scenarios" / f"{name}.sfep"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {', '.join(bundled_scenarios())}")
    return parse_scenario(path.read_text())


def load_scenario(path_or_name: str) -> FactoryInstance:
    """Load a scenario file, or a bundled scenario by bare name."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name, "rb") as fh:
            return parse_scenario(fh.read())
    return load_bundled(path_or_name)


# Embeddings --------------------------------------------------------------


def _fmt_cell(c) -> str:
    return f"{c[0]},{c[1]}"


def _assignment_lines(machine_ids, process_ids, assignment, runs, T) -> list[str]:
    out = []
    for i, m in enumerate(machine_ids):
        items = []
        for j, p in enumerate(process_ids):
            if assignment[i, j] or runs[i, j]:
                items.append(f"{p} x={int(assignment[i, j])} rate={Fraction(int(runs[i, j]), T)}")
        out.append(f"{m}: {'; '.join(items) if items else '-'}")
    return out


def _header(kind: Optional[str], T: int, throughput: Fraction, extra: str) -> str:
    prefix = f"{kind} " if kind else ""
    return f"{prefix}T={T} throughput={throughput} {extra}"


def serialize_embedding(full: FullEmbedding) -> str:
    T = full.cycle_length
    out = [_header(None, T, full.throughput, f"agents={full.n_agents}")]
    out.append(f"machines = {' '.join(full.machine_ids)}")
    out.append(f"processes = {' '.join(full.process_ids)}")
    out.append(f"output = {full.process_ids[full.output_process]}")
    out += ["", "[assignment]"] + _assignment_lines(full.machine_ids, full.process_ids, full.assignment, full.runs, T)
    out += ["", "[trajectories]"]
    for tr in full.trajectories:
        out.append(f"a{tr.agent}: " + " ".join(f"{_fmt_cell(c)}:{k}" for c, k in tr.states))
    out += ["", "[permutation]"]
    out += [f"a{i} -> a{j}" for i, j in enumerate(full.permutation)]
    out += ["", "[buffers]"]
    for i, m in enumerate(full.machine_ids):
        out.append(f"{m} in: " + " ".join(format_multiset(b) for b in full.input_buffers[i]))
        out.append(f"{m} out: " + " ".join(format_multiset(b) for b in full.output_buffers[i]))
    return "\n".join(out) + "\n"


_HEADER = re.compile(r"(?:(FLAT) )?T=([0-9]{1,6}) throughput=([0-9]{1,12}(?:/[0-9]{1,12})?) (\w+)=([0-9]{1,9})\Z")


def _parse_head(text: str, kind: Optional[str]):
    lines = list(_lines(text))
    if not lines:
        raise ParseError(1, 1, "empty embedding")
    n, col, first = lines[0]
    m = _HEADER.match(first)
    if not m or (m.group(1) or None) != kind:
        want = "FLAT T=<int> throughput=<p/q> ..." if kind else "T=<int> throughput=<p/q> agents=<int>"
        raise ParseError(n, col, f"expected header '{want}'")
    T = int(m.group(2))
    if T < 1:
        raise ParseError(n, col, "cycle length must be >= 1")
    meta: dict[str, tuple[int, str]] = {}
    i = 1
    while i < len(lines) and not lines[i][2].startswith("["):
        ln, c, line = lines[i]
        key, eq, val = line.partition("=")
        if not eq:
            raise ParseError(ln, c, "expected key = value")
        meta[key.strip()] = (ln, val.strip())
        i += 1
    for key in ("machines", "processes", "output"):
        if key not in meta:
            raise ParseError(n, col, f"missing '{key} = ...' line")
    machine_ids = tuple(meta["machines"][1].split())
    process_ids = tuple(meta["processes"][1].split())
    for ids, key in ((machine_ids, "machines"), (process_ids, "processes")):
        for x in ids:
            _ident(x, meta[key][0], 1, key[:-1] + " id")
        if len(set(ids)) != len(ids):
            raise ParseError(meta[key][0], 1, f"duplicate {key}")
    if meta["output"][1] not in process_ids:
        raise ParseError(meta["output"][0], 1, "output process is not listed")
    sections: dict[str, list[tuple[int, int, str]]] = {}
    current = None
    for ln, c, line in lines[i:]:
        sm = _SECTION.match(line)
        if sm:
            current = sm.group(1).lower()
            if current in sections:
                raise ParseError(ln, c, f"duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(ln, c, "content before the first [section]")
        sections[current].append((ln, c, line))
    head = {"T": T, "throughput": _fraction(m.group(3), n, col), m.group(4): int(m.group(5)), "line": n}
    return head, machine_ids, process_ids, process_ids.index(meta["output"][1]), sections, meta


def _parse_assignment(rows, machine_ids, process_ids, T):
    M, P = len(machine_ids), len(process_ids)
    X = np.zeros((M, P), dtype=np.int8)
    runs = np.zeros((M, P), dtype=np.int64)
    seen = set()
    for ln, c, line in rows:
        mid, colon, body = line.partition(":")
        mid = mid.strip()
        if not colon or mid not in machine_ids or mid in seen:
            raise ParseError(ln, c, f"expected a line per listed machine, got {line!r}")
        seen.add(mid)
        i = machine_ids.index(mid)
        body = body.strip()
        if body == "-":
            continue
        for item in body.split(";"):
            m = re.fullmatch(r"\s*(\S+) x=([01]) rate=(\S+)\s*", item)
            if not m or m.group(1) not in process_ids:
                raise ParseError(ln, c, f"expected 'process x=0|1 rate=p/q', got {item.strip()!r}")
            j = process_ids.index(m.group(1))
            rate = _fraction(m.group(3), ln, c)
            r = rate * T
            if r.denominator != 1:
                raise ParseError(ln, c, f"rate {rate} is not a whole number of runs per cycle")
            X[i, j] = int(m.group(2))
            runs[i, j] = int(r)
    if len(seen) != M:
        raise ParseError(rows[-1][0] if rows else 1, 1, "assignment lists fewer machines than declared")
    return X, runs


def parse_embedding(data) -> FullEmbedding:
    """Inverse of :func:`serialize_embedding`."""
    text = _decode(data)
    head, machine_ids, process_ids, pout, sections, _ = _parse_head(text, None)
    T = head["T"]
    if "agents" not in head:
        raise ParseError(head["line"], 1, "header must give agents=<int>")
    for s in ("assignment", "trajectories", "permutation", "buffers"):
        if s not in sections:
            raise ParseError(head["line"], 1, f"missing [{s}] section")
    X, runs = _parse_assignment(sections["assignment"], machine_ids, process_ids, T)

    trajectories = []
    for ln, c, line in sections["trajectories"]:
        name, colon, body = line.partition(":")
        if not colon or name.strip() != f"a{len(trajectories)}":
            raise ParseError(ln, c, f"expected 'a{len(trajectories)}: x,y:token ...'")
        states = []
        for item in body.split():
            cell, _, tok = item.rpartition(":")
            states.append((_cell(cell, ln, c), _ident(tok, ln, c, "token")))
        if len(states) != T + 1:
            raise ParseError(ln, c, f"trajectory has {len(states)} states, expected {T + 1}")
        trajectories.append(AgentTrajectory(len(trajectories), tuple(states)))
    if len(trajectories) != head["agents"]:
        raise ParseError(head["line"], 1, f"header says {head['agents']} agents, found {len(trajectories)}")

    perm = {}
    for ln, c, line in sections["permutation"]:
        m = re.fullmatch(r"a([0-9]{1,6}) -> a([0-9]{1,6})", line)
        if not m:
            raise ParseError(ln, c, "expected 'a<i> -> a<j>'")
        perm[int(m.group(1))] = int(m.group(2))
    n = len(trajectories)
    if sorted(perm) != list(range(n)) or sorted(perm.values()) != list(range(n)):
        raise ParseError(head["line"], 1, "permutation is not a bijection over the agents")

    ins = [None] * len(machine_ids)
    outs = [None] * len(machine_ids)
    for ln, c, line in sections["buffers"]:
        m = re.fullmatch(r"(\S+) (in|out): (.*)", line)
        if not m or m.group(1) not in machine_ids:
            raise ParseError(ln, c, "expected '<machine> in|out: <multiset> ...'")
        snaps = tuple(parse_multiset(s, ln, c) for s in m.group(3).split())
        if len(snaps) != T + 1:
            raise ParseError(ln, c, f"buffer line has {len(snaps)} entries, expected {T + 1}")
        target = ins if m.group(2) == "in" else outs
        i = machine_ids.index(m.group(1))
        if target[i] is not None:
            raise ParseError(ln, c, "buffer line repeated")
        target[i] = snaps
    if any(b is None for b in ins + outs):
        raise ParseError(head["line"], 1, "every machine needs an in and an out buffer line")
    full = FullEmbedding(T, machine_ids, process_ids, pout, X, runs, tuple(trajectories),
                         tuple(perm[i] for i in range(n)), tuple(ins), tuple(outs))
    if full.throughput != head["throughput"]:
        raise ParseError(head["line"], 1, f"header throughput {head['throughput']} != {full.throughput}")
    return full


def serialize_flat(flat: FlatEmbedding, instance: FactoryInstance) -> str:
    T = flat.cycle_length
    cells, arcs, io, toks = instance.cells, instance.arcs, instance.io_cells, instance.tokens
    out = [_header("FLAT", T, flat.throughput, f"floor={flat.floor_population(0)}")]
    out.append(f"machines = {' '.join(instance.machine_ids)}")
    out.append(f"processes = {' '.join(instance.process_ids)}")
    out.append(f"output = {instance.process_ids[flat.output_process]}")
    out += ["", "[assignment]"]
    out += _assignment_lines(instance.machine_ids, instance.process_ids, flat.assignment, flat.runs, T)
    out += ["", "[at]"] + [f"{_fmt_cell(cells[c])} {t} {toks[k]}" for c, t, k in zip(*np.nonzero(flat.positions))]
    out += ["", "[mv]"] + [
        f"{_fmt_cell(arcs[a][0])} {_fmt_cell(arcs[a][1])} {t} {toks[k]}" for a, t, k in zip(*np.nonzero(flat.moves))
    ]
    for name, tensor in (("pl", flat.placements), ("rm", flat.removals)):
        out += ["", f"[{name}]"] + [f"{_fmt_cell(io[c])} {t} {toks[k]}" for c, t, k in zip(*np.nonzero(tensor))]
    out += ["", "[buffers]"]
    for i, m in enumerate(instance.machine_ids):
        bi = flat.initial_input_buffers[i] if flat.initial_input_buffers else ()
        bo = flat.initial_output_buffers[i] if flat.initial_output_buffers else ()
        out.append(f"{m} in: {format_multiset(bi)} out: {format_multiset(bo)}")
    return "\n".join(out) + "\n"


def parse_flat(data, instance: FactoryInstance) -> FlatEmbedding:
    """Inverse of :func:`serialize_flat`; tensor coordinates are resolved against ``instance``."""
    text = _decode(data)
    head, machine_ids, process_ids, pout, sections, _ = _parse_head(text, "FLAT")
    if machine_ids != instance.machine_ids or process_ids != instance.process_ids:
        raise ParseError(head["line"], 1, "machines/processes do not match the scenario")
    T = head["T"]
    for s in ("assignment", "at", "mv", "pl", "rm", "buffers"):
        if s not in sections:
            raise ParseError(head["line"], 1, f"missing [{s}] section")
    X, runs = _parse_assignment(sections["assignment"], machine_ids, process_ids, T)
    tidx = instance.token_index
    K = len(instance.tokens)

    def tok(s, ln, c):
        if s not in tidx:
            raise ParseError(ln, c, f"unknown token {s!r}")
        return tidx[s]

    def tstep(s, ln, c, hi):
        v = _int(s, ln, c, "timestep")
        if not 0 <= v <= hi:
            raise ParseError(ln, c, f"timestep {v} outside 0..{hi}")
        return v

    def lookup(index, key, ln, c, what):
        if key not in index:
            raise ParseError(ln, c, f"{key} is not a {what} of the scenario")
        return index[key]

    At = np.zeros((len(instance.cells), T + 1, K), dtype=np.int8)
    for ln, c, line in sections["at"]:
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(ln, c, "expected 'x,y t token'")
        ci = lookup(instance.cell_index, _cell(parts[0], ln, c), ln, c, "traversable cell")
        At[ci, tstep(parts[1], ln, c, T), tok(parts[2], ln, c)] = 1
    Mv = np.zeros((len(instance.arcs), T, K), dtype=np.int8)
    for ln, c, line in sections["mv"]:
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(ln, c, "expected 'x,y x,y t token'")
        arc = (_cell(parts[0], ln, c), _cell(parts[1], ln, c))
        a = lookup(instance.arc_index, arc, ln, c, "movement-graph arc")
        Mv[a, tstep(parts[2], ln, c, T - 1), tok(parts[3], ln, c)] = 1
    io_tensors = {}
    for name in ("pl", "rm"):
        arr = np.zeros((len(instance.io_cells), T, K), dtype=np.int8)
        for ln, c, line in sections[name]:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(ln, c, "expected 'x,y t token'")
            ci = lookup(instance.io_index, _cell(parts[0], ln, c), ln, c, "buffer cell")
            arr[ci, tstep(parts[1], ln, c, T - 1), tok(parts[2], ln, c)] = 1
        io_tensors[name] = arr
    ins, outs = {}, {}
    for ln, c, line in sections["buffers"]:
        m = re.fullmatch(r"(\S+) in: (\S+) out: (\S+)", line)
        if not m or m.group(1) not in machine_ids or m.group(1) in ins:
            raise ParseError(ln, c, "expected '<machine> in: <multiset> out: <multiset>'")
        ins[m.group(1)] = parse_multiset(m.group(2), ln, c)
        outs[m.group(1)] = parse_multiset(m.group(3), ln, c)
    if ins and len(ins) != len(machine_ids):
        raise ParseError(head["line"], 1, "buffers must list every machine")
    return FlatEmbedding(
        cycle_length=T,
        assignment=X,
        runs=runs,
        positions=At,
        moves=Mv,
        placements=io_tensors["pl"],
        removals=io_tensors["rm"],
        output_process=pout,
        initial_input_buffers=tuple(ins[m] for m in machine_ids) if ins else (),
        initial_output_buffers=tuple(outs[m] for m in machine_ids) if ins else (),
    )


def embedding_kind(data) -> str:
    """``'flat'`` or ``'full'`` judging by the header line."""
    text = _decode(data)
    for _, _, line in _lines(text):
        return "flat" if line.startswith("FLAT ") else "full"
    raise ParseError(1, 1, "empty embedding")

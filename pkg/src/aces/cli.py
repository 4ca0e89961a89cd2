"""Command-line interface: ``aces solve|validate|simulate|report|render``.

Exit codes are stable:

====  ==========================================================
0     success (``validate``: no violations)
1     plan violations found, or simulation rejected the plan
2     bad command-line usage
3     an input file does not exist
4     an input file could not be parsed
5     the requested solver backend is unavailable
6     scenario and plan do not fit together
7     ``solve`` found no positive-throughput embedding
====  ==========================================================
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .aces import (
    DEFAULT_FLAT_BUDGET,
    DEFAULT_MIN_CYCLE_LENGTH,
    DEFAULT_TOTAL_BUDGET,
    AcesConfig,
    aces_solve,
    read_trace_csv,
    write_trace_csv,
)
from .model import InvalidInstanceError
from .scenario import (
    ParseError,
    embedding_kind,
    load_scenario,
    parse_embedding,
    parse_flat,
    serialize_embedding,
    serialize_flat,
)
from .solvers import BACKEND_ENV, BackendUnavailableError, backend_names, get_backend
from .validate import SimulationError, StructuralError, render_frames, simulate_cycle, validate_flat_embedding, validate_full_embedding

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_PARSE_ERROR = 4
EXIT_BACKEND_UNAVAILABLE = 5
EXIT_MISMATCH = 6
EXIT_NO_EMBEDDING = 7


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _positive(kind):
    def check(s: str):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return check


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise CliError(EXIT_MISSING_FILE, f"no such file: {path}") from None


def _load_scenario(path: str):
    if not os.path.exists(path) and (os.sep in path or path.endswith(".sfep")):
        raise CliError(EXIT_MISSING_FILE, f"no such file: {path}")
    try:
        return load_scenario(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING_FILE, str(exc)) from None
    except ParseError as exc:
        raise CliError(EXIT_PARSE_ERROR, f"{path}: {exc}") from None


def _load_plan(path: str, instance):
    data = _read_bytes(path)
    try:
        if embedding_kind(data) == "flat":
            return "flat", parse_flat(data, instance)
        return "full", parse_embedding(data)
    except ParseError as exc:
        raise CliError(EXIT_PARSE_ERROR, f"{path}: {exc}") from None


def _load_full(path: str, instance):
    kind, plan = _load_plan(path, instance)
    if kind == "flat":
        from .conversion import ConversionError, convert_to_sfep

        try:
            plan = convert_to_sfep(plan, instance)
        except (ConversionError, AssertionError) as exc:
            raise CliError(EXIT_VIOLATIONS, f"{path}: cannot convert plan: {exc}") from None
    if plan.machine_ids != instance.machine_ids or plan.process_ids != instance.process_ids:
        raise CliError(EXIT_MISMATCH, f"{path}: machines or processes differ from the scenario")
    return plan


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# Subcommands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    instance = _load_scenario(args.scenario)
    try:
        backend = get_backend(args.backend)
    except BackendUnavailableError as exc:
        raise CliError(EXIT_BACKEND_UNAVAILABLE, str(exc)) from None
    try:
        config = AcesConfig(args.total_budget, args.flat_budget, args.min_cycle, args.max_cycle)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    try:
        result = aces_solve(instance, config, backend)
    except InvalidInstanceError as exc:
        raise CliError(EXIT_PARSE_ERROR, str(exc)) from None
    prefix = Path(args.out) if args.out else Path(Path(args.scenario).name).with_suffix("")
    csv_path = prefix.with_suffix(".csv")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        write_trace_csv(result.trace, fh)
    for r in result.trace:
        print(f"T={r.T}\t{r.status}\t{'-' if r.throughput is None else r.throughput}\t{r.solve_seconds:.2f}s")
    if result.embedding is None:
        print("no positive-throughput embedding found", file=sys.stderr)
        return EXIT_NO_EMBEDDING
    _write(prefix.with_suffix(".emb"), serialize_embedding(result.embedding))
    _write(prefix.with_suffix(".flat"), serialize_flat(result.flat, instance))
    print(f"best: T={result.embedding.cycle_length} throughput={result.throughput}")
    print(f"wrote {prefix.with_suffix('.emb')}, {prefix.with_suffix('.flat')}, {csv_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    instance = _load_scenario(args.scenario)
    kind, plan = _load_plan(args.plan, instance)
    try:
        if kind == "flat":
            report = validate_flat_embedding(instance, plan)
        else:
            report = validate_full_embedding(instance, plan)
    except StructuralError as exc:
        raise CliError(EXIT_MISMATCH, f"{args.plan}: {exc}") from None
    for v in report:
        where = "" if v.timestep is None else f" t={v.timestep}"
        print(f"{v.constraint}\t{v.location}{where}\t{v.message}")
    if report.ok:
        print(f"ok: {kind} plan, T={plan.cycle_length}, throughput={plan.throughput}")
        return EXIT_OK
    counts = ", ".join(f"{c}={n}" for c, n in sorted(report.constraints.items()))
    print(f"{len(report)} violation(s): {counts}", file=sys.stderr)
    return EXIT_VIOLATIONS


def _snapshot_line(t: int, snap) -> str:
    agents = " ".join(f"{c[0]},{c[1]}:{tok}" for c, tok in snap.agents)
    ins = " ".join("+".join(f"{k}*{n}" for k, n in b) or "-" for b in snap.input_buffers)
    outs = " ".join("+".join(f"{k}*{n}" for k, n in b) or "-" for b in snap.output_buffers)
    return f"{t}\t{agents}\t{ins}\t{outs}"


def cmd_simulate(args) -> int:
    instance = _load_scenario(args.scenario)
    full = _load_full(args.plan, instance)
    try:
        trace = simulate_cycle(instance, full, args.cycles)
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS
    lines = ["t\tagents\tinput_buffers\toutput_buffers"]
    lines += [_snapshot_line(t, s) for t, s in enumerate(trace.snapshots)]
    lines.append(f"# completions={trace.completions} throughput={trace.throughput}")
    if args.out:
        _write(Path(args.out), "\n".join(lines) + "\n")
    print(f"cycles={args.cycles} completions={trace.completions} throughput={trace.throughput}")
    return EXIT_OK


def report_tables(traces: Sequence[tuple[str, "object"]]) -> str:
    """Throughput-vs-T and runtime-vs-T tables (TSV) for labelled traces."""
    Ts = sorted({r.T for _, tr in traces for r in tr})
    labels = [label for label, _ in traces]
    by = [{r.T: r for r in tr} for _, tr in traces]
    out = ["# throughput", "\t".join(["T"] + labels)]
    for T in Ts:
        row = [str(T)]
        for d in by:
            r = d.get(T)
            row.append("" if r is None else str(r.throughput if r.throughput is not None else Fraction(0)))
        out.append("\t".join(row))
    out += ["", "# runtime_s", "\t".join(["T"] + labels)]
    for T in Ts:
        out.append("\t".join([str(T)] + ["" if T not in d else f"{d[T].solve_seconds:.3f}" for d in by]))
    out += ["", "# best", "\t".join(["instance", "T", "throughput"])]
    for label, d in zip(labels, by):
        best = None
        for T in sorted(d):
            r = d[T]
            if r.throughput is not None and r.throughput > 0 and (best is None or r.throughput > best.throughput):
                best = r
        out.append("\t".join([label, "" if best is None else str(best.T), "0" if best is None else str(best.throughput)]))
    return "\n".join(out) + "\n"


def cmd_report(args) -> int:
    traces = []
    for path in args.traces:
        data = _read_bytes(path)
        try:
            traces.append((Path(path).stem, read_trace_csv(data.decode("utf-8").splitlines())))
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise CliError(EXIT_PARSE_ERROR, f"{path}: {exc}") from None
    text = report_tables(traces)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args) -> int:
    instance = _load_scenario(args.scenario)
    full = _load_full(args.plan, instance)
    text = "\n".join(render_frames(instance, full, args.cycles))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aces", description="Smart-factory embedding solver, validator and simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-cycle-length progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="search cycle lengths for the best embedding")
    s.add_argument("scenario", help=".sfep file or bundled scenario name")
    s.add_argument("--total-budget", type=_positive(float), default=DEFAULT_TOTAL_BUDGET, metavar="SEC")
    s.add_argument("--flat-budget", type=_positive(float), default=DEFAULT_FLAT_BUDGET, metavar="SEC")
    s.add_argument("--min-cycle", type=_positive(int), default=DEFAULT_MIN_CYCLE_LENGTH, metavar="T")
    s.add_argument("--max-cycle", type=_positive(int), default=None, metavar="T")
    s.add_argument(
        "--backend", default=None, help=f"MILP backend: {', '.join(backend_names())} (default: ${BACKEND_ENV} or highs)"
    )
    s.add_argument("--out", help="output prefix; writes PREFIX.emb, PREFIX.flat and PREFIX.csv")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a .flat or .emb plan against a scenario")
    v.add_argument("scenario")
    v.add_argument("plan")
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("simulate", help="replay a plan for several cycles")
    m.add_argument("scenario")
    m.add_argument("plan")
    m.add_argument("--cycles", type=_positive(int), default=1)
    m.add_argument("--out", help="write the per-timestep trace here")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="tabulate trace CSVs by cycle length")
    r.add_argument("traces", nargs="+")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    d = sub.add_parser("render", help="print ASCII frames of a plan")
    d.add_argument("scenario")
    d.add_argument("plan")
    d.add_argument("--cycles", type=_positive(int), default=1)
    d.add_argument("--out")
    d.set_defaults(func=cmd_render)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "max_cycle", None) is not None and args.max_cycle < args.min_cycle:
        print("aces: --max-cycle is below --min-cycle", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"aces: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

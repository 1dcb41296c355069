"""Command-line interface.

Subcommands::

    zenochiral validate   check the measurement schedule of a lattice
    zenochiral simulate   run an engine and write density and flow traces
    zenochiral scan       sweep p (bulk-edge formula vs. Zeno simulation)
                          or n (near-Zeno prediction vs. exact engine)
    zenochiral decompose  print F_bulk, F_edge and F_total for one p

Settings come from a flat ``key = value`` file (``--config``) overridden by
command-line flags.  Exit codes: 0 ok, 1 validation failure, 2 usage or
parse error, 3 numerical-health failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import bulkedge, nearzeno, quantum, zeno
from .lattice import (
    BOUNDARIES,
    KINDS,
    LatticeSpec,
    build_lattice,
    build_schedule,
    default_cut,
    flow_cut,
    naive_square_schedule,
    validate_schedule,
)

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
ENGINES = ("exact", "zeno", "floquet", "near_zeno")
PROTOCOLS = ("standard", "naive_square")
AXES = ("p", "n")

DENSITY_HEADER = ["cycle", "step", "site", "x", "y", "density"]
FLOW_HEADER = ["cycle", "step", "cumulative_flow", "step_flow"]
P_SCAN_HEADER = ["p", "f_bulk", "f_edge", "f_total", "f_sim_x4", "abs_err", "error"]
N_SCAN_HEADER = ["n", "flow_nz", "flow_exact", "abs_err", "error"]


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    lattice: str = "lieb"
    lx: int = 4
    ly: int = 8
    boundary: str = "open"
    period: float = 4 * math.pi
    nmeas: int = 64
    cycles: int = 10
    engine: str = "zeno"
    fill: str = "lower_half"
    cut_x: Optional[float] = None
    out: str = "."
    protocol: str = "standard"
    axis: str = "p"
    grid: str = ""
    jobs: int = 1

    def __post_init__(self):
        if self.lattice not in KINDS:
            raise UsageError(f"lattice must be one of {KINDS}")
        if self.boundary not in BOUNDARIES:
            raise UsageError(f"boundary must be one of {BOUNDARIES}")
        if self.engine not in ENGINES:
            raise UsageError(f"engine must be one of {ENGINES}")
        if self.protocol not in PROTOCOLS:
            raise UsageError(f"protocol must be one of {PROTOCOLS}")
        if self.axis not in AXES:
            raise UsageError(f"axis must be one of {AXES}")
        if self.lx < 1 or self.ly < 1:
            raise UsageError("lx and ly must be positive")
        if not self.period > 0:
            raise UsageError("period must be positive")
        if self.nmeas < 1 or self.cycles < 0 or self.jobs < 1:
            raise UsageError("nmeas and jobs must be positive, cycles nonnegative")
        parse_fill(self.fill)
        if self.engine == "near_zeno":
            steps = 6 if self.lattice == "kagome_mod" else 8
            if abs(math.sin(self.period / steps) ** 2 - 1.0) > 1e-9:
                raise UsageError(f"engine near_zeno needs perfect switching, period = {steps // 2} pi")
        if self.engine in ("exact", "floquet", "near_zeno") and self.boundary != "open":
            raise UsageError(f"engine {self.engine} measures flow by region counting and needs boundary=open")

    @property
    def spec(self) -> LatticeSpec:
        return LatticeSpec(self.lattice, self.lx, self.ly, self.boundary)


_CASTS = {f.name: f.type for f in fields(RunConfig)}


def _cast(name: str, value: str):
    kind = _CASTS[name]
    value = value.strip()
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return _parse_float(value)
        if kind == "Optional[float]":
            return None if value.lower() in ("", "none", "auto") else _parse_float(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {name}: {value!r}") from exc
    return value


def _parse_float(text: str) -> float:
    """Float with optional ``pi`` factor, e.g. ``4pi`` or ``4*pi``."""
    t = text.replace(" ", "").lower()
    if t.endswith("pi"):
        head = t[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys allowed."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _cast(key, value)
    return values


def dump_config(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {'auto' if value is None else _fmt(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"


def parse_fill(text: str):
    """``lower_half``, ``lower_half:<ell>``, ``uniform``, ``site:<id>`` or ``file:<path>``."""
    head, _, arg = text.partition(":")
    if head == "lower_half":
        return (head, _parse_float(arg) if arg else None)
    if head == "uniform" and not arg:
        return (head, None)
    if head == "site":
        try:
            return (head, int(arg))
        except ValueError:
            raise UsageError(f"bad site in fill {text!r}") from None
    if head == "file" and arg:
        return (head, arg)
    raise UsageError(f"unknown fill {text!r}")


def initial_density(config: RunConfig, lattice) -> np.ndarray:
    kind, arg = parse_fill(config.fill)
    try:
        if kind == "lower_half":
            return quantum.lower_half_fill(lattice, arg)
        if kind == "uniform":
            return quantum.uniform_fill(lattice)
        if kind == "site":
            return quantum.single_site_fill(lattice, arg)
        return quantum.fill_from_file(lattice, arg)
    except (IndexError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def cut_position(config: RunConfig, lattice) -> float:
    """``cut_x`` if set, else the default cut for the configured filling level."""
    if config.cut_x is not None:
        return config.cut_x
    kind, arg = parse_fill(config.fill)
    return default_cut(lattice, arg if kind == "lower_half" else None)


def _fmt(x) -> str:
    """Shortest round-trip decimal."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    return repr(x)


def parse_grid(text: str, integer: bool = False) -> List[float]:
    """``start:stop:step`` (inclusive stop) or a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            parts = [float(t) for t in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + k * step, 12) for k in range(max(count, 0))]
        else:
            values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None
    if integer:
        if any(v != int(v) or v < 1 for v in values):
            raise UsageError("n grid needs positive integers")
        return [int(v) for v in values]
    return values


# --- subcommands ----------------------------------------------------------------


def _schedule(config: RunConfig, lattice):
    if config.protocol == "naive_square":
        return naive_square_schedule(lattice)
    return build_schedule(lattice)


def cmd_validate(config: RunConfig, stdout=None) -> int:
    lattice = build_lattice(config.spec)
    schedule = _schedule(config, lattice)
    report = validate_schedule(lattice, schedule)
    print(f"lattice {config.lattice} {config.lx}x{config.ly} {config.boundary}, {lattice.n_sites} sites, "
          f"{schedule.period} steps, protocol {config.protocol}", file=stdout)
    print(report.summary(limit=10), file=stdout)
    return EXIT_OK if report.ok else EXIT_INVALID


def _writer(path: Path, header):
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def cmd_simulate(config: RunConfig, stdout=None) -> int:
    lattice = build_lattice(config.spec)
    schedule = _schedule(config, lattice)
    report = validate_schedule(lattice, schedule)
    if not report.ok:
        print(report.summary(limit=10), file=stdout)
        return EXIT_INVALID
    g0 = initial_density(config, lattice)
    x_cut = cut_position(config, lattice)
    try:
        cut = flow_cut(lattice, x_cut, schedule)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    pos = lattice.positions
    dens_fh, dens = _writer(out / "density.csv", DENSITY_HEADER)
    flow_fh, flows = _writer(out / "flow.csv", FLOW_HEADER)
    total = 0.0
    state = {"cycle": 0, "prev": g0.copy()}

    def record(step, density, step_flow=None):
        nonlocal total
        if step_flow is None:
            step_flow = quantum.flow_sim(state["prev"], density, cut)
        total += step_flow
        cyc = state["cycle"]
        for s in range(lattice.n_sites):
            dens.writerow([cyc, step, s, _fmt(pos[s, 0]), _fmt(pos[s, 1]), _fmt(density[s])])
        flows.writerow([cyc, step, _fmt(total), _fmt(step_flow)])
        state["prev"] = density

    try:
        if config.engine == "zeno":
            p = zeno.hop_probability(config.period)
            blocks = [zeno.step_blocks(lattice, schedule, i, cut.links) for i in range(1, schedule.period + 1)]
            g = g0.copy()
            for cyc in range(config.cycles):
                state["cycle"] = cyc
                for blk in blocks:
                    w = blk.weight.astype(bool)
                    step_flow = p * (g[blk.left[w]].sum() - g[blk.right[w]].sum())
                    g = zeno.apply_step(g, blk, p)
                    record(blk.index, g, float(step_flow))
        elif config.engine == "near_zeno":
            params = quantum.ProtocolParams(config.period, config.nmeas, schedule.period)
            mats = nearzeno._nz_step_matrices(lattice, schedule, params)
            g = g0.copy()
            for cyc in range(config.cycles):
                state["cycle"] = cyc
                for i, mat in enumerate(mats, start=1):
                    g = mat @ g
                    record(i, g)
        else:
            params = quantum.ProtocolParams(config.period, config.nmeas, schedule.period)
            engine = quantum.ExactEngine(lattice, schedule, params)
            G = quantum.diagonal_state(g0)
            for cyc in range(config.cycles):
                state["cycle"] = cyc
                G = engine.run(G, 1, on_step=record, floquet=config.engine == "floquet")
    except quantum.NumericalHealthError as exc:
        print(f"numerical health failure: {exc}", file=stdout)
        return EXIT_NUMERIC
    finally:
        dens_fh.close()
        flow_fh.close()
    cycles = max(config.cycles, 1)
    print(f"engine {config.engine}: {config.cycles} cycles, cut x = {_fmt(x_cut)}, "
          f"total flow {_fmt(total)}, per cycle {_fmt(total / cycles)}", file=stdout)
    print(f"wrote {out / 'density.csv'} and {out / 'flow.csv'}", file=stdout)
    return EXIT_OK


def _period_for_p(p: float, steps: int = 8) -> float:
    return 2.0 * (steps // 2) * math.asin(math.sqrt(p)) if steps == 8 else 6.0 * math.asin(math.sqrt(p))


def _p_point(args):
    config, p = args
    row = [_fmt(p)]
    try:
        dec = bulkedge.f_total(p)
        lattice = build_lattice(config.spec)
        schedule = build_schedule(lattice)
        g0 = initial_density(config, lattice)
        x_cut = cut_position(config, lattice)
        cut = flow_cut(lattice, x_cut, schedule)
        sim = zeno.cut_flow(lattice, schedule, cut, p, max(config.cycles, 1), g0).sum() / max(config.cycles, 1)
        row += [_fmt(dec.f_bulk), _fmt(dec.f_edge), _fmt(dec.f_total), _fmt(4 * sim), _fmt(abs(dec.f_total - 4 * sim)), ""]
    except Exception as exc:  # recorded per point, scan continues
        row += ["", "", "", "", "", f"{type(exc).__name__}: {exc}"]
    return row


def _n_point(args):
    config, n = args
    row = [str(n)]
    try:
        lattice = build_lattice(config.spec)
        schedule = build_schedule(lattice)
        params = quantum.ProtocolParams(config.period, n, schedule.period)
        g0 = initial_density(config, lattice)
        x_cut = cut_position(config, lattice)
        cut = flow_cut(lattice, x_cut, schedule)
        cycles = max(config.cycles, 1)
        flow_nz = nearzeno.nz_flow(lattice, schedule, params, cycles, g0, left=cut.left)
        engine = quantum.ExactEngine(lattice, schedule, params)
        G = engine.run(quantum.diagonal_state(g0), cycles)
        flow_exact = quantum.flow_sim(g0, G, cut) / cycles
        row += [_fmt(flow_nz), _fmt(flow_exact), _fmt(abs(flow_nz - flow_exact)), ""]
    except Exception as exc:  # recorded per point, scan continues
        row += ["", "", "", f"{type(exc).__name__}: {exc}"]
    return row


def cmd_scan(config: RunConfig, stdout=None) -> int:
    if config.axis == "p":
        header, worker = P_SCAN_HEADER, _p_point
        grid = parse_grid(config.grid)
        if any(not 0.0 <= p <= 1.0 for p in grid):
            raise UsageError("p grid must lie in [0, 1]")
    else:
        if config.boundary != "open":
            raise UsageError("n scan measures flow by region counting and needs boundary=open")
        header, worker = N_SCAN_HEADER, _n_point
        grid = parse_grid(config.grid, integer=True)
    tasks = [(config, v) for v in grid]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(worker, tasks))
    else:
        rows = [worker(t) for t in tasks]
    out = Path(config.out)
    target = out if out.suffix == ".csv" else out / f"scan_{config.axis}.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    failed = sum(1 for r in rows if r[-1])
    print(f"wrote {len(rows)} rows to {target}" + (f" ({failed} failed points)" if failed else ""), file=stdout)
    return EXIT_OK


def cmd_decompose(config: RunConfig, p: Optional[float] = None, stdout=None) -> int:
    if p is None:
        p = zeno.hop_probability(config.period)
    dec = bulkedge.f_total(p)
    print(f"p = {_fmt(p)}", file=stdout)
    print(f"f_bulk = {_fmt(dec.f_bulk)}", file=stdout)
    print(f"f_edge = {_fmt(dec.f_edge)}", file=stdout)
    print(f"f_total = {_fmt(dec.f_total)}", file=stdout)
    print(f"f_sim = {_fmt(dec.f_sim)}", file=stdout)
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(sub):
    sub.add_argument("--config", help="flat key = value settings file")
    sub.add_argument("--lattice", choices=KINDS)
    sub.add_argument("--lx", type=int)
    sub.add_argument("--ly", type=int)
    sub.add_argument("--boundary", choices=BOUNDARIES)
    sub.add_argument("--period", help="cycle duration T; accepts e.g. 4pi")
    sub.add_argument("--nmeas", type=int, help="measurements per step n")
    sub.add_argument("--cycles", type=int)
    sub.add_argument("--engine", choices=ENGINES)
    sub.add_argument("--fill", help="lower_half[:ell], uniform, site:<id> or file:<path>")
    sub.add_argument("--cut-x", dest="cut_x", help="x position of the flow cut")
    sub.add_argument("--out", help="output directory (or .csv file for scan)")
    sub.add_argument("--protocol", choices=PROTOCOLS)
    sub.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zenochiral", description="Measurement-induced chiral transport of free fermions.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(subs.add_parser("validate", help="check schedule admissibility"))
    _common(subs.add_parser("simulate", help="run an engine, write density.csv and flow.csv"))
    scan = subs.add_parser("scan", help="parameter scan")
    _common(scan)
    scan.add_argument("--axis", choices=AXES)
    scan.add_argument("--grid", help="start:stop:step or comma list")
    scan.add_argument("--jobs", type=int)
    dec = subs.add_parser("decompose", help="bulk and edge flow for one p")
    _common(dec)
    dec.add_argument("--p", type=float, help="hop probability (default sin^2(T/8))")
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        values.update(parse_config_text(text, args.config))
    for name in _CASTS:
        value = getattr(args, name, None)
        if value is not None:
            values[name] = _cast(name, value) if isinstance(value, str) else value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = make_config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(config))
            return EXIT_OK
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "scan":
            return cmd_scan(config)
        p = getattr(args, "p", None)
        if p is not None and not 0.0 <= p <= 1.0:
            raise UsageError("p must lie in [0, 1]")
        return cmd_decompose(config, p)
    except UsageError as exc:
        print(f"zenochiral: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except quantum.NumericalHealthError as exc:
        print(f"zenochiral: numerical health failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

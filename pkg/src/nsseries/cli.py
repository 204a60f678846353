"""Command line front end: ``nsseries <command> [options]``.

Options can come from a JSON or YAML config file (``--config``); explicit
flags override it.  The memo cache lives in ``$NSSERIES_CACHE_DIR`` (default
``~/.cache/nsseries``) as ``tower.cache``.

Exit codes: 0 success, 1 verification violation, 2 usage or config error,
3 truncation contamination in requested output, 4 tower budget exceeded,
5 corrupt cache file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .closed_form import BudgetExceeded, CacheIntegrityError, MemoCache, Tower, TowerBudget, slab_source
from .convergence import InsufficientData, axis_coefficients, check_sufficient_conditions, default_targets, radius_estimate
from .datasets import random_dataset
from .manufactured import TaylorGreen
from .recurrence import (COMPONENT_NAMES, BoundaryData, FlowConfig, IncompleteBoundaryError, SeriesSolution,
                         march, on_pressure_slab, on_velocity_slab, residual_table)
from .series import EXACT, FLOAT, Caps, CoefficientField, format_scalar, read_records, write_records
from .toy2d import BUILTIN_BOUNDARIES, solve_toy
from .verification import (TargetRanges, base_case_violations, bijection_violations, equivalence_chain,
                           solve_dataset)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_CONTAMINATED, EXIT_BUDGET, EXIT_CACHE = 0, 1, 2, 3, 4, 5
CACHE_ENV = "NSSERIES_CACHE_DIR"
CACHE_FILE = "tower.cache"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    mode: str = EXACT
    seed: int = 0
    nu: Fraction = Fraction(1, 2)
    density: Fraction = Fraction(1)
    caps_omega: int = 2
    caps_total: int = 14
    caps_slope: int = 2
    boundary: str = "random"
    boundary_path: Optional[str] = None
    data_density: float = 0.3
    budget: TowerBudget = field(default_factory=TowerBudget)
    output: Optional[str] = None
    points: int = 16
    points_seed: int = 0

    def caps(self) -> Caps:
        if min(self.caps_omega, self.caps_total, self.caps_slope) < 0:
            raise ConfigError("caps must be non-negative")
        return Caps.cone(self.caps_omega, self.caps_total, self.caps_slope)


def _load_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith((".yaml", ".yml")):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then flags that were given explicitly."""
    cfg = RunConfig()
    data = _load_file(args.config) if getattr(args, "config", None) else {}
    try:
        flow = data.get("flow", {})
        caps = data.get("caps", {})
        boundary = data.get("boundary", {})
        budget = data.get("budget", {})
        points = data.get("points", {})
        cfg.mode = data.get("mode", cfg.mode)
        cfg.seed = int(data.get("seed", cfg.seed))
        cfg.nu = Fraction(str(flow.get("nu", cfg.nu)))
        cfg.density = Fraction(str(flow.get("density", cfg.density)))
        cfg.caps_omega = int(caps.get("omega", cfg.caps_omega))
        cfg.caps_total = int(caps.get("total", cfg.caps_total))
        cfg.caps_slope = int(caps.get("slope", cfg.caps_slope))
        cfg.boundary = boundary.get("source", cfg.boundary)
        cfg.boundary_path = boundary.get("path", cfg.boundary_path)
        cfg.data_density = float(boundary.get("density", cfg.data_density))
        cfg.budget = TowerBudget(int(budget.get("max_omega", 3)), int(budget.get("max_expansions", 10 ** 7)),
                                 budget.get("time_limit"))
        cfg.output = data.get("output", cfg.output)
        cfg.points = int(points.get("count", cfg.points))
        cfg.points_seed = int(points.get("seed", cfg.points_seed))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    for name in ("mode", "seed", "nu", "density", "caps_omega", "caps_total", "caps_slope", "boundary",
                 "boundary_path", "data_density", "output", "points", "points_seed"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "max_expansions", None) is not None:
        cfg.budget.max_expansions = args.max_expansions
    if getattr(args, "max_omega", None) is not None:
        cfg.budget.max_omega = args.max_omega
    if getattr(args, "time_limit", None) is not None:
        cfg.budget.time_limit = args.time_limit
    if cfg.mode not in (EXACT, FLOAT):
        raise ConfigError(f"mode must be {EXACT!r} or {FLOAT!r}")
    return cfg


def _boundary_from_file(path: str, caps: Caps, cfg: RunConfig) -> Tuple[BoundaryData, FlowConfig]:
    with open(path, encoding="utf-8") as fh:
        records = read_records(fh, EXACT)
    init: Tuple[dict, dict, dict] = ({}, {}, {})
    vel: Tuple[dict, dict, dict] = ({}, {}, {})
    force: Tuple[dict, dict, dict] = ({}, {}, {})
    pressure = {}
    numbers = {name: a for a, name in COMPONENT_NAMES.items()}
    for name, entries in records.items():
        for idx, value in entries.items():
            if not caps.contains(idx):
                continue
            if name in numbers:
                if not on_velocity_slab(idx):
                    raise ConfigError(f"{path}: {name}{tuple(idx)} is not a boundary or initial coefficient")
                (init if idx.omega == 0 else vel)[numbers[name]][idx] = value
            elif name == "P":
                if not on_pressure_slab(idx):
                    raise ConfigError(f"{path}: P{tuple(idx)} is not a pressure boundary coefficient")
                pressure[idx] = value
            else:
                force[int(name[1])][idx] = value

    def fields(parts):
        return tuple(CoefficientField(d, caps, EXACT).to_mode(cfg.mode) for d in parts)

    g = fields(force) if any(force) else None
    return (BoundaryData(fields(init), fields(vel), CoefficientField(pressure, caps, EXACT).to_mode(cfg.mode)),
            FlowConfig(cfg.nu, cfg.density, g))


def make_boundary(cfg: RunConfig) -> Tuple[BoundaryData, FlowConfig]:
    caps = cfg.caps()
    if cfg.boundary == "random":
        return random_dataset(cfg.seed, caps, density=cfg.data_density, mode=cfg.mode)
    if cfg.boundary == "manufactured":
        return TaylorGreen(cfg.nu, cfg.density).boundary(caps, cfg.mode)
    if cfg.boundary == "zero":
        empty = tuple(CoefficientField({}, caps, cfg.mode) for _ in range(3))
        return BoundaryData(empty, empty, CoefficientField({}, caps, cfg.mode)), FlowConfig(cfg.nu, cfg.density)
    if cfg.boundary == "file":
        if not cfg.boundary_path:
            raise ConfigError("boundary source 'file' needs a path")
        return _boundary_from_file(cfg.boundary_path, caps, cfg)
    raise ConfigError(f"unknown boundary source {cfg.boundary!r}")


def solve(cfg: RunConfig) -> SeriesSolution:
    boundary, flow = make_boundary(cfg)
    return march(boundary, flow, cfg.caps())


# ---------------------------------------------------------------------------
# Cache handling


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "nsseries")


def open_tower(args, budget: TowerBudget) -> Tower:
    path = cache_dir() / CACHE_FILE
    cache = MemoCache.load(path) if (not args.no_cache and path.exists()) else MemoCache()
    return Tower(cache, budget)


def close_tower(args, tower: Tower):
    if args.no_cache:
        return
    directory = cache_dir()
    directory.mkdir(parents=True, exist_ok=True)
    tower.cache.save(directory / CACHE_FILE)


# ---------------------------------------------------------------------------
# Commands


def _out(args):
    return open(args.output, "w", encoding="utf-8", newline="") if getattr(args, "output", None) else sys.stdout


def cmd_solve(args, cfg: RunConfig) -> int:
    sol = solve(cfg)
    fields = sol.fields()
    written = {}
    dropped = 0
    for name, fld in fields.items():
        bad = sol.contamination.get(name, set())
        if args.include_contaminated:
            written[name] = fld
        else:
            keep = {k: v for k, v in fld.items() if k not in bad}
            dropped += len(fld.entries) - len(keep)
            written[name] = CoefficientField(keep, fld.caps, fld.mode)
    stream = _out(cfg)
    try:
        write_records(written, stream)
    finally:
        if stream is not sys.stdout:
            stream.close()
    report = sys.stderr
    for name in fields:
        report.write(f"{name}: {len(sol.contamination.get(name, ()))} truncation-contaminated coefficients\n")
    for name, idx in sol.boundary_disagreements:
        report.write(f"warning: supplied {name}{tuple(idx)} differs from the continuity value\n")
    if args.include_contaminated and sol.contaminated_count():
        return EXIT_OK if args.allow_contamination else EXIT_CONTAMINATED
    if dropped:
        report.write(f"{dropped} contaminated coefficients omitted from the output\n")
    return EXIT_OK


def _parse_range(text: str) -> Tuple[int, ...]:
    """``"2:4"`` -> (2, 3, 4); ``"1,2"`` -> (1, 2)."""
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(",") if v)


def cmd_verify(args, cfg: RunConfig) -> int:
    ranges = TargetRanges(_parse_range(args.omegas), _parse_range(args.p), _parse_range(args.q),
                          _parse_range(args.r), _parse_range(args.alphas))
    out = sys.stdout
    violations = []
    interior = [t for t in ranges.targets() if t[0] >= 1]
    tower = open_tower(args, cfg.budget)
    if not interior:
        out.write("no interior targets: the equivalence chain is vacuous\n")
    else:
        caps = ranges.caps()
        for k in range(args.datasets):
            seed = cfg.seed + k
            sol = solve_dataset(seed, caps, args.data_density)
            found = equivalence_chain(sol, interior, tower, _parse_range(args.literal_omegas), label=seed)
            found += base_case_violations(sol, tower, max_omega=max(ranges.omegas), label=seed)
            out.write(f"dataset {seed}: {len(interior)} targets, {len(found)} violations\n")
            violations += found
    if not args.skip_bijections:
        found = bijection_violations(args.qmax)
        out.write(f"bijections and sigma up to q={args.qmax}: {len(found)} violations\n")
        violations += found
    if not args.skip_identities and interior:
        from .compaction import CoefficientSource, verify_compaction_identities
        sol = solve_dataset(cfg.seed, ranges.caps(), args.data_density)
        found = verify_compaction_identities(CoefficientSource.from_solution(sol))
        out.write(f"compaction identities: {len(found)} violations\n")
        violations += [f"[identity] {v}" for v in found]
    close_tower(args, tower)
    for v in violations[:50]:
        out.write(f"VIOLATION {v}\n")
    out.write("PASS\n" if not violations else f"FAIL ({len(violations)} violations)\n")
    return EXIT_OK if not violations else EXIT_VIOLATION


def cmd_toy2d(args, cfg: RunConfig) -> int:
    series = solve_toy(BUILTIN_BOUNDARIES[args.boundary_row], args.N, cfg.mode)
    out = sys.stdout
    if args.at:
        n, m = (int(v) for v in args.at.split(","))
        out.write(f"a[{n},{m}] = {format_scalar(series[(n, m)])}\n")
        return EXIT_OK
    writer = csv.writer(out)
    writer.writerow(["n", "m", "value"])
    for (n, m) in sorted(series.a):
        writer.writerow([n, m, format_scalar(series[(n, m)])])
    return EXIT_OK


def sample_points(count: int, seed: int, high: float = 0.5) -> List[Tuple[float, float, float, float]]:
    """Points in ``(0, high]^4``."""
    rng = random.Random(seed)
    return [tuple(high - high * rng.random() for _ in range(4)) for _ in range(count)]


def cmd_residual(args, cfg: RunConfig) -> int:
    sol = solve(cfg)
    points = sample_points(cfg.points, cfg.points_seed)
    rows = residual_table(sol, points, args.degree)
    writer = csv.writer(sys.stdout)
    keys = ("continuity", "momentum_x", "momentum_y", "momentum_z")
    writer.writerow(["t", "x", "y", "z", *keys])
    for pt, row in zip(points, rows):
        writer.writerow([*(repr(v) for v in pt), *(repr(float(row[k])) for k in keys)])
    return EXIT_OK


def cmd_radius(args, cfg: RunConfig) -> int:
    if args.toy:
        series = solve_toy(BUILTIN_BOUNDARIES[args.toy], args.N, FLOAT)
        coefficients = series.diagonal(args.axis if args.axis in ("x", "y") else "x")
    else:
        if not args.input:
            raise ConfigError("radius needs --toy or --input")
        with open(args.input, encoding="utf-8") as fh:
            records = read_records(fh, cfg.mode)
        entries = records.get(args.field, {})
        fld = CoefficientField(entries, Caps.uniform(max((k[0] for k in entries), default=0),
                                                     max((max(k[1:]) for k in entries), default=0)), cfg.mode)
        coefficients = axis_coefficients(fld, args.axis)
    est = radius_estimate(coefficients)
    sys.stdout.write(f"radius,{est.radius!r}\nslope,{est.slope!r}\nresidual,{est.residual!r}\n"
                     f"orders,{est.orders[0]}-{est.orders[-1]}\nunbounded_trend,{est.unbounded}\n")
    if est.unbounded:
        sys.stdout.write("note,decay steepens with order; the estimate is a lower bound consistent with an "
                         "infinite radius\n")
    return EXIT_OK


def cmd_conditions(args, cfg: RunConfig) -> int:
    sol = solve(cfg)
    tower = open_tower(args, cfg.budget)
    targets = default_targets(_parse_range(args.omegas), _parse_range(args.p), _parse_range(args.q),
                              _parse_range(args.r), _parse_range(args.alphas))
    report = check_sufficient_conditions(slab_source(sol), targets, tower)
    close_tower(args, tower)
    writer = csv.writer(sys.stdout)
    writer.writerow(["omega", "p", "q", "r", "alpha", "max_gamma", "max_u_aleph", "eta",
                     "bound_unit_box", "bound_global", "unit_box", "global"])
    for row in report.rows:
        writer.writerow([*row.target, format_scalar(row.max_gamma), format_scalar(row.max_u_aleph), row.eta,
                         repr(row.bound_unit_box), repr(row.bound_global), row.unit_box, row.global_])
    sys.stderr.write(f"unit box condition: {report.cond_unit_box}; global condition: {report.cond_global} "
                     f"(over {len(report.rows)} listed indices only)\n")
    return EXIT_OK


def cmd_cache(args, cfg: RunConfig) -> int:
    stored = cache_dir() / CACHE_FILE
    if args.action == "export":
        cache = MemoCache.load(stored) if stored.exists() else MemoCache()
        cache.save(args.path)
        status = "identical" if MemoCache.load(args.path) == cache else "MISMATCH"
    else:
        cache = MemoCache.load(args.path)
        stored.parent.mkdir(parents=True, exist_ok=True)
        cache.save(stored)
        status = "identical" if MemoCache.load(stored) == cache else "MISMATCH"
    sys.stdout.write(f"{args.action}: {cache.size()} entries, round trip {status}\n")
    return EXIT_OK if status == "identical" else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# Parser


def _frac(text: str) -> Fraction:
    return Fraction(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsseries", description="Power-series Navier-Stokes coefficient solver")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, flow=True):
        p.add_argument("--config", help="JSON or YAML config file")
        p.add_argument("--mode", choices=(EXACT, FLOAT))
        p.add_argument("--seed", type=int)
        if flow:
            p.add_argument("--nu", type=_frac)
            p.add_argument("--density", type=_frac)
            p.add_argument("--caps-omega", type=int, dest="caps_omega")
            p.add_argument("--caps-total", type=int, dest="caps_total")
            p.add_argument("--caps-slope", type=int, dest="caps_slope")
            p.add_argument("--boundary", choices=("random", "manufactured", "zero", "file"))
            p.add_argument("--boundary-path", dest="boundary_path")
            p.add_argument("--data-density", type=float, dest="data_density")

    def tower_opts(p):
        p.add_argument("--no-cache", action="store_true", help="do not read or write the cache directory")
        p.add_argument("--max-expansions", type=int, dest="max_expansions")
        p.add_argument("--max-omega", type=int, dest="max_omega")
        p.add_argument("--time-limit", type=float, dest="time_limit")

    def ranges(p, omegas="1:2"):
        p.add_argument("--omegas", default=omegas)
        p.add_argument("--p", default="2:4")
        p.add_argument("--q", default="2:5")
        p.add_argument("--r", default="2:4")
        p.add_argument("--alphas", default="0:2")

    p = sub.add_parser("solve", help="march the recurrences and write coefficient records")
    common(p)
    p.add_argument("--output")
    p.add_argument("--include-contaminated", action="store_true")
    p.add_argument("--allow-contamination", action="store_true")

    p = sub.add_parser("verify", help="run the equivalence, base-case, bijection and identity suites")
    common(p, flow=False)
    tower_opts(p)
    ranges(p)
    p.add_argument("--datasets", type=int, default=10)
    p.add_argument("--data-density", type=float, dest="data_density", default=0.4)
    p.add_argument("--literal-omegas", default="1", help="time orders also summed term by term")
    p.add_argument("--qmax", type=int, default=8)
    p.add_argument("--skip-bijections", action="store_true")
    p.add_argument("--skip-identities", action="store_true")

    p = sub.add_parser("toy2d", help="solve the two-dimensional model equation")
    common(p, flow=False)
    p.add_argument("--boundary-row", choices=sorted(BUILTIN_BOUNDARIES), default="exp", dest="boundary_row")
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--at", help="print one coefficient, e.g. 2,3")

    p = sub.add_parser("residual", help="PDE residuals of the truncated series at sample points (CSV)")
    common(p)
    p.add_argument("--degree", type=int, help="truncate to total degree in (t, x, y, z)")
    p.add_argument("--points", type=int)
    p.add_argument("--points-seed", type=int, dest="points_seed")

    p = sub.add_parser("radius", help="root-test radius estimate along one axis")
    common(p, flow=False)
    p.add_argument("--toy", choices=sorted(BUILTIN_BOUNDARIES))
    p.add_argument("--N", type=int, default=30)
    p.add_argument("--input", help="coefficient record file")
    p.add_argument("--field", default="u1")
    p.add_argument("--axis", default="x", choices=("t", "x", "y", "z"))

    p = sub.add_parser("conditions", help="sufficient convergence conditions per index (CSV)")
    common(p)
    tower_opts(p)
    ranges(p, omegas="1")

    p = sub.add_parser("cache", help="export or import the memo cache")
    common(p, flow=False)
    p.add_argument("action", choices=("export", "import"))
    p.add_argument("path")
    return parser


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "toy2d": cmd_toy2d, "residual": cmd_residual,
            "radius": cmd_radius, "conditions": cmd_conditions, "cache": cmd_cache}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, IncompleteBoundaryError, InsufficientData, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except BudgetExceeded as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BUDGET
    except CacheIntegrityError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CACHE


if __name__ == "__main__":
    sys.exit(main())

"""``cogopt`` command line.

Exit codes: 0 success, 1 infeasible, 2 input error, 3 solver limit
(time/node limit, or optimality not proven). Machine-readable results go
to ``--out``; stdout carries a short human summary and stderr carries all
diagnostics.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import io as cio
from .bnb import BnbParams
from .cog import weiszfeld
from .formulation import InfeasibleModelError, to_lp_text
from .geo import METRICS, distance_matrix
from .model import ModelError, Scenario, Solution
from .pipeline import (ScenarioError, ScenarioOverrides, StepWellConfig, StepWellError, apply_overrides,
                       compare, solve_on, step_well_solve)
from .reduction import build_packets, cls_scores

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_LIMIT = 0, 1, 2, 3
DEFAULT_SEED = 42

log = logging.getLogger("cogopt")


class UsageError(Exception):
    pass


def _status_code(status: str) -> int:
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(status, EXIT_LIMIT)


# ------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser, *, demand=True, warehouses=False, states=False, scenario=False,
            out=True, packet=False, time_limit=False) -> None:
    g = p.add_argument_group("inputs and outputs")
    if demand:
        g.add_argument("--demand", required=True, type=Path,
                       help="demand CSV: id,state,demand,demand_latitude,demand_longitude")
    if warehouses:
        g.add_argument("--warehouses", type=Path, required=warehouses == "required",
                       help="warehouse CSV: id,state,latitude,longitude,status[,fixed_cost]")
    if states:
        g.add_argument("--states", type=Path, required=states == "required",
                       help="state CSV: state,area_sq_miles")
    if scenario:
        g.add_argument("--scenario", type=Path, help="scenario file of key = value lines")
    if out:
        g.add_argument("--out", type=Path, required=out == "required",
                       help="output directory for machine-readable files")
    o = p.add_argument_group("options")
    o.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: scenario seed, else {DEFAULT_SEED})")
    o.add_argument("--metric", choices=METRICS, default=None,
                   help="distance metric (default: scenario metric, else haversine)")
    if packet:
        o.add_argument("--packet-target", type=int, default=150, help="customer packets to build (default 150)")
    if time_limit:
        o.add_argument("--time-limit", type=float, default=math.inf,
                       help="branch-and-bound wall-clock limit in seconds (default: none)")
    o.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cogopt", description="Warehouse location by center-of-gravity MILP.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("solve", help="flat MILP over all candidate sites",
                       description="Solve the location MILP on raw customers and the given sites.")
    _common(p, warehouses="required", scenario=True, out="required", time_limit=True)
    p.add_argument("--limit", type=int, help="warehouse limit (overrides the scenario)")
    p.add_argument("--node-log", type=Path, help="write the branch-and-bound node log here")
    p.add_argument("--lp-file", type=Path, help="export the model in LP format here")
    p.add_argument("--no-warm-start", action="store_true", help="skip the greedy starting incumbent")

    p = sub.add_parser("stepwell", help="two-stage solve: packets and coarse sites, then selected states",
                       description="Step-well solve. Existing sites in --warehouses join stage 2 for "
                                   "the selected states.")
    _common(p, warehouses=True, states="required", scenario=True, out="required", packet=True, time_limit=True)
    p.add_argument("--limit", type=int, help="warehouse limit (overrides the scenario)")
    p.add_argument("--coarse", type=int, default=12, help="stage-1 candidate budget over all states (default 12)")
    p.add_argument("--fine", type=int, default=5, help="stage-2 candidates per selected state (default 5)")
    p.add_argument("--given-candidates", action="store_true",
                   help="use the --warehouses sites as candidates in both stages instead of generating them")

    p = sub.add_parser("cls", help="candidate location scores and allocation per state",
                       description="Score states and apportion a candidate budget.")
    _common(p, warehouses=True, states="required")
    p.add_argument("--total", type=int, required=True, help="candidate budget to apportion")

    p = sub.add_parser("packets", help="aggregate customers into packets",
                       description="Build customer packets by count (k-means) or by radius.")
    _common(p, out="required", packet=True)
    p.add_argument("--radius", type=float, help="build packets of this radius in miles instead of a count")

    p = sub.add_parser("cog", help="single-facility continuous center of gravity",
                       description="Weighted geometric median of the demand (Weiszfeld).")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-7, help="convergence tolerance in degrees (default 1e-7)")

    p = sub.add_parser("scenario", help="solve a batch of scenario overrides",
                       description="Each row of --batch (CSV: name,demand_scale,warehouse_limit,forced_open,"
                                   "forced_closed; id lists separated by ';') is solved into --out/<name>/.")
    _common(p, warehouses="required", states=True, scenario=True, out="required", packet=True, time_limit=True)
    p.add_argument("--batch", type=Path, required=True, help="scenario batch CSV")
    p.add_argument("--jobs", type=int, default=1, help="scenarios solved concurrently (default 1)")
    p.add_argument("--stepwell", action="store_true", help="use the two-stage solve (needs --states)")
    p.add_argument("--coarse", type=int, default=12, help="stage-1 candidate budget (with --stepwell)")
    p.add_argument("--fine", type=int, default=5, help="stage-2 candidates per state (with --stepwell)")

    p = sub.add_parser("compare", help="weighted-average-distance difference of two solutions",
                       description="Compare two solution directories written by solve/stepwell/scenario.")
    p.add_argument("solution_a", type=Path, help="first solution directory")
    p.add_argument("solution_b", type=Path, help="second solution directory")
    _common(p, warehouses="required")
    return ap


# ----------------------------------------------------------------- helpers

def _scenario(args: argparse.Namespace) -> Scenario:
    sc = cio.read_scenario(args.scenario) if getattr(args, "scenario", None) else Scenario()
    changes: dict[str, object] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.metric is not None:
        changes["metric"] = args.metric
    if getattr(args, "limit", None) is not None:
        changes["warehouse_limit"] = args.limit
    try:
        return replace(sc, **changes)
    except ModelError as exc:
        raise cio.InputError([f"command line: {exc}"]) from exc


def _seed(args: argparse.Namespace) -> int:
    return DEFAULT_SEED if args.seed is None else args.seed


def _params(args: argparse.Namespace) -> BnbParams:
    if not args.time_limit > 0:
        raise UsageError("--time-limit must be > 0")
    return BnbParams(time_limit=args.time_limit)


def _print_solution(label: str, sol: Solution, seed: int, elapsed: float) -> None:
    print(f"{label}: status={sol.solver_status} seed={seed}")
    if sol.opened:
        print(f"  objective {sol.objective:.6f}  wad {sol.wad:.4f} mi", end="")
        print(f"  pct_within {sol.pct_within:.4f}" if sol.pct_within is not None else "")
        print(f"  opened {', '.join(sorted(sol.opened))}")
    print(f"  nodes {sol.nodes_explored}")
    log.info("%s took %.2fs", label, elapsed)


# ---------------------------------------------------------------- commands

def cmd_solve(args: argparse.Namespace) -> int:
    data = cio.read_dataset(args.demand, args.warehouses)
    sc = _scenario(args)
    cio.bind_scenario(sc, data.sites, str(args.scenario or "command line"))
    params = _params(args)
    t0 = time.perf_counter()
    D = distance_matrix([c.point for c in data.customers], [s.point for s in data.sites], sc.metric)
    if args.node_log:
        args.node_log.parent.mkdir(parents=True, exist_ok=True)
        with open(args.node_log, "w", encoding="utf-8") as fh:
            sol, problem = solve_on(data.customers, data.sites, sc, D, params,
                                    warm_start=not args.no_warm_start, node_log=fh)
    else:
        sol, problem = solve_on(data.customers, data.sites, sc, D, params, warm_start=not args.no_warm_start)
    if args.lp_file:
        args.lp_file.parent.mkdir(parents=True, exist_ok=True)
        args.lp_file.write_text(to_lp_text(problem), encoding="utf-8")
    cio.write_solution(sol, data.customers, data.sites, sc, args.out)
    _print_solution("solve", sol, sc.seed, time.perf_counter() - t0)
    return _status_code(sol.solver_status)


def cmd_stepwell(args: argparse.Namespace) -> int:
    data = cio.read_dataset(args.demand, args.warehouses, args.states)
    sc = _scenario(args)
    cio.bind_scenario(sc, data.sites, str(args.scenario or "command line"))
    if args.given_candidates and not data.sites:
        raise UsageError("--given-candidates needs --warehouses")
    cfg = StepWellConfig(args.coarse, args.fine, args.packet_target, sc.seed, args.given_candidates)
    t0 = time.perf_counter()
    rep = step_well_solve(data.customers, data.states, data.sites, sc, cfg, _params(args))
    out = args.out
    sites2 = rep.stage2_sites
    cio.write_solution(rep.stage2, data.customers, sites2, sc, out, extra={
        "selected_states": ";".join(rep.selected_states),
        "packets": len(rep.packets),
        "stage1_candidates": len(rep.stage1_sites),
        "stage2_candidates": len(sites2),
    })
    _write_sites(out / "candidates.csv", sites2)
    _write_sites(out / "stage1_candidates.csv", rep.stage1_sites)
    s1 = rep.stage1
    with open(out / "stage1.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("key", "value"))
        w.writerow(("status", s1.solver_status))
        w.writerow(("objective", repr(float(s1.objective))))
        w.writerow(("wad", repr(float(s1.wad))))
        for sid in sorted(s1.opened):
            w.writerow(("opened_site", sid))
    _print_solution("stage 1 (packets)", s1, sc.seed, rep.total_runtime["stage1"])
    print(f"selected states: {', '.join(rep.selected_states)}")
    _print_solution("stage 2", rep.stage2, sc.seed, time.perf_counter() - t0)
    return _status_code(rep.stage2.solver_status)


def _write_sites(path: Path, sites) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "state", "latitude", "longitude", "status", "fixed_cost"))
        for s in sites:
            token = {v: k for k, v in cio.STATUS_TOKENS.items()}[s.status]
            w.writerow((s.id, s.state, repr(s.point.lat), repr(s.point.lon), token, repr(s.fixed_cost)))


def cmd_cls(args: argparse.Namespace) -> int:
    data = cio.read_dataset(args.demand, args.warehouses, args.states)
    if args.total < 1:
        raise UsageError("--total must be >= 1")
    existing = [s for s in data.sites if s.status == "existing_open"]
    recs = cls_scores(data.states, data.customers, existing, args.total, args.metric or "haversine")
    print(f"{'state':<12}{'area':>10}{'prox mi':>10}{'density':>10}{'A':>7}{'P':>7}{'D':>7}{'CLS':>8}{'alloc':>7}")
    for r in recs:
        print(f"{r.state:<12}{r.area:>10.0f}{r.proximity_miles:>10.1f}{r.density:>10.4f}"
              f"{r.a_score:>7.2f}{r.p_score:>7.2f}{r.d_score:>7.2f}{r.cls_score:>8.3f}{r.allocation:>7d}")
    print(f"total allocation {sum(r.allocation for r in recs)} (seed {_seed(args)})")
    if args.out:
        cio.write_cls_csv(recs, args.out)
    return EXIT_OK


def cmd_packets(args: argparse.Namespace) -> int:
    customers = cio.read_demand_csv(args.demand)
    seed = _seed(args)
    metric = args.metric or "haversine"
    if args.radius is not None:
        if not args.radius > 0:
            raise UsageError("--radius must be > 0")
        packets = build_packets(customers, radius_miles=args.radius, seed=seed, metric=metric)
    else:
        if args.packet_target < 1:
            raise UsageError("--packet-target must be >= 1")
        packets = build_packets(customers, target_count=args.packet_target, seed=seed, metric=metric)
    cio.write_packets_csv(packets, args.out)
    print(f"{len(customers)} customers -> {len(packets)} packets (seed {seed})")
    return EXIT_OK


def cmd_cog(args: argparse.Namespace) -> int:
    customers = cio.read_demand_csv(args.demand)
    if not customers:
        raise UsageError(f"{args.demand}: no customers")
    res = weiszfeld(customers, tol=args.tol)
    print(f"center of gravity: latitude {res.point.lat:.6f} longitude {res.point.lon:.6f}")
    print(f"  cost {res.objective_miles:.4f} demand-miles  iterations {res.iterations}"
          f"  converged {res.converged}  at demand point {res.at_demand_point}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "cog.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("key", "value"))
            for k, v in (("latitude", repr(res.point.lat)), ("longitude", repr(res.point.lon)),
                         ("cost_degrees", repr(res.objective)), ("cost_miles", repr(res.objective_miles)),
                         ("iterations", res.iterations), ("converged", res.converged),
                         ("at_demand_point", res.at_demand_point)):
                w.writerow((k, v))
    return EXIT_OK


BATCH_COLUMNS = ("name", "demand_scale", "warehouse_limit", "forced_open", "forced_closed")


def read_batch(path: Path) -> list[tuple[str, ScenarioOverrides]]:
    """Rows of the scenario batch file; empty cells keep the base scenario."""
    errors = []
    out = []
    names: set[str] = set()
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise cio.InputError([f"{path}: cannot read ({exc.strerror})"]) from exc
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "name" not in [h.strip() for h in reader.fieldnames]:
            raise cio.InputError([f"{path}: line 1: missing column(s) name"])
        reader.fieldnames = [h.strip() for h in reader.fieldnames]
        for row in reader:
            line = reader.line_num
            row = {k: (v or "").strip() for k, v in row.items() if k is not None}
            name = row.get("name", "")
            if not name or not all(ch.isalnum() or ch in "-_." for ch in name) or name in names:
                errors.append(f"{path}: line {line}: field 'name': missing, repeated or not a safe directory name")
                continue
            names.add(name)
            kw: dict[str, object] = {}
            try:
                if row.get("demand_scale"):
                    kw["demand_scale"] = float(row["demand_scale"])
                if row.get("warehouse_limit"):
                    kw["warehouse_limit"] = int(row["warehouse_limit"])
            except ValueError as exc:
                errors.append(f"{path}: line {line}: {exc}")
                continue
            for key in ("forced_open", "forced_closed"):
                if row.get(key):
                    kw[key] = frozenset(s.strip() for s in row[key].split(";") if s.strip())
            out.append((name, ScenarioOverrides(**kw)))
    if errors:
        raise cio.InputError(errors)
    return out


def cmd_scenario(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.stepwell and not args.states:
        raise UsageError("--stepwell needs --states")
    data = cio.read_dataset(args.demand, args.warehouses, args.states)
    base = _scenario(args)
    batch = read_batch(args.batch)
    params = _params(args)
    cfg = StepWellConfig(args.coarse, args.fine, args.packet_target, base.seed) if args.stepwell else None

    def run(item: tuple[str, ScenarioOverrides]) -> tuple[str, int, str]:
        name, ov = item
        try:
            custs, sc = apply_overrides(data.customers, base, ov)
            cio.bind_scenario(sc, data.sites, f"{args.batch} [{name}]")
            if cfg is not None:
                rep = step_well_solve(custs, data.states, data.sites, sc, cfg, params)
                sol, sites = rep.stage2, rep.stage2_sites
            else:
                D = distance_matrix([c.point for c in custs], [s.point for s in data.sites], sc.metric)
                sol, sites = solve_on(custs, data.sites, sc, D, params)[0], data.sites
            cio.write_solution(sol, custs, sites, sc, args.out / name,
                               extra={"scenario": name, "demand_scale": ov.demand_scale})
        except (cio.InputError, ScenarioError, ModelError) as exc:
            return name, EXIT_INPUT, f"input error: {exc}"
        except StepWellError as exc:
            return name, EXIT_INFEASIBLE, f"step-well failed: {exc}"
        obj = f"objective {sol.objective:.6f} opened {','.join(sorted(sol.opened))}" \
            if sol.opened else ""
        return name, _status_code(sol.solver_status), f"{sol.solver_status} {obj}".rstrip()

    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(run, batch))
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "batch.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("name", "exit_code", "result"))
        w.writerows(results)
    code = EXIT_OK
    for name, rc, msg in results:
        print(f"{name}: {msg}")
        if rc == EXIT_INPUT:
            print(f"cogopt: scenario {name}: {msg}", file=sys.stderr)
        code = max(code, rc)
    print(f"{len(results)} scenarios (seed {base.seed})")
    log.info("batch took %.2fs", time.perf_counter() - t0)
    return code


def cmd_compare(args: argparse.Namespace) -> int:
    data = cio.read_dataset(args.demand, args.warehouses)
    a = cio.read_solution_dir(args.solution_a)
    b = cio.read_solution_dir(args.solution_b)
    # candidates generated by stepwell are saved next to its solution
    sites = list(data.sites)
    ids = {s.id for s in sites}
    for d in (args.solution_a, args.solution_b):
        extra = d / "candidates.csv"
        if extra.exists():
            for s in cio.read_warehouse_csv(extra):
                if s.id not in ids:
                    sites.append(s)
                    ids.add(s.id)
    res = compare(a, b, data.customers, sites, args.metric or "haversine")
    print(f"wad A {res.wad_a:.6f} mi  wad B {res.wad_b:.6f} mi  difference {res.wad_diff_miles:.6f} mi")
    print(f"only in A: {', '.join(sorted(res.opened_only_a)) or '-'}")
    print(f"only in B: {', '.join(sorted(res.opened_only_b)) or '-'}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("key", "value"))
            w.writerow(("wad_a", repr(res.wad_a)))
            w.writerow(("wad_b", repr(res.wad_b)))
            w.writerow(("wad_diff_miles", repr(res.wad_diff_miles)))
            w.writerow(("only_a", ";".join(sorted(res.opened_only_a))))
            w.writerow(("only_b", ";".join(sorted(res.opened_only_b))))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "stepwell": cmd_stepwell,
    "cls": cmd_cls,
    "packets": cmd_packets,
    "cog": cmd_cog,
    "scenario": cmd_scenario,
    "compare": cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches the input-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="cogopt: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (cio.InputError, ScenarioError, UsageError) as exc:
        print(f"cogopt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleModelError as exc:
        print(f"cogopt: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StepWellError as exc:
        print(f"cogopt: step-well failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ModelError as exc:
        print(f"cogopt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"cogopt: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Flat solves, two-stage (step-well) solves, scenario runs and comparisons.

Step-well works top down. Stage 1 packs customers, lets CLS spread a
small candidate budget over the states and solves the MILP on packets x
coarse candidates; the states hosting an opened site are "selected".
Stage 2 generates dense candidates inside the selected states only and
re-solves on the raw customers.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence, TextIO

import numpy as np

from .bnb import BnbParams, solve_milp
from .formulation import MilpProblem, build, decode
from .geo import distance_matrix
from .model import Customer, ModelError, Scenario, Site, Solution, StateAttr, evaluate
from .reduction import ClsRecord, Packet, build_packets, cls_scores, generate_candidates, packet_distances

log = logging.getLogger(__name__)


class ScenarioError(ModelError):
    """Override combination that cannot be applied."""


class StepWellError(RuntimeError):
    """Stage 1 of a step-well solve produced no usable network."""


def greedy_incumbent(problem: MilpProblem, scenario: Scenario) -> np.ndarray | None:
    """Nearest-open-site heuristic used to seed branch and bound.

    Opens the forced sites, then adds whichever site lowers the
    nearest-assignment cost most until the warehouse limit is reached (or,
    in ``at_most`` mode, until nothing improves). Side constraints are not
    considered; the solver discards the point if it violates them.
    """
    lay = problem.layout
    if lay is None:
        return None
    y = lay.n_sites
    allowed = problem.upper[:y] > 0.5
    chosen = [j for j in range(y) if problem.lower[j] > 0.5]
    D = lay.distances
    w = lay.demands

    def cost(S: list[int]) -> float:
        return float(w @ D[:, S].min(axis=1) + lay.fixed_costs[S].sum()) if S else np.inf

    L = scenario.warehouse_limit
    while len(chosen) < L:
        options = [j for j in range(y) if allowed[j] and j not in chosen]
        if not options:
            break
        best = min(options, key=lambda j: (cost(chosen + [j]), j))
        if scenario.cardinality_mode == "at_most" and chosen and cost(chosen + [best]) >= cost(chosen):
            break
        chosen.append(best)
    if not chosen or (scenario.cardinality_mode == "exact" and len(chosen) != L):
        return None
    chosen.sort()
    x = np.zeros(problem.num_vars)
    x[chosen] = 1.0
    nearest = np.array(chosen)[np.argmin(D[:, chosen], axis=1)]
    for i, j in enumerate(nearest):
        x[lay.flow_index(i, j)] = 1.0 if lay.single_source else w[i]
    return x


def solve_on(
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    distances: np.ndarray,
    params: BnbParams | None = None,
    *,
    warm_start: bool = True,
    node_log: TextIO | None = None,
) -> tuple[Solution, MilpProblem]:
    """Build, solve and decode with a given distance matrix."""
    problem = build(customers, sites, scenario, distances)
    seed = greedy_incumbent(problem, scenario) if warm_start else None
    res = solve_milp(problem, params, incumbent=seed, node_log=node_log)
    sol = decode(problem, res.values, res.status, res.objective, res.bound, res.nodes_explored)
    if res.values is not None:
        ev = evaluate(sol, customers, sites, scenario, distances=distances)
        sol = replace(sol, wad=ev.wad, pct_within=ev.pct_within)
    return sol, problem


def solve_flat(
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    params: BnbParams | None = None,
    *,
    warm_start: bool = True,
    node_log: TextIO | None = None,
) -> Solution:
    D = distance_matrix([c.point for c in customers], [s.point for s in sites], scenario.metric)
    return solve_on(customers, sites, scenario, D, params, warm_start=warm_start, node_log=node_log)[0]


@dataclass(frozen=True)
class StepWellConfig:
    coarse_total_candidates: int = 12
    fine_candidates_per_state: int = 5
    packet_target: int = 150
    seed: int = 42
    # use the supplied sites as the candidate list in both stages instead of generating them
    given_candidates: bool = False

    def __post_init__(self) -> None:
        for name in ("coarse_total_candidates", "fine_candidates_per_state", "packet_target"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class StageOne:
    solution: Solution
    packets: list[Packet]
    sites: list[Site]
    cls: list[ClsRecord]
    num_vars: int
    runtime: float
    solve_time: float


@dataclass(frozen=True)
class StepWellReport:
    stage1: Solution
    selected_states: tuple[str, ...]
    stage2: Solution
    stage1_sites: list[Site] = field(repr=False)
    stage2_sites: list[Site] = field(repr=False)
    packets: list[Packet] = field(repr=False)
    cls: list[ClsRecord] = field(repr=False)
    total_runtime: dict[str, float] = field(default_factory=dict)


def _forced_existing(existing_sites: Sequence[Site], scenario: Scenario) -> list[Site]:
    return [s for s in existing_sites if s.id in scenario.forced_open]


def _restrict(scenario: Scenario, sites: Sequence[Site]) -> Scenario:
    ids = {s.id for s in sites}
    missing = scenario.forced_open - ids
    if missing:
        raise ModelError(f"forced_open sites not available: {sorted(missing)}")
    return replace(scenario, forced_closed=scenario.forced_closed & ids)


def step_well_stage1(
    customers: Sequence[Customer],
    states: Sequence[StateAttr],
    existing_sites: Sequence[Site],
    scenario: Scenario,
    cfg: StepWellConfig,
    params: BnbParams | None = None,
) -> StageOne:
    t0 = time.perf_counter()
    packets = build_packets(customers, target_count=cfg.packet_target, seed=cfg.seed, metric=scenario.metric)
    cls = cls_scores(states, customers, existing_sites, cfg.coarse_total_candidates, scenario.metric)
    by_state: dict[str, list[Customer]] = {}
    for c in customers:
        by_state.setdefault(c.state, []).append(c)
    sites: list[Site] = []
    if cfg.given_candidates:
        sites = list(existing_sites)
    else:
        for rec in cls:
            sites += generate_candidates(by_state[rec.state], rec.allocation, cfg.seed)
        sites += _forced_existing(existing_sites, scenario)
    sc = _restrict(scenario, sites)
    D = packet_distances(packets, customers, sites, scenario.metric, exact=True)
    pcust = [p.as_customer() for p in packets]
    t1 = time.perf_counter()
    sol, problem = solve_on(pcust, sites, sc, D, params)
    t2 = time.perf_counter()
    return StageOne(sol, packets, sites, cls, problem.num_vars, t2 - t0, t2 - t1)


def step_well_solve(
    customers: Sequence[Customer],
    states: Sequence[StateAttr],
    existing_sites: Sequence[Site],
    scenario: Scenario,
    cfg: StepWellConfig | None = None,
    params: BnbParams | None = None,
) -> StepWellReport:
    cfg = cfg or StepWellConfig()
    one = step_well_stage1(customers, states, existing_sites, scenario, cfg, params)
    if one.solution.solver_status in ("infeasible",) or not one.solution.opened:
        raise StepWellError(
            f"stage 1 returned {one.solution.solver_status} on {len(one.packets)} packets x "
            f"{len(one.sites)} coarse candidates (allocation: "
            + ", ".join(f"{r.state}={r.allocation}" for r in one.cls) + ")"
        )

    t0 = time.perf_counter()
    site_state = {s.id: s.state for s in one.sites}
    opened_per_state: dict[str, int] = {}
    for sid in one.solution.opened:
        opened_per_state[site_state[sid]] = opened_per_state.get(site_state[sid], 0) + 1
    forced = _forced_existing(existing_sites, scenario)
    selected = sorted(set(opened_per_state) | {s.state for s in forced})

    by_state: dict[str, list[Customer]] = {}
    for c in customers:
        by_state.setdefault(c.state, []).append(c)
    sites: list[Site] = []
    for st in selected:
        if st in by_state and not cfg.given_candidates:
            # never offer fewer candidates than stage 1 opened in the state
            k = max(cfg.fine_candidates_per_state, opened_per_state.get(st, 0))
            sites += generate_candidates(by_state[st], k, cfg.seed)
    seen = {s.id for s in sites}
    for s in existing_sites:
        if (s.state in selected or s.id in scenario.forced_open) and s.id not in seen:
            sites.append(s)
            seen.add(s.id)
    sc = _restrict(scenario, sites)
    D = distance_matrix([c.point for c in customers], [s.point for s in sites], scenario.metric)
    stage2, _ = solve_on(customers, sites, sc, D, params)
    t1 = time.perf_counter()
    log.info("step-well: %d states selected, stage 2 status %s", len(selected), stage2.solver_status)
    return StepWellReport(
        stage1=one.solution,
        selected_states=tuple(selected),
        stage2=stage2,
        stage1_sites=one.sites,
        stage2_sites=sites,
        packets=one.packets,
        cls=one.cls,
        total_runtime={"stage1": one.runtime, "stage2": t1 - t0},
    )


@dataclass(frozen=True)
class ScenarioOverrides:
    demand_scale: float = 1.0
    forced_open: frozenset[str] | None = None
    forced_closed: frozenset[str] | None = None
    warehouse_limit: int | None = None


def apply_overrides(
    customers: Sequence[Customer], scenario: Scenario, overrides: ScenarioOverrides
) -> tuple[list[Customer], Scenario]:
    if not overrides.demand_scale > 0:
        raise ScenarioError(f"demand_scale must be > 0, got {overrides.demand_scale}")
    changes = {}
    if overrides.warehouse_limit is not None:
        changes["warehouse_limit"] = overrides.warehouse_limit
    if overrides.forced_open is not None:
        changes["forced_open"] = frozenset(overrides.forced_open)
    if overrides.forced_closed is not None:
        changes["forced_closed"] = frozenset(overrides.forced_closed)
    try:
        sc = replace(scenario, **changes)
    except ModelError as exc:
        raise ScenarioError(f"invalid overrides: {exc}") from exc
    if overrides.demand_scale == 1.0:
        return list(customers), sc
    scaled = [replace(c, demand=c.demand * overrides.demand_scale) for c in customers]
    return scaled, sc


def run_scenario(
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    overrides: ScenarioOverrides | None = None,
    *,
    states: Sequence[StateAttr] | None = None,
    step_well: StepWellConfig | None = None,
    params: BnbParams | None = None,
) -> Solution:
    """Apply overrides and solve, flat or (with ``step_well``) two-stage."""
    custs, sc = apply_overrides(customers, scenario, overrides or ScenarioOverrides())
    unknown = (sc.forced_open | sc.forced_closed) - {s.id for s in sites}
    if unknown:
        raise ScenarioError(f"overrides reference unknown sites {sorted(unknown)}")
    if step_well is not None:
        if states is None:
            raise ScenarioError("step-well scenarios need state attributes")
        return step_well_solve(custs, states, sites, sc, step_well, params).stage2
    return solve_flat(custs, sites, sc, params)


@dataclass(frozen=True)
class CompareResult:
    wad_a: float
    wad_b: float
    wad_diff_miles: float
    opened_only_a: frozenset[str]
    opened_only_b: frozenset[str]


def compare(
    sol_a: Solution,
    sol_b: Solution,
    customers: Sequence[Customer],
    sites: Sequence[Site],
    metric: str = "haversine",
) -> CompareResult:
    """Weighted-average-distance difference between two networks, in miles."""
    served_a = {cid for (cid, _), f in sol_a.flows.items() if f > 0}
    served_b = {cid for (cid, _), f in sol_b.flows.items() if f > 0}
    if served_a != served_b:
        raise ModelError(
            f"solutions serve different customer sets ({len(served_a ^ served_b)} customers differ)"
        )
    evals = []
    for sol in (sol_a, sol_b):
        sc = Scenario(warehouse_limit=max(1, len(sol.opened)), cardinality_mode="at_most", metric=metric)
        evals.append(evaluate(sol, customers, sites, sc))
    a, b = evals
    return CompareResult(a.wad, b.wad, abs(a.wad - b.wad),
                         frozenset(sol_a.opened - sol_b.opened), frozenset(sol_b.opened - sol_a.opened))

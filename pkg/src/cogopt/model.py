"""Customers, sites, scenarios and solved networks, plus the evaluator.

:func:`evaluate` recomputes every reported metric of a :class:`Solution`
from the raw data. It shares no code path with the solver and is what the
tests use to check solver output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geo import METRICS, GeoPoint, pair_distance

SITE_STATUSES = ("existing_open", "existing_closed", "greenfield_candidate")
CARDINALITY_MODES = ("exact", "at_most")
SOLVER_STATUSES = ("optimal", "feasible", "infeasible", "limit_reached")


class ModelError(ValueError):
    """Invalid domain data or a solution that does not match its data."""


@dataclass(frozen=True)
class Customer:
    id: str
    point: GeoPoint
    demand: float
    state: str = ""

    def __post_init__(self) -> None:
        d = float(self.demand)
        if not math.isfinite(d) or d < 0:
            raise ModelError(f"customer {self.id!r}: demand must be finite and >= 0, got {self.demand}")
        object.__setattr__(self, "demand", d)


@dataclass(frozen=True)
class Site:
    id: str
    point: GeoPoint
    state: str = ""
    status: str = "greenfield_candidate"
    fixed_cost: float = 0.0

    def __post_init__(self) -> None:
        if self.status not in SITE_STATUSES:
            raise ModelError(f"site {self.id!r}: unknown status {self.status!r}")
        fc = float(self.fixed_cost)
        if not math.isfinite(fc) or fc < 0:
            raise ModelError(f"site {self.id!r}: fixed_cost must be finite and >= 0, got {self.fixed_cost}")
        object.__setattr__(self, "fixed_cost", fc)


@dataclass(frozen=True)
class StateAttr:
    name: str
    area: float  # square miles

    def __post_init__(self) -> None:
        a = float(self.area)
        if not math.isfinite(a) or a <= 0:
            raise ModelError(f"state {self.name!r}: area must be > 0, got {self.area}")
        object.__setattr__(self, "area", a)


@dataclass(frozen=True)
class Scenario:
    """Solve configuration.

    ``mpct_fraction``/``mpct_radius`` encode "serve X% of demand within Y
    miles". ``strict_demand`` turns the per-customer demand rows into
    equalities, which forbids over-serving a customer to meet the MPCT row.
    """

    warehouse_limit: int = 1
    cardinality_mode: str = "exact"
    mad_limit: float | None = None
    mpct_fraction: float | None = None
    mpct_radius: float | None = None
    single_source: bool = False
    forced_open: frozenset[str] = frozenset()
    forced_closed: frozenset[str] = frozenset()
    metric: str = "haversine"
    seed: int = 42
    strict_demand: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "forced_open", frozenset(self.forced_open))
        object.__setattr__(self, "forced_closed", frozenset(self.forced_closed))
        if isinstance(self.warehouse_limit, bool) or int(self.warehouse_limit) != self.warehouse_limit:
            raise ModelError(f"warehouse_limit must be an integer, got {self.warehouse_limit!r}")
        if self.warehouse_limit < 1:
            raise ModelError(f"warehouse_limit must be >= 1, got {self.warehouse_limit}")
        if self.cardinality_mode not in CARDINALITY_MODES:
            raise ModelError(f"cardinality_mode must be one of {CARDINALITY_MODES}")
        if self.metric not in METRICS:
            raise ModelError(f"metric must be one of {METRICS}")
        if self.mad_limit is not None and not self.mad_limit >= 0:
            raise ModelError(f"mad_limit must be >= 0, got {self.mad_limit}")
        if self.mpct_fraction is not None:
            if not 0.0 <= self.mpct_fraction <= 1.0:
                raise ModelError(f"mpct_fraction must lie in [0, 1], got {self.mpct_fraction}")
            if self.mpct_radius is None:
                raise ModelError("mpct_fraction requires mpct_radius")
        if self.mpct_radius is not None and not self.mpct_radius >= 0:
            raise ModelError(f"mpct_radius must be >= 0, got {self.mpct_radius}")
        both = self.forced_open & self.forced_closed
        if both:
            raise ModelError(f"sites both forced open and closed: {sorted(both)}")
        if len(self.forced_open) > self.warehouse_limit:
            raise ModelError(
                f"{len(self.forced_open)} sites forced open but warehouse_limit is {self.warehouse_limit}"
            )


@dataclass(frozen=True)
class Solution:
    opened: frozenset[str]
    flows: Mapping[tuple[str, str], float]
    objective: float
    transport_cost: float
    fixed_cost: float
    wad: float
    pct_within: float | None
    solver_status: str
    bound: float | None = None
    nodes_explored: int = 0

    def __post_init__(self) -> None:
        if self.solver_status not in SOLVER_STATUSES:
            raise ModelError(f"unknown solver status {self.solver_status!r}")
        object.__setattr__(self, "opened", frozenset(self.opened))


@dataclass(frozen=True)
class Evaluation:
    objective: float
    transport_cost: float
    fixed_cost: float
    wad: float
    pct_within: float | None
    total_demand: float
    over_service: float
    residuals: dict[str, float] = field(default_factory=dict)

    def feasible(self, tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.residuals.values())


def evaluate(
    solution: Solution,
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    distances: np.ndarray | None = None,
) -> Evaluation:
    """Recompute objective, WAD, MPCT coverage and constraint residuals.

    Residuals are non-negative violation amounts: ``demand`` is the largest
    per-customer shortfall, ``closed_flow`` the total flow leaving unopened
    sites, ``mad`` and ``mpct`` are in miles and fraction units. Pass
    ``distances`` (customers x sites) to override the metric, e.g. for
    packet effective distances.
    """
    cidx = {c.id: i for i, c in enumerate(customers)}
    sidx = {s.id: j for j, s in enumerate(sites)}
    unknown = [s for s in solution.opened if s not in sidx]
    if unknown:
        raise ModelError(f"solution opens unknown sites {sorted(unknown)}")

    served = np.zeros(len(customers))
    transport = 0.0
    within = 0.0
    closed_flow = 0.0
    for (cid, sid), f in solution.flows.items():
        if cid not in cidx:
            raise ModelError(f"flow references unknown customer {cid!r}")
        if sid not in sidx:
            raise ModelError(f"flow references unknown site {sid!r}")
        f = float(f)
        if f < 0:
            raise ModelError(f"negative flow {f} on ({cid!r}, {sid!r})")
        i, j = cidx[cid], sidx[sid]
        d = distances[i, j] if distances is not None else pair_distance(
            customers[i].point, sites[j].point, scenario.metric
        )
        served[i] += f
        transport += f * d
        if scenario.mpct_radius is not None and d <= scenario.mpct_radius:
            within += f
        if sid not in solution.opened:
            closed_flow += f

    fixed = sum(sites[sidx[s]].fixed_cost for s in solution.opened)
    total = sum(c.demand for c in customers)
    wad = transport / total if total > 0 else 0.0
    pct = None
    if scenario.mpct_radius is not None:
        pct = within / total if total > 0 else 1.0

    demands = np.array([c.demand for c in customers])
    shortfall = float(np.max(demands - served, initial=0.0))
    over = float(np.sum(np.maximum(served - demands, 0.0)))

    k = len(solution.opened)
    L = scenario.warehouse_limit
    card = abs(k - L) if scenario.cardinality_mode == "exact" else max(0, k - L)
    residuals = {
        "demand": max(0.0, shortfall),
        "cardinality": float(card),
        "closed_flow": closed_flow,
        "forced_open": float(len(scenario.forced_open - solution.opened)),
        "forced_closed": float(len(scenario.forced_closed & solution.opened)),
    }
    if scenario.strict_demand or scenario.single_source:
        residuals["over_service"] = over
    if scenario.mad_limit is not None:
        residuals["mad"] = max(0.0, wad - scenario.mad_limit)
    if scenario.mpct_fraction is not None:
        residuals["mpct"] = max(0.0, scenario.mpct_fraction - (pct if pct is not None else 0.0))

    return Evaluation(
        objective=transport + fixed,
        transport_cost=transport,
        fixed_cost=fixed,
        wad=wad,
        pct_within=pct,
        total_demand=total,
        over_service=over,
        residuals=residuals,
    )

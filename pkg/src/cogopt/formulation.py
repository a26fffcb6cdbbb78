"""Build the facility-location MILP in a solver-neutral container.

Variable layout for ``x`` customers and ``y`` sites::

    c_j            j = 0..y-1          open/close binaries
    f_i_j / a_i_j  y + i*y + j         flow (continuous) or assignment (binary)

Row order: demand/assignment (x), cardinality (1), linking (x*y), then
MAD, MPCT and total-demand rows when active. Forced open/closed sites are
imposed by fixing the bounds of ``c_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import Customer, ModelError, Scenario, Site, Solution

SENSES = ("<=", ">=", "=")


class InfeasibleModelError(ModelError):
    """The scenario cannot be satisfied no matter what the solver does."""


@dataclass(frozen=True)
class FacilityLayout:
    """Index bookkeeping needed to turn a solver vector back into a network."""

    customer_ids: tuple[str, ...]
    site_ids: tuple[str, ...]
    demands: np.ndarray
    distances: np.ndarray
    fixed_costs: np.ndarray
    single_source: bool

    @property
    def n_customers(self) -> int:
        return len(self.customer_ids)

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    def flow_index(self, i: int, j: int) -> int:
        return self.n_sites + i * self.n_sites + j


@dataclass(frozen=True)
class MilpProblem:
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: tuple[str, ...]
    A: sp.csr_array  # dense input is converted
    senses: tuple[str, ...]
    rhs: np.ndarray
    var_names: tuple[str, ...]
    row_names: tuple[str, ...]
    layout: FacilityLayout | None = None

    def __post_init__(self) -> None:
        A = sp.csr_array(self.A, dtype=float, copy=True)
        A.sum_duplicates()
        A.eliminate_zeros()
        object.__setattr__(self, "A", A)
        for name in ("objective", "lower", "upper", "rhs"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n = len(self.objective)
        m = len(self.rhs)
        if self.A.shape != (m, n):
            raise ModelError(f"constraint matrix has shape {self.A.shape}, expected {(m, n)}")
        if not (len(self.lower) == len(self.upper) == len(self.integrality) == len(self.var_names) == n):
            raise ModelError("per-variable arrays disagree in length")
        if len(self.senses) != m or len(self.row_names) != m:
            raise ModelError("per-row arrays disagree in length")
        if any(s not in SENSES for s in self.senses):
            raise ModelError(f"relation must be one of {SENSES}")
        if not np.all(np.isfinite(self.objective)):
            raise ModelError("objective has non-finite coefficients")
        for k, kind in enumerate(self.integrality):
            if kind == "binary" and not (self.lower[k] >= 0 and self.upper[k] <= 1):
                raise ModelError(f"binary variable {self.var_names[k]} has bounds outside [0, 1]")
            if kind not in ("binary", "continuous"):
                raise ModelError(f"unknown integrality {kind!r}")
        for arr in (self.objective, self.lower, self.upper, self.rhs, A.data, A.indices, A.indptr):
            arr.flags.writeable = False

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([k == "binary" for k in self.integrality], dtype=bool)

    def row(self, r: int) -> np.ndarray:
        """Row ``r`` of the constraint matrix as a dense vector."""
        out = np.zeros(self.num_vars)
        lo, hi = self.A.indptr[r], self.A.indptr[r + 1]
        out[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        return out

    @property
    def constraints(self) -> list[tuple[np.ndarray, str, float]]:
        return [(self.row(r), self.senses[r], float(self.rhs[r])) for r in range(self.num_rows)]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "MilpProblem":
        return replace(self, lower=np.array(lower, dtype=float), upper=np.array(upper, dtype=float))


def build(
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    distances: np.ndarray,
    *,
    total_demand_row: bool = False,
) -> MilpProblem:
    x, y = len(customers), len(sites)
    if x == 0 or y == 0:
        raise ModelError("need at least one customer and one site")
    distances = np.asarray(distances, dtype=float)
    if distances.shape != (x, y):
        raise ModelError(f"distances have shape {distances.shape}, expected {(x, y)}")
    if np.any(distances < 0) or not np.all(np.isfinite(distances)):
        raise ModelError("distances must be finite and non-negative")

    site_ids = [s.id for s in sites]
    unknown = (scenario.forced_open | scenario.forced_closed) - set(site_ids)
    if unknown:
        raise ModelError(f"forced sites not in the candidate list: {sorted(unknown)}")
    if len(scenario.forced_open) > scenario.warehouse_limit:
        raise InfeasibleModelError(
            f"{len(scenario.forced_open)} sites forced open exceeds warehouse_limit {scenario.warehouse_limit}"
        )

    demand = np.array([c.demand for c in customers], dtype=float)
    fixed = np.array([s.fixed_cost for s in sites], dtype=float)
    total = float(demand.sum())
    single = scenario.single_source
    n = y + x * y

    obj = np.zeros(n)
    obj[:y] = fixed
    flow_cost = distances * demand[:, None] if single else distances
    obj[y:] = flow_cost.ravel()

    lower = np.zeros(n)
    upper = np.ones(n)
    if not single:
        upper[y:] = np.repeat(demand, y)
    for j, sid in enumerate(site_ids):
        if sid in scenario.forced_open:
            lower[j] = 1.0
        elif sid in scenario.forced_closed:
            upper[j] = 0.0

    integrality = ["binary"] * y + (["binary"] if single else ["continuous"]) * (x * y)
    prefix = "a" if single else "f"
    var_names = [f"c_{j}" for j in range(y)] + [f"{prefix}_{i}_{j}" for i in range(x) for j in range(y)]

    ri: list[np.ndarray] = []
    ci: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    senses: list[str] = []
    rhs: list[float] = []
    names: list[str] = []

    def add(cols: np.ndarray, coefs: np.ndarray, sense: str, b: float, name: str) -> None:
        ri.append(np.full(len(cols), len(rhs)))
        ci.append(np.asarray(cols))
        vals.append(np.asarray(coefs, dtype=float))
        senses.append(sense)
        rhs.append(float(b))
        names.append(name)

    ones = np.ones(y)
    for i in range(x):
        cols = y + i * y + np.arange(y)
        if single:
            add(cols, ones, "=", 1.0, f"assign_{i}")
        else:
            add(cols, ones, "=" if scenario.strict_demand else ">=", demand[i], f"demand_{i}")

    add(np.arange(y), ones, "=" if scenario.cardinality_mode == "exact" else "<=",
        scenario.warehouse_limit, "cardinality")

    for i in range(x):
        link = 1.0 if single else demand[i]
        for j in range(y):
            add(np.array([j, y + i * y + j]), np.array([-link, 1.0]), "<=", 0.0, f"link_{i}_{j}")

    flow_cols = np.arange(y, n)
    if scenario.mad_limit is not None:
        add(flow_cols, flow_cost.ravel(), "<=", scenario.mad_limit * total, "mad")
    if scenario.mpct_fraction is not None:
        within = (distances <= scenario.mpct_radius).astype(float)
        add(flow_cols, (within * demand[:, None] if single else within).ravel(), ">=",
            scenario.mpct_fraction * total, "mpct")
    if total_demand_row and not single:
        add(flow_cols, np.ones(x * y), ">=", total, "total_demand")

    layout = FacilityLayout(
        customer_ids=tuple(c.id for c in customers),
        site_ids=tuple(site_ids),
        demands=demand,
        distances=distances.copy(),
        fixed_costs=fixed,
        single_source=single,
    )
    return MilpProblem(
        objective=obj,
        lower=lower,
        upper=upper,
        integrality=tuple(integrality),
        A=sp.csr_array((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))), shape=(len(rhs), n)),
        senses=tuple(senses),
        rhs=np.array(rhs),
        var_names=tuple(var_names),
        row_names=tuple(names),
        layout=layout,
    )


def expected_row_count(x: int, y: int, scenario: Scenario, total_demand_row: bool = False) -> int:
    extra = (scenario.mad_limit is not None) + (scenario.mpct_fraction is not None)
    if total_demand_row and not scenario.single_source:
        extra += 1
    return x + 1 + x * y + extra


def lp_relaxation(problem: MilpProblem) -> MilpProblem:
    if all(k == "continuous" for k in problem.integrality):
        return problem
    return replace(problem, integrality=("continuous",) * problem.num_vars)


def decode(
    problem: MilpProblem,
    values: np.ndarray,
    status: str,
    objective: float,
    bound: float | None = None,
    nodes_explored: int = 0,
) -> Solution:
    """Turn a solver vector into a :class:`Solution` keyed by ids."""
    lay = problem.layout
    if lay is None:
        raise ModelError("problem was not built by formulation.build; no layout to decode")
    if values is None or status == "infeasible":
        # no point to decode; a limit hit before any incumbent keeps its status
        return Solution(
            opened=frozenset(), flows={}, objective=float("nan"), transport_cost=0.0, fixed_cost=0.0,
            wad=float("nan"), pct_within=None,
            solver_status="limit_reached" if status == "limit_reached" else "infeasible", bound=bound,
            nodes_explored=nodes_explored,
        )
    y = lay.n_sites
    open_mask = values[:y] > 0.5
    opened = frozenset(sid for sid, o in zip(lay.site_ids, open_mask) if o)
    raw = np.asarray(values[y:], dtype=float).reshape(lay.n_customers, y)
    if lay.single_source:
        flows_mat = (raw > 0.5) * lay.demands[:, None]
    else:
        flows_mat = np.clip(raw, 0.0, lay.demands[:, None])
    flows_mat = flows_mat * open_mask[None, :]

    # single-source keeps zero-demand assignments so every customer has a site
    carried = (raw > 0.5) if lay.single_source else (flows_mat > 0)
    carried &= open_mask[None, :]
    flows = {
        (lay.customer_ids[i], lay.site_ids[j]): float(flows_mat[i, j])
        for i, j in zip(*np.nonzero(carried))
    }
    transport = float(np.sum(flows_mat * lay.distances))
    fixed = float(np.sum(lay.fixed_costs[open_mask]))
    total = float(lay.demands.sum())
    return Solution(
        opened=opened,
        flows=flows,
        objective=float(objective),
        transport_cost=transport,
        fixed_cost=fixed,
        wad=transport / total if total > 0 else 0.0,
        pct_within=None,
        solver_status=status,
        bound=bound,
        nodes_explored=nodes_explored,
    )


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _linear_expr(idx: np.ndarray, coefs: np.ndarray, names: Sequence[str]) -> str:
    parts = []
    for k, c in zip(idx.tolist(), coefs.tolist()):
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(c))} {names[k]}")
    if not parts:
        return f"0 {names[0]}"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[1:]


def to_lp_text(problem: MilpProblem) -> str:
    """Serialise to CPLEX LP format (see README, "LP export")."""
    names = problem.var_names
    out = ["\\ facility-location model", "Minimize", f" obj: {_linear_expr(np.arange(problem.num_vars), problem.objective, names)}", "Subject To"]
    A = problem.A
    for r in range(problem.num_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        out.append(f" {problem.row_names[r]}: {_linear_expr(A.indices[lo:hi], A.data[lo:hi], names)} "
                   f"{problem.senses[r]} {_fmt(problem.rhs[r])}")
    out.append("Bounds")
    for k, nm in enumerate(names):
        lo, hi = problem.lower[k], problem.upper[k]
        if lo == hi:
            out.append(f" {nm} = {_fmt(lo)}")
        elif np.isinf(hi):
            out.append(f" {nm} >= {_fmt(lo)}" if np.isfinite(lo) else f" {nm} free")
        else:
            lo_s = _fmt(lo) if np.isfinite(lo) else "-inf"
            out.append(f" {lo_s} <= {nm} <= {_fmt(hi)}")
    binaries = [nm for nm, k in zip(names, problem.integrality) if k == "binary"]
    if binaries:
        out.append("Binaries")
        for start in range(0, len(binaries), 10):
            out.append(" " + " ".join(binaries[start:start + 10]))
    out.append("End")
    return "\n".join(out) + "\n"

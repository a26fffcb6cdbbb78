"""LP-based branch and bound over the binary variables of a MilpProblem.

Each node is the original problem with tightened variable bounds. A node's
LP relaxation either proves it infeasible, prunes it against the
incumbent, yields an integral point, or gets split on one fractional
binary ``v``: the down child gets ``v <= floor(v*)``, the up child
``v >= ceil(v*)``.

Default search is best-bound, except that until the first incumbent is
found the solver dives depth-first, following the child nearest the LP
value. Ties in node order break on node id and ties in branching variable
on the lowest index, so repeated runs are identical.

Node log format (one line per processed node, space separated)::

    node=<id> depth=<d> bound=<lp bound|inf> global=<best bound> action=<...>

where action is ``branch:<var name>``, ``integral``, ``incumbent``,
``pruned``, ``infeasible`` or ``lp_limit``.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .formulation import MilpProblem, lp_relaxation
from .lp import LpParams, NumericalInstabilityError, solve_lp

log = logging.getLogger(__name__)

BRANCHING_RULES = ("most_fractional", "pseudo_cost")
SEARCH_ORDERS = ("best_bound", "depth_first_dive")


@dataclass(frozen=True)
class BnbParams:
    int_tol: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = math.inf
    branching: str = "most_fractional"
    search: str = "best_bound"
    lp: LpParams = field(default_factory=LpParams)

    def __post_init__(self) -> None:
        if not (self.int_tol > 0 and self.rel_gap > 0):
            raise ValueError("int_tol and rel_gap must be positive")
        if not (self.node_limit > 0 and self.time_limit > 0):
            raise ValueError("node_limit and time_limit must be positive")
        if self.branching not in BRANCHING_RULES:
            raise ValueError(f"branching must be one of {BRANCHING_RULES}")
        if self.search not in SEARCH_ORDERS:
            raise ValueError(f"search must be one of {SEARCH_ORDERS}")


@dataclass(frozen=True)
class MilpSolution:
    status: str
    objective: float
    values: np.ndarray | None
    bound: float
    nodes_explored: int


@dataclass
class Node:
    lower: np.ndarray
    upper: np.ndarray
    depth: int = 0
    bound: float = -math.inf  # parent's LP bound until this node is solved
    id: int = -1
    branch_var: int = -1
    branch_dir: int = 0  # -1 down child, +1 up child
    branch_dist: float = 0.0


def branch(node: Node, var_index: int, frac_value: float, int_tol: float = 1e-6) -> tuple[Node, Node]:
    """Split ``node`` on a variable whose LP value is ``frac_value``."""
    lo_int, hi_int = math.floor(frac_value), math.ceil(frac_value)
    if min(frac_value - lo_int, hi_int - frac_value) <= int_tol:
        raise ValueError(f"variable {var_index} is integral ({frac_value}); nothing to branch on")
    down_upper = node.upper.copy()
    down_upper[var_index] = lo_int
    up_lower = node.lower.copy()
    up_lower[var_index] = hi_int
    down = Node(node.lower.copy(), down_upper, node.depth + 1, node.bound,
                branch_var=var_index, branch_dir=-1, branch_dist=frac_value - lo_int)
    up = Node(up_lower, node.upper.copy(), node.depth + 1, node.bound,
              branch_var=var_index, branch_dir=1, branch_dist=hi_int - frac_value)
    return down, up


def check_feasible(problem: MilpProblem, values: np.ndarray, tol: float = 1e-6) -> bool:
    """Bounds, rows and integrality of ``values`` within ``tol`` (scaled)."""
    v = np.asarray(values, dtype=float)
    if v.shape != (problem.num_vars,):
        return False
    if np.any(v < problem.lower - tol) or np.any(v > problem.upper + tol):
        return False
    bins = problem.binary_mask
    if np.any(np.abs(v[bins] - np.round(v[bins])) > tol):
        return False
    act = problem.A @ v
    slack = tol * (1.0 + np.abs(problem.rhs))
    for r, s in enumerate(problem.senses):
        if s == "<=" and act[r] > problem.rhs[r] + slack[r]:
            return False
        if s == ">=" and act[r] < problem.rhs[r] - slack[r]:
            return False
        if s == "=" and abs(act[r] - problem.rhs[r]) > slack[r]:
            return False
    return True


class _PseudoCosts:
    def __init__(self, n: int):
        self.sum = np.zeros((2, n))
        self.cnt = np.zeros((2, n))

    def update(self, var: int, direction: int, dist: float, gain: float) -> None:
        if dist > 0 and math.isfinite(gain):
            k = 0 if direction < 0 else 1
            self.sum[k, var] += max(gain, 0.0) / dist
            self.cnt[k, var] += 1

    def score(self, cand: np.ndarray, frac: np.ndarray) -> np.ndarray:
        est = np.empty((2, len(cand)))
        for k in range(2):
            known = self.cnt[k] > 0
            avg = self.sum[k, known].sum() / self.cnt[k, known].sum() if known.any() else 1.0
            per = np.where(self.cnt[k, cand] > 0, self.sum[k, cand] / np.maximum(self.cnt[k, cand], 1), avg)
            est[k] = per * (frac if k == 0 else 1.0 - frac)
        return np.maximum(est[0], 1e-6) * np.maximum(est[1], 1e-6)


def solve_milp(
    problem: MilpProblem,
    params: BnbParams | None = None,
    *,
    incumbent: np.ndarray | None = None,
    node_log: TextIO | None = None,
) -> MilpSolution:
    """Minimise a MILP whose integer variables are all binary.

    ``incumbent`` may seed a known feasible point (checked, ignored if
    infeasible). On ``limit_reached`` the best incumbent found so far and
    the global lower bound are returned.
    """
    p = params or BnbParams()
    start = time.monotonic()
    relax = lp_relaxation(problem)
    bins = np.flatnonzero(problem.binary_mask)
    pcost = _PseudoCosts(problem.num_vars)

    best_val = math.inf
    best_x: np.ndarray | None = None
    if incumbent is not None and check_feasible(problem, incumbent, p.int_tol):
        best_x = np.asarray(incumbent, dtype=float).copy()
        best_x[bins] = np.round(best_x[bins])
        best_val = float(problem.objective @ best_x)

    def slack() -> float:
        return p.rel_gap * max(1.0, abs(best_val))

    heap: list[tuple[float, int, Node]] = []
    stack: list[Node] = []
    next_id = 0

    def push(node: Node, dive: bool = False) -> None:
        nonlocal next_id
        node.id = next_id
        next_id += 1
        if p.search == "depth_first_dive" or dive:
            stack.append(node)
        else:
            heapq.heappush(heap, (node.bound, node.id, node))

    def pop() -> Node:
        if stack:
            return stack.pop()
        return heapq.heappop(heap)[2]

    def global_bound() -> float:
        cands = [b for b, _, _ in heap[:1]] + [n.bound for n in stack]
        if not cands:
            return best_val
        return min(min(cands), best_val)

    push(Node(np.array(problem.lower, dtype=float), np.array(problem.upper, dtype=float)))
    explored = 0
    incomplete = False
    limit_hit = False

    while heap or stack:
        if explored >= p.node_limit or time.monotonic() - start > p.time_limit:
            limit_hit = True
            break
        if best_x is not None and global_bound() >= best_val - slack():
            break
        node = pop()
        if node.bound >= best_val - slack():
            _log(node_log, node, node.bound, global_bound(), "pruned")
            continue
        explored += 1
        try:
            lp = solve_lp(relax.with_bounds(node.lower, node.upper), p.lp)
        except NumericalInstabilityError as exc:
            log.warning("node %d: LP abandoned (%s)", node.id, exc)
            incomplete = True
            _log(node_log, node, node.bound, global_bound(), "lp_limit")
            continue
        parent_bound = node.bound
        if lp.status == "infeasible":
            _log(node_log, node, math.inf, global_bound(), "infeasible")
            continue
        if lp.status != "optimal":
            incomplete = True
            _log(node_log, node, node.bound, global_bound(), "lp_limit")
            continue
        node.bound = max(lp.objective, parent_bound)
        if node.branch_var >= 0:
            pcost.update(node.branch_var, node.branch_dir, node.branch_dist, lp.objective - parent_bound)
        if node.bound >= best_val - slack():
            _log(node_log, node, node.bound, global_bound(), "pruned")
            continue

        vals = lp.values
        frac = np.abs(vals[bins] - np.round(vals[bins]))
        fractional = frac > p.int_tol
        if not fractional.any():
            x = vals.copy()
            x[bins] = np.round(x[bins])
            obj = float(problem.objective @ x)
            if obj < best_val:
                best_val, best_x = obj, x
                _log(node_log, node, node.bound, global_bound(), "incumbent")
            else:
                _log(node_log, node, node.bound, global_bound(), "integral")
            continue

        cand = bins[fractional]
        fpart = vals[cand] - np.floor(vals[cand])
        if p.branching == "pseudo_cost" and pcost.cnt.any():
            score = pcost.score(cand, fpart)
        else:
            score = 0.5 - np.abs(fpart - 0.5)
        k = int(np.argmax(score))  # first maximum, i.e. lowest index on ties
        var = int(cand[k])
        down, up = branch(node, var, float(vals[var]), p.int_tol)
        prefer_up = fpart[k] >= 0.5
        diving = best_x is None and p.search == "best_bound"
        first, second = (up, down) if prefer_up else (down, up)
        if p.search == "depth_first_dive":
            push(second)
            push(first)
        elif diving:
            push(second)
            push(first, dive=True)
        else:
            push(down)
            push(up)
        _log(node_log, node, node.bound, global_bound(), f"branch:{problem.var_names[var]}")

    bound = global_bound() if (heap or stack) else best_val
    if best_x is None:
        status = "limit_reached" if (limit_hit or incomplete) else "infeasible"
        return MilpSolution(status, math.inf, None, bound if (limit_hit or incomplete) else math.inf, explored)
    if limit_hit:
        status = "limit_reached"
    elif incomplete:
        status = "feasible"
    else:
        status = "optimal"
    return MilpSolution(status, best_val, best_x, min(bound, best_val), explored)


def _log(stream: TextIO | None, node: Node, bound: float, gbound: float, action: str) -> None:
    if stream is not None:
        stream.write(f"node={node.id} depth={node.depth} bound={bound:.12g} global={gbound:.12g} action={action}\n")

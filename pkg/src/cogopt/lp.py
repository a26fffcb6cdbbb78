"""Bounded-variable primal simplex for the LP relaxations.

Revised simplex on a sparse LU factorisation of the basis, updated with
an eta file and refactorised every ``refactor_every`` pivots. Phase 1 minimises
the sum of artificial variables; phase 2 pins artificials to zero and
minimises the real objective. Pricing is Dantzig (largest reduced cost)
until ``stall_limit`` consecutive degenerate pivots, then Bland's rule for
the rest of the phase, which guarantees termination.

Before the simplex starts every variable is mapped onto ``[0, u]``:
fixed variables are substituted out, finite lower bounds are shifted,
upper-bounded-only variables are mirrored and free variables are split.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .formulation import MilpProblem

log = logging.getLogger(__name__)

LP_STATUSES = ("optimal", "infeasible", "unbounded", "iteration_limit")


class NumericalInstabilityError(ArithmeticError):
    """The basis inverse lost too much accuracy to trust further pivots."""


@dataclass(frozen=True)
class LpParams:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    max_iters: int = 200_000
    refactor_every: int = 100
    stall_limit: int = 50
    pivot_tol: float = 1e-9
    residual_limit: float = 1e-6


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective: float
    values: np.ndarray
    basis: tuple[str, ...]
    iterations: int = 0


@dataclass
class _Column:
    """How a transformed column maps back to an original variable."""

    orig: int
    kind: str  # shift: x = lo + col; mirror: x = hi - col; pos/neg: halves of a free x
    offset: float = 0.0


class _Simplex:
    def __init__(self, M: sp.csc_array, b: np.ndarray, ub: np.ndarray, params: LpParams):
        self.M = M
        self.MT = M.T.tocsr()
        self.b = b
        self.ub = ub
        self.p = params
        self.m, self.N = M.shape
        self.iterations = 0

    def start(self, basis: np.ndarray, x: np.ndarray, at_upper: np.ndarray) -> None:
        self.basis = basis.copy()
        self.x = x.copy()
        self.at_upper = at_upper.copy()
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.refactor()

    def refactor(self) -> None:
        B = sp.csc_matrix(self.M[:, self.basis])
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalInstabilityError(f"singular basis matrix ({exc})") from exc
        self.etas: list[tuple[int, np.ndarray, np.ndarray, float]] = []
        xn = np.where(self.is_basic, 0.0, self.x)
        r = self.b - self.M @ xn
        xb = self.lu.solve(r)
        resid = np.max(np.abs(B @ xb - r), initial=0.0)
        scale = 1.0 + np.max(np.abs(r), initial=0.0)
        if not np.isfinite(resid) or resid > self.p.residual_limit * scale:
            raise NumericalInstabilityError(f"basis solve residual {resid:.3g} after refactorisation")
        self.x[self.basis] = xb

    def ftran(self, v: np.ndarray) -> np.ndarray:
        """Solve ``B w = v`` for the current basis."""
        w = self.lu.solve(v)
        for r, idx, vals, piv in self.etas:
            wr = w[r] / piv
            if wr != 0.0:
                w[idx] -= vals * wr
            w[r] = wr
        return w

    def btran(self, u: np.ndarray) -> np.ndarray:
        """Solve ``B^T w = u`` for the current basis."""
        w = u.copy()
        for r, idx, vals, piv in reversed(self.etas):
            w[r] = (w[r] - vals @ w[idx]) / piv
        return self.lu.solve(w, trans="T")

    def run(self, cost: np.ndarray) -> str:
        p = self.p
        bland = False
        stall = 0
        indptr, indices, data = self.M.indptr, self.M.indices, self.M.data
        while True:
            if self.iterations >= p.max_iters:
                return "iteration_limit"
            if len(self.etas) >= p.refactor_every:
                self.refactor()
            cb = cost[self.basis]
            y = self.btran(cb) if cb.any() else np.zeros(self.m)
            d = cost - self.MT @ y
            free = ~self.is_basic
            can_up = free & ~self.at_upper & (d < -p.opt_tol) & (self.ub > 0)
            can_down = free & self.at_upper & (d > p.opt_tol)
            eligible = can_up | can_down
            if not eligible.any():
                if self.etas:
                    self.refactor()
                    continue
                return "optimal"
            if bland:
                q = int(np.argmax(eligible))
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            sigma = 1.0 if can_up[q] else -1.0

            aq = np.zeros(self.m)
            aq[indices[indptr[q]:indptr[q + 1]]] = data[indptr[q]:indptr[q + 1]]
            alpha = self.ftran(aq)
            g = sigma * alpha
            xb = self.x[self.basis]
            ub_b = self.ub[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = g > p.pivot_tol
            ratios[dec] = np.maximum(xb[dec], 0.0) / g[dec]
            inc = (g < -p.pivot_tol) & np.isfinite(ub_b)
            ratios[inc] = np.maximum(ub_b[inc] - xb[inc], 0.0) / -g[inc]
            t = float(ratios.min(initial=np.inf))
            flip = float(self.ub[q])
            self.iterations += 1

            if flip <= t:
                if not np.isfinite(flip):
                    return "unbounded"
                self.x[self.basis] = xb - flip * g
                self.x[q] = flip if sigma > 0 else 0.0
                self.at_upper[q] = sigma > 0
                stall = 0
                continue

            ties = np.flatnonzero(ratios <= t + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(g[ties]))])
            leave = int(self.basis[r])
            self.x[self.basis] = xb - t * g
            self.x[q] += sigma * t
            to_upper = g[r] < 0
            self.x[leave] = self.ub[leave] if to_upper else 0.0
            self.at_upper[leave] = to_upper
            self.at_upper[q] = False
            self.is_basic[leave] = False
            self.is_basic[q] = True
            self.basis[r] = q

            idx = np.flatnonzero(alpha)
            idx = idx[idx != r]
            self.etas.append((r, idx, alpha[idx], float(alpha[r])))

            if t * abs(d[q]) <= p.opt_tol * 1e-3:
                stall += 1
                if stall >= p.stall_limit and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", stall)
                    bland = True
            else:
                stall = 0


def solve_lp(problem: MilpProblem, params: LpParams | None = None) -> LpSolution:
    """Minimise ``objective @ x`` subject to the rows and bounds of ``problem``.

    Integrality flags are ignored (with a warning). Returns an
    :class:`LpSolution`; on ``iteration_limit`` the values are those of the
    last basis visited and need not be feasible.
    """
    p = params or LpParams()
    if any(k != "continuous" for k in problem.integrality):
        warnings.warn("solve_lp ignores integrality; pass an LP relaxation", RuntimeWarning, stacklevel=2)

    n = problem.num_vars
    lo = np.asarray(problem.lower, dtype=float)
    hi = np.asarray(problem.upper, dtype=float)
    c = np.asarray(problem.objective, dtype=float)
    A = sp.csc_array(problem.A)
    b = np.asarray(problem.rhs, dtype=float).copy()
    senses = problem.senses

    if np.any(lo > hi + p.feas_tol) or np.any(lo == np.inf) or np.any(hi == -np.inf):
        return _infeasible(n)

    # map every non-fixed variable onto [0, u]
    cols: list[_Column] = []
    src: list[int] = []
    sign: list[float] = []
    col_cost: list[float] = []
    col_ub: list[float] = []
    fixed_val = np.zeros(n)
    shift = np.zeros(n)
    for k in range(n):
        if hi[k] <= lo[k]:
            fixed_val[k] = shift[k] = lo[k]
            continue
        if np.isfinite(lo[k]):
            shift[k] = lo[k]
            cols.append(_Column(k, "shift", lo[k]))
            src.append(k), sign.append(1.0), col_cost.append(c[k]), col_ub.append(hi[k] - lo[k])
        elif np.isfinite(hi[k]):
            shift[k] = hi[k]
            cols.append(_Column(k, "mirror", hi[k]))
            src.append(k), sign.append(-1.0), col_cost.append(-c[k]), col_ub.append(np.inf)
        else:
            cols += [_Column(k, "pos"), _Column(k, "neg")]
            src += [k, k]
            sign += [1.0, -1.0]
            col_cost += [c[k], -c[k]]
            col_ub += [np.inf, np.inf]
    b -= A @ shift

    m = len(b)
    nz = len(cols)
    S = (A[:, src] @ sp.diags_array(np.array(sign))).tocsc() if nz else sp.csc_array((m, 0))
    S.eliminate_zeros()

    # rows without any free column are checked directly and dropped
    row_nnz = np.bincount(S.indices, minlength=m) if nz else np.zeros(m, dtype=int)
    keep = row_nnz > 0
    for r in np.flatnonzero(~keep):
        ok = {"<=": b[r] >= -p.feas_tol * (1 + abs(problem.rhs[r])),
              ">=": b[r] <= p.feas_tol * (1 + abs(problem.rhs[r])),
              "=": abs(b[r]) <= p.feas_tol * (1 + abs(problem.rhs[r]))}[senses[r]]
        if not ok:
            return _infeasible(n)
    S = S[keep] if nz else S[:0]
    b = b[keep]
    row_senses = [s for s, k in zip(senses, keep) if k]
    rhs_scale = 1.0 + np.abs(np.asarray(problem.rhs)[keep])
    m = len(b)

    if m == 0:
        # only bounds: each column sits at whichever bound is cheaper
        xs = np.zeros(nz)
        for j in range(nz):
            if col_cost[j] < 0:
                if not np.isfinite(col_ub[j]):
                    return LpSolution("unbounded", -np.inf, np.full(n, np.nan), ("at_lower",) * n)
                xs[j] = col_ub[j]
        at_ub = np.array([np.isfinite(u) and v == u for v, u in zip(xs, col_ub)], dtype=bool)
        return _recover(problem, cols, xs, fixed_val, np.zeros(nz, dtype=bool), at_ub, 0)

    # slack columns, then artificials where the all-zero start violates a row
    slack_rows = np.array([r for r, s in enumerate(row_senses) if s != "="], dtype=int)
    slack_sign = np.array([1.0 if row_senses[r] == "<=" else -1.0 for r in slack_rows])
    ns = len(slack_rows)

    basis = np.full(m, -1, dtype=int)
    ok_start = b[slack_rows] * slack_sign >= 0 if ns else np.zeros(0, dtype=bool)
    basis[slack_rows[ok_start]] = nz + np.flatnonzero(ok_start)
    art_rows = np.flatnonzero(basis < 0)
    na = len(art_rows)
    art_sign = np.where(b[art_rows] >= 0, 1.0, -1.0)
    basis[art_rows] = nz + ns + np.arange(na)

    slack = sp.csc_array((slack_sign, (slack_rows, np.arange(ns))), shape=(m, ns))
    art = sp.csc_array((art_sign, (art_rows, np.arange(na))), shape=(m, na))
    M = sp.hstack([S, slack, art], format="csc")
    M.sort_indices()
    N = nz + ns + na
    ub = np.concatenate([np.asarray(col_ub, dtype=float), np.full(ns + na, np.inf)])
    x = np.zeros(N)
    at_upper = np.zeros(N, dtype=bool)

    sx = _Simplex(M, b, ub, p)
    sx.start(basis, x, at_upper)

    if na:
        cost1 = np.zeros(N)
        cost1[nz + ns:] = 1.0
        status = sx.run(cost1)
        if status == "iteration_limit":
            return _finish(problem, cols, sx, fixed_val, nz, "iteration_limit")
        art_vals = sx.x[nz + ns:]
        if np.any(art_vals > p.feas_tol * rhs_scale[art_rows]):
            return _infeasible(n, sx.iterations)
        sx.ub[nz + ns:] = 0.0

    cost2 = np.concatenate([np.asarray(col_cost, dtype=float), np.zeros(ns + na)])
    status = sx.run(cost2)
    if status == "unbounded":
        return LpSolution("unbounded", -np.inf, np.full(n, np.nan), ("at_lower",) * n, sx.iterations)
    return _finish(problem, cols, sx, fixed_val, nz, status)


def _infeasible(n: int, iterations: int = 0) -> LpSolution:
    return LpSolution("infeasible", np.inf, np.full(n, np.nan), ("at_lower",) * n, iterations)


def _finish(problem, cols, sx: _Simplex, fixed_val, nz, status) -> LpSolution:
    return _recover(problem, cols, sx.x[:nz], fixed_val, sx.is_basic[:nz], sx.at_upper[:nz],
                    sx.iterations, status)


def _recover(problem, cols, xs, fixed_val, basic, at_upper, iterations, status="optimal") -> LpSolution:
    n = problem.num_vars
    values = fixed_val.copy()
    is_basic = np.zeros(n, dtype=bool)
    upper = np.zeros(n, dtype=bool)
    for j, col in enumerate(cols):
        k = col.orig
        if col.kind == "pos":
            values[k] += xs[j]
        elif col.kind == "neg":
            values[k] -= xs[j]
        elif col.kind == "mirror":
            values[k] = col.offset - xs[j]
            upper[k] = not basic[j]
        elif not basic[j] and at_upper[j]:
            values[k] = problem.upper[k]
            upper[k] = True
        else:
            values[k] = col.offset + xs[j]
        is_basic[k] |= bool(basic[j])
    state = tuple("basic" if is_basic[k] else "at_upper" if upper[k] else "at_lower" for k in range(n))
    objective = float(np.asarray(problem.objective) @ values)
    return LpSolution(status, objective, values, state, iterations)

"""Independent reference solvers used only by the tests.

Nothing here imports the code it is used to check.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp


def textbook_simplex(c, A, senses, b, lower, upper):
    """Dense-tableau two-phase simplex in exact rational arithmetic.

    Bland's rule throughout. Every variable is rewritten as ``x = lo + x'``
    (finite lower bounds), ``x = hi - x'`` (upper only) or ``x' - x''``
    (free); finite upper bounds become explicit ``<=`` rows. Returns
    ``(status, objective)`` with status in optimal/infeasible/unbounded.
    """
    F = Fraction
    n = len(c)
    cols = []  # (orig, sign)
    shift = [F(0)] * n
    for k in range(n):
        lo, hi = lower[k], upper[k]
        if np.isfinite(lo):
            shift[k] = F(lo)
            cols.append((k, 1))
        elif np.isfinite(hi):
            shift[k] = F(hi)
            cols.append((k, -1))
        else:
            cols.append((k, 1))
            cols.append((k, -1))
    nv = len(cols)

    rows, rel, rhs = [], [], []
    for r in range(len(b)):
        row = [F(A[r][k]) * s for k, s in cols]
        const = sum(F(A[r][k]) * shift[k] for k in range(n))
        rows.append(row)
        rel.append(senses[r])
        rhs.append(F(b[r]) - const)
    for j, (k, s) in enumerate(cols):
        if s == 1 and np.isfinite(lower[k]) and np.isfinite(upper[k]):
            row = [F(0)] * nv
            row[j] = F(1)
            rows.append(row)
            rel.append("<=")
            rhs.append(F(upper[k]) - F(lower[k]))
    cost = [F(c[k]) * s for k, s in cols]
    const_obj = sum(F(c[k]) * shift[k] for k in range(n))

    m = len(rows)
    for r in range(m):
        if rhs[r] < 0:
            rows[r] = [-v for v in rows[r]]
            rhs[r] = -rhs[r]
            rel[r] = {"<=": ">=", ">=": "<=", "=": "="}[rel[r]]

    n_slack = sum(1 for s in rel if s != "=")
    n_art = sum(1 for s in rel if s != "<=")
    width = nv + n_slack + n_art
    T = []
    basis = []
    si, ai = nv, nv + n_slack
    art_cols = []
    for r in range(m):
        line = rows[r] + [F(0)] * (n_slack + n_art) + [rhs[r]]
        if rel[r] == "<=":
            line[si] = F(1)
            basis.append(si)
            si += 1
        else:
            if rel[r] == ">=":
                line[si] = F(-1)
                si += 1
            line[ai] = F(1)
            basis.append(ai)
            art_cols.append(ai)
            ai += 1
        T.append(line)

    def pivot(r, q):
        pv = T[r][q]
        T[r] = [v / pv for v in T[r]]
        for i in range(m):
            if i != r and T[i][q] != 0:
                f = T[i][q]
                T[i] = [a - f * bb for a, bb in zip(T[i], T[r])]
        basis[r] = q

    def run(costs, allowed):
        while True:
            cb = [costs[basis[i]] for i in range(m)]
            entering = None
            for j in range(width):
                if j in basis or not allowed[j]:
                    continue
                red = costs[j] - sum(cb[i] * T[i][j] for i in range(m))
                if red < 0:
                    entering = j
                    break
            if entering is None:
                return "optimal"
            best = None
            for i in range(m):
                if T[i][entering] > 0:
                    ratio = T[i][-1] / T[i][entering]
                    if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                return "unbounded"
            pivot(best[1], entering)

    allowed = [True] * width
    if art_cols:
        c1 = [F(0)] * width
        for a in art_cols:
            c1[a] = F(1)
        run(c1, allowed)
        if sum(T[i][-1] for i in range(m) if basis[i] in art_cols) > 0:
            return "infeasible", None
        # drive zero-valued artificials out of the basis where possible
        for i in range(m):
            if basis[i] in art_cols:
                for j in range(nv + n_slack):
                    if T[i][j] != 0 and j not in basis:
                        pivot(i, j)
                        break
        for a in art_cols:
            allowed[a] = False
    c2 = cost + [F(0)] * (n_slack + n_art)
    status = run(c2, allowed)
    if status == "unbounded":
        return "unbounded", None
    obj = sum(c2[basis[i]] * T[i][-1] for i in range(m)) + const_obj
    return "optimal", float(obj)


def facility_subset_oracle(demand, dist, fixed, limit, mode="exact", mad=None,
                           mpct=None, radius=None, single_source=False, strict=False,
                           forced_open=(), forced_closed=()):
    """Minimum cost over every admissible open set, solved per set with HiGHS.

    Written straight from the model definition: serve every customer's
    demand from open sites, optionally cap the demand-weighted average
    distance and require a demand fraction within ``radius``. Returns
    ``(objective, open_set)`` or ``(inf, None)``.
    """
    demand = np.asarray(demand, float)
    dist = np.asarray(dist, float)
    x, y = dist.shape
    total = demand.sum()
    sizes = [limit] if mode == "exact" else range(0, limit + 1)
    best = (np.inf, None)
    for k in sizes:
        for S in itertools.combinations(range(y), k):
            if not set(forced_open) <= set(S) or set(forced_closed) & set(S):
                continue
            val = _subset_cost(demand, dist, list(S), total, mad, mpct, radius, single_source, strict)
            if val is None:
                continue
            val += float(np.sum(np.asarray(fixed, float)[list(S)]))
            if val < best[0] - 1e-12:
                best = (val, S)
    return best


def _subset_cost(demand, dist, S, total, mad, mpct, radius, single_source, strict):
    x = len(demand)
    k = len(S)
    if k == 0:
        return 0.0 if total == 0 and not (mpct and mpct > 0) else None
    D = dist[:, S]
    side = mad is not None or mpct is not None
    if not side and not strict:
        return float(np.sum(demand * D.min(axis=1)))

    within = (D <= radius).astype(float) if mpct is not None else None
    nvar = x * k
    if single_source:
        cost = (demand[:, None] * D).ravel()
    else:
        cost = D.ravel()
    A, lo, hi = [], [], []
    for i in range(x):
        row = np.zeros(nvar)
        row[i * k:(i + 1) * k] = 1.0
        A.append(row)
        if single_source:
            lo.append(1.0)
            hi.append(1.0)
        else:
            lo.append(demand[i])
            hi.append(demand[i] if strict else np.inf)
    if mad is not None:
        A.append(cost.copy())
        lo.append(-np.inf)
        hi.append(mad * total)
    if mpct is not None:
        w = (demand[:, None] * within).ravel() if single_source else within.ravel()
        A.append(w)
        lo.append(mpct * total)
        hi.append(np.inf)
    A = np.array(A)
    if single_source:
        res = milp(cost, constraints=LinearConstraint(A, lo, hi), integrality=np.ones(nvar),
                   bounds=Bounds(0, 1))
        return float(res.fun) if res.status == 0 else None
    ub_var = np.repeat(demand, k)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for r in range(len(A)):
        if lo[r] == hi[r]:
            A_eq.append(A[r])
            b_eq.append(lo[r])
        else:
            if np.isfinite(hi[r]):
                A_ub.append(A[r])
                b_ub.append(hi[r])
            if np.isfinite(lo[r]):
                A_ub.append(-A[r])
                b_ub.append(-lo[r])
    res = linprog(cost, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(np.zeros(nvar), ub_var)), method="highs")
    return float(res.fun) if res.status == 0 else None


def kmeans_exhaustive(points, weights, k):
    """Best weighted SSD over every assignment of ``points`` to ``k`` labels."""
    pts = np.asarray(points, float)
    w = np.asarray(weights, float)
    best = (np.inf, None)
    for labels in itertools.product(range(k), repeat=len(pts)):
        labels = np.array(labels)
        if len(set(labels)) < k:
            continue
        ssd = 0.0
        centers = []
        for c in range(k):
            m = labels == c
            cen = (w[m, None] * pts[m]).sum(0) / w[m].sum()
            centers.append(cen)
            ssd += float((w[m] * ((pts[m] - cen) ** 2).sum(1)).sum())
        if ssd < best[0] - 1e-12:
            best = (ssd, np.array(centers))
    return best


EARTH_RADIUS_MILES = 3958.8


def great_circle_miles(lat1, lon1, lat2, lon2):
    """Vincenty's special case of the great-circle distance (atan2 form)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    num = math.hypot(math.cos(p2) * math.sin(dl),
                     math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_RADIUS_MILES * math.atan2(num, den)


def weighted_average_distance(flows, customer_xy, site_xy, demand):
    """Flow-weighted mean distance over total demand.

    ``flows`` maps ``(customer_id, site_id)`` to flow; the ``*_xy`` maps give
    ``(lat, lon)`` per id and ``demand`` maps customer ids to demand.
    """
    total = math.fsum(demand.values())
    return math.fsum(f * great_circle_miles(*customer_xy[c], *site_xy[s]) for (c, s), f in flows.items()) / total

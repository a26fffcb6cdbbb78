"""Single-facility continuous center of gravity.

The cost of a location ``(x, y)`` is ``sum_i w_i * sqrt((x - x_i)**2 + (y - y_i)**2)``
on a plane measured in degrees: ``y`` is latitude and ``x`` is longitude
times ``cos(ref_lat)``. ``ref_lat`` defaults to the demand-weighted mean
latitude; pass ``ref_lat=0.0`` to work in raw longitude/latitude degrees.
Multiply a plane-degree cost by 69.17 for demand-miles.

:func:`weiszfeld` minimises that cost. An iterate that reaches a demand
point stays there when the point's own weight is at least the pull of all
the others (the point is then optimal); otherwise it steps off along the
pull direction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geo import MILES_PER_DEGREE, GeoPoint
from .model import Customer


class SingularGradientError(ValueError):
    """The cost is not differentiable at a demand point."""


@dataclass(frozen=True)
class CogResult:
    point: GeoPoint
    objective: float
    iterations: int
    grad_norm: float
    converged: bool = True
    at_demand_point: bool = False
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def objective_miles(self) -> float:
        return self.objective * MILES_PER_DEGREE


def _weights(customers: Sequence[Customer]) -> np.ndarray:
    return np.array([c.demand for c in customers], dtype=float)


def reference_latitude(customers: Sequence[Customer]) -> float:
    w = _weights(customers)
    lat = np.array([c.point.lat for c in customers])
    return float(w @ lat / w.sum()) if w.sum() > 0 else float(lat.mean())


def _plane(points: Sequence[GeoPoint], ref_lat: float) -> np.ndarray:
    k = math.cos(math.radians(ref_lat))
    return np.array([[p.lon * k, p.lat] for p in points], dtype=float).reshape(-1, 2)


def _to_geo(xy: np.ndarray, ref_lat: float) -> GeoPoint:
    k = math.cos(math.radians(ref_lat))
    return GeoPoint(min(90.0, max(-90.0, float(xy[1]))), min(180.0, max(-180.0, float(xy[0] / k))))


def centroid_seed(customers: Sequence[Customer]) -> GeoPoint:
    w = _weights(customers)
    if len(customers) == 0 or w.sum() <= 0:
        raise ValueError("centroid needs positive total demand")
    if len({(c.point.lat, c.point.lon) for c in customers}) == 1:
        return customers[0].point
    lat = np.array([c.point.lat for c in customers])
    lon = np.array([c.point.lon for c in customers])
    return GeoPoint(float(w @ lat / w.sum()), float(w @ lon / w.sum()))


def cog_cost(point: GeoPoint, customers: Sequence[Customer], ref_lat: float | None = None) -> float:
    ref = reference_latitude(customers) if ref_lat is None else ref_lat
    P = _plane([c.point for c in customers], ref)
    x = _plane([point], ref)[0]
    return float(_weights(customers) @ np.hypot(*(x - P).T))


def gradient(point: GeoPoint, customers: Sequence[Customer], ref_lat: float | None = None) -> tuple[float, float]:
    """Exact gradient of :func:`cog_cost` with respect to plane coordinates."""
    ref = reference_latitude(customers) if ref_lat is None else ref_lat
    P = _plane([c.point for c in customers], ref)
    x = _plane([point], ref)[0]
    diff = x - P
    d = np.hypot(diff[:, 0], diff[:, 1])
    w = _weights(customers)
    live = w > 0
    if np.any(d[live] <= 1e-15):
        raise SingularGradientError(f"{point} coincides with a demand point")
    g = (w[live] / d[live]) @ diff[live]
    return float(g[0]), float(g[1])


def _pull(k: int, P: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of the other points' cost at demand point ``k``, and sum w_i/d_i."""
    diff = P[k] - P
    d = np.hypot(diff[:, 0], diff[:, 1])
    others = d > 0
    R = (w[others] / d[others]) @ diff[others]
    return R, float(np.sum(w[others] / d[others]))


def weiszfeld(
    customers: Sequence[Customer],
    init: GeoPoint | None = None,
    tol: float = 1e-7,
    max_iters: int = 10_000,
    ref_lat: float | None = None,
) -> CogResult:
    """Weighted geometric median by Weiszfeld iteration (plane degrees).

    Stops when the step or the gradient norm drops below ``tol``. On
    ``max_iters`` the last iterate is returned with ``converged=False``.
    """
    live = [c for c in customers if c.demand > 0]
    if not live:
        raise ValueError("weiszfeld needs at least one customer with positive demand")
    ref = reference_latitude(live) if ref_lat is None else ref_lat
    P = _plane([c.point for c in live], ref)
    w = _weights(live)
    x = _plane([init if init is not None else centroid_seed(live)], ref)[0]

    def cost(z: np.ndarray) -> float:
        return float(w @ np.hypot(*(z - P).T))

    history = [cost(x)]
    snap = max(tol, 1e-12)
    grad_norm = math.inf
    at_point = False
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        diff = x - P
        d = np.hypot(diff[:, 0], diff[:, 1])
        k = int(np.argmin(d))
        if d[k] <= snap:
            R, inv_sum = _pull(k, P, w)
            nR = float(np.hypot(*R))
            if nR <= w[k]:
                if d[k] > 0:
                    x = P[k].copy()
                    history.append(cost(x))
                grad_norm, at_point, converged = 0.0, True, True
                break
            x_new = P[k] - (nR - w[k]) / inv_sum * R / nR
        else:
            inv = w / d
            x_new = (inv @ P) / inv.sum()
        step = float(np.hypot(*(x_new - x)))
        x = x_new
        history.append(cost(x))
        diff = x - P
        d = np.hypot(diff[:, 0], diff[:, 1])
        if np.all(d > snap):
            grad_norm = float(np.hypot(*((w / d) @ diff)))
        if step < tol or grad_norm < tol:
            # the step test can fire while creeping into a demand point
            k = int(np.argmin(d))
            if d[k] <= 1e3 * snap:
                R, _ = _pull(k, P, w)
                if float(np.hypot(*R)) <= w[k]:
                    x = P[k].copy()
                    history.append(cost(x))
                    grad_norm, at_point = 0.0, True
            converged = True
            break
    if not converged:
        warnings.warn(f"weiszfeld stopped after {max_iters} iterations", RuntimeWarning, stacklevel=2)
    return CogResult(_to_geo(x, ref) if not at_point else live[int(np.argmin(np.hypot(*(x - P).T)))].point,
                     history[-1], it, grad_norm, converged, at_point, history)

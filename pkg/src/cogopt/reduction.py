"""Problem-size reductions applied before branch and bound.

* CLS (candidate location selection) scores every state on area,
  distance to the existing network and demand density, and apportions a
  budget of candidate sites across states.
* Weighted k-means places a state's candidates at demand-weighted cluster
  centres.
* Customer packets merge nearby customers into one demand point whose
  demand is the members' total.
"""

from __future__ import annotations

import math
import warnings
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geo import MILES_PER_DEGREE, GeoPoint, distance_matrix, pair_distance
from .model import Customer, ModelError, Site, StateAttr


class ReductionWarning(UserWarning):
    """A reduction had to adjust its request (clamping, identity packing...)."""


# ---------------------------------------------------------------- CLS


@dataclass(frozen=True)
class ClsRecord:
    state: str
    a_score: float
    p_score: float
    d_score: float
    cls_score: float
    allocation: int
    area: float
    proximity_miles: float
    density: float


def scale_1_10(values: Sequence[float]) -> np.ndarray:
    """Min-max scale onto [1, 10]; a constant vector maps to all 10s."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.full(len(v), 10.0)
    return 1.0 + 9.0 * (v - lo) / (hi - lo)


def apportion(weights: Sequence[float], total: int, keys: Sequence[str]) -> list[int]:
    """Largest-remainder apportionment of ``total`` seats, at least one each.

    Remainder ties go to the alphabetically first key so the result does not
    depend on input order.
    """
    n = len(weights)
    if total < n:
        raise ValueError(f"cannot give {n} states at least one of {total} candidates")
    w = np.asarray(weights, dtype=float)
    rest = total - n
    quota = rest * w / w.sum() if w.sum() > 0 else np.full(n, rest / n)
    base = np.floor(quota).astype(int)
    left = rest - int(base.sum())
    order = sorted(range(n), key=lambda i: (-(quota[i] - base[i]), keys[i]))
    for i in order[:left]:
        base[i] += 1
    return [int(b) + 1 for b in base]


def weighted_centroid(points: Sequence[GeoPoint], weights: Sequence[float]) -> GeoPoint:
    w = np.asarray(weights, dtype=float)
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    # fsum keeps the result independent of input order
    W = math.fsum(w)
    if W <= 0:
        return GeoPoint(math.fsum(lat) / len(lat), math.fsum(lon) / len(lon))
    return GeoPoint(math.fsum(w * lat) / W, math.fsum(w * lon) / W)


def cls_scores(
    states: Sequence[StateAttr],
    customers: Sequence[Customer],
    existing_sites: Sequence[Site],
    total_candidates: int,
    metric: str = "haversine",
) -> list[ClsRecord]:
    """Score states and split ``total_candidates`` between them.

    Raw pillars: area; miles from the state's demand centroid to the nearest
    ``existing_open`` site (farther means a higher score); demand per square
    mile. Each is scaled to [1, 10] across states and combined by geometric
    mean. States without customers get no record.
    """
    by_name = {s.name: s for s in states}
    members: dict[str, list[Customer]] = {}
    for c in customers:
        if c.state not in by_name:
            raise ModelError(f"customer {c.id!r} has unknown state {c.state!r}")
        members.setdefault(c.state, []).append(c)
    active = [s for s in states if s.name in members]
    dropped = [s.name for s in states if s.name not in members]
    if dropped:
        warnings.warn(f"states without customers skipped by CLS: {dropped}", ReductionWarning, stacklevel=2)
    if not active:
        raise ModelError("no state has customers")
    if total_candidates < len(active):
        raise ModelError(f"total_candidates={total_candidates} is below the number of states ({len(active)})")

    open_sites = [s for s in existing_sites if s.status == "existing_open"]
    area = np.array([s.area for s in active])
    demand = np.array([math.fsum(c.demand for c in members[s.name]) for s in active])
    density = demand / area
    if open_sites:
        prox = np.array([
            min(pair_distance(weighted_centroid([c.point for c in members[s.name]],
                                                [c.demand for c in members[s.name]]), w.point, metric)
                for w in open_sites)
            for s in active
        ])
        p = scale_1_10(prox)
    else:
        prox = np.full(len(active), np.inf)
        p = np.full(len(active), 10.0)
    a = scale_1_10(area)
    d = scale_1_10(density)
    cls = np.cbrt(a * p * d)
    alloc = apportion(cls, total_candidates, [s.name for s in active])
    return [
        ClsRecord(s.name, float(a[k]), float(p[k]), float(d[k]), float(cls[k]), alloc[k],
                  float(area[k]), float(prox[k]), float(density[k]))
        for k, s in enumerate(active)
    ]


# ---------------------------------------------------------------- k-means


@dataclass(frozen=True)
class KMeansResult:
    centers: list[GeoPoint]
    assignment: np.ndarray
    ssd: float
    ssd_history: list[float]
    iterations: int


def _project(lat: np.ndarray, lon: np.ndarray, ref_lat: float) -> np.ndarray:
    k = math.cos(math.radians(ref_lat))
    return np.column_stack([lon * k * MILES_PER_DEGREE, lat * MILES_PER_DEGREE])


def _unproject(xy: np.ndarray, ref_lat: float) -> list[GeoPoint]:
    k = math.cos(math.radians(ref_lat))
    out = []
    for x, y in xy:
        lat = min(90.0, max(-90.0, y / MILES_PER_DEGREE))
        lon = min(180.0, max(-180.0, x / (k * MILES_PER_DEGREE)))
        out.append(GeoPoint(lat, lon))
    return out


def kmeans_weighted(
    points: Sequence[GeoPoint],
    weights: Sequence[float],
    k: int,
    seed: int = 42,
    max_iters: int = 300,
    tol: float = 1e-9,
) -> KMeansResult:
    """Lloyd's algorithm with demand-weighted centroid updates.

    Runs on an equirectangular projection in miles, so SSD is in square
    miles. Initialisation: the first centre is drawn (weight-proportional)
    with ``seed``; each further centre is the distinct point maximising
    weight times squared distance to the chosen centres. An emptied
    cluster is re-seeded at the point farthest from its assigned centre.
    """
    w = np.asarray(weights, dtype=float)
    n = len(points)
    if n == 0 or len(w) != n:
        raise ValueError("points and weights must be non-empty and of equal length")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative and not all zero")
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    keys = list(zip(lat, lon))
    first_of: dict[tuple[float, float], int] = {}
    for i, key in enumerate(keys):
        first_of.setdefault(key, i)
    distinct = sorted(first_of.values())
    if not 1 <= k <= len(distinct):
        raise ValueError(f"k={k} must lie in [1, {len(distinct)}] (distinct points)")

    ref = float(lat.mean())
    X = _project(lat, lon, ref)
    rng = np.random.default_rng(seed)
    agg: dict[tuple[float, float], float] = {}
    for key, wi in zip(keys, w):
        agg[key] = agg.get(key, 0.0) + wi
    dw = np.array([agg[keys[j]] for j in distinct])
    prob = dw / dw.sum() if dw.sum() > 0 else np.full(len(distinct), 1.0 / len(distinct))
    chosen = [distinct[int(rng.choice(len(distinct), p=prob))]]
    d2 = np.sum((X[distinct] - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        score = dw * d2
        if score.max() <= 0:
            score = d2
        j = int(np.argmax(score))
        chosen.append(distinct[j])
        d2 = np.minimum(d2, np.sum((X[distinct] - X[distinct[j]]) ** 2, axis=1))
    centers = X[chosen].copy()

    def assign(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dist2 = np.sum((X[:, None, :] - c[None, :, :]) ** 2, axis=2)
        lab = np.argmin(dist2, axis=1)
        return lab, dist2[np.arange(n), lab]

    labels, dist2 = assign(centers)
    history = [float(w @ dist2)]
    it = 0
    for it in range(1, max_iters + 1):
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(dist2))
            centers[c] = X[far]
            labels, dist2 = assign(centers)
            counts = np.bincount(labels, minlength=k)
        for c in range(k):
            m = labels == c
            wm = w[m]
            centers[c] = (wm @ X[m]) / wm.sum() if wm.sum() > 0 else X[m].mean(axis=0)
        labels, dist2 = assign(centers)
        ssd = float(w @ dist2)
        prev = history[-1]
        history.append(ssd)
        if prev - ssd <= tol * max(1.0, prev):
            break

    out = _unproject(centers, ref)
    for c in range(k):
        m = np.flatnonzero(labels == c)
        if len({keys[i] for i in m}) == 1:
            out[c] = points[m[0]]  # exact, no projection round trip
    return KMeansResult(out, labels, history[-1], history, it)


def state_seed(seed: int, state: str) -> int:
    """Per-state seed that is stable across runs and processes."""
    return (seed + zlib.crc32(state.encode("utf-8"))) % (2**32)


def generate_candidates(customers_in_state: Sequence[Customer], allocation: int, seed: int = 42) -> list[Site]:
    """Greenfield candidates at the weighted k-means centres of one state."""
    if allocation < 1:
        raise ValueError("allocation must be >= 1")
    if not customers_in_state:
        raise ValueError("state has no customers")
    state = Counter(c.state for c in customers_in_state).most_common(1)[0][0]
    pts = [c.point for c in customers_in_state]
    distinct = len({(p.lat, p.lon) for p in pts})
    if allocation > distinct:
        warnings.warn(f"state {state!r}: allocation {allocation} clamped to {distinct} distinct customer points",
                      ReductionWarning, stacklevel=2)
        allocation = distinct
    w = np.array([c.demand for c in customers_in_state])
    if w.sum() <= 0:
        w = np.ones(len(w))
    res = kmeans_weighted(pts, w, allocation, seed=state_seed(seed, state))
    return [Site(f"{state}-G{k:02d}", p, state, "greenfield_candidate") for k, p in enumerate(res.centers)]


# ---------------------------------------------------------------- packets


@dataclass(frozen=True)
class Packet:
    id: str
    member_ids: tuple[str, ...]
    member_demands: tuple[float, ...]
    point: GeoPoint
    demand: float
    state: str

    def as_customer(self) -> Customer:
        return Customer(self.id, self.point, self.demand, self.state)


def _majority_state(members: Sequence[Customer]) -> str:
    counts = Counter(c.state for c in members)
    top = max(counts.values())
    tied = {s for s, v in counts.items() if v == top}
    if len(tied) == 1:
        return next(iter(tied))
    return max((c for c in members if c.state in tied), key=lambda c: c.demand).state


def _make_packet(pid: str, members: Sequence[Customer]) -> Packet:
    dem = tuple(c.demand for c in members)
    if len({(c.point.lat, c.point.lon) for c in members}) == 1:
        point = members[0].point
    else:
        point = weighted_centroid([c.point for c in members], dem)
    return Packet(pid, tuple(c.id for c in members), dem, point, math.fsum(dem), _majority_state(members))


def build_packets(
    customers: Sequence[Customer],
    target_count: int | None = None,
    radius_miles: float | None = None,
    seed: int = 42,
    metric: str = "haversine",
) -> list[Packet]:
    """Group customers into packets, by count (k-means) or by radius.

    Radius mode is greedy: customers are taken in decreasing demand order
    and each unassigned one collects every unassigned customer within
    ``radius_miles`` of it (grid-hashed neighbourhood search).
    """
    if (target_count is None) == (radius_miles is None):
        raise ValueError("give exactly one of target_count and radius_miles")
    if not customers:
        raise ValueError("no customers to pack")
    if target_count is not None:
        if target_count < 1:
            raise ValueError("target_count must be >= 1")
        if target_count >= len(customers):
            if target_count > len(customers):
                warnings.warn(f"target_count {target_count} exceeds {len(customers)} customers; identity packing",
                              ReductionWarning, stacklevel=2)
            return [_make_packet(f"P{k:05d}", [c]) for k, c in enumerate(customers)]
        distinct = len({(c.point.lat, c.point.lon) for c in customers})
        k = target_count
        if k > distinct:
            warnings.warn(f"target_count {k} clamped to {distinct} distinct points", ReductionWarning, stacklevel=2)
            k = distinct
        w = np.array([c.demand for c in customers])
        if w.sum() <= 0:
            w = np.ones(len(w))
        res = kmeans_weighted([c.point for c in customers], w, k, seed=seed)
        groups = [[c for c, lab in zip(customers, res.assignment) if lab == g] for g in range(k)]
        return [_make_packet(f"P{g:05d}", members) for g, members in enumerate(groups) if members]

    if not radius_miles > 0:
        raise ValueError("radius_miles must be > 0")
    max_lat = max(abs(c.point.lat) for c in customers)
    dlat = radius_miles / MILES_PER_DEGREE
    dlon = radius_miles / (MILES_PER_DEGREE * max(math.cos(math.radians(min(max_lat, 89.0))), 1e-3))
    cells: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(customers):
        cells.setdefault((math.floor(c.point.lat / dlat), math.floor(c.point.lon / dlon)), []).append(i)
    taken = [False] * len(customers)
    order = sorted(range(len(customers)), key=lambda i: (-customers[i].demand, customers[i].id))
    packets = []
    for i in order:
        if taken[i]:
            continue
        ci = customers[i]
        cx, cy = math.floor(ci.point.lat / dlat), math.floor(ci.point.lon / dlon)
        group = []
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for j in cells.get((gx, gy), ()):
                    if not taken[j] and pair_distance(ci.point, customers[j].point, metric) <= radius_miles:
                        group.append(j)
        group.sort()
        for j in group:
            taken[j] = True
        packets.append(_make_packet(f"P{len(packets):05d}", [customers[j] for j in group]))
    return packets


def packet_exact_distance(
    packet: Packet,
    site: Site | None,
    distances_to_members: Mapping[str, float] | Sequence[float],
) -> float:
    """Demand-weighted mean distance of the packet's members to ``site``.

    With flows equal to demands, ``packet.demand * result`` equals the sum
    of member demand times member distance.
    """
    if isinstance(distances_to_members, Mapping):
        d = np.array([distances_to_members[m] for m in packet.member_ids], dtype=float)
    else:
        d = np.asarray(distances_to_members, dtype=float)
    if len(d) != len(packet.member_ids):
        raise ValueError("need one distance per packet member")
    if len(d) == 1:
        return float(d[0])
    w = np.asarray(packet.member_demands, dtype=float)
    total = math.fsum(w)
    if total <= 0:
        where = f" to {site.id}" if site is not None else ""
        warnings.warn(f"packet {packet.id} has zero demand; unweighted mean distance{where}",
                      ReductionWarning, stacklevel=2)
        return float(d.mean())
    return math.fsum(w * d) / total


def packet_distances(
    packets: Sequence[Packet],
    customers: Sequence[Customer],
    sites: Sequence[Site],
    metric: str = "haversine",
    exact: bool = True,
) -> np.ndarray:
    """Packet x site distance matrix.

    ``exact`` uses member-weighted distances (objective-preserving when all
    members share a site); otherwise distances from the packet centroid.
    """
    if not exact:
        return distance_matrix([p.point for p in packets], [s.point for s in sites], metric)
    index = {c.id: k for k, c in enumerate(customers)}
    D = distance_matrix([c.point for c in customers], [s.point for s in sites], metric)
    out = np.empty((len(packets), len(sites)))
    for r, p in enumerate(packets):
        rows = D[[index[m] for m in p.member_ids]]
        if len(rows) == 1:
            # w * d / w can round away from d
            out[r] = rows[0]
            continue
        w = np.asarray(p.member_demands, dtype=float)
        total = math.fsum(w)
        out[r] = (w @ rows) / total if total > 0 else rows.mean(axis=0)
    return out

"""Distance primitives.

Two metrics are provided. ``haversine`` is the great-circle distance on a
sphere of radius 3958.8 miles and is the default everywhere. ``planar`` is
the Euclidean distance on an equirectangular projection (longitude scaled by
the cosine of the mean latitude of the pair, 69.17 miles per degree); it is
only meaningful inside a region a few hundred miles across.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_MILES = 3958.8
MILES_PER_DEGREE = 69.17

METRICS = ("haversine", "planar")


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


def haversine_miles(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    # clamp: rounding can push h a hair above 1 for antipodal pairs
    return 2.0 * EARTH_RADIUS_MILES * math.asin(math.sqrt(min(1.0, h)))


def planar_miles(a: GeoPoint, b: GeoPoint) -> float:
    k = math.cos(math.radians(0.5 * (a.lat + b.lat)))
    dx = (b.lon - a.lon) * k
    dy = b.lat - a.lat
    return MILES_PER_DEGREE * math.hypot(dx, dy)


def _coords(points: Sequence[GeoPoint]) -> tuple[np.ndarray, np.ndarray]:
    lat = np.fromiter((p.lat for p in points), dtype=float, count=len(points))
    lon = np.fromiter((p.lon for p in points), dtype=float, count=len(points))
    return lat, lon


def distance_matrix(
    customers: Sequence[GeoPoint],
    sites: Sequence[GeoPoint],
    metric: str = "haversine",
) -> np.ndarray:
    """Pairwise distances in miles, shape ``(len(customers), len(sites))``.

    Vectorised versions of :func:`haversine_miles` / :func:`planar_miles`;
    coincident points give exactly 0.
    """
    if not customers or not sites:
        raise ValueError("distance_matrix needs at least one customer and one site")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    clat, clon = _coords(customers)
    slat, slon = _coords(sites)
    clat, clon = clat[:, None], clon[:, None]
    slat, slon = slat[None, :], slon[None, :]
    if metric == "haversine":
        phi1, phi2 = np.radians(clat), np.radians(slat)
        dlmb = np.radians(slon - clon)
        h = np.sin((phi2 - phi1) / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
        d = 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.minimum(1.0, h)))
    else:
        k = np.cos(np.radians(0.5 * (clat + slat)))
        d = MILES_PER_DEGREE * np.hypot((slon - clon) * k, slat - clat)
    return np.ascontiguousarray(d)


def pair_distance(a: GeoPoint, b: GeoPoint, metric: str = "haversine") -> float:
    if metric == "haversine":
        return haversine_miles(a, b)
    if metric == "planar":
        return planar_miles(a, b)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")

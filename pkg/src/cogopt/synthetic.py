"""Random but reproducible demand networks for tests, benchmarks and fixtures."""

from __future__ import annotations

import numpy as np

from .geo import GeoPoint
from .model import Customer, Site, StateAttr


def random_customers(rng: np.random.Generator, n: int, center=(40.0, -80.0), spread=1.5,
                     state: str = "S0", prefix: str = "C", demand_range=(1, 100)) -> list[Customer]:
    lat = center[0] + rng.uniform(-spread, spread, n)
    lon = center[1] + rng.uniform(-spread, spread, n)
    dem = rng.integers(demand_range[0], demand_range[1] + 1, n)
    return [Customer(f"{prefix}{k:04d}", GeoPoint(round(a, 5), round(o, 5)), float(d), state)
            for k, (a, o, d) in enumerate(zip(lat, lon, dem))]


def random_sites(rng: np.random.Generator, n: int, center=(40.0, -80.0), spread=1.5,
                 state: str = "S0", prefix: str = "W", status: str = "greenfield_candidate",
                 fixed_cost: float = 0.0) -> list[Site]:
    lat = center[0] + rng.uniform(-spread, spread, n)
    lon = center[1] + rng.uniform(-spread, spread, n)
    return [Site(f"{prefix}{k:03d}", GeoPoint(round(a, 5), round(o, 5)), state, status, fixed_cost)
            for k, (a, o) in enumerate(zip(lat, lon))]


STATE_CENTERS = [(40.5, -77.5), (42.9, -75.5), (38.6, -80.6), (35.5, -79.0), (33.0, -83.5)]


def multi_state_network(seed: int, n_customers: int, n_states: int = 3, spread: float = 1.0,
                        clustered: bool = True) -> tuple[list[Customer], list[StateAttr]]:
    """Customers spread over ``n_states`` well-separated regions.

    With ``clustered`` each state's demand concentrates around a few towns,
    which is what makes customer packets effective.
    """
    rng = np.random.default_rng(seed)
    per = np.full(n_states, n_customers // n_states)
    per[: n_customers % n_states] += 1
    customers: list[Customer] = []
    states = []
    for s in range(n_states):
        name = f"S{s}"
        c = STATE_CENTERS[s % len(STATE_CENTERS)]
        states.append(StateAttr(name, float(rng.uniform(20_000, 60_000))))
        if clustered:
            towns = c + rng.uniform(-spread, spread, (4, 2))
            which = rng.integers(0, 4, per[s])
            pts = towns[which] + rng.normal(0, spread / 8, (per[s], 2))
        else:
            pts = c + rng.uniform(-spread, spread, (per[s], 2))
        dem = rng.integers(1, 100, per[s])
        start = len(customers)
        customers += [Customer(f"C{start + k:05d}", GeoPoint(round(p[0], 5), round(p[1], 5)), float(d), name)
                      for k, (p, d) in enumerate(zip(pts, dem))]
    return customers, states

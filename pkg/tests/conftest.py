"""Shared random-instance generators."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from cogopt.formulation import MilpProblem
from cogopt.geo import distance_matrix
from cogopt.model import Customer, Scenario, Site
from cogopt.synthetic import random_customers, random_sites

FIXTURES = Path(__file__).parent / "fixtures"


@dataclass
class FacilityCase:
    customers: list[Customer]
    sites: list[Site]
    scenario: Scenario
    distances: np.ndarray


def random_lp(rng: np.random.Generator, max_vars: int = 20, max_rows: int = 15) -> MilpProblem:
    """Integer-data LP mixing row senses and bound types; any status can come out."""
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A = rng.integers(-5, 6, size=(m, n)) * (rng.random((m, n)) < 0.6)
    c = rng.integers(-5, 8, size=n)
    senses = tuple(("<=", ">=", "=")[k] for k in rng.choice(3, size=m, p=[0.5, 0.3, 0.2]))
    b = rng.integers(-10, 20, size=m)
    lo = np.where(rng.random(n) < 0.8, 0.0, np.where(rng.random(n) < 0.5, -3.0, -np.inf))
    hi = np.where(rng.random(n) < 0.5, np.inf, np.where(np.isinf(lo), np.inf, lo + rng.integers(1, 10, size=n)))
    hi = np.where(np.isinf(lo) & (rng.random(n) < 0.5), 4.0, hi)
    return MilpProblem(
        c.astype(float), lo, hi.astype(float), ("continuous",) * n, A.astype(float), senses,
        b.astype(float), tuple(f"x{i}" for i in range(n)), tuple(f"r{i}" for i in range(m)),
    )


def random_facility_case(rng: np.random.Generator, *, max_sites: int = 8, max_customers: int = 25,
                         single_source: bool | None = None, side: bool | None = None,
                         fixed_costs: bool = False) -> FacilityCase:
    y = int(rng.integers(2, max_sites + 1))
    x = int(rng.integers(2, max_customers + 1))
    L = int(rng.integers(1, min(4, y) + 1))
    cs = random_customers(rng, x)
    ss = random_sites(rng, y)
    if fixed_costs:
        ss = [Site(s.id, s.point, s.state, s.status, float(rng.integers(0, 5000))) for s in ss]
    D = distance_matrix([c.point for c in cs], [s.point for s in ss])
    single = bool(rng.random() < 0.5) if single_source is None else single_source
    with_side = bool(rng.random() < 0.5) if side is None else side
    mad = mpct = radius = None
    if with_side:
        wad0 = float(np.mean(D.min(axis=1)))
        if rng.random() < 0.6:
            mad = wad0 * float(rng.uniform(1.0, 2.5))
        if rng.random() < 0.6:
            radius = float(np.quantile(D, 0.3))
            mpct = float(rng.uniform(0.3, 0.9))
    mode = "exact" if rng.random() < 0.7 else "at_most"
    return FacilityCase(cs, ss, Scenario(L, mode, mad, mpct, radius, single), D)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)

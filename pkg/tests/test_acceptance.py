"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible
without ``-s``) and then asserts the same condition.
"""

import csv
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from cogopt.cog import cog_cost, gradient, weiszfeld
from cogopt.formulation import build
from cogopt.geo import GeoPoint, distance_matrix, pair_distance
from cogopt.lp import solve_lp
from cogopt.bnb import solve_milp
from cogopt.model import Customer, Scenario, Solution, StateAttr
from cogopt.pipeline import StepWellConfig, compare, solve_on, step_well_stage1
from cogopt.reduction import build_packets, cls_scores, packet_distances, packet_exact_distance
from cogopt.synthetic import multi_state_network, random_customers, random_sites

from conftest import FIXTURES, random_facility_case, random_lp
from oracles import facility_subset_oracle, textbook_simplex, weighted_average_distance


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


# ------------------------------------------------------------------ 1

def test_criterion_01_bnb_matches_subset_oracle(report):
    rng = np.random.default_rng(101)
    worst, n_inf, n_cases = 0.0, 0, 250
    kinds = set()
    t0 = time.perf_counter()
    for k in range(n_cases):
        single, side = bool(k % 2), bool((k // 2) % 2)
        case = random_facility_case(rng, single_source=single, side=side)
        sc = case.scenario
        kinds.add((sc.single_source, sc.mad_limit is not None or sc.mpct_fraction is not None))
        res = solve_milp(build(case.customers, case.sites, sc, case.distances))
        ob, _ = facility_subset_oracle([c.demand for c in case.customers], case.distances,
                                       np.zeros(len(case.sites)), sc.warehouse_limit, sc.cardinality_mode,
                                       sc.mad_limit, sc.mpct_fraction, sc.mpct_radius, sc.single_source)
        if np.isinf(ob):
            n_inf += 1
            err = 0.0 if res.status == "infeasible" else math.inf
        else:
            err = abs(res.objective - ob) / max(1.0, abs(ob)) if res.status == "optimal" else math.inf
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60 and len(kinds) == 4
    report(1, ok, f"{n_cases} instances ({n_inf} infeasible), worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_02_lp_matches_textbook_simplex(report):
    rng = np.random.default_rng(202)
    worst, mismatched = 0.0, []
    counts = {"optimal": 0, "infeasible": 0, "unbounded": 0}
    for k in range(150):
        P = random_lp(rng)
        st, obj = textbook_simplex(P.objective, P.A.toarray(), P.senses, P.rhs, P.lower, P.upper)
        sol = solve_lp(P)
        counts[st] += 1
        if sol.status != st:
            mismatched.append(k)
        elif st == "optimal":
            worst = max(worst, abs(sol.objective - float(obj)) / max(1.0, abs(float(obj))))
    ok = not mismatched and worst <= 1e-7 and all(counts.values())
    report(2, ok, f"150 LPs {counts}, status mismatches {len(mismatched)}, worst rel err {worst:.2e}")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_03_gradient_matches_central_differences(report):
    rng = np.random.default_rng(303)
    worst, done, h = 0.0, 0, 1e-6
    while done < 100:
        n = int(rng.integers(2, 15))
        cs = [Customer(f"c{i}", GeoPoint(float(a), float(o)), float(w)) for i, (a, o, w) in
              enumerate(zip(rng.uniform(30, 47, n), rng.uniform(-95, -68, n), rng.uniform(0.1, 100, n)))]
        p = GeoPoint(float(rng.uniform(30, 47)), float(rng.uniform(-95, -68)))
        if min(math.hypot(p.lat - c.point.lat, p.lon - c.point.lon) for c in cs) < 0.05:
            continue
        ref = float(rng.uniform(25, 50))
        k = math.cos(math.radians(ref))

        def f(dx, dy):
            return cog_cost(GeoPoint(p.lat + dy, p.lon + dx / k), cs, ref_lat=ref)

        fd = np.array([(f(h, 0) - f(-h, 0)) / (2 * h), (f(0, h) - f(0, -h)) / (2 * h)])
        g = np.array(gradient(p, cs, ref_lat=ref))
        worst = max(worst, float(np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))))
        done += 1
    ok = worst <= 1e-4
    report(3, ok, f"100 configurations, worst rel err {worst:.2e}")
    assert ok


# ------------------------------------------------------------------ 4

def test_criterion_04_weiszfeld(report):
    angles = (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3)
    tri = [Customer(f"t{i}", GeoPoint(math.sin(a), math.cos(a)), 1.0) for i, a in enumerate(angles)]
    res = weiszfeld(tri, tol=1e-10, ref_lat=0.0)
    tri_err = max(abs(res.point.lat), abs(res.point.lon))

    rng = np.random.default_rng(404)
    majority_ok = True
    for _ in range(30):
        n = int(rng.integers(2, 8))
        cs = [Customer(f"m{i}", GeoPoint(float(a), float(o)), float(w)) for i, (a, o, w) in
              enumerate(zip(rng.uniform(35, 45, n), rng.uniform(-85, -72, n), rng.uniform(1, 10, n)))]
        others = sum(c.demand for c in cs)
        big = cs[int(rng.integers(n))]
        cs = [Customer(c.id, c.point, others if c is big else c.demand) for c in cs]
        r = weiszfeld(cs)
        majority_ok &= r.point == big.point and r.at_demand_point

    histories = [res.history]
    for seed in range(60):
        g = np.random.default_rng(seed)
        n = int(g.integers(2, 40))
        cs = [Customer(f"r{i}", GeoPoint(float(a), float(o)), float(w)) for i, (a, o, w) in
              enumerate(zip(g.uniform(25, 48, n), g.uniform(-120, -70, n), g.integers(1, 500, n)))]
        histories.append(weiszfeld(cs).history)
    monotone = all(b <= a * (1 + 1e-12) for h in histories for a, b in zip(h, h[1:]))
    ok = tri_err <= 1e-6 and majority_ok and monotone
    report(4, ok, f"triangle err {tri_err:.1e} deg, majority {majority_ok}, "
                  f"monotone over {len(histories)} runs {monotone}")
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_05_packets(report):
    rng = np.random.default_rng(505)
    identity_ok, worst_exact, bound_ok = True, 0.0, True
    for _ in range(100):
        n = int(rng.integers(8, 30))
        cs = random_customers(rng, n, spread=1.0)
        ss = random_sites(rng, int(rng.integers(2, 6)), spread=1.0)
        sc = Scenario(int(rng.integers(1, min(3, len(ss)) + 1)))
        D = distance_matrix([c.point for c in cs], [s.point for s in ss])
        raw, _ = solve_on(cs, ss, sc, D)

        ident = build_packets(cs, target_count=n)
        for exact in (True, False):
            Dp = packet_distances(ident, cs, ss, exact=exact)
            sol, _ = solve_on([p.as_customer() for p in ident], ss, sc, Dp)
            identity_ok &= sol.objective == raw.objective

        packets = build_packets(cs, target_count=int(rng.integers(2, n)), seed=int(rng.integers(10_000)))
        idx = {c.id: i for i, c in enumerate(cs)}
        for p in packets:
            for j in range(len(ss)):
                d = [D[idx[m], j] for m in p.member_ids]
                want = math.fsum(w * x for w, x in zip(p.member_demands, d))
                got = p.demand * packet_exact_distance(p, ss[j], d)
                worst_exact = max(worst_exact, abs(got - want) / max(abs(want), 1e-300))
        agg, _ = solve_on([p.as_customer() for p in packets], ss, sc, packet_distances(packets, cs, ss, exact=False))
        bound = math.fsum(cs[idx[m]].demand * pair_distance(cs[idx[m]].point, p.point)
                          for p in packets for m in p.member_ids)
        bound_ok &= abs(agg.objective - raw.objective) <= bound * (1 + 1e-12) + 1e-9
    ok = identity_ok and worst_exact <= 1e-12 and bound_ok
    report(5, ok, f"100 instances, identity exact {identity_ok}, worst packet rel err {worst_exact:.1e}, "
                  f"triangle bound {bound_ok}")
    assert ok


# ------------------------------------------------------------------ 6

def test_criterion_06_stage_one_independent_of_customer_count(report):
    sc = Scenario(3)
    cfg = StepWellConfig(packet_target=150, seed=7)
    stats = {}
    for n in (900, 1800):
        cs, states = multi_state_network(7, n, 3)
        runs = [step_well_stage1(cs, states, [], sc, cfg) for _ in range(2)]
        stats[n] = (runs[0].num_vars, min(r.solve_time for r in runs), runs[0].solution.solver_status)
    (v1, t1, s1), (v2, t2, s2) = stats[900], stats[1800]
    ok = v1 == v2 and t2 <= 2 * t1 and s1 == s2 == "optimal"
    report(6, ok, f"vars {v1} vs {v2}, stage-1 solve {t1:.2f}s vs {t2:.2f}s (ratio {t2 / t1:.2f})")
    assert ok


# ------------------------------------------------------------------ 7

def _random_solution(rng, cs, ss):
    opened = [s.id for s in ss if rng.random() < 0.5] or [ss[0].id]
    flows = {}
    for c in cs:
        picks = rng.choice(opened, size=min(len(opened), int(rng.integers(1, 3))), replace=False)
        shares = rng.dirichlet(np.ones(len(picks)))
        for sid, w in zip(picks, shares):
            flows[(c.id, str(sid))] = float(c.demand * w)
    return Solution(frozenset(opened), flows, 0.0, 0.0, 0.0, 0.0, None, "feasible")


def test_criterion_07_compare_matches_independent_evaluator(report):
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(100):
        cs = random_customers(rng, int(rng.integers(3, 40)), spread=3.0)
        ss = random_sites(rng, int(rng.integers(2, 8)), spread=3.0)
        a, b = _random_solution(rng, cs, ss), _random_solution(rng, cs, ss)
        res = compare(a, b, cs, ss)
        cxy = {c.id: (c.point.lat, c.point.lon) for c in cs}
        sxy = {s.id: (s.point.lat, s.point.lon) for s in ss}
        dem = {c.id: c.demand for c in cs}
        wa = weighted_average_distance(a.flows, cxy, sxy, dem)
        wb = weighted_average_distance(b.flows, cxy, sxy, dem)
        for got, want in ((res.wad_a, wa), (res.wad_b, wb), (res.wad_diff_miles, abs(wa - wb))):
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    ok = worst <= 1e-9
    report(7, ok, f"100 solution pairs, worst rel err {worst:.2e}")
    assert ok


# ------------------------------------------------------------------ 8

def test_criterion_08_cls_invariants(report):
    rng = np.random.default_rng(808)
    sums_ok = floor_ok = cbrt_ok = perm_ok = True
    worst = 0.0
    for k in range(60):
        cs, states = multi_state_network(k, int(rng.integers(20, 120)), int(rng.integers(1, 7)))
        states = [StateAttr(s.name, float(rng.uniform(1_000, 200_000))) for s in states]
        existing = random_sites(rng, int(rng.integers(0, 4)), center=(39.0, -78.0), spread=3.0,
                                status="existing_open")
        total = int(rng.integers(len(states), 40))
        recs = cls_scores(states, cs, existing, total)
        sums_ok &= sum(r.allocation for r in recs) == total
        floor_ok &= all(r.allocation >= 1 for r in recs)
        for r in recs:
            err = abs(r.cls_score - (r.a_score * r.p_score * r.d_score) ** (1 / 3)) / r.cls_score
            worst = max(worst, err)
        order = rng.permutation(len(states))
        perm = cls_scores([states[i] for i in order], [cs[i] for i in rng.permutation(len(cs))], existing, total)
        perm_ok &= {r.state: r for r in perm} == {r.state: r for r in recs}
    cbrt_ok = worst <= 1e-9
    ok = sums_ok and floor_ok and cbrt_ok and perm_ok
    report(8, ok, f"60 cases, exact sum {sums_ok}, floor 1 {floor_ok}, cbrt err {worst:.1e}, "
                  f"permutation invariant {perm_ok}")
    assert ok


# ------------------------------------------------------------------ 9

E2E = FIXTURES / "e2e"
TINY = FIXTURES / "tiny"


def _cli_runs(out: Path) -> list[list[str]]:
    data = ["--demand", str(E2E / "demand.csv"), "--warehouses", str(E2E / "warehouses.csv")]
    batch = out.parent / "batch.csv"
    return [
        ["solve", *data, "--scenario", str(E2E / "scenario.txt"), "--out", str(out / "solve"),
         "--node-log", str(out / "solve" / "nodes.log"), "--lp-file", str(out / "solve" / "model.lp")],
        ["stepwell", *data, "--states", str(E2E / "states.csv"), "--scenario", str(E2E / "scenario.txt"),
         "--packet-target", "20", "--coarse", "6", "--fine", "2", "--out", str(out / "stepwell")],
        ["cls", *data, "--states", str(E2E / "states.csv"), "--total", "9", "--out", str(out / "cls")],
        ["packets", "--demand", str(E2E / "demand.csv"), "--packet-target", "12", "--out", str(out / "pk")],
        ["packets", "--demand", str(E2E / "demand.csv"), "--radius", "30", "--out", str(out / "pr")],
        ["cog", "--demand", str(E2E / "demand.csv"), "--out", str(out / "cog")],
        ["scenario", *data, "--scenario", str(E2E / "scenario.txt"), "--batch", str(batch), "--jobs", "3",
         "--out", str(out / "batch")],
        ["compare", str(out / "solve"), str(out / "stepwell"), *data, "--out", str(out / "cmp")],
    ]


def test_criterion_09_cli_is_deterministic(report, tmp_path):
    (tmp_path / "batch.csv").write_text("name,demand_scale,warehouse_limit,forced_open,forced_closed\n"
                                        "a,,,,\nb,1.5,2,,\nc,,,W2,W1\n")
    snapshots = []
    for run, hashseed in (("r1", "1"), ("r2", "2")):
        out = tmp_path / run
        env = dict(os.environ, PYTHONHASHSEED=hashseed)
        stdout = []
        for argv in _cli_runs(out):
            p = subprocess.run([sys.executable, "-m", "cogopt.cli", *argv, "--seed", "42"],
                               capture_output=True, env=env)
            stdout.append((argv[0], p.returncode, p.stdout))
        files = {str(f.relative_to(out)): f.read_bytes() for f in sorted(out.rglob("*")) if f.is_file()}
        snapshots.append((stdout, files))
    (out1, files1), (out2, files2) = snapshots
    codes = [rc for _, rc, _ in out1]
    same_files = files1 == files2
    same_out = out1 == out2
    ok = same_files and same_out and codes == [0] * len(codes)
    report(9, ok, f"{len(out1)} invocations over 7 subcommands, {len(files1)} files, "
                  f"byte-identical files {same_files} and stdout {same_out}, exit codes {codes}")
    assert ok


# ------------------------------------------------------------------ 10

def _summary(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _same_6dp(a: list[list[str]], b: list[list[str]]) -> bool:
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            if x == y:
                continue
            try:
                if abs(float(x) - float(y)) >= 5e-7:
                    return False
            except ValueError:
                return False
    return True


def test_criterion_10_end_to_end_fixture(report, tmp_path):
    data = ["--demand", str(E2E / "demand.csv"), "--warehouses", str(E2E / "warehouses.csv"),
            "--scenario", str(E2E / "scenario.txt")]
    flat = subprocess.run([sys.executable, "-m", "cogopt.cli", "solve", *data, "--out", str(tmp_path / "flat")],
                          capture_output=True)
    sw = subprocess.run([sys.executable, "-m", "cogopt.cli", "stepwell", *data, "--states", str(E2E / "states.csv"),
                         "--given-candidates", "--packet-target", "20", "--out", str(tmp_path / "sw")],
                        capture_output=True)
    flat_rows = _summary(tmp_path / "flat" / "summary.csv")
    sw_rows = _summary(tmp_path / "sw" / "summary.csv")
    flat_open = sorted(r[1] for r in flat_rows if r[0] == "opened_site")
    sw_open = sorted(r[1] for r in sw_rows if r[0] == "opened_site")
    golden_ok = _same_6dp(flat_rows, _summary(E2E / "golden_summary.csv"))
    ok = flat.returncode == sw.returncode == 0 and flat_open == sw_open and golden_ok
    report(10, ok, f"flat opened {flat_open}, step-well opened {sw_open}, golden summary match {golden_ok}")
    assert ok

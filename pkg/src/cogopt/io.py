"""CSV and scenario-file ingestion, and solution export.

Column names are exact and case-sensitive. CSV files carry coordinates as
named ``latitude``/``longitude`` columns; GeoJSON output uses the format's
mandatory ``[longitude, latitude]`` order.

Readers validate every row before returning and raise one
:class:`InputError` listing all problems. Each message names the file,
the line number (header is line 1) and the field.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .geo import GeoPoint, pair_distance
from .model import Customer, ModelError, Scenario, Site, Solution, StateAttr, evaluate
from .reduction import ClsRecord, Packet

DEMAND_COLUMNS = ("id", "state", "demand", "demand_latitude", "demand_longitude")
WAREHOUSE_COLUMNS = ("id", "state", "latitude", "longitude", "status")
STATE_COLUMNS = ("state", "area_sq_miles")
FLOW_COLUMNS = ("customer_id", "site_id", "flow", "distance_miles")
SUMMARY_COLUMNS = ("key", "value", "latitude", "longitude")

STATUS_TOKENS = {
    "open": "existing_open",
    "closed": "existing_closed",
    "candidate": "greenfield_candidate",
}

SCENARIO_KEYS = (
    "warehouse_limit", "cardinality_mode", "mad_limit", "mpct_fraction", "mpct_radius",
    "single_source", "forced_open", "forced_closed", "metric", "seed", "strict_demand",
)


class InputError(ValueError):
    """One or more problems in an input file."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        head = self.errors[0] if len(self.errors) == 1 else f"{len(self.errors)} input errors"
        body = "" if len(self.errors) == 1 else "\n  " + "\n  ".join(self.errors)
        super().__init__(head + body)


@dataclass(frozen=True)
class Dataset:
    customers: list[Customer]
    sites: list[Site]
    states: list[StateAttr]


def _rows(path: Path, required: Sequence[str]) -> Iterable[tuple[int, dict[str, str]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError([f"{path}: cannot read ({exc.strerror})"]) from exc
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError([f"{path}: line 1: missing column(s) {', '.join(missing)}"])
        reader.fieldnames = header
        for row in reader:
            # line_num is the reader's physical line, so multi-line quoted fields stay correct
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items() if k is not None}


class _Collector:
    def __init__(self, path: Path):
        self.path = path
        self.errors: list[str] = []

    def add(self, line: int, field: str, msg: str) -> None:
        self.errors.append(f"{self.path}: line {line}: field '{field}': {msg}")

    def number(self, line: int, row: dict[str, str], field: str,
               check: Callable[[float], bool] = math.isfinite, rule: str = "a finite number") -> float | None:
        raw = row.get(field, "")
        try:
            v = float(raw)
        except ValueError:
            self.add(line, field, f"expected a number, got {raw!r}")
            return None
        if not (math.isfinite(v) and check(v)):
            self.add(line, field, f"must be {rule}, got {raw!r}")
            return None
        return v

    def text(self, line: int, row: dict[str, str], field: str) -> str | None:
        v = row.get(field, "")
        if not v:
            self.add(line, field, "empty value")
            return None
        return v

    def unique(self, line: int, field: str, value: str | None, seen: dict[str, int]) -> None:
        if value is None:
            return
        if value in seen:
            self.add(line, field, f"duplicate id {value!r} (first on line {seen[value]})")
        else:
            seen[value] = line

    def done(self) -> None:
        if self.errors:
            raise InputError(self.errors)


def _lat(c: _Collector, line: int, row: dict[str, str], field: str) -> float | None:
    return c.number(line, row, field, lambda v: -90 <= v <= 90, "a latitude in [-90, 90]")


def _lon(c: _Collector, line: int, row: dict[str, str], field: str) -> float | None:
    return c.number(line, row, field, lambda v: -180 <= v <= 180, "a longitude in [-180, 180]")


def read_demand_csv(path: str | Path) -> list[Customer]:
    """Customers from ``id,state,demand,demand_latitude,demand_longitude``."""
    path = Path(path)
    c = _Collector(path)
    seen: dict[str, int] = {}
    out = []
    for line, row in _rows(path, DEMAND_COLUMNS):
        cid = c.text(line, row, "id")
        c.unique(line, "id", cid, seen)
        state = row.get("state", "")
        dem = c.number(line, row, "demand", lambda v: v >= 0, "a number >= 0")
        lat = _lat(c, line, row, "demand_latitude")
        lon = _lon(c, line, row, "demand_longitude")
        if None not in (cid, dem, lat, lon):
            out.append(Customer(cid, GeoPoint(lat, lon), dem, state))
    c.done()
    return out


def read_warehouse_csv(path: str | Path) -> list[Site]:
    """Sites from ``id,state,latitude,longitude,status[,fixed_cost]``.

    ``status`` is ``open``, ``closed`` or ``candidate``; a missing
    ``fixed_cost`` column means zero for every site.
    """
    path = Path(path)
    c = _Collector(path)
    seen: dict[str, int] = {}
    out = []
    for line, row in _rows(path, WAREHOUSE_COLUMNS):
        sid = c.text(line, row, "id")
        c.unique(line, "id", sid, seen)
        lat = _lat(c, line, row, "latitude")
        lon = _lon(c, line, row, "longitude")
        token = row.get("status", "").lower()
        status = STATUS_TOKENS.get(token)
        if status is None:
            c.add(line, "status", f"unknown status {row.get('status', '')!r} (expected one of {', '.join(STATUS_TOKENS)})")
        fc: float | None = 0.0
        if row.get("fixed_cost", ""):
            fc = c.number(line, row, "fixed_cost", lambda v: v >= 0, "a number >= 0")
        if None not in (sid, lat, lon, status, fc):
            out.append(Site(sid, GeoPoint(lat, lon), row.get("state", ""), status, fc))
    c.done()
    return out


def read_states_csv(path: str | Path) -> list[StateAttr]:
    """State areas from ``state,area_sq_miles``."""
    path = Path(path)
    c = _Collector(path)
    seen: dict[str, int] = {}
    out = []
    for line, row in _rows(path, STATE_COLUMNS):
        name = c.text(line, row, "state")
        c.unique(line, "state", name, seen)
        area = c.number(line, row, "area_sq_miles", lambda v: v > 0, "a number > 0")
        if name is not None and area is not None:
            out.append(StateAttr(name, area))
    c.done()
    return out


def read_dataset(
    demand: str | Path,
    warehouses: str | Path | None = None,
    states: str | Path | None = None,
) -> Dataset:
    """Read and cross-check the input files.

    Ids must be unique across the demand and warehouse files. When a states
    file is given, every customer and site state must appear in it.
    """
    customers = read_demand_csv(demand)
    sites = read_warehouse_csv(warehouses) if warehouses is not None else []
    attrs = read_states_csv(states) if states is not None else []
    errors = []
    cids = {c.id for c in customers}
    for s in sites:
        if s.id in cids:
            errors.append(f"{warehouses}: field 'id': site id {s.id!r} duplicates a customer id in {demand}")
    if states is not None:
        known = {a.name for a in attrs}
        for label, path, items in (("customer", demand, customers), ("site", warehouses, sites)):
            bad = sorted({x.state for x in items if x.state not in known})
            if bad:
                errors.append(f"{path}: field 'state': {label} state(s) {', '.join(map(repr, bad))} not in {states}")
    if errors:
        raise InputError(errors)
    return Dataset(customers, sites, attrs)


def _parse_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {v!r}")


def _parse_ids(v: str) -> frozenset[str]:
    return frozenset(s.strip() for s in v.split(",") if s.strip())


_SCENARIO_PARSERS: dict[str, Callable[[str], object]] = {
    "warehouse_limit": int,
    "cardinality_mode": str,
    "mad_limit": float,
    "mpct_fraction": float,
    "mpct_radius": float,
    "single_source": _parse_bool,
    "forced_open": _parse_ids,
    "forced_closed": _parse_ids,
    "metric": str,
    "seed": int,
    "strict_demand": _parse_bool,
}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Scenario from ``key = value`` lines; ``#`` starts a comment.

    Absent keys keep their defaults. Site ids in ``forced_open`` and
    ``forced_closed`` are comma separated and checked only when the scenario
    is bound to a site list.
    """
    errors = []
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}: line {n}: expected key = value, got {line!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _SCENARIO_PARSERS:
            errors.append(f"{source}: line {n}: field '{key}': unknown key")
            continue
        if key in lines:
            errors.append(f"{source}: line {n}: field '{key}': repeated (first on line {lines[key]})")
            continue
        lines[key] = n
        try:
            values[key] = _SCENARIO_PARSERS[key](val)
        except ValueError as exc:
            errors.append(f"{source}: line {n}: field '{key}': {exc}")
    if errors:
        raise InputError(errors)
    try:
        return Scenario(**values)
    except ModelError as exc:
        raise InputError([f"{source}: {exc}"]) from exc


def read_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError([f"{path}: cannot read ({exc.strerror})"]) from exc
    return parse_scenario(text, str(path))


def bind_scenario(scenario: Scenario, sites: Sequence[Site], source: str = "scenario") -> None:
    """Check that forced site ids exist in ``sites``."""
    ids = {s.id for s in sites}
    errors = [
        f"{source}: field '{key}': unknown site id {sid!r}"
        for key in ("forced_open", "forced_closed")
        for sid in sorted(getattr(scenario, key) - ids)
    ]
    if errors:
        raise InputError(errors)


# ---------------------------------------------------------------- export

def _num(v: float | None) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _prepare(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory ({exc.strerror})") from exc
    return out


def write_solution(
    solution: Solution,
    customers: Sequence[Customer],
    sites: Sequence[Site],
    scenario: Scenario,
    out_dir: str | Path,
    extra: dict[str, object] | None = None,
) -> dict[str, Path]:
    """Write ``summary.csv``, ``flows.csv`` and ``network.geojson``.

    Metrics are recomputed with :func:`evaluate` so the files always agree
    with the data. Infeasible solutions get a summary only. ``extra`` adds
    key/value rows (after the standard ones) to the summary.
    """
    out = _prepare(out_dir)
    site_by_id = {s.id: s for s in sites}
    cust_by_id = {c.id: c for c in customers}
    has_flows = solution.solver_status != "infeasible" and bool(solution.flows)
    ev = evaluate(solution, customers, sites, scenario) if has_flows else None

    rows: list[list[object]] = [
        ["status", solution.solver_status, "", ""],
        ["objective", _num(ev.objective) if ev else "", "", ""],
        ["transport_cost", _num(ev.transport_cost) if ev else "", "", ""],
        ["fixed_cost", _num(ev.fixed_cost) if ev else "", "", ""],
        ["wad", _num(ev.wad) if ev else "", "", ""],
        ["pct_within", _num(ev.pct_within) if ev else "", "", ""],
        ["bound", _num(solution.bound), "", ""],
        ["nodes_explored", solution.nodes_explored, "", ""],
        ["warehouse_limit", scenario.warehouse_limit, "", ""],
        ["metric", scenario.metric, "", ""],
        ["seed", scenario.seed, "", ""],
    ]
    for k, v in (extra or {}).items():
        rows.append([k, _num(v) if isinstance(v, float) else v, "", ""])
    for sid in sorted(solution.opened):
        p = site_by_id[sid].point
        rows.append(["opened_site", sid, _num(p.lat), _num(p.lon)])
    paths = {"summary": out / "summary.csv"}
    _write_csv(paths["summary"], SUMMARY_COLUMNS, rows)

    stale = out / "flows.csv"
    if not has_flows:
        if stale.exists():
            stale.unlink()
        return paths

    flows = sorted((k, f) for k, f in solution.flows.items() if f > 0)
    paths["flows"] = stale
    _write_csv(stale, FLOW_COLUMNS, (
        [cid, sid, _num(f), _num(pair_distance(cust_by_id[cid].point, site_by_id[sid].point, scenario.metric))]
        for (cid, sid), f in flows
    ))

    served: dict[str, float] = {}
    for (_, sid), f in flows:
        served[sid] = served.get(sid, 0.0) + f
    features = []
    for c in customers:
        features.append(_feature("Point", [c.point.lon, c.point.lat],
                                 {"id": c.id, "role": "customer", "demand": c.demand, "opened": None}))
    for s in sites:
        features.append(_feature("Point", [s.point.lon, s.point.lat],
                                 {"id": s.id, "role": "site", "demand": served.get(s.id, 0.0),
                                  "opened": s.id in solution.opened, "status": s.status}))
    for (cid, sid), f in flows:
        a, b = cust_by_id[cid].point, site_by_id[sid].point
        features.append(_feature("LineString", [[a.lon, a.lat], [b.lon, b.lat]],
                                 {"customer_id": cid, "site_id": sid, "role": "flow", "flow": f}))
    paths["geojson"] = out / "network.geojson"
    with open(paths["geojson"], "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return paths


def _feature(kind: str, coords: list, props: dict) -> dict:
    return {"type": "Feature", "geometry": {"type": kind, "coordinates": coords}, "properties": props}


def read_flows_csv(path: str | Path) -> dict[tuple[str, str], float]:
    path = Path(path)
    c = _Collector(path)
    flows: dict[tuple[str, str], float] = {}
    for line, row in _rows(path, FLOW_COLUMNS):
        cid = c.text(line, row, "customer_id")
        sid = c.text(line, row, "site_id")
        f = c.number(line, row, "flow", lambda v: v >= 0, "a number >= 0")
        if None not in (cid, sid, f):
            flows[(cid, sid)] = flows.get((cid, sid), 0.0) + f
    c.done()
    return flows


def read_summary_csv(path: str | Path) -> tuple[dict[str, str], list[str]]:
    """Scalar rows as a dict, plus the opened site ids."""
    path = Path(path)
    scalars: dict[str, str] = {}
    opened = []
    for _, row in _rows(path, SUMMARY_COLUMNS):
        if row["key"] == "opened_site":
            opened.append(row["value"])
        else:
            scalars[row["key"]] = row["value"]
    return scalars, opened


def read_solution_dir(path: str | Path) -> Solution:
    """Rebuild a :class:`Solution` from a directory written by :func:`write_solution`."""
    path = Path(path)
    scalars, opened = read_summary_csv(path / "summary.csv")
    flows_path = path / "flows.csv"
    flows = read_flows_csv(flows_path) if flows_path.exists() else {}

    def num(key: str) -> float:
        v = scalars.get(key, "")
        return float(v) if v else math.nan

    try:
        return Solution(
            opened=frozenset(opened),
            flows=flows,
            objective=num("objective"),
            transport_cost=num("transport_cost"),
            fixed_cost=num("fixed_cost"),
            wad=num("wad"),
            pct_within=None if not scalars.get("pct_within") else num("pct_within"),
            solver_status=scalars.get("status", ""),
            bound=None if not scalars.get("bound") else num("bound"),
            nodes_explored=int(scalars.get("nodes_explored") or 0),
        )
    except ModelError as exc:
        raise InputError([f"{path / 'summary.csv'}: field 'status': {exc}"]) from exc


def write_packets_csv(packets: Sequence[Packet], out_dir: str | Path) -> dict[str, Path]:
    """``packets.csv`` (one row per packet) and ``packet_members.csv``."""
    out = _prepare(out_dir)
    paths = {"packets": out / "packets.csv", "members": out / "packet_members.csv"}
    _write_csv(paths["packets"], ("packet_id", "state", "demand", "latitude", "longitude", "members"), (
        [p.id, p.state, _num(p.demand), _num(p.point.lat), _num(p.point.lon), len(p.member_ids)]
        for p in packets
    ))
    _write_csv(paths["members"], ("packet_id", "customer_id", "demand"), (
        [p.id, cid, _num(d)] for p in packets for cid, d in zip(p.member_ids, p.member_demands)
    ))
    return paths


CLS_COLUMNS = ("state", "area_sq_miles", "density", "proximity_miles", "a_score", "p_score", "d_score",
               "cls", "allocation")


def write_cls_csv(records: Sequence[ClsRecord], out_dir: str | Path) -> Path:
    out = _prepare(out_dir)
    path = out / "cls.csv"
    _write_csv(path, CLS_COLUMNS, (
        [r.state, _num(r.area), _num(r.density), _num(r.proximity_miles), _num(r.a_score),
         _num(r.p_score), _num(r.d_score), _num(r.cls_score), r.allocation]
        for r in records
    ))
    return path

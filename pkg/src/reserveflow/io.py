"""File formats: grid CSV trio / JSON document, forecast and scenario CSVs,
report artifacts and the run manifest.

Column layouts are documented bit-exactly in docs/formats.md.  Floats are
written with repr so every file round-trips to the same binary values.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .forecast import ScenarioSet
from .grid import Generator, GridModel, Line, Node


class FileFormatError(ValueError):
    """Malformed input file; the message carries file and row context."""


def _open_rows(path: Path, required: tuple[str, ...]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FileFormatError(f"{path}: missing columns {missing}")
        yield from ((i + 2, row) for i, row in enumerate(reader))


def _parse_float(path, rownum, row, col):
    raw = (row.get(col) or "").strip()
    try:
        return float(raw)
    except ValueError as exc:
        raise FileFormatError(
            f"{path}:{rownum}: bad numeric value {raw!r} in column {col!r}"
        ) from exc


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def load_grid_csv(nodes_path, lines_path, generators_path,
                  slack_bus: str | None = None) -> GridModel:
    nodes_path, lines_path, generators_path = (
        Path(nodes_path), Path(lines_path), Path(generators_path))
    nodes = []
    for rownum, row in _open_rows(nodes_path, ("node_id",)):
        nid = row["node_id"].strip()
        if not nid:
            raise FileFormatError(f"{nodes_path}:{rownum}: empty node_id")
        nodes.append(Node(id=nid, zone=(row.get("zone") or "1").strip() or "1"))
    node_ids = {n.id for n in nodes}

    lines = []
    for rownum, row in _open_rows(
            lines_path, ("line_id", "from_node", "to_node", "reactance_pu",
                         "f_max_mw")):
        frm, to = row["from_node"].strip(), row["to_node"].strip()
        for end in (frm, to):
            if end not in node_ids:
                raise FileFormatError(
                    f"{lines_path}:{rownum}: unknown node {end!r}")
        lines.append(Line(
            id=row["line_id"].strip(), from_node=frm, to_node=to,
            reactance=_parse_float(lines_path, rownum, row, "reactance_pu"),
            f_max=_parse_float(lines_path, rownum, row, "f_max_mw")))

    gens = []
    for rownum, row in _open_rows(
            generators_path,
            ("gen_id", "node_id", "p_min_mw", "p_max_mw",
             "cost_energy_per_mwh", "cost_reserve_up_per_mw",
             "cost_reserve_down_per_mw")):
        nid = row["node_id"].strip()
        if nid not in node_ids:
            raise FileFormatError(
                f"{generators_path}:{rownum}: unknown node {nid!r}")
        gens.append(Generator(
            id=row["gen_id"].strip(), node=nid,
            p_min=_parse_float(generators_path, rownum, row, "p_min_mw"),
            p_max=_parse_float(generators_path, rownum, row, "p_max_mw"),
            cost_energy=_parse_float(generators_path, rownum, row,
                                     "cost_energy_per_mwh"),
            cost_res_up=_parse_float(generators_path, rownum, row,
                                     "cost_reserve_up_per_mw"),
            cost_res_down=_parse_float(generators_path, rownum, row,
                                       "cost_reserve_down_per_mw")))
    return GridModel(nodes, lines, gens, slack_bus=slack_bus)


def save_grid_csv(grid: GridModel, nodes_path, lines_path, generators_path):
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "zone"])
        for n in grid.nodes:
            w.writerow([n.id, n.zone])
    with open(lines_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "from_node", "to_node", "reactance_pu",
                    "f_max_mw"])
        for ln in grid.lines:
            w.writerow([ln.id, ln.from_node, ln.to_node, repr(ln.reactance),
                        repr(ln.f_max)])
    with open(generators_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gen_id", "node_id", "p_min_mw", "p_max_mw",
                    "cost_energy_per_mwh", "cost_reserve_up_per_mw",
                    "cost_reserve_down_per_mw"])
        for g in grid.generators:
            w.writerow([g.id, g.node, repr(g.p_min), repr(g.p_max),
                        repr(g.cost_energy), repr(g.cost_res_up),
                        repr(g.cost_res_down)])


def load_grid_json(path) -> GridModel:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        nodes = [Node(id=str(n["id"]), zone=str(n.get("zone", "1")))
                 for n in doc["nodes"]]
        lines = [Line(id=str(l["id"]), from_node=str(l["from_node"]),
                      to_node=str(l["to_node"]),
                      reactance=float(l["reactance_pu"]),
                      f_max=float(l["f_max_mw"]))
                 for l in doc["lines"]]
        gens = [Generator(id=str(g["id"]), node=str(g["node_id"]),
                          p_min=float(g["p_min_mw"]),
                          p_max=float(g["p_max_mw"]),
                          cost_energy=float(g["cost_energy_per_mwh"]),
                          cost_res_up=float(g["cost_reserve_up_per_mw"]),
                          cost_res_down=float(g["cost_reserve_down_per_mw"]))
                for g in doc["generators"]]
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"{path}: malformed grid document: {exc}") from exc
    return GridModel(nodes, lines, gens, slack_bus=doc.get("slack_bus"))


def save_grid_json(grid: GridModel, path) -> None:
    doc = {
        "nodes": [{"id": n.id, "zone": n.zone} for n in grid.nodes],
        "lines": [{"id": l.id, "from_node": l.from_node, "to_node": l.to_node,
                   "reactance_pu": l.reactance, "f_max_mw": l.f_max}
                  for l in grid.lines],
        "generators": [{"id": g.id, "node_id": g.node, "p_min_mw": g.p_min,
                        "p_max_mw": g.p_max,
                        "cost_energy_per_mwh": g.cost_energy,
                        "cost_reserve_up_per_mw": g.cost_res_up,
                        "cost_reserve_down_per_mw": g.cost_res_down}
                       for g in grid.generators],
        "slack_bus": grid.slack_bus,
    }
    _write_json(doc, path)


# ---------------------------------------------------------------------------
# forecasts and scenarios
# ---------------------------------------------------------------------------

def load_forecast_csv(path, node_ids) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (net demand, vre forecast or None), aligned with node_ids."""
    path = Path(path)
    node_ids = tuple(node_ids)
    index = {nid: i for i, nid in enumerate(node_ids)}
    d_hat = np.zeros(len(node_ids))
    vre = np.zeros(len(node_ids))
    seen = set()
    has_vre = False
    for rownum, row in _open_rows(path, ("node_id", "net_demand_mw")):
        nid = row["node_id"].strip()
        if nid not in index:
            raise FileFormatError(f"{path}:{rownum}: unknown node {nid!r}")
        if nid in seen:
            raise FileFormatError(f"{path}:{rownum}: duplicate node {nid!r}")
        seen.add(nid)
        d_hat[index[nid]] = _parse_float(path, rownum, row, "net_demand_mw")
        if (row.get("vre_mw") or "").strip():
            has_vre = True
            vre[index[nid]] = _parse_float(path, rownum, row, "vre_mw")
    missing = [nid for nid in node_ids if nid not in seen]
    if missing:
        raise FileFormatError(f"{path}: no forecast for nodes {missing}")
    return d_hat, (vre if has_vre else None)


def save_forecast_csv(path, node_ids, d_hat, vre=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "net_demand_mw"] + (["vre_mw"] if vre is not None else []))
        for i, nid in enumerate(node_ids):
            row = [nid, repr(float(d_hat[i]))]
            if vre is not None:
                row.append(repr(float(vre[i])))
            w.writerow(row)


def load_scenario_matrix(path, node_ids) -> tuple[list[str], np.ndarray]:
    """Long-format scenario file as (scenario ids, K x n matrix).

    Absent (scenario, node) pairs mean zero error.  This low-level reader
    accepts any K >= 1 and is what deployment-scenario exports round-trip
    through.
    """
    path = Path(path)
    node_ids = tuple(node_ids)
    index = {nid: i for i, nid in enumerate(node_ids)}
    order: list[str] = []
    values: dict[str, dict[int, float]] = {}
    for rownum, row in _open_rows(path, ("scenario_id", "node_id",
                                         "error_mw")):
        sid = row["scenario_id"].strip()
        nid = row["node_id"].strip()
        if nid not in index:
            raise FileFormatError(f"{path}:{rownum}: unknown node {nid!r}")
        if sid not in values:
            values[sid] = {}
            order.append(sid)
        values[sid][index[nid]] = _parse_float(path, rownum, row, "error_mw")
    if not order:
        raise FileFormatError(f"{path}: no scenarios found")
    errors = np.zeros((len(order), len(node_ids)))
    for k, sid in enumerate(order):
        for j, v in values[sid].items():
            errors[k, j] = v
    return order, errors


def load_scenarios_csv(path, node_ids, point_forecast,
                       vre=None) -> ScenarioSet:
    """Scenario ensemble aligned with the grid (needs at least 2 rows)."""
    _, errors = load_scenario_matrix(path, node_ids)
    if errors.shape[0] < 2:
        raise FileFormatError(f"{path}: need at least 2 scenarios")
    return ScenarioSet(errors=errors,
                       point_forecast=np.asarray(point_forecast, float),
                       node_ids=tuple(node_ids),
                       vre_forecast=None if vre is None
                       else np.asarray(vre, float))


def save_scenarios_csv(path, node_ids, errors, scenario_ids=None) -> None:
    errors = np.asarray(errors, dtype=float)
    if scenario_ids is None:
        scenario_ids = [str(k) for k in range(errors.shape[0])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "node_id", "error_mw"])
        for k, sid in enumerate(scenario_ids):
            for j, nid in enumerate(node_ids):
                w.writerow([sid, nid, repr(float(errors[k, j]))])


# ---------------------------------------------------------------------------
# run artifacts
# ---------------------------------------------------------------------------

def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def write_report_json(report_dict: dict, path) -> None:
    _write_json(report_dict, path)


def write_per_hour_csv(reports, path) -> None:
    """Per-realization detail records across hours (methods interleaved)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "method", "realization", "in_set",
                    "violation_cost", "violated"])
        for rep in reports:
            for rec in rep.details:
                w.writerow([rep.label, rec.method, rec.index,
                            int(rec.in_set), repr(rec.violation_cost),
                            int(rec.violated)])


def write_plotdata(reports, grid: GridModel, outdir) -> list[Path]:
    """Bar-chart source data: per-node deployment errors, zonal stacks,
    violation summaries."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    path = outdir / "deployment_scenarios.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "method", "scenario_tag", "node_id", "error_mw"])
        for rep in reports:
            for name, m in rep.methods.items():
                if m.deployment is None:
                    continue
                for entry in m.deployment:
                    for j, nid in enumerate(grid.node_ids):
                        w.writerow([rep.label, name, entry.tag, nid,
                                    repr(float(entry.xi[j]))])
    written.append(path)

    path = outdir / "zonal_schedule.csv"
    zones = sorted({n.zone for n in grid.nodes}, key=str)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "method", "zone", "energy_mw", "reserve_up_mw",
                    "reserve_down_mw", "curtailment_mw"])
        for rep in reports:
            for name, m in rep.methods.items():
                if m.schedule is None:
                    continue
                for zone in zones:
                    in_zone = [g_i for g_i, g in enumerate(grid.generators)
                               if grid.nodes[grid.node_index[g.node]].zone == zone]
                    nodes_z = [n_i for n_i, n in enumerate(grid.nodes)
                               if n.zone == zone]
                    curt = 0.0
                    if m.schedule.curtailment is not None:
                        curt = float(m.schedule.curtailment[nodes_z].sum())
                    w.writerow([
                        rep.label, name, zone,
                        repr(float(m.schedule.p[in_zone].sum())),
                        repr(float(m.schedule.r_plus[in_zone].sum())),
                        repr(float(m.schedule.r_minus[in_zone].sum())),
                        repr(curt)])
    written.append(path)

    path = outdir / "violation_summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "method", "da_cost", "violation_pct_inside",
                    "violation_pct_outside", "avg_rt_cost_inside",
                    "n_deployment_scenarios"])
        for rep in reports:
            for name, m in rep.methods.items():
                w.writerow([rep.label, name, repr(m.da_cost),
                            repr(m.violation_pct_inside),
                            repr(m.violation_pct_outside),
                            repr(m.avg_rt_cost_inside), m.n_deployment])
    written.append(path)
    return written


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, config_echo: dict, artifacts) -> Path:
    """Manifest with config echo and sha256 of every artifact (manifest
    excluded); re-running the same config must reproduce these hashes."""
    outdir = Path(outdir)
    entries = {}
    for p in sorted(Path(a) for a in artifacts):
        entries[str(p.relative_to(outdir))] = sha256_file(p)
    manifest = {"config": config_echo, "artifacts": entries}
    path = outdir / "manifest.json"
    _write_json(manifest, path)
    return path

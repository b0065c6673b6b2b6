"""Command-line front end.

Subcommands: ``validate`` (input checks), ``run`` (experiment pipeline with
reports and figures), ``export-scenarios`` (deployment scenarios to CSV),
``sample`` (synthetic scenario generation).  Configuration comes from a
single TOML or JSON file; command-line flags override file values.

Exit codes: 0 success, 2 validation failure, 3 solver failure, 4 bad
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as rio
from .evalsim import EvalConfig, GaussianSampler, evaluate, multi_hour_run
from .forecast import build_uncertainty_set, reserve_requirements
from .grid import GridError, GridModel, susceptance_condition
from .lp import LpError, SolverOptions
from .plots import render_report_figures
from .robust import CcgConfig, ccg, extreme_scenarios, vertex_deployment_set
from .scheduling import InfeasibleScheduleError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

_METHODS = ("DSW", "EXT", "CCG", "VENUM")


class ConfigError(ValueError):
    pass


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cfg_get(cfg: dict, section: str, key: str, default=None):
    return cfg.get(section, {}).get(key, default)


def _run_settings(cfg: dict, args) -> dict:
    run = dict(cfg.get("run", {}))
    overrides = {
        "alpha": getattr(args, "alpha", None),
        "methods": getattr(args, "methods", None),
        "out_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
        "backend": getattr(args, "backend", None),
        "figures": getattr(args, "figures", None),
    }
    for key, val in overrides.items():
        if val is not None:
            run[key] = val
    run.setdefault("alpha", [0.95])
    if isinstance(run["alpha"], (int, float)):
        run["alpha"] = [float(run["alpha"])]
    run.setdefault("methods", ["DSW", "EXT", "CCG"])
    run.setdefault("c_viol", 1000.0)
    run.setdefault("m_max", 10)
    run.setdefault("adm_max_iter", 20)
    run.setdefault("eps_adm", 1e-6)
    run.setdefault("gap_tol", 1e-6)
    run.setdefault("flagged_top_k", 15)
    run.setdefault("slack_tol", 1e-6)
    run.setdefault("quantile_method", "linear")
    run.setdefault("workers", 0)
    run.setdefault("backend", "bundled")
    run.setdefault("out_dir", "out")
    run.setdefault("figures", True)
    run.setdefault("curtailment", True)
    run.setdefault("curtailment_cost", 0.0)
    run.setdefault("init_set", "extremes+lines")
    run.setdefault("venum_cap", 12)

    for a in run["alpha"]:
        if not 0.0 < float(a) < 1.0:
            raise ConfigError(f"alpha {a} outside (0, 1)")
    for m in run["methods"]:
        if m not in _METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {_METHODS}")
    if float(run["c_viol"]) <= 0:
        raise ConfigError("c_viol must be positive")
    if run["backend"] not in ("bundled", "scipy"):
        raise ConfigError(f"unknown backend {run['backend']!r}")
    if run["init_set"] not in ("extremes+lines", "extremes"):
        raise ConfigError(f"unknown init_set {run['init_set']!r}")
    return run


def _experiment_echo(run: dict) -> dict:
    """Config subset that defines the experiment (operational knobs like
    out_dir, workers and figures do not belong in report.json)."""
    keys = ("alpha", "methods", "c_viol", "m_max", "adm_max_iter", "eps_adm",
            "gap_tol", "flagged_top_k", "slack_tol", "quantile_method",
            "backend", "curtailment", "curtailment_cost", "init_set",
            "venum_cap")
    return {k: run[k] for k in keys}


def _eval_config(run: dict) -> EvalConfig:
    workers = int(run["workers"]) or (os.cpu_count() or 1)
    return EvalConfig(
        c_viol=float(run["c_viol"]),
        slack_tol=float(run["slack_tol"]),
        quantile_method=run["quantile_method"],
        ccg=CcgConfig(
            m_max=int(run["m_max"]), c_viol=float(run["c_viol"]),
            gap_tol=float(run["gap_tol"]),
            adm_max_iter=int(run["adm_max_iter"]),
            eps_adm=float(run["eps_adm"]),
            flagged_top_k=int(run["flagged_top_k"]),
            init_set=run["init_set"], venum_cap=int(run["venum_cap"]),
            curtailment_cost=float(run["curtailment_cost"])),
        solver=SolverOptions(backend=run["backend"]),
        workers=workers,
        use_curtailment=bool(run["curtailment"]))


def _load_grid(cfg: dict, base: Path) -> GridModel:
    gsec = cfg.get("grid", {})
    if "json" in gsec:
        return rio.load_grid_json(base / gsec["json"])
    for key in ("nodes", "lines", "generators"):
        if key not in gsec:
            raise ConfigError(f"[grid] section needs {key!r} (or a json path)")
    return rio.load_grid_csv(base / gsec["nodes"], base / gsec["lines"],
                             base / gsec["generators"],
                             slack_bus=gsec.get("slack_bus"))


def _build_scenarios(spec: dict, grid: GridModel, d_hat, vre, base: Path,
                     count_override=None, seed_override=None):
    """Scenario set from a file or a Gaussian sampler spec."""
    if "file" in spec:
        return rio.load_scenarios_csv(base / spec["file"], grid.node_ids,
                                      d_hat, vre), {"file": str(spec["file"])}
    if "gaussian" in spec:
        g = spec["gaussian"]
        sampler = GaussianSampler(node_ids=tuple(str(n) for n in g["nodes"]),
                                  cov=np.asarray(g["cov_pu2"], dtype=float),
                                  base_mva=float(g.get("base_mva", 100.0)),
                                  seed=int(g.get("seed", 0)))
        k = int(count_override or g.get("count", 1000))
        seed = int(seed_override if seed_override is not None
                   else g.get("seed", 0))
        scen = sampler.sample(k, grid.node_ids, d_hat, vre=vre, seed=seed)
        return scen, {"gaussian": {"nodes": list(sampler.node_ids),
                                   "count": k, "seed": seed,
                                   "base_mva": sampler.base_mva}}
    raise ConfigError("scenario spec needs a 'file' or a 'gaussian' table")


def _load_single_hour(cfg: dict, grid: GridModel, base: Path):
    fsec = cfg.get("forecast", {})
    if "file" not in fsec:
        raise ConfigError("[forecast] section needs a 'file' entry")
    d_hat, vre = rio.load_forecast_csv(base / fsec["file"], grid.node_ids)
    scen_cfg = cfg.get("scenarios", {})
    if "train" not in scen_cfg or "test" not in scen_cfg:
        raise ConfigError("[scenarios] needs 'train' and 'test' tables")
    train, train_echo = _build_scenarios(scen_cfg["train"], grid, d_hat, vre,
                                         base)
    test, test_echo = _build_scenarios(scen_cfg["test"], grid, d_hat, vre,
                                       base)
    return d_hat, vre, train, test, {"train": train_echo, "test": test_echo}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg: dict, args, base: Path) -> int:
    grid = _load_grid(cfg, base)
    cond = susceptance_condition(grid)
    print(f"grid: {grid.n_nodes} nodes, {grid.n_lines} lines, "
          f"{grid.n_gens} generators; slack bus {grid.slack_bus}")
    print(f"reduced susceptance condition number: {cond:.3e}")
    if "forecast" in cfg:
        d_hat, vre = rio.load_forecast_csv(
            base / cfg["forecast"]["file"], grid.node_ids)
        print(f"forecast: net demand {d_hat.sum():.1f} MW"
              + (f", VRE {vre.sum():.1f} MW" if vre is not None else ""))
        scen_cfg = cfg.get("scenarios", {})
        for name in ("train", "test"):
            if name in scen_cfg and "file" in scen_cfg[name]:
                scen = rio.load_scenarios_csv(
                    base / scen_cfg[name]["file"], grid.node_ids, d_hat, vre)
                print(f"{name} scenarios: {scen.n_scenarios} rows")
    print("validation clean")
    return EXIT_OK


def _run_one_alpha(grid, cfg, run, alpha, out_root, base) -> list[Path]:
    econf = _eval_config(run)
    label_dir = out_root / f"alpha_{alpha}"
    label_dir.mkdir(parents=True, exist_ok=True)
    hours_cfg = cfg.get("hours")
    if hours_cfg:
        hour_inputs = []
        from .evalsim import HourInputs
        for i, h in enumerate(hours_cfg):
            d_hat, vre = rio.load_forecast_csv(base / h["forecast"],
                                               grid.node_ids)
            train = rio.load_scenarios_csv(base / h["train"], grid.node_ids,
                                           d_hat, vre)
            test = rio.load_scenarios_csv(base / h["test"], grid.node_ids,
                                          d_hat, vre)
            hour_inputs.append(HourInputs(label=h.get("label", f"h{i:03d}"),
                                          d_hat=d_hat, train=train,
                                          test=test))
        result = multi_hour_run(grid, hour_inputs, run["methods"], alpha,
                                econf)
        reports = list(result.reports)
        report_doc = {"alpha": alpha, "config": _experiment_echo(run),
                      "aggregate": result.aggregate,
                      "hours": [r.to_dict() for r in reports]}
        train_errors = hour_inputs[0].train.errors
    else:
        d_hat, vre, train, test, scen_echo = _load_single_hour(cfg, grid,
                                                               base)
        report = evaluate(grid, d_hat, run["methods"], train, test, alpha,
                          econf, label=f"alpha-{alpha}")
        reports = [report]
        report_doc = {"alpha": alpha, "config": _experiment_echo(run),
                      "scenarios": scen_echo,
                      **report.to_dict()}
        train_errors = train.errors

    artifacts: list[Path] = []
    report_path = label_dir / "report.json"
    rio.write_report_json(report_doc, report_path)
    artifacts.append(report_path)

    per_hour = label_dir / "per_hour.csv"
    rio.write_per_hour_csv(reports, per_hour)
    artifacts.append(per_hour)
    artifacts.extend(rio.write_plotdata(reports, grid, label_dir / "plotdata"))

    for rep in reports:
        for name, m in rep.methods.items():
            if m.deployment is None or not len(m.deployment):
                continue
            path = label_dir / f"scenarios_{name}_{rep.label}.csv"
            rio.save_scenarios_csv(path, grid.node_ids,
                                   np.array([e.xi for e in m.deployment]),
                                   scenario_ids=[e.tag for e in m.deployment])
            artifacts.append(path)

    if run["figures"]:
        artifacts.extend(render_report_figures(reports[0], grid, train_errors,
                                               label_dir / "figures"))
    return artifacts


def cmd_run(cfg: dict, args, base: Path) -> int:
    run = _run_settings(cfg, args)
    grid = _load_grid(cfg, base)
    out_root = Path(run["out_dir"])
    out_root.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    for alpha in [float(a) for a in run["alpha"]]:
        artifacts.extend(_run_one_alpha(grid, cfg, run, alpha, out_root,
                                        base))
    manifest = rio.write_manifest(out_root, {"run": run}, artifacts)
    print(f"wrote {len(artifacts)} artifacts under {out_root} "
          f"(manifest: {manifest})")
    return EXIT_OK


def cmd_export_scenarios(cfg: dict, args, base: Path) -> int:
    run = _run_settings(cfg, args)
    econf = _eval_config(run)
    grid = _load_grid(cfg, base)
    d_hat, vre, train, _test, _echo = _load_single_hour(cfg, grid, base)
    alpha = float(run["alpha"][0])
    requirement = reserve_requirements(train, alpha, run["quantile_method"])
    uset = build_uncertainty_set(train, requirement)
    method = args.method
    if method == "EXT":
        deployment = extreme_scenarios(train, requirement, uset,
                                       run["quantile_method"])
    elif method == "CCG":
        result = ccg(grid, d_hat, requirement, uset, train, econf.ccg,
                     econf.solver, vre if run["curtailment"] else None)
        deployment = result.deployment
    elif method == "VENUM":
        deployment = vertex_deployment_set(uset, cap=int(run["venum_cap"]))
    else:
        raise ConfigError(f"cannot export scenarios for method {method!r}")
    out = Path(args.out)
    rio.save_scenarios_csv(out, grid.node_ids,
                           np.array([e.xi for e in deployment])
                           if len(deployment) else np.zeros((0, grid.n_nodes)),
                           scenario_ids=[e.tag for e in deployment])
    print(f"wrote {len(deployment)} deployment scenarios to {out}")
    return EXIT_OK


def cmd_sample(cfg: dict, args, base: Path) -> int:
    grid = _load_grid(cfg, base)
    d_hat, vre = rio.load_forecast_csv(base / cfg["forecast"]["file"],
                                       grid.node_ids)
    spec = cfg.get("scenarios", {}).get(args.which, {})
    if "gaussian" not in spec:
        raise ConfigError(f"[scenarios.{args.which}] has no gaussian table "
                          "to sample from")
    scen, echo = _build_scenarios(spec, grid, d_hat, vre, base,
                                  count_override=args.count,
                                  seed_override=args.seed)
    rio.save_scenarios_csv(args.out, grid.node_ids, scen.errors)
    print(f"sampled {scen.n_scenarios} scenarios -> {args.out} ({echo})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="reserveflow",
        description="Day-ahead energy/reserve scheduling with "
                    "deliverability-aware deployment scenarios")
    ap.add_argument("-c", "--config", required=True, help="TOML or JSON "
                    "configuration file")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="parse and check all configured inputs")

    runp = sub.add_parser("run", help="run the scheduling/evaluation pipeline")
    runp.add_argument("--alpha", type=float, action="append",
                      help="reliability level (repeatable; overrides config)")
    runp.add_argument("--methods", nargs="+", choices=_METHODS)
    runp.add_argument("--out", help="output directory")
    runp.add_argument("--workers", type=int)
    runp.add_argument("--backend", choices=("bundled", "scipy"))
    figf = runp.add_mutually_exclusive_group()
    figf.add_argument("--figures", dest="figures", action="store_true",
                      default=None)
    figf.add_argument("--no-figures", dest="figures", action="store_false")

    exp = sub.add_parser("export-scenarios",
                         help="write deployment scenarios to CSV")
    exp.add_argument("--method", required=True,
                     choices=("EXT", "CCG", "VENUM"))
    exp.add_argument("--out", required=True)
    exp.add_argument("--alpha", type=float, action="append")
    exp.add_argument("--backend", choices=("bundled", "scipy"))

    smp = sub.add_parser("sample", help="generate synthetic scenarios")
    smp.add_argument("--which", default="train", choices=("train", "test"))
    smp.add_argument("--count", type=int)
    smp.add_argument("--seed", type=int)
    smp.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load_config_file(Path(args.config))
        base = Path(args.config).resolve().parent
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handlers = {"validate": cmd_validate, "run": cmd_run,
                "export-scenarios": cmd_export_scenarios,
                "sample": cmd_sample}
    try:
        return handlers[args.command](cfg, args, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (rio.FileFormatError, GridError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (LpError, InfeasibleScheduleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

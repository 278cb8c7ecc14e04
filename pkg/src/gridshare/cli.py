"""Command-line entry point.

Subcommands:

- ``generate``: write a seeded synthetic corpus.
- ``train``: federated training of the demand forecaster.
- ``run``: one scenario simulation with full artifacts.
- ``sweep``: experiment sweeps (``zeta`` sharing-ratio grid, or the
  four-configuration multi-year ``configs`` comparison).
- ``report``: summary tables and plot-ready extracts from a run directory.

Every command is deterministic under a fixed seed; failures exit nonzero
with a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import yaml

from .cost import CostParams
from .domain import TimeGrid, save_topology
from .forecast import (
    FedRoundConfig,
    LstmSpec,
    STATIC_SIZE,
    build_all_datasets,
    evaluate_global,
    load_checkpoint,
    run_federated_training,
    save_checkpoint,
)
from .ingest import GeneratorConfig, generate_synthetic_dataset, load_corpus, write_corpus
from .orchestrator import (
    RunResult,
    ScenarioConfig,
    run_scenario,
    scenario_variant,
    write_run_artifacts,
)

STEPS_PER_DAY = 96
DAYS_PER_YEAR = 365.0

DEFAULT_CONFIG = {
    "seed": 0,
    "sites": 48,
    "mnos": 3,
    "group_size": 3,
    "days": 7,
    "scenario": {
        "kind": "shared-battery",
        "zeta": 1.0,
        "shared_tech": "battery",
        "exclusive_tech": "grid",
        "window_steps": 1,
        "soc_min": 0.1,
        "soh_min": 0.8,
        "margin": 0.05,
        "min_dwell": 0,
        "forecaster": "oracle",
        "initial_soc": 0.5,
        "omega_init": 50.0,
        "kappa": 8.85e-6,
        "grid_charge_percentile": 25.0,
        "grid_charge_enabled": True,
    },
    "cost": {
        "infra_capex": 0.0,
        "battery_capex": 10000.0,
        "renew_capex": 3000.0,
        "rent_per_year": 50000.0,
        "default_price": 0.28,
    },
    "generator": {
        "base_load_per_cell": 0.30,
        "diurnal_amp_per_cell": 0.20,
        "weekly_amp": 0.08,
        "noise_sigma": 0.12,
        "throughput_scale": 8.0,
        "throughput_noise": 0.05,
        "solar_peak_kwh": 0.85,
        "cloud_min": 0.5,
        "price_mode": "flat",
        "day_price": 0.28,
        "night_price": 0.15,
    },
    "train": {
        "rounds": 10,
        "local_epochs": 3,
        "sequence_length": 16,
        "clients_per_round": None,
        "learning_rate": 0.05,
        "batch_size": 16,
        "early_stop_patience": None,
    },
    "sweep": {
        "zeta_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
        "years": 15,
    },
}


class ConfigError(ValueError):
    """Raised for unknown configuration keys or unreadable config files."""


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _coerce(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def load_config(path=None, overrides=()) -> dict:
    """Defaults, optionally merged with a YAML file and key=value overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        config = _merge(config, doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value: {item!r}")
        key, _, raw = item.partition("=")
        node: dict = {}
        leaf = node
        parts = key.split(".")
        for part in parts[:-1]:
            leaf[part] = {}
            leaf = leaf[part]
        leaf[parts[-1]] = _coerce(raw)
        config = _merge(config, node)
    return config


def _time_grid(config: dict) -> TimeGrid:
    return TimeGrid(horizon_steps=int(config["days"]) * STEPS_PER_DAY)


def _scenario_config(config: dict, **extra) -> ScenarioConfig:
    sc = dict(config["scenario"])
    sc.update(extra)
    return ScenarioConfig(
        n_sites=config["sites"],
        n_mnos=config["mnos"],
        group_size=config["group_size"],
        seed=config["seed"],
        cost=CostParams(**config["cost"]),
        **sc,
    )


def cmd_generate(config: dict, out_dir) -> dict:
    grid = _time_grid(config)
    corpus = generate_synthetic_dataset(
        range(config["sites"]), grid, config["seed"],
        GeneratorConfig(**config["generator"]),
    )
    paths = write_corpus(corpus, out_dir)
    return {"corpus_dir": out_dir, "sites": corpus.n_sites, "steps": corpus.n_steps,
            "files": sorted(paths.values())}


def cmd_train(config: dict, data_dir, out_dir) -> dict:
    corpus = load_corpus(data_dir)
    tc = dict(config["train"])
    fed = FedRoundConfig(seed=config["seed"], **tc)
    datasets = build_all_datasets(corpus, seq_len=fed.sequence_length)
    spec = LstmSpec(sequence_length=fed.sequence_length, static_size=STATIC_SIZE)
    params, metrics = run_federated_training(datasets, fed, spec)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(ckpt, spec, params)
    with open(os.path.join(out_dir, "fed_metrics.csv"), "w") as fh:
        fh.write("round,train_mse,val_mse,val_mae\n")
        for m in metrics:
            fh.write(
                f"{m['round']},{m['train_mse']!r},{m['val_mse']!r},{m['val_mae']!r}\n"
            )
    return {"checkpoint": ckpt, "final_val_mse": metrics[-1]["val_mse"],
            "initial_val_mse": metrics[0]["val_mse"]}


def _run_one(config: dict, corpus, out_dir=None, **extra) -> RunResult:
    sc = _scenario_config(config, **extra)
    return run_scenario(sc, corpus, out_dir)


def cmd_run(config: dict, data_dir, out_dir) -> dict:
    corpus = load_corpus(data_dir)
    result = _run_one(config, corpus, out_dir)
    save_topology(result.topology, os.path.join(out_dir, "topology.csv"))
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(
            {
                "kind": result.config.kind,
                "zeta": result.config.zeta,
                "seed": result.config.seed,
                "forecaster": result.config.forecaster,
                "horizon_steps": result.grid.horizon_steps,
            },
            fh, sort_keys=True, indent=2,
        )
    return {
        "out_dir": out_dir,
        "kind": result.config.kind,
        "network_total_eur": result.ledger.network_total(),
        "overrides": len(result.overrides),
    }


def annualized_opex(result: RunResult) -> float:
    """Network OPEX of the simulated block scaled to one year."""
    T = result.grid.horizon_steps
    steps_per_year = DAYS_PER_YEAR * STEPS_PER_DAY
    opex = sum(result.ledger.site_opex(u) for u in result.ledger.sites)
    return opex * steps_per_year / T


ZETA_FAMILIES = (
    ("shared_battery-exclusive_grid", {"kind": "mixed", "shared_tech": "battery", "exclusive_tech": "grid"}),
    ("shared_battery-exclusive_battery", {"kind": "mixed", "shared_tech": "battery", "exclusive_tech": "battery"}),
    ("shared_grid-exclusive_grid", {"kind": "mixed", "shared_tech": "grid", "exclusive_tech": "grid"}),
    ("shared_grid-exclusive_battery", {"kind": "mixed", "shared_tech": "grid", "exclusive_tech": "battery"}),
    ("exclusive_benchmark", {"kind": "benchmark-exclusive"}),
)


def cmd_sweep_zeta(config: dict, data_dir, out_dir) -> dict:
    """Annual operational cost as a function of the site-sharing ratio."""
    corpus = load_corpus(data_dir)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for family, extra in ZETA_FAMILIES:
        for zeta in config["sweep"]["zeta_grid"]:
            result = _run_one(config, corpus, zeta=float(zeta), **extra)
            rows.append((family, float(zeta), annualized_opex(result)))
    path = os.path.join(out_dir, "zeta_sweep.csv")
    with open(path, "w") as fh:
        fh.write("scenario,zeta,annual_cost_eur\n")
        for family, zeta, cost in rows:
            fh.write(f"{family},{zeta!r},{cost!r}\n")
    return {"table": path, "rows": len(rows)}


FIG3_KINDS = ("exclusive-grid", "exclusive-battery", "shared-grid", "shared-battery")


def cmd_fig3(config: dict, data_dir, out_dir) -> dict:
    """Cumulative per-site cost curves of the four configurations.

    Desk-scale default: simulate the corpus block once per configuration and
    extrapolate its OPEX rate across the requested years; CAPEX is booked in
    year 0.
    """
    corpus = load_corpus(data_dir)
    os.makedirs(out_dir, exist_ok=True)
    years = int(config["sweep"]["years"])
    curves = {}
    for kind in FIG3_KINDS:
        result = _run_one(config, corpus, kind=kind)
        capex = sum(result.ledger.capex.values())
        annual = annualized_opex(result)
        n = len(result.ledger.sites)
        curves[kind] = [(capex + annual * y) / n for y in range(years + 1)]
    path = os.path.join(out_dir, "fig3_cumulative.csv")
    with open(path, "w") as fh:
        fh.write("scenario,year,cumulative_cost_per_site_eur\n")
        for kind in FIG3_KINDS:
            for y, value in enumerate(curves[kind]):
                fh.write(f"{kind},{y},{value!r}\n")
    crossovers = {}
    for batt, grid_kind in (("exclusive-battery", "exclusive-grid"),
                            ("shared-battery", "shared-grid")):
        year = next(
            (y for y in range(years + 1) if curves[batt][y] <= curves[grid_kind][y]),
            None,
        )
        crossovers[f"{batt}_vs_{grid_kind}"] = year
    xpath = os.path.join(out_dir, "fig3_crossovers.csv")
    with open(xpath, "w") as fh:
        fh.write("pair,crossover_year\n")
        for pair, year in sorted(crossovers.items()):
            fh.write(f"{pair},{'' if year is None else year}\n")
    return {"curves": path, "crossovers": crossovers}


def cmd_report(run_dir, out_dir, data_dir=None, model_path=None, site=None) -> dict:
    """Summary tables and plot-ready extracts from run artifacts."""
    needed = ["soc.csv", "decisions.csv", "ledger.csv", "geo_snapshot.geojson",
              "topology.csv"]
    missing = [f for f in needed if not os.path.exists(os.path.join(run_dir, f))]
    if missing:
        raise FileNotFoundError(f"run artifacts missing from {run_dir}: {missing}")
    os.makedirs(out_dir, exist_ok=True)
    produced = {}

    if model_path and data_dir:
        spec, params = load_checkpoint(model_path)
        corpus = load_corpus(data_dir)
        datasets = build_all_datasets(corpus, seq_len=spec.sequence_length)
        stats = evaluate_global(spec, params, datasets, "val")
        path = os.path.join(out_dir, "metrics_table.csv")
        with open(path, "w") as fh:
            fh.write("metric,min,mean,max\n")
            fh.write(f"mse,{stats['mse_min']!r},{stats['mse']!r},{stats['mse_max']!r}\n")
            fh.write(f"mae,{stats['mae_min']!r},{stats['mae']!r},{stats['mae_max']!r}\n")
        produced["metrics_table"] = path

    if site is not None:
        from .domain import load_topology

        topo = load_topology(os.path.join(run_dir, "topology.csv"))
        infra = topo.infra_of[int(site)]
        path = os.path.join(out_dir, f"soc_trace_site{site}.csv")
        with open(os.path.join(run_dir, "soc.csv")) as src, open(path, "w") as dst:
            header = src.readline().strip().split(",")
            idx = {name: k for k, name in enumerate(header)}
            dst.write("step,soc,predicted_soc,threshold\n")
            for line in src:
                row = line.rstrip("\n").split(",")
                if int(row[idx["infra"]]) == infra:
                    dst.write(
                        f"{row[idx['step']]},{row[idx['soc']]},"
                        f"{row[idx['predicted_soc']]},0.1\n"
                    )
        produced["soc_trace"] = path

    with open(os.path.join(run_dir, "geo_snapshot.geojson")) as fh:
        geo = json.load(fh)
    if geo.get("type") != "FeatureCollection":
        raise ValueError("geo_snapshot.geojson is not a FeatureCollection")
    produced["geo_snapshot"] = os.path.join(run_dir, "geo_snapshot.geojson")
    return produced


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridshare",
        description="Multi-operator energy-infrastructure sharing simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("-O", "--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted config override")

    p = sub.add_parser("generate", help="write a synthetic corpus")
    common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="federated forecaster training")
    common(p)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="experiment sweeps")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["zeta", "configs"], default="zeta")

    p = sub.add_parser("report", help="summaries from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--site", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            info = cmd_report(args.run, args.out, args.data, args.model, args.site)
        else:
            overrides = list(args.override)
            if args.seed is not None:
                overrides.append(f"seed={args.seed}")
            config = load_config(args.config, overrides)
            if args.command == "generate":
                info = cmd_generate(config, args.out)
            elif args.command == "train":
                info = cmd_train(config, args.data, args.out)
            elif args.command == "run":
                info = cmd_run(config, args.data, args.out)
            elif args.command == "sweep":
                if args.kind == "zeta":
                    info = cmd_sweep_zeta(config, args.data, args.out)
                else:
                    info = cmd_fig3(config, args.data, args.out)
            else:  # pragma: no cover
                raise ConfigError(f"unknown command {args.command!r}")
        print(json.dumps(info, sort_keys=True))
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Scenario control loop: collect, predict, decide, switch, monitor.

Each control window: feature windows are built from the KPI history, demands
are predicted (LSTM checkpoint or perfect-forecast oracle), charging is
planned and the source-selection knapsack solved, realized demands are
applied to flows and battery state, and the monitor force-switches an
infrastructure to the grid when realized demand threatens the battery
reserve before the window ends.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import battery as bat
from .cost import CostLedger, CostParams, capex_of_site, opex_step
from .domain import NetworkTopology, TimeGrid, validate_topology
from .forecast import (
    LstmSpec,
    STATIC_SIZE,
    build_all_datasets,
    forward_batch,
    load_checkpoint,
)
from .ingest import Corpus
from .scheduler import (
    SourcePlan,
    apply_hysteresis,
    build_instance,
    plan_charging,
    solve_knapsack_dp,
)

SCENARIO_KINDS = (
    "exclusive-grid",
    "exclusive-battery",
    "shared-grid",
    "shared-battery",
    "mixed",
    "benchmark-exclusive",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation run's configuration."""

    kind: str = "shared-battery"
    n_sites: int = 48
    n_mnos: int = 3
    group_size: int = 3  # sites per shared infrastructure
    zeta: float = 1.0  # fraction of sites participating in sharing
    shared_tech: str = "battery"  # technology at shared sites (mixed kind)
    exclusive_tech: str = "grid"  # technology at exclusive sites (mixed kind)
    horizon_steps: int | None = None  # None = full corpus
    window_steps: int = 1
    soc_min: float = 0.1
    soh_min: float = 0.8
    margin: float = 0.05
    min_dwell: int = 0
    forecaster: str = "oracle"  # "oracle" or a checkpoint path
    seed: int = 0
    initial_soc: float = 0.5
    omega_init: float = 50.0
    kappa: float = 8.85e-6
    cost: CostParams = field(default_factory=CostParams)
    grid_charge_percentile: float = 25.0
    grid_charge_enabled: bool = True

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not (0.0 <= self.zeta <= 1.0):
            raise ValueError("zeta must lie in [0, 1]")
        if not (0.0 <= self.margin < 1.0):
            raise ValueError("margin must lie in [0, 1)")
        if not (0.0 <= self.soc_min < 1.0) or not (0.0 <= self.soh_min < 1.0):
            raise ValueError("thresholds must lie in [0, 1)")
        if self.window_steps < 1:
            raise ValueError("window_steps must be >= 1")


def scenario_zeta_and_techs(config: ScenarioConfig) -> tuple[float, str, str]:
    """Effective (zeta, shared technology, exclusive technology) of a kind."""
    if config.kind == "exclusive-grid":
        return 0.0, "grid", "grid"
    if config.kind == "exclusive-battery":
        return 0.0, "battery", "battery"
    if config.kind == "shared-grid":
        return 1.0, "grid", "grid"
    if config.kind == "shared-battery":
        return 1.0, "battery", "battery"
    if config.kind == "benchmark-exclusive":
        # All sites exclusive; zeta is reused as the battery-equipped fraction.
        return 0.0, "grid", "grid"
    return config.zeta, config.shared_tech, config.exclusive_tech


def build_scenario_topology(config: ScenarioConfig) -> tuple[NetworkTopology, dict]:
    """Deterministic topology for a scenario kind.

    The first round(zeta * U) sites form shared infrastructures of
    ``group_size`` consecutive sites (consecutive ids cycle through MNOs, so
    groups are cross-operator); the rest get exclusive infrastructures.
    Returns (topology, infra -> (has_battery, has_renewable)).
    """
    zeta, shared_tech, exclusive_tech = scenario_zeta_and_techs(config)
    U = config.n_sites
    sites = tuple(range(U))
    n_shared = int(round(zeta * U))
    # Align to whole groups so shares always normalize.
    n_shared -= n_shared % config.group_size

    owner_of = {u: u % config.n_mnos for u in sites}
    infra_of: dict = {}
    share_of: dict = {}
    assets: dict = {}
    next_infra = 0
    for lo in range(0, n_shared, config.group_size):
        group = sites[lo: lo + config.group_size]
        for u in group:
            infra_of[u] = next_infra
            share_of[u] = 1.0 / len(group)
        assets[next_infra] = (shared_tech == "battery", shared_tech == "battery")
        next_infra += 1
    for k, u in enumerate(sites[n_shared:]):
        infra_of[u] = next_infra
        share_of[u] = 1.0
        if config.kind == "benchmark-exclusive":
            n_batt = int(round(config.zeta * U))
            has = k < max(0, n_batt - n_shared)
        else:
            has = exclusive_tech == "battery"
        assets[next_infra] = (has, has)
        next_infra += 1

    latlon_of = {}
    for u in sites:
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 31337, u)))
        latlon_of[u] = (
            round(59.33 + float(rng.uniform(-0.25, 0.25)), 6),
            round(18.07 + float(rng.uniform(-0.45, 0.45)), 6),
        )
    topo = NetworkTopology(
        mnos=frozenset(owner_of.values()),
        sites=sites,
        infrastructures=frozenset(infra_of.values()),
        owner_of=owner_of,
        infra_of=infra_of,
        share_of=share_of,
        latlon_of=latlon_of,
    )
    problems = validate_topology(topo)
    if problems:  # construction bug guard
        raise RuntimeError("generated topology invalid: " + "; ".join(problems))
    return topo, assets


def monitor_and_override(
    realized_battery_kwh: float, budget_raw_kwh: float, margin: float
) -> bool:
    """True when realized battery-routed demand breaches the safeguard."""
    if not (0.0 <= margin < 1.0):
        raise ValueError("margin must lie in [0, 1)")
    return realized_battery_kwh > (1.0 - margin) * budget_raw_kwh + 1e-12


def switch_source(
    plan: SourcePlan, realized: dict, overridden_infras: set, infra_of: dict
) -> dict:
    """Materialize flows for one sub-step: site -> (grid_to_load, battery_to_load)."""
    flows = {}
    for u, demand in realized.items():
        use_battery = plan.decision.get(u, 0) == 1 and infra_of[u] not in overridden_infras
        flows[u] = (0.0, demand) if use_battery else (demand, 0.0)
    return flows


@dataclass
class RunResult:
    """Artifacts of one scenario run, kept in memory for reports and tests."""

    config: ScenarioConfig
    topology: NetworkTopology
    assets: dict
    grid: TimeGrid
    ledger: CostLedger
    decisions: np.ndarray  # (T, U) planned decision, 0 grid / 1 battery
    realized_battery: np.ndarray  # (T, U) 1 iff battery actually served
    soc_trace: dict  # infra -> np.ndarray (T,)
    soh_trace: dict
    predicted_soc: dict  # infra -> np.ndarray (T,), NaN outside decisions
    forecasts: np.ndarray  # (T, U) predicted demand, NaN during cold start
    overrides: list  # (step, infra) pairs
    flows_grid_load: np.ndarray  # (T, U)
    flows_battery_load: np.ndarray  # (T, U)
    grid_charge: dict  # infra -> np.ndarray (T,)
    ren_charge: dict


def _site_forecaster(config: ScenarioConfig, corpus: Corpus, seq_len: int):
    """Returns predict(step) -> dict site -> kWh, or None before history."""
    site_ids = corpus.site_ids
    k_of = {u: corpus.site_index(u) for u in site_ids}
    if config.forecaster == "oracle":
        def predict(t):
            return {u: float(corpus.energy[k_of[u], t]) for u in site_ids}
        return predict, 0

    spec, params = load_checkpoint(config.forecaster)
    datasets = build_all_datasets(corpus, seq_len=spec.sequence_length)
    cold = spec.sequence_length

    def predict(t):
        # The window for step t ends at t-1; dataset row index is t - seq_len.
        j = t - spec.sequence_length
        X = np.stack([datasets[u].X[j] for u in site_ids])
        S = np.stack([datasets[u].S[j] for u in site_ids])
        preds, _ = forward_batch(spec, params, X, S)
        return {
            u: float(preds[k]) * datasets[u].target_scale
            for k, u in enumerate(site_ids)
        }

    return predict, cold


def run_scenario(
    config: ScenarioConfig, corpus: Corpus, out_dir=None
) -> RunResult:
    """Execute the five-stage loop over the scenario horizon."""
    topo, assets = build_scenario_topology(config)
    missing = [u for u in topo.sites if u not in corpus.site_ids]
    if missing:
        raise ValueError(f"corpus lacks sites {missing}")
    T = config.horizon_steps or corpus.n_steps
    if T > corpus.n_steps:
        raise ValueError("horizon exceeds corpus length")
    grid = TimeGrid(horizon_steps=T, start_epoch=corpus.timestamps[0])
    infra_sites = topo.infrastructure_sites()
    infras = sorted(infra_sites)
    k_of = {u: corpus.site_index(u) for u in topo.sites}

    predict, cold_start = _site_forecaster(config, corpus, config.window_steps)

    states: dict = {}
    for i in infras:
        if assets[i][0]:
            states[i] = bat.BatteryState(
                soc=config.initial_soc,
                soh=1.0,
                omega_init=config.omega_init,
                kappa=config.kappa,
            )

    ledger = CostLedger(sites=topo.sites)
    for u in topo.sites:
        has_b, has_r = assets[topo.infra_of[u]]
        ledger.book_capex(
            u, capex_of_site(config.cost, topo.share_of[u], has_b, has_r)
        )

    U = topo.n_sites
    decisions = np.zeros((T, U), dtype=int)
    realized_battery = np.zeros((T, U), dtype=int)
    forecasts = np.full((T, U), np.nan)
    soc_trace = {i: np.full(T, np.nan) for i in states}
    soh_trace = {i: np.full(T, np.nan) for i in states}
    predicted_soc = {i: np.full(T, np.nan) for i in states}
    flows_gl = np.zeros((T, U))
    flows_bl = np.zeros((T, U))
    grid_charge = {i: np.zeros(T) for i in states}
    ren_charge = {i: np.zeros(T) for i in states}
    overrides: list = []

    price = corpus.price
    steps_per_day = grid.steps_per_day
    plan_history: list = []

    for w_start in range(0, T, config.window_steps):
        w_steps = list(range(w_start, min(w_start + config.window_steps, T)))
        have_forecast = w_start >= cold_start
        if have_forecast:
            window_pred = predict(w_start)
        else:
            window_pred = None

        # Stage 3: plan charging (first sub-step view) and decide sources.
        charge0 = plan_charging(
            states,
            {
                i: sum(
                    corpus.solar[k_of[u], w_start]
                    for u in infra_sites[i]
                    if assets[i][1]
                )
                for i in states
            },
            float(price[w_start]),
            list(price[max(0, w_start - steps_per_day): w_start]),
            grid_charge_percentile=config.grid_charge_percentile,
            grid_charge_enabled=config.grid_charge_enabled,
        )
        budgets_raw = {
            i: bat.available_discharge_budget(
                states[i], charge0.get(i, bat.NO_CHARGE), config.soc_min
            )
            for i in states
        }

        if have_forecast:
            window_demand = {
                u: window_pred[u] * len(w_steps) for u in topo.sites
            }
            instance = build_instance(
                forecasts=window_demand,
                battery_states=states,
                charge_inputs=charge0,
                price=float(price[w_start]),
                infra_sites=infra_sites,
                soc_min=config.soc_min,
                soh_min=config.soh_min,
                margin=config.margin,
            )
            plan = solve_knapsack_dp(instance)
            plan = apply_hysteresis(plan_history, plan, config.min_dwell, instance)
        else:
            plan = SourcePlan(decision={u: 0 for u in topo.sites})
        plan_history.append(plan)
        if len(plan_history) > max(2, config.min_dwell + 2):
            plan_history.pop(0)

        for i in states:
            if have_forecast:
                pred_batt = sum(
                    window_pred[u] * len(w_steps)
                    for u in infra_sites[i]
                    if plan.decision[u] == 1
                )
                predicted_soc[i][w_start] = states[i].soc + (
                    bat.mixed_charge(charge0[i]) - pred_batt
                ) / states[i].capacity_kwh
            else:
                predicted_soc[i][w_start] = states[i].soc

        # Stages 4-5: apply realized demand sub-step by sub-step, monitoring
        # cumulative battery draw against the window budget.
        cum_batt = {i: 0.0 for i in states}
        overridden: set = set()
        for t in w_steps:
            realized = {u: float(corpus.energy[k_of[u], t]) for u in topo.sites}
            if have_forecast:
                for u in topo.sites:
                    forecasts[t, k_of[u]] = window_pred[u]
            for u in topo.sites:
                decisions[t, k_of[u]] = plan.decision.get(u, 0)

            # Monitor: would this sub-step's battery draw breach the budget?
            for i in states:
                if i in overridden:
                    continue
                draw = sum(
                    realized[u] for u in infra_sites[i] if plan.decision.get(u, 0) == 1
                )
                if draw > 0 and monitor_and_override(
                    cum_batt[i] + draw, budgets_raw[i], config.margin
                ):
                    overridden.add(i)
                    overrides.append((t, i))

            flows = switch_source(plan, realized, overridden, topo.infra_of)

            charge = charge0 if t == w_start else plan_charging(
                states,
                {
                    i: sum(
                        corpus.solar[k_of[u], t]
                        for u in infra_sites[i]
                        if assets[i][1]
                    )
                    for i in states
                },
                float(price[t]),
                list(price[max(0, t - steps_per_day): t]),
                grid_charge_percentile=config.grid_charge_percentile,
                grid_charge_enabled=config.grid_charge_enabled,
            )

            for u in topo.sites:
                gl, bl = flows[u]
                k = k_of[u]
                flows_gl[t, k] = gl
                flows_bl[t, k] = bl
                realized_battery[t, k] = 1 if bl > 0 else 0
                i = topo.infra_of[u]
                gb = charge[i].grid_charge if i in states else 0.0
                ledger.book_opex(
                    u,
                    opex_step(
                        config.cost,
                        grid_to_load=gl,
                        grid_to_battery=gb,
                        share=topo.share_of[u],
                        price=float(price[t]),
                        step_hours=grid.step_hours,
                    ),
                )

            for i in states:
                discharge = sum(flows[u][1] for u in infra_sites[i])
                inp = charge.get(i, bat.NO_CHARGE)
                states[i] = bat.step(states[i], inp, discharge)
                cum_batt[i] += discharge
                soc_trace[i][t] = states[i].soc
                soh_trace[i][t] = states[i].soh
                grid_charge[i][t] = inp.grid_charge
                ren_charge[i][t] = inp.ren_charge if inp.mix < 1.0 else 0.0

    result = RunResult(
        config=config,
        topology=topo,
        assets=assets,
        grid=grid,
        ledger=ledger,
        decisions=decisions,
        realized_battery=realized_battery,
        soc_trace=soc_trace,
        soh_trace=soh_trace,
        predicted_soc=predicted_soc,
        forecasts=forecasts,
        overrides=overrides,
        flows_grid_load=flows_gl,
        flows_battery_load=flows_bl,
        grid_charge=grid_charge,
        ren_charge=ren_charge,
    )
    if out_dir is not None:
        write_run_artifacts(result, corpus, out_dir)
    return result


def write_run_artifacts(result: RunResult, corpus: Corpus, out_dir) -> None:
    """Write decisions.csv, soc.csv, ledger.csv, overrides.csv and the
    per-step GeoJSON snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    topo = result.topology
    T = result.grid.horizon_steps
    k_of = {u: corpus.site_index(u) for u in topo.sites}

    with open(os.path.join(out_dir, "decisions.csv"), "w") as fh:
        fh.write("step,site,decision,source\n")
        for t in range(T):
            for u in topo.sites:
                k = k_of[u]
                src = "battery" if result.realized_battery[t, k] else "grid"
                fh.write(f"{t},{u},{result.decisions[t, k]},{src}\n")

    with open(os.path.join(out_dir, "soc.csv"), "w") as fh:
        fh.write("step,infra,soc,soh,capacity_kwh,predicted_soc\n")
        for t in range(T):
            for i in sorted(result.soc_trace):
                soc = result.soc_trace[i][t]
                soh = result.soh_trace[i][t]
                cap = result.config.omega_init * soh
                pred = result.predicted_soc[i][t]
                pred_s = "" if np.isnan(pred) else repr(float(pred))
                fh.write(
                    f"{t},{i},{float(soc)!r},{float(soh)!r},{float(cap)!r},{pred_s}\n"
                )

    with open(os.path.join(out_dir, "ledger.csv"), "w") as fh:
        fh.write("kind,step,site,cost_eur\n")
        for u in topo.sites:
            fh.write(f"capex,0,{u},{result.ledger.capex[u]!r}\n")
        for t in range(T):
            for u in topo.sites:
                fh.write(f"opex,{t},{u},{result.ledger.opex_series[u][t]!r}\n")

    with open(os.path.join(out_dir, "overrides.csv"), "w") as fh:
        fh.write("step,infra\n")
        for t, i in result.overrides:
            fh.write(f"{t},{i}\n")

    write_geo_snapshots(result, corpus, os.path.join(out_dir, "geo_snapshot.geojson"))


def write_geo_snapshots(result: RunResult, corpus: Corpus, path) -> None:
    """GeoJSON series: per step and infrastructure, stored vs required kWh."""
    topo = result.topology
    infra_sites = topo.infrastructure_sites()
    k_of = {u: corpus.site_index(u) for u in topo.sites}
    features = []
    T = result.grid.horizon_steps
    for t in range(T):
        for i in sorted(infra_sites):
            members = infra_sites[i]
            lats = [topo.latlon_of[u][0] for u in members if u in topo.latlon_of]
            lons = [topo.latlon_of[u][1] for u in members if u in topo.latlon_of]
            if not lats:
                continue
            stored = 0.0
            if i in result.soc_trace and not np.isnan(result.soc_trace[i][t]):
                stored = float(
                    result.soc_trace[i][t]
                    * result.soh_trace[i][t]
                    * result.config.omega_init
                )
            required = float(
                sum(corpus.energy[k_of[u], t + 1] for u in members)
            ) if t + 1 < corpus.n_steps else 0.0
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        "coordinates": [
                            round(sum(lons) / len(lons), 6),
                            round(sum(lats) / len(lats), 6),
                        ],
                    },
                    "properties": {
                        "step": t,
                        "timestamp": corpus.timestamps[t],
                        "infra": i,
                        "stored_kwh": round(stored, 6),
                        "required_kwh": round(required, 6),
                    },
                }
            )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def scenario_variant(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Convenience: a config copy with fields replaced."""
    return replace(config, **overrides)

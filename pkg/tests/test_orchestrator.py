"""Scenario loop: safety, conservation, overrides, and reproducibility."""

import numpy as np
import pytest

from gridshare.domain import validate_topology
from gridshare.orchestrator import (
    ScenarioConfig,
    SourcePlan,
    build_scenario_topology,
    monitor_and_override,
    run_scenario,
    scenario_variant,
    switch_source,
)


def config_of(kind, **kw):
    base = dict(kind=kind, n_sites=6, n_mnos=2, group_size=3, seed=0)
    base.update(kw)
    return ScenarioConfig(**base)


class TestScenarioTopology:
    def test_shared_kind_groups_sites(self):
        topo, assets = build_scenario_topology(config_of("shared-battery"))
        assert validate_topology(topo) == []
        assert all(s == pytest.approx(1 / 3) for s in topo.share_of.values())
        assert all(assets[i] == (True, True) for i in topo.infrastructures)

    def test_exclusive_kind_isolates_sites(self):
        topo, assets = build_scenario_topology(config_of("exclusive-grid"))
        assert len(topo.infrastructures) == topo.n_sites
        assert all(s == 1.0 for s in topo.share_of.values())
        assert all(assets[i] == (False, False) for i in topo.infrastructures)

    def test_mixed_zeta_splits_population(self):
        cfg = config_of("mixed", n_sites=12, zeta=0.5,
                        shared_tech="battery", exclusive_tech="grid")
        topo, assets = build_scenario_topology(cfg)
        shared = [u for u in topo.sites if topo.share_of[u] < 1.0]
        assert len(shared) == 6
        assert validate_topology(topo) == []

    def test_benchmark_kind_equips_fraction_with_batteries(self):
        cfg = config_of("benchmark-exclusive", n_sites=12, zeta=0.5)
        topo, assets = build_scenario_topology(cfg)
        equipped = sum(1 for i in topo.infrastructures if assets[i][0])
        assert equipped == 6
        assert all(s == 1.0 for s in topo.share_of.values())

    def test_groups_are_cross_operator(self):
        topo, _ = build_scenario_topology(config_of("shared-battery"))
        for i in topo.infrastructures:
            owners = {topo.owner_of[u] for u in topo.sites_of_infrastructure(i)}
            assert len(owners) > 1

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            config_of("perpetual-motion")


class TestMonitor:
    def test_no_override_at_prediction(self):
        assert not monitor_and_override(10.0, 10.0 / 0.95, margin=0.05)

    def test_override_when_realized_exceeds_safeguard(self):
        assert monitor_and_override(11.0, 10.0, margin=0.05)

    def test_zero_margin_boundary(self):
        assert not monitor_and_override(10.0, 10.0, margin=0.0)

    def test_invalid_margin_rejected(self):
        with pytest.raises(ValueError):
            monitor_and_override(1.0, 1.0, margin=1.0)


class TestSwitchSource:
    def test_grid_decision(self):
        plan = SourcePlan(decision={0: 0})
        flows = switch_source(plan, {0: 3.0}, set(), {0: 0})
        assert flows[0] == (3.0, 0.0)

    def test_battery_decision(self):
        plan = SourcePlan(decision={0: 1})
        flows = switch_source(plan, {0: 3.0}, set(), {0: 0})
        assert flows[0] == (0.0, 3.0)

    def test_override_redirects_to_grid(self):
        plan = SourcePlan(decision={0: 1})
        flows = switch_source(plan, {0: 3.0}, {0}, {0: 0})
        assert flows[0] == (3.0, 0.0)


class TestRunScenario:
    def test_exclusive_grid_never_uses_battery(self, small_corpus):
        result = run_scenario(config_of("exclusive-grid"), small_corpus)
        assert np.all(result.decisions == 0)
        assert np.all(result.flows_battery_load == 0.0)
        assert result.soc_trace == {}  # no batteries exist

    def test_demand_conservation(self, small_corpus):
        result = run_scenario(config_of("shared-battery"), small_corpus)
        served = result.flows_grid_load + result.flows_battery_load
        assert np.allclose(served, small_corpus.energy.T, atol=1e-12)

    def test_oracle_run_is_safe_with_zero_overrides(self, small_corpus):
        result = run_scenario(config_of("shared-battery"), small_corpus)
        assert result.overrides == []
        for trace in result.soc_trace.values():
            assert np.all(trace >= 0.1 - 1e-9)
            assert np.all(trace <= 1.0)

    def test_soh_monotone(self, small_corpus):
        result = run_scenario(config_of("shared-battery"), small_corpus)
        for trace in result.soh_trace.values():
            assert np.all(np.diff(trace) <= 0.0)

    def test_reproducible(self, small_corpus):
        a = run_scenario(config_of("shared-battery"), small_corpus)
        b = run_scenario(config_of("shared-battery"), small_corpus)
        assert np.array_equal(a.decisions, b.decisions)
        assert a.ledger.network_total() == b.ledger.network_total()

    def test_battery_lowers_cost_versus_grid_only(self, small_corpus):
        grid_only = run_scenario(config_of("shared-grid"), small_corpus)
        battery = run_scenario(config_of("shared-battery"), small_corpus)
        grid_opex = sum(grid_only.ledger.site_opex(u)
                        for u in grid_only.ledger.sites)
        batt_opex = sum(battery.ledger.site_opex(u)
                        for u in battery.ledger.sites)
        assert batt_opex < grid_opex

    def test_horizon_cannot_exceed_corpus(self, small_corpus):
        cfg = config_of("shared-battery",
                        horizon_steps=small_corpus.n_steps + 1)
        with pytest.raises(ValueError, match="horizon exceeds"):
            run_scenario(cfg, small_corpus)

    def test_scenario_variant_overrides_fields(self):
        cfg = config_of("shared-battery")
        other = scenario_variant(cfg, kind="shared-grid", zeta=0.5)
        assert other.kind == "shared-grid"
        assert other.zeta == 0.5
        assert other.n_sites == cfg.n_sites


class TestRunArtifacts:
    def test_artifact_files_written(self, tmp_path, small_corpus):
        run_scenario(config_of("shared-battery"), small_corpus, tmp_path)
        for name in ("decisions.csv", "soc.csv", "ledger.csv",
                     "overrides.csv", "geo_snapshot.geojson"):
            assert (tmp_path / name).exists(), name

    def test_geojson_is_feature_collection(self, tmp_path, small_corpus):
        import json
        run_scenario(config_of("shared-battery"), small_corpus, tmp_path)
        geo = json.loads((tmp_path / "geo_snapshot.geojson").read_text())
        assert geo["type"] == "FeatureCollection"
        assert geo["features"]
        feature = geo["features"][0]
        assert feature["geometry"]["type"] == "Point"
        assert {"stored_kwh", "required_kwh"} <= set(feature["properties"])

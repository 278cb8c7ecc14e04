"""Topology invariants, sharing ratios, and the topology file round-trip."""

import pytest
from hypothesis import given, strategies as st

from gridshare.domain import (
    NetworkTopology,
    TimeGrid,
    TopologyError,
    exclusive_ratio,
    load_topology,
    save_topology,
    sharing_ratio,
    validate_topology,
)

from conftest import make_topology


def topo_with_shares(shares, infra_of=None):
    sites = tuple(range(len(shares)))
    infra_of = infra_of or {u: 0 for u in sites}
    return NetworkTopology(
        mnos=frozenset({0}),
        sites=sites,
        infrastructures=frozenset(infra_of.values()),
        owner_of={u: 0 for u in sites},
        infra_of=infra_of,
        share_of=dict(zip(sites, shares)),
    )


class TestValidateTopology:
    def test_two_even_shares_pass(self):
        assert validate_topology(topo_with_shares([0.5, 0.5])) == []

    def test_single_exclusive_site_passes(self):
        assert validate_topology(topo_with_shares([1.0])) == []

    def test_shares_summing_beyond_one_fail(self):
        problems = validate_topology(topo_with_shares([0.7, 0.5]))
        assert len(problems) == 1
        assert "shares sum 1.2" in problems[0]

    def test_share_outside_unit_interval_flagged(self):
        problems = validate_topology(topo_with_shares([1.5]))
        assert any("outside (0, 1]" in p for p in problems)

    def test_orphan_site_flagged(self):
        topo = topo_with_shares([1.0])
        broken = NetworkTopology(
            mnos=topo.mnos, sites=topo.sites,
            infrastructures=topo.infrastructures,
            owner_of={}, infra_of=topo.infra_of, share_of=topo.share_of,
        )
        assert any("has no owner" in p for p in validate_topology(broken))

    def test_unknown_infrastructure_flagged(self):
        topo = topo_with_shares([1.0])
        broken = NetworkTopology(
            mnos=topo.mnos, sites=topo.sites, infrastructures=frozenset({99}),
            owner_of=topo.owner_of, infra_of=topo.infra_of,
            share_of=topo.share_of,
        )
        assert any("unknown infrastructure" in p for p in validate_topology(broken))


class TestSharingRatio:
    def test_all_exclusive_is_zero(self):
        topo = topo_with_shares([1.0, 1.0], infra_of={0: 0, 1: 1})
        assert sharing_ratio(topo) == 0.0
        assert exclusive_ratio(topo) == 1.0

    def test_all_shared_is_one(self, shared_topology):
        assert sharing_ratio(shared_topology) == 1.0
        assert exclusive_ratio(shared_topology) == 0.0

    def test_half_shared(self):
        shares = [0.5, 0.5, 1.0, 1.0]
        topo = topo_with_shares(shares, infra_of={0: 0, 1: 0, 2: 1, 3: 2})
        assert sharing_ratio(topo) == 0.5

    def test_empty_topology_rejected(self):
        empty = NetworkTopology(
            mnos=frozenset(), sites=(), infrastructures=frozenset(),
            owner_of={}, infra_of={}, share_of={},
        )
        with pytest.raises(TopologyError):
            sharing_ratio(empty)


class TestSitesOfInfrastructure:
    def test_single_site(self):
        topo = topo_with_shares([1.0])
        assert topo.sites_of_infrastructure(0) == (0,)

    def test_map_inversion(self):
        topo = topo_with_shares([0.5, 0.5, 1.0], infra_of={0: 0, 1: 0, 2: 1})
        assert topo.sites_of_infrastructure(0) == (0, 1)
        assert topo.sites_of_infrastructure(1) == (2,)

    def test_unknown_infra_raises(self):
        with pytest.raises(TopologyError):
            topo_with_shares([1.0]).sites_of_infrastructure(42)

    @given(st.integers(2, 30), st.integers(1, 5))
    def test_partition_property(self, n_sites, group_size):
        topo = make_topology(
            n_sites=n_sites - n_sites % group_size or group_size,
            group_size=group_size,
        )
        groups = topo.infrastructure_sites()
        covered = sorted(u for g in groups.values() for u in g)
        assert covered == sorted(topo.sites)
        assert sum(len(g) for g in groups.values()) == topo.n_sites


class TestTimeGrid:
    def test_defaults(self):
        grid = TimeGrid(horizon_steps=96)
        assert grid.step_minutes == 15
        assert grid.step_hours == 0.25
        assert grid.steps_per_day == 96

    def test_invalid_horizon_rejected(self):
        with pytest.raises(ValueError):
            TimeGrid(horizon_steps=0)


class TestTopologyFile:
    def test_round_trip(self, tmp_path, shared_topology):
        path = tmp_path / "topology.csv"
        save_topology(shared_topology, path)
        loaded = load_topology(path)
        assert loaded.sites == shared_topology.sites
        assert loaded.owner_of == shared_topology.owner_of
        assert loaded.infra_of == shared_topology.infra_of
        assert loaded.share_of == shared_topology.share_of

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "topology.csv"
        path.write_text("not a schema header\nsite,mno,infra,share\n")
        with pytest.raises(TopologyError):
            load_topology(path)

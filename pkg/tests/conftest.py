"""Shared fixtures: a small synthetic corpus and common builders."""

import numpy as np
import pytest

from gridshare.domain import NetworkTopology, TimeGrid
from gridshare.ingest import GeneratorConfig, generate_synthetic_dataset


@pytest.fixture(scope="session")
def small_corpus():
    """Six sites, three days: big enough for windows, fast to generate."""
    grid = TimeGrid(horizon_steps=3 * 96)
    return generate_synthetic_dataset(tuple(range(6)), grid, seed=0,
                                      config=GeneratorConfig())


@pytest.fixture(scope="session")
def week_corpus():
    """Twelve sites, seven days: used by the slower learning tests."""
    grid = TimeGrid(horizon_steps=7 * 96)
    return generate_synthetic_dataset(tuple(range(12)), grid, seed=0,
                                      config=GeneratorConfig())


def make_topology(n_sites=6, n_mnos=2, group_size=3):
    """Fully shared topology of consecutive equal-share groups."""
    sites = tuple(range(n_sites))
    infra_of = {u: u // group_size for u in sites}
    return NetworkTopology(
        mnos=frozenset(range(n_mnos)),
        sites=sites,
        infrastructures=frozenset(infra_of.values()),
        owner_of={u: u % n_mnos for u in sites},
        infra_of=infra_of,
        share_of={u: 1.0 / group_size for u in sites},
    )


@pytest.fixture
def shared_topology():
    return make_topology()

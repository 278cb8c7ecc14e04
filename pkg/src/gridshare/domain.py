"""Static system topology, time discretization, and sharing-share bookkeeping.

A *site* is a radio installation with a scalar energy demand per step.  Each
site belongs to exactly one operator (MNO) and is fed by exactly one energy
infrastructure.  An infrastructure may feed several sites, in which case its
capital and rental costs are split according to per-site shares that sum to
one within the infrastructure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

SHARE_TOL = 1e-9

TOPOLOGY_SCHEMA_HEADER = "# gridshare-topology v1"


class TopologyError(ValueError):
    """Raised for structurally unusable topologies (empty, unknown ids)."""


@dataclass(frozen=True)
class TimeGrid:
    """Discrete simulation clock: ``horizon_steps`` steps of ``step_minutes``."""

    horizon_steps: int
    step_minutes: float = 15.0
    start_epoch: str = "2024-01-01T00:00:00"

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.step_minutes <= 0:
            raise ValueError("step_minutes must be > 0")

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def steps_per_day(self) -> int:
        return int(round(24 * 60 / self.step_minutes))


@dataclass(frozen=True)
class NetworkTopology:
    """Operators, sites, infrastructures and the maps connecting them.

    ``share_of[u]`` is the fraction of infrastructure ``infra_of[u]`` paid for
    by site ``u``; shares within one infrastructure sum to 1, and a site that
    does not share its infrastructure carries share 1.
    """

    mnos: frozenset
    sites: tuple
    infrastructures: frozenset
    owner_of: dict
    infra_of: dict
    share_of: dict
    latlon_of: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def sites_of_infrastructure(self, infra) -> tuple:
        """All sites fed by ``infra``, ascending by site id."""
        if infra not in self.infrastructures:
            raise TopologyError(f"unknown infrastructure id: {infra!r}")
        return tuple(u for u in self.sites if self.infra_of[u] == infra)

    def infrastructure_sites(self) -> dict:
        """Map infra id -> tuple of its sites (a partition of the sites)."""
        groups: dict = {i: [] for i in self.infrastructures}
        for u in self.sites:
            groups[self.infra_of[u]].append(u)
        return {i: tuple(sorted(g)) for i, g in groups.items()}


def validate_topology(topology: NetworkTopology) -> list[str]:
    """Check topology invariants; returns a list of violations (empty = pass)."""
    problems: list[str] = []
    if not topology.sites:
        problems.append("topology has no sites")
    seen = set()
    for u in topology.sites:
        if u in seen:
            problems.append(f"duplicate site id {u!r}")
        seen.add(u)
        if u not in topology.owner_of:
            problems.append(f"site {u!r} has no owner")
        elif topology.owner_of[u] not in topology.mnos:
            problems.append(f"site {u!r} owned by unknown MNO {topology.owner_of[u]!r}")
        if u not in topology.infra_of:
            problems.append(f"site {u!r} has no infrastructure")
        elif topology.infra_of[u] not in topology.infrastructures:
            problems.append(
                f"site {u!r} mapped to unknown infrastructure {topology.infra_of[u]!r}"
            )
        share = topology.share_of.get(u)
        if share is None:
            problems.append(f"site {u!r} has no share")
        elif not (0.0 < share <= 1.0):
            problems.append(f"site {u!r} share {share} outside (0, 1]")
    # Shares must sum to 1 within each infrastructure; a lone site must
    # therefore carry share 1 exactly.
    by_infra: dict = {}
    for u in topology.sites:
        i = topology.infra_of.get(u)
        if i in topology.infrastructures:
            by_infra.setdefault(i, []).append(u)
    for i, members in sorted(by_infra.items(), key=lambda kv: str(kv[0])):
        total = sum(topology.share_of.get(u, 0.0) for u in members)
        if abs(total - 1.0) > SHARE_TOL:
            problems.append(f"infrastructure {i!r}: shares sum {total:.6g} != 1")
    return problems


def is_shared(topology: NetworkTopology, site) -> bool:
    """A site shares its infrastructure iff its cost share is below 1."""
    return topology.share_of[site] < 1.0 - SHARE_TOL


def sharing_ratio(topology: NetworkTopology) -> float:
    """Fraction of sites participating in shared infrastructure (share < 1)."""
    if not topology.sites:
        raise TopologyError("sharing_ratio of an empty topology")
    shared = sum(1 for u in topology.sites if is_shared(topology, u))
    return shared / len(topology.sites)


def exclusive_ratio(topology: NetworkTopology) -> float:
    """Fraction of sites on non-shared infrastructure (share = 1)."""
    if not topology.sites:
        raise TopologyError("exclusive_ratio of an empty topology")
    return 1.0 - sharing_ratio(topology)


def save_topology(topology: NetworkTopology, path) -> None:
    """Write the topology CSV (schema: site,mno,infra,share[,lat,lon])."""
    with open(path, "w", newline="") as fh:
        fh.write(TOPOLOGY_SCHEMA_HEADER + "\n")
        writer = csv.writer(fh)
        writer.writerow(["site", "mno", "infra", "share", "lat", "lon"])
        for u in topology.sites:
            lat, lon = topology.latlon_of.get(u, ("", ""))
            writer.writerow(
                [
                    u,
                    topology.owner_of[u],
                    topology.infra_of[u],
                    repr(topology.share_of[u]),
                    repr(lat) if lat != "" else "",
                    repr(lon) if lon != "" else "",
                ]
            )


def load_topology(path) -> NetworkTopology:
    """Load a topology CSV written by :func:`save_topology`."""
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != TOPOLOGY_SCHEMA_HEADER:
            raise TopologyError(f"{path}: unexpected schema header {header!r}")
        reader = csv.DictReader(fh)
        sites, owner_of, infra_of, share_of, latlon_of = [], {}, {}, {}, {}
        for row in reader:
            u = int(row["site"])
            sites.append(u)
            owner_of[u] = int(row["mno"])
            infra_of[u] = int(row["infra"])
            share_of[u] = float(row["share"])
            if row.get("lat") and row.get("lon"):
                latlon_of[u] = (float(row["lat"]), float(row["lon"]))
    topo = NetworkTopology(
        mnos=frozenset(owner_of.values()),
        sites=tuple(sites),
        infrastructures=frozenset(infra_of.values()),
        owner_of=owner_of,
        infra_of=infra_of,
        share_of=share_of,
        latlon_of=latlon_of,
    )
    problems = validate_topology(topo)
    if problems:
        raise TopologyError(f"{path}: invalid topology: " + "; ".join(problems))
    return topo

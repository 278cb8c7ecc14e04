"""Total cost of ownership: CAPEX attribution by share, OPEX accumulation.

Each site pays its own grid-served load in full and a share of its
infrastructure's battery-charging grid draw; capital costs are attributed
once at t = 0 by the same share.  Infrastructure rent is quoted per year and
pro-rated per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

HOURS_PER_YEAR = 8760.0


@dataclass(frozen=True)
class CostParams:
    """Cost constants in euro; defaults follow the simulation parameter set."""

    infra_capex: float = 0.0
    battery_capex: float = 10_000.0
    renew_capex: float = 3_000.0
    rent_per_year: float = 50_000.0
    default_price: float = 0.28  # euro/kWh

    def __post_init__(self):
        for name in ("infra_capex", "battery_capex", "renew_capex",
                     "rent_per_year", "default_price"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def capex_of_site(
    params: CostParams,
    share: float,
    has_battery: bool = False,
    has_renewable: bool = False,
) -> float:
    """One-time capital cost attributed to a site by its share."""
    if not (0.0 < share <= 1.0):
        raise ValueError(f"share {share} outside (0, 1]")
    assets = params.infra_capex
    if has_battery:
        assets += params.battery_capex
    if has_renewable:
        assets += params.renew_capex
    return share * assets


def opex_step(
    params: CostParams,
    grid_to_load: float,
    grid_to_battery: float,
    share: float,
    price: float,
    step_hours: float,
    rent_applies: bool = True,
) -> float:
    """Operating cost of one step for one site.

    Grid-served load is paid in full; the infrastructure's grid charging
    draw is paid by share.  Rent is the per-year rate pro-rated to the step.
    """
    if grid_to_load < 0 or grid_to_battery < 0:
        raise ValueError("energy flows must be >= 0")
    energy = price * (grid_to_load + share * grid_to_battery)
    rent = share * params.rent_per_year * (step_hours / HOURS_PER_YEAR) if rent_applies else 0.0
    return energy + rent


@dataclass
class CostLedger:
    """Per-site cost record over a run: CAPEX at t = 0, OPEX per step."""

    sites: tuple
    capex: dict = field(default_factory=dict)
    opex_series: dict = field(default_factory=dict)  # site -> list of euro/step

    def __post_init__(self):
        for u in self.sites:
            self.capex.setdefault(u, 0.0)
            self.opex_series.setdefault(u, [])

    def book_capex(self, site, amount: float) -> None:
        self.capex[site] += amount

    def book_opex(self, site, amount: float) -> None:
        if amount < 0:
            raise ValueError("opex must be >= 0")
        self.opex_series[site].append(amount)

    @property
    def n_steps(self) -> int:
        return max((len(s) for s in self.opex_series.values()), default=0)

    def site_opex(self, site, up_to: int | None = None) -> float:
        series = self.opex_series[site]
        return sum(series if up_to is None else series[:up_to])

    def site_total(self, site, up_to: int | None = None) -> float:
        return self.capex[site] + self.site_opex(site, up_to)

    def network_total(self, up_to: int | None = None) -> float:
        return sum(self.site_total(u, up_to) for u in self.sites)


def total_cost(ledger: CostLedger, up_to: int | None = None) -> tuple[dict, float]:
    """Per-site totals and the network total up to the given step."""
    per_site = {u: ledger.site_total(u, up_to) for u in ledger.sites}
    return per_site, sum(per_site.values())


def cumulative_per_site_series(ledger: CostLedger) -> list[float]:
    """Average cumulative cost per site after each step (CAPEX booked first)."""
    n = len(ledger.sites)
    total = sum(ledger.capex.values())
    out = []
    for t in range(ledger.n_steps):
        total += sum(
            ledger.opex_series[u][t] if t < len(ledger.opex_series[u]) else 0.0
            for u in ledger.sites
        )
        out.append(total / n)
    return out


def annual_network_totals(ledger: CostLedger, steps_per_year: int) -> list[float]:
    """Network cost per simulated year; CAPEX is booked into year 1."""
    n_steps = ledger.n_steps
    years = max(1, -(-n_steps // steps_per_year))
    totals = [0.0] * years
    totals[0] += sum(ledger.capex.values())
    for u in ledger.sites:
        for t, value in enumerate(ledger.opex_series[u]):
            totals[t // steps_per_year] += value
    return totals

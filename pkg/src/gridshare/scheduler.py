"""Per-window energy-source selection.

The joint source-selection problem decomposes per infrastructure: the
objective (grid cost) is additive over sites and the only coupling constraint
is each infrastructure's battery budget.  Each subproblem is a 0/1 knapsack:
pick the subset of sites to serve from the battery that maximizes avoided
grid cost subject to the discharge budget.  We solve it exactly by dynamic
programming on demands quantized to 1 Wh, with an exhaustive brute-force
solver kept as an independent oracle.

Both solvers share one tie-break: among optimal subsets, prefer serving the
lowest-numbered sites from the battery (lexicographically greatest inclusion
vector in ascending site-id order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .battery import BatteryState, ChargeInput, available_discharge_budget, mixed_charge

WH_PER_KWH = 1000  # default demand quantum for the DP: 1 Wh
PRICE_QUANTUM = 1e-6  # euro/kWh resolution used for exact integer values
BRUTEFORCE_MAX_SITES = 20


class InstanceError(ValueError):
    """Raised for malformed scheduling instances."""


@dataclass(frozen=True)
class InfraInstance:
    """One infrastructure's subproblem for a single control window."""

    infra: int
    sites: tuple  # site ids, ascending
    demands: tuple  # predicted kWh per site, same order
    prices: tuple  # euro/kWh per site, same order
    battery_budget: float  # kWh the scheduler may discharge this window
    soh_ok: bool = True

    def __post_init__(self):
        if len(self.demands) != len(self.sites) or len(self.prices) != len(self.sites):
            raise InstanceError("sites/demands/prices length mismatch")
        if any(d < 0 for d in self.demands):
            raise InstanceError("negative demand")
        if any(p < 0 for p in self.prices):
            raise InstanceError("negative price")
        if self.battery_budget < 0:
            raise InstanceError("negative battery budget")
        if tuple(sorted(self.sites)) != tuple(self.sites):
            raise InstanceError("sites must be ascending")


@dataclass(frozen=True)
class SchedulingInstance:
    """The full per-window problem: one subproblem per infrastructure."""

    infras: tuple  # tuple of InfraInstance, ascending by infra id

    @property
    def sites(self) -> tuple:
        return tuple(u for sub in self.infras for u in sub.sites)


@dataclass(frozen=True)
class SourcePlan:
    """Solver output: per-site source decision plus charging for the window.

    decision[u] is 1 to serve site u from the battery, 0 from the grid.
    objective_value is the window's grid cost for serving loads (charging
    cost is accounted separately by the ledger).
    """

    decision: dict
    charge: dict = field(default_factory=dict)  # infra -> ChargeInput
    objective_value: float = 0.0


def quantize_demand(demand_kwh: float, quantum: int = WH_PER_KWH) -> int:
    """Demand in integer quanta (default Wh), rounded up.

    Rounding up makes quantized feasibility conservative: any subset the DP
    accepts also satisfies the continuous budget, so realized loads under
    perfect forecasts can never breach the monitor's safeguard.
    """
    return int(np.ceil(demand_kwh * quantum - 1e-9))


def quantize_budget(budget_kwh: float, quantum: int = WH_PER_KWH) -> int:
    """Budget in integer quanta, rounded down so feasibility is conservative."""
    return int(np.floor(budget_kwh * quantum + 1e-9))


def _integer_items(sub: InfraInstance, quantum: int):
    """Integer (weight, value) pairs shared by both solvers.

    Values are scaled to integers so optimality comparisons and tie-breaks
    are exact in both solvers.
    """
    weights = np.array([quantize_demand(d, quantum) for d in sub.demands], dtype=np.int64)
    prices_q = np.array(
        [int(np.floor(p / PRICE_QUANTUM + 0.5)) for p in sub.prices], dtype=np.int64
    )
    values = weights * prices_q
    return weights, values


def _grid_cost(sub: InfraInstance, chosen: set) -> float:
    """Window grid cost given the battery-served set, fixed summation order."""
    cost = 0.0
    for u, d, p in zip(sub.sites, sub.demands, sub.prices):
        if u not in chosen:
            cost += p * d
    return cost


def _solve_infra_dp(sub: InfraInstance, quantum: int) -> set:
    """Exact knapsack via DP over suffix tables; returns the battery set."""
    if not sub.soh_ok:
        return set()
    weights, values = _integer_items(sub, quantum)
    capacity = quantize_budget(sub.battery_budget, quantum)
    # Zero-quantum demands are forced to the grid: discharging 0 kWh is a
    # no-op and must not flip under a zero budget.
    active = [j for j in range(len(sub.sites)) if weights[j] > 0]
    if not active or capacity <= 0:
        return set()
    capacity = min(capacity, int(weights[active].sum()))
    n = len(active)
    # dp[k][c] = best value using active items k.. with capacity c.
    dp = np.zeros((n + 1, capacity + 1), dtype=np.int64)
    for k in range(n - 1, -1, -1):
        j = active[k]
        w, v = int(weights[j]), int(values[j])
        dp[k] = dp[k + 1]
        if w <= capacity:
            take = dp[k + 1][: capacity + 1 - w] + v
            keep = dp[k][w:]
            dp[k][w:] = np.maximum(keep, take)
    # Greedy front-to-back: include a site whenever inclusion still attains
    # the optimum, which yields the shared lowest-id-first tie-break.
    chosen: set = set()
    c = capacity
    for k in range(n):
        j = active[k]
        w, v = int(weights[j]), int(values[j])
        if w <= c and dp[k + 1][c - w] + v == dp[k][c]:
            chosen.add(sub.sites[j])
            c -= w
    return chosen


def _solve_infra_bruteforce(sub: InfraInstance, quantum: int) -> set:
    """Exhaustive oracle over all subsets, same integer domain and tie-break."""
    if len(sub.sites) > BRUTEFORCE_MAX_SITES:
        raise InstanceError(
            f"brute force limited to {BRUTEFORCE_MAX_SITES} sites per "
            f"infrastructure, got {len(sub.sites)}"
        )
    if not sub.soh_ok:
        return set()
    weights, values = _integer_items(sub, quantum)
    capacity = quantize_budget(sub.battery_budget, quantum)
    n = len(sub.sites)
    if n == 0:
        return set()
    masks = np.arange(2**n, dtype=np.int64)
    incl = (masks[:, None] >> np.arange(n)) & 1  # (2^n, n)
    zero_w = weights == 0
    feasible = (incl @ weights <= capacity) & ~(incl[:, zero_w].any(axis=1))
    totals = incl @ values
    totals = np.where(feasible, totals, -1)
    best = totals.max()
    if best < 0:
        return set()
    # Tie-break identical to the DP: lexicographically greatest inclusion
    # vector in ascending site order (battery to the lowest-numbered sites).
    candidates = np.nonzero(totals == best)[0]
    best_vec = max(tuple(incl[m]) for m in candidates)
    return {sub.sites[j] for j in range(n) if best_vec[j]}


def _assemble_plan(instance: SchedulingInstance, per_infra_sets: dict) -> SourcePlan:
    decision: dict = {}
    objective = 0.0
    for sub in instance.infras:
        chosen = per_infra_sets[sub.infra]
        for u in sub.sites:
            decision[u] = 1 if u in chosen else 0
        objective += _grid_cost(sub, chosen)
    return SourcePlan(decision=decision, objective_value=objective)


def solve_knapsack_dp(
    instance: SchedulingInstance, quantum: int = WH_PER_KWH
) -> SourcePlan:
    """Optimal per-window source plan via per-infrastructure knapsack DP."""
    sets = {sub.infra: _solve_infra_dp(sub, quantum) for sub in instance.infras}
    return _assemble_plan(instance, sets)


def solve_bruteforce(
    instance: SchedulingInstance, quantum: int = WH_PER_KWH
) -> SourcePlan:
    """Exhaustive reference solver; oracle for solve_knapsack_dp."""
    sets = {sub.infra: _solve_infra_bruteforce(sub, quantum) for sub in instance.infras}
    return _assemble_plan(instance, sets)


def build_instance(
    forecasts: dict,
    battery_states: dict,
    charge_inputs: dict,
    price: float,
    infra_sites: dict,
    soc_min: float,
    soh_min: float,
    margin: float = 0.0,
) -> SchedulingInstance:
    """Assemble the per-window problem from forecasts and battery state.

    ``infra_sites`` maps infra id -> tuple of its sites; infrastructures
    missing from ``battery_states`` have no battery (budget 0).  ``margin``
    shrinks budgets so the monitor's safeguard is already honored at planning
    time.  soh_ok requires the health to survive a worst-case full SoC swing.
    """
    if price < 0:
        raise InstanceError("negative grid price")
    subs = []
    for infra in sorted(infra_sites):
        sites = tuple(sorted(infra_sites[infra]))
        missing = [u for u in sites if u not in forecasts]
        if missing:
            raise InstanceError(f"missing forecast for sites {missing}")
        state = battery_states.get(infra)
        if state is None:
            budget, soh_ok = 0.0, False
        else:
            inp = charge_inputs.get(infra, ChargeInput())
            budget = (1.0 - margin) * available_discharge_budget(state, inp, soc_min)
            soh_ok = (state.soh - state.kappa * 1.0) >= soh_min
        subs.append(
            InfraInstance(
                infra=infra,
                sites=sites,
                demands=tuple(float(forecasts[u]) for u in sites),
                prices=tuple(float(price) for _ in sites),
                battery_budget=budget,
                soh_ok=soh_ok,
            )
        )
    return SchedulingInstance(infras=tuple(subs))


def plan_charging(
    battery_states: dict,
    renewable_forecast: dict,
    price: float,
    price_history: list,
    grid_charge_percentile: float = 25.0,
    grid_charge_enabled: bool = True,
) -> dict:
    """Renewable-first charging plan, one ChargeInput per infrastructure.

    Renewables charge up to headroom.  A grid top-up fills the remaining
    headroom only when the current price sits at or below the configured
    percentile of the trailing price history *and* that history has actual
    dispersion; under a flat tariff every price trivially clears its own
    percentile and grid charging would only burn battery cycles.
    """
    plans: dict = {}
    history = np.asarray(price_history, dtype=float)
    cheap = False
    if grid_charge_enabled and history.size >= 4:
        lo = float(np.percentile(history, grid_charge_percentile))
        hi = float(np.percentile(history, 100.0 - grid_charge_percentile))
        cheap = (price <= lo) and (lo < hi)
    for infra in sorted(battery_states):
        state = battery_states[infra]
        headroom = (1.0 - state.soc) * state.capacity_kwh
        ren = min(max(0.0, renewable_forecast.get(infra, 0.0)), headroom)
        if ren > 0.0:
            # Single-source step; renewables win ties.
            plans[infra] = ChargeInput(grid_charge=0.0, ren_charge=ren, mix=0.0)
        elif cheap and headroom > 0.0:
            plans[infra] = ChargeInput(grid_charge=headroom, ren_charge=0.0, mix=1.0)
        else:
            plans[infra] = ChargeInput()
    return plans


def apply_hysteresis(
    previous_plans: list,
    new_plan: SourcePlan,
    min_dwell: int,
    instance: SchedulingInstance | None = None,
) -> SourcePlan:
    """Suppress source flapping: keep a recently switched site on its old
    source for ``min_dwell`` further windows unless that would overrun the
    battery budget.

    ``previous_plans`` holds the most recent plans, oldest first.  With
    min_dwell = 0 (the default pure per-window optimization) the new plan is
    returned unchanged.
    """
    if min_dwell < 0:
        raise ValueError("min_dwell must be >= 0")
    if min_dwell == 0 or not previous_plans:
        return new_plan
    last = previous_plans[-1]

    def switched_recently(u) -> bool:
        # A switch happened j windows ago if plans -j and -j-1 disagree.
        for j in range(1, min_dwell + 1):
            if j + 1 > len(previous_plans):
                break
            a = previous_plans[-j].decision.get(u)
            b = previous_plans[-j - 1].decision.get(u)
            if a is not None and b is not None and a != b:
                return True
        return False

    sticky: dict = {}
    for u, d_new in new_plan.decision.items():
        d_last = last.decision.get(u, d_new)
        if d_new != d_last and switched_recently(u):
            sticky[u] = d_last
    if not sticky:
        return new_plan
    decision = dict(new_plan.decision)
    if instance is None:
        decision.update(sticky)
        return SourcePlan(decision=decision, charge=new_plan.charge)
    objective = 0.0
    for sub in instance.infras:
        load = sum(
            sub.demands[k]
            for k, u in enumerate(sub.sites)
            if decision[u] == 1 and u not in sticky
        )
        for k, u in enumerate(sub.sites):
            if u not in sticky:
                continue
            if sticky[u] == 1:
                # Retention back onto the battery only if the budget allows.
                if sub.soh_ok and load + sub.demands[k] <= sub.battery_budget:
                    decision[u] = 1
                    load += sub.demands[k]
            else:
                decision[u] = 0
        chosen = {u for u in sub.sites if decision[u] == 1}
        objective += _grid_cost(sub, chosen)
    return SourcePlan(decision=decision, charge=new_plan.charge, objective_value=objective)


# Debug/golden-file round-trip format -------------------------------------


def instance_to_json(instance: SchedulingInstance) -> str:
    return json.dumps(
        {
            "format": "gridshare-instance",
            "version": 1,
            "infras": [
                {
                    "infra": sub.infra,
                    "sites": list(sub.sites),
                    "demands": list(sub.demands),
                    "prices": list(sub.prices),
                    "battery_budget": sub.battery_budget,
                    "soh_ok": sub.soh_ok,
                }
                for sub in instance.infras
            ],
        },
        sort_keys=True,
    )


def instance_from_json(text: str) -> SchedulingInstance:
    doc = json.loads(text)
    if doc.get("format") != "gridshare-instance":
        raise InstanceError("not a scheduling-instance document")
    return SchedulingInstance(
        infras=tuple(
            InfraInstance(
                infra=sub["infra"],
                sites=tuple(sub["sites"]),
                demands=tuple(sub["demands"]),
                prices=tuple(sub["prices"]),
                battery_budget=sub["battery_budget"],
                soh_ok=sub["soh_ok"],
            )
            for sub in doc["infras"]
        )
    )


def plan_to_json(plan: SourcePlan) -> str:
    return json.dumps(
        {
            "format": "gridshare-plan",
            "version": 1,
            "decision": {str(u): d for u, d in sorted(plan.decision.items())},
            "charge": {
                str(i): [c.grid_charge, c.ren_charge, c.mix]
                for i, c in sorted(plan.charge.items())
            },
            "objective_value": plan.objective_value,
        },
        sort_keys=True,
    )


def plan_from_json(text: str) -> SourcePlan:
    doc = json.loads(text)
    if doc.get("format") != "gridshare-plan":
        raise InstanceError("not a source-plan document")
    return SourcePlan(
        decision={int(u): d for u, d in doc["decision"].items()},
        charge={
            int(i): ChargeInput(grid_charge=g, ren_charge=r, mix=m)
            for i, (g, r, m) in doc["charge"].items()
        },
        objective_value=doc["objective_value"],
    )

"""Shared-battery state evolution: SoC, SoH, capacity derating, budgets.

State lives at the infrastructure level.  Stepping is purely functional:
``step_soc``/``step_soh`` map an old state to numbers for a new one, so
distinct infrastructures can be advanced independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

SOC_EPS = 1e-9


class BatteryFault(RuntimeError):
    """Raised when a step would leave the battery in an impossible state."""


@dataclass(frozen=True)
class BatteryState:
    """State of one infrastructure's battery.

    soc: state of charge, fraction of effective capacity in [0, 1].
    soh: state of health, remaining capacity fraction in (0, 1].
    omega_init: nameplate capacity in kWh.
    kappa: degradation lost per unit of SoC swing.
    """

    soc: float
    soh: float = 1.0
    omega_init: float = 50.0
    kappa: float = 8.85e-6

    def __post_init__(self):
        if not (0.0 <= self.soc <= 1.0):
            raise ValueError(f"soc {self.soc} outside [0, 1]")
        if not (0.0 < self.soh <= 1.0):
            raise ValueError(f"soh {self.soh} outside (0, 1]")
        if self.omega_init <= 0:
            raise ValueError("omega_init must be > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")

    @property
    def capacity_kwh(self) -> float:
        return effective_capacity(self)

    @property
    def stored_kwh(self) -> float:
        return self.soc * effective_capacity(self)


@dataclass(frozen=True)
class ChargeInput:
    """Charging energy offered this step, with the grid/renewable mix weight.

    mix = 1 charges from the grid only, mix = 0 from renewables only; the
    effective charge is the mix-weighted combination of the two flows.
    """

    grid_charge: float = 0.0
    ren_charge: float = 0.0
    mix: float = 0.0

    def __post_init__(self):
        if self.grid_charge < 0 or self.ren_charge < 0:
            raise ValueError("charge energies must be >= 0")
        if not (0.0 <= self.mix <= 1.0):
            raise ValueError(f"mix {self.mix} outside [0, 1]")


NO_CHARGE = ChargeInput()


def effective_capacity(state: BatteryState) -> float:
    """Usable capacity in kWh: nameplate derated by the state of health."""
    return state.omega_init * state.soh


def mixed_charge(inp: ChargeInput) -> float:
    """Effective charge input in kWh, the mix-weighted grid/renewable blend."""
    return inp.mix * inp.grid_charge + (1.0 - inp.mix) * inp.ren_charge


def step_soc(state: BatteryState, inp: ChargeInput, discharge_total: float) -> float:
    """New SoC after one step of charging and aggregate discharging.

    ``discharge_total`` is the summed battery-to-load energy over all sites on
    this infrastructure.  The capacity in the denominator is the SoH-derated
    capacity at the start of the step.
    """
    if discharge_total < 0:
        raise ValueError("discharge_total must be >= 0")
    omega = effective_capacity(state)
    new_soc = state.soc + (mixed_charge(inp) - discharge_total) / omega
    if new_soc < -SOC_EPS:
        raise BatteryFault(
            f"battery depleted: SoC {state.soc:.6f} -> {new_soc:.6f} "
            f"(discharge {discharge_total:.6f} kWh exceeds stored energy)"
        )
    if new_soc > 1.0 + SOC_EPS:
        raise BatteryFault(
            f"battery overcharged: SoC {state.soc:.6f} -> {new_soc:.6f}"
        )
    return min(1.0, max(0.0, new_soc))


def step_soh(state: BatteryState, old_soc: float, new_soc: float) -> float:
    """New SoH after the given SoC swing of the infrastructure aggregate."""
    if not (0.0 <= old_soc <= 1.0) or not (0.0 <= new_soc <= 1.0):
        raise ValueError("SoC values must lie in [0, 1]")
    new_soh = state.soh - state.kappa * abs(new_soc - old_soc)
    if new_soh <= 0.0:
        raise BatteryFault("state of health exhausted (<= 0)")
    return new_soh


def step(state: BatteryState, inp: ChargeInput, discharge_total: float) -> BatteryState:
    """Advance one step: SoC update followed by SoH degradation."""
    new_soc = step_soc(state, inp, discharge_total)
    new_soh = step_soh(state, state.soc, new_soc)
    return replace(state, soc=new_soc, soh=new_soh)


def available_discharge_budget(
    state: BatteryState, inp: ChargeInput, soc_min: float
) -> float:
    """Maximum total battery-to-load energy the scheduler may allocate now.

    Headroom above the SoC floor plus this step's effective charge, capped at
    the effective capacity.
    """
    if not (0.0 <= soc_min < 1.0):
        raise ValueError(f"soc_min {soc_min} outside [0, 1)")
    omega = effective_capacity(state)
    budget = (state.soc - soc_min) * omega + mixed_charge(inp)
    return min(max(0.0, budget), omega)

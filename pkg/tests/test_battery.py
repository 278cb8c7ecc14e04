"""Battery stepping: SoC/SoH arithmetic, budgets, and trajectory invariants."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridshare.battery import (
    BatteryFault,
    BatteryState,
    ChargeInput,
    NO_CHARGE,
    available_discharge_budget,
    effective_capacity,
    mixed_charge,
    step,
    step_soc,
    step_soh,
)

KAPPA = 8.85e-6


class TestEffectiveCapacity:
    def test_fresh_battery(self):
        assert effective_capacity(BatteryState(soc=0.5, omega_init=50.0)) == 50.0

    def test_derated(self):
        state = BatteryState(soc=0.5, soh=0.9, omega_init=50.0)
        assert effective_capacity(state) == pytest.approx(45.0)

    def test_after_one_small_cycle(self):
        soh = 1.0 - KAPPA * 0.1
        state = BatteryState(soc=0.5, soh=soh, omega_init=50.0, kappa=KAPPA)
        assert effective_capacity(state) == pytest.approx(49.99995575)


class TestMixedCharge:
    def test_grid_only(self):
        assert mixed_charge(ChargeInput(10.0, 5.0, mix=1.0)) == 10.0

    def test_renewable_only(self):
        assert mixed_charge(ChargeInput(10.0, 5.0, mix=0.0)) == 5.0

    def test_even_blend(self):
        assert mixed_charge(ChargeInput(10.0, 5.0, mix=0.5)) == pytest.approx(7.5)


class TestStepSoc:
    def test_pure_charge(self):
        state = BatteryState(soc=0.5, omega_init=50.0)
        inp = ChargeInput(grid_charge=0.0, ren_charge=5.0, mix=0.0)
        assert step_soc(state, inp, 0.0) == pytest.approx(0.6)

    def test_net_zero_flow(self):
        state = BatteryState(soc=0.5, omega_init=50.0)
        inp = ChargeInput(ren_charge=3.0, mix=0.0)
        assert step_soc(state, inp, 3.0) == pytest.approx(0.5)

    def test_depletion_raises(self):
        state = BatteryState(soc=0.1, omega_init=50.0)
        with pytest.raises(BatteryFault, match="depleted"):
            step_soc(state, NO_CHARGE, 10.0)

    def test_overcharge_raises(self):
        state = BatteryState(soc=0.9, omega_init=50.0)
        inp = ChargeInput(ren_charge=10.0, mix=0.0)
        with pytest.raises(BatteryFault, match="overcharged"):
            step_soc(state, inp, 0.0)

    def test_negative_discharge_rejected(self):
        with pytest.raises(ValueError):
            step_soc(BatteryState(soc=0.5), NO_CHARGE, -1.0)


class TestStepSoh:
    def test_no_cycling_no_loss(self):
        state = BatteryState(soc=0.5, kappa=KAPPA)
        assert step_soh(state, 0.5, 0.5) == 1.0

    def test_tenth_swing(self):
        state = BatteryState(soc=0.5, kappa=KAPPA)
        assert step_soh(state, 0.5, 0.6) == pytest.approx(0.999999115)

    def test_full_cycle(self):
        state = BatteryState(soc=0.0, kappa=KAPPA)
        assert step_soh(state, 0.0, 1.0) == pytest.approx(0.99999115)


class TestDischargeBudget:
    def test_at_floor_without_charge(self):
        state = BatteryState(soc=0.1, omega_init=50.0)
        assert available_discharge_budget(state, NO_CHARGE, 0.1) == 0.0

    def test_headroom_above_floor(self):
        state = BatteryState(soc=0.5, omega_init=50.0)
        assert available_discharge_budget(state, NO_CHARGE, 0.1) == pytest.approx(20.0)

    def test_capped_at_capacity(self):
        state = BatteryState(soc=1.0, omega_init=50.0)
        inp = ChargeInput(grid_charge=10.0, mix=1.0)
        assert available_discharge_budget(state, inp, 0.1) == pytest.approx(50.0)


def random_trajectory(state, steps, rng, soc_min=0.0):
    """Drive a battery with admissible random charges/discharges."""
    charged = discharged = 0.0
    socs, sohs = [state.soc], [state.soh]
    for _ in range(steps):
        headroom = (1.0 - state.soc) * state.capacity_kwh
        inp = ChargeInput(ren_charge=float(rng.uniform(0, headroom)), mix=0.0)
        budget = available_discharge_budget(state, inp, soc_min)
        discharge = float(rng.uniform(0, budget))
        charged += mixed_charge(inp)
        discharged += discharge
        state = step(state, inp, discharge)
        socs.append(state.soc)
        sohs.append(state.soh)
    return state, np.array(socs), np.array(sohs), charged, discharged


class TestTrajectoryInvariants:
    def test_soc_bounds_and_monotone_soh(self):
        rng = np.random.default_rng(7)
        state = BatteryState(soc=0.5, kappa=KAPPA)
        _, socs, sohs, _, _ = random_trajectory(state, 2000, rng)
        assert np.all(socs >= 0.0) and np.all(socs <= 1.0)
        assert np.all(np.diff(sohs) <= 0.0)

    def test_energy_conservation_without_degradation(self):
        rng = np.random.default_rng(11)
        state = BatteryState(soc=0.5, omega_init=50.0, kappa=0.0)
        final, _, _, charged, discharged = random_trajectory(state, 2000, rng)
        lhs = final.soc * final.capacity_kwh
        rhs = 0.5 * 50.0 + charged - discharged
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))

    def test_week_of_cycling_degrades_below_analytic_bound(self):
        rng = np.random.default_rng(3)
        state = BatteryState(soc=0.5, kappa=KAPPA)
        final, _, _, _, _ = random_trajectory(state, 672, rng)
        assert 1.0 - final.soh < 672 * KAPPA + 1e-15

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_budget_safety(self, seed):
        """Discharging within the budget never drops SoC below the floor."""
        rng = np.random.default_rng(seed)
        soc_min = float(rng.uniform(0.0, 0.5))
        state = BatteryState(soc=float(rng.uniform(soc_min, 1.0)), kappa=KAPPA)
        _, socs, _, _, _ = random_trajectory(state, 200, rng, soc_min=soc_min)
        assert np.all(socs >= soc_min - 1e-9)


class TestValidation:
    def test_soc_range_enforced(self):
        with pytest.raises(ValueError):
            BatteryState(soc=1.5)

    def test_soh_range_enforced(self):
        with pytest.raises(ValueError):
            BatteryState(soc=0.5, soh=0.0)

    def test_charge_mix_range_enforced(self):
        with pytest.raises(ValueError):
            ChargeInput(mix=1.5)

    def test_negative_charge_rejected(self):
        with pytest.raises(ValueError):
            ChargeInput(grid_charge=-1.0)

import json

import numpy as np
import pytest

from orthoform.analysis import (
    ConvergenceReport,
    check_local_rate,
    fit_exponential_rate,
    monte_carlo,
    report_trajectory,
    sweep_initial_positions,
)
from orthoform.control import Gains
from orthoform.errors import InsufficientDataError, ValidationError
from orthoform.framework import regular_tetrahedron_formation
from orthoform.scenario import Scenario
from orthoform.sim import SimConfig, simulate

TET = regular_tetrahedron_formation()
UNIT = Gains.uniform(TET.graph)


def test_fit_exact_exponential():
    t = np.linspace(0, 5, 501)
    assert fit_exponential_rate(t, np.exp(-3 * t)) == pytest.approx(3.0, abs=1e-6)


def test_fit_rejects_flat_or_short_data():
    t = np.linspace(0, 5, 501)
    with pytest.raises(InsufficientDataError):
        fit_exponential_rate(t, np.full_like(t, 0.5))
    with pytest.raises(InsufficientDataError):
        fit_exponential_rate(t[:5], np.exp(-3 * t[:5]) * 1e-3)


def test_fit_agent2_decay():
    p0 = TET.desired_positions.copy()
    p0[1] = (2.0, 0, 0)
    gains = Gains({2: 2.0, 3: 1.0, 4: 1.0}, UNIT.nu, UNIT.lam)
    traj = simulate(TET, gains, SimConfig(t_max=8.0), p0)
    assert fit_exponential_rate(traj.times, np.abs(traj.errors[:, 0])) == pytest.approx(2.0, rel=0.02)


def report(fitted, predicted=1.0):
    return ConvergenceReport(True, "converged", 10.0, 1e-7, fitted, predicted, None if fitted is None else fitted / predicted, True, 0.0)


def test_check_local_rate_threshold():
    assert check_local_rate(report(0.95), TET, UNIT)
    assert not check_local_rate(report(0.85), TET, UNIT)
    assert not check_local_rate(report(None), TET, UNIT)
    assert check_local_rate(report(3.7), TET, UNIT.scaled(4))


def test_report_from_trajectory():
    traj = simulate(TET, UNIT, SimConfig(), TET.desired_positions + 0.2)
    rep = report_trajectory(traj, TET, UNIT)
    assert rep.converged and rep.strong_congruency
    assert rep.predicted_min_rate == 1.0
    assert rep.fitted_rate == pytest.approx(rep.rate_ratio)


def test_sweep_seeds_are_per_run():
    p_all, kinds = sweep_initial_positions(TET, 10, seed=5)
    assert kinds[:5] == ["random-cube", "collocated-12", "collinear-123", "coplanar-all", "reflected-desired"]
    p_few, _ = sweep_initial_positions(TET, 3, seed=5)
    assert np.array_equal(p_all[:3], p_few)


def test_monte_carlo_small_sweep():
    sc = Scenario(TET, UNIT, SimConfig())
    agg, _ = monte_carlo(sc, 10, seed=1)
    assert agg["fraction_converged"] == 1.0 and agg["all_strongly_congruent"]
    assert agg["by_class"]["collinear-123"]["converged"] == 2
    again, _ = monte_carlo(sc, 10, seed=1)
    assert json.dumps(agg) == json.dumps(again)


def test_monte_carlo_counts_failures_without_raising():
    sc = Scenario(TET, UNIT, SimConfig(t_max=1.0))
    agg, _ = monte_carlo(sc, 5, seed=1)
    assert agg["fraction_converged"] == 0.0
    assert agg["reasons"] == {"horizon": 5}
    assert all(r["fitted_rate"] is None for r in agg["runs"])


def test_monte_carlo_needs_runs():
    with pytest.raises(ValidationError):
        monte_carlo(Scenario(TET, UNIT, SimConfig()), 0, seed=1)


def test_rate_floor_holds_when_modes_are_separated(rng):
    # with unit gains every mode shares the rate 1 and polynomial-times-
    # exponential terms pull the fitted slope below it; distinct gains
    # leave one slowest mode and the fit lands on it
    gains = Gains({2: 1.0, 3: 3.0, 4: 4.0}, {3: 5.0, 4: 6.0}, {4: 7.0})
    for _ in range(5):
        p0 = TET.desired_positions + rng.normal(scale=0.3, size=(4, 3))
        rep = report_trajectory(simulate(TET, gains, SimConfig(), p0), TET, gains)
        assert rep.converged and check_local_rate(rep, TET, gains)
        assert rep.rate_ratio == pytest.approx(1.0, abs=0.02)

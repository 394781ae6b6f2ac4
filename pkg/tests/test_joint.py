import math

import numpy as np
import pytest

from rsma_uav.channel import RicianParams
from rsma_uav.joint import (JointParams, alternating_optimize, avg_location_baseline,
                            avg_location_position, default_start, noma_optimize, sdma_optimize)
from rsma_uav.precoder import Scheme
from rsma_uav.signal_model import RateReport

from conftest import make_scenario, random_users


def two_user_optimum(scenario):
    # aligned LoS channels: all power to one user, hovering over it at z_min
    return math.log2(1 + scenario.n_t * scenario.power / (scenario.sigma2 * scenario.box.z_min ** 2))


def pair(seed):
    return make_scenario(random_users(np.random.default_rng(seed), 2), snr_db=20.0, n_t=2)


def off_centre_start(sc, seed):
    # the centroid is a symmetric stationary point of the block iteration
    return np.random.default_rng(seed + 100).uniform(sc.box.lower, sc.box.upper)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_outer_trace_monotone_and_in_box(scheme):
    for seed in range(3):
        sc = pair(seed)
        sol = alternating_optimize(sc, scheme)
        assert sol.status == "converged"
        assert sol.trace.is_monotone(1e-6)
        assert sc.box.contains(sol.uav_position, 1e-9)
        assert np.linalg.norm(sol.precoder) ** 2 <= sc.power + 1e-6


@pytest.mark.parametrize("scheme", list(Scheme))
def test_two_user_los_reaches_closed_form(scheme):
    sc = pair(7)
    sol = alternating_optimize(sc, scheme, q0=off_centre_start(sc, 7))
    assert sol.wsr == pytest.approx(two_user_optimum(sc), abs=1e-6)
    assert sol.uav_position[2] == pytest.approx(80.0, abs=1e-3)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_report_re_evaluates(scheme):
    sc = make_scenario(random_users(np.random.default_rng(3), 3), snr_db=25.0, n_t=3)
    sol = alternating_optimize(sc, scheme)
    rep = sol.report(sc)
    assert isinstance(rep, RateReport)
    np.testing.assert_allclose(rep.overall_rates, sol.rates, atol=1e-6)
    assert rep.wsr == pytest.approx(sol.wsr, abs=1e-6)


@pytest.mark.parametrize("c", [0.25, 4.0])
def test_weight_scaling_invariance(c):
    users = random_users(np.random.default_rng(4), 2)
    w = np.array([1.0, 2.0])
    a = alternating_optimize(make_scenario(users, weights=w), Scheme.RSMA)
    b = alternating_optimize(make_scenario(users, weights=c * w), Scheme.RSMA)
    assert b.wsr / a.wsr == pytest.approx(c, abs=1e-4)
    assert np.linalg.norm(a.uav_position - b.uav_position) <= 1e-3
    assert np.linalg.norm(a.precoder - b.precoder) <= 1e-3
    assert np.linalg.norm(a.rate_split - b.rate_split) <= 1e-3


@pytest.mark.parametrize("scheme", list(Scheme))
def test_joint_not_below_fixed_placement(scheme):
    sc = make_scenario(random_users(np.random.default_rng(5), 3), snr_db=10.0, n_t=2)
    base = avg_location_baseline(sc, scheme)
    joint = alternating_optimize(sc, scheme, q0=avg_location_position(sc))
    assert joint.wsr >= base.wsr - 1e-6


def test_scheme_dominance_on_uav_channels():
    for seed in range(3):
        sc = pair(seed)
        q0 = off_centre_start(sc, seed)
        r, s, n = (alternating_optimize(sc, m, q0=q0).wsr for m in (Scheme.RSMA, Scheme.SDMA, Scheme.NOMA))
        assert r >= s - 1e-6 and r >= n - 1e-6


def test_rician_scenario_runs_and_stays_in_box():
    sc = make_scenario(random_users(np.random.default_rng(6), 2), n_t=2, rician=RicianParams())
    sc = sc.with_scatter(np.random.default_rng(0))
    sol = alternating_optimize(sc, Scheme.RSMA)
    assert sol.status in ("converged", "max_iterations")
    assert sc.box.contains(sol.uav_position, 1e-9)


def test_default_start_and_baseline_position():
    sc = make_scenario([[0.0, 0.0, 0.0], [100.0, 50.0, 0.0]])
    np.testing.assert_array_equal(default_start(sc), [50.0, 25.0, 80.0])
    np.testing.assert_array_equal(avg_location_position(sc), [50.0, 25.0, 100.0])
    base = avg_location_baseline(sc, Scheme.SDMA)
    assert all(rec.position == (50.0, 25.0, 100.0) for rec in base.trace.records)


def test_baseline_wrappers_return_precoder_and_split():
    sc = pair(8)
    H = sc.channel_array(default_start(sc))
    P, split = sdma_optimize(H, sc)
    assert P.shape == (2, 3) and np.all(P[:, 0] == 0) and np.all(split == 0)
    P, split = noma_optimize(H, sc)
    assert np.linalg.norm(P) ** 2 <= sc.power + 1e-6


def test_params_validated():
    with pytest.raises(ValueError):
        JointParams(epsilon=0.0)
    with pytest.raises(ValueError):
        JointParams(max_outer_iterations=0)
    with pytest.raises(ValueError, match="box"):
        alternating_optimize(pair(0), q0=[0.0, 0.0, 0.0])

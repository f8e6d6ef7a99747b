import math

import numpy as np
import pytest

from qdbell.chsh import TSIRELSON, chsh_value
from qdbell.model import ChshSettings
from qdbell.noise import InfeasibleError, NoiseParams
from qdbell.optimize import (
    BracketError,
    OptimizeConfig,
    Scenario,
    ThresholdQuery,
    optimize_angles,
    optimize_transmittance,
    optimized_s,
    s_objective,
    threshold,
)

FAST = OptimizeConfig(restarts=3)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizeConfig(restarts=0)
    with pytest.raises(ValueError):
        OptimizeConfig(xatol=0.0)


@pytest.mark.parametrize("mode", ["postselected", "assigned"])
def test_fast_objective_matches_reference(mode, rng):
    params = Scenario(v_alpha=0.9, v_beta=0.7, g2=0.04, T=0.2, eta_t=0.3, eta2=0.8).params()
    kernel = params.kernel()
    f = s_objective(kernel, mode)
    for _ in range(5):
        x = rng.uniform(0, np.pi, 8)
        assert f(x) == pytest.approx(chsh_value(kernel, ChshSettings.from_vector(x), mode).s_value, abs=1e-13)


def test_ideal_point_reaches_tsirelson():
    _, res = optimize_angles(Scenario().params(), "postselected", FAST)
    assert res.s_value == pytest.approx(TSIRELSON, abs=1e-9)


def test_seeded_runs_are_deterministic():
    params = Scenario(v_alpha=0.9).params()
    a = optimize_angles(params, "postselected", FAST)
    b = optimize_angles(params, "postselected", FAST)
    assert a[0] == b[0] and a[1].s_value == b[1].s_value


def test_doubling_restarts_is_stable():
    params = Scenario(v_alpha=0.93, v_beta=0.6).params()
    s4 = optimize_angles(params, "postselected", OptimizeConfig(restarts=4))[1].s_value
    s8 = optimize_angles(params, "postselected", OptimizeConfig(restarts=8))[1].s_value
    assert abs(s4 - s8) < 1e-6


def test_warm_start_is_used():
    params = Scenario(v_alpha=0.95).params()
    settings, res = optimize_angles(params, "postselected", FAST)
    _, again = optimize_angles(params, "postselected", OptimizeConfig(restarts=1, seed=99), [settings.as_vector()])
    assert again.s_value >= res.s_value - 1e-9


def test_threshold_brackets_the_crossing():
    q = ThresholdQuery("v", Scenario(), (0.7, 0.9), tol=4e-3, config=FAST)
    t = threshold(q)
    assert optimized_s(Scenario().with_axis("v", t), "postselected", FAST).s_value >= 2.0
    assert optimized_s(Scenario().with_axis("v", t - q.tol), "postselected", FAST).s_value < 2.0


def test_threshold_without_sign_change():
    with pytest.raises(BracketError, match="same sign"):
        threshold(ThresholdQuery("v", Scenario(), (0.9, 1.0), config=OptimizeConfig(restarts=1)))


def test_unknown_axis():
    with pytest.raises(ValueError, match="unknown axis"):
        ThresholdQuery("colour", Scenario(), (0, 1))
    with pytest.raises(ValueError, match="unknown axis"):
        Scenario().with_axis("colour", 1.0)


def test_noise_axes_switch_to_explicit_rates():
    sc = Scenario().with_axis("sigma", 0.4).with_axis("gamma_d", 0.1)
    assert sc.noise == NoiseParams(1.0, 0.1, 0.4)
    assert sc.params().moments.m_beta2 < sc.params().moments.m_alpha2


def test_eta_l_sets_eta2():
    setup = Scenario(T=0.2, eta_l=0.6).setup()
    assert setup.eta_local(1) == pytest.approx(0.6)


def test_small_t_regime_is_linear():
    sc = Scenario(eta_t=0.1)
    settings, _ = optimize_angles(sc.with_axis("T", 1e-3).params(), "assigned", FAST)
    z = [
        optimize_angles(sc.with_axis("T", T).params(), "assigned", OptimizeConfig(restarts=1), [settings.as_vector()])[1].z_prime
        for T in (1e-4, 2e-4, 4e-4)
    ]
    assert z[1] / z[0] == pytest.approx(2.0, rel=0.01)
    assert z[2] / z[1] == pytest.approx(2.0, rel=0.01)


def test_optimal_t_is_a_maximum():
    sc = Scenario(v_alpha=0.95, eta_t=0.1, eta2=0.95)
    res = optimize_transmittance(sc, "assigned", FAST, bounds=(1e-3, 0.2), tol=1e-3)
    assert 1e-3 < res.optimal_t < 0.2
    for T in (res.optimal_t * 0.5, min(0.2, res.optimal_t * 2)):
        z = optimized_s(sc.with_axis("T", T), "assigned", FAST).z_prime
        assert z <= res.z_prime + 1e-12


def test_larger_errors_lower_the_optimal_t():
    good = optimize_transmittance(Scenario(v_alpha=0.98, eta_t=0.1, eta2=0.98), "assigned", FAST, bounds=(1e-3, 0.1), tol=2e-3)
    bad = optimize_transmittance(Scenario(v_alpha=0.9, eta_t=0.1, eta2=0.98), "assigned", FAST, bounds=(1e-3, 0.1), tol=2e-3)
    assert bad.optimal_t < good.optimal_t


def test_no_violation_anywhere_is_infeasible():
    with pytest.raises(InfeasibleError):
        optimize_transmittance(Scenario(v_alpha=0.6, eta_t=0.1, eta2=0.5), "assigned", OptimizeConfig(restarts=1), tol=0.05)


def test_assigned_mode_escapes_the_relabeled_basin():
    # one restart from seed 0 lands in the basin of a single-station relabeling
    params = Scenario(v_alpha=0.9, g2=0.02, eta2=0.95, eta_t=0.1, T=0.0076).params()
    _, res = optimize_angles(params, "assigned", OptimizeConfig(restarts=1))
    assert res.s_value == pytest.approx(2.0264298847488886, abs=1e-9)

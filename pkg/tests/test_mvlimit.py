import math

import numpy as np
import pytest

from fwemerge.malthus import malthus
from fwemerge.mvlimit import (MeanCurve, UUState, entrance_law_construct, mv_dual_moment, mv_ensemble_simulate,
                              tagged_sites_simulate, u_hat_closed_form, u_standard_solution, uU_integrate)
from fwemerge.params import ModelParams, SeedSpec


@pytest.fixture(scope="module")
def standard():
    return u_standard_solution(ModelParams(1, 1, 1, 1), T=6.0)


def _geometric_profile(J, r=0.5):
    U = r ** np.arange(J)
    return U / U.sum()


def test_uU_keeps_probability_vector():
    p = ModelParams(1, 1, 1, 1)
    traj = uU_integrate(UUState(0.3, _geometric_profile(60), 1.0), p, J=60, T=5.0)
    np.testing.assert_allclose(traj.U.sum(axis=1), 1.0, atol=1e-8)
    assert traj.U.min() > -1e-10
    assert np.all((traj.u > 0) & (traj.u < 1))


def test_frozen_rates_give_logistic_curve():
    alpha, gamma, u0 = 0.7, 0.4, 1e-3
    b = 1 + gamma / alpha
    traj = uU_integrate(UUState(u0, _geometric_profile(60), 1.0), ModelParams(1, 1, 1, 1), J=60, T=15.0,
                        frozen_rates=(alpha, gamma))
    level = u0 / (1 - b * u0)  # makes the closed form pass through u0 at t = 0
    np.testing.assert_allclose(traj.u, u_hat_closed_form(alpha, b, traj.times, level), rtol=1e-7)


def test_zero_occupation_stays_zero():
    traj = uU_integrate(UUState(0.0, _geometric_profile(40), 1.0), ModelParams(1, 1, 1, 1), J=40, T=2.0)
    assert np.all(traj.u == 0)


def test_uU_input_validation():
    p = ModelParams(1, 1, 1, 1)
    with pytest.raises(ValueError):
        uU_integrate(UUState(0.1, np.array([0.5, 0.4]), 1.0), p, J=10)
    with pytest.raises(ValueError):
        uU_integrate(UUState(1.5, _geometric_profile(10), 1.0), p, J=10)


def test_standard_solution_normalisation(standard):
    alpha = standard.alpha
    t = np.array([-25.0, -20.0, -15.0]) / alpha
    np.testing.assert_allclose(np.exp(-alpha * t) * standard.at(t), 1.0, atol=1e-6)
    assert standard.t0_sensitivity < 1e-6
    assert np.all(np.diff(standard.u) > 0)
    assert 0 < standard.at(0.0) < 1


def test_standard_solution_rates_start_at_equilibrium(standard):
    res = malthus(ModelParams(1, 1, 1, 1))
    assert standard.alpha_t[0] == pytest.approx(res.alpha, abs=1e-8)
    assert standard.gamma_t[0] == pytest.approx(res.gamma, abs=1e-8)


def test_profile_at(standard):
    i = 40
    np.testing.assert_allclose(standard.profile_at(float(standard.times[i])), standard.U[i], atol=1e-14)
    mid = 0.5 * (standard.times[i] + standard.times[i + 1])
    np.testing.assert_allclose(standard.profile_at(mid), 0.5 * (standard.U[i] + standard.U[i + 1]), atol=1e-14)
    assert standard.profile_at(0.0).sum() == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        standard.profile_at(standard.times[-1] + 1.0)


def test_u_hat_closed_form_limits():
    assert u_hat_closed_form(1.0, 2.0, 0.0) == pytest.approx(1 / 3)
    assert u_hat_closed_form(1.0, 2.0, 50.0) == pytest.approx(0.5)
    assert u_hat_closed_form(1.0, 2.0, -30.0) == pytest.approx(math.exp(-30.0), rel=1e-9)
    with pytest.raises(ValueError):
        u_hat_closed_form(-1.0, 2.0, 0.0)


@pytest.mark.parametrize("mode,mean_mode", [("frozen", "frozen"), ("mean_field", "self")])
@pytest.mark.parametrize("k", [1, 2])
def test_dual_moment_matches_ensemble(mode, mean_mode, k):
    p = ModelParams(1, 1, 1, 1)
    dual = mv_dual_moment(0.2, k, 1.0, p, 20_000, SeedSpec(3, 0, "moment"), mode=mode)
    _, state = mv_ensemble_simulate(p, 20_000, 0.2, 1.0, 1e-3, SeedSpec(4), mean_mode=mean_mode)
    vals = state.members ** k
    se = math.hypot(dual.se, vals.std() / math.sqrt(vals.size))
    assert abs(dual.value - vals.mean()) < 4 * se


def test_frozen_and_self_consistent_means_differ():
    p = ModelParams(1, 1, 1, 1)
    frozen = mv_dual_moment(0.2, 1, 1.0, p, 20_000, SeedSpec(3, 0, "moment"), mode="frozen")
    mf = mv_dual_moment(0.2, 1, 1.0, p, 20_000, SeedSpec(3, 0, "moment"), mode="mean_field")
    assert mf.value - frozen.value > 5 * math.hypot(mf.se, frozen.se)


def test_ensemble_validation():
    p = ModelParams(1, 1, 1, 1)
    with pytest.raises(ValueError):
        mv_ensemble_simulate(p, 1, 0.2, 1.0, 0.01, SeedSpec(0))
    with pytest.raises(ValueError):
        mv_ensemble_simulate(p, 10, 0.2, 1.0, 0.01, SeedSpec(0), mean_mode="other")
    with pytest.raises(ValueError):
        mv_dual_moment(1.2, 1, 1.0, p, 10, SeedSpec(0))


def test_tagged_sites_track_their_driving_mean():
    p = ModelParams(1, 1, 1, 1)
    curve, state = mv_ensemble_simulate(p, 4000, 0.1, 2.0, 0.01, SeedSpec(8))
    tagged = tagged_sites_simulate(curve, p, 4000, 0.01, SeedSpec(9), init=0.1)
    assert tagged.paths.shape == (4000, curve.times.shape[0])
    end = tagged.paths[:, -1]
    se = math.hypot(end.std(), state.members.std()) / math.sqrt(4000)
    assert abs(end.mean() - state.mean) < 4 * se


def test_tagged_sites_without_input_stay_empty():
    curve = MeanCurve(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    tagged = tagged_sites_simulate(curve, ModelParams(1, 1, 1, 1), 50, 0.01, SeedSpec(1))
    assert np.all(tagged.paths == 0)


def test_entrance_law_recentring():
    p = ModelParams(1, 1, 1, 1)
    curves = entrance_law_construct(p, 2000, 0.01, [0.05, 0.01], SeedSpec(5), horizon=40)
    for cur in curves:
        assert np.interp(0.0, cur.times, cur.values) == pytest.approx(0.5, abs=1e-9)
        assert 0 < cur.prefactor < 2
    assert curves[1].shift > curves[0].shift
    for t in (-1.0, 1.0):
        assert abs(np.interp(t, curves[0].times, curves[0].values)
                   - np.interp(t, curves[1].times, curves[1].values)) < 0.05
    with pytest.raises(ValueError):
        entrance_law_construct(p, 10, 0.01, [0.7], SeedSpec(5))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwemerge.forward import (ForwardTrajectory, deterministic_single_site, em_step, hitting_time,
                              hitting_time_series, integrate_single_site, simulate_forward,
                              simulate_forward_ensemble, step_sites)
from fwemerge.params import Configuration, ModelParams, SeedSpec, derive_stream


def test_closed_form_limits():
    assert deterministic_single_site(1.0, 1.0, 0.0) == 0.0
    assert deterministic_single_site(0.5, 2.0, 200.0) == pytest.approx(1.0)
    # no selection: 1 - e^{-m t}
    assert deterministic_single_site(0.7, 0.0, 1.3) == pytest.approx(1 - math.exp(-0.91), rel=1e-14)


def test_closed_form_is_finite_for_huge_times():
    assert deterministic_single_site(1e-3, 5.0, 1e6) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 3), st.floats(0, 3), st.floats(0, 5))
def test_closed_form_matches_ode(m, s, t):
    ref = integrate_single_site(m, s, [t])[0]
    assert deterministic_single_site(m, s, t) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_closed_form_argument_errors():
    with pytest.raises(ValueError):
        deterministic_single_site(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        deterministic_single_site(1.0, 1.0, -1.0)


@pytest.mark.parametrize("scheme", ["em", "boundary"])
@settings(max_examples=15, deadline=None)
@given(x0=st.lists(st.floats(0, 1), min_size=2, max_size=12), dt=st.sampled_from([1e-3, 0.05, 0.5]))
def test_steps_keep_states_in_unit_interval(scheme, x0, dt):
    p = ModelParams(2.0, 3.0, 5.0, 4.0, n_sites=len(x0))
    cfg = Configuration(np.array(x0), 0.0)
    rng = derive_stream(SeedSpec(1))
    for _ in range(20):
        cfg = em_step(cfg, p, dt, rng, scheme=scheme)
        assert np.all((cfg.x2 >= 0) & (cfg.x2 <= 1))
    assert cfg.time == pytest.approx(20 * dt)


def test_em_step_matches_hand_computation():
    p = ModelParams(c=1.0, s=2.0, d=0.5, m=0.4, n_sites=2)
    x = np.array([0.3, 0.5])
    dt = 0.01
    rng_a = derive_stream(SeedSpec(3))
    out = em_step(Configuration(x, 0.0), p, dt, rng_a).x2
    z = derive_stream(SeedSpec(3)).standard_normal(2)
    mu = p.site_mutation_rate
    drift = p.c * (x.mean() - x) + p.s * x * (1 - x) + mu * (1 - x)
    expect = np.clip(x + drift * dt + np.sqrt(p.d * x * (1 - x) * dt) * z, 0, 1)
    np.testing.assert_allclose(out, expect, rtol=1e-13)


def test_em_step_rejects_bad_input():
    p = ModelParams(1, 1, 1, 1, n_sites=3)
    with pytest.raises(ValueError):
        em_step(Configuration(np.zeros(2), 0.0), p, 0.1, derive_stream(SeedSpec(0)))
    with pytest.raises(ValueError):
        em_step(Configuration(np.zeros(3), 0.0), p, 0.0, derive_stream(SeedSpec(0)))


def test_zero_noise_reproduces_deterministic_site():
    # one site, no resampling or migration: the step scheme is plain Euler on the ODE
    p = ModelParams(c=0.0, s=1.0, d=0.0, m=0.5, n_sites=1)
    tr = simulate_forward(p, 3.0, 1e-4, SeedSpec(0), record_every=10000)
    assert tr.mean_mass[-1] == pytest.approx(deterministic_single_site(0.5, 1.0, 3.0), rel=1e-3)


def test_boundary_scheme_is_unbiased_for_pure_immigration():
    # s = c = 0: E x(t) = 1 - exp(-mu t) exactly; clamped Euler-Maruyama is far off here
    p = ModelParams(c=0.0, s=0.0, d=1.0, m=0.01, n_sites=1)
    x = np.zeros(40_000)
    rng = derive_stream(SeedSpec(11, 0, "immigration"))
    for _ in range(500):
        step_sites(x, p, 0.01, rng, scheme="boundary", group=1)
    exact = 1 - math.exp(-0.05)
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - exact) < 4 * se


def test_record_grid_and_snapshots():
    p = ModelParams(1, 1, 1, 1, n_sites=8)
    tr = simulate_forward(p, 1.0, 0.01, SeedSpec(2), record_every=25, snapshot_times=(0.5,))
    np.testing.assert_allclose(tr.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert tr.mean_mass[0] == 0.0
    np.testing.assert_allclose(tr.total_mass, 8 * tr.mean_mass)
    assert len(tr.snapshots) == 1 and tr.snapshots[0].time == pytest.approx(0.5)
    assert tr.snapshots[0].x2.mean() == pytest.approx(tr.mean_mass[2])


def test_forward_is_deterministic_given_seed():
    p = ModelParams(1, 1, 1, 1, n_sites=16)
    a = simulate_forward(p, 2.0, 0.01, SeedSpec(4))
    b = simulate_forward(p, 2.0, 0.01, SeedSpec(4))
    np.testing.assert_array_equal(a.mean_mass, b.mean_mass)


def test_ensemble_batches_use_replica_streams():
    p = ModelParams(1, 1, 1, 1, n_sites=8)
    full = simulate_forward_ensemble(p, 10, 1.0, 0.01, SeedSpec(6), batch=5)
    again = simulate_forward_ensemble(p, 10, 1.0, 0.01, SeedSpec(6), batch=5)
    np.testing.assert_array_equal(full.mean_mass, again.mean_mass)
    first = simulate_forward_ensemble(p, 5, 1.0, 0.01, SeedSpec(6), batch=5)
    np.testing.assert_array_equal(full.mean_mass[:5], first.mean_mass)
    assert full.final.shape == (10, 8)
    np.testing.assert_allclose(full.final.mean(axis=1), full.mean_mass[:, -1])


def test_ensemble_stop_mean_freezes_records():
    p = ModelParams(1, 1, 1, 1, n_sites=4)
    ens = simulate_forward_ensemble(p, 4, 40.0, 0.01, SeedSpec(8), stop_mean=0.2)
    # the batch stops once every member has reached the level; later records repeat
    assert ens.mean_mass[:, -1].min() >= 0.2
    stop = int(np.flatnonzero(ens.mean_mass.min(axis=0) >= 0.2)[0])
    assert stop < ens.times.size - 1
    np.testing.assert_array_equal(ens.mean_mass[:, stop:], np.repeat(ens.mean_mass[:, stop:stop + 1],
                                                                     ens.times.size - stop, axis=1))
    assert all(hitting_time_series(ens.times, row, 0.2) is not None for row in ens.mean_mass)


def test_hitting_time_interpolates():
    tr = ForwardTrajectory(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.2, 0.6]), np.zeros(3))
    assert hitting_time(tr, 0.4) == pytest.approx(1.5)
    assert hitting_time(tr, 0.0) == 0.0
    assert hitting_time(tr, 0.7) is None


def test_mean_mass_grows_like_mutation_input_at_small_times():
    # E[N xbar(t)] = m t + O(t^2) from the all-type-1 state
    p = ModelParams(1, 1, 1, 2.0, n_sites=64)
    ens = simulate_forward_ensemble(p, 400, 0.2, 0.005, SeedSpec(10), record_every=40)
    total = 64 * ens.mean_mass[:, -1]
    se = total.std() / math.sqrt(total.size)
    # second-order correction m s t^2 / 2 included
    expect = 2.0 * 0.2 + 0.5 * 2.0 * 1.0 * 0.2 ** 2
    assert abs(total.mean() - expect) < 4 * se + 0.01

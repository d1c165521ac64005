import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwemerge.dual import (DualState, age_size_distribution, dual_mean_bound, dual_migration_rate, duality_check,
                           estimate_growth_constant, occupation_integrals, particle_counts,
                           simulate_collision_free_dual, simulate_dual, single_site_survival, yule_mean)
from fwemerge.params import ModelParams, SeedSpec


def test_yule_mean_matches_pure_birth_counts():
    p = ModelParams(c=0.0, s=1.0, d=0.0, m=0.0)
    counts = particle_counts((1, 1), p, 1.5, 20_000, SeedSpec(1))
    se = counts.std() / math.sqrt(counts.size)
    assert abs(counts.mean() - yule_mean(1.0, 1.5)) < 4 * se


def test_pair_coalescence_survival():
    # two particles, no birth or migration: still two at t with probability exp(-d t)
    p = ModelParams(c=0.0, s=0.0, d=2.0, m=0.0)
    counts = particle_counts((2, 1), p, 0.4, 40_000, SeedSpec(2))
    frac = float(np.mean(counts == 2))
    assert abs(frac - math.exp(-0.8)) < 4 * math.sqrt(frac * (1 - frac) / counts.size)
    assert set(np.unique(counts)) <= {1, 2}


def test_single_site_survival_formula_edges():
    assert single_site_survival(1.0, 0.5, 0.0) == 1.0
    # no selection: plain exponential killing
    assert single_site_survival(0.0, 0.7, 2.0) == pytest.approx(math.exp(-1.4))


def test_single_site_survival_by_simulation():
    s, mu, t = 1.0, 0.8, 1.0
    p = ModelParams(c=0.0, s=s, d=0.0, m=0.0)
    occ = occupation_integrals((1, 1), p, [t], 20_000, SeedSpec(3), collision_free=True)[:, 0]
    vals = np.exp(-mu * occ)
    assert abs(vals.mean() - single_site_survival(s, mu, t)) < 4 * vals.std() / math.sqrt(vals.size)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 50), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.01, 5))
def test_mean_bound_properties(n, s, d, t):
    b = dual_mean_bound(n, s, d, t)
    assert b > 0
    # starts at n and never exceeds the pure-birth growth at rate s + d/2
    assert dual_mean_bound(n, s, d, 0.0) == pytest.approx(n)
    assert b <= n * math.exp((s + 0.5 * d) * t) * (1 + 1e-12)
    # long-run plateau 2 (s + d/2) / d
    assert dual_mean_bound(n, s, d, 1e3) == pytest.approx(2 * (s + 0.5 * d) / d, rel=1e-9)


def test_simulated_mean_respects_bound():
    p = ModelParams(c=0.0, s=1.0, d=1.0, m=0.0)
    counts = particle_counts((3, 1), p, 2.0, 10_000, SeedSpec(4))
    assert counts.mean() <= dual_mean_bound(3, 1.0, 1.0, 2.0)


def test_check_mode_does_not_change_the_path(unit_rates):
    p = unit_rates.with_sites(6)
    a = simulate_dual((2, 3), p, 3.0, SeedSpec(5))
    b = simulate_dual((2, 3), p, 3.0, SeedSpec(5), check_rates=True)
    np.testing.assert_array_equal(a.pi, b.pi)
    np.testing.assert_array_equal(a.k, b.k)
    c = simulate_collision_free_dual((1, 1), unit_rates, 4.0, SeedSpec(5), check_rates=True)
    d = simulate_collision_free_dual((1, 1), unit_rates, 4.0, SeedSpec(5))
    np.testing.assert_array_equal(c.k, d.k)


def test_n_site_dual_state_invariants(unit_rates):
    N = 5
    tr = simulate_dual((1, 2), unit_rates.with_sites(N), 4.0, SeedSpec(6), age_size_times=(1.0, 2.0))
    assert np.all(tr.k <= N) and np.all(tr.k >= 1)
    assert np.all(tr.pi >= tr.k)
    assert np.all(np.diff(tr.occupation_integral) >= 0)
    assert tr.final_state.total == tr.pi[-1]
    assert tr.final_state.occupied == tr.k[-1]
    for rec in tr.age_size:
        assert np.all(rec.entries[:, 0] >= 0)
        assert rec.frequencies.sum() == pytest.approx(1.0)


def test_occupation_integral_of_constant_count():
    # no events at all: the integral is k * ell * t
    p = ModelParams(c=0.0, s=0.0, d=0.0, m=0.0, n_sites=4)
    tr = simulate_dual((3, 2), p, 2.0, SeedSpec(7), record_times=[0.5, 2.0])
    np.testing.assert_allclose(tr.occupation_integral, [3.0, 12.0])


def test_migration_rate_vanishes_for_one_site(unit_rates):
    assert dual_migration_rate(unit_rates, 1) == 0.0
    assert dual_migration_rate(unit_rates, 4) == pytest.approx(0.75)


def test_collision_free_stop(unit_rates):
    tr = simulate_collision_free_dual((1, 1), unit_rates, 100.0, SeedSpec(8), stop_k=500)
    assert tr.stopped_early
    assert tr.final_state.occupied >= 500
    assert tr.final_time < 100.0
    # collision-free duals never shrink in occupied sites
    assert np.all(np.diff(tr.k) >= 0)


def test_age_size_distribution_of_state():
    state = DualState({0: 2, 3: 1, 5: 2}, {0: 0.0, 3: 1.0, 5: 2.5})
    rec = age_size_distribution(state, 3.0)
    np.testing.assert_allclose(rec.entries, [[3.0, 2], [2.0, 1], [0.5, 2]])
    np.testing.assert_array_equal(rec.sizes, [1, 2])
    np.testing.assert_allclose(rec.frequencies, [1 / 3, 2 / 3])
    np.testing.assert_allclose(rec.distribution(3), [1 / 3, 2 / 3, 0.0])
    with pytest.raises(ValueError):
        age_size_distribution(DualState({}, {}), 1.0)


def test_small_system_duality(unit_rates):
    res = duality_check(unit_rates.with_sites(3), (1, 2), 0.5, 4000, SeedSpec(9), dt=2e-3)
    assert res.z_score < 4
    assert 0 < res.rhs < 1


def test_growth_constant_window_errors(unit_rates):
    tr = simulate_collision_free_dual((1, 1), unit_rates, 2.0, SeedSpec(10))
    with pytest.raises(ValueError):
        estimate_growth_constant(tr, 0.6, (1.0, 0.5))
    with pytest.raises(ValueError):
        estimate_growth_constant(tr, 0.6, (5.0, 6.0))
    g = estimate_growth_constant(tr, 0.6, (0.5, 2.0))
    assert g.mean > 0 and g.n_samples > 0


def test_invalid_initial_states(unit_rates):
    with pytest.raises(ValueError):
        simulate_dual((0, 1), unit_rates.with_sites(2), 1.0, SeedSpec(0))
    with pytest.raises(ValueError):
        simulate_dual((1, 3), unit_rates.with_sites(2), 1.0, SeedSpec(0))

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwemerge.functionals import (correlation_discrepancy, droplet_measure, ek_distance, empirical_mean,
                                  linear_kernel, palm_estimate, prohorov_distance)
from fwemerge.params import AtomicMeasure, Configuration


def cfg(values):
    return Configuration(np.array(values, dtype=float), 0.0)


@pytest.mark.parametrize("values,expected", [([0.0] * 5, 0.0), ([1.0] * 4, 1.0), ([0.2, 0.4, 0.6], 0.4)])
def test_empirical_mean_examples(values, expected):
    assert empirical_mean(cfg(values)) == pytest.approx(expected, abs=1e-15)


def test_empirical_mean_empty_is_error():
    with pytest.raises(ValueError):
        empirical_mean(Configuration(np.zeros(0), 0.0))


def test_droplet_measure_examples():
    assert len(droplet_measure(cfg([0.0, 0.0]), [0.3, 0.6])) == 0
    mu = droplet_measure(cfg([0.0, 0.5]), [0.1, 0.9])
    assert mu.atoms == [(0.9, 0.5)]
    with pytest.raises(ValueError):
        droplet_measure(cfg([0.1, 0.2]), [0.5])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_droplet_total_mass_is_sum(values):
    labels = np.linspace(0, 1, len(values))
    mu = droplet_measure(cfg(values), labels)
    assert mu.total_mass == pytest.approx(sum(values))
    assert mu.total_mass == pytest.approx(len(values) * empirical_mean(cfg(values)))


def test_palm_examples():
    assert palm_estimate([0.0, 1.0]).as_dict() == {1.0: 1.0}
    assert palm_estimate([0.5, 0.5]).as_dict() == {0.5: 1.0}
    d = palm_estimate([0.25, 0.75]).as_dict()
    assert d[0.25] == pytest.approx(0.25) and d[0.75] == pytest.approx(0.75)
    with pytest.raises(ValueError):
        palm_estimate([0.0, 0.0])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30).filter(lambda v: max(v) > 0))
def test_palm_is_size_biased_probability(samples):
    dist = palm_estimate(samples)
    assert dist.weights.sum() == pytest.approx(1.0)
    # mean under the size-biased law is E[X^2] / E[X]
    arr = np.array(samples)
    assert float(np.dot(dist.values, dist.weights)) == pytest.approx(np.mean(arr ** 2) / np.mean(arr))


# --- Prohorov oracle: enumerate every subset of atoms, bisection on eps ---

def _brute_excess(mu, nu, eps):
    best = 0.0
    for r in range(1, len(mu) + 1):
        for subset in itertools.combinations(range(len(mu)), r):
            chosen = mu.locations[list(subset)]
            mass_f = mu.masses[list(subset)].sum()
            near = np.any(np.abs(nu.locations[:, None] - chosen[None, :]) < eps, axis=1)
            best = max(best, mass_f - nu.masses[near].sum())
    return best


def brute_prohorov(mu, nu):
    mu, nu = mu.canonical(), nu.canonical()
    lo, hi = 0.0, max(1.0, abs(mu.total_mass - nu.total_mass)) + 1e-9
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _brute_excess(mu, nu, mid) <= mid and _brute_excess(nu, mu, mid) <= mid:
            hi = mid
        else:
            lo = mid
    return hi


small_measures = st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 2)), max_size=6).map(AtomicMeasure.from_atoms)


@settings(max_examples=60, deadline=None)
@given(small_measures, small_measures)
def test_prohorov_matches_subset_enumeration(mu, nu):
    assert prohorov_distance(mu, nu) == pytest.approx(brute_prohorov(mu, nu), abs=1e-9)


def test_prohorov_simple_cases():
    a = AtomicMeasure.from_atoms([(0.2, 1.0)])
    b = AtomicMeasure.from_atoms([(0.5, 1.0)])
    # moving unit mass by 0.3 costs 0.3 (the open ball needs eps > 0.3)
    assert prohorov_distance(a, b) == pytest.approx(0.3, abs=1e-9)
    assert prohorov_distance(a, AtomicMeasure.from_atoms([])) == pytest.approx(1.0, abs=1e-9)


def test_ek_point_mass_against_empty_is_two():
    # Prohorov part 1 (all mass must be paid for) plus kernel-energy gap 1 at every scale
    mu = AtomicMeasure.from_atoms([(0.5, 1.0)])
    assert ek_distance(mu, AtomicMeasure.from_atoms([])) == pytest.approx(2.0, abs=1e-9)


def test_correlation_discrepancy_exact_supremum():
    # two unit atoms at distance 0.3 vs one atom of mass sqrt(2): energies 2 + 2 psi(0.3/eps) and 2
    mu = AtomicMeasure.from_atoms([(0.2, 1.0), (0.5, 1.0)])
    nu = AtomicMeasure.from_atoms([(0.2, np.sqrt(2.0))])
    # the largest gap 2 (1 - 0.3) is at eps = 1, outside the dyadic grid below 1
    assert correlation_discrepancy(mu, nu) == pytest.approx(1.4, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(small_measures, small_measures)
def test_ek_symmetric_and_nonnegative(mu, nu):
    d1, d2 = ek_distance(mu, nu), ek_distance(nu, mu)
    assert d1 >= 0
    assert d1 == pytest.approx(d2, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(small_measures)
def test_ek_identity(mu):
    assert ek_distance(mu, mu) == 0.0


def test_ek_zero_only_for_equal_measures():
    a = AtomicMeasure.from_atoms([(0.2, 0.5), (0.7, 0.5)])
    b = AtomicMeasure.from_atoms([(0.2, 0.5), (0.7, 0.5000001)])
    assert ek_distance(a, b) > 0


def test_ek_separates_merged_from_split_atoms():
    # equal total mass and nearly equal location: Prohorov is small but atom structure differs
    one = AtomicMeasure.from_atoms([(0.5, 1.0)])
    two = AtomicMeasure.from_atoms([(0.5, 0.5), (0.5 + 1e-9, 0.5)])
    assert prohorov_distance(one, two) < 1e-6
    assert correlation_discrepancy(one, two) == pytest.approx(0.5, abs=1e-6)


def test_custom_kernel_validation():
    mu = AtomicMeasure.from_atoms([(0.1, 1.0)])
    with pytest.raises(ValueError):
        ek_distance(mu, mu, psi=lambda r: r)
    with pytest.raises(ValueError):
        ek_distance(mu, mu, psi=lambda r: 1.0 - r + 0.5 * np.sin(20 * r))
    # a scalar-only kernel is accepted
    val = ek_distance(mu, AtomicMeasure.from_atoms([]), psi=lambda r: max(0.0, 1.0 - r) ** 2)
    assert val == pytest.approx(2.0, abs=1e-9)
    assert linear_kernel(np.array([0.0, 0.5, 2.0])).tolist() == [1.0, 0.5, 0.0]

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwemerge.experiments import (EXPERIMENTS, ExperimentConfig, _tv_to, bootstrap_median, compare_growth_constants,
                                  droplet_ensemble, load_experiment_config, mean_se, run_dual_profile,
                                  run_emergence, run_experiment, run_fixation_profile, variance_se,
                                  weighted_line_fit)
from fwemerge.params import ModelParams, SeedSpec


# ---------------------------------------------------------------------------
# statistics helpers
# ---------------------------------------------------------------------------

def test_mean_and_variance_se_for_normal_samples():
    x = np.random.default_rng(0).normal(2.0, 3.0, 40_000)
    m, v = mean_se(x), variance_se(x)
    assert m.se == pytest.approx(3.0 / 200, rel=0.02)
    assert v.value == pytest.approx(9.0, abs=4 * v.se)
    assert v.se == pytest.approx(9.0 * math.sqrt(2 / 40_000), rel=0.05)  # normal fourth moment


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12, unique=True), st.floats(-3, 3), st.floats(-3, 3))
def test_line_fit_matches_polyfit(xs, slope, intercept):
    x = np.array(xs)
    if np.ptp(x) < 1e-3:
        return
    rng = np.random.default_rng(len(xs))
    se = rng.uniform(0.1, 1.0, x.shape[0])
    y = slope * x + intercept + rng.normal(0, se)
    fit_s, fit_i = weighted_line_fit(x, y, se)
    ref = np.polyfit(x, y, 1, w=1 / se)
    assert fit_s.value == pytest.approx(ref[0], abs=1e-8)
    assert fit_i.value == pytest.approx(ref[1], abs=1e-8)
    # halving every variance shrinks the slope SE by exactly sqrt(2)
    half = weighted_line_fit(x, y, se / math.sqrt(2))[0]
    assert fit_s.se / half.se == pytest.approx(math.sqrt(2), rel=1e-9)


def test_line_fit_needs_two_points():
    with pytest.raises(ValueError):
        weighted_line_fit(np.array([1.0]), np.array([1.0]), np.array([1.0]))


def test_bootstrap_median_se_scales_with_sample_size():
    rng = np.random.default_rng(1)
    small = bootstrap_median(rng.exponential(size=2000), 2000, rng)
    large = bootstrap_median(rng.exponential(size=4000), 2000, rng)
    assert small.se / large.se == pytest.approx(math.sqrt(2), rel=0.2)
    assert large.value == pytest.approx(math.log(2), abs=4 * large.se)


def test_bootstrap_median_counts_missing_as_late():
    vals = np.array([1.0, 2.0, np.nan, np.nan, np.nan])
    est = bootstrap_median(vals, 200, np.random.default_rng(0))
    assert est.value == math.inf and est.se == math.inf


def test_tv_index_convention():
    hist = np.array([0, 3, 1])  # three sites of size 1, one of size 2
    assert _tv_to(hist, np.array([0.75, 0.25])) == pytest.approx(0.0)
    assert _tv_to(hist, np.array([1.0, 0.0])) == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", EXPERIMENTS)
def test_packaged_config_loads(name):
    cfg = load_experiment_config(None, name)
    assert cfg.name == name
    assert cfg.params.to_dict()["c"] == 1.0
    assert cfg.thresholds and cfg.reps >= 2


def test_config_threshold_and_replace():
    cfg = load_experiment_config(None, "emergence")
    with pytest.raises(KeyError):
        cfg.threshold("nonexistent")
    new = cfg.replace(reps=10, options={"eps": 0.2})
    assert new.reps == 10 and new.option("eps") == 0.2
    assert new.option("bootstrap") == cfg.option("bootstrap")
    assert new.seed_for("x") == SeedSpec(cfg.seed, 0, "emergence/x")


def test_config_rejects_missing_keys(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nc = 1\ns = 1\nd = 1\nm = 1\n[emergence]\nreps = 10\n")
    with pytest.raises(ValueError, match="missing"):
        load_experiment_config(path, "emergence")
    path.write_text("[model]\nc = 1\ns = 1\nd = 1\n[emergence]\nn_list = 8\nreps = 10\ndt = 0.1\nseed = 1\n")
    with pytest.raises(ValueError):
        load_experiment_config(path, "emergence")  # m is required
    with pytest.raises(ValueError):
        load_experiment_config(path, "nonexistent")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("emergence", ModelParams(1, 1, 1, 1), (), 10, 0.1, 0)
    with pytest.raises(ValueError):
        ExperimentConfig("emergence", ModelParams(1, 1, 1, 1), (8,), 1, 0.1, 0)


# ---------------------------------------------------------------------------
# small runs
# ---------------------------------------------------------------------------

def _small(name, **changes):
    return load_experiment_config(None, name).replace(**changes)


def test_small_emergence_run_and_report(tmp_path):
    cfg = _small("emergence", n_list=(16, 64), reps=30, dt=0.02, options={"bootstrap": 200})
    report = run_emergence(cfg)
    assert report.check("slope_positive").passed
    assert report.fits["slope"].se > 0
    paths = report.write(tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["checks.csv", "fits.csv", "hitting_times.csv", "manifest.json", "median_hitting.csv"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"] == json.loads(json.dumps(cfg.to_dict()))
    assert manifest["seeds"]["master_seed"] == cfg.seed
    again = run_emergence(cfg)
    assert again.tables["hitting_times"] == report.tables["hitting_times"]


def test_small_fixation_run():
    cfg = _small("fixation", n_list=(64,), reps=30, dt=0.02)
    report = run_fixation_profile(cfg)
    assert report.check("N64_monotone_ends").passed
    header, rows = report.tables["profile"]
    t = np.array([r[1] for r in rows])
    proxy = np.array([r[7] for r in rows])
    assert np.all(np.isnan(proxy[t >= 0])) and np.all(np.isfinite(proxy[t < 0]))


@pytest.fixture(scope="module")
def dual_profile_report():
    return run_dual_profile(load_experiment_config(None, "dual_profile"))


@pytest.mark.xfail(strict=True, reason="the limit itself is 0.070 from q*(alpha) at t = -2: the profile at "
                                       "finite time has not yet relaxed to the equilibrium size law")
def test_dual_profile_tv_to_stable_law(dual_profile_report):
    assert dual_profile_report.check("tv_largest_n").passed


def test_dual_profile_tv_to_meanfield_profile(dual_profile_report):
    assert dual_profile_report.check("tv_meanfield_largest_n").passed
    assert dual_profile_report.check("tv_meanfield_decreases_with_n").passed


def test_dual_profile_tv_improves_with_n(dual_profile_report):
    assert dual_profile_report.check("tv_decreases_with_n").passed


def test_dual_profile_curve_matches_shifted_standard_solution(dual_profile_report):
    assert dual_profile_report.check("N2048_curve_rel_error").passed
    assert dual_profile_report.check("N512_curve_rel_error").passed


def test_small_growth_constants_run():
    cfg = _small("growth_constants", n_list=(256,), reps=20,
                 options={"t_late": 4.0, "droplet_reps": 10, "dual_reps": 10, "dual_t": 4.0})
    droplet = droplet_ensemble(cfg.params, 10, 4.0, 1e-3, cfg.dt, cfg.seed_for("droplet"))
    report = compare_growth_constants(cfg, droplet)
    for key in ("W_star_droplet_mean", "star_W_mean", "variance_ratio", "ks_pvalue",
                "candidate_m_b_over_c", "candidate_m_alpha_plus_gamma_over_c", "renewal_limit"):
        assert math.isfinite(report.fits[key].value)
    assert {c.name for c in report.checks} == {"means_within_se", "variance_ratio"}
    assert report.fits["candidate_m_b_over_c"].value > report.fits["candidate_m_alpha_plus_gamma_over_c"].value


def test_growth_constants_rejects_bad_window():
    cfg = _small("growth_constants", options={"t_neg_alpha": 1.0})
    with pytest.raises(ValueError):
        compare_growth_constants(cfg, droplet_ensemble(cfg.params, 2, 1.0, 1e-3, 0.01, SeedSpec(0)))


def test_run_experiment_dispatch():
    cfg = _small("fixation", n_list=(64,), reps=4, dt=0.05)
    assert run_experiment(cfg).name == "fixation"


def test_fixation_grid_must_start_after_time_zero():
    # ln 16 / alpha is shorter than 4 / alpha
    with pytest.raises(ValueError, match="before time 0"):
        run_fixation_profile(_small("fixation", n_list=(16,), reps=4, dt=0.05))

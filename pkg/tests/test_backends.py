import os
import subprocess
import sys

import numpy as np
import pytest

from fwemerge import kernels
from fwemerge.params import SeedSpec, derive_stream

pytestmark = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled extension not built")


def _rng():
    return derive_stream(SeedSpec(7, 0, "backend"))


def _both(fn):
    return fn(kernels.backend_module("python"), _rng()), fn(kernels.backend_module("compiled"), _rng())


@pytest.mark.parametrize("scheme", [0, 1])
@pytest.mark.parametrize("d", [0.0, 1.0])
def test_diffusion_step_identical(scheme, d):
    def run(mod, rng):
        x = np.zeros(4 * 32)
        imm = np.array([0.01, 0.02, 0.03, 0.04])
        for _ in range(50):
            mod.diffusion_step(x, imm, 32, 1.0, 1.0, d, 0.01, 0.08, scheme, rng)
        return x

    a, b = _both(run)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("n_sites", [0, 16])
def test_dual_advance_identical(n_sites):
    def run(mod, rng):
        slots = n_sites if n_sites else 256
        counts = np.zeros(slots, dtype=np.int64)
        birth = np.zeros(slots)
        part = np.zeros(4096, dtype=np.int64)
        counts[0] = 2
        rec = np.linspace(0.0, 3.0, 7)
        rpi, rk, rint = np.zeros(7), np.zeros(7, dtype=np.int64), np.zeros(7)
        out = mod.dual_advance(counts, birth, part, 2, n_sites or 1, 0.0, 3.0, rec, 0, rpi, rk, rint, 0.0,
                               1.0, 1.0, 1.0, n_sites, 200, True, rng)
        return np.concatenate([rpi, rk.astype(float), rint, counts.astype(float), birth,
                               np.array(out, dtype=float)])

    a, b = _both(run)
    assert np.array_equal(a, b)


def test_frozen_star_identical():
    a, b = _both(lambda mod, rng: mod.frozen_star_dual_sizes(2, 1.5, 1.0, 1.0, 1.0, 500, rng))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("emigrates", [False, True])
def test_bd_chain_identical(emigrates):
    a, b = _both(lambda mod, rng: mod.bd_chain_sample(1, 1.0, 1.0, 1.0, emigrates, np.linspace(0, 3, 4), 500, rng))
    assert np.array_equal(a, b)


def _backend_in_subprocess(value):
    env = dict(os.environ, FWEMERGE_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from fwemerge import kernels; print(kernels.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_env_var_forces_backend():
    assert _backend_in_subprocess("python").stdout.strip() == "python"
    assert _backend_in_subprocess("compiled").stdout.strip() == "compiled"
    assert _backend_in_subprocess("bogus").returncode != 0

"""Forward simulation of the N-site system and its single-site reductions.

Each site's type-2 fraction follows

    dx = c (xbar - x) dt + s x (1 - x) dt + mu (1 - x) dt + sqrt(d x (1 - x)) dW

with per-site mutation rate ``mu = params.site_mutation_rate``. Two step
schemes exist: ``"em"`` is clamped Euler-Maruyama, ``"boundary"`` (default)
switches to an exact squared-Bessel step of the linearised dynamics within
``BOUNDARY_LAYER`` of 0 or 1, where clamped Euler-Maruyama is badly biased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .params import Configuration, ModelParams, SeedSpec, derive_stream

BOUNDARY_LAYER = 0.08
SCHEMES = {"em": 0, "boundary": 1}
DEFAULT_SCHEME = "boundary"


def _scheme_code(scheme: str) -> int:
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"scheme must be one of {sorted(SCHEMES)}, got {scheme!r}") from None


def _check_dt(dt: float) -> None:
    if not dt > 0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive, got {dt!r}")


def step_sites(x: np.ndarray, params: ModelParams, dt: float, rng: np.random.Generator,
               scheme: str = DEFAULT_SCHEME, group: int | None = None) -> None:
    """Advance a flat array of one or more stacked systems in place.

    ``x`` holds ``len(x) // group`` systems of ``group`` sites each; the
    mean-field term uses each system's own mean.
    """
    group = params.n_sites if group is None else group
    c = params.migration_rate
    mu = params.site_mutation_rate
    means = x.reshape(-1, group).mean(axis=1)
    imm = np.ascontiguousarray(c * means + mu)
    kernels.diffusion_step(x, imm, group, c + mu, params.selection_rate, params.d, dt,
                           BOUNDARY_LAYER, _scheme_code(scheme), rng)


def em_step(config: Configuration, params: ModelParams, dt: float,
            stream: np.random.Generator, scheme: str = "em") -> Configuration:
    """One clamped Euler-Maruyama step of every site.

    The diffusion coefficient is evaluated at the pre-step state, so it
    vanishes on the boundary; the result is clamped to [0, 1].
    """
    _check_dt(dt)
    if config.n_sites != params.n_sites:
        raise ValueError(f"configuration has {config.n_sites} sites, params expect {params.n_sites}")
    x = np.array(config.x2, dtype=np.float64)
    step_sites(x, params, dt, stream, scheme)
    return Configuration(x, config.time + dt)


@dataclass(frozen=True)
class ForwardTrajectory:
    """Recorded mean and total type-2 mass of one forward run."""

    times: np.ndarray
    mean_mass: np.ndarray
    total_mass: np.ndarray
    snapshots: list[Configuration] = field(default_factory=list)


def _record_grid(T: float, dt: float, record_every: int) -> tuple[int, np.ndarray]:
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T!r}")
    _check_dt(dt)
    if record_every < 1:
        raise ValueError("record_every must be a positive number of steps")
    n_steps = int(math.ceil(T / dt - 1e-9))
    rec_steps = np.arange(0, n_steps + 1, record_every)
    if rec_steps[-1] != n_steps:
        rec_steps = np.append(rec_steps, n_steps)
    return n_steps, rec_steps


def simulate_forward(params: ModelParams, T: float, dt: float, seed: SeedSpec,
                     record_every: int = 1, snapshot_times: tuple[float, ...] = (),
                     scheme: str = DEFAULT_SCHEME) -> ForwardTrajectory:
    """Simulate from the all-type-1 state x2 = 0 up to time T.

    Records every ``record_every`` steps and at the final step; a snapshot
    is kept at the first step at or after each of ``snapshot_times``.
    """
    n_steps, rec_steps = _record_grid(T, dt, record_every)
    rng = derive_stream(seed)
    N = params.n_sites
    x = np.zeros(N)
    means = np.empty(rec_steps.shape[0])
    pending = sorted(snapshot_times)
    snaps: list[Configuration] = []
    ri = 0
    for step in range(n_steps + 1):
        while pending and pending[0] <= step * dt + 1e-12:
            snaps.append(Configuration(x.copy(), step * dt))
            pending.pop(0)
        if ri < rec_steps.shape[0] and rec_steps[ri] == step:
            means[ri] = x.mean()
            ri += 1
        if step < n_steps:
            step_sites(x, params, dt, rng, scheme)
    times = rec_steps * dt
    return ForwardTrajectory(times, means, N * means, snaps)


@dataclass(frozen=True)
class ForwardEnsemble:
    """Many independent forward runs recorded on a shared time grid.

    ``mean_mass[r, j]`` is replica r's mean at ``times[j]``; ``final`` holds
    the terminal configuration of each replica.
    """

    times: np.ndarray
    mean_mass: np.ndarray
    final: np.ndarray
    n_sites: int


def simulate_forward_ensemble(params: ModelParams, reps: int, T: float, dt: float, seed: SeedSpec,
                              record_every: int = 1, scheme: str = DEFAULT_SCHEME,
                              batch: int = 64, stop_mean: float | None = None) -> ForwardEnsemble:
    """Run ``reps`` independent systems, stepped together in batches.

    Batch ``b`` draws from replica stream ``b`` of ``seed``, so results depend
    only on the seed and ``batch``, not on how batches are scheduled. With
    ``stop_mean`` a batch stops early once every member's mean reached it;
    later records then repeat the last value.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    n_steps, rec_steps = _record_grid(T, dt, record_every)
    N = params.n_sites
    out = np.empty((reps, rec_steps.shape[0]))
    final = np.empty((reps, N))
    for b0 in range(0, reps, batch):
        nb = min(batch, reps - b0)
        rng = derive_stream(seed.replica(b0 // batch))
        x = np.zeros(nb * N)
        ri = 0
        for step in range(n_steps + 1):
            if rec_steps[ri] == step:
                out[b0:b0 + nb, ri] = x.reshape(nb, N).mean(axis=1)
                ri += 1
                if stop_mean is not None and out[b0:b0 + nb, ri - 1].min() >= stop_mean:
                    out[b0:b0 + nb, ri:] = out[b0:b0 + nb, ri - 1:ri]
                    break
            if step < n_steps:
                step_sites(x, params, dt, rng, scheme, group=N)
        final[b0:b0 + nb] = x.reshape(nb, N)
    return ForwardEnsemble(rec_steps * dt, out, final, N)


def deterministic_single_site(m: float, s: float, t: float | np.ndarray) -> float | np.ndarray:
    """Solution of x' = m (1 - x) + s x (1 - x) with x(0) = 0.

    Written with ``exp(-(m + s) t)`` so it stays finite for large t.
    """
    if m < 0 or s < 0 or (m == 0 and s == 0):
        raise ValueError("need m, s >= 0, not both zero")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    decay = np.exp(-(m + s) * t_arr)
    val = m * (1.0 - decay) / (s * decay + m) if m > 0 else np.zeros_like(t_arr)
    return float(val) if np.ndim(val) == 0 else val


def integrate_single_site(m: float, s: float, t_grid, rtol: float = 1e-12) -> np.ndarray:
    """Numerically integrate the deterministic single-site ODE onto ``t_grid``."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(t_grid < 0):
        raise ValueError("t must be >= 0")
    if t_grid.max() == 0.0:
        return np.zeros_like(t_grid)
    sol = solve_ivp(lambda _t, y: m * (1.0 - y) + s * y * (1.0 - y), (0.0, float(t_grid.max())),
                    [0.0], method="DOP853", t_eval=t_grid, rtol=rtol, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[0]


def hitting_time(traj: ForwardTrajectory, eps: float) -> float | None:
    """First time the recorded mean reaches ``eps``, interpolated linearly between records."""
    return hitting_time_series(traj.times, traj.mean_mass, eps)


def hitting_time_series(times: np.ndarray, values: np.ndarray, eps: float) -> float | None:
    """Linear-interpolated first passage of ``values`` above ``eps``."""
    above = np.flatnonzero(np.asarray(values) >= eps)
    if above.size == 0:
        return None
    j = int(above[0])
    if j == 0:
        return float(times[0])
    t0, t1 = float(times[j - 1]), float(times[j])
    v0, v1 = float(values[j - 1]), float(values[j])
    return t0 + (eps - v0) / (v1 - v0) * (t1 - t0)

"""Excursion-driven droplet dynamics.

Atoms follow ``dx = -c x dt + s x (1 - x) dt + sqrt(d x (1 - x)) dW`` and are
absorbed at 0. New atoms start at ``eps`` as a Poisson stream of rate
``(m + c * total_mass) / S(eps)`` with S the scale function, each at a fresh
uniform location. Spawns that would die inside the step in which they are
born never become visible, so the simulator draws only the survivors (exact
Poisson thinning of the within-step spawn stream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, trapezoid

from . import kernels
from .forward import BOUNDARY_LAYER, _check_dt
from .malthus import DEFAULT_J, BDChainSpec, chain_distribution, dual_mean_f, malthus
from .params import AtomicMeasure, ModelParams, SeedSpec, derive_stream

ABSORB_FRACTION = 0.01


def _scale_density(params: ModelParams):
    s, c, d = params.selection_rate, params.migration_rate, params.d
    if d <= 0:
        raise ValueError("scale function needs d > 0")
    return lambda y: math.exp(-2.0 * s * y / d) * (1.0 - y) ** (-2.0 * c / d)


def scale_value(params: ModelParams, x: float) -> float:
    """S(x) = int_0^x exp(-2 s y / d) (1 - y)^(-2 c / d) dy."""
    if not 0.0 <= x < 1.0:
        raise ValueError("scale function is defined on [0, 1)")
    if x == 0.0:
        return 0.0
    val, _ = quad(_scale_density(params), 0.0, x, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class ScaleTable:
    """Scale function tabulated on a grid of [0, 1); linear interpolation between nodes."""

    grid: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)


def scale_function(params: ModelParams, grid) -> ScaleTable:
    """Tabulate S on ``grid`` by adaptive quadrature between consecutive nodes."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0 or g.min() < 0 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing and >= 0")
    if g.max() >= 1.0:
        raise ValueError("grid must stay below 1, where the scale function diverges")
    dens = _scale_density(params)
    vals = np.zeros(g.shape[0])
    acc = 0.0 if g[0] == 0 else scale_value(params, float(g[0]))
    vals[0] = acc
    for i in range(1, g.shape[0]):
        piece, _ = quad(dens, float(g[i - 1]), float(g[i]), epsabs=0.0, epsrel=1e-13, limit=200)
        acc += piece
        vals[i] = acc
    return ScaleTable(g, vals)


# ---------------------------------------------------------------------------
# excursions
# ---------------------------------------------------------------------------

def _atom_step(x: np.ndarray, params: ModelParams, dt: float, rng: np.random.Generator) -> None:
    kernels.diffusion_step(x, np.zeros(1), max(1, x.shape[0]), params.migration_rate, params.selection_rate,
                           params.d, dt, BOUNDARY_LAYER, 1, rng)


@dataclass(frozen=True)
class ExcursionPath:
    """One eps-started path until absorption or the horizon."""

    start_time: float
    times: np.ndarray
    values: np.ndarray
    end_time: float
    weight: float
    absorbed: bool


def sample_excursion(eps: float, params: ModelParams, dt: float, seed: SeedSpec,
                     horizon: float = 50.0) -> ExcursionPath:
    """Simulate one path from ``eps`` until it drops below ``eps/100`` or the horizon ends."""
    if not 0.0 < eps < 0.1:
        raise ValueError("eps must lie in (0, 0.1)")
    _check_dt(dt)
    rng = derive_stream(seed)
    x = np.array([eps])
    vals = [eps]
    n_max = int(math.ceil(horizon / dt))
    floor = eps * ABSORB_FRACTION
    absorbed = False
    for _ in range(n_max):
        _atom_step(x, params, dt, rng)
        if x[0] < floor:
            absorbed = True
            vals.append(0.0)
            break
        vals.append(float(x[0]))
    values = np.array(vals)
    times = dt * np.arange(values.shape[0])
    return ExcursionPath(0.0, times, values, float(times[-1]), 1.0 / scale_value(params, eps), absorbed)


@dataclass(frozen=True)
class ExcursionBatch:
    """Suprema and lifetimes of many eps-started paths."""

    sup: np.ndarray
    lifetime: np.ndarray
    alive_at_horizon: int
    weight: float


def sample_excursions(n: int, eps: float, params: ModelParams, dt: float, seed: SeedSpec,
                      horizon: float = 50.0) -> ExcursionBatch:
    """Vectorised version of :func:`sample_excursion` keeping only supremum and lifetime."""
    _check_dt(dt)
    rng = derive_stream(seed)
    x = np.full(n, eps)
    idx = np.arange(n)
    sup = np.full(n, eps)
    life = np.full(n, horizon)
    floor = eps * ABSORB_FRACTION
    for step in range(1, int(math.ceil(horizon / dt)) + 1):
        if x.shape[0] == 0:
            break
        _atom_step(x, params, dt, rng)
        np.maximum.at(sup, idx, x)
        dead = x < floor
        if dead.any():
            life[idx[dead]] = step * dt
            x, idx = x[~dead], idx[~dead]
    return ExcursionBatch(sup, life, int(x.shape[0]), 1.0 / scale_value(params, eps))


# ---------------------------------------------------------------------------
# droplet process
# ---------------------------------------------------------------------------

class _SpawnSampler:
    """Survivors at the end of a step among eps-spawns arriving uniformly within it.

    A spawn with remaining time h survives with probability 1 - exp(-lam(h));
    given survival its value is an exact squared-Bessel step from eps
    conditioned on a nonzero Poisson index.
    """

    def __init__(self, params: ModelParams, eps: float, dt: float) -> None:
        s, c, d = params.selection_rate, params.migration_rate, params.d
        self.eps, self.dt = eps, dt
        self.b = s * (1.0 - eps) - c
        self.sig2 = d * (1.0 - eps)
        self.survive_measure = quad(lambda h: -math.expm1(-self.lam(h)), 0.0, dt, epsabs=0.0,
                                    epsrel=1e-12, limit=200)[0]

    def _ratio(self, h):
        bh = self.b * h
        return np.where(np.abs(bh) < 1e-12, h, np.expm1(bh) / np.where(self.b == 0, 1.0, self.b))

    def lam(self, h):
        ch = 0.25 * self.sig2 * self._ratio(h)
        return self.eps * np.exp(self.b * h) / (2.0 * ch)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n == 0:
            return np.zeros(0)
        h = np.empty(n)
        filled = 0
        while filled < n:
            m = 2 * (n - filled) + 16
            cand = self.dt * (1.0 - rng.random(m))  # in (0, dt]
            keep = cand[rng.random(m) < -np.expm1(-self.lam(cand))]
            take = min(keep.shape[0], n - filled)
            h[filled:filled + take] = keep[:take]
            filled += take
        lam = self.lam(h)
        p = self._zero_truncated_poisson(lam, rng)
        scale = 0.5 * self.sig2 * self._ratio(h)
        return scale * rng.standard_gamma(p.astype(np.float64))

    @staticmethod
    def _zero_truncated_poisson(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.empty(lam.shape[0], dtype=np.int64)
        big = lam > 5.0
        if big.any():
            lb = lam[big]
            draw = rng.poisson(lb)
            while (draw == 0).any():
                zero = draw == 0
                draw[zero] = rng.poisson(lb[zero])
            out[big] = draw
        small = ~big
        if small.any():
            ls = lam[small]
            p0 = np.exp(-ls)
            target = p0 + rng.random(ls.shape[0]) * (1.0 - p0)
            k = np.zeros(ls.shape[0], dtype=np.int64)
            term = p0.copy()
            cdf = p0.copy()
            active = cdf < target
            while active.any():
                k[active] += 1
                term[active] *= ls[active] / k[active]
                cdf[active] += term[active]
                active &= cdf < target
                if k.max() > 200:  # roundoff guard; unreachable for lam <= 5
                    break
            out[small] = np.maximum(k, 1)
        return out


@dataclass
class DropletTrajectory:
    """Total mass on a time grid plus atom snapshots at requested times."""

    times: np.ndarray
    total_mass: np.ndarray
    n_atoms: np.ndarray
    snapshot_times: list[float] = field(default_factory=list)
    measures: list[AtomicMeasure] = field(default_factory=list)


def simulate_droplet(params: ModelParams, T: float, eps: float, dt: float, seed: SeedSpec,
                     init: AtomicMeasure | None = None, record_every: int = 1,
                     snapshot_times: tuple[float, ...] = ()) -> DropletTrajectory:
    """Simulate the droplet measure on [0, T].

    The spawn rate uses the total mass at the start of each step; the mutation
    intensity is ``params.m`` (the droplet lives on the scale of whole mass,
    not per site).
    """
    if not 0.0 < eps < 0.1:
        raise ValueError("eps must lie in (0, 0.1)")
    _check_dt(dt)
    rng = derive_stream(seed)
    spawn = _SpawnSampler(params, eps, dt)
    inv_scale = 1.0 / scale_value(params, eps)
    floor = eps * ABSORB_FRACTION
    x = np.array(init.masses if init is not None else [], dtype=np.float64)
    loc = np.array(init.locations if init is not None else [], dtype=np.float64)
    if x.size and x.max() >= 1.0:
        raise ValueError("initial atom masses must be below 1")
    n_steps = int(math.ceil(T / dt - 1e-9))
    pending = sorted(snapshot_times)
    snaps_t: list[float] = []
    snaps: list[AtomicMeasure] = []
    times, mass, count = [0.0], [float(x.sum())], [x.shape[0]]
    c, m = params.migration_rate, params.m
    for step in range(1, n_steps + 1):
        rate = (m + c * float(x.sum())) * inv_scale
        if x.shape[0]:
            _atom_step(x, params, dt, rng)
        n_new = int(rng.poisson(rate * spawn.survive_measure)) if rate > 0 else 0
        if n_new:
            x = np.concatenate([x, spawn.draw(n_new, rng)])
            loc = np.concatenate([loc, rng.random(n_new)])
        alive = x >= floor
        if not alive.all():
            x, loc = x[alive], loc[alive]
        t = step * dt
        while pending and pending[0] <= t + 1e-12:
            snaps_t.append(t)
            snaps.append(AtomicMeasure(loc.copy(), x.copy()))
            pending.pop(0)
        if step % record_every == 0 or step == n_steps:
            times.append(t)
            mass.append(float(x.sum()))
            count.append(x.shape[0])
    return DropletTrajectory(np.array(times), np.array(mass), np.array(count), snaps_t, snaps)


# ---------------------------------------------------------------------------
# renewal mean
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalMean:
    times: np.ndarray
    mean: np.ndarray
    f: np.ndarray


def _volterra(g: np.ndarray, forcing: np.ndarray, f: np.ndarray, c: float, h: float) -> np.ndarray:
    n = g.shape[0]
    out = np.empty(n)
    out[0] = g[0] + forcing[0]
    denom = 1.0 - 0.5 * c * h * f[0]
    for k in range(1, n):
        # trapezoid on c * int_0^t m(r) f(t - r) dr, implicit in the endpoint term
        hist = 0.5 * out[0] * f[k] + np.dot(out[1:k], f[k - 1:0:-1])
        out[k] = (g[k] + forcing[k] + c * h * hist) / denom
    return out


def renewal_mean_mass(params: ModelParams, T: float, J: int = DEFAULT_J, tol: float = 1e-3,
                      init: AtomicMeasure | None = None, step: float = 5e-3) -> RenewalMean:
    """Solve m(t) = g(t) + m int_0^t f + c int_0^t m(r) f(t - r) dr on a uniform grid.

    f is the excursion-dual mean and g the expected mass carried by the
    initial atoms. The solve is repeated at twice the step; a relative
    discrepancy above ``tol`` raises.
    """
    def solve(h: float) -> RenewalMean:
        n = int(math.ceil(T / h))
        t = np.linspace(0.0, n * h, n + 1)
        spec = BDChainSpec.from_params(params, singleton_emigrates=True, J=J)
        P, spec = chain_distribution(spec, t)
        f = P @ np.arange(spec.J + 1, dtype=np.float64)
        g = np.zeros_like(t)
        if init is not None and len(init):
            k = np.arange(spec.J + 1)
            for y in init.masses:
                g += 1.0 - P @ (1.0 - y) ** k
        forcing = params.m * cumulative_trapezoid(f, t, initial=0.0)
        return RenewalMean(t, _volterra(g, forcing, f, params.migration_rate, h), f)

    fine = solve(step)
    coarse = solve(2 * step)
    ref = fine.mean[::2][:coarse.mean.shape[0]]
    scale = np.maximum(np.abs(ref), 1e-12)
    err = float(np.max(np.abs(ref - coarse.mean[:ref.shape[0]]) / scale)) if np.any(ref > 0) else 0.0
    if err > tol:
        raise RuntimeError(f"renewal solve not converged: step-halving change {err:.3g} > {tol}")
    return fine


def renewal_growth_limit(params: ModelParams, J: int = DEFAULT_J) -> float:
    """lim exp(-alpha t) E[mass(t)] from an empty start, by the key renewal theorem.

    Equals m / (alpha c R) with R = c int r exp(-alpha r) f(r) dr.
    """
    res = malthus(params, J)
    a, c = res.alpha, params.migration_rate
    T = 20.0 / c
    while True:
        t = np.linspace(0.0, T, int(T / 1e-2) + 1)
        f = dual_mean_f(params, t, J)
        if f[-1] < 1e-12:
            break
        T *= 2
    R = c * trapezoid(t * np.exp(-a * t) * f, t)
    return params.m / (a * c * R)


@dataclass(frozen=True)
class WStarEstimate:
    values: np.ndarray
    mean: float
    var: float
    se: float


def estimate_Wstar(mass: np.ndarray | list[DropletTrajectory], times: np.ndarray | None, alpha: float,
                   t_late: float) -> WStarEstimate:
    """Per-replica ``exp(-alpha t_late) * mass(t_late)`` and its moments.

    ``mass`` is either a list of trajectories or an array (reps, len(times)).
    """
    if isinstance(mass, list):
        if not mass:
            raise ValueError("no trajectories")
        times = mass[0].times
        mass = np.array([tr.total_mass for tr in mass])
    mass = np.asarray(mass, dtype=np.float64)
    if mass.shape[0] < 2:
        raise ValueError("need at least two replicas")
    if not times[0] <= t_late <= times[-1]:
        raise ValueError("t_late outside the recorded horizon")
    vals = math.exp(-alpha * t_late) * np.array([np.interp(t_late, times, row) for row in mass])
    n = vals.shape[0]
    return WStarEstimate(vals, float(vals.mean()), float(vals.var(ddof=1)), float(vals.std(ddof=1) / math.sqrt(n)))

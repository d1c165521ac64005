"""Mean-field (McKean-Vlasov) limit dynamics.

A single site in the limit follows

    dy = c (m(t) - y) dt + s y (1 - y) dt + sqrt(d y (1 - y)) dW

where m(t) is the law's own mean. The law is represented by a finite
ensemble. The module also integrates the deterministic (u, U) system
describing the occupied fraction and size profile of the collision-free dual
near the emergence time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .dual import particle_counts
from .forward import BOUNDARY_LAYER, DEFAULT_SCHEME, _check_dt, _scheme_code, hitting_time_series
from .malthus import DEFAULT_J, SizeDistribution, malthus
from .params import ModelParams, SeedSpec, derive_stream


@dataclass(frozen=True)
class MeanCurve:
    """Mean type-2 fraction on a time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("mean values must lie in [0, 1]")

    def at(self, t: np.ndarray | float) -> np.ndarray | float:
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True)
class EnsembleState:
    """Ensemble members and their mean at one time."""

    members: np.ndarray
    time: float

    @property
    def mean(self) -> float:
        return float(self.members.mean())


def _initial_members(init, M: int) -> np.ndarray:
    if np.isscalar(init):
        theta = float(init)
        if not 0.0 <= theta <= 1.0:
            raise ValueError("initial value must lie in [0, 1]")
        return np.full(M, theta)
    arr = np.array(init, dtype=np.float64).reshape(-1)
    if arr.shape[0] != M or arr.min() < 0 or arr.max() > 1:
        raise ValueError(f"initial sample must hold {M} values in [0, 1]")
    return arr


def mv_ensemble_simulate(params: ModelParams, M: int, init, T: float, dt: float, seed: SeedSpec,
                         record_every: int = 1, scheme: str = DEFAULT_SCHEME,
                         mean_mode: str = "self") -> tuple[MeanCurve, EnsembleState]:
    """Evolve M coupled members sharing their ensemble mean.

    ``init`` is a number theta (all members start at theta) or an array of
    M starting values. ``mean_mode="frozen"`` holds the interaction mean at
    its initial value, which gives the linearised equation.
    """
    if M < 2:
        raise ValueError("ensemble needs M >= 2")
    if mean_mode not in ("self", "frozen"):
        raise ValueError("mean_mode must be 'self' or 'frozen'")
    _check_dt(dt)
    if not T > 0:
        raise ValueError("T must be positive")
    x = _initial_members(init, M)
    rng = derive_stream(seed)
    n_steps = int(math.ceil(T / dt - 1e-9))
    code = _scheme_code(scheme)
    c, s = params.migration_rate, params.selection_rate
    frozen = x.mean()
    times, vals = [0.0], [x.mean()]
    imm = np.empty(1)
    for step in range(1, n_steps + 1):
        imm[0] = c * (frozen if mean_mode == "frozen" else x.mean())
        kernels.diffusion_step(x, imm, M, c, s, params.d, dt, BOUNDARY_LAYER, code, rng)
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            vals.append(x.mean())
    return MeanCurve(np.array(times), np.clip(np.array(vals), 0.0, 1.0)), EnsembleState(x, n_steps * dt)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    se: float


def mv_dual_moment(theta: float, k: int, t: float, params: ModelParams, reps: int, seed: SeedSpec,
                   mode: str = "frozen") -> MomentEstimate:
    """Estimate E[x2(t)^k] for the limit dynamics started from theta by duality.

    For j particles, E[x1(t)^j] = E[(1 - theta)^{|Pi_t|}]; moments of x2 follow
    by inclusion-exclusion over j = 0..k with an independent dual sample per j.
    ``mode="frozen"`` uses the two-site dual whose sink never moves (dual of
    the linearised equation with interaction mean held at theta);
    ``mode="mean_field"`` uses the collision-free dual, which is the dual of
    the self-consistent equation.
    """
    if reps < 2:
        raise ValueError("need at least two replicas")
    if k < 1:
        raise ValueError("moment order must be >= 1")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if mode not in ("frozen", "mean_field"):
        raise ValueError("mode must be 'frozen' or 'mean_field'")
    value = 1.0
    var = 0.0
    for j in range(1, k + 1):
        sub = seed.labelled(f"{seed.stream_label}/moment{j}")
        if mode == "frozen":
            sizes = kernels.frozen_star_dual_sizes(j, float(t), params.selection_rate, params.migration_rate,
                                                   params.d, reps, derive_stream(sub))
        else:
            sizes = particle_counts((j, 1), params, float(t), reps, sub, collision_free=True)
        vals = (1.0 - theta) ** sizes.astype(np.float64)
        w = comb(k, j) * (-1) ** j
        value += w * float(vals.mean())
        var += comb(k, j) ** 2 * float(vals.var(ddof=1)) / reps
    return MomentEstimate(value, math.sqrt(var))


@dataclass(frozen=True)
class EntranceCurve:
    """One recentred mean curve and its negative-time prefactor."""

    start: float
    shift: float
    times: np.ndarray
    values: np.ndarray
    prefactor: float


def entrance_law_construct(params: ModelParams, M: int, dt: float, a_sequence, seed: SeedSpec,
                           horizon: float = 40.0, window: tuple[float, float] = (-4.0, -2.0),
                           alpha: float | None = None) -> list[EntranceCurve]:
    """Recentre ensemble mean curves from small starts so each crosses 1/2 at t = 0.

    ``prefactor`` is the average of ``exp(alpha |t|) * mean(t)`` over ``window``.
    """
    alpha = malthus(params).alpha if alpha is None else alpha
    out = []
    for n, a in enumerate(a_sequence):
        if not 0.0 < a < 0.5:
            raise ValueError("each start value must lie in (0, 1/2)")
        curve, _ = mv_ensemble_simulate(params, M, a, horizon, dt, seed.replica(n))
        r = hitting_time_series(curve.times, curve.values, 0.5)
        if r is None:
            raise RuntimeError(f"mean never reached 1/2 within horizon {horizon} from start {a}")
        t = curve.times - r
        sel = (t >= window[0]) & (t <= window[1])
        pref = float(np.mean(np.exp(alpha * np.abs(t[sel])) * curve.values[sel])) if sel.any() else math.nan
        out.append(EntranceCurve(float(a), float(r), t, curve.values, pref))
    return out


# ---------------------------------------------------------------------------
# (u, U) system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UUState:
    """Occupied fraction u and size profile U over sizes 1..J."""

    u: float
    U: np.ndarray
    c: float

    @property
    def alpha_t(self) -> float:
        j = np.arange(1, self.U.shape[0] + 1)
        return self.c * float(np.dot(j[1:], self.U[1:]))

    @property
    def gamma_t(self) -> float:
        return self.c * float(self.U[0])

    @property
    def b_t(self) -> float:
        return 1.0 + self.gamma_t / self.alpha_t


@dataclass(frozen=True)
class UUTrajectory:
    times: np.ndarray
    u: np.ndarray
    U: np.ndarray
    alpha_t: np.ndarray
    gamma_t: np.ndarray


def _uU_rhs(params: ModelParams, J: int, frozen: tuple[float, float] | None):
    s, c, d = params.selection_rate, params.migration_rate, params.d
    j = np.arange(1, J + 1, dtype=np.float64)
    birth_out = s * j
    birth_out[-1] = 0.0  # closed top
    coal_out = 0.5 * d * j * (j - 1)
    emig_out = c * j * (j >= 2)
    loss = birth_out + coal_out + emig_out

    # y[0] is log u when log_u is set, keeping tiny u at full relative precision
    def rhs(_t, y, log_u):
        u = math.exp(y[0]) if log_u else y[0]
        U = y[1:]
        if frozen is None:
            a = c * float(np.dot(j[1:], U[1:]))
            g = c * float(U[0])
        else:
            a, g = frozen
        dU = -loss * U
        dU[1:] += birth_out[:-1] * U[:-1]
        dU[:-1] += (coal_out[1:] + c * j[1:]) * U[1:]
        dU[0] += a - a * u - g * u
        shift = u * (a + g)
        dU[1:] += shift * U[:-1]
        dU[:-1] -= shift * U[:-1]
        dU -= (a * (1.0 - u) - g * u) * U
        growth = a * (1.0 - u) - g * u
        return np.concatenate(([growth if log_u else growth * u], dU))

    return rhs


def uU_integrate(init: UUState, params: ModelParams, J: int = DEFAULT_J, T: float = 10.0,
                 tol: float = 1e-10, t0: float = 0.0, t_eval=None,
                 frozen_rates: tuple[float, float] | None = None) -> UUTrajectory:
    """Integrate the coupled (u, U) equations from ``t0`` to ``t0 + T``.

    The size-J top state is closed so the flow keeps U a probability vector.
    ``frozen_rates=(alpha, gamma)`` replaces the U-dependent rates by constants.
    """
    U0 = np.zeros(J)
    n0 = min(J, init.U.shape[0])
    U0[:n0] = init.U[:n0]
    if init.U.shape[0] > J and init.U[J:].sum() > 1e-10:
        raise ValueError("initial profile has mass beyond the truncation J")
    if abs(U0.sum() - 1.0) > 1e-9 or U0.min() < 0:
        raise ValueError("initial U must be a probability vector")
    if not 0.0 <= init.u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    if t_eval is None:
        t_eval = np.linspace(t0, t0 + T, 201)
    log_u = init.u > 0
    y0 = np.concatenate(([math.log(init.u) if log_u else 0.0], U0))
    sol = solve_ivp(_uU_rhs(params, J, frozen_rates), (t0, t0 + T), y0, args=(log_u,),
                    method="BDF", t_eval=t_eval, rtol=tol, atol=tol * 1e-3)
    if not sol.success:
        raise RuntimeError(f"(u, U) integration failed: {sol.message}")
    u = np.exp(sol.y[0]) if log_u else np.zeros(sol.t.shape[0])
    U = sol.y[1:].T
    if np.max(U[:, -1]) > 1e-10:
        raise RuntimeError(f"profile mass at the truncation J={J} exceeds 1e-10")
    jj = np.arange(1, J + 1)
    c = params.migration_rate
    if frozen_rates is None:
        alpha_t = c * (U[:, 1:] @ jj[1:])
        gamma_t = c * U[:, 0]
    else:
        alpha_t = np.full(U.shape[0], frozen_rates[0])
        gamma_t = np.full(U.shape[0], frozen_rates[1])
    return UUTrajectory(sol.t, u, U, alpha_t, gamma_t)


@dataclass(frozen=True)
class StandardSolution:
    """Occupied-fraction curve with e^{-alpha t} u(t) -> 1 as t -> -infinity."""

    times: np.ndarray
    u: np.ndarray
    alpha_t: np.ndarray
    gamma_t: np.ndarray
    alpha: float
    t0_sensitivity: float
    U: np.ndarray | None = None

    def at(self, t) -> np.ndarray | float:
        # log-linear interpolation keeps the exponential regime exact between grid points
        return np.exp(np.interp(t, self.times, np.log(self.u)))

    def profile_at(self, t: float) -> np.ndarray:
        """Size profile U(t), linearly interpolated between grid points."""
        if self.U is None:
            raise ValueError("this solution was built without the size profile")
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(j, self.times.shape[0] - 2)
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return (1.0 - w) * self.U[j] + w * self.U[j + 1]


def u_standard_solution(params: ModelParams, J: int = DEFAULT_J, t0: float | None = None, T: float = 10.0,
                        step: float = 0.05, check_t0: bool = True) -> StandardSolution:
    """Integrate from u(t0) = e^{alpha t0}, U(t0) = stable profile, up to time T.

    ``t0_sensitivity`` is |u*(0)| change when the start time is halved.
    """
    res = malthus(params, J)
    alpha = res.alpha
    if t0 is None:
        t0 = -30.0 / alpha
    if t0 > -10.0 / alpha:
        raise ValueError("t0 must be at most -10/alpha")
    Jr = max(J, res.u_infty.J)

    def solve(start: float) -> UUTrajectory:
        n = int(round((T - start) / step))
        grid = np.linspace(start, start + n * step, n + 1)
        init = UUState(math.exp(alpha * start), res.u_infty.padded(Jr), params.migration_rate)
        return uU_integrate(init, params, Jr, grid[-1] - start, 1e-10, start, grid)

    main = solve(t0)
    sens = math.nan
    if check_t0:
        half = solve(0.5 * t0)
        sens = abs(float(np.interp(0.0, main.times, main.u))
                   - float(np.interp(0.0, half.times, half.u)))
    return StandardSolution(main.times, main.u, main.alpha_t, main.gamma_t, alpha, sens, main.U)


def u_hat_closed_form(alpha: float, b: float, t, correction=None):
    """Logistic curve e^{alpha t} I(t) / (1 + b e^{alpha t} I(t)); I defaults to 1."""
    if not (alpha > 0 and b > 0):
        raise ValueError("alpha and b must be positive")
    t = np.asarray(t, dtype=np.float64)
    I = np.ones_like(t) if correction is None else np.asarray(correction(t) if callable(correction) else correction,
                                                             dtype=np.float64)
    with np.errstate(over="ignore", divide="ignore"):
        val = 1.0 / (np.exp(-alpha * t) / I + b)
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# tagged sites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaggedPaths:
    times: np.ndarray
    paths: np.ndarray


def tagged_sites_simulate(mean_curve: MeanCurve, params: ModelParams, L: int, dt: float, seed: SeedSpec,
                          T: float | None = None, init: float = 0.0, record_every: int = 1,
                          scheme: str = DEFAULT_SCHEME) -> TaggedPaths:
    """L independent sites driven by a prescribed mean curve, started at ``init``."""
    _check_dt(dt)
    T = float(mean_curve.times[-1]) if T is None else T
    if mean_curve.times[0] > 0 or mean_curve.times[-1] < T - 1e-9:
        raise ValueError("mean curve does not span the simulation horizon")
    n_steps = int(math.ceil(T / dt - 1e-9))
    rng = derive_stream(seed)
    x = np.full(L, float(init))
    c, s = params.migration_rate, params.selection_rate
    code = _scheme_code(scheme)
    rec_t, rec_x = [0.0], [x.copy()]
    imm = np.empty(1)
    for step in range(n_steps):
        imm[0] = c * float(mean_curve.at(step * dt))
        kernels.diffusion_step(x, imm, L, c, s, params.d, dt, BOUNDARY_LAYER, code, rng)
        if (step + 1) % record_every == 0 or step + 1 == n_steps:
            rec_t.append((step + 1) * dt)
            rec_x.append(x.copy())
    return TaggedPaths(np.array(rec_t), np.array(rec_x).T)

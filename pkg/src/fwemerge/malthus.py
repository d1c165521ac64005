"""Single-site birth-death chain numerics and the Malthusian parameter.

The chain counts dual particles on one site: births at rate ``s k``,
down-moves at rate ``c k + (d/2) k (k - 1)`` where emigration ``c k`` is
suppressed for ``k = 1`` unless singletons emigrate. Two independent routes
give the growth rate alpha: a renewal (Laplace) equation solved by quadrature
of the transient chain, and a fixed point of the reset-chain equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson, solve_ivp
from scipy.sparse.linalg import spsolve

from . import kernels
from .params import SeedSpec, derive_stream

DEFAULT_J = 256
MAX_J = 8192
TAIL_TOL = 1e-10
ALPHA_XTOL = 1e-10


class TruncationError(RuntimeError):
    """The truncated chain carries too much mass at its top state."""


@dataclass(frozen=True)
class BDChainSpec:
    """Rates of the truncated single-site chain on states 0..J.

    ``reset_rate`` moves every state ``k >= 2`` back to 1; for ``k = 2`` it
    adds to the ordinary down-move.
    """

    s: float
    c: float
    d: float
    singleton_emigrates: bool = False
    reset_rate: float = 0.0
    J: int = DEFAULT_J

    def __post_init__(self) -> None:
        for name in ("s", "c", "d", "reset_rate"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.J < 3:
            raise ValueError("truncation J must be at least 3")

    @classmethod
    def from_params(cls, params, **kw) -> "BDChainSpec":
        return cls(params.selection_rate, params.migration_rate, params.d, **kw)

    def with_J(self, J: int) -> "BDChainSpec":
        return BDChainSpec(self.s, self.c, self.d, self.singleton_emigrates, self.reset_rate, J)

    def birth(self, k: np.ndarray) -> np.ndarray:
        return self.s * k

    def death(self, k: np.ndarray) -> np.ndarray:
        emig = self.c * k if self.singleton_emigrates else self.c * k * (k >= 2)
        return emig + 0.5 * self.d * k * (k - 1)

    def generator(self) -> sp.csr_matrix:
        """Generator on states 0..J with a closed top state (no births out of J)."""
        J = self.J
        k = np.arange(J + 1, dtype=np.float64)
        up = self.birth(k)
        up[0] = 0.0
        up[J] = 0.0
        down = self.death(k)
        rows = [np.arange(J), np.arange(1, J + 1)]
        cols = [np.arange(1, J + 1), np.arange(J)]
        vals = [up[:J], down[1:]]
        if self.reset_rate > 0:
            src = np.arange(3, J + 1)
            rows.append(src)
            cols.append(np.ones_like(src))
            vals.append(np.full(src.shape[0], self.reset_rate))
            vals[1] = vals[1].copy()
            vals[1][1] += self.reset_rate  # the 2 -> 1 entry
        Q = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(J + 1, J + 1)).tocsr()
        Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
        return Q.tocsr()


@dataclass(frozen=True)
class SizeDistribution:
    """Probability vector over sizes 1..J."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("size distribution must be a nonnegative finite vector")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"size distribution sums to {p.sum()!r}, not 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def J(self) -> int:
        return int(self.probs.shape[0])

    def __getitem__(self, size: int) -> float:
        return float(self.probs[size - 1]) if 1 <= size <= self.J else 0.0

    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.J + 1), self.probs))

    def padded(self, J: int) -> np.ndarray:
        out = np.zeros(max(J, self.J))
        out[:self.J] = self.probs
        return out[:J] if J >= self.J else out


def _normalise(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    # one more pass pushes the sum to within a couple of ulps of 1
    return p / math.fsum(p)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two probability vectors over sizes 1..J."""
    n = max(len(p), len(q))
    pp = np.zeros(n)
    qq = np.zeros(n)
    pp[:len(p)] = p
    qq[:len(q)] = q
    return 0.5 * float(np.abs(pp - qq).sum())


# ---------------------------------------------------------------------------
# transient chain
# ---------------------------------------------------------------------------

def _transient(spec: BDChainSpec, t_grid: np.ndarray, start: int = 1) -> np.ndarray:
    Q = spec.generator()
    A = Q.T.tocsr()
    p0 = np.zeros(spec.J + 1)
    p0[start] = 1.0
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid[-1] == 0.0:
        return np.tile(p0, (t_grid.shape[0], 1))
    sol = solve_ivp(lambda _t, p: A @ p, (0.0, float(t_grid[-1])), p0, method="BDF", jac=A,
                    t_eval=t_grid, rtol=1e-10, atol=1e-14)
    if not sol.success:
        raise RuntimeError(f"forward equation failed: {sol.message}")
    return sol.y.T


def chain_distribution(spec: BDChainSpec, t_grid, auto_grow: bool = True) -> tuple[np.ndarray, BDChainSpec]:
    """Law of the chain from state 1 on ``t_grid``; rows are times, columns states 0..J.

    J is doubled until the top-state mass stays below ``TAIL_TOL`` on the grid.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be nondecreasing and >= 0")
    while True:
        P = _transient(spec, t_grid)
        tail = float(np.max(np.abs(P[:, -1])))
        if tail < TAIL_TOL:
            return P, spec
        if not auto_grow or spec.J * 2 > MAX_J:
            raise TruncationError(f"top-state mass {tail:.3g} exceeds {TAIL_TOL} at J={spec.J}")
        spec = spec.with_J(spec.J * 2)


def bd_transient_mean(spec: BDChainSpec, t_grid) -> np.ndarray:
    """E[zeta(t) 1{zeta(t) >= 2}] on ``t_grid`` from the truncated forward equation."""
    P, spec = chain_distribution(spec, t_grid)
    k = np.arange(spec.J + 1, dtype=np.float64)
    k[:2] = 0.0
    return P @ k


def dual_mean_f(params, t_grid, J: int = DEFAULT_J) -> np.ndarray:
    """Mean of the excursion-dual chain (singletons emigrate, 0 absorbing) from one particle."""
    spec = BDChainSpec.from_params(params, singleton_emigrates=True, J=J)
    P, spec = chain_distribution(spec, t_grid)
    return P @ np.arange(spec.J + 1, dtype=np.float64)


def sample_bd_chain(spec: BDChainSpec, t_grid, reps: int, seed: SeedSpec) -> np.ndarray:
    """Monte Carlo paths of the untruncated chain from state 1, shape (reps, len(t_grid))."""
    times = np.ascontiguousarray(np.asarray(t_grid, dtype=np.float64))
    return kernels.bd_chain_sample(1, spec.s, spec.c, spec.d, spec.singleton_emigrates, times, reps,
                                   derive_stream(seed))


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------

def _stationary(spec: BDChainSpec) -> np.ndarray:
    Q = spec.generator()[1:, 1:].tocsc()
    A = Q.T.tolil()
    A[spec.J - 1, :] = np.ones(spec.J)
    rhs = np.zeros(spec.J)
    rhs[-1] = 1.0
    pi = spsolve(A.tocsc(), rhs)
    if not np.all(np.isfinite(pi)):
        raise np.linalg.LinAlgError("truncated generator is singular")
    return pi


def stationary_distribution(spec: BDChainSpec, auto_grow: bool = True) -> tuple[SizeDistribution, BDChainSpec]:
    """Stationary law over sizes 1..J, growing J until the top-state mass is below ``TAIL_TOL``."""
    while True:
        pi = _stationary(spec)
        if np.min(pi) < -1e-12:
            raise np.linalg.LinAlgError("ill-conditioned truncation: negative stationary mass")
        if pi[-1] < TAIL_TOL:
            return SizeDistribution(_normalise(pi)), spec
        if not auto_grow or spec.J * 2 > MAX_J:
            raise TruncationError(f"stationary top-state mass {pi[-1]:.3g} at J={spec.J}")
        spec = spec.with_J(spec.J * 2)


def equilibrium_qstar(a: float, params, J: int = DEFAULT_J) -> SizeDistribution:
    """Stationary law of the chain with reset-to-one at rate ``a`` from every size >= 2."""
    if not a > 0:
        raise ValueError("reset rate must be positive")
    return stationary_distribution(BDChainSpec.from_params(params, reset_rate=a, J=J))[0]


def growth_functional(q: SizeDistribution, c: float) -> float:
    """c * sum_{j >= 2} j q_j, the emigration rate out of non-singleton sites."""
    j = np.arange(1, q.J + 1, dtype=np.float64)
    return c * float(np.dot(j[1:], q.probs[1:]))


def fixed_point_map(a: float, params, J: int = DEFAULT_J) -> float:
    """F(a) = c * sum_{j>=2} j q*_j(a)."""
    return growth_functional(equilibrium_qstar(a, params, J), params.migration_rate)


@dataclass(frozen=True)
class MalthusResult:
    """Growth rate and stable constants from one method."""

    alpha: float
    gamma: float
    B: float
    b: float
    u_infty: SizeDistribution
    method: str
    residual: float
    J: int


@dataclass(frozen=True)
class StableConstants:
    gamma: float
    B: float
    b: float
    alpha_check: float


def stable_constants(u_infty: SizeDistribution, params, alpha: float | None = None) -> StableConstants:
    """gamma = c U(1), B = (alpha + gamma) / c and b = 1 + gamma / alpha.

    ``alpha`` defaults to the value implied by ``u_infty``; ``alpha_check``
    is always that implied value.
    """
    c = params.migration_rate
    implied = growth_functional(u_infty, c)
    a = implied if alpha is None else alpha
    gamma = c * u_infty[1]
    return StableConstants(gamma, (a + gamma) / c, 1.0 + gamma / a, implied)


def _require_positive(params) -> None:
    if not (params.migration_rate > 0 and params.selection_rate > 0 and params.d > 0):
        raise ValueError("Malthusian parameter needs c, s, d > 0")


def _bisect(fun, lo: float, hi: float, xtol: float) -> float:
    f_lo = fun(lo)
    f_hi = fun(hi)
    if f_lo * f_hi > 0:
        raise ValueError(f"no sign change on [{lo:.3g}, {hi:.3g}]: values {f_lo:.3g}, {f_hi:.3g}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def malthusian_fixed_point(params, J: int = DEFAULT_J, tol: float = 1e-6) -> MalthusResult:
    """alpha with F(alpha) = alpha, by bisection of the decreasing gap F(a) - a."""
    _require_positive(params)
    c = params.migration_rate
    q0, spec0 = stationary_distribution(BDChainSpec.from_params(params, J=J))
    upper = growth_functional(q0, c)
    alpha = _bisect(lambda a: fixed_point_map(a, params, spec0.J) - a, 1e-12, upper, ALPHA_XTOL)
    q = equilibrium_qstar(alpha, params, spec0.J)
    residual = growth_functional(q, c) - alpha
    if abs(residual) > tol:
        raise RuntimeError(f"fixed-point residual {residual:.3g} exceeds {tol}")
    const = stable_constants(q, params, alpha)
    return MalthusResult(alpha, const.gamma, const.B, const.b, q, "fixed_point", residual, q.J)


@dataclass(frozen=True)
class RenewalIntegrand:
    """h(t) = E[zeta(t) 1{zeta >= 2}] on a uniform grid plus its stationary limit."""

    t: np.ndarray
    h: np.ndarray
    h_inf: float
    c: float

    def laplace(self, a: float) -> float:
        """c * integral of exp(-a t) h(t), with the tail past the grid taken at h_inf."""
        T = float(self.t[-1])
        body = simpson(np.exp(-a * self.t) * self.h, x=self.t)
        return self.c * (body + self.h_inf * math.exp(-a * T) / a)


def renewal_integrand(params, J: int = DEFAULT_J, step: float = 2.5e-3, mix_tol: float = 1e-12) -> RenewalIntegrand:
    """Tabulate h(t) until it is within ``mix_tol`` of its stationary value."""
    spec = BDChainSpec.from_params(params, J=J)
    q0, spec = stationary_distribution(spec)
    h_inf = growth_functional(q0, 1.0)
    T = 10.0 / min(params.migration_rate + params.d, params.selection_rate + params.d)
    while True:
        n = int(math.ceil(T / step))
        n += n % 2  # even interval count for Simpson
        t = np.linspace(0.0, n * step, n + 1)
        h = bd_transient_mean(spec, t)
        if abs(h[-1] - h_inf) < mix_tol * max(1.0, h_inf):
            return RenewalIntegrand(t, h, h_inf, params.migration_rate)
        T *= 2.0
        if T > 1e4:
            raise RuntimeError("chain did not mix within the integration horizon")


def malthusian_renewal(params, J: int = DEFAULT_J, tol: float = 1e-6) -> MalthusResult:
    """alpha solving c * int_0^inf exp(-alpha t) E[zeta(t) 1{zeta >= 2}] dt = 1.

    Bisection runs on (1e-9, s); the stable size distribution reported with it
    is q*(alpha).
    """
    _require_positive(params)
    integrand = renewal_integrand(params, J)
    alpha = _bisect(lambda a: integrand.laplace(a) - 1.0, 1e-9, params.selection_rate, ALPHA_XTOL)
    residual = integrand.laplace(alpha) - 1.0
    if abs(residual) > tol:
        raise RuntimeError(f"renewal residual {residual:.3g} exceeds {tol}")
    q = equilibrium_qstar(alpha, params, J)
    const = stable_constants(q, params, alpha)
    return MalthusResult(alpha, const.gamma, const.B, const.b, q, "renewal", residual, q.J)


def excursion_renewal_alpha(params, J: int = DEFAULT_J, step: float = 1e-2) -> float:
    """alpha solving c * int exp(-alpha t) f(t) dt = 1 with f the excursion-dual mean.

    f decays to 0 (state 0 absorbs), so the horizon is extended until the
    discarded tail is below 1e-12.
    """
    _require_positive(params)
    c = params.migration_rate
    T = 20.0 / c
    while True:
        n = int(math.ceil(T / step))
        n += n % 2
        t = np.linspace(0.0, n * step, n + 1)
        f = dual_mean_f(params, t, J)
        if f[-1] < 1e-12:
            break
        T *= 2.0
    return _bisect(lambda a: c * simpson(np.exp(-a * t) * f, x=t) - 1.0, 1e-9, params.selection_rate,
                   ALPHA_XTOL)


_CACHE: dict[tuple, MalthusResult] = {}


def malthus(params, J: int = DEFAULT_J) -> MalthusResult:
    """Memoised fixed-point result for the rates of ``params``."""
    key = (params.migration_rate, params.selection_rate, params.d, J)
    if key not in _CACHE:
        _CACHE[key] = malthusian_fixed_point(params, J)
    return _CACHE[key]

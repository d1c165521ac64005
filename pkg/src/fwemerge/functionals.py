"""Functionals of configurations and the atomic-measure metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .params import AtomicMeasure, Configuration

Kernel = Callable[[np.ndarray], np.ndarray]

#: Dyadic scales in (0, 1] at which the correlation-kernel discrepancy is evaluated.
EK_SCALES = 2.0 ** -np.arange(0, 21)
#: Up to this many atoms in total the linear-kernel supremum is evaluated exactly.
EXACT_SUP_ATOMS = 200


def empirical_mean(config: Configuration) -> float:
    """Average type-2 fraction over the sites."""
    if config.n_sites == 0:
        raise ValueError("empirical mean of an empty configuration")
    return float(np.mean(config.x2))


def droplet_measure(config: Configuration, labels: Sequence[float]) -> AtomicMeasure:
    """Atomic measure with mass ``x2[j]`` at ``labels[j]`` for every occupied site."""
    lab = np.asarray(labels, dtype=np.float64)
    if lab.shape != config.x2.shape:
        raise ValueError(f"need {config.n_sites} labels, got {lab.shape[0]}")
    keep = config.x2 > 0
    return AtomicMeasure(lab[keep], config.x2[keep])


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability weights on a finite set of distinct values (sorted)."""

    values: np.ndarray
    weights: np.ndarray

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values.tolist(), self.weights.tolist()))


def palm_estimate(samples: Sequence[float]) -> DiscreteDistribution:
    """Size-biased empirical law: weight of ``v`` proportional to ``v`` times its frequency."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size == 0 or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("samples must be a nonempty sequence in [0, 1]")
    values, counts = np.unique(arr, return_counts=True)
    w = values * counts
    total = w.sum()
    if total <= 0:
        raise ValueError("size-biasing needs at least one positive sample")
    keep = w > 0
    return DiscreteDistribution(values[keep], w[keep] / total)


def linear_kernel(r: np.ndarray) -> np.ndarray:
    """Default correlation kernel ``max(0, 1 - r)``."""
    return np.maximum(0.0, 1.0 - r)


def _check_kernel(psi: Kernel) -> Kernel:
    grid = np.linspace(0.0, 1.0, 257)
    try:
        vals = np.asarray(psi(grid), dtype=np.float64)
        vectorised = vals.shape == grid.shape
    except (TypeError, ValueError):
        vectorised = False
    if not vectorised:
        scalar = psi
        psi = np.vectorize(lambda r: float(scalar(float(r))), otypes=[np.float64])
        vals = psi(grid)
    if abs(vals[0] - 1.0) > 1e-12 or abs(vals[-1]) > 1e-12:
        raise ValueError("kernel must satisfy psi(0) = 1 and psi(1) = 0")
    if np.any(np.diff(vals) > 1e-12) or not np.all(np.isfinite(vals)):
        raise ValueError("kernel must be finite and nonincreasing on [0, 1]")
    return psi


def _mass_below(sorted_loc: np.ndarray, cum: np.ndarray, x: np.ndarray, inclusive: bool) -> np.ndarray:
    # cum[k] = total mass of the first k atoms
    idx = np.searchsorted(sorted_loc, x, side="right" if inclusive else "left")
    return cum[idx]


def _excess(mu: AtomicMeasure, nu: AtomicMeasure, eps: float) -> float:
    """sup over closed F of mu(F) - nu(F^eps), with F^eps the open eps-neighbourhood.

    It suffices to take F among subsets of the atoms of ``mu``. Processing the
    chosen atoms left to right, the union of earlier balls lies below the last
    chosen atom plus eps, so a dynamic programme over the last chosen atom is
    exact. Cost is quadratic in the number of atoms of ``mu``.
    """
    a, p = mu.locations, mu.masses
    n = a.shape[0]
    if n == 0:
        return 0.0
    b = nu.locations
    cum = np.concatenate(([0.0], np.cumsum(nu.masses)))
    # mass of nu in the open ball around each atom
    ball = _mass_below(b, cum, a + eps, False) - _mass_below(b, cum, a - eps, True)
    best = np.empty(n)
    for j in range(n):
        cand = p[j] - ball[j]
        if j:
            prev = a[:j] + eps
            overlap = prev > a[j] - eps
            # the uncovered piece is [prev, a_j + eps) when the balls overlap
            part = np.where(
                overlap,
                _mass_below(b, cum, np.full(j, a[j] + eps), False) - _mass_below(b, cum, prev, False),
                ball[j],
            )
            cand = max(cand, float(np.max(best[:j] + p[j] - part)))
        best[j] = cand
    return max(0.0, float(best.max()))


def prohorov_distance(mu: AtomicMeasure, nu: AtomicMeasure, tol: float = 1e-12) -> float:
    """Prohorov distance between two finite atomic measures on [0, 1]."""
    mu = mu.canonical()
    nu = nu.canonical()
    if len(mu) == len(nu) and np.array_equal(mu.locations, nu.locations) and np.array_equal(mu.masses, nu.masses):
        return 0.0

    def ok(eps: float) -> bool:
        return _excess(mu, nu, eps) <= eps and _excess(nu, mu, eps) <= eps

    lo, hi = 0.0, max(1.0, abs(mu.total_mass - nu.total_mass)) + 1e-9
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _pair_energy(m: AtomicMeasure, scales: np.ndarray, psi: Kernel, chunk: int = 512) -> np.ndarray:
    loc, mass = m.locations, m.masses
    out = np.zeros(scales.shape[0])
    for start in range(0, loc.shape[0], chunk):
        diff = np.abs(loc[start:start + chunk, None] - loc[None, :])
        w = mass[start:start + chunk, None] * mass[None, :]
        for k, eps in enumerate(scales):
            # kink scales can be subnormal; the overflowed ratio is capped at 1 anyway
            with np.errstate(over="ignore"):
                ratio = np.minimum(diff / eps, 1.0)
            out[k] += float(np.sum(w * psi(ratio)))
    return out


def _pair_limit(m: AtomicMeasure) -> float:
    # as eps -> 0 only coincident atoms interact; canonical atoms are distinct
    return float(np.sum(m.masses ** 2))


def _kink_scales(mu: AtomicMeasure, nu: AtomicMeasure) -> np.ndarray:
    loc = np.concatenate([mu.locations, nu.locations])
    d = np.abs(loc[:, None] - loc[None, :])
    return np.unique(d[(d > 0) & (d <= 1.0)])


def correlation_discrepancy(mu: AtomicMeasure, nu: AtomicMeasure, psi: Kernel = linear_kernel,
                            scales: np.ndarray | None = None) -> float:
    """Supremum over eps in (0, 1] of the gap between the kernel pair energies.

    The candidates are ``scales`` (default :data:`EK_SCALES`) and the
    eps -> 0 limit. For the linear kernel each energy is piecewise linear in
    1/eps with kinks at pairwise distances, so adding those distances makes
    the supremum exact; this is done when the measures hold at most
    :data:`EXACT_SUP_ATOMS` atoms together.
    """
    exact = psi is linear_kernel and scales is None
    psi = _check_kernel(psi)
    mu, nu = mu.canonical(), nu.canonical()
    grid = EK_SCALES if scales is None else np.asarray(scales, dtype=np.float64)
    if exact and len(mu) + len(nu) <= EXACT_SUP_ATOMS:
        grid = np.union1d(grid, _kink_scales(mu, nu))
    gap = np.abs(_pair_energy(mu, grid, psi) - _pair_energy(nu, grid, psi))
    return float(max(np.max(gap), abs(_pair_limit(mu) - _pair_limit(nu))))


def ek_distance(mu: AtomicMeasure, nu: AtomicMeasure, psi: Kernel = linear_kernel) -> float:
    """Prohorov distance plus the correlation-kernel discrepancy.

    See :func:`correlation_discrepancy` for how the supremum over scales is taken.
    """
    return prohorov_distance(mu, nu) + correlation_discrepancy(mu, nu, psi)

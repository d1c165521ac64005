"""Exact event-driven simulation of the dual particle system.

Particles give birth at rate s, coalesce at rate d per unordered pair on the
same site and emigrate. In the N-site system an emigrant moves to a uniform
other site; the total emigration rate per particle is ``c (N - 1) / N`` so
that the dual matches the forward mean-field drift ``c (xbar - x)``. In the
collision-free system every emigration founds a fresh site and particles on
singly occupied sites do not emigrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .params import ModelParams, SeedSpec, derive_stream

_INITIAL_CAPACITY = 256


@dataclass(frozen=True)
class DualState:
    """Occupied sites of the dual with their sizes and first-occupation times."""

    site_counts: dict[int, int]
    birth_times: dict[int, float]

    def __post_init__(self) -> None:
        if set(self.site_counts) != set(self.birth_times):
            raise ValueError("site_counts and birth_times need the same keys")
        if any(v < 1 for v in self.site_counts.values()):
            raise ValueError("occupied sites hold at least one particle")

    @property
    def total(self) -> int:
        return int(sum(self.site_counts.values()))

    @property
    def occupied(self) -> int:
        return len(self.site_counts)


@dataclass(frozen=True)
class AgeSizeRecord:
    """Ages and sizes of the occupied sites plus the normalised size histogram."""

    time: float
    entries: np.ndarray
    sizes: np.ndarray
    frequencies: np.ndarray

    def distribution(self, J: int) -> np.ndarray:
        """Size frequencies as a dense vector over sizes 1..J (tail folded into J)."""
        out = np.zeros(J)
        idx = np.minimum(self.sizes, J) - 1
        np.add.at(out, idx, self.frequencies)
        return out


def age_size_distribution(state: DualState, now: float) -> AgeSizeRecord:
    """Age ``now - birth`` and size of every occupied site, with size frequencies over K."""
    if state.occupied == 0:
        raise ValueError("age/size distribution of an empty dual state")
    keys = sorted(state.site_counts)
    sizes = np.array([state.site_counts[k] for k in keys], dtype=np.int64)
    ages = now - np.array([state.birth_times[k] for k in keys])
    uniq, counts = np.unique(sizes, return_counts=True)
    return AgeSizeRecord(float(now), np.column_stack([ages, sizes]), uniq, counts / counts.sum())


@dataclass
class DualTrajectory:
    """Records of the dual on a time grid.

    ``occupation_integral`` is the exact integral of Pi from 0 to each record
    time; ``final_occupation`` is the integral up to ``final_time``.
    """

    times: np.ndarray
    pi: np.ndarray
    k: np.ndarray
    occupation_integral: np.ndarray
    final_time: float
    final_occupation: float
    final_state: DualState
    age_size: list[AgeSizeRecord] = field(default_factory=list)
    stopped_early: bool = False


class _DualRunner:
    """Owns the kernel arrays and grows them when the kernel reports they are full."""

    def __init__(self, k: int, ell: int, n_sites: int, rng: np.random.Generator,
                 s: float, c: float, d: float, check: bool) -> None:
        if k < 1 or ell < 1:
            raise ValueError("need k >= 1 particles on ell >= 1 sites")
        if n_sites and ell > n_sites:
            raise ValueError(f"cannot place {ell} occupied sites on {n_sites} sites")
        self.n_sites = n_sites
        self.rng = rng
        self.s, self.c, self.d = s, c, d
        self.check = check
        n_part = k * ell
        cap_p = max(_INITIAL_CAPACITY, 4 * n_part)
        cap_s = n_sites if n_sites else max(_INITIAL_CAPACITY, 4 * ell)
        self.counts = np.zeros(cap_s, dtype=np.int64)
        self.birth = np.zeros(cap_s)
        self.part_site = np.zeros(cap_p, dtype=np.int64)
        self.counts[:ell] = k
        self.part_site[:n_part] = np.repeat(np.arange(ell), k)
        self.n_part = n_part
        self.n_slots = n_sites if n_sites else ell
        self.t = 0.0
        self.integral = 0.0

    def advance(self, t_end: float, rec_t: np.ndarray, rec_pi: np.ndarray, rec_k: np.ndarray,
                rec_int: np.ndarray, rec_i: int, stop_k: int = 0) -> tuple[int, bool]:
        while True:
            (self.t, self.n_part, self.n_slots, rec_i, self.integral, status) = kernels.dual_advance(
                self.counts, self.birth, self.part_site, self.n_part, self.n_slots, self.t, t_end,
                rec_t, rec_i, rec_pi, rec_k, rec_int, self.integral, self.s, self.c, self.d,
                self.n_sites, stop_k, self.check, self.rng)
            if status == 2:
                self._grow()
                continue
            return rec_i, status == 1

    def _grow(self) -> None:
        if self.n_part >= self.part_site.shape[0] - 1:
            self.part_site = np.concatenate([self.part_site, np.zeros_like(self.part_site)])
        if not self.n_sites and self.n_slots >= self.counts.shape[0] - 1:
            self.counts = np.concatenate([self.counts, np.zeros_like(self.counts)])
            self.birth = np.concatenate([self.birth, np.zeros_like(self.birth)])

    def state(self) -> DualState:
        occ = np.flatnonzero(self.counts[:self.n_slots])
        return DualState({int(i): int(self.counts[i]) for i in occ},
                         {int(i): float(self.birth[i]) for i in occ})

    def size_histogram(self) -> np.ndarray:
        live = self.counts[:self.n_slots]
        return np.bincount(live[live > 0])


def _run(runner: _DualRunner, T: float, record_times, age_size_times, stop_k: int = 0) -> DualTrajectory:
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T!r}")
    rec_t = np.ascontiguousarray(np.linspace(0.0, T, 101) if record_times is None
                                 else np.asarray(record_times, dtype=np.float64))
    if rec_t.size and (np.any(np.diff(rec_t) < 0) or rec_t[0] < 0):
        raise ValueError("record_times must be nondecreasing and >= 0")
    n = rec_t.shape[0]
    rec_pi, rec_k, rec_int = np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n)
    rec_i = 0
    snaps: list[AgeSizeRecord] = []
    stopped = False
    for t_snap in sorted(a for a in age_size_times if a <= T) + [T]:
        rec_i, stopped = runner.advance(t_snap, rec_t, rec_pi, rec_k, rec_int, rec_i, stop_k)
        if stopped:
            break
        if t_snap < T or t_snap in age_size_times:
            snaps.append(age_size_distribution(runner.state(), runner.t))
    if stopped:
        snaps.append(age_size_distribution(runner.state(), runner.t))
    keep = slice(0, rec_i)
    return DualTrajectory(rec_t[keep], rec_pi[keep], rec_k[keep], rec_int[keep], runner.t,
                          runner.integral, runner.state(), snaps, stopped)


def dual_migration_rate(params: ModelParams, n_sites: int) -> float:
    """Per-particle emigration rate to the other sites: c (N - 1) / N."""
    return params.migration_rate * (n_sites - 1) / n_sites


def simulate_dual(init: tuple[int, int], params: ModelParams, T: float, seed: SeedSpec,
                  n_sites: int | None = None, record_times=None, age_size_times: tuple[float, ...] = (),
                  check_rates: bool = False) -> DualTrajectory:
    """Simulate the N-site dual from ``init = (k, ell)``: k particles on each of ell sites.

    ``record_times`` defaults to 101 equispaced points on [0, T].
    ``check_rates`` recounts all rate sums after every event.
    """
    N = params.n_sites if n_sites is None else n_sites
    runner = _DualRunner(init[0], init[1], N, derive_stream(seed), params.selection_rate,
                         dual_migration_rate(params, N), params.d, check_rates)
    return _run(runner, T, record_times, age_size_times)


def simulate_collision_free_dual(init: tuple[int, int], params: ModelParams, T: float, seed: SeedSpec,
                                 record_times=None, age_size_times: tuple[float, ...] = (),
                                 stop_k: int = 0, check_rates: bool = False) -> DualTrajectory:
    """Simulate the collision-free dual; stops at T or once ``stop_k`` sites are occupied."""
    runner = _DualRunner(init[0], init[1], 0, derive_stream(seed), params.selection_rate,
                         params.migration_rate, params.d, check_rates)
    return _run(runner, T, record_times, age_size_times, stop_k)


def occupation_integrals(init: tuple[int, int], params: ModelParams, times, reps: int, seed: SeedSpec,
                         n_sites: int | None = None, collision_free: bool = False) -> np.ndarray:
    """Occupation integrals at ``times`` for ``reps`` independent duals, shape (reps, len(times)).

    All replicas share one stream, consumed in replica order.
    """
    times = np.ascontiguousarray(np.asarray(times, dtype=np.float64))
    T = float(times.max())
    rng = derive_stream(seed)
    N = 0 if collision_free else (params.n_sites if n_sites is None else n_sites)
    c = params.migration_rate if collision_free else dual_migration_rate(params, N)
    out = np.empty((reps, times.shape[0]))
    n = times.shape[0]
    for r in range(reps):
        runner = _DualRunner(init[0], init[1], N, rng, params.selection_rate, c, params.d, False)
        rec_pi, rec_k, rec_int = np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n)
        runner.advance(T, times, rec_pi, rec_k, rec_int, 0)
        out[r] = rec_int
    return out


def particle_counts(init: tuple[int, int], params: ModelParams, t: float, reps: int, seed: SeedSpec,
                    collision_free: bool = True, n_sites: int | None = None) -> np.ndarray:
    """Total particle count at time ``t`` for ``reps`` independent duals."""
    rng = derive_stream(seed)
    N = 0 if collision_free else (params.n_sites if n_sites is None else n_sites)
    c = params.migration_rate if collision_free else dual_migration_rate(params, N)
    out = np.empty(reps, dtype=np.int64)
    rec = np.zeros(0)
    for r in range(reps):
        runner = _DualRunner(init[0], init[1], N, rng, params.selection_rate, c, params.d, False)
        if t > 0:
            runner.advance(t, rec, rec, np.zeros(0, dtype=np.int64), rec, 0)
        out[r] = runner.n_part
    return out


@dataclass(frozen=True)
class DualityCheck:
    """Forward and dual estimates of the same moment with standard errors."""

    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z_score(self) -> float:
        return 0.0 if self.combined_se == 0 else abs(self.lhs - self.rhs) / self.combined_se


def duality_check(params: ModelParams, init: tuple[int, int], t: float, reps: int, seed: SeedSpec,
                  dt: float = 1e-3, scheme: str = "boundary") -> DualityCheck:
    """Compare E[prod x1(i, t)^k] over ell sites with E[exp(-mu * int Pi)].

    The forward system starts from all type 1 and ``mu`` is the per-site
    mutation rate.
    """
    from .forward import simulate_forward_ensemble

    if reps < 2:
        raise ValueError("duality check needs at least two replicas")
    k, ell = init
    if ell > params.n_sites:
        raise ValueError("more tagged sites than sites")
    mu = params.site_mutation_rate
    if t == 0:
        return DualityCheck(1.0, 0.0, 1.0, 0.0)
    ens = simulate_forward_ensemble(params, reps, t, dt, seed.labelled(seed.stream_label + "/forward"),
                                    record_every=max(1, int(round(t / dt))), scheme=scheme)
    prod = np.prod((1.0 - ens.final[:, :ell]) ** k, axis=1)
    occ = occupation_integrals(init, params, [t], reps, seed.labelled(seed.stream_label + "/dual"))[:, 0]
    val = np.exp(-mu * occ)
    return DualityCheck(float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(reps)),
                        float(val.mean()), float(val.std(ddof=1) / math.sqrt(reps)))


@dataclass(frozen=True)
class GrowthEstimate:
    """Mean and spread of exp(-alpha t) K_t over a time window."""

    mean: float
    std: float
    n_samples: int

    @property
    def dispersion(self) -> float:
        return self.std / self.mean if self.mean > 0 else math.inf


def estimate_growth_constant(traj: DualTrajectory, alpha: float, window: tuple[float, float]) -> GrowthEstimate:
    """Scaled occupied-site count ``exp(-alpha t) K_t`` summarised over ``window``."""
    t1, t2 = window
    if not t2 > t1 > 0:
        raise ValueError("window must satisfy t2 > t1 > 0")
    sel = (traj.times >= t1) & (traj.times <= t2)
    if not sel.any():
        raise ValueError(f"no records inside window {window}")
    vals = np.exp(-alpha * traj.times[sel]) * traj.k[sel]
    return GrowthEstimate(float(vals.mean()), float(vals.std()), int(sel.sum()))


def yule_mean(s: float, t: float) -> float:
    """Mean of a rate-s Yule process started from one particle."""
    return math.exp(s * t)


def dual_mean_bound(n: int, s: float, d: float, t: float) -> float:
    """Upper bound on the mean particle count of a single-site dual started with n particles.

    The logistic-type comparison ODE with effective rate ``s + d/2`` and
    quadratic loss ``d/2`` gives
    ``2 sh n e^{sh t} / (n d (e^{sh t} - 1) + 2 sh)`` with ``sh = s + d/2``.
    """
    sh = s + 0.5 * d
    # divided through by e^{sh t} so large t cannot overflow
    decay = math.exp(-sh * t)
    return 2.0 * sh * n / (n * d * (1.0 - decay) + 2.0 * sh * decay)


def single_site_survival(s: float, mu: float, t: float) -> float:
    """E[exp(-mu int Pi)] for a Yule(s) dual from one particle: (s+mu)/(s+mu e^{(s+mu)t})."""
    return (s + mu) / (s + mu * math.exp((s + mu) * t))

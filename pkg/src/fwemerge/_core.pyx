# cython: language_level=3
"""Compiled hot loops.

Every routine here has a line-for-line twin in ``_pycore`` that consumes the
same random draws in the same order, so the two backends agree bit for bit on
the jump kernels and up to libm rounding on the diffusion kernel.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, expm1, fabs, log1p, sqrt, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport calloc, free
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_poisson,
    random_standard_gamma,
    random_standard_normal,
)

cnp.import_array()

BACKEND = "compiled"


cdef bitgen_t* _bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _u01(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline int64_t _pick(bitgen_t* bg, int64_t n) noexcept nogil:
    cdef int64_t idx = <int64_t>(bg.next_double(bg.state) * n)
    if idx >= n:
        idx = n - 1
    return idx


# ---------------------------------------------------------------------------
# Fisher-Wright diffusion step
# ---------------------------------------------------------------------------

def diffusion_step(double[::1] x, double[::1] imm, Py_ssize_t group,
                   double k, double s, double d, double dt,
                   double zlayer, int scheme, object rng):
    """Advance ``x`` in place by one step of length ``dt``.

    Drift is ``imm[i // group] - k*x + s*x*(1-x)``, noise variance ``d*x*(1-x)``.
    ``scheme`` 0 is clamped Euler-Maruyama everywhere; scheme 1 replaces the
    Euler step by an exact squared-Bessel step of the frozen-coefficient
    linearisation whenever ``min(x, 1-x) < zlayer``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j, n_layer = 0
    cdef double xi, a, drift, z, b, sig2, ratio, ch, zn
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t* layer = NULL
    cdef double* half_nonc = NULL
    cdef double* half_df = NULL
    cdef double* scale = NULL
    cdef int64_t* pois = NULL

    if n == 0:
        return 0
    if d <= 0.0:
        for i in range(n):
            xi = x[i]
            a = imm[i // group]
            xi = xi + (a - k * xi + s * xi * (1.0 - xi)) * dt
            x[i] = 0.0 if xi < 0.0 else (1.0 if xi > 1.0 else xi)
        return 0

    layer = <Py_ssize_t*> calloc(n, sizeof(Py_ssize_t))
    half_nonc = <double*> calloc(n, sizeof(double))
    half_df = <double*> calloc(n, sizeof(double))
    scale = <double*> calloc(n, sizeof(double))
    pois = <int64_t*> calloc(n, sizeof(int64_t))
    if layer == NULL or half_nonc == NULL or half_df == NULL or scale == NULL or pois == NULL:
        free(layer); free(half_nonc); free(half_df); free(scale); free(pois)
        raise MemoryError()
    try:
        with rng.bit_generator.lock, nogil:
            for i in range(n):
                xi = x[i]
                z = xi if xi < 1.0 - xi else 1.0 - xi
                if scheme == 1 and z < zlayer:
                    layer[n_layer] = i
                    n_layer += 1
                    continue
                a = imm[i // group]
                drift = a - k * xi + s * xi * (1.0 - xi)
                xi = xi + drift * dt + sqrt(d * xi * (1.0 - xi) * dt) * random_standard_normal(bg)
                x[i] = 0.0 if xi < 0.0 else (1.0 if xi > 1.0 else xi)
            for j in range(n_layer):
                i = layer[j]
                xi = x[i]
                a = imm[i // group]
                if xi <= 0.5:
                    z = xi
                    b = s * (1.0 - xi) - k
                    sig2 = d * (1.0 - xi)
                else:
                    z = 1.0 - xi
                    a = k - a
                    if a < 0.0:
                        a = 0.0
                    b = -(k + s * xi)
                    sig2 = d * xi
                if fabs(b * dt) < 1e-12:
                    ratio = dt
                else:
                    ratio = expm1(b * dt) / b
                ch = 0.25 * sig2 * ratio
                scale[j] = 2.0 * ch
                half_nonc[j] = z * exp(b * dt) / (2.0 * ch)
                half_df[j] = 2.0 * a / sig2
                pois[j] = random_poisson(bg, half_nonc[j])
            for j in range(n_layer):
                i = layer[j]
                zn = scale[j] * random_standard_gamma(bg, half_df[j] + <double>pois[j])
                if x[i] > 0.5:
                    zn = 1.0 - zn
                x[i] = 0.0 if zn < 0.0 else (1.0 if zn > 1.0 else zn)
    finally:
        free(layer); free(half_nonc); free(half_df); free(scale); free(pois)
    return n_layer


# ---------------------------------------------------------------------------
# Dual particle system
# ---------------------------------------------------------------------------

cdef struct DualBook:
    int64_t* counts
    double* birth
    int64_t* hist
    int64_t occupied
    int64_t pairs
    int64_t singles
    int64_t zmax
    double now


cdef inline void _site_inc(DualBook* bk, int64_t i) noexcept nogil:
    cdef int64_t z = bk.counts[i]
    if z > 0:
        bk.hist[z] -= 1
    bk.hist[z + 1] += 1
    bk.pairs += z
    if z == 0:
        bk.occupied += 1
        bk.singles += 1
        bk.birth[i] = bk.now
    elif z == 1:
        bk.singles -= 1
    bk.counts[i] = z + 1
    if z + 1 > bk.zmax:
        bk.zmax = z + 1


cdef inline void _site_dec(DualBook* bk, int64_t i) noexcept nogil:
    cdef int64_t z = bk.counts[i]
    bk.hist[z] -= 1
    if z > 1:
        bk.hist[z - 1] += 1
    bk.pairs -= z - 1
    if z == 1:
        bk.singles -= 1
        bk.occupied -= 1
    elif z == 2:
        bk.singles += 1
    bk.counts[i] = z - 1
    while bk.zmax > 0 and bk.hist[bk.zmax] == 0:
        bk.zmax -= 1


def dual_advance(int64_t[::1] counts, double[::1] birth, int64_t[::1] part_site,
                 int64_t n_part, int64_t n_slots, double t, double t_end,
                 double[::1] rec_t, int64_t rec_i, double[::1] rec_pi,
                 int64_t[::1] rec_k, double[::1] rec_int, double integral,
                 double s, double c, double d, int64_t n_sites, int64_t stop_k,
                 bint check, object rng):
    """Run the dual jump process from ``t`` until ``t_end``.

    ``n_sites > 0`` selects the N-site system, where ``c`` is the total
    per-particle emigration rate and the target is uniform over the other
    sites. ``n_sites == 0`` selects the collision-free system: emigration at
    rate ``c`` per particle on sites holding at least two particles, each
    founding a fresh site.

    Returns ``(t, n_part, n_slots, rec_i, integral, status)`` with status 0 at
    ``t_end``, 1 when the occupied count reached ``stop_k`` and 2 when the
    particle or site arrays are full (the caller grows them and resumes).
    """
    cdef int64_t cap_part = part_site.shape[0]
    cdef int64_t cap_sites = counts.shape[0]
    cdef int64_t n_rec = rec_t.shape[0]
    cdef bint free_sites = n_sites == 0
    cdef bitgen_t* bg = _bitgen(rng)
    cdef DualBook bk
    cdef int64_t i, j, idx, z, status = 0, tot_chk, pairs_chk, single_chk, occ_chk, zmax_chk
    cdef int64_t mig_elig
    cdef double rb, rm, rc, total, tnext, tlim, u
    cdef bint bad = False

    if n_part < 1:
        raise ValueError("dual state has no particles")
    bk.counts = &counts[0]
    bk.birth = &birth[0]
    bk.hist = <int64_t*> calloc(cap_part + 2, sizeof(int64_t))
    if bk.hist == NULL:
        raise MemoryError()
    bk.occupied = 0
    bk.pairs = 0
    bk.singles = 0
    bk.zmax = 0
    bk.now = t
    for i in range(n_slots):
        z = counts[i]
        if z > 0:
            bk.hist[z] += 1
            bk.occupied += 1
            bk.pairs += z * (z - 1) // 2
            if z == 1:
                bk.singles += 1
            if z > bk.zmax:
                bk.zmax = z
    try:
        with rng.bit_generator.lock, nogil:
            while True:
                if n_part >= cap_part - 1 or (free_sites and n_slots >= cap_sites - 1):
                    status = 2
                    break
                mig_elig = n_part - bk.singles if free_sites else n_part
                rb = s * n_part
                rm = c * mig_elig
                rc = d * bk.pairs
                total = rb + rm + rc
                if total > 0.0:
                    tnext = t - log1p(-_u01(bg)) / total
                else:
                    tnext = INFINITY
                tlim = tnext if tnext < t_end else t_end
                while rec_i < n_rec and rec_t[rec_i] <= tlim:
                    rec_pi[rec_i] = <double> n_part
                    rec_k[rec_i] = bk.occupied
                    rec_int[rec_i] = integral + n_part * (rec_t[rec_i] - t)
                    rec_i += 1
                if tnext > t_end:
                    integral += n_part * (t_end - t)
                    t = t_end
                    status = 0
                    break
                integral += n_part * (tnext - t)
                t = tnext
                bk.now = t
                u = _u01(bg) * total
                if u < rb:
                    idx = _pick(bg, n_part)
                    i = part_site[idx]
                    part_site[n_part] = i
                    n_part += 1
                    _site_inc(&bk, i)
                elif u < rb + rm:
                    if free_sites:
                        while True:
                            idx = _pick(bg, n_part)
                            i = part_site[idx]
                            if counts[i] >= 2:
                                break
                        j = n_slots
                        n_slots += 1
                        counts[j] = 0
                    else:
                        idx = _pick(bg, n_part)
                        i = part_site[idx]
                        j = _pick(bg, n_sites - 1)
                        if j >= i:
                            j += 1
                    part_site[idx] = j
                    _site_dec(&bk, i)
                    _site_inc(&bk, j)
                else:
                    while True:
                        idx = _pick(bg, n_part)
                        i = part_site[idx]
                        z = counts[i]
                        if z >= 2 and _u01(bg) * (bk.zmax - 1) < z - 1:
                            break
                    part_site[idx] = part_site[n_part - 1]
                    n_part -= 1
                    _site_dec(&bk, i)
                if check:
                    tot_chk = 0
                    pairs_chk = 0
                    single_chk = 0
                    occ_chk = 0
                    zmax_chk = 0
                    for i in range(n_slots):
                        z = counts[i]
                        tot_chk += z
                        pairs_chk += z * (z - 1) // 2
                        if z == 1:
                            single_chk += 1
                        if z > 0:
                            occ_chk += 1
                        if z > zmax_chk:
                            zmax_chk = z
                    if (tot_chk != n_part or pairs_chk != bk.pairs or single_chk != bk.singles
                            or occ_chk != bk.occupied or zmax_chk != bk.zmax):
                        bad = True
                        break
                if stop_k > 0 and bk.occupied >= stop_k:
                    status = 1
                    break
    finally:
        free(bk.hist)
    if bad:
        raise RuntimeError("dual rate bookkeeping diverged from a full recount")
    return t, n_part, n_slots, rec_i, integral, status


def frozen_star_dual_sizes(int64_t n0, double t, double s, double c, double d,
                           int64_t reps, object rng):
    """Total particle count at time ``t`` of the two-site dual with a frozen sink.

    Site 0 carries births at rate ``s`` per particle, coalescence at rate ``d``
    per pair and emigration at rate ``c`` per particle into the sink, where
    particles stop moving but keep counting.
    """
    cdef int64_t r, n, frozen
    cdef double now, rb, rm, rc, total, u
    cdef bitgen_t* bg = _bitgen(rng)
    out = np.empty(reps, dtype=np.int64)
    cdef int64_t[::1] res = out
    with rng.bit_generator.lock, nogil:
        for r in range(reps):
            n = n0
            frozen = 0
            now = 0.0
            while n > 0:
                rb = s * n
                rm = c * n
                rc = 0.5 * d * n * (n - 1)
                total = rb + rm + rc
                if total <= 0.0:
                    break
                now = now - log1p(-_u01(bg)) / total
                if now > t:
                    break
                u = _u01(bg) * total
                if u < rb:
                    n += 1
                elif u < rb + rm:
                    n -= 1
                    frozen += 1
                else:
                    n -= 1
            res[r] = n + frozen
    return out


def bd_chain_sample(int64_t k0, double s, double c, double d, bint singleton_emigrates,
                    double[::1] times, int64_t reps, object rng):
    """Sample the single-site birth-death chain on a time grid.

    Birth ``s*k``; death ``c*k`` (only for ``k >= 2`` unless
    ``singleton_emigrates``) plus ``d/2*k*(k-1)``. State 0 is absorbing.
    """
    cdef Py_ssize_t n_t = times.shape[0]
    cdef int64_t r, k
    cdef Py_ssize_t ti
    cdef double now, rb, rd, total, tnext
    cdef bitgen_t* bg = _bitgen(rng)
    out = np.zeros((reps, n_t), dtype=np.int64)
    cdef int64_t[:, ::1] res = out
    with rng.bit_generator.lock, nogil:
        for r in range(reps):
            k = k0
            now = 0.0
            ti = 0
            while ti < n_t:
                rb = s * k
                rd = 0.5 * d * k * (k - 1)
                if k >= 2 or singleton_emigrates:
                    rd = rd + c * k
                total = rb + rd
                if total > 0.0:
                    tnext = now - log1p(-_u01(bg)) / total
                else:
                    tnext = INFINITY
                while ti < n_t and times[ti] < tnext:
                    res[r, ti] = k
                    ti += 1
                if ti >= n_t:
                    break
                now = tnext
                if _u01(bg) * total < rb:
                    k += 1
                else:
                    k -= 1
    return out

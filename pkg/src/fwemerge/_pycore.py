"""Pure-Python twin of the compiled kernels.

Draw order and arithmetic follow ``_core.pyx`` statement by statement, so a
given generator state yields the same trajectory from either backend.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _pick(rng: np.random.Generator, n: int) -> int:
    idx = int(rng.random() * n)
    return n - 1 if idx >= n else idx


def diffusion_step(x, imm, group, k, s, d, dt, zlayer, scheme, rng):
    """See ``_core.diffusion_step``."""
    n = x.shape[0]
    if n == 0:
        return 0
    a = np.repeat(imm, group)[:n] if group > 1 else imm[:n]
    if d <= 0.0:
        y = x + (a - k * x + s * x * (1.0 - x)) * dt
        np.clip(y, 0.0, 1.0, out=x)
        return 0
    z = np.minimum(x, 1.0 - x)
    if scheme == 1:
        in_layer = z < zlayer
    else:
        in_layer = np.zeros(n, dtype=bool)
    interior = ~in_layer
    xi = x[interior]
    ai = a[interior]
    drift = ai - k * xi + s * xi * (1.0 - xi)
    noise = rng.standard_normal(xi.shape[0])
    y = xi + drift * dt + np.sqrt(d * xi * (1.0 - xi) * dt) * noise
    x[interior] = np.clip(y, 0.0, 1.0)

    layer = np.flatnonzero(in_layer)
    n_layer = layer.shape[0]
    if n_layer == 0:
        return 0
    scale = np.empty(n_layer)
    half_nonc = np.empty(n_layer)
    half_df = np.empty(n_layer)
    upper = np.empty(n_layer, dtype=bool)
    for j, i in enumerate(layer):
        xv = float(x[i])
        av = float(a[i])
        if xv <= 0.5:
            zv = xv
            b = s * (1.0 - xv) - k
            sig2 = d * (1.0 - xv)
            upper[j] = False
        else:
            zv = 1.0 - xv
            av = k - av
            if av < 0.0:
                av = 0.0
            b = -(k + s * xv)
            sig2 = d * xv
            upper[j] = True
        ratio = dt if abs(b * dt) < 1e-12 else math.expm1(b * dt) / b
        ch = 0.25 * sig2 * ratio
        scale[j] = 2.0 * ch
        half_nonc[j] = zv * math.exp(b * dt) / (2.0 * ch)
        half_df[j] = 2.0 * av / sig2
    pois = rng.poisson(half_nonc)
    zn = scale * rng.standard_gamma(half_df + pois.astype(np.float64))
    zn = np.where(upper, 1.0 - zn, zn)
    x[layer] = np.clip(zn, 0.0, 1.0)
    return n_layer


class _Book:
    __slots__ = ("counts", "birth", "hist", "occupied", "pairs", "singles", "zmax", "now")

    def inc(self, i: int) -> None:
        z = int(self.counts[i])
        if z > 0:
            self.hist[z] -= 1
        self.hist[z + 1] += 1
        self.pairs += z
        if z == 0:
            self.occupied += 1
            self.singles += 1
            self.birth[i] = self.now
        elif z == 1:
            self.singles -= 1
        self.counts[i] = z + 1
        if z + 1 > self.zmax:
            self.zmax = z + 1

    def dec(self, i: int) -> None:
        z = int(self.counts[i])
        self.hist[z] -= 1
        if z > 1:
            self.hist[z - 1] += 1
        self.pairs -= z - 1
        if z == 1:
            self.singles -= 1
            self.occupied -= 1
        elif z == 2:
            self.singles += 1
        self.counts[i] = z - 1
        while self.zmax > 0 and self.hist[self.zmax] == 0:
            self.zmax -= 1


def dual_advance(counts, birth, part_site, n_part, n_slots, t, t_end, rec_t, rec_i,
                 rec_pi, rec_k, rec_int, integral, s, c, d, n_sites, stop_k, check, rng):
    """See ``_core.dual_advance``."""
    cap_part = part_site.shape[0]
    cap_sites = counts.shape[0]
    n_rec = rec_t.shape[0]
    free_sites = n_sites == 0
    if n_part < 1:
        raise ValueError("dual state has no particles")
    bk = _Book()
    bk.counts = counts
    bk.birth = birth
    bk.hist = [0] * (cap_part + 2)
    bk.occupied = 0
    bk.pairs = 0
    bk.singles = 0
    bk.zmax = 0
    bk.now = t
    for i in range(n_slots):
        z = int(counts[i])
        if z > 0:
            bk.hist[z] += 1
            bk.occupied += 1
            bk.pairs += z * (z - 1) // 2
            if z == 1:
                bk.singles += 1
            if z > bk.zmax:
                bk.zmax = z
    status = 0
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
            tnext = t - math.log1p(-rng.random()) / total
        else:
            tnext = math.inf
        tlim = tnext if tnext < t_end else t_end
        while rec_i < n_rec and rec_t[rec_i] <= tlim:
            rec_pi[rec_i] = float(n_part)
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
        u = rng.random() * total
        if u < rb:
            idx = _pick(rng, n_part)
            i = int(part_site[idx])
            part_site[n_part] = i
            n_part += 1
            bk.inc(i)
        elif u < rb + rm:
            if free_sites:
                while True:
                    idx = _pick(rng, n_part)
                    i = int(part_site[idx])
                    if counts[i] >= 2:
                        break
                j = n_slots
                n_slots += 1
                counts[j] = 0
            else:
                idx = _pick(rng, n_part)
                i = int(part_site[idx])
                j = _pick(rng, n_sites - 1)
                if j >= i:
                    j += 1
            part_site[idx] = j
            bk.dec(i)
            bk.inc(j)
        else:
            while True:
                idx = _pick(rng, n_part)
                i = int(part_site[idx])
                z = int(counts[i])
                if z >= 2 and rng.random() * (bk.zmax - 1) < z - 1:
                    break
            part_site[idx] = part_site[n_part - 1]
            n_part -= 1
            bk.dec(i)
        if check:
            live = counts[:n_slots]
            zmax_chk = int(live.max()) if n_slots else 0
            if (int(live.sum()) != n_part
                    or int((live * (live - 1) // 2).sum()) != bk.pairs
                    or int((live == 1).sum()) != bk.singles
                    or int((live > 0).sum()) != bk.occupied
                    or zmax_chk != bk.zmax):
                raise RuntimeError("dual rate bookkeeping diverged from a full recount")
        if stop_k > 0 and bk.occupied >= stop_k:
            status = 1
            break
    return t, n_part, n_slots, rec_i, integral, status


def frozen_star_dual_sizes(n0, t, s, c, d, reps, rng):
    """See ``_core.frozen_star_dual_sizes``."""
    out = np.empty(reps, dtype=np.int64)
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
            now = now - math.log1p(-rng.random()) / total
            if now > t:
                break
            u = rng.random() * total
            if u < rb:
                n += 1
            elif u < rb + rm:
                n -= 1
                frozen += 1
            else:
                n -= 1
        out[r] = n + frozen
    return out


def bd_chain_sample(k0, s, c, d, singleton_emigrates, times, reps, rng):
    """See ``_core.bd_chain_sample``."""
    n_t = times.shape[0]
    out = np.zeros((reps, n_t), dtype=np.int64)
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
                tnext = now - math.log1p(-rng.random()) / total
            else:
                tnext = math.inf
            while ti < n_t and times[ti] < tnext:
                out[r, ti] = k
                ti += 1
            if ti >= n_t:
                break
            now = tnext
            if rng.random() * total < rb:
                k += 1
            else:
                k -= 1
    return out

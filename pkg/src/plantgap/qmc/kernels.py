"""Numba kernels for the continuous-time worldline heat-bath sampler.

Path layout: ``start`` (int8[n]) holds the bits at t = 0 and ``times[j, :counts[j]]``
the sorted flip times of spin j. Diagonal terms are projector terms with
integer weights in half-units (see ``hamiltonian.term_index``).

Transfer matrices are carried rescaled by exp(-lambda * omega), which keeps
every entry in [0, 1]; only ratios of matrix elements enter the samplers.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
ERR_RETRY_CAP = 1
ERR_DEGENERATE = 2


@njit(cache=True)
def field_halves(spin, cfg, inc_ptr, inc_idx, tbits, tpats, tw):
    """E(bit spin = 0) - E(bit spin = 1) in half-units for configuration ``cfg``."""
    total = 0
    for p in range(inc_ptr[spin], inc_ptr[spin + 1]):
        t = inc_idx[p]
        match = True
        pat_j = 0
        for k in range(3):
            b = tbits[t, k]
            if b == spin:
                pat_j = tpats[t, k]
            elif cfg[b] != tpats[t, k]:
                match = False
                break
        if match:
            if pat_j == 0:
                total += tw[t]
            else:
                total -= tw[t]
    return total


@njit(cache=True)
def energy_halves(cfg, tbits, tpats, tw):
    total = 0
    for t in range(tw.shape[0]):
        if (
            cfg[tbits[t, 0]] == tpats[t, 0]
            and cfg[tbits[t, 1]] == tpats[t, 1]
            and cfg[tbits[t, 2]] == tpats[t, 2]
        ):
            total += tw[t]
    return total


@njit(cache=True)
def _local_energy_halves(spin, cfg, inc_ptr, inc_idx, tbits, tpats, tw):
    total = 0
    for p in range(inc_ptr[spin], inc_ptr[spin + 1]):
        t = inc_idx[p]
        if (
            cfg[tbits[t, 0]] == tpats[t, 0]
            and cfg[tbits[t, 1]] == tpats[t, 1]
            and cfg[tbits[t, 2]] == tpats[t, 2]
        ):
            total += tw[t]
    return total


@njit(cache=True)
def scaled_transfer(lam, h, c):
    """exp(-lam (h sz - c sx)) * exp(-lam omega) as (a00, a01, a11)."""
    omega = math.sqrt(h * h + c * c)
    if omega == 0.0:
        return 1.0, 0.0, 1.0
    e = math.exp(-2.0 * lam * omega)
    # 1 - h/omega and 1 + h/omega without cancellation
    if h >= 0.0:
        plus = 1.0 + h / omega
        minus = c * c / (omega * (omega + h))
    else:
        minus = 1.0 - h / omega
        plus = c * c / (omega * (omega - h))
    a00 = 0.5 * (minus + plus * e)
    a11 = 0.5 * (plus + minus * e)
    a01 = -0.5 * (c / omega) * math.expm1(-2.0 * lam * omega)
    return a00, a01, a11


@njit(cache=True)
def flip_rate(h, c, state):
    """Waiting-time rate sqrt(h^2 + c^2) + (1 - 2 state) h, evaluated stably."""
    omega = math.sqrt(h * h + c * c)
    bh = h if state == 0 else -h
    if bh >= 0.0:
        return omega + bh
    return c * c / (omega - bh)


@njit(cache=True)
def sample_boundaries_scaled(a00, a01, a11, rng, out):
    """Draw s_0..s_q from the periodic chain of symmetric 2x2 matrices A_0..A_q.

    ``out`` receives the q + 1 bits. Returns OK or ERR_DEGENERATE.
    """
    nseg = a00.shape[0]
    # suffix products P_i = A_q ... A_i, each normalized by its largest entry
    p00 = np.empty(nseg + 1)
    p01 = np.empty(nseg + 1)
    p10 = np.empty(nseg + 1)
    p11 = np.empty(nseg + 1)
    p00[nseg] = 1.0
    p01[nseg] = 0.0
    p10[nseg] = 0.0
    p11[nseg] = 1.0
    for i in range(nseg - 1, -1, -1):
        x00 = p00[i + 1] * a00[i] + p01[i + 1] * a01[i]
        x01 = p00[i + 1] * a01[i] + p01[i + 1] * a11[i]
        x10 = p10[i + 1] * a00[i] + p11[i + 1] * a01[i]
        x11 = p10[i + 1] * a01[i] + p11[i + 1] * a11[i]
        mx = max(max(x00, x01), max(x10, x11))
        if mx <= 0.0 or not math.isfinite(mx):
            return ERR_DEGENERATE
        p00[i] = x00 / mx
        p01[i] = x01 / mx
        p10[i] = x10 / mx
        p11[i] = x11 / mx
    w0 = p00[0]
    w1 = p11[0]
    if w0 + w1 <= 0.0:
        return ERR_DEGENERATE
    s0 = 1 if rng.random() * (w0 + w1) >= w0 else 0
    out[0] = s0
    prev = s0
    for i in range(nseg - 1):
        # weight of s_{i+1} = x: <s0| P_{i+1} |x> <x| A_i |prev>
        if s0 == 0:
            q0 = p00[i + 1]
            q1 = p01[i + 1]
        else:
            q0 = p10[i + 1]
            q1 = p11[i + 1]
        if prev == 0:
            w0 = q0 * a00[i]
            w1 = q1 * a01[i]
        else:
            w0 = q0 * a01[i]
            w1 = q1 * a11[i]
        tot = w0 + w1
        if tot <= 0.0:
            return ERR_DEGENERATE
        prev = 1 if rng.random() * tot >= w0 else 0
        out[i + 1] = prev
    return OK


@njit(cache=True)
def sample_subpath_into(lam, h, c, s_in, s_out, rng, max_attempts, buf):
    """Rejection sampler for one segment; writes the flip offsets into ``buf``.

    Returns (buf, w, attempts, status). ``buf`` is reallocated when a path
    needs more room, so callers must keep the returned array.
    """
    if c == 0.0:
        # no off-diagonal term: only the constant path has weight
        if s_in != s_out:
            return buf, 0, 1, ERR_DEGENERATE
        return buf, 0, 1, OK
    r_in = flip_rate(h, c, s_in)
    r_other = flip_rate(h, c, 1 - s_in)
    for attempt in range(1, max_attempts + 1):
        t = 0.0
        state = s_in
        w = 0
        while True:
            rate = r_in if state == s_in else r_other
            u = rng.exponential(1.0 / rate)
            t_next = t + u
            if t_next >= lam:
                break
            if t_next == t:
                # coincident flip times; draw the waiting time again
                continue
            if w == buf.shape[0]:
                grown = np.empty(2 * buf.shape[0])
                grown[:w] = buf[:w]
                buf = grown
            buf[w] = t_next
            w += 1
            t = t_next
            state = 1 - state
        if state == s_out:
            return buf, w, attempt, OK
    return buf, 0, max_attempts, ERR_RETRY_CAP


@njit(cache=True)
def build_segments(j, start, times, counts, beta, s, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data):
    """Cut [0, beta] at every flip of spins other than j.

    Returns (boundaries t_0..t_q, lengths, fields h_i) for the q + 1 segments.
    The field is updated incrementally through the terms shared by j and the
    flipping spin k (``pair_ptr``/``pair_data``, CSR over ordered pairs): such a
    term feeds j's field iff k and the third spin l match its pattern, so a flip
    of k changes the field by +-sw when l matches.
    """
    n = start.shape[0]
    total = 0
    for k in range(n):
        if k != j:
            total += counts[k]
    ev_t = np.empty(total)
    ev_s = np.empty(total, dtype=np.int64)
    p = 0
    for k in range(n):
        if k != j:
            for a in range(counts[k]):
                ev_t[p] = times[k, a]
                ev_s[p] = k
                p += 1
    order = np.argsort(ev_t)
    nseg = total + 1
    bounds = np.empty(nseg)
    lens = np.empty(nseg)
    fields = np.empty(nseg)
    cfg = start.copy()
    bounds[0] = 0.0
    hh = field_halves(j, cfg, inc_ptr, inc_idx, tbits, tpats, tw)
    fields[0] = s * hh / 4.0
    for i in range(1, nseg):
        e = order[i - 1]
        bounds[i] = ev_t[e]
        lens[i - 1] = bounds[i] - bounds[i - 1]
        k = ev_s[e]
        lo = pair_ptr[j * n + k]
        hi = pair_ptr[j * n + k + 1]
        ck = cfg[k]
        for q in range(lo, hi):
            if cfg[pair_data[q, 0]] == pair_data[q, 2]:
                if ck == pair_data[q, 1]:
                    hh -= pair_data[q, 3]
                else:
                    hh += pair_data[q, 3]
        cfg[k] = 1 - ck
        fields[i] = s * hh / 4.0
    lens[nseg - 1] = beta - bounds[nseg - 1]
    return bounds, lens, fields


@njit(cache=True)
def heat_bath_kernel(j, start, times, counts, beta, s, gamma_j, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data, rng, max_attempts, stats):
    """Resample spin j's worldline from its exact conditional distribution.

    Mutates ``start``/``counts`` and returns the (possibly reallocated)
    ``times`` array plus a status code. ``stats[0]`` accumulates accepted
    subpaths and ``stats[1]`` attempts.
    """
    bounds, lens, fields = build_segments(j, start, times, counts, beta, s, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data)
    nseg = lens.shape[0]
    a00 = np.empty(nseg)
    a01 = np.empty(nseg)
    a11 = np.empty(nseg)
    for i in range(nseg):
        a00[i], a01[i], a11[i] = scaled_transfer(lens[i], fields[i], gamma_j)
    sb = np.empty(nseg, dtype=np.int64)
    status = sample_boundaries_scaled(a00, a01, a11, rng, sb)
    if status != OK:
        return times, status
    new_t = np.empty(max(16, 2 * counts[j] + 16))
    w_tot = 0
    buf = np.empty(64)
    for i in range(nseg):
        s_in = sb[i]
        s_out = sb[i + 1] if i + 1 < nseg else sb[0]
        if lens[i] <= 0.0:
            continue
        buf, w, att, st = sample_subpath_into(lens[i], fields[i], gamma_j, s_in, s_out, rng, max_attempts, buf)
        stats[1] += att
        if st != OK:
            return times, st
        stats[0] += 1
        if w_tot + w > new_t.shape[0]:
            grown = np.empty(2 * (w_tot + w))
            grown[:w_tot] = new_t[:w_tot]
            new_t = grown
        for a in range(w):
            new_t[w_tot + a] = bounds[i] + buf[a]
        w_tot += w
    if w_tot > times.shape[1]:
        grown2 = np.empty((times.shape[0], 2 * w_tot))
        for k in range(times.shape[0]):
            grown2[k, : counts[k]] = times[k, : counts[k]]
        times = grown2
    times[j, :w_tot] = new_t[:w_tot]
    counts[j] = w_tot
    start[j] = sb[0]
    return times, OK


@njit(cache=True)
def sweep_kernel(start, times, counts, beta, s, gamma, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data, rng, max_attempts, stats):
    n = start.shape[0]
    for _ in range(n):
        j = rng.integers(0, n)
        times, st = heat_bath_kernel(j, start, times, counts, beta, s, gamma[j], inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data, rng, max_attempts, stats)
        if st != OK:
            return times, st
    return times, OK


@njit(cache=True)
def measure_kernel(start, times, counts, beta, inc_ptr, inc_idx, tbits, tpats, tw):
    """Time averages of the problem energy (half-units) and Hamming weight, and the flip count."""
    n = start.shape[0]
    total = 0
    for k in range(n):
        total += counts[k]
    ev_t = np.empty(total)
    ev_s = np.empty(total, dtype=np.int64)
    p = 0
    for k in range(n):
        for a in range(counts[k]):
            ev_t[p] = times[k, a]
            ev_s[p] = k
            p += 1
    order = np.argsort(ev_t)
    cfg = start.copy()
    e = energy_halves(cfg, tbits, tpats, tw)
    wgt = 0
    for k in range(n):
        wgt += cfg[k]
    t_prev = 0.0
    e_int = 0.0
    w_int = 0.0
    for i in range(total):
        ev = order[i]
        t = ev_t[ev]
        e_int += e * (t - t_prev)
        w_int += wgt * (t - t_prev)
        k = ev_s[ev]
        before = _local_energy_halves(k, cfg, inc_ptr, inc_idx, tbits, tpats, tw)
        cfg[k] ^= 1
        after = _local_energy_halves(k, cfg, inc_ptr, inc_idx, tbits, tpats, tw)
        e += after - before
        wgt += 1 if cfg[k] == 1 else -1
        t_prev = t
    e_int += e * (beta - t_prev)
    w_int += wgt * (beta - t_prev)
    return e_int / beta, w_int / beta, total


@njit(cache=True)
def chain_kernel(start, times, counts, beta, s, gamma, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data, rng, max_attempts, n_sweeps, thin, out, stats):
    """Run ``n_sweeps`` sweeps, recording (E_halves_avg, W_avg, m) every ``thin`` sweeps into ``out``."""
    rec = 0
    for sw in range(1, n_sweeps + 1):
        times, st = sweep_kernel(start, times, counts, beta, s, gamma, inc_ptr, inc_idx, tbits, tpats, tw, pair_ptr, pair_data, rng, max_attempts, stats)
        if st != OK:
            return times, rec, st
        if sw % thin == 0:
            e_avg, w_avg, m = measure_kernel(start, times, counts, beta, inc_ptr, inc_idx, tbits, tpats, tw)
            out[rec, 0] = e_avg
            out[rec, 1] = w_avg
            out[rec, 2] = m
            rec += 1
    return times, rec, OK


@njit(cache=True)
def boundary_batch(a00, a01, a11, rng, size):
    res = np.empty((size, a00.shape[0]), dtype=np.int64)
    row = np.empty(a00.shape[0], dtype=np.int64)
    for k in range(size):
        st = sample_boundaries_scaled(a00, a01, a11, rng, row)
        if st != OK:
            return res[:k], st
        res[k, :] = row
    return res, OK


@njit(cache=True)
def subpath_batch(lam, h, c, s_in, s_out, rng, max_attempts, size):
    """Flip counts, first offsets (nan if none) and total attempts for ``size`` accepted draws."""
    ws = np.empty(size, dtype=np.int64)
    first = np.empty(size)
    attempts = 0
    buf = np.empty(64)
    for k in range(size):
        buf, w, att, st = sample_subpath_into(lam, h, c, s_in, s_out, rng, max_attempts, buf)
        attempts += att
        if st != OK:
            return ws[:k], first[:k], attempts, st
        ws[k] = w
        first[k] = buf[0] if w > 0 else np.nan
    return ws, first, attempts, OK

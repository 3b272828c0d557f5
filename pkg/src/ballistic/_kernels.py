"""Compiled inner loops (numba).

Velocities are int8 in {-1, 0, 1}.  Positions are int64 (exact, integer
scaled) for fixed-length enumeration and discrete length laws, float64 for
continuous laws; every kernel is generic over the two.

Spins are read in one of two ways:

* ``consult_order=False``: ``spins[i]`` is the spin of particle ``i``;
* ``consult_order=True``: ``spins[k]`` is the answer to the ``k``-th tie met
  during the scan (entries at or beyond ``ndec`` default to -1 and are
  written back).  This drives the lazy spin branching of the enumerator.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEFT, STATIC, RIGHT = -1, 0, 1

# skyline shape ids, same order as core.SkylineShape
UP, SURV_LEFT, SURV_RIGHT, ARCH_RS, ARCH_SL, ARCH_RL = 0, 1, 2, 3, 4, 5

# distribution ids for the streaming kernels
D_EXP, D_GAMMA, D_UNIFORM, D_TWOPOINT, D_DET = 0, 1, 2, 3, 4


@njit(cache=True, nogil=True)
def _reduce_run(stack, lo, hi, v, pairing, scratch):
    """Cancel R-then-S neighbours in ``stack[lo:hi]``; returns the leftover count."""
    m = 0
    for k in range(lo, hi):
        e = stack[k]
        if v[e] == STATIC and m > 0 and v[scratch[m - 1]] == RIGHT:
            j = scratch[m - 1]
            m -= 1
            pairing[j] = e
            pairing[e] = j
        else:
            scratch[m] = e
            m += 1
    return m


@njit(cache=True, nogil=True)
def _engage(i, x, v, spins, consult_order, ndec, stack, top_n, pairing, scratch, counters):
    """Let left-mover ``i`` work its way down the stack; returns the new stack size.

    ``counters[0]`` counts consulted spins, ``counters[1]`` exact ties,
    ``counters[2]`` is set to 1 when ``i`` empties the stack and survives.
    """
    counters[2] = 0
    while top_n > 0:
        top = stack[top_n - 1]
        if v[top] == RIGHT:
            top_n -= 1
            pairing[top] = i
            pairing[i] = top
            return top_n
        pending = 0
        slot = -1
        for k in range(top_n - 2, -1, -1):
            if v[stack[k]] == STATIC:
                pending += 1
            elif pending > 0:
                pending -= 1
            else:
                slot = k
                break
        if slot < 0:
            top_n -= 1
            pairing[top] = i
            pairing[i] = top
            return top_n
        rival = stack[slot]
        tl = x[i] - x[top]
        tr = x[top] - x[rival]
        left_wins = tl < tr
        if tl == tr:
            counters[1] += 1
            if consult_order:
                c = counters[0]
                if c < ndec:
                    s = spins[c]
                else:
                    s = -1
                    spins[c] = -1
                counters[0] = c + 1
            else:
                s = spins[top]
            left_wins = s == 1
        if left_wins:
            top_n -= 1
            pairing[top] = i
            pairing[i] = top
            return top_n
        _reduce_run(stack, slot + 1, top_n - 1, v, pairing, scratch)
        top_n = slot
        pairing[top] = rival
        pairing[rival] = top
    counters[2] = 1
    return top_n


@njit(cache=True, nogil=True)
def resolve_stack(x, v, spins, consult_order, ndec, pairing, stack, scratch, counters):
    """Fill ``pairing`` for one instance; returns the number of consulted spins."""
    n = x.shape[0]
    for i in range(n):
        pairing[i] = i
    counters[0] = 0
    counters[1] = 0
    top_n = 0
    for i in range(n):
        if v[i] != LEFT:
            stack[top_n] = i
            top_n += 1
        else:
            top_n = _engage(i, x, v, spins, consult_order, ndec, stack, top_n, pairing, scratch, counters)
    _reduce_run(stack, 0, top_n, v, pairing, scratch)
    return counters[0]


@njit(cache=True, nogil=True)
def resolve_one(x, v, spins):
    """Convenience wrapper: pairing array for per-particle spins."""
    n = x.shape[0]
    pairing = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    scratch = np.empty(n, np.int64)
    counters = np.zeros(3, np.int64)
    resolve_stack(x, v, spins, False, 0, pairing, stack, scratch, counters)
    return pairing


# ------------------------------------------------------------------ observables


@njit(cache=True, nogil=True)
def first_crosser(v, pairing):
    for i in range(v.shape[0]):
        if pairing[i] == i and v[i] == LEFT:
            return i
    return -1


@njit(cache=True, nogil=True)
def skyline_digits(v, pairing, digits):
    """``digits[i] = 1 + shape`` if a segment starts at ``i``, else 0."""
    n = v.shape[0]
    for i in range(n):
        digits[i] = 0
    start = 0
    first_right = -1
    for i in range(n):
        if pairing[i] == i:
            if v[i] == LEFT:
                digits[start] = 1 + SURV_LEFT
                start = i + 1
            elif v[i] == RIGHT:
                digits[i] = 1 + SURV_RIGHT
                if first_right < 0:
                    first_right = i
    stop = first_right if first_right >= 0 else n
    i = start
    while i < stop:
        j = pairing[i]
        if j == i:
            digits[i] = 1 + UP
            i += 1
        else:
            if v[i] == RIGHT and v[j] == LEFT:
                digits[i] = 1 + ARCH_RL
            elif v[i] == RIGHT:
                digits[i] = 1 + ARCH_RS
            else:
                digits[i] = 1 + ARCH_SL
            i = j + 1


@njit(cache=True, nogil=True)
def skyline_code(v, pairing, digits):
    n = v.shape[0]
    if n > 22:
        return -1
    skyline_digits(v, pairing, digits)
    code = 0
    for i in range(n - 1, -1, -1):
        code = code * 7 + digits[i]
    return code


@njit(cache=True, nogil=True)
def pairing_code(v, pairing):
    """Injective code of ``(v, pairing)`` for ``n <= 10``; -1 above."""
    n = v.shape[0]
    if n > 10:
        return -1
    code = 0
    for i in range(n - 1, -1, -1):
        code = code * 16 + pairing[i]
    for i in range(n - 1, -1, -1):
        code = code * 3 + (v[i] + 1)
    return code


# ------------------------------------------------------------------ enumeration


@njit(cache=True, nogil=True)
def _hash(key, mask):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    return np.int64((h >> np.uint64(20)) & np.uint64(mask))


@njit(cache=True, nogil=True)
def enumerate_block(X, n, v_lo, v_hi):
    """Exhaustive resolution for velocity indices ``v_lo <= vi < v_hi``.

    ``X`` holds one row of integer positions per distinct arrangement.
    Returns ``(vel_index, key, count)`` arrays where ``key = code * 16 +
    consulted`` and ``code`` packs the pairing in 4-bit digits.  Each
    arrangement contributes one leaf per realised spin branch.
    """
    A = X.shape[0]
    cap = 1 << 12
    out_v = np.empty(cap, np.int64)
    out_k = np.empty(cap, np.int64)
    out_c = np.empty(cap, np.int64)
    nout = 0
    TS = 1 << 13
    mask = TS - 1
    tkeys = np.full(TS, -1, np.int64)
    tcnt = np.zeros(TS, np.int64)
    used = np.empty(TS, np.int64)
    v = np.empty(n, np.int8)
    dec = np.empty(n + 1, np.int8)
    pairing = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    scratch = np.empty(n, np.int64)
    counters = np.zeros(3, np.int64)
    for vi in range(v_lo, v_hi):
        t = vi
        for i in range(n):
            v[i] = t % 3 - 1
            t //= 3
        nused = 0
        for a in range(A):
            x = X[a]
            ndec = 0
            while True:
                nc = resolve_stack(x, v, dec, True, ndec, pairing, stack, scratch, counters)
                code = 0
                for i in range(n - 1, -1, -1):
                    code = code * 16 + pairing[i]
                key = code * 16 + nc
                h = _hash(key, mask)
                while tkeys[h] != -1 and tkeys[h] != key:
                    h = (h + 1) & mask
                if tkeys[h] == -1:
                    tkeys[h] = key
                    used[nused] = h
                    nused += 1
                    if nused * 2 > TS:
                        raise RuntimeError("enumeration hash table overflow")
                tcnt[h] += 1
                # next spin branch: flip the deepest -1 decision
                k = nc - 1
                while k >= 0 and dec[k] == 1:
                    k -= 1
                if k < 0:
                    break
                dec[k] = 1
                ndec = k + 1
        if nout + nused > cap:
            while nout + nused > cap:
                cap *= 2
            nv = np.empty(cap, np.int64)
            nk = np.empty(cap, np.int64)
            ncnt = np.empty(cap, np.int64)
            nv[:nout] = out_v[:nout]
            nk[:nout] = out_k[:nout]
            ncnt[:nout] = out_c[:nout]
            out_v, out_k, out_c = nv, nk, ncnt
        for u in range(nused):
            h = used[u]
            out_v[nout] = vi
            out_k[nout] = tkeys[h]
            out_c[nout] = tcnt[h]
            nout += 1
            tkeys[h] = -1
            tcnt[h] = 0
    return out_v[:nout].copy(), out_k[:nout].copy(), out_c[:nout].copy()


# ------------------------------------------------------------------ Monte Carlo


@njit(cache=True, nogil=True)
def mc_batch(X, V, SP, scale, want_codes):
    """Resolve a batch of trials (one row each) and return per-trial observables."""
    B, n = X.shape
    A = np.full(B, -1, np.int64)
    D = np.full(B, np.nan)
    xn = np.empty(B)
    sky = np.full(B, -1, np.int64)
    pc = np.full(B, -1, np.int64)
    nst = np.zeros(B, np.int64)
    nsurv = np.zeros(B, np.int64)
    ties = 0
    pairing = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    scratch = np.empty(n, np.int64)
    digits = np.empty(n, np.int64)
    counters = np.zeros(3, np.int64)
    for b in range(B):
        x = X[b]
        v = V[b]
        resolve_stack(x, v, SP[b], False, 0, pairing, stack, scratch, counters)
        ties += counters[1]
        a = first_crosser(v, pairing)
        if a >= 0:
            A[b] = a + 1
            D[b] = x[a] / scale
        xn[b] = x[n - 1] / scale
        s = 0
        m = 0
        for i in range(n):
            if v[i] == STATIC:
                s += 1
            if pairing[i] == i:
                m += 1
        nst[b] = s
        nsurv[b] = m
        if want_codes:
            sky[b] = skyline_code(v, pairing, digits)
            pc[b] = pairing_code(v, pairing)
    return A, D, xn, sky, pc, nst, nsurv, ties


@njit(cache=True, nogil=True)
def _draw(rng, kind, a, b, c):
    if kind == D_EXP:
        return rng.exponential(a)
    if kind == D_GAMMA:
        return rng.gamma(a, b)
    if kind == D_UNIFORM:
        return rng.uniform(a, b)
    if kind == D_TWOPOINT:
        return a if rng.random() < c else b
    return a


@njit(cache=True, nogil=True)
def _draw_velocity(rng, p, r):
    u = rng.random()
    if u < p:
        return 0
    if u < p + r * (1.0 - p):
        return 1
    return -1


@njit(cache=True, nogil=True)
def first_crosser_stream(rng, trials, nmax, cutoff, p, r, kind, a, b, c, random_spins, out_A, out_D):
    """One-sided system grown particle by particle until the first crossing.

    A left-mover that empties the stack crosses the origin whatever happens
    further right, so the trial stops there.  It also stops after ``nmax``
    particles or once positions exceed ``cutoff``; ``A = -1`` then.
    Per particle the draws are velocity, length, then spin if
    ``random_spins``.  Returns the number of exact ties met.
    """
    x = np.empty(nmax)
    v = np.empty(nmax, np.int8)
    spins = np.full(nmax, -1, np.int8)
    pairing = np.empty(nmax, np.int64)
    stack = np.empty(nmax, np.int64)
    scratch = np.empty(nmax, np.int64)
    counters = np.zeros(3, np.int64)
    ties = 0
    for t in range(trials):
        pos = 0.0
        top_n = 0
        out_A[t] = -1
        out_D[t] = np.nan
        counters[1] = 0
        for i in range(nmax):
            vel = _draw_velocity(rng, p, r)
            pos += _draw(rng, kind, a, b, c)
            if random_spins:
                spins[i] = 1 if rng.random() < 0.5 else -1
            if pos > cutoff:
                break
            x[i] = pos
            v[i] = vel
            pairing[i] = i
            if vel != LEFT:
                stack[top_n] = i
                top_n += 1
            else:
                top_n = _engage(i, x, v, spins, False, 0, stack, top_n, pairing, scratch, counters)
                if counters[2] == 1:
                    out_A[t] = i + 1
                    out_D[t] = pos
                    break
        ties += counters[1]
    return ties


@njit(cache=True, nogil=True)
def window_alive(x, v, spins, t, lim, counts):
    """Resolve one window; ``counts`` gets (alive statics, particles, statics) in ``[-lim, lim]``.

    A static is alive at time ``t`` unless its partner started within
    distance ``t``: partners move at unit speed towards it.  Returns ties.
    """
    n = x.shape[0]
    pairing = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    scratch = np.empty(n, np.int64)
    counters = np.zeros(3, np.int64)
    resolve_stack(x, v, spins, False, 0, pairing, stack, scratch, counters)
    alive = 0
    total = 0
    stat = 0
    for k in range(n):
        if -lim <= x[k] <= lim:
            total += 1
            if v[k] == STATIC:
                stat += 1
                j = pairing[k]
                if j == k or abs(x[j] - x[k]) > t:
                    alive += 1
    counts[0] = alive
    counts[1] = total
    counts[2] = stat
    return counters[1]


@njit(cache=True, nogil=True)
def _half_line(rng, kind, a, b, c, half_width):
    buf = np.empty(64)
    m = 0
    pos = 0.0
    while True:
        pos += _draw(rng, kind, a, b, c)
        if pos > half_width:
            break
        if m == buf.shape[0]:
            tmp = np.empty(2 * m)
            tmp[:m] = buf
            buf = tmp
        buf[m] = pos
        m += 1
    return buf[:m]


@njit(cache=True, nogil=True)
def density_windows(rng, windows, half_width, t, p, r, kind, a, b, c, random_spins, out_alive, out_total, out_static):
    """Full-line windows ``[-W, W]`` from two independent half-lines out of 0.

    Draw order per window: right half-line lengths, left half-line lengths,
    then velocities (and spins) from left to right.  Counts are taken over
    ``[-W/2, W/2]``.  Returns the number of exact ties.
    """
    ties = 0
    counts = np.zeros(3, np.int64)
    for w in range(windows):
        right = _half_line(rng, kind, a, b, c, half_width)
        left = _half_line(rng, kind, a, b, c, half_width)
        nl = left.shape[0]
        n = nl + right.shape[0]
        x = np.empty(n)
        for k in range(nl):
            x[k] = -left[nl - 1 - k]
        for k in range(right.shape[0]):
            x[nl + k] = right[k]
        v = np.empty(n, np.int8)
        spins = np.full(n, -1, np.int8)
        for k in range(n):
            v[k] = _draw_velocity(rng, p, r)
            if random_spins:
                spins[k] = 1 if rng.random() < 0.5 else -1
        ties += window_alive(x, v, spins, t, 0.5 * half_width, counts)
        out_alive[w] = counts[0]
        out_total[w] = counts[1]
        out_static[w] = counts[2]
    return ties

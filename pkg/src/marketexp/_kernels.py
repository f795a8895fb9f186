"""Compiled inner loops.

Both kernels take flat float64/int64 arrays plus a ``numpy.random.Generator``
and consume randomness exclusively through ``gen.random()``, so a given
(Philox) stream replays identically in and out of compiled code and across
thread counts.  Nothing here allocates per event.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# Mean-field right-hand side and fixed-step RK4 path


@njit(cache=True, nogil=True)
def mf_rhs(s, rho, nu, phi, eps, alpha, v, lam, tau, out):
    # d s(l) / dt = (rho - s) tau nu - lam sum_c phi_c p_c(l | s)
    C, L = alpha.shape
    for l in range(L):
        out[l] = (rho[l] - s[l]) * tau * nu[l]
    if lam > 0.0:
        for c in range(C):
            if phi[c] == 0.0:
                continue
            denom = eps[c]
            for l in range(L):
                denom += alpha[c, l] * v[c, l] * s[l]
            coef = lam * phi[c] / denom
            for l in range(L):
                out[l] -= coef * alpha[c, l] * v[c, l] * s[l]


@njit(cache=True, nogil=True)
def rk4_path(s0, rho, nu, phi, eps, alpha, v, lam, tau, h, n_steps, stride,
             times, states):
    """Integrate with classical RK4, storing every ``stride``-th step plus the
    endpoints.  States are clamped to [0, rho]; returns the largest clamp
    excess seen (the caller turns a big one into an error)."""
    L = s0.shape[0]
    s = s0.copy()
    k1 = np.empty(L)
    k2 = np.empty(L)
    k3 = np.empty(L)
    k4 = np.empty(L)
    tmp = np.empty(L)
    times[0] = 0.0
    for l in range(L):
        states[0, l] = s[l]
    idx = 0
    max_excess = 0.0
    for step in range(1, n_steps + 1):
        mf_rhs(s, rho, nu, phi, eps, alpha, v, lam, tau, k1)
        for l in range(L):
            tmp[l] = s[l] + 0.5 * h * k1[l]
        mf_rhs(tmp, rho, nu, phi, eps, alpha, v, lam, tau, k2)
        for l in range(L):
            tmp[l] = s[l] + 0.5 * h * k2[l]
        mf_rhs(tmp, rho, nu, phi, eps, alpha, v, lam, tau, k3)
        for l in range(L):
            tmp[l] = s[l] + h * k3[l]
        mf_rhs(tmp, rho, nu, phi, eps, alpha, v, lam, tau, k4)
        for l in range(L):
            s[l] += (h / 6.0) * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l])
            if s[l] < 0.0:
                if -s[l] > max_excess:
                    max_excess = -s[l]
                s[l] = 0.0
            elif s[l] > rho[l]:
                if s[l] - rho[l] > max_excess:
                    max_excess = s[l] - rho[l]
                s[l] = rho[l]
        if step % stride == 0 or step == n_steps:
            idx += 1
            times[idx] = step * h
            for l in range(L):
                states[idx, l] = s[l]
    return max_excess, idx


# ---------------------------------------------------------------------------
# Exact samplers from uniforms


@njit(cache=True, nogil=True)
def binomial_draw(gen, n, p):
    """Exact Binomial(n, p) count by geometric gap skipping.

    Expected cost O(n * min(p, 1-p) + 1); the event loop only reaches this
    when a consideration probability is strictly inside (0, 1)."""
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    q = p
    flipped = False
    if q > 0.5:
        q = 1.0 - q
        flipped = True
    lq = np.log1p(-q)
    count = 0
    pos = 0
    while True:
        u = gen.random()
        pos += 1 + int(np.log1p(-u) / lq)
        if pos > n:
            break
        count += 1
    if flipped:
        return n - count
    return count


# ---------------------------------------------------------------------------
# Finite-market event loop

# status codes returned by sim_loop
OK = 0
TRACE_OVERFLOW = 1
EVENT_OVERFLOW = 2


@njit(cache=True, nogil=True)
def sim_loop(gen, lam_n, phi_cum, cust_cond, eps_n, alpha, v, list_cond,
             totals, avail, nu, tau, t_burn, t_end, fixed_k,
             trace_stride, trace_t, trace_y, counts, events, record_events):
    """Run the competing-exponentials event loop until ``t_end``.

    ``avail`` is mutated in place to the terminal availability counts.
    ``counts[i, j]`` accumulates bookings with arrival time in
    [t_burn, t_end].  Every state change increments a change counter and each
    ``trace_stride``-th change appends a (time, counts) trace row; row 0 is
    the initial state.  With ``record_events`` each booking appends
    (t, i, j, listing cell) to ``events``.
    """
    C = phi_cum.shape[0]
    L = avail.shape[0]
    D = np.zeros(L, np.int64)
    rem = np.zeros(L, np.int64)
    t = 0.0
    trace_t[0] = 0.0
    for l in range(L):
        trace_y[0, l] = avail[l]
    n_trace = 1
    n_changes = 0
    n_events = 0
    while True:
        rep_rate = 0.0
        for l in range(L):
            rep_rate += (totals[l] - avail[l]) * nu[l]
        rep_rate *= tau
        total = lam_n + rep_rate
        if total <= 0.0:
            break
        t = t - np.log1p(-gen.random()) / total
        if t > t_end:
            break
        u = gen.random() * total
        changed = False
        if u < rep_rate:
            # replenishment; pick the cell by its (totals-avail)*nu weight
            target = u / tau
            cum = 0.0
            pick = L - 1
            for l in range(L):
                cum += (totals[l] - avail[l]) * nu[l]
                if target < cum:
                    pick = l
                    break
            avail[pick] += 1
            changed = True
        else:
            # arrival; customer cell by arrival share
            u3 = gen.random()
            c = C - 1
            for cc in range(C):
                if u3 < phi_cum[cc]:
                    c = cc
                    break
            # consideration counts per listing cell
            if fixed_k > 0:
                tot_av = 0
                for l in range(L):
                    rem[l] = avail[l]
                    D[l] = 0
                    tot_av += avail[l]
                k = fixed_k if fixed_k < tot_av else tot_av
                for _ in range(k):
                    u4 = gen.random() * tot_av
                    cum2 = 0.0
                    pickl = -1
                    for l in range(L):
                        cum2 += rem[l]
                        if u4 < cum2:
                            pickl = l
                            break
                    if pickl < 0:
                        for l in range(L - 1, -1, -1):
                            if rem[l] > 0:
                                pickl = l
                                break
                    D[pickl] += 1
                    rem[pickl] -= 1
                    tot_av -= 1
            else:
                for l in range(L):
                    a = alpha[c, l]
                    if a >= 1.0:
                        D[l] = avail[l]
                    else:
                        D[l] = binomial_draw(gen, avail[l], a)
            # multinomial logit over considered counts, outside weight eps*N
            wsum = 0.0
            for l in range(L):
                wsum += D[l] * v[c, l]
            u5 = gen.random() * (eps_n[c] + wsum)
            if u5 < wsum:
                cum3 = 0.0
                pickl = L - 1
                for l in range(L):
                    cum3 += D[l] * v[c, l]
                    if u5 < cum3:
                        pickl = l
                        break
                avail[pickl] -= 1
                changed = True
                if t >= t_burn:
                    counts[cust_cond[c], list_cond[pickl]] += 1
                if record_events:
                    if n_events >= events.shape[0]:
                        return n_trace, n_events, EVENT_OVERFLOW
                    events[n_events, 0] = t
                    events[n_events, 1] = cust_cond[c]
                    events[n_events, 2] = list_cond[pickl]
                    events[n_events, 3] = pickl
                    n_events += 1
        if changed:
            n_changes += 1
            if n_changes % trace_stride == 0:
                if n_trace >= trace_t.shape[0]:
                    return n_trace, n_events, TRACE_OVERFLOW
                trace_t[n_trace] = t
                for l in range(L):
                    trace_y[n_trace, l] = avail[l]
                n_trace += 1
    return n_trace, n_events, OK

"""Compiled simulation kernels for AR(1) targets (white noise included).

Each replication seeds numba's Mersenne Twister with its own 32-bit seed,
which reproduces ``numpy.random.RandomState(seed).standard_normal()``
draw for draw.  The chart arithmetic mirrors :mod:`varchart.charts`
operation by operation, so kernel and reference implementations give
identical statistics on identical paths.

A replication records the running-maximum records of its statistic above
``floor`` and stops once the statistic exceeds ``top`` or ``cap`` steps have
been simulated.  The first passage time over any c in [floor, top] can then
be read off the records without simulating again.
"""

import math
import os

import numba as nb
import numpy as np

SCHEME_CODES = {
    "cusum_iid": 0,
    "lr": 1,
    "sprt": 2,
    "sr_iid": 3,
    "sr": 4,
    "glr": 5,
    "gsprt": 6,
    "gsr_iid": 7,
    "gsr": 8,
}

# layout of the float parameter vector
P_K, P_CROSS, P_LOGD, P_HALFGAIN, P_GAIN, P_INV1PD, P_WINDOW, P_HALF = range(8)
N_PARAMS = 8

NEG_INF = -np.inf

if "NUMBA_THREADING_LAYER" not in os.environ:
    # avoids a noisy warning from outdated TBB installs
    nb.config.THREADING_LAYER = "workqueue"


@nb.njit(cache=True, inline="always")
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


GLR_BLOCK = 32
GLR_SUPER = 1024


@nb.njit(cache=True)
def _glr_candidate(n, i, t_n, t_hist, q_hist, p_hist):
    m = n - i + 1.0
    s_ddot = t_n - t_hist[i - 1] + q_hist[i - 1]
    s_dot = s_ddot - p_hist[i - 1]
    if s_dot <= m:
        return 0.0
    b = s_dot - s_ddot
    d = (b + math.sqrt(b * b + 4.0 * m * s_ddot)) / (2.0 * m)
    if d > 1.0:
        w = 1.0 - 1.0 / d
        return -m * math.log(d) + w * s_dot - 0.5 * w * w * s_ddot
    return 0.0


@nb.njit(cache=True)
def _glr_max(n, t_n, t_hist, q_hist, p_hist, blk_g, blk_b, sup_g, sup_b, lo, thr):
    """2 max_i l_i if that exceeds ``thr``; otherwise some value <= thr.

    Twice a candidate's objective is at most (s_dot - m)^2 / (s_ddot + m),
    which only depends on the candidate through two offsets.  Their extremes
    over blocks of GLR_BLOCK and GLR_SUPER candidates bound whole ranges, so
    ranges that cannot beat the threshold are skipped.
    """
    n_blocks = (n + GLR_BLOCK - 1) // GLR_BLOCK
    n_super = (n + GLR_SUPER - 1) // GLR_SUPER
    per_super = GLR_SUPER // GLR_BLOCK
    best = 0.0
    slack = 1e-9 * (1.0 + abs(t_n) + n)
    bar = thr - slack
    top_gap = t_n - n
    top_den = t_n + n + 1.0
    for sb in range(n_super - 1, -1, -1):
        if (sb + 1) * GLR_SUPER < lo:
            break
        gap = top_gap - sup_g[sb]
        if gap <= 0.0 or gap * gap / (top_den - sup_b[sb]) <= max(bar, 2.0 * best - slack):
            continue
        first = sb * per_super
        last = min(n_blocks, first + per_super)
        for bl in range(last - 1, first - 1, -1):
            gap = top_gap - blk_g[bl]
            if gap <= 0.0 or gap * gap / (top_den - blk_b[bl]) <= max(bar, 2.0 * best - slack):
                continue
            i_hi = min(n, (bl + 1) * GLR_BLOCK)
            i_lo = max(lo, bl * GLR_BLOCK + 1)
            for i in range(i_hi, i_lo - 1, -1):
                obj = _glr_candidate(n, i, t_n, t_hist, q_hist, p_hist)
                if obj > best:
                    best = obj
    return 2.0 * best


@nb.njit(cache=True)
def _one_path(scheme, params, seed, cap, tau, delta, phi, sigma, sqrt_g0, sigma2, gamma0,
              floor, top, rec_n, rec_m):
    """Simulate one replication; returns (records, steps, overflowed)."""
    np.random.seed(seed)
    max_rec = rec_n.shape[0]
    k = params[P_K]
    c_cross = params[P_CROSS]
    log_delta = params[P_LOGD]
    half_gain = params[P_HALFGAIN]
    gain = params[P_GAIN]
    inv_1pd = params[P_INV1PD]
    window = int(params[P_WINDOW])
    paper_half = params[P_HALF] != 0.0

    size = 1
    n_blk = 1
    n_sup = 1
    if scheme == 5:
        size = min(cap, 1024)
        n_blk = (cap + GLR_BLOCK - 1) // GLR_BLOCK
        n_sup = (cap + GLR_SUPER - 1) // GLR_SUPER
    t_hist = np.empty(size)
    q_hist = np.empty(size)
    p_hist = np.empty(size)
    blk_g = np.full(n_blk, np.inf)
    blk_b = np.full(n_blk, -np.inf)
    sup_g = np.full(n_sup, np.inf)
    sup_b = np.full(n_sup, -np.inf)

    y_in = 0.0      # in-control process value
    x_prev = 0.0    # previous observation
    acc = 0.0       # cusum / lr / sprt accumulator
    log_r = NEG_INF
    t_n = 0.0
    cum_t = 0.0
    p_n = 0.0
    q_n = 0.0
    u_n = 0.0
    run_min = 0.0
    best = floor
    count = 0
    n = 0
    while n < cap:
        n += 1
        z = np.random.standard_normal()
        if n == 1:
            y_in = sqrt_g0 * z
        else:
            y_in = phi * y_in + sigma * z
        y = y_in
        if tau > 0 and n >= tau:
            y = delta * y_in
        if n == 1:
            x_hat = 0.0
            v = gamma0
        else:
            x_hat = phi * x_prev
            v = sigma2
        x_prev = y

        if scheme == 0:
            acc = max(0.0, acc + (y * y / gamma0 - k))
            stat = acc
        elif scheme == 1:
            e = y - x_hat
            inc = e * e / v - k
            lead = -x_hat * x_hat / v + c_cross * y * x_hat / v
            acc = max(lead, acc) + inc
            stat = max(0.0, acc)
        elif scheme == 2:
            e = y - x_hat
            acc = max(0.0, acc + (e * e / v - k))
            stat = acc
        elif scheme == 3:
            log_r = _logaddexp(log_r, 0.0) - log_delta + half_gain * (y * y / gamma0)
            stat = log_r
        elif scheme == 4:
            e = y - x_hat
            lead = gain * (y * x_hat * inv_1pd / v - x_hat * x_hat / (2.0 * v))
            log_r = _logaddexp(log_r, lead) - log_delta + half_gain * (e * e / v)
            stat = log_r
        elif scheme == 5:
            e = y - x_hat
            t_n += e * e / v
            if n > t_hist.shape[0]:
                new = min(cap, 2 * t_hist.shape[0])
                t2 = np.empty(new)
                q2 = np.empty(new)
                p2 = np.empty(new)
                t2[: n - 1] = t_hist[: n - 1]
                q2[: n - 1] = q_hist[: n - 1]
                p2[: n - 1] = p_hist[: n - 1]
                t_hist = t2
                q_hist = q2
                p_hist = p2
            q_i = y * y / v
            p_i = y * x_hat / v
            t_hist[n - 1] = t_n
            q_hist[n - 1] = q_i
            p_hist[n - 1] = p_i
            # offsets of s_dot - m and s_ddot + m for candidate n
            g_i = t_n - q_i + p_i - n + 1.0
            b_i = t_n - q_i + n
            bl = (n - 1) // GLR_BLOCK
            blk_g[bl] = min(blk_g[bl], g_i)
            blk_b[bl] = max(blk_b[bl], b_i)
            sb = (n - 1) // GLR_SUPER
            sup_g[sb] = min(sup_g[sb], g_i)
            sup_b[sb] = max(sup_b[sb], b_i)
            lo = 1
            if window > 0 and n - window + 1 > 1:
                lo = n - window + 1
            stat = _glr_max(n, t_n, t_hist, q_hist, p_hist, blk_g, blk_b, sup_g, sup_b, lo, best)
        elif scheme == 6:
            e = y - x_hat
            t_n += e * e / v
            xr = t_n / n
            h = 0.0
            if xr >= 1.0:
                h = n * (xr - 1.0 - math.log(xr)) / 2.0
            run_min = min(run_min, h)
            stat = h - run_min
        elif scheme == 7:
            u_n += n * (y * y / gamma0)
            nn = n * (n + 1.0)
            xr = max(1.0, 2.0 * u_n / nn)
            stat = nn * (xr - 1.0 - math.log(xr)) / 2.0
        else:
            e = y - x_hat
            t_n += e * e / v
            cum_t += t_n
            p_n += e * y / v
            q_n += y * y / v
            base = n * t_n - cum_t
            u_dot = base + p_n
            u_ddot = base + q_n
            nn = n * (n + 1.0)
            b = u_dot - u_ddot
            d = (b + math.sqrt(b * b + 2.0 * nn * u_ddot)) / nn
            stat = 0.0
            if d > 1.0:
                w = 1.0 - 1.0 / d
                quad = w * w * u_ddot
                if paper_half:
                    quad = 0.5 * quad
                stat = -(n * (n + 1.0) / 2.0) * math.log(d * d) + 2.0 * w * u_dot - quad

        if stat > best:
            if count == max_rec:
                return count, n, True
            rec_n[count] = n
            rec_m[count] = stat
            count += 1
            best = stat
            if stat > top:
                return count, n, False
    return count, n, False


@nb.njit(cache=True, parallel=True)
def simulate_records(scheme, params, seeds, cap, tau, delta, phi, sigma, sqrt_g0, sigma2, gamma0,
                     floor, top, max_rec):
    reps = seeds.shape[0]
    rec_n = np.zeros((reps, max_rec), dtype=np.int64)
    rec_m = np.full((reps, max_rec), NEG_INF)
    counts = np.zeros(reps, dtype=np.int64)
    steps = np.zeros(reps, dtype=np.int64)
    overflow = np.zeros(reps, dtype=np.bool_)
    for r in nb.prange(reps):
        c, s, o = _one_path(scheme, params, np.int64(seeds[r]), cap, tau, delta, phi, sigma,
                            sqrt_g0, sigma2, gamma0, floor, top, rec_n[r], rec_m[r])
        counts[r] = c
        steps[r] = s
        overflow[r] = o
    return rec_n, rec_m, counts, steps, overflow


def scheme_params(config):
    """Float parameter vector for the kernels."""
    p = np.zeros(N_PARAMS)
    d = config.delta_star
    if d is not None:
        p[P_K] = math.log(d * d) / (1.0 - 1.0 / (d * d))
        p[P_CROSS] = 2.0 / (d + 1.0)
        p[P_LOGD] = math.log(d)
        p[P_HALFGAIN] = 0.5 * (1.0 - 1.0 / (d * d))
        p[P_GAIN] = 1.0 - 1.0 / (d * d)
        p[P_INV1PD] = 1.0 / (1.0 + d)
    if config.window is not None:
        p[P_WINDOW] = config.window
    if config.gsr_paper_half:
        p[P_HALF] = 1.0
    return p

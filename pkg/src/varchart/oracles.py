"""Brute-force reference evaluators of the chart statistics.

These evaluate the defining sums and maximizations literally, with dense
predictor coefficients for the whole path, and exist to check the
incremental recursions in :mod:`varchart.charts`.  Cost is cubic in the
path length, so keep paths short (a few hundred observations at most).
"""

from __future__ import annotations

import math

import numpy as np

from .charts import (
    ChartConfig,
    glr_delta_star,
    glr_objective,
    gsr_delta_tilde,
    gsr_objective,
    h_clamped,
    k_ref,
)
from .process import ProcessSpec, autocovariance, prediction_coefficients, stationary_variance

__all__ = [
    "cusum_iid_direct",
    "sprt_direct",
    "lr_direct",
    "sr_direct",
    "sr_iid_direct",
    "glr_direct",
    "gsprt_direct",
    "gsr_direct",
    "gsr_iid_direct",
    "direct_statistic",
]


def _prepare(path, process):
    x = np.asarray(path, dtype=float) - process.mu
    n = len(x)
    gamma = autocovariance(process, max(n - 1, 0))
    a, v = prediction_coefficients(gamma, n)
    return x, a, v


def _partial(a, x, j, i):
    """T_{j,i}: predictor terms of X_j that use X_i, ..., X_{j-1} (1-based)."""
    return float(np.dot(a[j - 1, i - 1:j - 1], x[i - 1:j - 1]))


def _residuals(x, a):
    return np.array([x[j - 1] - _partial(a, x, j, 1) for j in range(1, len(x) + 1)])


def cusum_iid_direct(path, config: ChartConfig, process: ProcessSpec):
    """max over 0 <= i <= n of sum_{j>i} ((X_j - mu)^2 / gamma_0 - K)."""
    x = np.asarray(path, dtype=float) - process.mu
    g0 = stationary_variance(process)
    incr = x * x / g0 - k_ref(config.delta_star)
    s = np.concatenate(([0.0], np.cumsum(incr)))
    return float(max(s[-1] - s[i] for i in range(len(s))))


def sprt_direct(path, config, process):
    """max over 0 <= i <= n of S_n - S_i for the residual sums S."""
    x, a, v = _prepare(path, process)
    e = _residuals(x, a)
    s = np.concatenate(([0.0], np.cumsum(e * e / v - k_ref(config.delta_star))))
    return float(max(s[-1] - s[i] for i in range(len(s))))


def lr_direct(path, config, process):
    """Maximum over tau of the exact log likelihood ratio, divided by 1 - 1/delta^2 and floored at 0."""
    x, a, v = _prepare(path, process)
    n = len(x)
    if n == 0:
        return 0.0
    d = config.delta_star
    w = 1.0 - 1.0 / d
    e = _residuals(x, a)
    best = 0.0
    for tau in range(1, n + 1):
        total = -(n - tau + 1) * math.log(d * d)
        for j in range(tau, n + 1):
            dj = x[j - 1] - _partial(a, x, j, tau)
            total += (2.0 * w * e[j - 1] * dj - w * w * dj * dj) / v[j - 1]
        best = max(best, total)
    return best / (1.0 - 1.0 / (d * d))


def _sr_exponents(x, a, v, d):
    n = len(x)
    w = 1.0 - 1.0 / d
    e = _residuals(x, a)
    out = np.empty(n)
    for i in range(1, n + 1):
        total = -(n - i + 1) * math.log(d)
        for j in range(i, n + 1):
            dj = x[j - 1] - _partial(a, x, j, i)
            total += (w * e[j - 1] * dj - 0.5 * w * w * dj * dj) / v[j - 1]
        out[i - 1] = total
    return out


def sr_direct(path, config, process):
    """log of the literal sum R_n = sum_i prod_{j>=i} (likelihood ratio); -inf when empty."""
    x, a, v = _prepare(path, process)
    if len(x) == 0:
        return -math.inf
    return math.log(float(np.sum(np.exp(_sr_exponents(x, a, v, config.delta_star)))))


def sr_iid_direct(path, config, process):
    x = np.asarray(path, dtype=float) - process.mu
    if len(x) == 0:
        return -math.inf
    n = len(x)
    v = np.full(n, stationary_variance(process))
    return math.log(float(np.sum(np.exp(_sr_exponents(x, np.zeros((n, n)), v, config.delta_star)))))


def _candidate_sums(x, a, v):
    """(S_dot_{n,i}, S_ddot_{n,i}) for i = 1..n."""
    n = len(x)
    e = _residuals(x, a)
    s_dot = np.zeros(n)
    s_ddot = np.zeros(n)
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            dj = x[j - 1] - _partial(a, x, j, i)
            s_dot[i - 1] += e[j - 1] * dj / v[j - 1]
            s_ddot[i - 1] += dj * dj / v[j - 1]
    return s_dot, s_ddot


def glr_direct(path, config, process):
    """2 max over i of the log likelihood ratio at its clamped maximizer."""
    x, a, v = _prepare(path, process)
    n = len(x)
    if n == 0:
        return 0.0
    s_dot, s_ddot = _candidate_sums(x, a, v)
    lo = 1 if config.window is None else max(1, n - config.window + 1)
    best = 0.0
    for i in range(lo, n + 1):
        m = n - i + 1
        dd = glr_delta_star(s_dot[i - 1], s_ddot[i - 1], m)
        best = max(best, glr_objective(dd, s_dot[i - 1], s_ddot[i - 1], m))
    return 2.0 * best


def gsprt_direct(path, config, process):
    """max over 0 <= i <= n of h_n(T_n/n) - h_i(T_i/i), with the i = 0 term 0."""
    x, a, v = _prepare(path, process)
    n = len(x)
    if n == 0:
        return 0.0
    e = _residuals(x, a)
    t = np.cumsum(e * e / v)
    h = [0.0] + [h_clamped(i, t[i - 1] / i) for i in range(1, n + 1)]
    return max(h[n] - h[i] for i in range(n + 1))


def gsr_direct(path, config, process):
    """2 R*_n at the clamped maximizer, with U sums formed candidate by candidate."""
    x, a, v = _prepare(path, process)
    n = len(x)
    if n == 0:
        return 0.0
    s_dot, s_ddot = _candidate_sums(x, a, v)
    u_dot, u_ddot = float(np.sum(s_dot)), float(np.sum(s_ddot))
    d = max(1.0, gsr_delta_tilde(u_dot, u_ddot, n))
    return gsr_objective(d, u_dot, u_ddot, n, config.gsr_paper_half)


def gsr_iid_direct(path, config, process):
    """max over delta >= 1 of the summed iid log likelihood ratios (times 2)."""
    x = np.asarray(path, dtype=float) - process.mu
    n = len(x)
    if n == 0:
        return 0.0
    g0 = stationary_variance(process)
    r = x * x / g0
    u = sum(j * r[j - 1] for j in range(1, n + 1))
    d = max(1.0, gsr_delta_tilde(u, u, n))
    return gsr_objective(d, u, u, n)


_DIRECT = {
    "cusum_iid": cusum_iid_direct,
    "lr": lr_direct,
    "sprt": sprt_direct,
    "sr_iid": sr_iid_direct,
    "sr": sr_direct,
    "glr": glr_direct,
    "gsprt": gsprt_direct,
    "gsr_iid": gsr_iid_direct,
    "gsr": gsr_direct,
}


def direct_statistic(path, config, process):
    """Brute-force statistic of ``config.scheme`` after the whole path."""
    return _DIRECT[config.scheme](path, config, process)

"""Incremental chart statistics for an increase of the process scale.

Every chart consumes one raw observation per call to ``update`` and returns
the current value of its statistic.  Alarm decisions live in
:mod:`varchart.runlength`; a chart signals at the first n whose statistic
strictly exceeds the limit c (log c for the Shiryaev-Roberts schemes).

Notation used throughout: e_j = X_j - X_hat_j is the one-step prediction
error, v_{j-1} its variance, r_j = e_j^2 / v_{j-1} and T_n = r_1 + ... + r_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, UnsupportedScheme
from .process import InnovationsState, LevinsonPredictor, ProcessSpec, stationary_variance

__all__ = [
    "SCHEMES",
    "REFERENCE_SCHEMES",
    "GENERALIZED_SCHEMES",
    "LOG_SCALE_SCHEMES",
    "ChartConfig",
    "k_ref",
    "h_clamped",
    "glr_delta_star",
    "glr_objective",
    "gsr_delta_tilde",
    "gsr_objective",
    "logaddexp",
    "CusumIidState",
    "LrState",
    "ResidualCusumState",
    "SrState",
    "GlrState",
    "GsprtState",
    "GsrState",
    "make_chart",
    "run_statistic",
    "update_cusum_iid",
    "update_lr",
    "update_sprt",
    "update_sr",
    "update_glr",
    "update_gsprt",
    "update_gsr",
]

REFERENCE_SCHEMES = ("cusum_iid", "lr", "sprt", "sr_iid", "sr")
GENERALIZED_SCHEMES = ("glr", "gsprt", "gsr_iid", "gsr")
SCHEMES = REFERENCE_SCHEMES + GENERALIZED_SCHEMES
LOG_SCALE_SCHEMES = ("sr_iid", "sr")

NEG_INF = -math.inf


@dataclass(frozen=True)
class ChartConfig:
    """Scheme name, reference value and (once calibrated) control limit.

    ``window`` bounds the candidate change points searched by ``glr``;
    ``gsr_paper_half`` selects the halved quadratic term in the ``gsr``
    statistic.
    """

    scheme: str
    delta_star: float | None = None
    limit: float | None = None
    window: int | None = None
    gsr_paper_half: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.scheme in REFERENCE_SCHEMES:
            if self.delta_star is None:
                raise ConfigError(f"scheme {self.scheme} requires delta_star")
            ds = float(self.delta_star)
            if not (ds > 1.0 and math.isfinite(ds)):
                raise ConfigError(f"delta_star must be > 1, got {self.delta_star}")
            object.__setattr__(self, "delta_star", ds)
        elif self.delta_star is not None:
            raise ConfigError(f"scheme {self.scheme} takes no delta_star")
        if self.limit is not None:
            c = float(self.limit)
            if not math.isfinite(c):
                raise ConfigError("limit must be finite")
            if self.scheme not in LOG_SCALE_SCHEMES and c < 0.0:
                raise ConfigError(f"limit must be >= 0 for {self.scheme}, got {c}")
            object.__setattr__(self, "limit", c)
        if self.window is not None:
            if self.scheme != "glr":
                raise ConfigError("window applies to glr only")
            if int(self.window) < 1:
                raise ConfigError("window must be >= 1")
            object.__setattr__(self, "window", int(self.window))
        if self.gsr_paper_half and self.scheme != "gsr":
            raise ConfigError("gsr_paper_half applies to gsr only")

    @property
    def log_scale(self):
        return self.scheme in LOG_SCALE_SCHEMES

    def with_limit(self, limit):
        return ChartConfig(self.scheme, self.delta_star, limit, self.window, self.gsr_paper_half)


def k_ref(delta: float) -> float:
    """K(delta) = log(delta^2) / (1 - 1/delta^2)."""
    if not delta > 1.0:
        raise DomainError(f"k_ref needs delta > 1, got {delta}")
    return math.log(delta * delta) / (1.0 - 1.0 / (delta * delta))


def h_clamped(n_weight, x):
    """n (x - 1 - log x) / 2 for x >= 1, zero below."""
    if x < 0.0:
        raise DomainError(f"h_clamped needs x >= 0, got {x}")
    if x < 1.0:
        return 0.0
    return n_weight * (x - 1.0 - math.log(x)) / 2.0


def glr_delta_star(s_dot, s_ddot, m):
    """Maximizer over delta >= 1 of the change-at-tau log likelihood ratio."""
    b = s_dot - s_ddot
    d = (b + math.sqrt(b * b + 4.0 * m * s_ddot)) / (2.0 * m)
    return d if d > 1.0 else 1.0


def glr_objective(delta, s_dot, s_ddot, m):
    """Log likelihood ratio of a scale change by ``delta`` over m observations."""
    w = 1.0 - 1.0 / delta
    return -m * math.log(delta) + w * s_dot - 0.5 * w * w * s_ddot


def gsr_delta_tilde(u_dot, u_ddot, n):
    nn = n * (n + 1.0)
    b = u_dot - u_ddot
    return (b + math.sqrt(b * b + 2.0 * nn * u_ddot)) / nn


def gsr_objective(delta, u_dot, u_ddot, n, paper_half=False):
    """2 R*_n(delta), or the variant with a halved quadratic term."""
    w = 1.0 - 1.0 / delta
    quad = w * w * u_ddot
    if paper_half:
        quad = 0.5 * quad
    return -(n * (n + 1.0) / 2.0) * math.log(delta * delta) + 2.0 * w * u_dot - quad


def logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


class _Chart:
    scheme = ""

    def __init__(self, process: ProcessSpec):
        self.process = process
        self.mu = process.mu
        self.n = 0
        self.statistic = 0.0

    def update(self, x):
        raise NotImplementedError

    def run(self, path):
        """Statistic after each observation of ``path``."""
        return np.array([self.update(x) for x in path])


class _Predicting(_Chart):
    """Chart fed by one-step predictions of the in-control process."""

    def __init__(self, process):
        super().__init__(process)
        self.innovations = InnovationsState(process)
        self._prev = None

    def _predict(self, y):
        x_hat, v = self.innovations.step(self._prev)
        self._prev = y
        return x_hat, v


class CusumIidState(_Chart):
    """CUSUM of squared standardized observations, ignoring dependence."""

    scheme = "cusum_iid"

    def __init__(self, process, delta_star):
        super().__init__(process)
        self.k_ref = k_ref(delta_star)
        self.gamma0 = stationary_variance(process)
        self.s_plus = 0.0

    def update(self, x):
        y = x - self.mu
        self.n += 1
        self.s_plus = max(0.0, self.s_plus + (y * y / self.gamma0 - self.k_ref))
        self.statistic = self.s_plus
        return self.statistic


class LrState(_Predicting):
    """Likelihood ratio CUSUM with exact Gaussian likelihoods.

    The reported statistic is max over candidate change points divided by
    the positive constant 1 - 1/delta^2.  For AR(2) the candidate tau gets a
    correction term once X_{tau+1} is known; until then it is carried as a
    pending candidate.
    """

    scheme = "lr"

    def __init__(self, process, delta_star):
        if process.kind not in ("AR1", "AR2"):
            raise UnsupportedScheme(f"lr supports AR(1) and AR(2) processes, not {process.kind}")
        super().__init__(process)
        d = delta_star
        self.delta = d
        self.k_ref = k_ref(d)
        self.c_cross = 2.0 / (d + 1.0)
        self.c_head = 2.0 * d / (1.0 + d)
        self.c_quad = (d - 1.0) / (d + 1.0)
        self.ar2 = process.kind == "AR2"
        self.a_plus = 0.0
        self.b_plus = NEG_INF
        self._pending = NEG_INF
        self._hist = []

    def update(self, x):
        y = x - self.mu
        x_hat, v = self._predict(y)
        self.n += 1
        e = y - x_hat
        inc = e * e / v - self.k_ref
        if not self.ar2:
            lead = -x_hat * x_hat / v + self.c_cross * y * x_hat / v
            self.a_plus = max(lead, self.a_plus) + inc
            self.statistic = max(0.0, self.a_plus)
            return self.statistic
        # candidate n-1 becomes complete now that X_n is known
        phi2 = self.process.phi[1]
        completed = self._pending
        if self.n >= 3:
            x_back = self._hist[-2]  # X_{n-2}
            completed += (self.c_cross * phi2 * x_back * e - self.c_quad * phi2 * phi2 * x_back * x_back) / v
        self.b_plus = max(completed, self.b_plus) + inc
        self._pending = (y * y - self.c_head * y * x_hat) / v - self.k_ref
        self._hist = (self._hist + [y])[-2:]
        self.statistic = max(0.0, self.b_plus, self._pending)
        return self.statistic


class ResidualCusumState(_Predicting):
    """CUSUM applied to squared standardized prediction errors."""

    scheme = "sprt"

    def __init__(self, process, delta_star):
        super().__init__(process)
        self.k_ref = k_ref(delta_star)
        self.w = 0.0

    def update(self, x):
        y = x - self.mu
        x_hat, v = self._predict(y)
        self.n += 1
        e = y - x_hat
        self.w = max(0.0, self.w + (e * e / v - self.k_ref))
        self.statistic = self.w
        return self.statistic


class SrState(_Chart):
    """Shiryaev-Roberts statistic kept as log R_n.

    ``variant`` is ``iid`` (observations standardized by gamma_0 only),
    ``ar1`` (O(1) recursion) or ``generic`` (O(n) per step for any ARMA
    covariance).
    """

    def __init__(self, process, delta_star, variant):
        super().__init__(process)
        self.variant = variant
        self.scheme = "sr_iid" if variant == "iid" else "sr"
        d = delta_star
        self.log_delta = math.log(d)
        self.half_gain = 0.5 * (1.0 - 1.0 / (d * d))
        self.gain = 1.0 - 1.0 / (d * d)
        self.inv_1pd = 1.0 / (1.0 + d)
        self.w = 1.0 - 1.0 / d
        self.log_r = NEG_INF
        self.statistic = NEG_INF
        if variant == "iid":
            self.gamma0 = stationary_variance(process)
        elif variant == "ar1":
            if process.kind != "AR1":
                raise UnsupportedScheme("ar1 variant needs an AR(1) process")
            self.innovations = InnovationsState(process)
            self._prev = None
        else:
            self._lev = LevinsonPredictor(process)
            self._xs = []
            self._terms = np.zeros(0)

    def update(self, x):
        y = x - self.mu
        self.n += 1
        if self.variant == "iid":
            self.log_r = logaddexp(self.log_r, 0.0) - self.log_delta + self.half_gain * (y * y / self.gamma0)
        elif self.variant == "ar1":
            x_hat, v = self.innovations.step(self._prev)
            self._prev = y
            e = y - x_hat
            lead = self.gain * (y * x_hat * self.inv_1pd / v - x_hat * x_hat / (2.0 * v))
            self.log_r = logaddexp(self.log_r, lead) - self.log_delta + self.half_gain * (e * e / v)
        else:
            wts, v = self._lev.advance()
            d = _suffix_residuals(wts, self._xs, y)
            e = d[0]
            self._terms = np.append(self._terms, 0.0)
            self._terms += (self.w * e * d - 0.5 * self.w * self.w * d * d) / v - self.log_delta
            self._xs.append(y)
            top = float(np.max(self._terms))
            self.log_r = top + math.log(float(np.sum(np.exp(self._terms - top))))
        self.statistic = self.log_r
        return self.statistic


def _suffix_residuals(wts, xs, y):
    """X_n - T_{n,i} for i = 1..n, where T_{n,i} sums predictor terms from X_i on."""
    n = len(xs) + 1
    out = np.empty(n)
    if n == 1:
        out[0] = y
        return out
    prod = np.asarray(wts) * np.asarray(xs)
    tails = np.cumsum(prod[::-1])[::-1]
    out[:-1] = y - tails
    out[-1] = y
    return out


class GlrState(_Chart):
    """Generalized likelihood ratio chart, maximized over delta >= 1.

    The statistic is 2 max_i l_i where l_i is the log likelihood ratio of a
    change at i evaluated at its clamped maximizer.  Candidates are limited
    to the most recent ``window`` indices when a window is given.
    """

    scheme = "glr"

    def __init__(self, process, window=None, variant="ar1"):
        super().__init__(process)
        self.window = window
        self.variant = variant
        if variant == "ar1":
            if process.kind != "AR1":
                raise UnsupportedScheme("ar1 variant needs an AR(1) process")
            self.innovations = InnovationsState(process)
            self._prev = None
            self.t_n = 0.0
            self.t_hist = []   # T_i
            self.q_hist = []   # X_i^2 / v_{i-1}
            self.p_hist = []   # X_i X_hat_i / v_{i-1}
        else:
            self._lev = LevinsonPredictor(process)
            self._xs = []
            self._s_dot = np.zeros(0)
            self._s_ddot = np.zeros(0)

    def update(self, x):
        y = x - self.mu
        self.n += 1
        n = self.n
        if self.variant == "ar1":
            x_hat, v = self.innovations.step(self._prev)
            self._prev = y
            e = y - x_hat
            self.t_n += e * e / v
            self.t_hist.append(self.t_n)
            self.q_hist.append(y * y / v)
            self.p_hist.append(y * x_hat / v)
            lo = 1 if self.window is None else max(1, n - self.window + 1)
            best = 0.0
            for i in range(lo, n + 1):
                s_ddot = self.t_n - self.t_hist[i - 1] + self.q_hist[i - 1]
                s_dot = s_ddot - self.p_hist[i - 1]
                m = n - i + 1
                d = glr_delta_star(s_dot, s_ddot, m)
                if d > 1.0:
                    best = max(best, glr_objective(d, s_dot, s_ddot, m))
        else:
            wts, v = self._lev.advance()
            d_res = _suffix_residuals(wts, self._xs, y)
            e = d_res[0]
            self._xs.append(y)
            self._s_dot = np.append(self._s_dot, 0.0) + e * d_res / v
            self._s_ddot = np.append(self._s_ddot, 0.0) + d_res * d_res / v
            lo = 1 if self.window is None else max(1, n - self.window + 1)
            best = 0.0
            for i in range(lo, n + 1):
                m = n - i + 1
                s_dot, s_ddot = float(self._s_dot[i - 1]), float(self._s_ddot[i - 1])
                d = glr_delta_star(s_dot, s_ddot, m)
                if d > 1.0:
                    best = max(best, glr_objective(d, s_dot, s_ddot, m))
        self.statistic = 2.0 * best
        return self.statistic


class GsprtState(_Predicting):
    """Generalized SPRT: h_n(T_n / n) minus the running minimum of h_i(T_i / i)."""

    scheme = "gsprt"

    def __init__(self, process):
        super().__init__(process)
        self.t_n = 0.0
        self.running_min = 0.0  # the i = 0 term

    def update(self, x):
        y = x - self.mu
        x_hat, v = self._predict(y)
        self.n += 1
        e = y - x_hat
        self.t_n += e * e / v
        h = h_clamped(self.n, self.t_n / self.n)
        self.running_min = min(self.running_min, h)
        self.statistic = h - self.running_min
        return self.statistic


class GsrState(_Chart):
    """Generalized Shiryaev-Roberts chart built on the geometric mean of the
    likelihood ratios over all change points.

    ``iid`` uses U_n = sum i (X_i - mu)^2 / gamma_0; ``ar1`` keeps
    (T_n, sum T_k, p_n, q_n); ``generic`` keeps per-candidate sums for any
    ARMA covariance.
    """

    def __init__(self, process, variant, paper_half=False):
        super().__init__(process)
        self.variant = variant
        self.scheme = "gsr_iid" if variant == "iid" else "gsr"
        self.paper_half = paper_half
        if variant == "iid":
            self.gamma0 = stationary_variance(process)
            self.u_n = 0.0
        elif variant == "ar1":
            if process.kind != "AR1":
                raise UnsupportedScheme("ar1 variant needs an AR(1) process")
            self.innovations = InnovationsState(process)
            self._prev = None
            self.t_n = 0.0
            self.cum_t = 0.0
            self.p_n = 0.0
            self.q_n = 0.0
        else:
            self._lev = LevinsonPredictor(process)
            self._xs = []
            self.u_dot = 0.0
            self.u_ddot = 0.0
            self._s_dot = np.zeros(0)
            self._s_ddot = np.zeros(0)

    def update(self, x):
        y = x - self.mu
        self.n += 1
        n = self.n
        if self.variant == "iid":
            self.u_n += n * (y * y / self.gamma0)
            nn = n * (n + 1.0)
            self.statistic = h_clamped(nn, max(1.0, 2.0 * self.u_n / nn))
            return self.statistic
        if self.variant == "ar1":
            x_hat, v = self.innovations.step(self._prev)
            self._prev = y
            e = y - x_hat
            self.t_n += e * e / v
            self.cum_t += self.t_n
            self.p_n += e * y / v
            self.q_n += y * y / v
            base = n * self.t_n - self.cum_t
            u_dot = base + self.p_n
            u_ddot = base + self.q_n
        else:
            wts, v = self._lev.advance()
            d_res = _suffix_residuals(wts, self._xs, y)
            e = d_res[0]
            self._xs.append(y)
            self._s_dot = np.append(self._s_dot, 0.0) + e * d_res / v
            self._s_ddot = np.append(self._s_ddot, 0.0) + d_res * d_res / v
            u_dot = float(np.sum(self._s_dot))
            u_ddot = float(np.sum(self._s_ddot))
        self.u_dot, self.u_ddot = u_dot, u_ddot
        d = gsr_delta_tilde(u_dot, u_ddot, n)
        self.statistic = gsr_objective(d, u_dot, u_ddot, n, self.paper_half) if d > 1.0 else 0.0
        return self.statistic


def make_chart(config: ChartConfig, process: ProcessSpec, variant=None):
    """Fresh chart state for ``config`` on ``process``.

    ``variant`` forces the implementation of sr/glr/gsr (``ar1`` or
    ``generic``); by default AR(1) processes get the O(1) recursions.
    """
    s = config.scheme
    if variant is None:
        variant = "ar1" if process.kind == "AR1" else "generic"
    if s == "cusum_iid":
        return CusumIidState(process, config.delta_star)
    if s == "lr":
        return LrState(process, config.delta_star)
    if s == "sprt":
        return ResidualCusumState(process, config.delta_star)
    if s == "sr_iid":
        return SrState(process, config.delta_star, "iid")
    if s == "sr":
        return SrState(process, config.delta_star, variant)
    if s == "glr":
        return GlrState(process, config.window, variant)
    if s == "gsprt":
        return GsprtState(process)
    if s == "gsr_iid":
        return GsrState(process, "iid")
    return GsrState(process, variant, config.gsr_paper_half)


def run_statistic(config, process, path, variant=None):
    """Statistic sequence of a fresh chart over ``path``."""
    return make_chart(config, process, variant).run(path)


def update_cusum_iid(state, x):
    return state.update(x)


update_lr = update_sprt = update_sr = update_glr = update_gsprt = update_gsr = update_cusum_iid

"""Gaussian target processes, one-step predictors and path simulation.

The in-control process {Y_t} is a causal ARMA(p, q) process.  Observations
follow a scale change model: X_t = Y_t before the change point tau and
X_t = mu + delta * (Y_t - mu) from tau on.

Everything here works with the mean removed; ``mu`` is only added back when
an observation leaves :class:`PathGenerator`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityError, DomainError, NumericalError

__all__ = [
    "ProcessSpec",
    "ChangeSpec",
    "InnovationsState",
    "PathGenerator",
    "causality_check",
    "stationary_variance",
    "autocovariance",
    "prediction_coefficients",
    "LevinsonPredictor",
    "innovations_step",
    "next_observation",
    "rep_seeds",
]

_PSI_TAIL = 1e-12


@dataclass(frozen=True)
class ProcessSpec:
    """In-control ARMA(p, q) target process.

    ``phi`` holds the AR coefficients, ``theta`` the MA coefficients.  A spec
    with no MA part and at most one AR coefficient is an AR(1) process (white
    noise when ``phi`` is empty or zero).
    """

    phi: tuple = (0.0,)
    theta: tuple = ()
    sigma2: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        phi = tuple(float(a) for a in np.atleast_1d(self.phi)) if self.phi is not None else ()
        theta = tuple(float(b) for b in np.atleast_1d(self.theta)) if self.theta is not None else ()
        if not phi and not theta:
            phi = (0.0,)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "mu", float(self.mu))
        if not all(math.isfinite(a) for a in phi + theta):
            raise DomainError("process coefficients must be finite")
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not math.isfinite(self.mu):
            raise DomainError("mu must be finite")

    @classmethod
    def ar1(cls, phi, sigma2=1.0, mu=0.0):
        return cls(phi=(phi,), sigma2=sigma2, mu=mu)

    @property
    def p(self):
        return len(self.phi)

    @property
    def q(self):
        return len(self.theta)

    @property
    def kind(self):
        if self.q == 0 and self.p <= 1:
            return "AR1"
        if self.q == 0 and self.p == 2:
            return "AR2"
        return f"ARMA({self.p},{self.q})"

    @property
    def phi1(self):
        """AR(1) coefficient (0 for white noise)."""
        return self.phi[0] if self.phi else 0.0

    def fingerprint(self):
        """Stable text key identifying the process (exact float repr)."""
        ar = ",".join(repr(a) for a in self.phi)
        ma = ",".join(repr(b) for b in self.theta)
        return f"{self.kind};phi=[{ar}];theta=[{ma}];sigma2={self.sigma2!r};mu={self.mu!r}"


@dataclass(frozen=True)
class ChangeSpec:
    """Change point ``tau`` (``math.inf`` for none) and scale multiplier ``delta``."""

    tau: float = math.inf
    delta: float = 1.0

    def __post_init__(self):
        tau = self.tau
        if tau is None:
            tau = math.inf
        if tau != math.inf:
            if float(tau) != int(tau):
                raise DomainError(f"tau must be an integer or inf, got {tau}")
            tau = int(tau)
        if tau < 1:
            raise DomainError(f"tau must be >= 1, got {tau}")
        delta = float(self.delta)
        if not (delta >= 1.0 and math.isfinite(delta)):
            raise DomainError(f"delta must be >= 1, got {self.delta}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "delta", delta)

    @property
    def in_control(self):
        return self.delta == 1.0 or self.tau == math.inf

    @property
    def tau_int(self):
        """Change point as an integer usable in kernels (0 encodes no change)."""
        return 0 if self.in_control else int(self.tau)


def causality_check(spec: ProcessSpec) -> bool:
    """True iff all roots of 1 - sum phi_i z^i lie strictly outside the unit circle."""
    phi = spec.phi
    if len(phi) == 0:
        return True
    if len(phi) == 1:
        return abs(phi[0]) < 1.0
    if len(phi) == 2:
        a, b = phi
        return a + b < 1.0 and b - a < 1.0 and abs(b) < 1.0
    coeffs = np.concatenate(([1.0], -np.asarray(phi)))
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs = coeffs[:-1]
    if len(coeffs) == 1:
        return True
    roots = np.polynomial.polynomial.polyroots(coeffs)
    return bool(np.all(np.abs(roots) > 1.0))


def _require_causal(spec):
    if not causality_check(spec):
        raise CausalityError(f"process {spec.kind} with phi={spec.phi} is not causal")


def _psi_weights(spec, extra=0):
    """MA(infinity) weights truncated once the tail mass is negligible."""
    p, q = spec.p, spec.q
    phi, theta = spec.phi, spec.theta
    window = 4 * max(p, q + 1) + 16
    psi = [1.0]
    total = 1.0
    j = 0
    while True:
        j += 1
        val = theta[j - 1] if j <= q else 0.0
        for i in range(1, min(j, p) + 1):
            val += phi[i - 1] * psi[j - i]
        psi.append(val)
        total += val * val
        if j > q + p + window:
            recent = sum(v * v for v in psi[-window:])
            if recent <= _PSI_TAIL * total:
                break
        if j > 5_000_000:
            break
    psi.extend([0.0] * extra)
    return np.asarray(psi)


def autocovariance(spec: ProcessSpec, max_lag: int) -> np.ndarray:
    """Autocovariances gamma(0..max_lag) of the stationary process."""
    _require_causal(spec)
    max_lag = int(max_lag)
    out = np.empty(max_lag + 1)
    kind = spec.kind
    if kind == "AR1":
        g0 = stationary_variance(spec)
        out[0] = g0
        for h in range(1, max_lag + 1):
            out[h] = spec.phi1 * out[h - 1]
        return out
    if kind == "AR2":
        a, b = spec.phi
        out[0] = stationary_variance(spec)
        if max_lag >= 1:
            out[1] = a / (1.0 - b) * out[0]
        for h in range(2, max_lag + 1):
            out[h] = a * out[h - 1] + b * out[h - 2]
        return out
    psi = _psi_weights(spec, extra=max_lag)
    n = len(psi) - max_lag
    for h in range(max_lag + 1):
        out[h] = spec.sigma2 * float(np.dot(psi[:n], psi[h:h + n]))
    return out


def stationary_variance(spec: ProcessSpec) -> float:
    """Variance gamma_0 of the stationary solution."""
    _require_causal(spec)
    kind = spec.kind
    if kind == "AR1":
        return spec.sigma2 / (1.0 - spec.phi1 ** 2)
    if kind == "AR2":
        a, b = spec.phi
        return spec.sigma2 * (1.0 - b) / ((1.0 + b) * ((1.0 - b) ** 2 - a ** 2))
    return float(autocovariance(spec, 0)[0])


def prediction_coefficients(gamma, n):
    """Dense one-step predictor coefficients by Durbin-Levinson.

    Returns ``(a, v)`` where ``a[j-1, k-1]`` is the weight of X_k in the best
    linear predictor of X_j (k < j) and ``v[j-1]`` is the prediction error
    variance v_{j-1}, for j = 1..n.
    """
    gamma = np.asarray(gamma, dtype=float)
    if len(gamma) < n:
        raise DomainError("need autocovariances up to lag n-1")
    a = np.zeros((n, n))
    v = np.empty(n)
    if n == 0:
        return a, v
    v[0] = gamma[0]
    row = np.zeros(0)
    for m in range(1, n):
        # row holds phi_{m-1,1..m-1}; extend to phi_{m,1..m}
        acc = gamma[m] - float(np.dot(row, gamma[m - 1:0:-1])) if m > 1 else gamma[1]
        k = acc / v[m - 1]
        new = np.empty(m)
        new[:m - 1] = row - k * row[::-1]
        new[m - 1] = k
        row = new
        v[m] = v[m - 1] * (1.0 - k * k)
        if v[m] <= 0.0:
            raise NumericalError("prediction error variance collapsed")
        # predictor of X_{m+1}: sum_k phi_{m,k} X_{m+1-k}
        a[m, :m] = row[::-1]
    return a, v


class LevinsonPredictor:
    """Streaming Durbin-Levinson rows for a fixed stationary covariance.

    ``advance()`` returns ``(w, v)`` for the next index t, where ``w[k-1]`` is
    the weight of X_k in the predictor of X_t and ``v`` is v_{t-1}.
    """

    def __init__(self, spec: ProcessSpec):
        self.spec = spec
        self._gamma = autocovariance(spec, 64)
        self._row = np.zeros(0)
        self._v = float(self._gamma[0])
        self.t = 0

    def _gamma_upto(self, lag):
        if lag >= len(self._gamma):
            size = len(self._gamma)
            while size <= lag:
                size *= 2
            self._gamma = autocovariance(self.spec, size)
        return self._gamma

    def advance(self):
        self.t += 1
        m = self.t - 1
        if m == 0:
            return self._row[::-1].copy(), self._v
        g = self._gamma_upto(m)
        row = self._row
        acc = g[m] - float(np.dot(row, g[m - 1:0:-1])) if m > 1 else g[1]
        k = acc / self._v
        new = np.empty(m)
        new[:m - 1] = row - k * row[::-1]
        new[m - 1] = k
        self._row = new
        self._v = self._v * (1.0 - k * k)
        if self._v <= 0.0:
            raise NumericalError("prediction error variance collapsed")
        return new[::-1].copy(), self._v


@dataclass
class InnovationsState:
    """One-step predictor X_hat_t and its error variance v_{t-1}.

    AR(1) and AR(2) use closed forms; other ARMA specs (or ``generic=True``)
    run the innovations recursion on the transformed ARMA covariance, which
    keeps only max(p, q + 1) coefficient rows alive.
    """

    spec: ProcessSpec
    generic: bool = False
    t: int = 0
    x_hat: float = 0.0
    msev: float = 0.0
    history: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        _require_causal(self.spec)
        spec = self.spec
        self._gamma0 = stationary_variance(spec)
        if self.generic or spec.kind not in ("AR1", "AR2"):
            self._mode = "generic"
            self._m = max(spec.p, spec.q)
            self._gamma = autocovariance(spec, max(self._m, 1))
            self._rows = {}
            self._vs = {}
            self.history = deque(maxlen=max(spec.p, 1))
            self._innov = deque(maxlen=max(self._m, spec.q, 1))
        else:
            self._mode = spec.kind
            self.history = deque(maxlen=spec.p if spec.p else 1)
            if spec.kind == "AR2":
                a, b = spec.phi
                self._v1 = self._gamma0 * (1.0 - a ** 2 / (1.0 - b) ** 2)

    def step(self, x_prev=None):
        """Advance to the next index and return ``(x_hat, msev)``.

        ``x_prev`` is the previous (mean-removed) observation; it is ignored
        on the first call.
        """
        if self.t > 0:
            if x_prev is None:
                raise DomainError("x_prev required after the first step")
            x_prev = float(x_prev)
            if self._mode == "generic":
                self._innov.appendleft(x_prev - self.x_hat)
            self.history.appendleft(x_prev)
        self.t += 1
        if self._mode == "AR1":
            if self.t == 1:
                x_hat, v = 0.0, self._gamma0
            else:
                x_hat, v = self.spec.phi1 * self.history[0], self.spec.sigma2
        elif self._mode == "AR2":
            a, b = self.spec.phi
            if self.t == 1:
                x_hat, v = 0.0, self._gamma0
            elif self.t == 2:
                x_hat, v = a / (1.0 - b) * self.history[0], self._v1
            else:
                x_hat = a * self.history[0] + b * self.history[1]
                v = self.spec.sigma2
        else:
            x_hat, v = self._generic_step()
        if not v > 0.0:
            raise NumericalError(f"non-positive prediction variance at t={self.t}")
        self.x_hat, self.msev = x_hat, v
        return x_hat, v

    # innovations recursion on W_t (Brockwell and Davis, ARMA form)
    def _kappa(self, i, j):
        m, spec = self._m, self.spec
        s2 = spec.sigma2
        lo, hi = min(i, j), max(i, j)
        h = hi - lo
        if hi <= m:
            return self._gamma[h] / s2
        if lo <= m < hi <= 2 * m:
            acc = self._gamma[h]
            for r in range(1, spec.p + 1):
                acc -= spec.phi[r - 1] * self._gamma[abs(r - h)]
            return acc / s2
        if lo > m:
            th = (1.0,) + spec.theta
            return sum(th[r] * th[r + h] for r in range(0, len(th) - h)) if h < len(th) else 0.0
        return 0.0

    def _theta(self, n, j):
        row = self._rows.get(n)
        if row is None or j > len(row):
            return 0.0
        return row[j - 1]

    def _generic_step(self):
        spec, m = self.spec, self._m
        n = self.t - 1
        if n == 0:
            self._vs[0] = self._kappa(1, 1)
            return 0.0, spec.sigma2 * self._vs[0]
        k_lo = max(0, n - spec.q) if n >= m else 0
        vals = {}  # j -> theta_{n,j}
        for k in range(k_lo, n):
            acc = self._kappa(n + 1, k + 1)
            for j in range(k_lo, k):
                acc -= self._theta(k, k - j) * vals[n - j] * self._vs[j]
            vals[n - k] = acc / self._vs[k]
        width = max(vals) if vals else 0
        row = [vals.get(i, 0.0) for i in range(1, width + 1)]
        self._rows[n] = row
        vn = self._kappa(n + 1, n + 1)
        for j in range(k_lo, n):
            vn -= vals[n - j] ** 2 * self._vs[j]
        self._vs[n] = vn
        keep = max(m, spec.q) + 1
        for old in [key for key in self._rows if key < n - keep]:
            del self._rows[old]
        for old in [key for key in self._vs if key < n - keep]:
            del self._vs[old]
        if n < m:
            x_hat = sum(vals.get(j, 0.0) * self._innov[j - 1] for j in range(1, n + 1))
        else:
            x_hat = sum(spec.phi[i - 1] * self.history[i - 1] for i in range(1, spec.p + 1))
            x_hat += sum(vals.get(j, 0.0) * self._innov[j - 1] for j in range(1, spec.q + 1))
        return x_hat, spec.sigma2 * vn


def innovations_step(state: InnovationsState, x_prev=None):
    """Functional alias of :meth:`InnovationsState.step`."""
    return state.step(x_prev)


_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def rep_seeds(master_seed, reps, start=0) -> np.ndarray:
    """32-bit Mersenne Twister seeds for replications ``start..start+reps-1``.

    The map rep -> seed is a bijection for a fixed master seed, so distinct
    replications never share a stream.
    """
    key = _splitmix64(int(master_seed) & _MASK64)
    key = np.uint32((key ^ (key >> 32)) & _MASK32)
    h = np.arange(start, start + reps, dtype=np.uint64).astype(np.uint32) ^ key
    # murmur3 finalizer
    h ^= h >> np.uint32(16)
    h *= np.uint32(0x85EBCA6B)
    h ^= h >> np.uint32(13)
    h *= np.uint32(0xC2B2AE35)
    h ^= h >> np.uint32(16)
    return h


class PathGenerator:
    """Observed path X_1, X_2, ... of one replication.

    Y_1 is drawn from the stationary law and later values through the
    innovations representation Y_t = Y_hat_t + sqrt(v_{t-1}) Z_t, so the
    joint law is exact from the first observation.
    """

    def __init__(self, spec: ProcessSpec, change: ChangeSpec = None, seed=0, rep=0):
        self.spec = spec
        self.change = change if change is not None else ChangeSpec()
        self.seed = seed
        self.rep = rep
        self.rng = np.random.RandomState(int(rep_seeds(seed, 1, start=rep)[0]))
        self._innov = InnovationsState(spec)
        self._y = None
        self.t = 0

    def next_observation(self) -> float:
        x_hat, v = self._innov.step(self._y)
        z = self.rng.standard_normal()
        y = x_hat + math.sqrt(v) * z
        self._y = y
        self.t += 1
        if self.t >= self.change.tau:
            y = self.change.delta * y
        return self.spec.mu + y

    def take(self, n) -> np.ndarray:
        return np.array([self.next_observation() for _ in range(n)])


def next_observation(gen: PathGenerator) -> float:
    return gen.next_observation()

"""Parameters, scaling formulas, and coefficient functions of the network.

The model is a bank of ``d`` infinite-server stations fed by ``d``
dedicated Poisson streams plus one load-balanced stream.  Everything
here is a pure function of its arguments: routing, the pairing variance
factor, the finite-scale drift/variance densities, their limits, and the
distance to the set where those limits are discontinuous.

Station indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ModelParams",
    "DerivedRates",
    "route",
    "delta",
    "pair_factor",
    "limit_drift",
    "limit_diffusion",
    "prelimit_coeffs",
    "distance_to_G",
]


def _as_vector(v, d: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (d,):
        raise ConfigurationError(f"{name} must have shape ({d},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Static description of the network at scale ``n``.

    d      -- number of stations (>= 1)
    alpha  -- routing costs, one positive weight per station
    mu0    -- free-stream intensity coefficient (>= 0)
    mu     -- dedicated-stream intensity coefficients (>= 0 each)
    nu     -- threshold offsets on the diffusion scale (any reals)
    n      -- scale parameter (positive integer)
    """

    d: int
    alpha: np.ndarray
    mu0: float
    mu: np.ndarray
    nu: np.ndarray
    n: int

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise ConfigurationError(f"d must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "alpha", _as_vector(self.alpha, self.d, "alpha"))
        object.__setattr__(self, "mu", _as_vector(self.mu, self.d, "mu"))
        object.__setattr__(self, "nu", _as_vector(self.nu, self.d, "nu"))
        if not np.all(self.alpha > 0):
            raise ConfigurationError("every alpha[i] must be > 0")
        if self.mu0 < 0:
            raise ConfigurationError("mu0 must be >= 0")
        if not np.all(self.mu >= 0):
            raise ConfigurationError("every mu[i] must be >= 0")
        if not np.all(np.isfinite(self.nu)):
            raise ConfigurationError("every nu[i] must be finite")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n!r}")

    def with_n(self, n: int) -> "ModelParams":
        """Same model at a different scale (used by convergence sweeps)."""
        return ModelParams(self.d, self.alpha, self.mu0, self.mu, self.nu, n)


@dataclass(frozen=True)
class DerivedRates:
    """Arrival rates and integer thresholds induced by `ModelParams`.

    lambda0    = mu0 * sqrt(n)
    lambda[i]  = n / alpha[i] + mu[i] * sqrt(n)
    threshold  = round(n / alpha[i] + nu[i] * sqrt(n)), clamped at 1
    centering  = n / alpha[i]
    """

    lambda0: float
    lam: np.ndarray
    thresholds: np.ndarray
    centering: np.ndarray

    @classmethod
    def from_params(cls, p: ModelParams) -> "DerivedRates":
        sqrt_n = np.sqrt(p.n)
        centering = p.n / p.alpha
        lam = centering + p.mu * sqrt_n
        # thresholds must be integers for the event dynamics; the O(1)
        # rounding vanishes under the sqrt(n) scaling
        raw = centering + p.nu * sqrt_n
        thresholds = np.maximum(np.floor(raw + 0.5), 1.0).astype(np.int64)
        return cls(float(p.mu0 * sqrt_n), lam, thresholds, centering)

    @property
    def total_arrival_rate(self) -> float:
        return self.lambda0 + float(np.sum(self.lam))


def route(x, alpha) -> int:
    """Station receiving a balanced arrival: first argmin of ``alpha[i] * x[i]``.

    Ties break to the smallest index.  Adding the same multiple of
    ``1/alpha`` to every coordinate of ``x`` does not change the answer,
    which is why routing can be evaluated on raw or centered queue
    lengths interchangeably.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if x.shape != alpha.shape or x.ndim != 1 or x.size < 1:
        raise ConfigurationError(
            f"route needs two equal-length vectors, got {x.shape} and {alpha.shape}"
        )
    return int(np.argmin(alpha * x))


def delta(x, alpha) -> np.ndarray:
    """Routing indicator vector: 1 at ``route(x, alpha)``, 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[0])
    out[route(x, alpha)] = 1.0
    return out


def delta_rows(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Row-wise routing indicators for a batch of states, shape ``(m, d)``."""
    w = np.atleast_2d(x) * alpha
    idx = np.argmin(w, axis=1)
    out = np.zeros(w.shape)
    out[np.arange(w.shape[0]), idx] = 1.0
    return out


def pair_factor(q) -> np.ndarray | float:
    """Variance inflation factor of the paired service discipline.

    ``f(q) = (3*floor(q/2) + floor((q+1)/2)) / q`` for q > 0, and 0 for
    q <= 0.  Equals 2 at even positive integers, 2 - 1/q at odd ones,
    and stays in [0, 2] for all real q.
    """
    q_arr = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = (3.0 * np.floor(q_arr / 2.0) + np.floor((q_arr + 1.0) / 2.0)) / q_arr
    out = np.where(q_arr > 0, val, 0.0)
    if np.isscalar(q) or q_arr.ndim == 0:
        return float(out)
    return out


def limit_drift(x, params: ModelParams) -> np.ndarray:
    """Limit drift ``b_i(x) = mu0 * delta_i(x) + mu_i - x_i``.

    Accepts a single state ``(d,)`` or a batch ``(m, d)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return params.mu0 * delta(x, params.alpha) + params.mu - x
    return params.mu0 * delta_rows(x, params.alpha) + params.mu - x


def limit_diffusion(x, params: ModelParams) -> np.ndarray:
    """Diagonal limit noise intensities ``sigma_i(x) = sqrt((2 + 1{x_i >= nu_i}) / alpha_i)``.

    The square is the limit quadratic-variation density
    ``a_ii(x) = (1 + 1{x_i < nu_i} + 2 * 1{x_i >= nu_i}) / alpha_i``; the
    indicator is closed at the threshold.
    """
    x = np.asarray(x, dtype=float)
    return np.sqrt((2.0 + (x >= params.nu)) / params.alpha)


def prelimit_coeffs(x, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact finite-n drift and diagonal variance density of the scaled queue.

    Returns ``(b, a)`` where ``b`` coincides with `limit_drift` (the drift
    display is n-free) and::

        a_ii(x) = mu0 * delta_i(x) / sqrt(n) + 1/alpha_i + mu_i / sqrt(n)
                  + max(x_i / sqrt(n) + 1/alpha_i, 0)
                    * (1{x_i < nu_i} + f(sqrt(n) x_i + n/alpha_i) * 1{x_i >= nu_i})

    with ``f`` the `pair_factor`.  Off the discontinuity set these converge
    to the limit coefficients as n grows; ``a_ii >= 1/alpha_i`` always.
    """
    x = np.asarray(x, dtype=float)
    sqrt_n = np.sqrt(params.n)
    dlt = delta(x, params.alpha) if x.ndim == 1 else delta_rows(x, params.alpha)
    b = params.mu0 * dlt + params.mu - x
    occupancy = np.maximum(x / sqrt_n + 1.0 / params.alpha, 0.0)
    above = x >= params.nu
    service = np.where(above, pair_factor(sqrt_n * x + params.n / params.alpha), 1.0)
    a = params.mu0 * dlt / sqrt_n + 1.0 / params.alpha + params.mu / sqrt_n + occupancy * service
    return b, a


def distance_to_G(x, params: ModelParams) -> np.ndarray | float:
    """How far a state is from the coefficient discontinuity set.

    The set collects the threshold faces ``x_i = nu_i`` and the routing
    switches ``alpha_i x_i = alpha_j x_j`` (i != j); the returned value is
    the smallest of all factor magnitudes, so it vanishes exactly on the
    set.  For d = 1 only the threshold face exists.  Accepts ``(d,)`` or
    ``(m, d)`` input.
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    dist = np.min(np.abs(x2 - params.nu), axis=1)
    w = x2 * params.alpha
    for i in range(params.d - 1):
        for j in range(i + 1, params.d):
            dist = np.minimum(dist, np.abs(w[:, i] - w[:, j]))
    if np.asarray(x).ndim == 1:
        return float(dist[0])
    return dist

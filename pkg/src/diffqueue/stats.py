"""Ensemble execution and the statistical verifiers.

This module owns Monte Carlo replication (deterministically seeded, so
results are a pure function of the master seed and replica count) and the
four diagnostics run against ensembles: empirical-distribution distance,
occupation time near the coefficient discontinuity set, martingale-
problem residuals, and the occupation-measure bound in its
``lhs <= N * rhs`` form.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .ctmc import scale_states
from .errors import ConfigurationError, ReplicaError
from .model import ModelParams, distance_to_G, limit_diffusion, limit_drift, prelimit_coeffs
from .paths import QueuePath, SamplePath
from .rng import stream_seed
from .sde import EmEnsembleResult, ellipticity_floor
from .testfuncs import TestFunction

__all__ = [
    "Ensemble",
    "ResidualReport",
    "Summary",
    "KrylovResult",
    "run_ensemble",
    "ks_distance",
    "ks_distance_columns",
    "ks_noise_floor",
    "occupation_near_G",
    "martingale_residual",
    "krylov_ratio",
    "summarize",
    "limit_coeffs",
    "prelimit_coeff_fns",
]

THREADS_ENV = "DIFFAPPROX_THREADS"


@dataclass(frozen=True)
class Ensemble:
    """Ordered replica results; replica k came from stream_seed(master_seed, k)."""

    replicas: list
    master_seed: int
    meta: str = ""

    def __post_init__(self):
        if len(self.replicas) < 1:
            raise ConfigurationError("an ensemble needs at least one replica")

    @property
    def M(self) -> int:
        return len(self.replicas)

    def terminal_matrix(self) -> np.ndarray:
        """Stack replicas of vectors into an (M, d) matrix."""
        return np.stack([np.asarray(r, dtype=float) for r in self.replicas])

    def path_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Shared grid and (M, K+1, d) values of `SamplePath` replicas."""
        first = self.replicas[0]
        if not isinstance(first, SamplePath):
            raise ConfigurationError("path_matrix needs SamplePath replicas")
        times = first.times
        for r in self.replicas[1:]:
            if len(r.times) != len(times) or not np.array_equal(r.times, times):
                raise ConfigurationError("replicas must share one grid")
        return times, np.stack([r.values for r in self.replicas])


def _thread_count(threads: int | None) -> int:
    cap = os.environ.get(THREADS_ENV)
    cap = int(cap) if cap else None
    requested = threads if threads is not None else (cap or 1)
    if cap is not None:
        requested = min(requested, cap)
    return max(requested, 1)


def run_ensemble(generator: Callable[[int, int], object], M: int, master_seed: int, *,
                 meta: str = "", threads: int | None = None) -> Ensemble:
    """Run ``generator(k, stream_seed(master_seed, k))`` for k = 0..M-1.

    Results are stored in replica order, so the outcome is independent of
    the execution schedule; the DIFFAPPROX_THREADS environment variable
    caps worker threads.  A failing replica raises `ReplicaError` with
    its index.
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    seeds = [stream_seed(master_seed, k) for k in range(M)]
    results: list = [None] * M
    failures: list[tuple[int, BaseException]] = []

    def work(k: int):
        try:
            results[k] = generator(k, seeds[k])
        except Exception as exc:  # noqa: BLE001 - reported per replica
            failures.append((k, exc))

    n_threads = _thread_count(threads)
    if n_threads <= 1:
        for k in range(M):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(M)))
    if failures:
        k, exc = min(failures, key=lambda f: f[0])
        raise ReplicaError(k, exc)
    return Ensemble(replicas=results, master_seed=master_seed, meta=meta)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("ks_distance needs nonempty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_distance_columns(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-coordinate KS distances of two (M, d) samples, and their max."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ConfigurationError("samples must have the same number of coordinates")
    per = np.array([ks_distance(a[:, j], b[:, j]) for j in range(a.shape[1])])
    return per, float(per.max())


def ks_noise_floor(m1: int, m2: int | None = None) -> float:
    """95% two-sample KS quantile, the self-distance level of same-law ensembles."""
    m2 = m1 if m2 is None else m2
    return 1.36 * math.sqrt((m1 + m2) / (m1 * m2))


def occupation_near_G(path, params: ModelParams, eps: float) -> float:
    """Fraction of time the (rescaled) path spends within ``eps`` of the
    discontinuity set.

    Exact sojourn fraction for a `QueuePath`; left-endpoint rule for a
    grid `SamplePath` (whose values must already be on the diffusion
    scale).
    """
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    if isinstance(path, QueuePath):
        xs = scale_states(path.states, params)
        near = distance_to_G(xs, params) < eps
        lengths = np.diff(np.append(path.times, path.horizon))
        return float(np.sum(lengths[near]) / path.horizon)
    near = distance_to_G(path.values[:-1], params) < eps
    steps = np.diff(path.times)
    return float(np.sum(steps[near]) / (path.times[-1] - path.times[0]))


# ---------------------------------------------------------------------------
# martingale-problem residuals


@dataclass(frozen=True)
class ResidualReport:
    estimate: float
    std_error: float
    M: int
    test_function_id: str

    def within(self, k_sigma: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.estimate) <= k_sigma * self.std_error + slack


class CoeffFns(NamedTuple):
    """Drift and quadratic-variation density as batch functions of state."""

    b: Callable[[np.ndarray], np.ndarray]
    a: Callable[[np.ndarray], np.ndarray]


def limit_coeffs(params: ModelParams) -> CoeffFns:
    def b(x):
        flat = x.reshape(-1, params.d)
        return limit_drift(flat, params).reshape(x.shape)

    def a(x):
        return limit_diffusion(x, params) ** 2

    return CoeffFns(b=b, a=a)


def prelimit_coeff_fns(params: ModelParams) -> CoeffFns:
    def b(x):
        flat = x.reshape(-1, params.d)
        return prelimit_coeffs(flat, params)[0].reshape(x.shape)

    def a(x):
        flat = x.reshape(-1, params.d)
        return prelimit_coeffs(flat, params)[1].reshape(x.shape)

    return CoeffFns(b=b, a=a)


def _paths_of(ensemble) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ensemble, Ensemble):
        return ensemble.path_matrix()
    if isinstance(ensemble, EmEnsembleResult):
        if ensemble.paths is None:
            raise ConfigurationError("the ensemble was integrated without stored paths")
        return ensemble.times, ensemble.paths
    times, values = ensemble
    return np.asarray(times), np.asarray(values)


def _snap(times: np.ndarray, t: float, what: str) -> int:
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        warnings.warn(f"{what}={t} snapped to grid time {times[idx]}", stacklevel=3)
    return idx


def martingale_residual(ensemble, u: TestFunction, s: float, t: float, *,
                        coeffs: CoeffFns,
                        weight: tuple[Sequence[float], Callable] | None = None,
                        chunk: int = 2000) -> ResidualReport:
    """Monte Carlo residual of the martingale identity for ``u`` on [s, t].

    Estimates ``E[ w * (u(t, x_t) - u(s, x_s) - int_s^t (u_p + 1/2 a_ii
    u_{x_i x_i} + b_i u_{x_i}) dp) ]`` with the time integral on the path
    grid (trapezoid rule) and ``a, b`` from ``coeffs``.  ``weight`` is an
    optional pair (marginal times <= s, function of those marginals).  A
    vanishing residual, up to its standard error, is what membership in
    the martingale problem looks like at sample size M.
    """
    times, values = _paths_of(ensemble)
    if not 0 <= s <= t <= times[-1]:
        raise ConfigurationError(f"need 0 <= s <= t <= horizon, got s={s}, t={t}")
    i_s = _snap(times, s, "s")
    i_t = _snap(times, t, "t")
    if i_s > i_t:
        raise ConfigurationError("s must not exceed t after snapping")
    m_total = values.shape[0]

    w_idx = None
    w_fn = None
    if weight is not None:
        marg_times, w_fn = weight
        w_idx = [_snap(times, mt, "marginal time") for mt in marg_times]
        if any(idx > i_s for idx in w_idx):
            raise ConfigurationError("weight marginals must not exceed s")

    seg_t = times[i_s:i_t + 1]
    residuals = np.empty(m_total)
    for lo in range(0, m_total, chunk):
        hi = min(lo + chunk, m_total)
        x_seg = values[lo:hi, i_s:i_t + 1, :]
        integrand = (u.dt(seg_t, x_seg)
                     + 0.5 * np.sum(coeffs.a(x_seg) * u.hess_diag(seg_t, x_seg), axis=-1)
                     + np.sum(coeffs.b(x_seg) * u.grad(seg_t, x_seg), axis=-1))
        integral = np.trapezoid(integrand, seg_t, axis=1) if len(seg_t) > 1 else 0.0
        resid = (u.value(times[i_t], x_seg[:, -1, :])
                 - u.value(times[i_s], x_seg[:, 0, :]) - integral)
        if w_fn is not None:
            resid = resid * np.asarray(
                w_fn(*[values[lo:hi, idx, :] for idx in w_idx]), dtype=float)
        residuals[lo:hi] = resid

    estimate = float(np.mean(residuals))
    std_error = float(np.std(residuals, ddof=1) / math.sqrt(m_total)) if m_total > 1 else 0.0
    return ResidualReport(estimate=estimate, std_error=std_error,
                          M=m_total, test_function_id=u.id)


# ---------------------------------------------------------------------------
# occupation-measure bound diagnostic


class KrylovResult(NamedTuple):
    lhs: float
    rhs: float
    lhs_se: float


def _ball_section_volume(dim: int, lo: float, hi: float, r: float) -> float:
    """Volume of {x in B_r : lo < x_0 < hi} by Gauss-Legendre quadrature."""
    lo = max(lo, -r)
    hi = min(hi, r)
    if hi <= lo:
        return 0.0
    if dim == 1:
        return hi - lo
    unit = math.pi ** ((dim - 1) / 2.0) / math.gamma((dim + 1) / 2.0)
    nodes, wts = np.polynomial.legendre.leggauss(64)
    u = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    sections = unit * np.maximum(r * r - u * u, 0.0) ** ((dim - 1) / 2.0)
    return float(0.5 * (hi - lo) * np.sum(wts * sections))


def krylov_ratio(ensemble, params: ModelParams, eps: float, r: float,
                 T: float) -> KrylovResult:
    """Observed occupation integral of the slab ``|x_0 - nu_0| < eps``
    against its volume bound.

    lhs = delta^{d/(d+1)} * E int_0^{T and exit(B_r)} 1_slab(x_t) dt with
    ``delta`` the limit ellipticity floor; rhs = (T * vol(slab cap B_r))
    ^{1/(d+1)}.  As the slab thins, lhs/rhs must shrink (exponents 1
    versus 1/(d+1)); the constant in the bound is not estimated.
    """
    if eps <= 0 or r <= 0:
        raise ConfigurationError("eps and r must be positive")
    times, values = _paths_of(ensemble)
    last = int(np.searchsorted(times, T, side="right")) - 1

    norms = np.linalg.norm(values[:, :last + 1, :], axis=-1)
    exited = norms >= r
    exit_idx = np.where(exited.any(axis=1), exited.argmax(axis=1), last + 1)

    in_slab = np.abs(values[:, :last, 0] - params.nu[0]) < eps
    alive = np.arange(last)[None, :] < exit_idx[:, None]
    steps = np.diff(times[:last + 1])
    per_path = np.sum(in_slab * alive * steps[None, :], axis=1)

    delta = ellipticity_floor(params)
    scale_f = delta ** (params.d / (params.d + 1.0))
    lhs = scale_f * float(np.mean(per_path))
    lhs_se = (scale_f * float(np.std(per_path, ddof=1) / math.sqrt(len(per_path)))
              if len(per_path) > 1 else 0.0)
    vol = _ball_section_volume(params.d, params.nu[0] - eps, params.nu[0] + eps, r)
    rhs = (T * vol) ** (1.0 / (params.d + 1.0))
    return KrylovResult(lhs=lhs, rhs=rhs, lhs_se=lhs_se)


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class Summary:
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray
    quantiles: dict[float, np.ndarray] = field(default_factory=dict)
    M: int = 0


def summarize(data, quantile_levels: Sequence[float] = (0.05, 0.25, 0.5, 0.75, 0.95)) -> Summary:
    """Unbiased per-coordinate moments and nearest-rank quantiles."""
    matrix = data.terminal_matrix() if isinstance(data, Ensemble) else np.atleast_2d(
        np.asarray(data, dtype=float))
    m = matrix.shape[0]
    if m < 2:
        raise ConfigurationError("summarize needs at least two replicas for a variance")
    mean = matrix.mean(axis=0)
    variance = matrix.var(axis=0, ddof=1)
    std_error = np.sqrt(variance / m)
    ranked = np.sort(matrix, axis=0)
    quantiles = {}
    for p in quantile_levels:
        idx = max(int(math.ceil(p * m)) - 1, 0)
        quantiles[float(p)] = ranked[idx]
    return Summary(mean=mean, variance=variance, std_error=std_error,
                   quantiles=quantiles, M=m)

"""Euler-Maruyama integration of the limit equations, plus the fluid ODE.

The limit drift and noise are discontinuous, so no scheme beats plain
Euler-Maruyama with left-endpoint coefficients here; with the noise
uniformly elliptic and bounded that is enough for the distribution-level
comparisons this package makes.  Normals come in Box-Muller pairs and
every step consumes a fixed number of stream draws per replica, which
keeps vectorized ensemble integration bit-identical to one-path-at-a-time
integration.

Convention used throughout: ``a`` denotes the quadratic-variation
density, the noise intensity is ``sigma = sqrt(a)``, and the generator's
second-order term is ``(1/2) a_ii d^2/dx_i^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericsError
from .model import ModelParams, limit_diffusion, limit_drift
from .paths import SamplePath
from .rng import StreamArray, Stream, stream_seed

__all__ = [
    "SdeSpec",
    "FluidParams",
    "limit_sde",
    "alt_scaling_sde",
    "euler_maruyama",
    "em_ensemble",
    "EmEnsembleResult",
    "fluid_ode",
    "ellipticity_floor",
]


@dataclass(frozen=True)
class SdeSpec:
    """Drift and diagonal noise of a d-dimensional Ito equation.

    ``drift(t, x)`` and ``diffusion(t, x)`` take a scalar time and a
    batch of states ``(m, d)`` and return ``(m, d)``; diffusion values
    are standard deviations and must be nonnegative.  Both functions
    must be pure (they are called concurrently).
    """

    dim: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    label: str = ""


def limit_sde(params: ModelParams) -> SdeSpec:
    """The limit equation: drift ``mu0*delta + mu - x``, noise ``sqrt((2 + 1{x>=nu})/alpha)``."""

    def drift(t, x):
        return limit_drift(x, params)

    def diffusion(t, x):
        return limit_diffusion(x, params)

    return SdeSpec(dim=params.d, drift=drift, diffusion=diffusion, label="limit")


def alt_scaling_sde(params: ModelParams, gamma: float) -> SdeSpec:
    """Limit equation under initial occupancy ``gamma`` times nominal.

    With centering ``q_t = 1 + (gamma - 1) e^{-t}`` the drift is
    unchanged while the noise becomes time-dependent: the queue sits
    below its thresholds when ``gamma < 1`` (solo service, variance
    density ``(1 + q_t)/alpha``) and above them when ``gamma > 1``
    (paired service, ``(1 + 2 q_t)/alpha``).  ``gamma = 1`` is the
    stationary-centering case handled by `limit_sde`.
    """
    if gamma < 0:
        raise ConfigurationError("gamma must be >= 0")
    if gamma == 1:
        raise ConfigurationError("gamma = 1 has constant centering; use limit_sde")
    paired = gamma > 1
    inv_alpha = 1.0 / params.alpha

    def drift(t, x):
        return limit_drift(x, params)

    def diffusion(t, x):
        q_t = 1.0 + (gamma - 1.0) * np.exp(-t)
        a = inv_alpha * ((1.0 + 2.0 * q_t) if paired else (1.0 + q_t))
        return np.broadcast_to(np.sqrt(a), np.shape(x)).copy()

    return SdeSpec(dim=params.d, drift=drift, diffusion=diffusion,
                   label=f"alt-scaling(gamma={gamma})")


def ellipticity_floor(params: ModelParams) -> float:
    """Uniform lower bound on the limit variance density ``a_ii``."""
    return float(2.0 * np.min(1.0 / params.alpha))


def _em_times(T: float, h: float) -> np.ndarray:
    if h <= 0 or h > T:
        raise ConfigurationError(f"step h must satisfy 0 < h <= T, got h={h}, T={T}")
    n_steps = int(np.ceil(T / h - 1e-12))
    times = np.empty(n_steps + 1)
    times[:n_steps] = np.arange(n_steps) * h
    times[n_steps] = T  # final step truncated to land on the horizon
    return times


@dataclass(frozen=True)
class EmEnsembleResult:
    times: np.ndarray
    terminal: np.ndarray              # (M, d)
    paths: np.ndarray | None          # (M, K+1, d) when stored
    functional: np.ndarray | None     # (M, k) running integral at T


def _as_columns(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _em_run(spec: SdeSpec, x0: np.ndarray, times: np.ndarray, streams: StreamArray,
            store_paths: bool, functional) -> EmEnsembleResult:
    n_steps = len(times) - 1
    x = np.tile(x0, (len(streams), 1))
    paths = None
    if store_paths:
        paths = np.empty((len(streams), n_steps + 1, spec.dim))
        paths[:, 0] = x
    y = None
    if functional is not None:
        y = np.zeros((len(streams), _as_columns(functional(x)).shape[1]))

    for k in range(n_steps):
        dt = times[k + 1] - times[k]
        if functional is not None:
            y += _as_columns(functional(x)) * dt
        b = spec.drift(times[k], x)
        s = spec.diffusion(times[k], x)
        if np.any(s < 0):
            raise NumericsError(f"negative diffusion value at step {k}")
        x = x + b * dt + s * np.sqrt(dt) * streams.normals(spec.dim)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"non-finite state at step {k + 1} of {n_steps}")
        if store_paths:
            paths[:, k + 1] = x

    return EmEnsembleResult(times=times, terminal=x, paths=paths, functional=y)


def em_ensemble(spec: SdeSpec, x0, T: float, h: float, M: int, master_seed: int, *,
                store_paths: bool = False,
                functional: Callable[[np.ndarray], np.ndarray] | None = None,
                ) -> EmEnsembleResult:
    """Integrate ``M`` replicas in lockstep, one stream per replica.

    Replica ``k`` draws from the stream seeded with
    ``stream_seed(master_seed, k)``, exactly as the generic ensemble
    runner would hand it out; coefficients are evaluated at the left
    endpoint.  ``functional`` optionally accumulates the left-endpoint
    Riemann integral of a state functional alongside the state itself
    (the coupled ``(x, y)`` construction).
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.dim,):
        raise ConfigurationError(f"x0 must have shape ({spec.dim},), got {x0.shape}")
    streams = StreamArray(np.array(
        [stream_seed(master_seed, k) for k in range(M)], dtype=np.uint64))
    return _em_run(spec, x0, _em_times(T, h), streams, store_paths, functional)


def euler_maruyama(spec: SdeSpec, x0, T: float, h: float, stream) -> SamplePath:
    """Single Euler-Maruyama path driven by one replica stream."""
    seed = stream.state if isinstance(stream, Stream) else int(stream)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.dim,):
        raise ConfigurationError(f"x0 must have shape ({spec.dim},), got {x0.shape}")
    streams = StreamArray(np.array([seed], dtype=np.uint64))
    result = _em_run(spec, x0, _em_times(T, h), streams, True, None)
    return SamplePath(times=result.times, values=result.paths[0])


@dataclass(frozen=True)
class FluidParams:
    """Law-of-large-numbers scaling: ``dq_i = (beta_i - q_i) dt``."""

    beta: np.ndarray
    q0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float))
        if self.beta.shape != self.q0.shape or self.beta.ndim != 1:
            raise ConfigurationError("beta and q0 must be equal-length vectors")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.q0))):
            raise ConfigurationError("beta and q0 must be finite")
        if np.any(self.beta < 0):
            raise ConfigurationError("beta must be nonnegative")


def fluid_ode(fp: FluidParams, T: float, h: float) -> SamplePath:
    """Classical fourth-order Runge-Kutta solution of the fluid ODE."""
    times = _em_times(T, h)
    out = np.empty((len(times), len(fp.q0)))
    q = fp.q0.copy()
    out[0] = q
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        k1 = fp.beta - q
        k2 = fp.beta - (q + 0.5 * dt * k1)
        k3 = fp.beta - (q + 0.5 * dt * k2)
        k4 = fp.beta - (q + dt * k3)
        q = q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = q
    return SamplePath(times=times, values=out)

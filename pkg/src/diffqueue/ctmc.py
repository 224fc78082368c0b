"""Exact event-driven simulation of the network and pathwise functionals.

The simulator is a direct stochastic simulation algorithm: channel rates
are rebuilt after every event, waiting times are exponential in the total
rate, and the firing channel is chosen proportionally to rate.  That is
statistically exact for this chain.  Everything downstream (grid
sampling, diffusion scaling, integrals of path functionals) is either
exact for piecewise-constant paths or an explicitly documented
left-endpoint rule on a grid.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from . import _gillespie
from .errors import ConfigurationError, NumericsError
from .model import DerivedRates, ModelParams
from .paths import QueuePath, SamplePath, sample_on_grid, uniform_grid
from .rng import Stream

__all__ = [
    "QueuePath",
    "SamplePath",
    "Channel",
    "event_rates",
    "initial_state",
    "simulate_queue",
    "simulate_queue_on_grid",
    "sample_on_grid",
    "uniform_grid",
    "scale",
    "alt_centering",
    "functional_integral",
]

#: Hard cap on stored events per path; beyond this, use grid sampling.
DEFAULT_EVENT_CAP = 100_000_000


class Channel(NamedTuple):
    rate: float
    station: int
    jump: int
    kind: str


def _routing_weights(rates: DerivedRates) -> np.ndarray:
    # 1/centering is proportional to alpha, so the argmin is the routing
    # argmin; using the same weights in Python and in the kernel keeps
    # tie-breaking bit-identical
    return 1.0 / rates.centering


def event_rates(state: np.ndarray, rates: DerivedRates) -> list[Channel]:
    """Active transition channels at a queue state, in canonical order.

    Arrivals: the balanced stream (+1 at the routing argmin, evaluated on
    the pre-jump state) and one dedicated stream per station.  Departures
    at station i: below threshold a single channel of rate ``q_i`` and
    jump -1; at or above threshold a pair channel of rate ``floor(q_i/2)``
    and jump -2 plus, for odd ``q_i``, a singleton of rate 1 and jump -1.
    Zero-rate channels are omitted.
    """
    q = np.asarray(state)
    if np.any(q < 0):
        raise ConfigurationError("queue lengths must be nonnegative")
    w = _routing_weights(rates)
    channels = []
    if rates.lambda0 > 0:
        target = int(np.argmin(w * q))
        channels.append(Channel(rates.lambda0, target, +1, "arrival0"))
    for i, lam_i in enumerate(rates.lam):
        if lam_i > 0:
            channels.append(Channel(float(lam_i), i, +1, "arrival_i"))
    for i, qi in enumerate(q):
        qi = int(qi)
        if qi <= 0:
            continue
        if qi < rates.thresholds[i]:
            channels.append(Channel(float(qi), i, -1, "single_departure"))
        else:
            if qi // 2 > 0:
                channels.append(Channel(float(qi // 2), i, -2, "pair_departure"))
            if qi % 2 == 1:
                channels.append(Channel(1.0, i, -1, "odd_singleton"))
    return channels


def initial_state(params: ModelParams, x0=None, occupancy: float = 1.0) -> np.ndarray:
    """Deterministic start ``Q_i = round(occupancy * n/alpha_i + x0_i*sqrt(n))``.

    ``x0`` is on the diffusion scale and defaults to the origin;
    ``occupancy`` scales the nominal level (1 centers the standard
    rescaling, other values feed the alternative-centering studies).
    The result is clamped at zero per coordinate.
    """
    x0 = np.zeros(params.d) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (params.d,):
        raise ConfigurationError(f"x0 must have shape ({params.d},), got {x0.shape}")
    raw = occupancy * params.n / params.alpha + x0 * np.sqrt(params.n)
    return np.maximum(np.floor(raw + 0.5), 0.0).astype(np.int64)


def _seed_of(stream) -> int:
    if isinstance(stream, Stream):
        return stream.state
    return int(stream)


def _check_inputs(params: ModelParams, q0, T: float) -> np.ndarray:
    if T <= 0:
        raise ConfigurationError(f"horizon T must be positive, got {T}")
    q0 = np.asarray(q0, dtype=np.int64)
    if q0.shape != (params.d,):
        raise ConfigurationError(f"q0 must have shape ({params.d},), got {q0.shape}")
    if np.any(q0 < 0):
        raise ConfigurationError("q0 must be nonnegative")
    return q0


def _expected_events(rates: DerivedRates, q0: np.ndarray, T: float) -> float:
    arrivals = rates.total_arrival_rate
    if not np.isfinite(arrivals):
        raise NumericsError("non-finite total event rate")
    # mean total service rate relaxes from sum(q0) toward the arrival rate
    return (arrivals + max(float(q0.sum()), arrivals)) * T


def simulate_queue(params: ModelParams, q0, T: float, stream, *,
                   rates: DerivedRates | None = None,
                   max_events: int = DEFAULT_EVENT_CAP) -> QueuePath:
    """Exact trajectory with the full event list recorded.

    ``stream`` is a replica stream seed (or a `Stream`; its current state
    is used).  Identical (params, q0, T, stream) reproduce the path event
    for event.  Paths whose event count would exceed ``max_events`` raise
    `NumericsError`; switch to `simulate_queue_on_grid` for such runs.
    """
    q0 = _check_inputs(params, q0, T)
    rates = rates or DerivedRates.from_params(params)
    seed = _seed_of(stream)

    capacity = min(int(_expected_events(rates, q0, T) * 1.25 + 1000), max_events)
    empty_grid = np.empty(0)
    empty_out = np.empty((0, params.d), dtype=np.int64)
    while True:
        ev_times = np.empty(capacity)
        ev_states = np.empty((capacity, params.d), dtype=np.int64)
        n_ev, status = _gillespie.gillespie(
            rates.lambda0, rates.lam, rates.thresholds, _routing_weights(rates),
            q0, float(T), np.uint64(seed), empty_grid, empty_out,
            ev_times, ev_states, True, max_events,
        )
        if status == _gillespie.OK:
            break
        if status == _gillespie.BAD_RATE:
            raise NumericsError("non-finite total event rate")
        if capacity >= max_events:
            raise NumericsError(
                f"event count exceeds the cap of {max_events}; "
                "rerun with grid sampling (simulate_queue_on_grid)"
            )
        capacity = min(capacity * 2, max_events)

    times = np.concatenate(([0.0], ev_times[:n_ev]))
    states = np.concatenate((q0[None, :], ev_states[:n_ev]))
    return QueuePath(times=times, states=states, horizon=float(T))


def simulate_queue_on_grid(params: ModelParams, q0, T: float, stream,
                           grid_points: int, *,
                           rates: DerivedRates | None = None) -> SamplePath:
    """Same trajectory as `simulate_queue`, sampled on a uniform grid.

    No event storage, so this scales to arbitrarily long or busy runs.
    Values are the integer queue lengths (as floats, right-continuous).
    """
    q0 = _check_inputs(params, q0, T)
    rates = rates or DerivedRates.from_params(params)
    grid = uniform_grid(T, grid_points)
    grid_out = np.empty((len(grid), params.d), dtype=np.int64)
    empty_t = np.empty(0)
    empty_s = np.empty((0, params.d), dtype=np.int64)
    _, status = _gillespie.gillespie(
        rates.lambda0, rates.lam, rates.thresholds, _routing_weights(rates),
        q0, float(T), np.uint64(_seed_of(stream)), grid, grid_out,
        empty_t, empty_s, False, np.iinfo(np.int64).max,
    )
    if status == _gillespie.BAD_RATE:
        raise NumericsError("non-finite total event rate")
    return SamplePath(times=grid, values=grid_out.astype(float))


def alt_centering(gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Time-dependent centering ``q_t = 1 + (gamma - 1) e^{-t}``.

    Used to rescale runs whose initial occupancy is ``gamma`` times the
    nominal level; ``gamma = 1`` reduces to the constant centering.
    """
    if gamma < 0:
        raise ConfigurationError("gamma must be >= 0")

    def q_of_t(t):
        return 1.0 + (gamma - 1.0) * np.exp(-np.asarray(t, dtype=float))

    return q_of_t


def scale(path, params: ModelParams, *, centering=None,
          grid_points: int | None = None) -> SamplePath:
    """Diffusion rescaling ``x_i(t) = (Q_i(t) - n q_t / alpha_i) / sqrt(n)``.

    ``centering`` is an optional function of time (default: constant 1).
    Accepts a `SamplePath` of queue values, or a `QueuePath` together
    with ``grid_points``.
    """
    if isinstance(path, QueuePath):
        if grid_points is None:
            raise ConfigurationError("scaling a QueuePath needs grid_points")
        path = sample_on_grid(path, uniform_grid(path.horizon, grid_points))
    q_t = np.ones(len(path.times)) if centering is None else np.asarray(centering(path.times))
    center = q_t[:, None] * (params.n / params.alpha)
    values = (path.values - center) / np.sqrt(params.n)
    return SamplePath(times=path.times, values=values)


def scale_states(states: np.ndarray, params: ModelParams) -> np.ndarray:
    """Constant-centering rescale of raw states, shape-preserving."""
    return (np.asarray(states, dtype=float) - params.n / params.alpha) / np.sqrt(params.n)


def functional_integral(path, f, params: ModelParams, *,
                        grid: np.ndarray | None = None,
                        centering=None) -> SamplePath:
    """Running integral ``y_t`` of ``f`` along the rescaled path.

    For a `QueuePath` the integral of the piecewise-constant integrand is
    computed exactly and evaluated on ``grid`` (default: the event
    horizon split into 1000 cells).  For a `SamplePath` the integral is
    the left-endpoint Riemann sum on the path's own grid.  ``f`` maps a
    batch of rescaled states ``(m, d)`` to ``(m,)`` or ``(m, k)`` values.
    """
    if isinstance(path, QueuePath):
        q_t = (np.ones(len(path.times)) if centering is None
               else np.asarray(centering(path.times)))
        xs = (path.states - q_t[:, None] * (params.n / params.alpha)) / np.sqrt(params.n)
        vals = np.atleast_2d(np.asarray(f(xs), dtype=float).T).T
        if not np.all(np.isfinite(vals)):
            raise NumericsError("functional produced non-finite values")
        seg = np.diff(np.append(path.times, path.horizon))
        cum = np.vstack((np.zeros(vals.shape[1]), np.cumsum(vals * seg[:, None], axis=0)))
        if grid is None:
            grid = uniform_grid(path.horizon, 1000)
        if grid[-1] > path.horizon:
            raise ConfigurationError("grid exceeds the path horizon")
        k = np.searchsorted(path.times, grid, side="right") - 1
        y = cum[k] + vals[k] * (grid - path.times[k])[:, None]
        return SamplePath(times=np.asarray(grid, dtype=float), values=y)

    vals = np.atleast_2d(np.asarray(f(path.values), dtype=float).T).T
    if not np.all(np.isfinite(vals)):
        raise NumericsError("functional produced non-finite values")
    steps = np.diff(path.times)
    y = np.vstack((np.zeros(vals.shape[1]),
                   np.cumsum(vals[:-1] * steps[:, None], axis=0)))
    return SamplePath(times=path.times, values=y)

"""Path containers shared by the event-driven and SDE simulators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["QueuePath", "SamplePath", "uniform_grid", "sample_on_grid"]


@dataclass(frozen=True)
class QueuePath:
    """Piecewise-constant record of the integer queue-length vector.

    ``states[k]`` holds on ``[times[k], times[k+1])`` (right-continuous);
    ``times[0] == 0`` carries the initial state and each later entry is
    one event.  The path is defined up to ``horizon``, which is not an
    event time.
    """

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ConfigurationError("times must be 1-d and states 2-d")
        if len(self.times) != len(self.states):
            raise ConfigurationError("times and states must have equal length")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise ConfigurationError("path must start at time 0")
        if len(self.times) and self.times[-1] > self.horizon:
            raise ConfigurationError("event beyond the horizon")

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    def state_at(self, t: float) -> np.ndarray:
        """Right-continuous state at time ``t`` in [0, horizon]."""
        if t < 0 or t > self.horizon:
            raise ConfigurationError(f"time {t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[k]

    def validate_jumps(self) -> None:
        """Check the event structure (used by tests; O(events))."""
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("event times must be strictly increasing")
        if np.any(self.states < 0):
            raise ConfigurationError("negative queue length")
        jumps = np.diff(self.states, axis=0)
        if jumps.size:
            nonzero = np.count_nonzero(jumps, axis=1)
            sizes = jumps.sum(axis=1)
            ok = (nonzero == 1) & np.isin(sizes, (-2, -1, 1))
            if not np.all(ok):
                raise ConfigurationError("each event must change one station by +1, -1, or -2")


@dataclass(frozen=True)
class SamplePath:
    """Real d-vector path sampled on a time grid.

    The grid is uniform except that the final step may be shortened to
    land exactly on the horizon; consumers always use the stored times,
    never an assumed spacing.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.values.ndim != 2:
            raise ConfigurationError("times must be 1-d and values 2-d")
        if len(self.times) != len(self.values):
            raise ConfigurationError("times and values must have equal length")
        if len(self.times) < 1:
            raise ConfigurationError("empty path")

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def uniform_grid(T: float, points: int) -> np.ndarray:
    """Grid of ``points`` cells (``points + 1`` nodes) covering [0, T]."""
    if T <= 0 or points < 1:
        raise ConfigurationError("grid needs T > 0 and at least one cell")
    return np.linspace(0.0, float(T), points + 1)


def sample_on_grid(path: QueuePath, grid: np.ndarray) -> SamplePath:
    """Evaluate a queue path on a grid (right-continuous convention)."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] < 0 or grid[-1] > path.horizon:
        raise ConfigurationError(
            f"grid [{grid[0]}, {grid[-1]}] exceeds the path horizon {path.horizon}"
        )
    idx = np.searchsorted(path.times, grid, side="right") - 1
    return SamplePath(times=grid, values=path.states[idx].astype(float))

import numpy as np
import pytest

from diffqueue import DerivedRates, ModelParams
from diffqueue.ctmc import event_rates
from diffqueue.paths import QueuePath
from diffqueue.rng import Stream


@pytest.fixture
def ou_params():
    """d=1 model whose limit is an Ornstein-Uhlenbeck process
    (no balanced stream, threshold far above any visited state)."""
    return ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)


@pytest.fixture
def bench2d():
    """Two-station benchmark used across the convergence checks."""
    return ModelParams(d=2, alpha=[1.0, 1.0], mu0=1.0, mu=[0.5, 0.5],
                       nu=[0.0, 0.0], n=400)


def reference_simulate(params: ModelParams, q0, T: float, seed: int,
                       rates: DerivedRates | None = None) -> QueuePath:
    """Slow, direct event loop used as an independent oracle for the
    compiled kernel: same channel order, same draw order, same
    selection rule, so trajectories must agree event for event."""
    rates = rates or DerivedRates.from_params(params)
    stream = Stream(seed)
    q = np.array(q0, dtype=np.int64)
    t = 0.0
    times = [0.0]
    states = [q.copy()]
    while True:
        channels = event_rates(q, rates)
        total = 0.0
        for c in channels:
            total += c.rate
        if total <= 0:
            break
        t_next = t + stream.exponential(total)
        if t_next >= T:
            break
        target = stream.uniform() * total
        pick = len(channels) - 1
        acc = 0.0
        for idx, c in enumerate(channels):
            acc += c.rate
            if target < acc:
                pick = idx
                break
        chosen = channels[pick]
        q[chosen.station] += chosen.jump
        t = t_next
        times.append(t)
        states.append(q.copy())
    return QueuePath(times=np.array(times), states=np.array(states), horizon=float(T))

"""JIT-compiled event loop for the queueing network.

The kernel draws exactly two uniforms per event (waiting time, channel
pick) from an inline SplitMix64 stream that is bit-compatible with
`diffqueue.rng.Stream`, so trajectories are reproducible across the
recorded, grid-sampled, and pure-Python reference code paths.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_U01_SCALE = 2.0 ** -52

OK = 0
EVENT_CAP = 1
BAD_RATE = 2


@njit(cache=True, inline="always")
def _next_u01(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    z = z ^ (z >> U64(31))
    return state, (np.float64(z >> U64(12)) + 0.5) * _U01_SCALE


@njit(cache=True, nogil=True)
def gillespie(lambda0, lam, thresholds, route_w, q0, T, seed,
              grid, grid_out, ev_times, ev_states, record, max_events):
    """Simulate the network once; returns (n_events, status).

    Channels are rebuilt from the pre-jump state at every event, in the
    fixed order: balanced arrival, dedicated arrivals 0..d-1, then per
    station either a single-departure channel (below threshold) or a
    pair channel plus an odd-singleton channel (at or above threshold).
    Zero-rate channels are omitted.  Grid nodes strictly before the next
    event time receive the current state; an event landing exactly on
    the horizon is not applied.
    """
    d = q0.shape[0]
    q = q0.copy()
    n_grid = grid.shape[0]

    rates = np.empty(3 * d + 1, dtype=np.float64)
    stations = np.empty(3 * d + 1, dtype=np.int64)
    deltas = np.empty(3 * d + 1, dtype=np.int64)

    state = seed
    t = 0.0
    g = 0
    n_ev = 0
    status = OK

    while True:
        nch = 0
        total = 0.0
        if lambda0 > 0.0:
            best = 0
            bw = route_w[0] * q[0]
            for i in range(1, d):
                w = route_w[i] * q[i]
                if w < bw:
                    bw = w
                    best = i
            rates[nch] = lambda0
            stations[nch] = best
            deltas[nch] = 1
            total += lambda0
            nch += 1
        for i in range(d):
            if lam[i] > 0.0:
                rates[nch] = lam[i]
                stations[nch] = i
                deltas[nch] = 1
                total += lam[i]
                nch += 1
        for i in range(d):
            qi = q[i]
            if qi <= 0:
                continue
            if qi < thresholds[i]:
                rates[nch] = np.float64(qi)
                stations[nch] = i
                deltas[nch] = -1
                total += np.float64(qi)
                nch += 1
            else:
                half = qi // 2
                if half > 0:
                    rates[nch] = np.float64(half)
                    stations[nch] = i
                    deltas[nch] = -2
                    total += np.float64(half)
                    nch += 1
                if qi % 2 == 1:
                    rates[nch] = 1.0
                    stations[nch] = i
                    deltas[nch] = -1
                    total += 1.0
                    nch += 1

        if not np.isfinite(total):
            status = BAD_RATE
            break
        if total <= 0.0:
            break

        state, u1 = _next_u01(state)
        t_next = t + (-np.log(u1) / total)

        while g < n_grid and grid[g] < t_next:
            for j in range(d):
                grid_out[g, j] = q[j]
            g += 1

        if t_next >= T:
            break

        state, u2 = _next_u01(state)
        target = u2 * total
        pick = nch - 1
        acc = 0.0
        for c in range(nch):
            acc += rates[c]
            if target < acc:
                pick = c
                break
        q[stations[pick]] += deltas[pick]
        t = t_next

        if n_ev >= max_events:
            status = EVENT_CAP
            break
        if record:
            if n_ev >= ev_times.shape[0]:
                status = EVENT_CAP
                break
            ev_times[n_ev] = t
            for j in range(d):
                ev_states[n_ev, j] = q[j]
        n_ev += 1

    while g < n_grid:
        for j in range(d):
            grid_out[g, j] = q[j]
        g += 1

    return n_ev, status

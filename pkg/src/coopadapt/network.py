"""Communication topology, switching schedules and delayed wave-variable channels.

Edges carry SPD coupling gains K_ij = K_ji factored as K_ij = G G' with the
unique SPD square root G.  Delayed exchange transmits waves v_ij = G' a_hat_i
through fixed-length FIFO lines, so the passivity bookkeeping of the channel
energy is exact at the simulation step.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np


def factor_gain(k_ij) -> np.ndarray:
    """Unique SPD square root G of an SPD gain, G G' = K_ij."""
    k_ij = np.asarray(k_ij, dtype=float)
    if k_ij.ndim != 2 or k_ij.shape[0] != k_ij.shape[1]:
        raise ValueError("coupling gain must be square")
    if not np.allclose(k_ij, k_ij.T, atol=1e-10):
        raise ValueError("coupling gain must be symmetric")
    w, v = np.linalg.eigh(k_ij)
    if np.any(w <= 0.0):
        raise ValueError("coupling gain must be positive definite")
    return (v * np.sqrt(w)) @ v.T


def wave_encode(g_ji, a_hat_i) -> np.ndarray:
    """Outgoing wave v_ij = G_ji' a_hat_i."""
    return np.asarray(g_ji, dtype=float).T @ np.asarray(a_hat_i, dtype=float)


class DelayLine:
    """Fixed-delay FIFO over vectors sampled at step h; delay = steps * h.

    push_pop(v) returns the value pushed `steps` calls ago; with steps == 0 it
    returns v unchanged.  The buffer is pre-filled with an initial value so a
    line behaves as if its input had been constant for all earlier time.
    """

    def __init__(self, steps: int, initial: np.ndarray):
        if steps < 0:
            raise ValueError("delay steps must be nonnegative")
        initial = np.asarray(initial, dtype=float)
        self.steps = int(steps)
        self._buf = np.tile(initial, (self.steps, 1)) if self.steps else np.zeros((0, initial.size))
        self._ptr = 0

    def push_pop(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.steps == 0:
            return v.copy()
        out = self._buf[self._ptr].copy()
        self._buf[self._ptr] = v
        self._ptr = (self._ptr + 1) % self.steps
        return out

    def contents(self) -> np.ndarray:
        """Buffered samples ordered oldest first (the in-flight window)."""
        if self.steps == 0:
            return self._buf
        return np.roll(self._buf, -self._ptr, axis=0)


def channel_push_pop(line: DelayLine, v_now) -> np.ndarray:
    """FIFO exchange: feed the current wave, receive the delayed one."""
    return line.push_pop(v_now)


@dataclass(frozen=True)
class WaveSignals:
    """One directed exchange: sent wave, delayed arrival, their difference."""

    v_out: np.ndarray
    u_in: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.u_in - self.v_out


@dataclass(frozen=True)
class Edge:
    """Unordered robot pair with SPD gain and per-direction delays (s)."""

    i: int
    j: int
    k_gain: np.ndarray
    delay_ij: float = 0.0
    delay_ji: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("self-edges are not allowed")
        a, b = sorted((int(self.i), int(self.j)))
        object.__setattr__(self, "i", a)
        object.__setattr__(self, "j", b)
        object.__setattr__(self, "k_gain", np.asarray(self.k_gain, dtype=float))
        factor_gain(self.k_gain)  # validates SPD
        if self.delay_ij < 0.0 or self.delay_ji < 0.0:
            raise ValueError("delays must be nonnegative")

    @property
    def g_factor(self) -> np.ndarray:
        return factor_gain(self.k_gain)


@dataclass(frozen=True)
class Topology:
    """Static bidirectional communication graph over n_robots."""

    n_robots: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        seen = set()
        for e in self.edges:
            if not (0 <= e.i < self.n_robots and 0 <= e.j < self.n_robots):
                raise ValueError(f"edge ({e.i},{e.j}) out of range")
            if (e.i, e.j) in seen:
                raise ValueError(f"duplicate edge ({e.i},{e.j})")
            seen.add((e.i, e.j))

    def neighbors(self, i: int) -> list[int]:
        out = [e.j for e in self.edges if e.i == i] + [e.i for e in self.edges if e.j == i]
        return sorted(out)

    def is_connected(self) -> bool:
        return _connected(self.n_robots, [(e.i, e.j) for e in self.edges])


def _connected(n: int, pairs) -> bool:
    if n <= 1:
        return True
    adj = {k: set() for k in range(n)}
    for i, j in pairs:
        adj[i].add(j)
        adj[j].add(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


@dataclass(frozen=True)
class SwitchSchedule:
    """Piecewise-constant, right-continuous edge-set schedule.

    `times` are the strictly increasing switch instants inside one period (or
    over the whole horizon when aperiodic); `edge_sets` has one entry more
    than `times`.  With `period` set the pattern repeats forever.
    """

    times: tuple[float, ...]
    edge_sets: tuple[tuple[tuple[int, int], ...], ...]
    period: float | None = None
    dwell: float | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        sets = tuple(tuple(tuple(sorted(map(int, p))) for p in s) for s in self.edge_sets)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "edge_sets", sets)
        if len(sets) != len(times) + 1:
            raise ValueError("need exactly len(times)+1 edge sets")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("switch times must be strictly increasing")
        if times and times[0] <= 0.0:
            raise ValueError("first switch time must be positive")
        dwell = self.dwell
        if dwell is None:
            gaps = []
            if times:
                gaps.append(times[0])
                gaps.extend(t2 - t1 for t1, t2 in zip(times, times[1:]))
            if self.period is not None and times:
                gaps.append(self.period - times[-1])
            dwell = min(gaps) if gaps else (self.period if self.period is not None else np.inf)
            object.__setattr__(self, "dwell", float(dwell))
        if self.period is not None:
            if times and times[-1] >= self.period:
                raise ValueError("switch times must lie inside the period")
        if self.dwell is not None and self.dwell < 0.0:
            raise ValueError("dwell must be nonnegative")

    @classmethod
    def cyclic(cls, edge_sets, dwell: float) -> "SwitchSchedule":
        """Equal-dwell cyclic pattern: set k active on [k*dwell, (k+1)*dwell)."""
        if dwell <= 0.0:
            raise ValueError("dwell must be positive")
        m = len(edge_sets)
        times = tuple(dwell * k for k in range(1, m))
        return cls(times=times, edge_sets=tuple(edge_sets), period=dwell * m, dwell=dwell)

    def active_edges(self, t: float) -> tuple[tuple[int, int], ...]:
        """Edge set at time t; right-continuous at switch instants."""
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        if self.period is not None:
            t = t - self.period * np.floor(t / self.period)
        return self.edge_sets[bisect_right(self.times, t)]


def active_edges(schedule: SwitchSchedule, t: float):
    return schedule.active_edges(t)


def joint_connectivity_check(schedule: SwitchSchedule, n_robots: int, horizon: float,
                             window: float | None = None) -> list[dict]:
    """Partition [0, horizon) into windows and test union-graph connectivity.

    The window defaults to one period for cyclic schedules and to the whole
    horizon otherwise.  Returns one report per window; a scenario satisfies
    the switching-consensus hypothesis when every window's union graph is
    connected.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if not schedule.edge_sets:
        raise ValueError("schedule has no edge sets")
    if window is None:
        window = schedule.period if schedule.period is not None else horizon
    reports = []
    t0 = 0.0
    while t0 < horizon - 1e-12:
        t1 = min(t0 + window, horizon)
        probes = {t0, t1 - 1e-9}
        for k in range(int(np.ceil((t1 - t0) / max(schedule.dwell or window, 1e-9))) + 2):
            tp = t0 + k * (schedule.dwell or window)
            if t0 <= tp < t1:
                probes.add(tp)
        union: set[tuple[int, int]] = set()
        for tp in sorted(probes):
            union.update(schedule.active_edges(tp))
        reports.append(
            {
                "t_start": t0,
                "t_end": t1,
                "edges": sorted(union),
                "connected": _connected(n_robots, union),
            }
        )
        t0 = t1
    return reports


def block_laplacian(n_robots: int, k: np.ndarray) -> np.ndarray:
    """All-to-all block Laplacian with blocks K/n: L = (K/n) kron (n I - 11')."""
    k = np.asarray(k, dtype=float)
    struct = np.eye(n_robots) * n_robots - np.ones((n_robots, n_robots))
    return np.kron(struct, k / n_robots)

import heapq
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from pykc.gas_sim.state import CollisionEvent, CollisionLog, Particle, SystemState
from pykc.geometry import min_image_displacement, scatter
from pykc.scaling import RunawayDynamicsError, Vector

logger = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 1000000
TIE_TOLERANCE = 1e-12


def _collision_times(r: Vector, u: Vector, epsilon: float, horizon: Vector) -> Vector:
    """
    Earliest roots of |r + t u| = epsilon for stacked nearest-image displacements r and relative velocities u,
    or inf where the pair does not meet within the horizon.
    """
    a = np.sum(u * u, axis=-1)
    b = np.sum(r * u, axis=-1)
    c = np.sum(r * r, axis=-1) - epsilon ** 2
    discriminant = b * b - a * c
    approaching = (b < 0) & (a > 0) & (discriminant >= 0) & (c > 0)
    times = np.full(np.shape(a), np.inf)
    root = np.sqrt(np.where(approaching, discriminant, 0.0))
    # c / (-b + sqrt(disc)) equals (-b - sqrt(disc)) / a without cancellation
    times[approaching] = c[approaching] / (-b[approaching] + root[approaching])
    times[times > horizon] = np.inf
    return times


def predict_collision(p: Particle, q: Particle, horizon: float, epsilon: float) -> Optional[Tuple[float, Vector]]:
    """
    Earliest contact time in (0, horizon] of two spheres of diameter epsilon under free flight, using the
    nearest image of q seen from p.

    :return: (time, omega) with omega = (x_p - x_q) / epsilon at contact, or None
    """
    r = min_image_displacement(q.x, p.x)
    u = p.v - q.v
    t = float(_collision_times(r[None, :], u[None, :], epsilon, np.array([horizon]))[0])
    if not np.isfinite(t):
        return None
    contact = r + t * u
    return t, contact / np.linalg.norm(contact)


class _EventQueue:
    """
    Priority queue of pair predictions. Entries carry the collision counters of both particles at prediction
    time and are discarded lazily once either particle has collided again.
    """

    def __init__(self, state: SystemState, epsilon: float):
        self._state = state
        self._epsilon = epsilon
        self._counts = np.zeros(state.n, dtype=np.int64)
        self._heap: List[Tuple[float, int, int, int, int]] = []
        self._half_gap = 0.5 - epsilon
        self._speed_bound = 0.0
        self.next_rescan = state.time

    def _predict_from(self, i: int, others: Vector, now: float):
        positions = self._state.positions
        velocities = self._state.velocities
        r = min_image_displacement(positions[others], positions[i])
        u = velocities[i] - velocities[others]
        times = _collision_times(r, u, self._epsilon, np.full(len(others), self.next_rescan - now))
        for j, dt in zip(others[np.isfinite(times)], times[np.isfinite(times)]):
            a, b = (i, int(j)) if i < j else (int(j), i)
            heapq.heappush(self._heap, (now + float(dt), a, b, int(self._counts[a]), int(self._counts[b])))

    def rescan(self, now: float):
        speeds = np.linalg.norm(self._state.velocities, axis=1)
        self._speed_bound = float(np.max(speeds)) if len(speeds) else 0.0
        interval = self._half_gap / (2 * self._speed_bound) if self._speed_bound > 0 else np.inf
        self.next_rescan = now + interval
        self._heap = []
        n = self._state.n
        for i in range(n - 1):
            self._predict_from(i, np.arange(i + 1, n), now)

    def after_collision(self, a: int, b: int, now: float):
        self._counts[a] += 1
        self._counts[b] += 1
        speed = max(np.linalg.norm(self._state.velocities[a]), np.linalg.norm(self._state.velocities[b]))
        if speed > self._speed_bound:
            self._speed_bound = float(speed)
            self.next_rescan = min(self.next_rescan, now + self._half_gap / (2 * self._speed_bound))
        n = self._state.n
        for i in (a, b):
            others = np.array([j for j in range(n) if j != a and j != b], dtype=np.int64)
            if len(others):
                self._predict_from(i, others, now)

    def _valid(self, entry) -> bool:
        _, a, b, count_a, count_b = entry
        return self._counts[a] == count_a and self._counts[b] == count_b

    def pop(self) -> Optional[Tuple[float, int, int]]:
        while self._heap and not self._valid(self._heap[0]):
            heapq.heappop(self._heap)
        if not self._heap:
            return None
        first = heapq.heappop(self._heap)
        ties = []
        while self._heap and self._heap[0][0] - first[0] < TIE_TOLERANCE:
            entry = heapq.heappop(self._heap)
            if self._valid(entry):
                ties.append(entry)
        if ties:
            candidates = sorted([first] + ties, key=lambda e: (e[1], e[2]))
            logger.debug(f'event-time tie between pairs {[(e[1], e[2]) for e in candidates]}, '
                         f'processing ({candidates[0][1]}, {candidates[0][2]}) first')
            first = candidates[0]
            for entry in candidates[1:]:
                heapq.heappush(self._heap, entry)
        return first[0], first[1], first[2]

    def peek_time(self) -> float:
        while self._heap and not self._valid(self._heap[0]):
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else np.inf


def evolve(state: SystemState, t_end: float, max_events: int = DEFAULT_MAX_EVENTS):
    """
    Event-driven hard-sphere evolution up to t_end. The input state is not modified.

    :param state: admissible state
    :param t_end: final time, larger than state.time
    :param max_events: collision budget
    :return: (final state, collision log)
    """
    if not t_end > state.time:
        raise ValueError(f'invalid argument value: expecting t_end > {state.time}, got {t_end}')
    current = state.copy()
    epsilon = current.cfg.epsilon
    log = CollisionLog(current.tags, current.time)
    queue = _EventQueue(current, epsilon)
    queue.rescan(current.time)
    events = 0
    while True:
        next_time = queue.peek_time()
        if next_time > queue.next_rescan and queue.next_rescan < t_end:
            current.advance_free(queue.next_rescan - current.time)
            queue.rescan(current.time)
            continue
        if next_time > t_end:
            break
        event_time, a, b = queue.pop()
        current.advance_free(event_time - current.time)
        velocities = current.velocities
        r = min_image_displacement(current.positions[b], current.positions[a])
        omega = r / np.linalg.norm(r)
        if np.dot(omega, velocities[a] - velocities[b]) >= 0:
            # grazing contact: transmitted without scattering
            continue
        pre = (velocities[a].copy(), velocities[b].copy())
        velocities[a], velocities[b] = scatter(pre[0], pre[1], omega)
        log.append(CollisionEvent(event_time, (a, b), omega, pre, (velocities[a].copy(), velocities[b].copy())))
        events += 1
        if events > max_events:
            raise RunawayDynamicsError(f'more than {max_events} collision events before t = {t_end}')
        queue.after_collision(a, b, current.time)
    current.advance_free(t_end - current.time)
    log.end_time = t_end
    logger.debug(f'evolved {current.n} particles to t = {t_end} with {events} collisions')
    return current, log


def evolve_with_snapshots(state: SystemState, times: Sequence[float], max_events: int = DEFAULT_MAX_EVENTS):
    """
    Evolves through the increasing output times and returns the snapshots (state copies, including the input
    state when its time is listed) together with the concatenated log.
    """
    snapshots = []
    log = CollisionLog(state.tags, state.time)
    current = state
    for t in times:
        if t == current.time:
            snapshots.append(current.copy())
            continue
        current, part = evolve(current, t, max_events)
        log.extend(part)
        snapshots.append(current.copy())
    return snapshots, log

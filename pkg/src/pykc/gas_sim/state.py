import csv
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from pykc.geometry import min_image_displacement, wrap
from pykc.scaling import ScalingConfig, Vector

BACKGROUND = 0
TAGGED = 1

_LOG_FILE_COLUMNS = ('t', 'pair_a', 'pair_b')


class Particle:
    def __init__(self, id: int, x: Vector, v: Vector, tag: int = BACKGROUND):
        if tag not in (BACKGROUND, TAGGED):
            raise ValueError(f'invalid argument value: expecting tag in {{0, 1}}, got {tag}')
        self._id = int(id)
        self._x = np.asarray(x, dtype=float)
        self._v = np.asarray(v, dtype=float)
        self._tag = tag

    @property
    def id(self) -> int:
        return self._id

    @property
    def x(self) -> Vector:
        return self._x

    @property
    def v(self) -> Vector:
        return self._v

    @property
    def tag(self) -> int:
        return self._tag

    def to_json(self):
        return {'id': self._id, 'x': self._x.tolist(), 'v': self._v.tolist(), 'tag': self._tag}


class SystemState:
    """
    Phase state of the mixture at a common time. Particle data is held column-wise; the id of a particle is its
    row index. `pending` holds the event queue of an interrupted evolution and is dropped by `copy()`.
    """

    def __init__(self, cfg: ScalingConfig, positions: Vector, velocities: Vector, tags: Vector, time: float = 0.0,
                 seed: Optional[int] = None):
        positions = np.asarray(positions, dtype=float).reshape(-1, cfg.d)
        velocities = np.asarray(velocities, dtype=float).reshape(-1, cfg.d)
        tags = np.asarray(tags, dtype=int).reshape(-1)
        if not len(positions) == len(velocities) == len(tags):
            raise ValueError('invalid argument value: expecting equally many positions, velocities and tags')
        self._cfg = cfg
        self._positions = wrap(positions)
        self._velocities = velocities
        self._tags = tags
        self._time = float(time)
        self._seed = seed
        self.pending = None

    @property
    def cfg(self) -> ScalingConfig:
        return self._cfg

    @property
    def positions(self) -> Vector:
        return self._positions

    @property
    def velocities(self) -> Vector:
        return self._velocities

    @property
    def tags(self) -> Vector:
        return self._tags

    @property
    def time(self) -> float:
        return self._time

    @property
    def seed(self) -> Optional[int]:
        return self._seed

    @property
    def n(self) -> int:
        return len(self._tags)

    @property
    def n_tagged(self) -> int:
        return int(np.sum(self._tags == TAGGED))

    @property
    def particles(self) -> List[Particle]:
        return [Particle(i, self._positions[i], self._velocities[i], int(self._tags[i])) for i in range(self.n)]

    def particle(self, id: int) -> Particle:
        return Particle(id, self._positions[id], self._velocities[id], int(self._tags[id]))

    def copy(self):
        return SystemState(self._cfg, self._positions.copy(), self._velocities.copy(), self._tags.copy(), self._time,
                           self._seed)

    def momentum(self) -> Vector:
        return np.sum(self._velocities, axis=0)

    def energy(self) -> float:
        return float(np.sum(self._velocities * self._velocities))

    def pair_distances(self) -> Vector:
        if self.n < 2:
            return np.zeros(0)
        i, j = np.triu_indices(self.n, k=1)
        return np.linalg.norm(min_image_displacement(self._positions[i], self._positions[j]), axis=1)

    def min_separation(self) -> float:
        distances = self.pair_distances()
        return float(np.min(distances)) if distances.size else np.inf

    def is_admissible(self, tolerance: float = 0.0) -> bool:
        return self.min_separation() > self._cfg.epsilon - tolerance

    def advance_free(self, dt: float):
        """Free flight of every particle for dt, in place."""
        self._positions = wrap(self._positions + dt * self._velocities)
        self._time += dt

    def to_json(self):
        return {'cfg': self._cfg.to_json(), 'time': self._time, 'seed': self._seed,
                'particles': [p.to_json() for p in self.particles]}


class CollisionEvent:
    def __init__(self, time: float, pair: Tuple[int, int], omega: Vector,
                 pre: Tuple[Vector, Vector], post: Tuple[Vector, Vector]):
        self._time = float(time)
        self._pair = (int(pair[0]), int(pair[1]))
        self._omega = np.asarray(omega, dtype=float)
        self._pre = (np.asarray(pre[0], dtype=float), np.asarray(pre[1], dtype=float))
        self._post = (np.asarray(post[0], dtype=float), np.asarray(post[1], dtype=float))

    @property
    def time(self) -> float:
        return self._time

    @property
    def pair(self) -> Tuple[int, int]:
        return self._pair

    @property
    def omega(self) -> Vector:
        return self._omega

    @property
    def pre(self) -> Tuple[Vector, Vector]:
        return self._pre

    @property
    def post(self) -> Tuple[Vector, Vector]:
        return self._post

    def row(self) -> list:
        return ([repr(self._time), self._pair[0], self._pair[1]]
                + [repr(float(c)) for c in self._omega]
                + [repr(float(c)) for v in self._pre + self._post for c in v])

    def __eq__(self, other):
        return isinstance(other, CollisionEvent) and self.row() == other.row()


class CollisionLog:
    """Time-ordered collision history of one evolution, together with the tags of all particles."""

    def __init__(self, tags: Vector, start_time: float = 0.0):
        self._tags = np.asarray(tags, dtype=int).copy()
        self._events: List[CollisionEvent] = []
        self._start_time = float(start_time)
        self._end_time = float(start_time)

    @property
    def events(self) -> List[CollisionEvent]:
        return self._events

    @property
    def tags(self) -> Vector:
        return self._tags

    @property
    def n_particles(self) -> int:
        return len(self._tags)

    @property
    def start_time(self) -> float:
        return self._start_time

    @property
    def end_time(self) -> float:
        return self._end_time

    @end_time.setter
    def end_time(self, value: float):
        if value < self._end_time:
            raise ValueError('invalid argument value: expecting nondecreasing log end time')
        self._end_time = float(value)

    def append(self, event: CollisionEvent):
        # exact ties between disjoint pairs are logged with equal times, in pair order
        if self._events and event.time < self._events[-1].time:
            raise ValueError('invalid argument value: expecting time-ordered collision events')
        self._events.append(event)
        self._end_time = max(self._end_time, event.time)

    def extend(self, other):
        for event in other.events:
            self.append(event)
        self.end_time = max(self._end_time, other.end_time)

    def __len__(self):
        return len(self._events)

    def __iter__(self):
        yield from self._events

    def __eq__(self, other):
        return (isinstance(other, CollisionLog) and np.array_equal(self._tags, other._tags)
                and self._events == other._events)


def _metadata_row(cfg: ScalingConfig, seed: Optional[int]) -> List[str]:
    return [f'# d={cfg.d}', f'epsilon={cfg.epsilon!r}', f'mu={cfg.mu!r}', f'lambda={cfg.lam!r}',
            f'beta={cfg.beta!r}', f'seed={seed}']


def write_log_csv(path: str, log: CollisionLog, cfg: ScalingConfig, seed: Optional[int] = None):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    d = cfg.d
    columns = (_LOG_FILE_COLUMNS
               + tuple(f'omega_{i}' for i in range(d))
               + tuple(f'{stage}_{who}_{i}' for stage in ('pre', 'post') for who in ('a', 'b') for i in range(d)))
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(_metadata_row(cfg, seed))
        writer.writerow(columns)
        for event in log:
            writer.writerow(event.row())


def write_state_csv(path: str, state: SystemState):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    d = state.cfg.d
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(_metadata_row(state.cfg, state.seed) + [f'time={state.time!r}'])
        writer.writerow(('id', 'tag') + tuple(f'x_{i}' for i in range(d)) + tuple(f'v_{i}' for i in range(d)))
        for i in range(state.n):
            writer.writerow([i, int(state.tags[i])]
                            + [repr(float(c)) for c in state.positions[i]]
                            + [repr(float(c)) for c in state.velocities[i]])

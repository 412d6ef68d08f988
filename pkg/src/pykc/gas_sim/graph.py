from typing import Dict, List, Optional, Tuple

from scipy.cluster.hierarchy import DisjointSet

from pykc.gas_sim.state import TAGGED, CollisionEvent, CollisionLog


class CollisionGraph:
    """
    Collision graph of a log up to some time: one edge per first collision of a pair, recollisions (second or
    later collision of a pair) and cycle-closing events (collisions between already connected particles).
    """

    def __init__(self, components: List[List[int]], edges: List[Tuple[int, int]],
                 recollisions: List[CollisionEvent], cycle_closing: List[CollisionEvent]):
        self._components = components
        self._edges = edges
        self._recollisions = recollisions
        self._cycle_closing = cycle_closing

    @property
    def components(self) -> List[List[int]]:
        return self._components

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return self._edges

    @property
    def recollisions(self) -> List[CollisionEvent]:
        return self._recollisions

    @property
    def cycle_closing(self) -> List[CollisionEvent]:
        return self._cycle_closing

    def to_json(self):
        return {'components': self._components,
                'edges': [list(e) for e in self._edges],
                'recollisions': [e.time for e in self._recollisions],
                'cycle_closing': [e.time for e in self._cycle_closing]}


def collision_graph(log: CollisionLog, upto: Optional[float] = None) -> CollisionGraph:
    if upto is None:
        upto = log.end_time
    if upto > log.end_time:
        raise ValueError(f'invalid argument value: expecting upto <= {log.end_time}, got {upto}')
    forest = DisjointSet(range(log.n_particles))
    edges = []
    seen = set()
    recollisions = []
    cycle_closing = []
    for event in log:
        if event.time > upto:
            break
        a, b = event.pair
        pair = (min(a, b), max(a, b))
        if forest.connected(a, b):
            cycle_closing.append(event)
        if pair in seen:
            recollisions.append(event)
        else:
            seen.add(pair)
            edges.append(pair)
        forest.merge(a, b)
    components = sorted(sorted(int(i) for i in subset) for subset in forest.subsets())
    return CollisionGraph(components, edges, recollisions, cycle_closing)


def cycle_census(log: CollisionLog) -> Dict:
    """
    Counts collisions whose endpoints already were in one connected component at event time and records,
    per such collision, whether the component holds a tagged particle.
    """
    forest = DisjointSet(range(log.n_particles))
    tagged = {i: bool(log.tags[i] == TAGGED) for i in range(log.n_particles)}
    cycle_count = 0
    first_cycle_time = None
    tagged_involvement = []
    for event in log:
        a, b = event.pair
        if forest.connected(a, b):
            cycle_count += 1
            if first_cycle_time is None:
                first_cycle_time = event.time
            tagged_involvement.append(any(tagged[int(i)] for i in forest.subset(a)))
        forest.merge(a, b)
    return {'cycle_count': cycle_count,
            'first_cycle_time': first_cycle_time,
            'tagged_involvement': tagged_involvement}


def tagged_collision_fraction(log: CollisionLog) -> Tuple[int, int]:
    """(number of collisions between two tagged particles, total number of collisions)"""
    tagged_pairs = sum(1 for event in log
                       if log.tags[event.pair[0]] == TAGGED and log.tags[event.pair[1]] == TAGGED)
    return tagged_pairs, len(log)

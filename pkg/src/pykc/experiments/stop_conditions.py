import time
from datetime import timedelta
from math import ceil
from typing import Optional


def duration_str(duration: timedelta) -> str:
    """H:MM:SS.ffffff with microseconds rounded up."""
    microseconds = ceil(duration.total_seconds() * 1000000)
    return (f'{microseconds // 3600000000}'
            f':{microseconds // 60000000 % 60:02d}'
            f':{microseconds // 1000000 % 60:02d}'
            f'.{microseconds % 1000000:06d}')


class FarmProgress:
    """Counters of a replica farm as seen by stop conditions."""

    def __init__(self, total: int):
        self._total = total
        self._completed = 0
        self._start_ns = time.perf_counter_ns()

    @property
    def total(self) -> int:
        return self._total

    @property
    def completed(self) -> int:
        return self._completed

    @property
    def elapsed(self) -> timedelta:
        return timedelta(microseconds=(time.perf_counter_ns() - self._start_ns) / 1000)

    def record(self, replicas: int = 1):
        self._completed += replicas


class StopCondition:
    def stop(self, progress: FarmProgress) -> bool:
        """
        Determines whether a replica farm should stop before its next batch.

        :param progress: counters of the running farm
        :return: True, if the farm should stop, False otherwise
        """
        raise NotImplementedError

    def progress(self, progress: FarmProgress) -> Optional[float]:
        """
        :param progress: counters of the running farm
        :return: a value in [0,1] or None, if the progress cannot be determined
        """
        return None

    def to_json(self):
        return {'kind': type(self).__name__}


class And(StopCondition):
    def __init__(self, *conditions: StopCondition):
        self._conditions = conditions

    def stop(self, progress: FarmProgress):
        return all(c.stop(progress) for c in self._conditions)

    def progress(self, progress: FarmProgress):
        if not self._conditions:
            return None
        values = [c.progress(progress) for c in self._conditions]
        return None if None in values else min(values)

    def to_json(self):
        return {'kind': 'And', 'conditions': [c.to_json() for c in self._conditions]}


class Or(StopCondition):
    def __init__(self, *conditions: StopCondition):
        self._conditions = conditions

    def stop(self, progress: FarmProgress):
        return not self._conditions or any(c.stop(progress) for c in self._conditions)

    def progress(self, progress: FarmProgress):
        if not self._conditions:
            return None
        values = [c.progress(progress) for c in self._conditions]
        return None if None in values else max(values)

    def to_json(self):
        return {'kind': 'Or', 'conditions': [c.to_json() for c in self._conditions]}


class Replicas(StopCondition):
    def __init__(self, replicas: int):
        if replicas < 1:
            raise ValueError(f'invalid argument value: expecting replicas >= 1, got {replicas}')
        self._replicas = replicas

    def stop(self, progress: FarmProgress):
        return progress.completed >= self._replicas

    def progress(self, progress: FarmProgress):
        return min(1.0, progress.completed / self._replicas)

    def to_json(self):
        return {'kind': 'Replicas', 'replicas': self._replicas}


class Duration(StopCondition):
    def __init__(self, duration: timedelta):
        self._duration = duration

    def stop(self, progress: FarmProgress):
        return progress.elapsed >= self._duration

    def progress(self, progress: FarmProgress):
        return min(1.0, progress.elapsed / self._duration)

    def to_json(self):
        return {'kind': 'Duration', 'duration': duration_str(self._duration)}

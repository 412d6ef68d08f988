import hashlib
import json
import time
from datetime import datetime, timedelta
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from pykc.experiments.stop_conditions import duration_str


def code_version() -> str:
    try:
        return metadata.version('pykc')
    except metadata.PackageNotFoundError:
        return '0+unknown'


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as file:
        for chunk in iter(lambda: file.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """
    Provenance record of one experiment run: config hash, code version, replica seeds, wall clock and the
    checksums of every emitted file. `partial` stays set until the run finishes normally.
    """

    def __init__(self, experiment: str, config_hash: str, config: Dict[str, str], seeds: List[int]):
        self.experiment = experiment
        self.config_hash = config_hash
        self.config = dict(config)
        self.code_version = code_version()
        self.seeds = [int(s) for s in seeds]
        self.start_timestamp = datetime.now()
        self._start_ns = time.perf_counter_ns()
        self._wall_clock: Optional[timedelta] = None
        self.outputs: Dict[str, str] = {}
        self.completed_replicas = 0
        self.partial = True
        self.terminated_early = False
        self.error: Optional[Dict[str, str]] = None

    @property
    def wall_clock(self) -> timedelta:
        if self._wall_clock is None:
            return timedelta(microseconds=(time.perf_counter_ns() - self._start_ns) / 1000)
        return self._wall_clock

    def record_output(self, path: str):
        self.outputs[str(path)] = file_checksum(path)

    def record_error(self, error: BaseException):
        self.error = {'kind': type(error).__name__, 'message': getattr(error, 'message', str(error))}

    def record_finished(self, terminated_early: bool = False):
        self._wall_clock = self.wall_clock
        self.terminated_early = terminated_early
        self.partial = terminated_early or self.error is not None

    def verify(self) -> List[str]:
        """Paths whose current checksum differs from the recorded one (missing files included)."""
        mismatched = []
        for path, checksum in self.outputs.items():
            if not Path(path).exists() or file_checksum(path) != checksum:
                mismatched.append(path)
        return mismatched

    def to_json(self):
        return {
            'experiment': self.experiment,
            'config_hash': self.config_hash,
            'config': dict(self.config),
            'code_version': self.code_version,
            'seeds': list(self.seeds),
            'start_timestamp': self.start_timestamp.strftime('%Y-%m-%dT%H:%M:%S.%f'),
            'wall_clock': duration_str(self.wall_clock),
            'completed_replicas': self.completed_replicas,
            'partial': self.partial,
            'terminated_early': self.terminated_early,
            'error': self.error,
            'outputs': dict(self.outputs)
        }

    def write(self, path: str):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as file:
            json.dump(self.to_json(), file, indent=4)


def read_manifest(path: str) -> Dict:
    with open(path) as file:
        return json.load(file)

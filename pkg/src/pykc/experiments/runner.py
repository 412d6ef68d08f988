import logging
import os
import signal
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import timedelta
from math import ceil, floor
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from pykc.experiments.config import ExperimentConfig
from pykc.experiments.manifest import RunManifest
from pykc.experiments.pipelines import PIPELINES
from pykc.experiments.stop_conditions import Duration, FarmProgress, Or, Replicas, StopCondition
from pykc.scaling import FarmStoppedError

logger = logging.getLogger(__name__)

WORKERS_ENVIRONMENT_VARIABLE = 'KC_WORKERS'
MANIFEST_FILE = 'manifest.json'
LOG_DUMP_INTERVAL_NS = 3e11

# register SIGINT handler to end replica farms early
SIGINT_handlers = set()


class SIGINTHandler:
    def __init__(self):
        self.SIGINT_received = False

    def __enter__(self):
        SIGINT_handlers.add(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        SIGINT_handlers.remove(self)


original_sigint_handler = signal.getsignal(signal.SIGINT)


def sigint_handler(*args):
    if SIGINT_handlers:
        print('SIGINT received, terminating early')
        for handler in SIGINT_handlers:
            handler.SIGINT_received = True
    else:
        original_sigint_handler(*args)


signal.signal(signal.SIGINT, sigint_handler)


def resolve_workers(workers: Optional[int] = None) -> int:
    """KC_WORKERS overrides the requested worker count."""
    override = os.environ.get(WORKERS_ENVIRONMENT_VARIABLE)
    if override:
        try:
            workers = int(override)
        except ValueError:
            raise ValueError(f'invalid argument value: {WORKERS_ENVIRONMENT_VARIABLE}={override} is not an integer')
    return max(1, workers or 1)


def _clock_str(seconds: int) -> str:
    return f'{seconds // 3600}:{seconds // 60 % 60:02d}:{seconds % 60:02d}'


class RunContext:
    """
    What a pipeline sees of a running experiment: the config, the output directory, deterministic seed
    streams and the replica farm.
    """

    def __init__(self, cfg: ExperimentConfig, out_dir: Path, manifest: RunManifest, workers: int, verbosity: int,
                 stop_condition: Optional[StopCondition], sigint: Optional[SIGINTHandler] = None):
        self._cfg = cfg
        self._out_dir = out_dir
        self._manifest = manifest
        self._workers = workers
        self._verbosity = verbosity
        self._stop_condition = stop_condition
        self._sigint = sigint
        self._last_line_length = 0
        self._last_log_dump: Optional[int] = None

    @property
    def cfg(self) -> ExperimentConfig:
        return self._cfg

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    @property
    def manifest(self) -> RunManifest:
        return self._manifest

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def verbosity(self) -> int:
        return self._verbosity

    def path(self, name: str) -> str:
        return str(self._out_dir / name)

    def register(self, path: str):
        self._manifest.record_output(path)

    def replica_seeds(self, count: int, stream: int = 0) -> List[int]:
        """Per-replica seeds derived from (base seed, stream), independent of the worker count."""
        sequence = np.random.SeedSequence(self._cfg.seed, spawn_key=(stream,))
        seeds = [int(s) for s in sequence.generate_state(count, dtype=np.uint64)]
        self._manifest.seeds.extend(seeds)
        return seeds

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self._cfg.seed, spawn_key=(1000 + stream,)))

    def flush_log(self):
        self._manifest.write(self.path(MANIFEST_FILE))
        self._last_log_dump = time.perf_counter_ns()

    def _print_progress(self, progress: FarmProgress, condition: StopCondition, label: str):
        elapsed_seconds = int(progress.elapsed.total_seconds())
        fraction = condition.progress(progress)
        if fraction is None:
            spinner_char = ('-', '\\', '|', '/')[int(progress.elapsed.total_seconds() * 2) % 4]
            line = f'\r{label}: {spinner_char} {_clock_str(elapsed_seconds)}\r'
        else:
            if fraction > 0:
                eta_str = _clock_str(ceil(progress.elapsed.total_seconds() / fraction * (1 - fraction)))
            else:
                eta_str = '?'
            filled = '█' * floor(fraction * 60)
            empty = ' ' * ceil((1 - fraction) * 60)
            line = (f'\r{label}: |{filled}{empty}| {fraction * 100:6.2f}% '
                    f'{_clock_str(elapsed_seconds)} (ETA: {eta_str})')
        print(line, end='')
        self._last_line_length = len(line)

    def map_replicas(self, function: Callable[[int], dict], seeds: Sequence[int], minimum: int = 1,
                     label: str = 'replicas') -> List[dict]:
        """
        Runs function(seed) for every seed, in batches of the worker count, checking the stop condition and
        SIGINT between batches. Results come back in seed order whatever the worker count.

        :param minimum: fewest completed replicas the pipeline can use when the farm stops early
        :return: the results of the completed prefix of seeds
        """
        progress = FarmProgress(len(seeds))
        condition = Or(Replicas(len(seeds)), self._stop_condition) if self._stop_condition else Replicas(len(seeds))
        results = []
        executor = ProcessPoolExecutor(max_workers=self._workers) if self._workers > 1 else None
        try:
            while not condition.stop(progress) and not (self._sigint and self._sigint.SIGINT_received):
                batch = seeds[len(results):len(results) + max(self._workers, 1)]
                if executor is None:
                    batch_results = [function(seed) for seed in batch]
                else:
                    batch_results = list(executor.map(function, batch))
                results.extend(batch_results)
                progress.record(len(batch))
                self._manifest.completed_replicas += len(batch)
                if self._verbosity >= 3:
                    for seed, result in zip(batch, batch_results):
                        print('\r' + ' ' * self._last_line_length + '\r', end='')
                        print(f'    replica seed {seed}: {result}')
                if self._verbosity >= 1:
                    self._print_progress(progress, condition, label)
                if self._last_log_dump is None or time.perf_counter_ns() - self._last_log_dump > LOG_DUMP_INTERVAL_NS:
                    self.flush_log()
        finally:
            if executor is not None:
                executor.shutdown()
        if self._verbosity >= 1:
            print()
        if len(results) < len(seeds):
            self._manifest.terminated_early = True
            logger.warning(f'{label}: stopped after {len(results)} of {len(seeds)} replicas')
            if len(results) < minimum:
                raise FarmStoppedError(f'{label}: stopped after {len(results)} replicas, {minimum} needed',
                                       len(results))
        if self._verbosity >= 2:
            print(f'{label}: {len(results)} replicas in {progress.elapsed}')
        return results


class ExperimentRunner:
    def __init__(self):
        self._verbosity = 1
        self._workers: Optional[int] = None
        self._out_dir: Optional[str] = None
        self._stop_condition: Optional[StopCondition] = None

    def verbosity(self, verbosity: int):
        self._verbosity = verbosity
        return self

    def workers(self, workers: Optional[int]):
        self._workers = workers
        return self

    def out_dir(self, out_dir: Optional[str]):
        self._out_dir = out_dir
        return self

    def stop_condition(self, stop_condition: Optional[StopCondition]):
        self._stop_condition = stop_condition
        return self

    def run(self, cfg: ExperimentConfig) -> RunManifest:
        """
        Executes the configured pipeline and writes its results plus manifest.json into the output directory.
        The manifest is written even when the pipeline fails; it then keeps `partial = True` and the error.
        """
        out_dir = Path(self._out_dir if self._out_dir is not None else cfg.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        stop_condition = self._stop_condition
        if stop_condition is None and cfg['budget.duration'] is not None:
            stop_condition = Duration(timedelta(seconds=cfg['budget.duration']))
        manifest = RunManifest(cfg.experiment, cfg.hash(), cfg.to_json(), [])
        workers = resolve_workers(self._workers)
        if self._verbosity >= 2:
            print(f'running {cfg.experiment} with {workers} worker(s) into {out_dir}')
        with SIGINTHandler() as h:
            context = RunContext(cfg, out_dir, manifest, workers, self._verbosity, stop_condition, h)
            context.flush_log()
            try:
                PIPELINES[cfg.experiment](context)
            except BaseException as e:
                manifest.record_error(e)
                raise
            finally:
                manifest.record_finished(manifest.terminated_early or h.SIGINT_received)
                context.flush_log()
        if self._verbosity >= 1:
            print(f'finished {cfg.experiment}: {len(manifest.outputs)} file(s) in {out_dir}')
        return manifest


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None, verbosity: int = 0,
                   out_dir: Optional[str] = None) -> RunManifest:
    return ExperimentRunner().verbosity(verbosity).workers(workers).out_dir(out_dir).run(cfg)

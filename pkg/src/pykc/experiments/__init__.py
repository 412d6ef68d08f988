from .config import ConfigReport, ExperimentConfig, SCHEMA, parse_config_text, validate_config
from .manifest import RunManifest, read_manifest
from .stop_conditions import And, Duration, FarmProgress, Or, Replicas, StopCondition
from .runner import ExperimentRunner, RunContext, resolve_workers, run_experiment
from .aggregate import AggregateRow, aggregate, write_aggregate_csv

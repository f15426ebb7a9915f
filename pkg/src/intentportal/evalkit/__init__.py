from .baselines import HistoryEntry, baseline_bayes, baseline_mfu, baseline_mru
from .metrics import DayStats, MetricsReport, Trial, metrics
from .replay import (
    build_engine,
    read_trials,
    replay_baseline,
    replay_engine,
    run_ablation,
    write_trials,
)
from .stream import (
    StreamConfig,
    SyntheticStream,
    TrialInput,
    generate_stream,
    read_trial_inputs,
    write_stream,
)

__all__ = [
    "HistoryEntry",
    "baseline_bayes",
    "baseline_mfu",
    "baseline_mru",
    "DayStats",
    "MetricsReport",
    "Trial",
    "metrics",
    "build_engine",
    "read_trials",
    "replay_baseline",
    "replay_engine",
    "run_ablation",
    "write_trials",
    "StreamConfig",
    "SyntheticStream",
    "TrialInput",
    "generate_stream",
    "read_trial_inputs",
    "write_stream",
]

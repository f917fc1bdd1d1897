from .corrupt import CorruptedPolicy, CorruptionSpec
from .trials import TrialMetrics, commanded_motion, run_trial
from .sweep import (
    guidance_sweep,
    plot_sweep,
    read_trials_jsonl,
    summarize,
    write_summary_csv,
    write_trials_jsonl,
)

__all__ = [
    "CorruptedPolicy", "CorruptionSpec",
    "TrialMetrics", "commanded_motion", "run_trial",
    "guidance_sweep", "plot_sweep", "read_trials_jsonl", "summarize",
    "write_summary_csv", "write_trials_jsonl",
]

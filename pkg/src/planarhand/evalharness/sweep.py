"""Guidance-strength sweeps, result files, and aggregation."""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass

from .corrupt import CorruptionSpec
from .trials import TrialMetrics, run_trial


def write_trials_jsonl(path, trials) -> None:
    with open(path, "w") as fh:
        for t in trials:
            fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def read_trials_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                out.append(
                    TrialMetrics(
                        seed=doc["seed"],
                        assisted=doc["assisted"],
                        alpha_n=doc["alpha_n"],
                        alpha_g=doc["alpha_g"],
                        kind=doc["kind"],
                        duration=doc["duration_s"],
                        goals=doc["goals"],
                        budget=doc["budget_s"],
                        dropped=doc["dropped"],
                    )
                )
    return out


def summarize(trials) -> list:
    """Pure fold: one row per (kind, alpha_n, assisted, alpha_g) cell."""
    cells = {}
    for t in trials:
        key = (t.kind, t.alpha_n, t.assisted, t.alpha_g)
        cells.setdefault(key, []).append(t)
    rows = []
    for key in sorted(cells):
        kind, alpha_n, assisted, alpha_g = key
        ts = cells[key]
        durations = [t.duration for t in ts]
        goals = [t.goals for t in ts]
        minutes = sum(durations) / 60.0
        rows.append(
            {
                "kind": kind,
                "alpha_n": alpha_n,
                "assisted": assisted,
                "alpha_g": alpha_g,
                "n": len(ts),
                "mean_duration_s": statistics.mean(durations),
                "median_duration_s": statistics.median(durations),
                "mean_goals": statistics.mean(goals),
                "median_goals": statistics.median(goals),
                "total_goals": sum(goals),
                "goals_per_minute": (sum(goals) / minutes) if minutes > 0 else 0.0,
                "drop_rate": sum(t.dropped for t in ts) / len(ts),
            }
        )
    return rows


def write_summary_csv(path, rows) -> None:
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def guidance_sweep(
    cache,
    spec: CorruptionSpec,
    alpha_g_list,
    seeds,
    budget: float,
    controller,
    cfg=None,
    dr=None,
    include_unassisted: bool = True,
    progress=None,
) -> list:
    """Full factorial (alpha_g x seed), plus an unassisted baseline column."""
    trials = []
    if include_unassisted:
        for seed in seeds:
            t = run_trial(cache, spec, False, seed, budget, cfg=cfg, dr=dr)
            trials.append(t)
            if progress:
                progress(t)
    for ag in alpha_g_list:
        for seed in seeds:
            t = run_trial(
                cache, spec, True, seed, budget, cfg=cfg, dr=dr,
                controller=controller, alpha_g=ag,
            )
            trials.append(t)
            if progress:
                progress(t)
    return trials


def plot_sweep(path, rows) -> None:
    """Duration and goals against guidance strength, one PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    assisted = [r for r in rows if r["assisted"]]
    baseline = [r for r in rows if not r["assisted"]]
    assisted.sort(key=lambda r: r["alpha_g"])
    xs = [r["alpha_g"] for r in assisted]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(xs, [r["median_duration_s"] for r in assisted], "o-", label="assisted")
    if baseline:
        ax1.axhline(baseline[0]["median_duration_s"], color="gray", ls="--", label="unassisted")
    ax1.set_xlabel("guidance strength")
    ax1.set_ylabel("median duration to failure (s)")
    ax1.legend()
    ax2.plot(xs, [r["mean_goals"] for r in assisted], "o-", label="assisted")
    if baseline:
        ax2.axhline(baseline[0]["mean_goals"], color="gray", ls="--", label="unassisted")
    ax2.set_xlabel("guidance strength")
    ax2.set_ylabel("mean goals per trial")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

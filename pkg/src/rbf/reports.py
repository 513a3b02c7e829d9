"""CSV summaries and rendered figures for simulation traces.

Every report is written twice: delimited data at full precision for
downstream tooling, and a matplotlib figure for eyeballing. Printed
numbers are rounded to one decimal; stored CSV keeps full precision.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .continuum_sim import ScenarioConfig, SimTrace, expected_decay_period, staleness_series
from .pipeline_engine import MODEL_TYPES
from .stats import EmptySelectionError, IntervalStats, interval_stats_streaming, publish_gaps_min

TIER_COLORS = {"dedicated": "tab:blue"}
_FALLBACK_COLORS = ["tab:orange", "tab:green", "tab:red", "tab:purple"]


def write_trace_ndjson(trace: SimTrace, path: Path) -> None:
    path.write_text(trace.to_ndjson())


def write_publish_csv(trace: SimTrace, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_ms", "model_type", "tier", "cutoff_ms", "instance_id", "allocation_id"])
        for e in trace.of_kind("publish"):
            writer.writerow(
                [e["t_ms"], e["model_type"], e["tier"], e["cutoff_ms"],
                 e["instance_id"], e["allocation_id"] or ""]
            )


def tier_combinations(trace: SimTrace) -> list[tuple[str, tuple[str, ...]]]:
    tiers = sorted({e["tier"] for e in trace.of_kind("publish")})
    combos: list[tuple[str, tuple[str, ...]]] = [(t, (t,)) for t in tiers]
    if len(tiers) > 1:
        combos.append(("+".join(tiers), tuple(tiers)))
    return combos


def interval_summary(trace: SimTrace) -> list[IntervalStats]:
    rows = []
    for model_type in MODEL_TYPES:
        for label, tiers in tier_combinations(trace):
            times = [e["t_ms"] for e in trace.publishes(model_type, tiers)]
            try:
                rows.append(
                    interval_stats_streaming(publish_gaps_min(times), f"{model_type}/{label}")
                )
            except EmptySelectionError:
                continue
    return rows


def write_interval_csv(rows: list[IntervalStats], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["combination", "count", "min_min", "avg_min", "max_min", "std_min"])
        for r in rows:
            writer.writerow([r.label, r.count, r.min_min, r.avg_min, r.max_min, r.std_min])


def write_staleness_csv(trace: SimTrace, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model_type", "t_ms", "age_min"])
        for model_type in MODEL_TYPES:
            try:
                series = staleness_series(trace, model_type)
            except Exception:
                continue
            for t, age in series:
                writer.writerow([model_type, t, age])


def write_deploy_history_csv(trace: SimTrace, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_ms", "model_type", "cutoff_ms", "source_tier", "decision"])
        for e in trace.of_kind("deploy_decision"):
            writer.writerow([e["t_ms"], e["model_type"], e["cutoff_ms"], e["tier"], e["decision"]])


def _tier_color(tier: str, tiers: list[str]) -> str:
    if tier in TIER_COLORS:
        return TIER_COLORS[tier]
    others = [t for t in tiers if t not in TIER_COLORS]
    return _FALLBACK_COLORS[others.index(tier) % len(_FALLBACK_COLORS)]


def plot_publish_timeline(trace: SimTrace, path: Path) -> None:
    publishes = trace.of_kind("publish")
    tiers = sorted({e["tier"] for e in publishes})
    fig, ax = plt.subplots(figsize=(10, 3.2))
    rows = {m: i for i, m in enumerate(MODEL_TYPES)}
    seen = set()
    for e in publishes:
        label = e["tier"] if e["tier"] not in seen else None
        seen.add(e["tier"])
        ax.scatter(
            e["t_ms"] / 3_600_000, rows[e["model_type"]],
            color=_tier_color(e["tier"], tiers), s=18, label=label,
            marker="o" if e["tier"] == "dedicated" else "s",
        )
    ax.set_yticks(list(rows.values()), [m.upper() for m in rows])
    ax.set_xlabel("time (h)")
    ax.set_title("Model publish events by tier")
    if seen:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_staleness(trace: SimTrace, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(10, 3.2))
    plotted = False
    for model_type in MODEL_TYPES:
        try:
            series = staleness_series(trace, model_type)
        except Exception:
            continue
        ax.plot(
            [t / 3_600_000 for t, _ in series], [age for _, age in series],
            label=model_type.upper(), linewidth=1,
        )
        plotted = True
    ax.set_xlabel("time (h)")
    ax.set_ylabel("deployed model age (min)")
    ax.set_title("Deployed-model staleness")
    if plotted:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_simulation_reports(trace: SimTrace, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace_ndjson(trace, out_dir / "trace.ndjson")
    write_publish_csv(trace, out_dir / "publishes.csv")
    write_interval_csv(interval_summary(trace), out_dir / "intervals.csv")
    write_staleness_csv(trace, out_dir / "staleness.csv")
    write_deploy_history_csv(trace, out_dir / "deploy_history.csv")
    plot_publish_timeline(trace, out_dir / "publish_timeline.png")
    plot_staleness(trace, out_dir / "staleness.png")


# --------------------------------------------------------------------------
# Decay report


def _time_averaged_mae(curve, period_min: float, steps: int = 200) -> float:
    # Mean MAE while the deployed model's age sweeps 0..period between
    # refreshes (trapezoid rule).
    if period_min == 0:
        return curve.mae_at(0.0)
    h = period_min / steps
    total = 0.5 * (curve.mae_at(0.0) + curve.mae_at(period_min))
    total += sum(curve.mae_at(i * h) for i in range(1, steps))
    return total * h / period_min


def decay_report_rows(config: ScenarioConfig) -> list[dict]:
    rows = []
    for k in range(config.reference_extra_generations + 1):
        period = expected_decay_period(config.base_period_min, k)
        row = {
            "extra_generations": k,
            "expected_period_min": period,
            "error_floor_mps": config.measurement_error_band[0],
        }
        for model_type, curve in sorted(config.decay_curves.items()):
            row[f"avg_mae_{model_type}"] = _time_averaged_mae(curve, period)
        rows.append(row)
    return rows


def write_decay_report(config: ScenarioConfig, out_csv: Path) -> list[dict]:
    rows = decay_report_rows(config)
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    plot_decay_report(config, rows, out_csv.with_suffix(".png"))
    return rows


def plot_decay_report(config: ScenarioConfig, rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ks = [r["extra_generations"] for r in rows]
    for model_type in sorted(config.decay_curves):
        ax.plot(ks, [r[f"avg_mae_{model_type}"] for r in rows], marker="o",
                markersize=3, label=model_type.upper())
    ax.axhline(config.measurement_error_band[0], linestyle="--", color="gray",
               label="measurement error floor")
    ax.set_xlabel("extra generations per base period")
    ax.set_ylabel("time-averaged MAE (m/s)")
    ax.set_title("Accuracy vs. opportunistic regeneration rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Report writer tests: CSV contents and rendered figures."""

import csv

import pytest

from rbf.continuum_sim import ScenarioConfig, run_scenario
from rbf.pipeline_engine import BatchTierConfig, StageDurations
from rbf.reports import (
    decay_report_rows,
    interval_summary,
    tier_combinations,
    write_decay_report,
    write_simulation_reports,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def combo_trace():
    return run_scenario(
        ScenarioConfig(horizon_h=72.0, seed=9, batch_tiers=[BatchTierConfig()])
    )


def test_simulation_reports_outputs(tmp_path, combo_trace):
    write_simulation_reports(combo_trace, tmp_path)
    for name in ("trace.ndjson", "publishes.csv", "intervals.csv",
                 "staleness.csv", "deploy_history.csv"):
        assert (tmp_path / name).stat().st_size > 0
    for name in ("publish_timeline.png", "staleness.png"):
        assert (tmp_path / name).read_bytes()[:8] == PNG_MAGIC


def test_publish_csv_matches_trace(tmp_path, combo_trace):
    write_simulation_reports(combo_trace, tmp_path)
    with open(tmp_path / "publishes.csv") as f:
        rows = list(csv.DictReader(f))
    publishes = combo_trace.of_kind("publish")
    assert len(rows) == len(publishes)
    assert int(rows[0]["time_ms"]) == publishes[0]["t_ms"]
    assert rows[0]["model_type"] == publishes[0]["model_type"]


def test_tier_combinations(combo_trace):
    combos = dict(tier_combinations(combo_trace))
    assert combos["dedicated"] == ("dedicated",)
    assert combos["batch"] == ("batch",)
    assert set(combos["batch+dedicated"]) == {"batch", "dedicated"}


def test_interval_summary_rows(combo_trace):
    rows = {r.label: r for r in interval_summary(combo_trace)}
    assert "fno/dedicated" in rows
    assert "fno/batch+dedicated" in rows
    # Merging tiers can only tighten the mean gap.
    assert rows["fno/batch+dedicated"].avg_min < rows["fno/dedicated"].avg_min


def test_decay_report(tmp_path):
    config = ScenarioConfig(horizon_h=1.0)
    rows = write_decay_report(config, tmp_path / "decay.csv")
    assert len(rows) == config.reference_extra_generations + 1
    assert rows[0]["extra_generations"] == 0
    assert rows[0]["expected_period_min"] == pytest.approx(134.8)
    assert rows[1]["expected_period_min"] == pytest.approx(67.4)
    assert all(r["error_floor_mps"] == 0.44 for r in rows)
    # More regenerations never raise the time-averaged error.
    for model_type in config.decay_curves:
        key = f"avg_mae_{model_type}"
        maes = [r[key] for r in rows]
        assert all(a >= b for a, b in zip(maes, maes[1:]))
    assert (tmp_path / "decay.csv").stat().st_size > 0
    assert (tmp_path / "decay.png").read_bytes()[:8] == PNG_MAGIC


def test_decay_rows_cover_reference_and_computed(tmp_path):
    config = ScenarioConfig(horizon_h=1.0, reference_extra_generations=26)
    rows = decay_report_rows(config)
    assert rows[-1]["extra_generations"] == 26
    assert rows[-1]["expected_period_min"] == pytest.approx(134.8 / 27)

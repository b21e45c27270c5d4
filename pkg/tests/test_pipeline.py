"""Tests for pipeline orchestration, configuration, metrics and export."""

import math

import numpy as np
import pytest
import yaml

from isactrack import (
    ConfigError,
    PipelineConfig,
    PipelineStageError,
    ScenarioError,
    StaticPath,
    TargetTrajectory,
    Track,
    TrackStatus,
    compute_metrics,
    config_hash,
    export_report,
    load_pipeline_config,
    pipeline_from_dict,
    run_pipeline,
)
from isactrack.cli import main as cli_main
from isactrack.pipeline import apply_overrides, pipeline_to_dict
from isactrack.tracking import TrackPoint


def walker_config(**kwargs) -> PipelineConfig:
    """Small, fast scenario: one walker on the default 26 GHz numerology with
    a reduced antenna/tone grid."""
    config = PipelineConfig()
    config.scenario.antenna_count = 4
    config.scenario.rs_subcarrier_count = 32
    config.scenario.frame_count = 120
    config.scenario.snr_db = 25.0
    config.scenario.targets = [
        TargetTrajectory(
            waypoints=[(0.0, 2.0, 3.0), (0.48, 2.5, 3.6)], reflectivity=0.1 + 0.0j
        )
    ]
    config.seed = 3
    config.mti_window = 20
    config.ifft_factor = 8
    config.window_frames = 40
    config.cluster_min_pts = 3
    config.max_targets = 2
    config.tracker.confirm_hits = 3
    config.tracker.max_misses = 10
    config.tracker.min_confirmed_steps = 5
    for key, value in kwargs.items():
        setattr(config, key, value)
    return config


def static_config() -> PipelineConfig:
    config = PipelineConfig()
    config.scenario.antenna_count = 4
    config.scenario.rs_subcarrier_count = 32
    config.scenario.frame_count = 60
    config.scenario.clutter_paths = [StaticPath(delay_ns=50.0, aoa_deg=40.0)]
    config.mti_window = 10
    return config


@pytest.fixture(scope="module")
def walker_report():
    return run_pipeline(walker_config())


# --- configuration --------------------------------------------------------------


def test_pipeline_from_dict_defaults():
    config = pipeline_from_dict({})
    assert config.mti_window == 50
    assert config.cpi_stride is None
    assert config.tracker.gate_m == 1.0


def test_pipeline_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown pipeline keys"):
        pipeline_from_dict({"mti_windw": 50})
    with pytest.raises(ConfigError, match="unknown tracker keys"):
        pipeline_from_dict({"tracker": {"gate": 1.0}})
    with pytest.raises(ScenarioError, match="unknown scenario keys"):
        pipeline_from_dict({"scenario": {"bogus": 1}})
    with pytest.raises(ConfigError):
        pipeline_from_dict(["not", "a", "mapping"])


def test_pipeline_dict_round_trip():
    config = walker_config()
    config.tracker.gate_m = 0.8
    config.cpi_stride = 4
    again = pipeline_from_dict(pipeline_to_dict(config))
    assert pipeline_to_dict(again) == pipeline_to_dict(config)


def test_load_pipeline_config_and_overrides(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        yaml.safe_dump({"seed": 5, "scenario": {"frame_count": 32}}), encoding="utf-8"
    )
    config = load_pipeline_config(path)
    assert config.seed == 5
    assert config.scenario.frame_count == 32

    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    apply_overrides(
        raw,
        [
            ("tracker.gate_m", "0.5"),
            ("seed", "7"),
            ("scenario.snr_db", "null"),
            ("scenario.tx_position_m", "[8, 1]"),
        ],
    )
    config = pipeline_from_dict(raw)
    assert config.tracker.gate_m == 0.5
    assert config.seed == 7
    assert config.scenario.snr_db is None
    assert config.scenario.tx_position_m == (8.0, 1.0)


def test_config_hash_ignores_output_dir_only():
    a = walker_config(output_dir="first")
    b = walker_config(output_dir="second")
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    c = walker_config(seed=99)
    assert config_hash(c) != config_hash(a)


# --- metrics --------------------------------------------------------------------


def make_track(track_id, positions_by_frame, status=TrackStatus.CONFIRMED) -> Track:
    track = Track(track_id=track_id, x=np.zeros(4), cov=np.eye(4), status=status)
    track.confirmed_steps = len(positions_by_frame)
    for frame, (x, y) in sorted(positions_by_frame.items()):
        track.history.append(TrackPoint(frame, x, y, False))
    return track


def test_metrics_identical_tracks_zero_error():
    truth = {f: [(0, np.array([0.1 * f, 2.0]))] for f in range(10)}
    track = make_track(0, {f: (0.1 * f, 2.0) for f in range(10)})
    metrics = compute_metrics([track], truth)
    assert np.all(metrics.errors_m == 0.0)
    assert metrics.median_error_m == 0.0
    assert metrics.identity_swaps == 0
    assert metrics.matched_samples == 10
    assert metrics.truth_samples == 10


def test_metrics_constant_offset_median():
    truth = {f: [(0, np.array([1.0 * f, 0.0]))] for f in range(7)}
    track = make_track(0, {f: (1.0 * f + 0.1, 0.0) for f in range(7)})
    metrics = compute_metrics([track], truth)
    assert metrics.median_error_m == pytest.approx(0.1)
    assert metrics.p90_error_m == pytest.approx(0.1)
    assert metrics.identity_swaps == 0


def test_metrics_counts_label_swap():
    """Two stationary truths; the tracks exchange places mid-run."""
    truth = {
        f: [(0, np.array([0.0, 0.0])), (1, np.array([5.0, 0.0]))] for f in range(10)
    }
    track_a = make_track(
        0, {f: ((0.0, 0.0) if f < 5 else (5.0, 0.0)) for f in range(10)}
    )
    track_b = make_track(
        1, {f: ((5.0, 0.0) if f < 5 else (0.0, 0.0)) for f in range(10)}
    )
    metrics = compute_metrics([track_a, track_b], truth)
    assert metrics.identity_swaps == 2
    assert metrics.identity_swaps >= 1


def test_metrics_extra_track_unmatched():
    truth = {0: [(0, np.array([0.0, 0.0]))]}
    near = make_track(0, {0: (0.05, 0.0)})
    far = make_track(1, {0: (9.0, 9.0)})
    metrics = compute_metrics([near, far], truth)
    assert metrics.matched_samples == 1
    assert metrics.errors_m.tolist() == pytest.approx([0.05])


def test_metrics_empty_tracks():
    truth = {0: [(0, np.array([0.0, 0.0]))], 1: [(0, np.array([1.0, 0.0]))]}
    metrics = compute_metrics([], truth)
    assert metrics.matched_samples == 0
    assert metrics.truth_samples == 2
    assert len(metrics.errors_m) == 0
    assert math.isnan(metrics.median_error_m)
    assert math.isnan(metrics.p90_error_m)
    assert metrics.identity_swaps == 0


# --- pipeline runs ----------------------------------------------------------------


def test_static_scene_produces_no_tracks():
    report = run_pipeline(static_config())
    assert report.tracks == []
    assert all(not dets for _, dets in report.raw_detections)
    assert report.metrics.matched_samples == 0
    assert report.frames_filtered == report.frames_total - 10


def test_walker_tracked_accurately(walker_report):
    report = walker_report
    assert len(report.tracks) == 1
    track = report.tracks[0]
    assert track.status is TrackStatus.CONFIRMED
    assert report.metrics.median_error_m < 0.3
    assert report.metrics.identity_swaps == 0
    assert report.metrics.matched_samples > 5
    assert report.evaluations_pruned < report.evaluations_full
    assert report.overhead_fraction == pytest.approx(1.0 / (24 * 864))


def test_pipeline_deterministic_given_seed(walker_report):
    again = run_pipeline(walker_config())
    np.testing.assert_array_equal(
        again.metrics.errors_m, walker_report.metrics.errors_m
    )
    assert len(again.tracks) == len(walker_report.tracks)
    for ta, tb in zip(again.tracks, walker_report.tracks):
        assert [(p.frame, p.x_m, p.y_m) for p in ta.history] == [
            (p.frame, p.x_m, p.y_m) for p in tb.history
        ]
    assert again.config_digest == walker_report.config_digest


def count_false_detections(report, target: TargetTrajectory, radius=0.5) -> int:
    period = report.config.scenario.frame_period_s
    false_count = 0
    for frame, dets in report.raw_detections:
        truth = target.position_at(frame * period)
        for det in dets:
            if np.linalg.norm(det.position_m - truth) > radius:
                false_count += 1
    return false_count


def test_disabling_clutter_filter_adds_false_detections():
    """Regression guard on stage order: with the canceller off, strong static
    clutter shows up as persistent spurious detections."""
    clutter = [
        StaticPath(delay_ns=50.0, aoa_deg=40.0, gain=1.0 + 0.0j),
        StaticPath(delay_ns=70.0, aoa_deg=-20.0, gain=0.6 + 0.4j),
    ]
    on = walker_config()
    on.scenario.clutter_paths = clutter
    on.scenario.direct_gain = 0.3 + 0.0j
    off = walker_config(mti_window=0)
    off.scenario.clutter_paths = clutter
    off.scenario.direct_gain = 0.3 + 0.0j
    target = on.scenario.targets[0]
    false_on = count_false_detections(run_pipeline(on), target)
    false_off = count_false_detections(run_pipeline(off), target)
    assert false_off > false_on
    assert false_on == 0


def test_invalid_scenario_fails_with_stage_label():
    config = walker_config()
    config.scenario.tx_position_m = config.scenario.rx_position_m
    with pytest.raises(PipelineStageError) as info:
        run_pipeline(config)
    assert info.value.stage == "validate"
    assert "[validate]" in str(info.value)


def test_invalid_stride_fails_with_stage_label():
    config = walker_config(cpi_stride=0)
    with pytest.raises(PipelineStageError) as info:
        run_pipeline(config)
    assert info.value.stage == "validate"


# --- export ---------------------------------------------------------------------


def test_export_files_and_headers(tmp_path, walker_report):
    paths = export_report(walker_report, tmp_path / "out")
    assert set(paths) == {"tracks", "detections", "metrics", "cdf", "timings"}
    header = f"# config_hash={walker_report.config_digest}"
    for name in ("tracks", "detections", "metrics", "cdf"):
        lines = paths[name].read_text(encoding="utf-8").splitlines()
        assert lines[0] == header
    # timings.txt records wall-clock values and is exempt from determinism
    timing_lines = paths["timings"].read_text(encoding="utf-8").splitlines()
    assert timing_lines[0].startswith("#")
    assert any(line.startswith("total ") for line in timing_lines)


def test_export_row_counts(tmp_path, walker_report):
    paths = export_report(walker_report, tmp_path / "out")
    track_rows = paths["tracks"].read_text(encoding="utf-8").splitlines()[2:]
    assert len(track_rows) == sum(len(t.history) for t in walker_report.tracks)
    det_rows = paths["detections"].read_text(encoding="utf-8").splitlines()[2:]
    assert len(det_rows) == sum(
        len(dets) for _, dets in walker_report.clustered_detections
    )


def test_export_cdf_nondecreasing_to_one(tmp_path, walker_report):
    paths = export_report(walker_report, tmp_path / "out")
    rows = paths["cdf"].read_text(encoding="utf-8").splitlines()[2:]
    errors, fractions = [], []
    for row in rows:
        e, f = row.split(",")
        errors.append(float(e))
        fractions.append(float(f))
    assert errors == sorted(errors)
    assert fractions == sorted(fractions)
    assert fractions[-1] == pytest.approx(1.0)


def test_export_metrics_contents(tmp_path, walker_report):
    paths = export_report(walker_report, tmp_path / "out")
    text = paths["metrics"].read_text(encoding="utf-8")
    for key in (
        "median_error_m",
        "p90_error_m",
        "identity_swaps",
        "matched_samples",
        "truth_samples",
        "rs_overhead",
        "confirmed_tracks",
        "spectrum_cells_pruned",
        "spectrum_cells_full",
    ):
        assert key in text
    assert "rs_overhead 0.0048%" in text


def test_export_empty_report_headers_only(tmp_path):
    report = run_pipeline(static_config())
    paths = export_report(report, tmp_path / "out")
    for name in ("tracks", "detections", "cdf"):
        lines = paths[name].read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2  # hash header + column header
    assert "median_error_m nan" in paths["metrics"].read_text(encoding="utf-8")


# --- CLI ------------------------------------------------------------------------


def write_cli_config(tmp_path) -> str:
    config = {
        "scenario": {
            "antenna_count": 4,
            "rs_subcarrier_count": 32,
            "frame_count": 60,
            "clutter_paths": [{"delay_ns": 50.0, "aoa_deg": 40.0}],
        },
        "mti_window": 10,
        "output_dir": str(tmp_path / "configured"),
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return str(path)


def test_cli_runs_and_writes_outputs(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ISACTRACK_OUTPUT_DIR", raising=False)
    code = cli_main(["run", write_cli_config(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "config_hash " in out
    assert "rs_overhead 0.0048%" in out
    assert (tmp_path / "configured" / "tracks.csv").exists()
    assert (tmp_path / "configured" / "metrics.txt").exists()


def test_cli_env_var_overrides_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ISACTRACK_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert cli_main(["run", write_cli_config(tmp_path)]) == 0
    capsys.readouterr()
    assert (tmp_path / "from_env" / "tracks.csv").exists()


def test_cli_explicit_flag_beats_env_var(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ISACTRACK_OUTPUT_DIR", str(tmp_path / "from_env2"))
    code = cli_main(
        [
            "run",
            write_cli_config(tmp_path),
            "--output_dir",
            str(tmp_path / "explicit"),
        ]
    )
    assert code == 0
    capsys.readouterr()
    assert (tmp_path / "explicit" / "tracks.csv").exists()
    assert not (tmp_path / "from_env2" / "tracks.csv").exists()


def test_cli_seed_override_changes_hash(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ISACTRACK_OUTPUT_DIR", str(tmp_path / "a"))
    cfg = write_cli_config(tmp_path)
    assert cli_main(["run", cfg]) == 0
    first = capsys.readouterr().out
    monkeypatch.setenv("ISACTRACK_OUTPUT_DIR", str(tmp_path / "b"))
    assert cli_main(["run", cfg, "--seed", "9"]) == 0
    second = capsys.readouterr().out
    hash_line = lambda text: [l for l in text.splitlines() if l.startswith("config_hash")][0]
    assert hash_line(first) != hash_line(second)


def test_cli_missing_config_is_config_error(tmp_path, capsys):
    code = cli_main(["run", str(tmp_path / "nope.yaml")])
    assert code == 2
    assert "error [config]" in capsys.readouterr().err


def test_cli_unknown_key_is_config_error(tmp_path, capsys):
    code = cli_main(["run", write_cli_config(tmp_path), "--not_a_key", "1"])
    assert code == 2
    assert "error [config]" in capsys.readouterr().err


def test_cli_malformed_override_is_config_error(tmp_path, capsys):
    code = cli_main(["run", write_cli_config(tmp_path), "--seed"])
    assert code == 2
    assert "error [config]" in capsys.readouterr().err


def test_cli_stage_error_reported(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ISACTRACK_OUTPUT_DIR", raising=False)
    code = cli_main(
        ["run", write_cli_config(tmp_path), "--scenario.tx_position_m", "[0, 0]"]
    )
    assert code == 2
    assert "error [validate]" in capsys.readouterr().err

"""End-to-end pipeline: synthesis, clutter removal, localization, filtering,
tracking, metrics and export.

Frames flow through a fixed cadence: the clutter filter consumes the first
``mti_window`` frames as warm-up, then coherent intervals of
``snapshots_per_cpi`` filtered frames advance by ``cpi_stride`` frames.  Each
interval yields raw detections stamped at its centre frame; a sliding
detection window clusters them into per-target points, and the tracker steps
once per interval.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .clustering import DetectionWindow, extract_targets
from .geometry import BistaticGeometry, Detection, solve_bistatic_position
from .localization import (
    EmptySceneError,
    compute_cir,
    detect_cir_peaks,
    find_spectrum_peaks,
    make_angle_grid,
    music_spectrum,
    split_subspace_from_snapshots,
    stack_snapshots,
)
from .mti import MtiState, mti_filter
from .scenario import (
    ScenarioConfig,
    format_overhead_percent,
    rs_overhead,
    scenario_from_dict,
    scenario_to_dict,
    synthesize_scenario,
    validate_scenario,
)
from .tracking import (
    Track,
    TrackerParams,
    TrackerState,
    hungarian,
    step_tracker,
)


class PipelineStageError(RuntimeError):
    """Wraps an exception with the pipeline stage where it occurred."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"[{stage}] {original}")
        self.stage = stage
        self.original = original


class ConfigError(ValueError):
    """Malformed pipeline configuration."""


@dataclass
class PipelineConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 0
    mti_window: int = 50
    cpi_stride: int | None = None       # default: snapshots_per_cpi // 2
    ifft_factor: int = 4                # delay bins = factor * tone count
    guard_bins: int = 3
    cir_threshold_db: float = 6.0
    angle_step_deg: float = 1.0
    max_targets: int = 4
    source_count: int | None = None     # fixed model order, None = estimate
    cluster_eps_m: float = 0.5
    cluster_min_pts: int = 4
    window_frames: int = 10
    tracker: TrackerParams = field(default_factory=TrackerParams)
    output_dir: str = "isactrack_out"


_PIPELINE_SCALARS = {
    "seed": int,
    "mti_window": int,
    "ifft_factor": int,
    "guard_bins": int,
    "cir_threshold_db": float,
    "angle_step_deg": float,
    "max_targets": int,
    "cluster_eps_m": float,
    "cluster_min_pts": int,
    "window_frames": int,
    "output_dir": str,
}

# frame_period_s is derived from the scenario at run time, so it is not a
# configuration key.
_TRACKER_SCALARS = {
    "gate_m": float,
    "penalty_m": float,
    "process_noise": float,
    "measurement_std_m": float,
    "init_velocity_std_m_s": float,
    "confirm_hits": int,
    "max_misses": int,
    "min_confirmed_steps": int,
}


def pipeline_from_dict(raw: dict) -> PipelineConfig:
    """Build a PipelineConfig from parsed YAML, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("pipeline config must be a mapping")
    known = set(_PIPELINE_SCALARS) | {"scenario", "tracker", "cpi_stride", "source_count"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
    config = PipelineConfig()
    if "scenario" in raw:
        config.scenario = scenario_from_dict(raw["scenario"] or {})
    for key, cast in _PIPELINE_SCALARS.items():
        if key in raw:
            setattr(config, key, cast(raw[key]))
    for key in ("cpi_stride", "source_count"):
        if key in raw and raw[key] is not None:
            setattr(config, key, int(raw[key]))
    if "tracker" in raw:
        sub = raw["tracker"] or {}
        unknown = set(sub) - set(_TRACKER_SCALARS)
        if unknown:
            raise ConfigError(f"unknown tracker keys: {sorted(unknown)}")
        for key, cast in _TRACKER_SCALARS.items():
            if key in sub:
                setattr(config.tracker, key, cast(sub[key]))
    return config


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    return pipeline_from_dict(raw)


def apply_overrides(raw: dict, overrides: list[tuple[str, str]]) -> dict:
    """Apply CLI ``key value`` overrides onto a parsed config mapping.

    Keys use dots for nesting (``tracker.gate_m``, ``scenario.snr_db``);
    values are parsed as YAML so numbers, booleans, null and lists all work.
    Unknown keys surface later through the strict config constructors.
    """
    for key, text in overrides:
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = yaml.safe_load(text)
    return raw


def pipeline_to_dict(config: PipelineConfig) -> dict:
    out = {key: getattr(config, key) for key in _PIPELINE_SCALARS}
    out["cpi_stride"] = config.cpi_stride
    out["source_count"] = config.source_count
    out["scenario"] = scenario_to_dict(config.scenario)
    out["tracker"] = {key: getattr(config.tracker, key) for key in _TRACKER_SCALARS}
    return out


def config_hash(config: PipelineConfig) -> str:
    """Stable digest of everything that affects pipeline output.

    The output directory is deliberately excluded: the same run written to
    two locations must produce byte-identical files.
    """
    payload = pipeline_to_dict(config)
    del payload["output_dir"]
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --- metrics -------------------------------------------------------------------


@dataclass
class MetricsReport:
    errors_m: np.ndarray
    median_error_m: float
    p90_error_m: float
    identity_swaps: int
    matched_samples: int
    truth_samples: int


def _match_min_total_distance(points: np.ndarray, truths: np.ndarray) -> list[tuple[int, int]]:
    """Min-total-distance matching of min(M, N) pairs, no gating."""
    m, n = len(points), len(truths)
    if m == 0 or n == 0:
        return []
    size = max(m, n)
    diff = points[:, None, :] - truths[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    pad_value = float(dist.max()) + 1.0
    padded = np.full((size, size), pad_value)
    padded[:m, :n] = dist
    columns = hungarian(padded)
    return [(i, j) for i, j in enumerate(columns) if i < m and j < n]


def compute_metrics(
    tracks: list[Track], truth_by_frame: dict[int, list[tuple[int, np.ndarray]]]
) -> MetricsReport:
    """Localization error and identity consistency against ground truth.

    For every frame, reported track points are matched to the true target
    positions by minimum total distance.  Errors are the matched distances;
    an identity swap is counted whenever one track's matched truth id
    differs between two consecutive frames in which it was matched.
    """
    per_track_truth: dict[int, list[tuple[int, int]]] = {t.track_id: [] for t in tracks}
    errors = []
    matched = 0
    truth_total = 0

    points_by_frame: dict[int, list[tuple[int, np.ndarray]]] = {}
    for track in tracks:
        for pt in track.history:
            points_by_frame.setdefault(pt.frame, []).append(
                (track.track_id, np.array([pt.x_m, pt.y_m]))
            )

    for frame in sorted(truth_by_frame):
        truths = truth_by_frame[frame]
        truth_total += len(truths)
        entries = points_by_frame.get(frame, [])
        if not entries or not truths:
            continue
        points = np.stack([xy for _, xy in entries])
        truth_xy = np.stack([xy for _, xy in truths])
        for i, j in _match_min_total_distance(points, truth_xy):
            track_id = entries[i][0]
            truth_id = truths[j][0]
            errors.append(float(np.linalg.norm(points[i] - truth_xy[j])))
            per_track_truth[track_id].append((frame, truth_id))
            matched += 1

    swaps = 0
    for sequence in per_track_truth.values():
        sequence.sort()
        for (_, a), (_, b) in zip(sequence, sequence[1:]):
            if a != b:
                swaps += 1

    errors_arr = np.asarray(errors)
    if len(errors_arr):
        median = float(np.percentile(errors_arr, 50))
        p90 = float(np.percentile(errors_arr, 90))
    else:
        median = p90 = float("nan")
    return MetricsReport(
        errors_m=errors_arr,
        median_error_m=median,
        p90_error_m=p90,
        identity_swaps=swaps,
        matched_samples=matched,
        truth_samples=truth_total,
    )


# --- run -----------------------------------------------------------------------


@dataclass
class PipelineReport:
    config: PipelineConfig
    config_digest: str
    frames_total: int
    frames_filtered: int
    raw_detections: list[tuple[int, list[Detection]]]
    clustered_detections: list[tuple[int, list[Detection]]]
    tracks: list[Track]
    metrics: MetricsReport
    overhead_fraction: float
    evaluations_pruned: int
    evaluations_full: int
    timings_s: dict[str, float]


def _staged(timings: dict, stage: str, fn):
    start = time.perf_counter()
    try:
        result = fn()
    except (PipelineStageError, EmptySceneError):
        raise
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc
    timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - start
    return result


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Execute the full chain on the configured scenario."""
    timings: dict[str, float] = {}
    scenario = config.scenario
    _staged(timings, "validate", lambda: validate_scenario(scenario))

    rng = np.random.default_rng(config.seed)
    frames = _staged(timings, "synthesize", lambda: synthesize_scenario(scenario, rng))

    def run_mti():
        state = MtiState(config.mti_window)
        out = []
        for frame in frames:
            filtered = mti_filter(frame, state)
            if filtered is not None:
                out.append(filtered)
        return out

    filtered = _staged(timings, "mti", run_mti)

    geometry = _staged(
        timings, "validate", lambda: BistaticGeometry.from_scenario(scenario)
    )
    tracker_params = replace(
        config.tracker, frame_period_s=scenario.frame_period_s
    ).validate()
    angle_grid = make_angle_grid(config.angle_step_deg)
    n_ifft = config.ifft_factor * scenario.rs_subcarrier_count
    t_s = scenario.snapshots_per_cpi
    stride = config.cpi_stride if config.cpi_stride is not None else max(1, t_s // 2)
    if stride < 1:
        raise PipelineStageError("validate", ValueError("cpi_stride must be >= 1"))

    window = DetectionWindow(config.window_frames)
    tracker = TrackerState(params=tracker_params)
    raw_log: list[tuple[int, list[Detection]]] = []
    clustered_log: list[tuple[int, list[Detection]]] = []
    evaluations_pruned = 0
    evaluations_full = 0

    for start in range(0, len(filtered) - t_s + 1, stride):
        block_frames = filtered[start : start + t_s]
        center = block_frames[t_s // 2].index
        detections: list[Detection] = []
        try:
            split = _staged(
                timings,
                "subspace",
                lambda: split_subspace_from_snapshots(
                    stack_snapshots(block_frames), config.source_count, config.max_targets
                ),
            )
            cir = _staged(
                timings, "cir", lambda: compute_cir(block_frames, n_ifft, scenario)
            )
            windows = _staged(
                timings,
                "cir",
                lambda: detect_cir_peaks(cir, config.guard_bins, config.cir_threshold_db),
            )
            if windows:
                grid = _staged(
                    timings,
                    "spectrum",
                    lambda: music_spectrum(
                        split, windows, angle_grid, scenario, n_ifft
                    ),
                )
                evaluations_pruned += grid.evaluations
                evaluations_full += n_ifft * len(angle_grid)
                # One reflection per estimated source: taking more peaks than
                # the model order only admits sidelobes as ghost detections.
                peak_budget = min(config.max_targets, split.signal_count)
                peaks = _staged(
                    timings,
                    "spectrum",
                    lambda: find_spectrum_peaks(grid, peak_budget),
                )
                for est in peaks:
                    det = _staged(
                        timings,
                        "geometry",
                        lambda e=est: solve_bistatic_position(e, geometry, frame=center),
                    )
                    if det is not None:
                        detections.append(det)
        except EmptySceneError:
            detections = []
        raw_log.append((center, detections))

        def run_cluster():
            window.push(detections)
            window.prune(center)
            return extract_targets(window, config.cluster_eps_m, config.cluster_min_pts)

        clustered = _staged(timings, "cluster", run_cluster)
        clustered_log.append((center, clustered))
        _staged(
            timings,
            "track",
            lambda: step_tracker(
                tracker, [d.position_m for d in clustered], center, tracker_params
            ),
        )

    def run_metrics():
        truth_by_frame = {}
        for center, _ in clustered_log:
            t = center * scenario.frame_period_s
            truth_by_frame[center] = [
                (i, target.position_at(t))
                for i, target in enumerate(scenario.targets)
                if target.active_at(t)
            ]
        return compute_metrics(tracker.reported_tracks(), truth_by_frame)

    metrics = _staged(timings, "metrics", run_metrics)

    return PipelineReport(
        config=config,
        config_digest=config_hash(config),
        frames_total=len(frames),
        frames_filtered=len(filtered),
        raw_detections=raw_log,
        clustered_detections=clustered_log,
        tracks=tracker.reported_tracks(),
        metrics=metrics,
        overhead_fraction=rs_overhead(
            scenario.rs_frequency_spacing, scenario.rs_time_spacing
        ),
        evaluations_pruned=evaluations_pruned,
        evaluations_full=evaluations_full,
        timings_s=timings,
    )


# --- export --------------------------------------------------------------------


def export_report(report: PipelineReport, output_dir) -> dict[str, Path]:
    """Write the run products; returns {name: path}.

    All files start with a config-hash header line and are byte-identical
    across repeated runs of the same configuration, except timings.txt,
    which records wall-clock measurements and is exempt from that guarantee.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = f"# config_hash={report.config_digest}\n"
    period = report.config.scenario.frame_period_s
    paths = {}

    lines = [header, "track_id,frame,time_s,x_m,y_m,coasted,status\n"]
    for track in report.tracks:
        for pt in track.history:
            lines.append(
                f"{track.track_id},{pt.frame},{pt.frame * period:.6f},"
                f"{pt.x_m:.6f},{pt.y_m:.6f},{int(pt.coasted)},{track.status.value}\n"
            )
    paths["tracks"] = out / "tracks.csv"
    paths["tracks"].write_text("".join(lines), encoding="utf-8")

    lines = [header, "frame,time_s,x_m,y_m\n"]
    for frame, dets in report.clustered_detections:
        for det in dets:
            lines.append(
                f"{frame},{frame * period:.6f},"
                f"{det.position_m[0]:.6f},{det.position_m[1]:.6f}\n"
            )
    paths["detections"] = out / "detections.csv"
    paths["detections"].write_text("".join(lines), encoding="utf-8")

    metrics = report.metrics
    lines = [
        header,
        f"median_error_m {metrics.median_error_m:.6f}\n",
        f"p90_error_m {metrics.p90_error_m:.6f}\n",
        f"identity_swaps {metrics.identity_swaps}\n",
        f"matched_samples {metrics.matched_samples}\n",
        f"truth_samples {metrics.truth_samples}\n",
        f"rs_overhead {format_overhead_percent(report.overhead_fraction)}\n",
        f"confirmed_tracks {len(report.tracks)}\n",
        f"spectrum_cells_pruned {report.evaluations_pruned}\n",
        f"spectrum_cells_full {report.evaluations_full}\n",
    ]
    paths["metrics"] = out / "metrics.txt"
    paths["metrics"].write_text("".join(lines), encoding="utf-8")

    lines = [header, "error_m,fraction\n"]
    errors = np.sort(metrics.errors_m)
    for i, err in enumerate(errors):
        lines.append(f"{err:.6f},{(i + 1) / len(errors):.6f}\n")
    paths["cdf"] = out / "cdf.csv"
    paths["cdf"].write_text("".join(lines), encoding="utf-8")

    lines = ["# wall-clock seconds; excluded from determinism guarantees\n"]
    for stage in sorted(report.timings_s):
        lines.append(f"{stage} {report.timings_s[stage]:.3f}\n")
    lines.append(f"total {sum(report.timings_s.values()):.3f}\n")
    paths["timings"] = out / "timings.txt"
    paths["timings"].write_text("".join(lines), encoding="utf-8")

    return paths

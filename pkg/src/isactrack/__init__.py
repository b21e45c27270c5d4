"""Bistatic OFDM-CSI multi-person tracking with a scenario simulator.

The package synthesizes sparse reference-signal channel estimates for
configurable moving targets, removes static clutter, localizes reflections
on a pruned delay-angle grid, rejects short-lived ghosts by density
clustering, and maintains identity-consistent tracks with a penalty-gated
assignment tracker.
"""

from ._spectrum import BACKEND_NAME as spectrum_backend
from ._spectrum import available_backends
from .clustering import ClusterResult, DetectionWindow, cluster_points, dbscan, extract_targets
from .geometry import BistaticGeometry, Detection, bistatic_range, solve_bistatic_position
from .localization import (
    CirProfile,
    EmptySceneError,
    PathEstimate,
    SnapshotBlock,
    SpectrumGrid,
    SubspaceSplit,
    compute_cir,
    detect_cir_peaks,
    estimate_covariance,
    find_spectrum_peaks,
    full_delay_windows,
    make_angle_grid,
    music_spectrum,
    split_subspace,
    split_subspace_from_snapshots,
    stack_snapshots,
    steering_vector,
)
from .mti import MtiState, mti_attenuation, mti_filter
from .pipeline import (
    ConfigError,
    MetricsReport,
    PipelineConfig,
    PipelineReport,
    PipelineStageError,
    compute_metrics,
    config_hash,
    export_report,
    load_pipeline_config,
    pipeline_from_dict,
    run_pipeline,
)
from .scenario import (
    CsiFrame,
    PropagationPath,
    ScenarioConfig,
    ScenarioError,
    StaticPath,
    TargetTrajectory,
    add_noise,
    format_overhead_percent,
    paths_at,
    rs_overhead,
    scenario_from_dict,
    synthesize_frame,
    synthesize_scenario,
    validate_scenario,
)
from .tracking import (
    AssignmentProblem,
    AssignmentResult,
    OutOfOrderFrameError,
    Track,
    TrackerParams,
    TrackerState,
    TrackStatus,
    build_cost_matrix,
    hungarian,
    kf_predict,
    kf_update,
    new_track,
    solve_assignment,
    step_tracker,
)

__version__ = "0.1.0"

"""Multi-target tracking over filtered detections.

Each track runs a constant-velocity Kalman filter.  Detections are matched
to track predictions by minimum-cost assignment on a clipped cost matrix:
any pair farther apart than the association gate costs a large flat penalty,
and penalty pairs are cut after solving.  That way a track whose detection
vanished coasts on its prediction instead of being dragged to whatever
spurious point happens to be nearest, which is what preserves identities
through crossings and dropouts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class OutOfOrderFrameError(ValueError):
    """Tracker stepped with a frame index not greater than the last one."""


@dataclass
class TrackerParams:
    gate_m: float = 1.0
    penalty_m: float = 1000.0
    frame_period_s: float = 1.0          # seconds per frame-index unit
    process_noise: float = 0.5           # white-acceleration PSD, m^2/s^3
    measurement_std_m: float = 0.15
    init_velocity_std_m_s: float = 10.0
    confirm_hits: int = 3                # consecutive hits to confirm
    max_misses: int = 25                 # consecutive coasts to terminate
    min_confirmed_steps: int = 50        # shorter confirmed tracks are dropped

    def validate(self) -> "TrackerParams":
        if self.gate_m <= 0:
            raise ValueError("gate_m must be positive")
        if self.penalty_m < 100.0 * self.gate_m:
            raise ValueError(
                "penalty_m must be at least 100x gate_m so pruned pairs are "
                "unambiguous"
            )
        if self.frame_period_s <= 0:
            raise ValueError("frame_period_s must be positive")
        if self.confirm_hits < 1 or self.max_misses < 1:
            raise ValueError("confirm_hits and max_misses must be >= 1")
        return self


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    TERMINATED = "terminated"


@dataclass
class TrackPoint:
    frame: int
    x_m: float
    y_m: float
    coasted: bool       # True when this point is a prediction, not an update


@dataclass
class Track:
    track_id: int
    x: np.ndarray               # state [x, y, vx, vy]
    cov: np.ndarray             # 4x4 covariance
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 0               # consecutive associated steps
    misses: int = 0             # consecutive coasted steps
    confirmed_steps: int = 0
    history: list[TrackPoint] = field(default_factory=list)

    @property
    def position(self) -> np.ndarray:
        return self.x[:2].copy()


def make_cv_matrices(dt: float, process_noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity transition and white-acceleration process noise."""
    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    q3, q2 = dt**3 / 3.0, dt**2 / 2.0
    q = process_noise * np.array(
        [
            [q3, 0.0, q2, 0.0],
            [0.0, q3, 0.0, q2],
            [q2, 0.0, dt, 0.0],
            [0.0, q2, 0.0, dt],
        ]
    )
    return f, q


_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


def new_track(track_id: int, position, params: TrackerParams) -> Track:
    """Open a tentative track on an unassociated detection: known position,
    unknown velocity."""
    x = np.array([position[0], position[1], 0.0, 0.0])
    cov = np.diag(
        [
            params.measurement_std_m**2,
            params.measurement_std_m**2,
            params.init_velocity_std_m_s**2,
            params.init_velocity_std_m_s**2,
        ]
    )
    return Track(track_id=track_id, x=x, cov=cov)


def kf_predict(track: Track, dt: float, process_noise: float) -> np.ndarray:
    """Advance the track state by ``dt`` in place; returns the predicted
    position."""
    f, q = make_cv_matrices(dt, process_noise)
    track.x = f @ track.x
    track.cov = f @ track.cov @ f.T + q
    track.cov = (track.cov + track.cov.T) / 2.0
    return track.position


def kf_update(track: Track, measurement, measurement_std_m: float) -> np.ndarray:
    """Fuse a position measurement in place (Joseph-form covariance update);
    returns the updated position."""
    z = np.asarray(measurement, dtype=float)
    r = measurement_std_m**2 * np.eye(2)
    innovation = z - _H @ track.x
    s = _H @ track.cov @ _H.T + r
    gain = np.linalg.solve(s.T, (_H @ track.cov)).T
    track.x = track.x + gain @ innovation
    ikh = np.eye(4) - gain @ _H
    track.cov = ikh @ track.cov @ ikh.T + gain @ r @ gain.T
    track.cov = (track.cov + track.cov.T) / 2.0
    return track.position


# --- assignment ----------------------------------------------------------------


@dataclass
class AssignmentProblem:
    cost: np.ndarray        # (n_tracks, n_detections), gated
    gate_m: float
    penalty_m: float


def build_cost_matrix(
    predictions, detections, gate_m: float, penalty_m: float
) -> AssignmentProblem:
    """Euclidean distances, with every pair beyond ``gate_m`` replaced by the
    flat ``penalty_m``.  Requires penalty >= 100x gate so that real and
    penalty entries can never be confused."""
    if penalty_m < 100.0 * gate_m:
        raise ValueError("penalty_m must be at least 100x gate_m")
    preds = np.asarray(predictions, dtype=float).reshape(-1, 2)
    dets = np.asarray(detections, dtype=float).reshape(-1, 2)
    if preds.size == 0 or dets.size == 0:
        cost = np.zeros((len(preds), len(dets)))
    else:
        diff = preds[:, None, :] - dets[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        cost = np.where(dist <= gate_m, dist, penalty_m)
    return AssignmentProblem(cost=cost, gate_m=gate_m, penalty_m=penalty_m)


def hungarian(cost: np.ndarray) -> list[int]:
    """Minimum-cost perfect matching on a square matrix.

    Returns the column assigned to each row.  Shortest-augmenting-path
    formulation, O(n^3), deterministic: among equal reduced costs the lowest
    column index is chosen.
    """
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("hungarian requires a square matrix")
    if n == 0:
        return []
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)      # match[j] = row occupying column j, 1-based
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    columns = [0] * n
    for j in range(1, n + 1):
        if match[j]:
            columns[match[j] - 1] = j - 1
    return columns


@dataclass
class AssignmentResult:
    raw_pairs: list[tuple[int, int]]     # optimal matching before pruning
    pairs: list[tuple[int, int]]         # after cutting penalty pairs
    unassigned_rows: list[int]
    unassigned_cols: list[int]


def solve_assignment(problem: AssignmentProblem) -> AssignmentResult:
    """Optimal one-sided assignment, then removal of penalty pairs.

    The rectangular matrix is padded square with the penalty value, solved
    exactly, and pad pairs are stripped; every row (or column, whichever
    side is smaller) is matched in the raw result.  Ties between equal-cost
    assignments are broken deterministically by a swap polish preferring
    lower column indices on earlier rows.  Raw pairs whose cost equals the
    penalty are then cut; the tracker treats their rows and columns as
    unmatched.
    """
    m, n = problem.cost.shape
    if m == 0 or n == 0:
        return AssignmentResult([], [], list(range(m)), list(range(n)))
    size = max(m, n)
    padded = np.full((size, size), problem.penalty_m)
    padded[:m, :n] = problem.cost
    # An infinite penalty (the ungated baseline) would poison the solver's
    # potentials, so non-finite entries are solved through a finite surrogate
    # larger than the sum of all finite costs: solutions then sort first by
    # how many prohibited pairs they use, matching the infinity semantics.
    if not np.all(np.isfinite(padded)):
        finite = padded[np.isfinite(padded)]
        surrogate = float(np.sum(np.abs(finite))) + 1.0
        padded = np.where(np.isfinite(padded), padded, surrogate)
    columns = hungarian(padded)
    assignment = list(enumerate(columns))

    # Swap polish: among equal-total-cost solutions prefer lexicographically
    # smaller column sequences, so repeated runs and reordered ties agree.
    changed = True
    while changed:
        changed = False
        for a in range(len(assignment)):
            ia, ja = assignment[a]
            for b in range(a + 1, len(assignment)):
                ib, jb = assignment[b]
                if jb < ja and math.isclose(
                    padded[ia][ja] + padded[ib][jb],
                    padded[ia][jb] + padded[ib][ja],
                    rel_tol=0.0,
                    abs_tol=0.0,
                ):
                    assignment[a] = (ia, jb)
                    assignment[b] = (ib, ja)
                    ja = jb
                    changed = True

    raw_pairs = [(i, j) for i, j in assignment if i < m and j < n]
    pairs = [(i, j) for i, j in raw_pairs if problem.cost[i, j] != problem.penalty_m]
    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    return AssignmentResult(
        raw_pairs=raw_pairs,
        pairs=pairs,
        unassigned_rows=[i for i in range(m) if i not in matched_rows],
        unassigned_cols=[j for j in range(n) if j not in matched_cols],
    )


# --- tracker -------------------------------------------------------------------


@dataclass
class TrackerState:
    params: TrackerParams
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 0
    last_frame: int | None = None

    @property
    def active_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is not TrackStatus.TERMINATED]

    @property
    def confirmed_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is TrackStatus.CONFIRMED]

    def reported_tracks(self) -> list[Track]:
        """Tracks that ever reached confirmation, for export and metrics."""
        return [
            t
            for t in self.tracks
            if t.status is TrackStatus.CONFIRMED
            or (t.status is TrackStatus.TERMINATED and t.confirmed_steps > 0)
        ]


def step_tracker(
    state: TrackerState, detections, frame: int, params: TrackerParams | None = None
) -> TrackerState:
    """Advance every track to ``frame``, associate, and manage lifecycle.

    Frames must be strictly increasing across calls.  Unassociated tracks
    append their prediction to the history (flagged coasted); unassociated
    detections open tentative tracks.  A tentative track confirms after
    ``confirm_hits`` consecutive associations, any track terminates after
    ``max_misses`` consecutive coasts, and a terminated track that spent
    fewer than ``min_confirmed_steps`` steps confirmed is discarded
    entirely.
    """
    params = (params or state.params).validate()
    if state.last_frame is not None and frame <= state.last_frame:
        raise OutOfOrderFrameError(
            f"frame {frame} is not after last processed frame {state.last_frame}"
        )
    dt = (
        (frame - state.last_frame) * params.frame_period_s
        if state.last_frame is not None
        else 0.0
    )
    positions = [np.asarray(d, dtype=float) for d in detections]
    active = state.active_tracks
    predictions = [kf_predict(t, dt, params.process_noise) for t in active]

    if active and positions:
        problem = build_cost_matrix(
            predictions, positions, params.gate_m, params.penalty_m
        )
        result = solve_assignment(problem)
        matched = dict(result.pairs)
        free_detections = result.unassigned_cols
    else:
        matched = {}
        free_detections = list(range(len(positions)))

    for idx, track in enumerate(active):
        if idx in matched:
            kf_update(track, positions[matched[idx]], params.measurement_std_m)
            track.hits += 1
            track.misses = 0
            coasted = False
        else:
            track.hits = 0
            track.misses += 1
            coasted = True
        track.history.append(
            TrackPoint(frame, float(track.x[0]), float(track.x[1]), coasted)
        )
        if track.status is TrackStatus.TENTATIVE and track.hits >= params.confirm_hits:
            track.status = TrackStatus.CONFIRMED
        if track.status is TrackStatus.CONFIRMED:
            track.confirmed_steps += 1
        if track.misses >= params.max_misses:
            track.status = TrackStatus.TERMINATED

    state.tracks = [
        t
        for t in state.tracks
        if not (
            t.status is TrackStatus.TERMINATED
            and t.confirmed_steps < params.min_confirmed_steps
        )
    ]

    for j in free_detections:
        track = new_track(state.next_id, positions[j], params)
        state.next_id += 1
        track.hits = 1
        track.history.append(
            TrackPoint(frame, float(track.x[0]), float(track.x[1]), False)
        )
        state.tracks.append(track)

    state.last_frame = frame
    return state

"""Delay-angle estimation on clutter-filtered CSI.

Processing per coherent interval: stack frames into space-frequency
snapshots, estimate the sample covariance, split signal and noise subspaces,
then evaluate the subspace-orthogonality spectrum over a two-dimensional
(delay, angle) grid and pick its peaks.  A coarse channel impulse response
computed by IFFT restricts the delay search to a few windows around actual
energy, which is what keeps the 2D search affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _spectrum
from .scenario import ScenarioConfig, CsiFrame

# Relative floor applied to the spectrum denominator; grid cells where the
# steering vector is numerically inside the signal subspace are clamped to a
# common ceiling instead of dividing by rounding noise.
DENOM_FLOOR_SCALE = 1e-12


class EmptySceneError(RuntimeError):
    """No usable signal energy in the coherent interval (e.g. all-static
    scene after clutter removal)."""


@dataclass
class SnapshotBlock:
    """Snapshots of one coherent interval, shape (n_snapshots, P*N)."""

    snapshots: np.ndarray
    frame_indices: list[int]
    antenna_count: int
    tone_count: int


def stack_snapshots(frames: list[CsiFrame]) -> SnapshotBlock:
    """Vectorize frames antenna-major: snapshot element p*N + n is the CSI
    of antenna p on reference tone n."""
    if not frames:
        raise ValueError("need at least one frame")
    shape = frames[0].data.shape
    for f in frames:
        if f.data.shape != shape:
            raise ValueError(f"frame {f.index} has shape {f.data.shape}, expected {shape}")
    p_count, n_count = shape
    data = np.stack([f.data.reshape(p_count * n_count) for f in frames])
    return SnapshotBlock(
        snapshots=data,
        frame_indices=[f.index for f in frames],
        antenna_count=p_count,
        tone_count=n_count,
    )


def estimate_covariance(block: SnapshotBlock) -> np.ndarray:
    """Sample covariance (1/T) sum_t x_t x_t^H, symmetrized to be exactly
    Hermitian."""
    s = block.snapshots
    r = (s.T @ np.conj(s)) / s.shape[0]
    return (r + r.conj().T) / 2.0


@dataclass
class SubspaceSplit:
    """Signal/noise subspace decomposition of one coherent interval.

    ``eigenvalues`` always has full length P*N in descending order (the
    snapshot route pads the unobserved directions with zeros).  The noise
    subspace is materialized lazily: consumers that evaluate the spectrum
    through the signal-subspace complement never pay for it.
    """

    eigenvalues: np.ndarray
    signal_subspace: np.ndarray
    _noise_subspace: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.signal_subspace.shape[0]

    @property
    def signal_count(self) -> int:
        return self.signal_subspace.shape[1]

    @property
    def noise_subspace(self) -> np.ndarray:
        if self._noise_subspace is None:
            # Orthonormal complement of the signal columns via complete QR.
            q, _ = np.linalg.qr(self.signal_subspace, mode="complete")
            self._noise_subspace = np.ascontiguousarray(q[:, self.signal_count :])
        return self._noise_subspace


def _estimate_source_count(eigenvalues: np.ndarray, max_targets: int) -> int:
    """Model order by the largest eigenvalue-ratio gap.

    Picks argmax_k lambda_k / lambda_{k+1} over k <= max_targets, counting
    only k whose lambda_k clears 10x the smallest eigenvalue; falls back to
    1 when nothing does.  Zero eigenvalues in the denominator are floored
    relative to the largest so noiseless data does not divide by zero.
    """
    w = eigenvalues
    kmax = min(max_targets, len(w) - 1)
    floor = 10.0 * w[-1]
    denom_floor = w[0] * 1e-18
    best_k, best_ratio = 1, -1.0
    for k in range(1, kmax + 1):
        if w[k - 1] <= floor:
            continue
        ratio = w[k - 1] / max(w[k], denom_floor)
        if ratio > best_ratio:
            best_k, best_ratio = k, ratio
    return best_k


def _check_energy(eigenvalues: np.ndarray) -> None:
    trace = float(np.sum(eigenvalues))
    if trace <= 0.0 or eigenvalues[0] < 1e-15 * trace:
        raise EmptySceneError("covariance carries no signal energy")


def split_subspace(
    r: np.ndarray, source_count: int | None = None, max_targets: int = 6
) -> SubspaceSplit:
    """Eigendecompose a covariance matrix into signal and noise subspaces.

    ``source_count`` overrides the model-order estimate when the number of
    propagation paths is known.
    """
    w, v = np.linalg.eigh(r)
    w = w[::-1].copy()
    v = v[:, ::-1]
    np.maximum(w, 0.0, out=w)
    _check_energy(w)
    count = source_count if source_count is not None else _estimate_source_count(w, max_targets)
    if not 1 <= count < r.shape[0]:
        raise ValueError(f"source_count must be in [1, {r.shape[0] - 1}], got {count}")
    return SubspaceSplit(
        eigenvalues=w,
        signal_subspace=np.ascontiguousarray(v[:, :count]),
        _noise_subspace=np.ascontiguousarray(v[:, count:]),
    )


def split_subspace_from_snapshots(
    block: SnapshotBlock, source_count: int | None = None, max_targets: int = 6
) -> SubspaceSplit:
    """Subspace split computed directly from the snapshot matrix.

    Algebraically identical to ``split_subspace(estimate_covariance(block))``
    but costs an economy SVD of a (P*N, n_snapshots) matrix instead of an
    eigendecomposition of the full (P*N, P*N) covariance; with 16 snapshots
    and 608 dimensions that is two to three orders of magnitude faster.
    Eigenvalues beyond the snapshot count are exact zeros.
    """
    s = block.snapshots
    n_snapshots, dim = s.shape
    u, sv, _ = np.linalg.svd(s.T, full_matrices=False)
    w = np.zeros(dim)
    w[: len(sv)] = sv**2 / n_snapshots
    _check_energy(w)
    count = source_count if source_count is not None else _estimate_source_count(w, max_targets)
    if not 1 <= count < dim:
        raise ValueError(f"source_count must be in [1, {dim - 1}], got {count}")
    return SubspaceSplit(
        eigenvalues=w,
        signal_subspace=np.ascontiguousarray(u[:, :count]),
    )


# --- coarse delay profile -----------------------------------------------------


@dataclass
class CirProfile:
    """Noncoherent channel impulse response over one coherent interval."""

    power: np.ndarray       # (n_ifft,) summed |q|^2 over antennas and frames
    n_ifft: int
    bin_delay_s: float      # delay represented by one bin

    def bin_to_delay(self, u) -> np.ndarray:
        return np.asarray(u) * self.bin_delay_s


def compute_cir(
    frames: list[CsiFrame], n_ifft: int, config: ScenarioConfig
) -> CirProfile:
    """IFFT each frame's tone axis to delay bins and sum power noncoherently.

    Bin u corresponds to delay u / (n_ifft * rs_tone_spacing_hz); a single
    path at exactly that delay for integer u concentrates in bin u.
    """
    if not frames:
        raise ValueError("need at least one frame")
    n_tones = frames[0].data.shape[1]
    if n_ifft < n_tones:
        raise ValueError(f"n_ifft {n_ifft} must be >= tone count {n_tones}")
    data = np.stack([f.data for f in frames])           # (T, P, N)
    q = np.fft.ifft(data, n=n_ifft, axis=-1) * (n_ifft / n_tones)
    power = np.sum(np.abs(q) ** 2, axis=(0, 1))
    return CirProfile(
        power=power,
        n_ifft=n_ifft,
        bin_delay_s=1.0 / (n_ifft * config.rs_tone_spacing_hz),
    )


def detect_cir_peaks(
    profile: CirProfile, guard_bins: int = 3, threshold_db: float = 6.0
) -> list[tuple[int, int]]:
    """Find delay windows worth searching.

    A peak is a maximal run of equal power that exceeds the profile median
    by ``threshold_db`` and drops on both sides; its window is the run start
    padded by ``guard_bins`` either way, clipped to the profile (no
    wraparound).  Overlapping or touching windows are merged.  Returns
    inclusive (lo, hi) bin pairs, possibly empty.
    """
    power = profile.power
    n = len(power)
    threshold = float(np.median(power)) * 10.0 ** (threshold_db / 10.0)

    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and power[j + 1] == power[i]:
            j += 1
        left_drops = i == 0 or power[i - 1] < power[i]
        right_drops = j == n - 1 or power[j + 1] < power[i]
        if left_drops and right_drops and power[i] > threshold and power[i] > 0:
            peaks.append(i)
        i = j + 1

    windows = []
    for u in peaks:
        lo = max(0, u - guard_bins)
        hi = min(n - 1, u + guard_bins)
        if windows and lo <= windows[-1][1] + 1:
            windows[-1] = (windows[-1][0], max(windows[-1][1], hi))
        else:
            windows.append((lo, hi))
    return windows


def full_delay_windows(n_ifft: int) -> list[tuple[int, int]]:
    """The unpruned search: one window covering every delay bin."""
    return [(0, n_ifft - 1)]


# --- spectrum search ----------------------------------------------------------


def delay_phasor(tau_s, config: ScenarioConfig) -> np.ndarray:
    """Frequency-domain steering rows exp(-j*2*pi*n*tone_spacing*tau).

    Accepts a scalar or a vector of delays; returns (..., N).  Delays one
    unambiguous interval apart produce identical rows.
    """
    tau = np.atleast_1d(np.asarray(tau_s, dtype=float))
    n = np.arange(config.rs_subcarrier_count)
    return np.exp(-2j * np.pi * np.outer(tau, n) * config.rs_tone_spacing_hz)


def angle_phasor(phi_rad, config: ScenarioConfig) -> np.ndarray:
    """Array steering rows exp(j*2*pi*p*spacing*sin(phi)), phi relative to
    the array normal."""
    phi = np.atleast_1d(np.asarray(phi_rad, dtype=float))
    p = np.arange(config.antenna_count)
    return np.exp(
        2j * np.pi * np.outer(np.sin(phi), p) * config.antenna_spacing_wavelengths
    )


def steering_vector(tau_s: float, phi_rad: float, config: ScenarioConfig) -> np.ndarray:
    """Space-frequency steering vector s[p*N + n] = a(phi)[p] * f(tau)[n]."""
    a = angle_phasor(phi_rad, config)[0]
    f = delay_phasor(tau_s, config)[0]
    return np.kron(a, f)


def make_angle_grid(step_deg: float = 1.0) -> np.ndarray:
    """Angle grid in radians covering [-90, +90] degrees inclusive."""
    return np.radians(np.arange(-90.0, 90.0 + step_deg / 2.0, step_deg))


@dataclass
class SpectrumGrid:
    """Spectrum values over the searched (delay bin, angle) cells."""

    values: np.ndarray              # (n_bins, n_angles)
    delay_bins: np.ndarray          # global bin index per row
    delays_s: np.ndarray            # delay per row
    angles_rad: np.ndarray          # angle per column
    window_slices: list[tuple[int, int]]  # row ranges, one per delay window
    evaluations: int                # grid cells evaluated
    mode: str                       # "complement" | "direct"
    backend: str

    def cell_sets(self):
        """(bin, angle_index, value) triples, for cross-checking searches."""
        for row, b in enumerate(self.delay_bins):
            for col in range(self.values.shape[1]):
                yield int(b), col, self.values[row, col]


def music_spectrum(
    split: SubspaceSplit,
    delay_windows: list[tuple[int, int]],
    angle_grid_rad: np.ndarray,
    config: ScenarioConfig,
    n_ifft: int,
    mode: str = "auto",
) -> SpectrumGrid:
    """Evaluate the subspace-orthogonality spectrum on the pruned grid.

    The value at (tau, phi) is 1 / (s^H E_n E_n^H s).  ``mode`` selects how
    the denominator is computed: "direct" projects onto the explicit noise
    subspace, "complement" uses ||s||^2 minus the signal-subspace projection
    (identical by orthonormality and far cheaper when few sources are
    present), "auto" picks "complement".  Denominators are floored at
    dim * 1e-12 so on-grid true paths hit a common finite ceiling.

    ``delay_windows`` are inclusive, sorted, non-overlapping bin ranges on
    the ``n_ifft``-point delay grid.
    """
    if mode not in {"auto", "complement", "direct"}:
        raise ValueError(f"unknown spectrum mode {mode!r}")
    if mode == "auto":
        mode = "complement"
    prev_hi = -1
    for lo, hi in delay_windows:
        if lo > hi:
            raise ValueError(f"empty delay window ({lo}, {hi})")
        if lo <= prev_hi:
            raise ValueError("delay windows must be sorted and non-overlapping")
        if lo < 0 or hi >= n_ifft:
            raise ValueError(f"window ({lo}, {hi}) outside [0, {n_ifft - 1}]")
        prev_hi = hi

    bins = []
    window_slices = []
    for lo, hi in delay_windows:
        start = len(bins)
        bins.extend(range(lo, hi + 1))
        window_slices.append((start, len(bins)))
    delay_bins = np.asarray(bins, dtype=int)
    delays = delay_bins / (n_ifft * config.rs_tone_spacing_hz)

    fgrid = delay_phasor(delays, config)
    agrid = angle_phasor(angle_grid_rad, config)

    if mode == "complement":
        basis = split.signal_subspace
    else:
        basis = split.noise_subspace
    denom = _spectrum.denominator_grid(basis, fgrid, agrid, mode == "complement")

    floor = split.dim * DENOM_FLOOR_SCALE
    values = 1.0 / np.maximum(denom, floor)
    return SpectrumGrid(
        values=values,
        delay_bins=delay_bins,
        delays_s=delays,
        angles_rad=np.asarray(angle_grid_rad, dtype=float).copy(),
        window_slices=window_slices,
        evaluations=values.size,
        mode=mode,
        backend=_spectrum.BACKEND_NAME,
    )


@dataclass
class PathEstimate:
    """One resolved (delay, angle) peak of the spectrum."""

    delay_s: float
    aoa_rad: float      # relative to the array normal
    power: float
    bin_index: int
    angle_index: int


def find_spectrum_peaks(grid: SpectrumGrid, max_peaks: int) -> list[PathEstimate]:
    """Extract up to ``max_peaks`` local maxima from the spectrum.

    A cell is a peak when it beats all eight neighbours within its own delay
    window; on plateaus (common at the clamp ceiling) only the cell with the
    lowest row-major index counts, enforced by requiring a strict win over
    earlier neighbours and >= over later ones.  Peaks are ranked by value
    (ties again by lowest index).  The angle is refined by fitting a
    parabola through the peak and its two angle neighbours; the delay stays
    on its bin.
    """
    candidates = []
    n_angles = grid.values.shape[1]
    for start, stop in grid.window_slices:
        v = grid.values[start:stop]
        rows = v.shape[0]
        padded = np.full((rows + 2, n_angles + 2), -np.inf)
        padded[1:-1, 1:-1] = v

        def shifted(di, dj):
            return padded[1 + di : 1 + di + rows, 1 + dj : 1 + dj + n_angles]

        is_peak = (
            (v > shifted(-1, -1))
            & (v > shifted(-1, 0))
            & (v > shifted(-1, 1))
            & (v > shifted(0, -1))
            & (v >= shifted(0, 1))
            & (v >= shifted(1, -1))
            & (v >= shifted(1, 0))
            & (v >= shifted(1, 1))
        )
        for i, j in zip(*np.nonzero(is_peak)):
            row = start + int(i)
            candidates.append(
                (-v[i, j], int(grid.delay_bins[row]), int(j), row)
            )

    candidates.sort()
    peaks = []
    for neg_value, bin_index, j, row in candidates[:max_peaks]:
        angle = grid.angles_rad[j]
        if 0 < j < n_angles - 1:
            left, center, right = grid.values[row, j - 1 : j + 2]
            curvature = left - 2.0 * center + right
            if curvature < 0.0:
                offset = 0.5 * (left - right) / curvature
                offset = min(0.5, max(-0.5, offset))
                step = grid.angles_rad[j + 1] - grid.angles_rad[j]
                angle = angle + offset * step
        peaks.append(
            PathEstimate(
                delay_s=float(grid.delays_s[row]),
                aoa_rad=float(angle),
                power=float(-neg_value),
                bin_index=bin_index,
                angle_index=j,
            )
        )
    return peaks

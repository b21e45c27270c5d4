"""Scenario definition and sparse reference-signal CSI synthesis.

A scenario describes a bistatic sensing link: one illuminating transmitter,
one receiver with a uniform linear array, static clutter paths and moving
point targets.  The synthesizer produces one channel-state frame per
reference-signal OFDM symbol, i.e. a (antenna_count, rs_subcarrier_count)
complex matrix sampled every ``rs_time_spacing`` symbols on every
``rs_frequency_spacing``-th subcarrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ScenarioError(ValueError):
    """Raised when a scenario configuration violates a physical invariant."""


def _as_complex(value) -> complex:
    """Accept a scalar or an (re, im) pair and return a complex number."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ScenarioError(f"complex gain must be scalar or [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


@dataclass
class StaticPath:
    """A stationary multipath component (wall, furniture, ...)."""

    delay_ns: float
    aoa_deg: float  # arrival angle at the receiver, global frame
    gain: complex = 0.5 + 0.0j

    @classmethod
    def from_dict(cls, raw: dict) -> "StaticPath":
        known = {"delay_ns", "aoa_deg", "gain"}
        unknown = set(raw) - known
        if unknown:
            raise ScenarioError(f"unknown clutter path keys: {sorted(unknown)}")
        out = cls(delay_ns=float(raw["delay_ns"]), aoa_deg=float(raw["aoa_deg"]))
        if "gain" in raw:
            out.gain = _as_complex(raw["gain"])
        return out


@dataclass
class TargetTrajectory:
    """Piecewise-linear target motion through waypoints.

    ``waypoints`` is a sequence of (time_s, x_m, y_m).  Between waypoints the
    position is interpolated linearly; outside the waypoint span it clamps to
    the nearest endpoint (the target stands still before its first and after
    its last waypoint).  ``active_interval_s`` optionally restricts the time
    span during which the target reflects at all; outside it the target
    contributes no propagation path.  That is how short-lived ghost
    reflections are injected in simulation.
    """

    waypoints: list[tuple[float, float, float]]
    reflectivity: complex = 0.1 + 0.0j
    active_interval_s: tuple[float, float] | None = None

    def __post_init__(self):
        self._times = np.asarray([w[0] for w in self.waypoints], dtype=float)
        self._xy = np.asarray([(w[1], w[2]) for w in self.waypoints], dtype=float)

    def position_at(self, t: float) -> np.ndarray:
        x = np.interp(t, self._times, self._xy[:, 0])
        y = np.interp(t, self._times, self._xy[:, 1])
        return np.array([x, y])

    def active_at(self, t: float) -> bool:
        if self.active_interval_s is None:
            return True
        lo, hi = self.active_interval_s
        return lo <= t <= hi

    @classmethod
    def from_dict(cls, raw: dict) -> "TargetTrajectory":
        known = {"waypoints", "reflectivity", "active_interval_s"}
        unknown = set(raw) - known
        if unknown:
            raise ScenarioError(f"unknown target keys: {sorted(unknown)}")
        waypoints = [tuple(float(v) for v in w) for w in raw["waypoints"]]
        out = cls(waypoints=waypoints)
        if "reflectivity" in raw:
            out.reflectivity = _as_complex(raw["reflectivity"])
        if raw.get("active_interval_s") is not None:
            lo, hi = raw["active_interval_s"]
            out.active_interval_s = (float(lo), float(hi))
        return out


@dataclass
class ScenarioConfig:
    """Full description of one simulated sensing run.

    Field names carry their unit as a suffix and map one-to-one onto the
    YAML configuration schema.
    """

    carrier_ghz: float = 26.0
    subcarrier_spacing_khz: float = 270.0
    rs_frequency_spacing: int = 24      # every how many subcarriers carry RS
    rs_subcarrier_count: int = 76       # RS subcarriers per frame
    rs_time_spacing: int = 864          # OFDM symbols between RS symbols
    symbol_duration_us: float = 4000.0 / 864.0
    antenna_count: int = 8
    antenna_spacing_wavelengths: float = 0.5
    tx_position_m: tuple[float, float] = (10.0, 0.0)
    rx_position_m: tuple[float, float] = (0.0, 0.0)
    rx_array_normal_deg: float = 90.0
    direct_gain: complex = 1.0 + 0.0j
    snr_db: float | None = None         # None disables receiver noise
    noise_reference_power: float = 1.0  # noise scale for an all-zero frame
    frame_count: int = 100
    snapshots_per_cpi: int = 16
    clutter_paths: list[StaticPath] = field(default_factory=list)
    targets: list[TargetTrajectory] = field(default_factory=list)

    # --- derived quantities -------------------------------------------------

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.subcarrier_spacing_khz * 1e3

    @property
    def rs_tone_spacing_hz(self) -> float:
        """Frequency step between adjacent RS subcarriers."""
        return self.rs_frequency_spacing * self.subcarrier_spacing_hz

    @property
    def symbol_duration_s(self) -> float:
        return self.symbol_duration_us * 1e-6

    @property
    def frame_period_s(self) -> float:
        """Time between consecutive CSI frames."""
        return self.rs_time_spacing * self.symbol_duration_s

    @property
    def unambiguous_delay_s(self) -> float:
        return 1.0 / self.rs_tone_spacing_hz

    @property
    def unambiguous_range_m(self) -> float:
        return SPEED_OF_LIGHT * self.unambiguous_delay_s

    @property
    def rx_array_normal_rad(self) -> float:
        return math.radians(self.rx_array_normal_deg)


@dataclass
class PropagationPath:
    """One resolved propagation component at a given instant."""

    delay_s: float
    aoa_rad: float      # global frame; relative to the array normal in steering
    doppler_hz: float
    gain: complex
    kind: str           # "direct" | "clutter" | "target"
    target_index: int | None = None


@dataclass
class CsiFrame:
    """One CSI snapshot: shape (antenna_count, rs_subcarrier_count)."""

    index: int
    timestamp_s: float
    data: np.ndarray


def _bistatic_range(config: ScenarioConfig, position: np.ndarray) -> float:
    tx = np.asarray(config.tx_position_m, dtype=float)
    rx = np.asarray(config.rx_position_m, dtype=float)
    return float(np.linalg.norm(position - tx) + np.linalg.norm(rx - position))


def validate_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Check physical consistency and return the config unchanged.

    Raises ScenarioError naming the violated invariant.  The delay-ambiguity
    check samples target trajectories at their waypoints only: the bistatic
    range is a sum of two norms, hence convex along each linear segment, so
    its maximum over a segment is attained at an endpoint.
    """
    c = config
    if c.carrier_ghz <= 0:
        raise ScenarioError("carrier_ghz must be positive")
    if c.subcarrier_spacing_khz <= 0:
        raise ScenarioError("subcarrier_spacing_khz must be positive")
    if c.rs_frequency_spacing < 1:
        raise ScenarioError("rs_frequency_spacing must be >= 1")
    if c.rs_subcarrier_count < 2:
        raise ScenarioError("rs_subcarrier_count must be >= 2")
    if c.rs_time_spacing < 1:
        raise ScenarioError("rs_time_spacing must be >= 1")
    if c.symbol_duration_us <= 0:
        raise ScenarioError("symbol_duration_us must be positive")
    if c.antenna_count < 2:
        raise ScenarioError("antenna_count must be >= 2")
    if c.antenna_spacing_wavelengths <= 0:
        raise ScenarioError("antenna_spacing_wavelengths must be positive")
    if c.frame_count < 1:
        raise ScenarioError("frame_count must be >= 1")
    if c.snapshots_per_cpi < 1:
        raise ScenarioError("snapshots_per_cpi must be >= 1")
    if c.snr_db is not None and (math.isnan(c.snr_db) or c.snr_db == -math.inf):
        raise ScenarioError("snr_db must be a real number or +inf")
    if c.noise_reference_power <= 0:
        raise ScenarioError("noise_reference_power must be positive")

    tx = np.asarray(c.tx_position_m, dtype=float)
    rx = np.asarray(c.rx_position_m, dtype=float)
    if tx.shape != (2,) or rx.shape != (2,):
        raise ScenarioError("tx_position_m and rx_position_m must be 2D points")
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
        raise ScenarioError("node positions must be finite")
    if np.allclose(tx, rx):
        raise ScenarioError("tx_position_m and rx_position_m must differ")

    max_delay = np.linalg.norm(tx - rx) / SPEED_OF_LIGHT
    for i, path in enumerate(c.clutter_paths):
        if path.delay_ns < 0:
            raise ScenarioError(f"clutter path {i}: delay_ns must be non-negative")
        max_delay = max(max_delay, path.delay_ns * 1e-9)
    for i, target in enumerate(c.targets):
        times = [w[0] for w in target.waypoints]
        if len(times) < 1:
            raise ScenarioError(f"target {i}: needs at least one waypoint")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ScenarioError(f"target {i}: waypoint times must be strictly increasing")
        if not np.all(np.isfinite(target._xy)):
            raise ScenarioError(f"target {i}: waypoint positions must be finite")
        if target.active_interval_s is not None:
            lo, hi = target.active_interval_s
            if hi <= lo:
                raise ScenarioError(f"target {i}: active_interval_s must be increasing")
        for _, x, y in target.waypoints:
            max_delay = max(
                max_delay, _bistatic_range(c, np.array([x, y])) / SPEED_OF_LIGHT
            )
    if max_delay >= c.unambiguous_delay_s:
        raise ScenarioError(
            "path delays exceed the unambiguous delay "
            f"{c.unambiguous_delay_s * 1e9:.1f} ns "
            f"(range {c.unambiguous_range_m:.1f} m); "
            "reduce geometry size or rs_frequency_spacing"
        )
    return config


def paths_at(config: ScenarioConfig, t: float) -> list[PropagationPath]:
    """Resolve all propagation components present at time ``t``.

    The direct Tx->Rx path always comes first, then static clutter, then one
    path per active target.  Target Doppler is the rate of change of the
    bistatic range converted to frequency, estimated by central difference
    over one frame period; a stationary target therefore yields exactly 0 Hz.
    """
    tx = np.asarray(config.tx_position_m, dtype=float)
    rx = np.asarray(config.rx_position_m, dtype=float)
    paths = [
        PropagationPath(
            delay_s=float(np.linalg.norm(tx - rx)) / SPEED_OF_LIGHT,
            aoa_rad=math.atan2(tx[1] - rx[1], tx[0] - rx[0]),
            doppler_hz=0.0,
            gain=config.direct_gain,
            kind="direct",
        )
    ]
    for path in config.clutter_paths:
        paths.append(
            PropagationPath(
                delay_s=path.delay_ns * 1e-9,
                aoa_rad=math.radians(path.aoa_deg),
                doppler_hz=0.0,
                gain=path.gain,
                kind="clutter",
            )
        )
    h = config.frame_period_s
    for idx, target in enumerate(config.targets):
        if not target.active_at(t):
            continue
        pos = target.position_at(t)
        rate = (
            _bistatic_range(config, target.position_at(t + h))
            - _bistatic_range(config, target.position_at(t - h))
        ) / (2.0 * h)
        paths.append(
            PropagationPath(
                delay_s=_bistatic_range(config, pos) / SPEED_OF_LIGHT,
                aoa_rad=math.atan2(pos[1] - rx[1], pos[0] - rx[0]),
                doppler_hz=-rate / config.wavelength_m,
                gain=target.reflectivity,
                kind="target",
                target_index=idx,
            )
        )
    return paths


def synthesize_frame(
    paths: list[PropagationPath], frame_index: int, config: ScenarioConfig
) -> CsiFrame:
    """Superpose all paths into one noiseless CSI frame.

    Per path the entry (p, n) is
    ``gain * exp(j*2*pi*p*spacing*sin(aoa - array_normal))
          * exp(-j*2*pi*n*rs_tone_spacing*delay)
          * exp(j*2*pi*frame_index*frame_period*doppler)``.
    """
    p = np.arange(config.antenna_count)
    n = np.arange(config.rs_subcarrier_count)
    data = np.zeros((config.antenna_count, config.rs_subcarrier_count), dtype=complex)
    for path in paths:
        rel = path.aoa_rad - config.rx_array_normal_rad
        steer = np.exp(2j * np.pi * p * config.antenna_spacing_wavelengths * math.sin(rel))
        ramp = np.exp(-2j * np.pi * n * config.rs_tone_spacing_hz * path.delay_s)
        rotation = np.exp(
            2j * np.pi * frame_index * config.frame_period_s * path.doppler_hz
        )
        data += (path.gain * rotation) * np.outer(steer, ramp)
    return CsiFrame(
        index=frame_index,
        timestamp_s=frame_index * config.frame_period_s,
        data=data,
    )


def add_noise(
    frame: CsiFrame,
    snr_db: float | None,
    rng: np.random.Generator,
    reference_power: float = 1.0,
) -> CsiFrame:
    """Add circular complex Gaussian noise at the requested per-entry SNR.

    SNR is defined against the mean |H|^2 of this frame; an all-zero frame
    falls back to ``reference_power`` so empty scenes still see receiver
    noise.  ``snr_db`` of None or +inf returns the frame unchanged and does
    not consume random numbers.
    """
    if snr_db is None or math.isinf(snr_db):
        return frame
    power = float(np.mean(np.abs(frame.data) ** 2))
    if power == 0.0:
        power = reference_power
    sigma2 = power / (10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal(frame.data.shape) + 1j * rng.standard_normal(
        frame.data.shape
    )
    noise *= math.sqrt(sigma2 / 2.0)
    return CsiFrame(frame.index, frame.timestamp_s, frame.data + noise)


def synthesize_scenario(
    config: ScenarioConfig, rng: np.random.Generator | None = None
) -> list[CsiFrame]:
    """Generate the full frame sequence for a validated scenario."""
    validate_scenario(config)
    if rng is None:
        rng = np.random.default_rng(0)
    frames = []
    for m in range(config.frame_count):
        t = m * config.frame_period_s
        frame = synthesize_frame(paths_at(config, t), m, config)
        frames.append(
            add_noise(frame, config.snr_db, rng, config.noise_reference_power)
        )
    return frames


def rs_overhead(frequency_spacing: int, time_spacing: int) -> float:
    """Fraction of resource elements spent on the sensing reference signal."""
    if frequency_spacing < 1 or time_spacing < 1:
        raise ScenarioError("spacings must be >= 1")
    return 1.0 / (frequency_spacing * time_spacing)


def format_overhead_percent(fraction: float) -> str:
    """Render an overhead fraction as a percentage with two significant digits."""
    return f"{fraction * 100.0:.2g}%"


# --- configuration file mapping ---------------------------------------------

_SCALAR_FIELDS = {
    "carrier_ghz": float,
    "subcarrier_spacing_khz": float,
    "rs_frequency_spacing": int,
    "rs_subcarrier_count": int,
    "rs_time_spacing": int,
    "symbol_duration_us": float,
    "antenna_count": int,
    "antenna_spacing_wavelengths": float,
    "rx_array_normal_deg": float,
    "noise_reference_power": float,
    "frame_count": int,
    "snapshots_per_cpi": int,
}


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed YAML/JSON, rejecting unknown keys."""
    config = ScenarioConfig()
    known = set(_SCALAR_FIELDS) | {
        "tx_position_m",
        "rx_position_m",
        "direct_gain",
        "snr_db",
        "clutter_paths",
        "targets",
    }
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    for key, cast in _SCALAR_FIELDS.items():
        if key in raw:
            setattr(config, key, cast(raw[key]))
    for key in ("tx_position_m", "rx_position_m"):
        if key in raw:
            value = raw[key]
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ScenarioError(f"{key} must be a 2-element [x, y] list")
            setattr(config, key, (float(value[0]), float(value[1])))
    if "direct_gain" in raw:
        config.direct_gain = _as_complex(raw["direct_gain"])
    if "snr_db" in raw:
        config.snr_db = None if raw["snr_db"] is None else float(raw["snr_db"])
    if "clutter_paths" in raw:
        config.clutter_paths = [StaticPath.from_dict(p) for p in raw["clutter_paths"]]
    if "targets" in raw:
        config.targets = [TargetTrajectory.from_dict(t) for t in raw["targets"]]
    return config


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Inverse of scenario_from_dict, used for config hashing and export."""
    out = {key: getattr(config, key) for key in _SCALAR_FIELDS}
    out["tx_position_m"] = list(config.tx_position_m)
    out["rx_position_m"] = list(config.rx_position_m)
    out["direct_gain"] = [config.direct_gain.real, config.direct_gain.imag]
    out["snr_db"] = config.snr_db
    out["clutter_paths"] = [
        {
            "delay_ns": p.delay_ns,
            "aoa_deg": p.aoa_deg,
            "gain": [p.gain.real, p.gain.imag],
        }
        for p in config.clutter_paths
    ]
    out["targets"] = [
        {
            "waypoints": [list(w) for w in t.waypoints],
            "reflectivity": [t.reflectivity.real, t.reflectivity.imag],
            "active_interval_s": (
                None if t.active_interval_s is None else list(t.active_interval_s)
            ),
        }
        for t in config.targets
    ]
    return out

"""Bistatic geometry: from (delay, angle) estimates to Cartesian positions.

The transmitter illuminates the scene and the receiver array measures the
reflection, so a path's delay fixes the bistatic range (an ellipse with the
two nodes as foci) and its arrival angle picks the point on that ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .localization import PathEstimate
from .scenario import SPEED_OF_LIGHT, ScenarioConfig


@dataclass
class BistaticGeometry:
    """Node layout needed to invert delay-angle estimates."""

    baseline_m: float           # transmitter-receiver distance
    tx_bearing_rad: float       # bearing of the receiver as seen from the tx
    rx_position_m: np.ndarray
    rx_array_normal_rad: float

    @classmethod
    def from_scenario(cls, config: ScenarioConfig) -> "BistaticGeometry":
        tx = np.asarray(config.tx_position_m, dtype=float)
        rx = np.asarray(config.rx_position_m, dtype=float)
        baseline = float(np.linalg.norm(rx - tx))
        if baseline <= 0.0:
            raise ValueError("transmitter and receiver must not coincide")
        return cls(
            baseline_m=baseline,
            tx_bearing_rad=math.atan2(rx[1] - tx[1], rx[0] - tx[0]),
            rx_position_m=rx,
            rx_array_normal_rad=config.rx_array_normal_rad,
        )


@dataclass
class Detection:
    """One localized reflection in Cartesian scene coordinates."""

    position_m: np.ndarray
    frame: int
    source: PathEstimate | None = None


def solve_bistatic_position(
    estimate: PathEstimate,
    geometry: BistaticGeometry,
    frame: int = 0,
    min_denominator: float = 1e-6,
) -> Detection | None:
    """Intersect the bistatic range ellipse with the arrival-angle ray.

    Writing phi for the global arrival angle, the receiver-to-target leg is

        l1 = (l_sum^2 - baseline^2) / (2*l_sum - 2*baseline*cos(theta + theta_tx))

    with theta = pi - phi and l_sum the bistatic range from the delay.
    Returns None for estimates that cannot be a real reflection: a bistatic
    range not exceeding the baseline (the direct path, or noise below it)
    or a geometry too close to degenerate (denominator under
    ``min_denominator`` metres).
    """
    l_sum = SPEED_OF_LIGHT * estimate.delay_s
    if l_sum <= geometry.baseline_m:
        return None
    phi_global = geometry.rx_array_normal_rad + estimate.aoa_rad
    theta = math.pi - phi_global
    denom = 2.0 * l_sum - 2.0 * geometry.baseline_m * math.cos(
        theta + geometry.tx_bearing_rad
    )
    if denom < min_denominator:
        return None
    l_rx = (l_sum**2 - geometry.baseline_m**2) / denom
    position = geometry.rx_position_m + l_rx * np.array(
        [math.cos(phi_global), math.sin(phi_global)]
    )
    return Detection(position_m=position, frame=frame, source=estimate)


def bistatic_range(
    target_xy, tx_position_m, rx_position_m
) -> float:
    """Forward model: transmitter-target-receiver path length in metres."""
    target = np.asarray(target_xy, dtype=float)
    tx = np.asarray(tx_position_m, dtype=float)
    rx = np.asarray(rx_position_m, dtype=float)
    return float(np.linalg.norm(target - tx) + np.linalg.norm(rx - target))

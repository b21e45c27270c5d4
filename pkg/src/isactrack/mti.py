"""Moving-target-indication filtering of CSI frame streams.

Static propagation (the direct path and clutter) is identical from frame to
frame, so subtracting a running average of the last ``window_length`` frames
cancels it while passing components whose phase rotates with Doppler.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .scenario import CsiFrame


class MtiState:
    """Sliding-average canceller state for one CSI stream.

    ``window_length`` of 0 turns the filter into a passthrough.  The running
    sum is updated incrementally and recomputed exactly every
    ``recompute_interval`` updates to stop floating-point drift.
    """

    def __init__(self, window_length: int, recompute_interval: int = 1000):
        if window_length < 0:
            raise ValueError("window_length must be >= 0")
        self.window_length = window_length
        self.recompute_interval = recompute_interval
        self.buffer: deque[np.ndarray] = deque()
        self.running_sum: np.ndarray | None = None
        self._updates = 0

    @property
    def warmed_up(self) -> bool:
        return self.window_length == 0 or len(self.buffer) == self.window_length


def mti_filter(frame: CsiFrame, state: MtiState) -> CsiFrame | None:
    """Subtract the window average from ``frame`` and advance the window.

    Returns None while the window is still filling (the first
    ``window_length`` frames produce no output).  The frame itself enters
    the window only after being filtered, so the subtracted average covers
    strictly older frames.
    """
    if state.window_length == 0:
        return frame

    if state.running_sum is None:
        state.running_sum = np.zeros_like(frame.data)

    if not state.warmed_up:
        state.buffer.append(frame.data)
        state.running_sum += frame.data
        return None

    cleaned = frame.data - state.running_sum / state.window_length

    oldest = state.buffer.popleft()
    state.running_sum -= oldest
    state.buffer.append(frame.data)
    state.running_sum += frame.data
    state._updates += 1
    if state._updates % state.recompute_interval == 0:
        state.running_sum = np.sum(np.stack(state.buffer), axis=0)

    return CsiFrame(frame.index, frame.timestamp_s, cleaned)


def mti_attenuation(window_length: int, phase_step: float) -> float:
    """Amplitude response of the canceller to a tone at Doppler phase
    ``phase_step`` radians per frame.

    Equals |sin(K*step/2)| / (K*|sin(step/2)|), the magnitude of the
    geometric series mean; the removable singularity at multiples of 2*pi
    evaluates to 1 (static components are subtracted perfectly, so the
    attenuation of the *average* equals 1 there).  Clamped to [0, 1] against
    floating-point overshoot.
    """
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    # Reduce to (-pi, pi] first: IEEE remainder is exact, so the pole at
    # multiples of 2*pi maps to exactly 0 and sin stays accurate near it.
    wrapped = math.remainder(phase_step, 2.0 * math.pi)
    if wrapped == 0.0:
        return 1.0
    value = abs(math.sin(window_length * wrapped / 2.0)) / (
        window_length * abs(math.sin(wrapped / 2.0))
    )
    return min(value, 1.0)


def doppler_phase_step(doppler_hz: float, frame_period_s: float) -> float:
    """Phase advance per frame of a target at the given Doppler frequency."""
    return 2.0 * math.pi * doppler_hz * frame_period_s

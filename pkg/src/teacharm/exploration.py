"""Force-triggered spiral self-exploration for insertion primitives.

A hysteresis pair of force thresholds gates an Archimedean spiral that
is superimposed on the attractor in the plane orthogonal to the
insertion axis. On release the discovered lateral offset is frozen into
the remaining attractor stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_ACTIVATION_FORCE_N = 3.0
DEFAULT_DEACTIVATION_FORCE_N = 1.0
DEFAULT_PITCH_M_PER_RAD = 2.5e-4
DEFAULT_ANGULAR_RATE_RAD_S = 1.5 * np.pi
DEFAULT_MAX_RADIUS_M = 0.018


@dataclass(frozen=True)
class ExplorationState:
    """Spiral search state machine; instances are immutable snapshots."""

    mode: str = "inactive"  # inactive | active
    phase_rad: float = 0.0
    center_m: np.ndarray | None = None
    activation_force_n: float = DEFAULT_ACTIVATION_FORCE_N
    deactivation_force_n: float = DEFAULT_DEACTIVATION_FORCE_N
    pitch_m_per_rad: float = DEFAULT_PITCH_M_PER_RAD
    angular_rate_rad_s: float = DEFAULT_ANGULAR_RATE_RAD_S
    max_radius_m: float = DEFAULT_MAX_RADIUS_M
    frozen_offset_m: np.ndarray = field(default_factory=lambda: np.zeros(2))
    activation_count: int = 0
    total_phase_rad: float = 0.0  # accumulated across search episodes

    def __post_init__(self):
        if not self.activation_force_n > self.deactivation_force_n > 0.0:
            raise ValueError("need activation force > deactivation force > 0")
        if min(self.pitch_m_per_rad, self.angular_rate_rad_s, self.max_radius_m) <= 0.0:
            raise ValueError("spiral parameters must be positive")

    @property
    def active(self) -> bool:
        return self.mode == "active"

    def current_offset(self) -> np.ndarray:
        """Planar spiral offset at the current phase (m, 2-vector)."""
        radius = min(self.pitch_m_per_rad * self.phase_rad, self.max_radius_m)
        return radius * np.array([np.cos(self.phase_rad), np.sin(self.phase_rad)])

    def radius_exhausted(self, extra_phase_rad: float = 4.0 * np.pi) -> bool:
        """True once the spiral has spent `extra_phase_rad` at its radius cap."""
        return self.pitch_m_per_rad * self.phase_rad > \
            self.pitch_m_per_rad * extra_phase_rad + self.max_radius_m

    def budget_exhausted(self) -> bool:
        """Cumulative cap over re-triggered searches (false releases can
        restart the spiral; the total spent phase stays bounded)."""
        budget = 2.0 * (self.max_radius_m / self.pitch_m_per_rad + 4.0 * np.pi)
        return self.total_phase_rad > budget


def exploration_offset(state: ExplorationState,
                       dt: float) -> tuple[np.ndarray, ExplorationState]:
    """Advance the spiral one tick and return its planar offset.

    Archimedean spiral radius = pitch * phase, capped at max_radius;
    the offset is expressed in the plane orthogonal to the insertion
    axis, centered at the activation point. Inactive state yields a zero
    offset and no phase advance.
    """
    if not state.active:
        return np.zeros(2), state
    step = state.angular_rate_rad_s * dt
    new = replace(state, phase_rad=state.phase_rad + step,
                  total_phase_rad=state.total_phase_rad + step)
    return new.current_offset(), new


def update_exploration(state: ExplorationState, vertical_force_n: float,
                       position_m: np.ndarray | None = None,
                       discovered_offset_m: np.ndarray | None = None
                       ) -> ExplorationState:
    """Hysteresis transition of the search mode.

    Crossing above the activation force starts a fresh spiral centered at
    the current position; dropping below the deactivation force stops it
    and freezes the discovered lateral offset for the remaining stream.
    Forces inside the band change nothing.

    Args:
        discovered_offset_m: lateral offset (2,) to freeze on the
            deactivation edge, e.g. where the tool tip actually released
            relative to the nominal attractor; defaults to the spiral's
            own current offset.
    """
    if not state.active and vertical_force_n > state.activation_force_n:
        return replace(state, mode="active", phase_rad=0.0,
                       center_m=None if position_m is None
                       else np.asarray(position_m, dtype=float).copy(),
                       activation_count=state.activation_count + 1)
    if state.active and vertical_force_n < state.deactivation_force_n:
        if discovered_offset_m is None:
            frozen = state.frozen_offset_m + state.current_offset()
        else:
            frozen = np.asarray(discovered_offset_m, dtype=float).copy()
        return replace(state, mode="inactive", frozen_offset_m=frozen)
    return state

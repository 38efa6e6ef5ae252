"""State types, constant system matrices, and the discrete dynamics steps.

Drones are discrete double integrators in 3-D; targets are double
integrators on the ground plane driven by random accelerations.  All
matrices are fixed once a sampling period is chosen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ModelInputError

# Ground-plane projection: drops the z coordinate of a drone position.
F_PROJECTION = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class DroneState:
    """Position/velocity pair of one tasking drone."""

    position: np.ndarray  # (3,) meters
    velocity: np.ndarray  # (3,) m/s
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ModelInputError("drone state requires 3-vectors")
        if not (np.isfinite(self.position).all() and np.isfinite(self.velocity).all()):
            raise ModelInputError(f"non-finite drone state (id={self.id})")

    @property
    def ground_position(self) -> np.ndarray:
        return self.position[:2]


@dataclass(frozen=True)
class TargetState:
    """Hidden ground-truth state of one moving ground target."""

    position: np.ndarray  # (2,) meters
    velocity: np.ndarray  # (2,) m/s
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (2,) or self.velocity.shape != (2,):
            raise ModelInputError("target state requires 2-vectors")
        if not (np.isfinite(self.position).all() and np.isfinite(self.velocity).all()):
            raise ModelInputError(f"non-finite target state (id={self.id})")

    @property
    def state_vector(self) -> np.ndarray:
        """Stacked [position, velocity] 4-vector."""
        return np.concatenate([self.position, self.velocity])


@dataclass(frozen=True)
class Obstacle:
    """Static obstacle; position never changes after scenario load."""

    position: np.ndarray  # (3,) meters
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.position.shape != (3,):
            raise ModelInputError("obstacle position must be a 3-vector")
        if not np.isfinite(self.position).all():
            raise ModelInputError(f"non-finite obstacle position (id={self.id})")


def _drone_matrices(t: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.eye(6)
    a[:3, 3:] = t * np.eye(3)
    b = np.vstack([0.5 * t * t * np.eye(3), t * np.eye(3)])
    return a, b


def _target_matrices(t: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.eye(4)
    a[:2, 2:] = t * np.eye(2)
    b = np.vstack([0.5 * t * t * np.eye(2), t * np.eye(2)])
    return a, b


@dataclass(frozen=True)
class SystemMatrices:
    """Constant dynamics matrices for a given sampling period.

    The drone stacked-state transition A3/B3 and its planar analog A2/B2
    share the same block structure; the extreme eigenvalues of A3*A3' and
    B3*B3' have the closed forms exposed as a_lo / a_hi / b_hi.
    """

    t: float
    A3: np.ndarray = field(init=False)
    B3: np.ndarray = field(init=False)
    A2: np.ndarray = field(init=False)
    B2: np.ndarray = field(init=False)
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        if not (isinstance(self.t, (int, float)) and math.isfinite(self.t) and self.t > 0):
            raise ConfigurationError(f"sampling period must be positive, got {self.t!r}")
        object.__setattr__(self, "t", float(self.t))
        a3, b3 = _drone_matrices(self.t)
        a2, b2 = _target_matrices(self.t)
        for name, m in [("A3", a3), ("B3", b3), ("A2", a2), ("B2", b2), ("F", F_PROJECTION.copy())]:
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def a_lo(self) -> float:
        t = self.t
        return (2.0 + t * t - t * math.sqrt(4.0 + t * t)) / 2.0

    @property
    def a_hi(self) -> float:
        t = self.t
        return (2.0 + t * t + t * math.sqrt(4.0 + t * t)) / 2.0

    @property
    def b_hi(self) -> float:
        t = self.t
        return t**4 / 4.0 + t * t


def eigen_bounds(mats: SystemMatrices) -> tuple[float, float, float]:
    """Closed-form extreme eigenvalues (a_lo, a_hi, b_hi) of A3*A3' and B3*B3'."""
    return mats.a_lo, mats.a_hi, mats.b_hi


@dataclass(frozen=True)
class PresetShape:
    """Rotating radius-rho offset that defines the encirclement orbit.

    The offset advances by pi/ell radians per step, so one full revolution
    takes 2*ell steps.  ell >= 4 keeps the rotating geometry informative
    enough for the windowed observability analysis.
    """

    rho: float
    ell: int

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigurationError(f"shape radius must be positive, got {self.rho}")
        if not (isinstance(self.ell, int) and self.ell >= 4):
            raise ConfigurationError(f"shape period parameter must be an integer >= 4, got {self.ell!r}")

    @property
    def nu_bar(self) -> float:
        return 1.0 / self.ell


def preset_shape(k: int, shape: PresetShape) -> np.ndarray:
    """Orbit offset at step k: rho * [sin(k*pi/ell), cos(k*pi/ell)].

    The step index is reduced mod 2*ell before the angle is formed, so the
    2*ell periodicity is exact and large k cannot lose precision.
    """
    if k < 0:
        raise ModelInputError(f"step index must be non-negative, got {k}")
    phase = math.pi * (k % (2 * shape.ell)) / shape.ell
    return shape.rho * np.array([math.sin(phase), math.cos(phase)])


def step_drone(state: DroneState, u: np.ndarray, mats: SystemMatrices) -> DroneState:
    """Advance one drone by one sampling period under acceleration u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (3,) or not np.isfinite(u).all():
        raise ModelInputError(f"acceleration must be a finite 3-vector, got {u!r}")
    t = mats.t
    return DroneState(
        position=state.position + t * state.velocity + 0.5 * t * t * u,
        velocity=state.velocity + t * u,
        id=state.id,
    )


def step_target(state: TargetState, omega: np.ndarray, mats: SystemMatrices) -> TargetState:
    """Advance one target by one sampling period under acceleration sample omega."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (2,) or not np.isfinite(omega).all():
        raise ModelInputError(f"target acceleration must be a finite 2-vector, got {omega!r}")
    eta = mats.A2 @ state.state_vector + mats.B2 @ omega
    return TargetState(position=eta[:2], velocity=eta[2:], id=state.id)

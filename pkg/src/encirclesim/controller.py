"""Pseudo-force fields and the acceleration command.

Each tasking drone feels an attractive force toward its orbit slot
around the estimated target, an interaction force pushing it off nearby
drones, and a repulsive force from obstacles and other targets.  The
interaction and repulsive forces act only inside distance annuli and are
norm-capped when they roughly align with the attraction, which prevents
a close obstacle from slingshotting the drone into its target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .model import SystemMatrices

# Floor applied to the barrier denominators right at the annulus edge.
DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class ControllerParams:
    """Coefficients of the pseudo-force fields.

    r_safe is the drone radius plus minimum clearance; delta_r pads the
    action radius; cap bounds the interaction/repulsive force norms when
    the angle conditions fire.  barrier_limit saturates each barrier force
    unconditionally: the barriers diverge at their inner edges, and an
    unbounded push would hop a drone clear over the thin active shell in
    one sampling period instead of holding it at the rim.  u_max is the
    actuator saturation applied per command component.
    """

    gamma1: float = 0.05
    gamma2: float = 0.005
    drone_radius: float = 0.1
    safety_margin: float = 0.1
    delta_r: float = 0.1
    cap: float = 1.0
    barrier_limit: float = 0.6
    u_max: float = 50.0

    def __post_init__(self):
        values = (
            self.gamma1,
            self.gamma2,
            self.drone_radius,
            self.safety_margin,
            self.delta_r,
            self.cap,
            self.barrier_limit,
            self.u_max,
        )
        if any(v <= 0 for v in values):
            raise ConfigurationError(f"controller parameters must all be positive, got {self}")
        if self.cap > self.u_max:
            raise ConfigurationError(
                f"force cap {self.cap} must not exceed actuator saturation {self.u_max}"
            )

    @property
    def r_safe(self) -> float:
        return self.drone_radius + self.safety_margin


@dataclass
class ForceBreakdown:
    """Per-drone force components before and after capping."""

    at: np.ndarray  # attractive, z component always 0
    inter: np.ndarray  # interaction, pre-cap
    rep: np.ndarray  # repulsive, pre-cap
    inter_capped: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rep_capped: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inter_cap_applied: bool = False
    rep_cap_applied: bool = False

    @property
    def resultant(self) -> np.ndarray:
        return self.at + self.inter_capped + self.rep_capped


def attractive_force(
    side: str,
    x: np.ndarray,
    s_hat: np.ndarray,
    nu_hat: np.ndarray,
    shape_offset: np.ndarray,
    mats: SystemMatrices,
) -> np.ndarray:
    """Attraction toward the drone's orbit slot around the estimated target.

    The pair member with the lower id takes side "i" and aims at the
    +offset slot; its partner takes side "g" and the -offset slot.  The
    gain 2/t^2 makes the noise-free closed loop reach the slot in a
    single step.
    """
    if side not in ("i", "g"):
        raise ConfigurationError(f"side must be 'i' or 'g', got {side!r}")
    t = mats.t
    p_hat = np.asarray(x, dtype=float)[:2] - np.asarray(s_hat, dtype=float)
    sign = 1.0 if side == "i" else -1.0
    planar = p_hat - sign * np.asarray(shape_offset, dtype=float) - t * np.asarray(nu_hat, dtype=float)
    force = np.zeros(3)
    force[:2] = -(2.0 / (t * t)) * planar
    return force


def _saturate_norm(force: np.ndarray, limit: float) -> np.ndarray:
    norm = float(np.linalg.norm(force))
    if norm > limit:
        return force * (limit / norm)
    return force


def _barrier_term(p: np.ndarray, dist: float, inner: float, outer: float, coeff: float) -> np.ndarray:
    """Shared annulus barrier: zero outside [inner, outer], repels inside."""
    if dist < inner or dist > outer:
        return np.zeros(3)
    gap = inner - dist  # negative inside the annulus
    if abs(gap) < DENOM_FLOOR:
        gap = -DENOM_FLOOR
    denom = gap * dist * dist
    if abs(denom) < DENOM_FLOOR:
        denom = -DENOM_FLOOR
    return (-coeff / denom) * p


def action_radius(nu_hat: np.ndarray, params: ControllerParams, mats: SystemMatrices) -> float:
    """Velocity-inflated force action radius around the assigned target."""
    return params.r_safe + params.delta_r + float(np.linalg.norm(mats.t * np.asarray(nu_hat)))


def interaction_force(
    x: np.ndarray,
    neighbor_positions: list[np.ndarray],
    params: ControllerParams,
    r_bar: float,
) -> np.ndarray:
    """Sum of annulus barriers pushing the drone off its neighbors.

    Active for neighbor distances in [2*r_safe, 2*r_bar]; the summed force
    norm is saturated at barrier_limit.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(3)
    inner = 2.0 * params.r_safe
    outer = 2.0 * r_bar
    for xn in neighbor_positions:
        p = x - np.asarray(xn, dtype=float)
        d = float(np.linalg.norm(p))
        total += _barrier_term(p, d, inner, outer, 2.0 * params.gamma1 * params.r_safe)
    return _saturate_norm(total, params.barrier_limit)


def repulsive_force(
    x: np.ndarray,
    obstacle_positions: list[np.ndarray],
    target_positions: list[np.ndarray],
    params: ControllerParams,
    r_bar: float,
) -> np.ndarray:
    """Sum of annulus barriers off obstacles and other (estimated) targets.

    Obstacle terms act in 3-D; target terms act in the ground plane and
    are embedded with a zero vertical component.  Active for distances in
    [r_safe, r_bar]; the summed force norm is saturated at barrier_limit.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(3)
    coeff = params.gamma2 * params.r_safe
    for o in obstacle_positions:
        p = x - np.asarray(o, dtype=float)
        d = float(np.linalg.norm(p))
        total += _barrier_term(p, d, params.r_safe, r_bar, coeff)
    for s_hat in target_positions:
        planar = x[:2] - np.asarray(s_hat, dtype=float)
        d = float(np.linalg.norm(planar))
        p = np.array([planar[0], planar[1], 0.0])
        total += _barrier_term(p, d, params.r_safe, r_bar, coeff)
    return _saturate_norm(total, params.barrier_limit)


def _dot_nonneg(a: np.ndarray, b: np.ndarray) -> bool:
    """Angle-in-[0, 90] test; zero vectors pass since their dot is zero."""
    return float(a @ b) >= 0.0


def _cap(force: np.ndarray, cap: float) -> np.ndarray:
    return cap * force / max(cap, float(np.linalg.norm(force)))


def apply_caps(fb: ForceBreakdown, params: ControllerParams) -> ForceBreakdown:
    """Norm-cap the interaction/repulsive forces under the angle conditions.

    The interaction force is capped when it is within 90 degrees of the
    attraction and either the repulsion is within 90 degrees of it or the
    repulsion vanishes; symmetrically for the repulsive force.  Uncapped
    forces pass through unchanged.
    """
    eps = params.cap
    at, inter, rep = fb.at, fb.inter, fb.rep
    rep_zero = not rep.any()
    inter_zero = not inter.any()

    cap_inter = _dot_nonneg(inter, at) and (_dot_nonneg(rep, inter) or rep_zero)
    cap_rep = _dot_nonneg(rep, at) and (_dot_nonneg(rep, inter) or inter_zero)

    fb.inter_capped = _cap(inter, eps) if cap_inter else inter.copy()
    fb.rep_capped = _cap(rep, eps) if cap_rep else rep.copy()
    fb.inter_cap_applied = cap_inter
    fb.rep_cap_applied = cap_rep
    return fb


def accel_command(
    fb: ForceBreakdown,
    velocity: np.ndarray,
    params: ControllerParams,
    mats: SystemMatrices,
) -> np.ndarray:
    """Acceleration command: resultant force plus velocity braking.

    The -2v/t braking term makes the double integrator deadbeat under
    pure attraction.  The command is saturated componentwise at u_max.
    """
    u = fb.resultant - (2.0 / mats.t) * np.asarray(velocity, dtype=float)
    return np.clip(u, -params.u_max, params.u_max)

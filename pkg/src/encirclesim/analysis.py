"""Diagnostics: observability/controllability Gramians, error bounds, audits.

Everything here runs post-hoc over immutable run histories and reports
empirical statistics against formula evaluations; nothing feeds back
into the closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, ConfigurationError
from .model import SystemMatrices

RANK_TOL_FACTOR = 1e-10
EIGEN_FLOOR = 1e-12


@dataclass
class ObservabilityReport:
    """Windowed observability of the scalar squared-range-difference output."""

    window: int  # m1, window covers [k - m1, k]
    O2: np.ndarray  # (m1+1, 4)
    O1: np.ndarray  # (4, 4) = O2' diag(var)^-1 O2
    rank: int
    singular_values: np.ndarray
    eig_min: float
    eig_max: float
    observable: bool


@dataclass
class ControllabilityReport:
    """Process-noise controllability Gramian of the planar target model."""

    window: int
    gramian: np.ndarray  # (4, 4)
    eigenvalues: np.ndarray
    positive_definite: bool


@dataclass
class GramianReport:
    observability: ObservabilityReport
    controllability: ControllabilityReport


def observability_gramian(
    p_pairs: list[np.ndarray],
    var_hats: list[float],
    mats: SystemMatrices,
) -> ObservabilityReport:
    """Assemble the windowed observability matrix and its Gramian.

    p_pairs[m] is the relative drone position at lag m (m = 0 is the most
    recent instant); var_hats[m] the matching output-noise variance.  Row
    m of the stacked matrix is -2 * [p', -m*t*p'] with p the ground
    projection of the lag-m relative position.  Rank is judged from the
    singular values relative to the largest one.
    """
    if not p_pairs:
        raise AnalysisError("observability window is empty")
    if len(p_pairs) != len(var_hats):
        raise AnalysisError("window positions and variances differ in length")
    if len(p_pairs) < 4:
        raise AnalysisError(f"window needs at least 4 instants, got {len(p_pairs)}")
    m1 = len(p_pairs) - 1
    t = mats.t
    o2 = np.zeros((m1 + 1, 4))
    for m, p in enumerate(p_pairs):
        ground = np.asarray(p, dtype=float)[:2]
        o2[m, :2] = -2.0 * ground
        o2[m, 2:] = -2.0 * (-m * t) * ground
    var = np.asarray(var_hats, dtype=float)
    if (var <= 0.0).any():
        raise AnalysisError("output-noise variances must be positive")
    o1 = o2.T @ np.diag(1.0 / var) @ o2
    o1 = 0.5 * (o1 + o1.T)
    svals = np.linalg.svd(o2, compute_uv=False)
    tol = RANK_TOL_FACTOR * (svals[0] if svals.size else 0.0)
    rank = int((svals > tol).sum())
    eigs = np.linalg.eigvalsh(o1)
    return ObservabilityReport(
        window=m1,
        O2=o2,
        O1=o1,
        rank=rank,
        singular_values=svals,
        eig_min=float(eigs[0]),
        eig_max=float(eigs[-1]),
        observable=bool(rank == 4 and eigs[0] > EIGEN_FLOOR),
    )


def controllability_gramian(m1: int, t: float, Q: np.ndarray) -> ControllabilityReport:
    """Gramian of the accumulated process noise over an (m1+1)-step window.

    The stacked input matrix has position columns (2m+1)*t^2/2 and
    velocity columns t for m = 0..m1, each acting on both planar axes.
    Q must be symmetric with no negative eigenvalues; a singular Q is
    allowed and simply yields a Gramian that fails the PD check.
    """
    if m1 < 1:
        raise ConfigurationError(f"window must cover at least two instants, got m1={m1}")
    if t <= 0:
        raise ConfigurationError(f"sampling period must be positive, got {t}")
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (2, 2) or not np.allclose(Q, Q.T):
        raise ConfigurationError("process noise covariance must be symmetric 2x2")
    if np.linalg.eigvalsh(Q).min() < -EIGEN_FLOOR:
        raise ConfigurationError("process noise covariance must not have negative eigenvalues")
    blocks = []
    for m in range(m1 + 1):
        h = np.array([[(2 * m + 1) * t * t / 2.0], [t]])
        blocks.append(np.kron(h, np.eye(2)))
    h2 = np.hstack(blocks)  # (4, 2*(m1+1))
    q_hat = np.kron(np.eye(m1 + 1), Q)
    gram = h2 @ q_hat @ h2.T
    gram = 0.5 * (gram + gram.T)
    eigs = np.linalg.eigvalsh(gram)
    return ControllabilityReport(
        window=m1,
        gramian=gram,
        eigenvalues=eigs,
        positive_definite=bool(eigs[0] > EIGEN_FLOOR),
    )


@dataclass
class CovarianceBounds:
    """Filter covariance eigenvalue band implied by the Gramian extremes.

    zeta_inv_hi / zeta_inv_lo bound the inverse covariance eigenvalues,
    so covariance eigenvalues should lie in [1/zeta_inv_hi, 1/zeta_inv_lo].
    """

    zeta_inv_hi: float
    zeta_inv_lo: float

    @property
    def eig_band(self) -> tuple[float, float]:
        return 1.0 / self.zeta_inv_hi, 1.0 / self.zeta_inv_lo


def covariance_bounds(
    obs_eig_min: float,
    obs_eig_max: float,
    ctrl_eig_min: float,
    ctrl_eig_max: float,
    m1: int,
    mats: SystemMatrices,
    zeta0: np.ndarray,
    q_hi: float,
    c_hi: float,
    var_lo: float,
) -> CovarianceBounds:
    """Worst-case inverse-covariance band from the windowed Gramians.

    Combines the steady-window bounds (from the Gramian extremes) with the
    geometric pre-window accumulation from the initial covariance.  q_hi
    bounds the process-noise eigenvalues, c_hi the squared relative-drone
    distance, var_lo the output-noise variance from below.
    """
    if min(obs_eig_min, ctrl_eig_min) <= 0.0:
        raise AnalysisError("covariance bounds need strictly positive Gramian extremes")
    a_lo, a_hi, b_hi = mats.a_lo, mats.a_hi, mats.b_hi
    zeta0 = np.asarray(zeta0, dtype=float)
    lam0 = np.linalg.eigvalsh(zeta0)
    geo_lo = sum(a_lo ** (-m) for m in range(m1 - 1)) if m1 >= 2 else 0.0
    upper_pre = a_lo ** (1 - m1) / lam0[0] + 4.0 * geo_lo * c_hi / var_lo
    upper_steady = 1.0 / ctrl_eig_min + obs_eig_max
    geo_hi = sum(a_hi**m for m in range(m1 - 1)) if m1 >= 2 else 0.0
    lower_pre = 1.0 / (a_hi ** (m1 - 1) * lam0[-1] + geo_hi * b_hi * q_hi)
    lower_steady = ctrl_eig_max / (1.0 + ctrl_eig_max * obs_eig_min)
    return CovarianceBounds(
        zeta_inv_hi=max(upper_pre, upper_steady),
        zeta_inv_lo=min(lower_pre, lower_steady),
    )


@dataclass
class BoundCheck:
    """Empirical mean-square encirclement error against its predicted bound."""

    target_id: int
    ms_estimation: float  # pooled mean square of the 4-D estimation error
    ms_encirclement: float  # pooled mean square of the pair-sum error
    bound: float
    samples: int
    ok: bool


def encirclement_bounds(
    e_sq: dict[int, np.ndarray],
    ebar_sq: dict[int, np.ndarray],
    mats: SystemMatrices,
    q_hi: float,
    min_samples: int = 1000,
) -> list[BoundCheck]:
    """Check the encirclement-error bound per target.

    e_sq / ebar_sq map target ids to pooled post-transient arrays of
    squared error norms.  The bound is 4*a_hi*MS(e) + 2*t^4*q_hi with
    MS(e) the empirical mean-square estimation error.  Raises when any
    target has fewer than min_samples post-transient samples.
    """
    if set(e_sq) != set(ebar_sq):
        raise AnalysisError("estimation and encirclement histories cover different targets")
    if not e_sq:
        raise AnalysisError("no targets to check")
    checks = []
    for j in sorted(e_sq):
        n = len(e_sq[j])
        if n < min_samples or len(ebar_sq[j]) < min_samples:
            raise AnalysisError(
                f"target {j} has {n} post-transient samples, need at least {min_samples}"
            )
        ms_e = float(np.mean(e_sq[j]))
        ms_ebar = float(np.mean(ebar_sq[j]))
        bound = 4.0 * mats.a_hi * ms_e + 2.0 * mats.t**4 * q_hi
        checks.append(
            BoundCheck(
                target_id=j,
                ms_estimation=ms_e,
                ms_encirclement=ms_ebar,
                bound=bound,
                samples=n,
                ok=ms_ebar <= bound,
            )
        )
    return checks


@dataclass
class CollisionAudit:
    """Minimum separations over a run and any threshold violations."""

    min_drone_distance: float
    min_obstacle_distance: float
    drone_threshold: float  # physical overlap: twice the drone radius
    obstacle_threshold: float  # safety radius
    drone_violations: list[int] = field(default_factory=list)  # step indices
    obstacle_violations: list[int] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.drone_violations and not self.obstacle_violations


def collision_audit(
    min_drone_dists: np.ndarray,
    min_obstacle_dists: np.ndarray,
    drone_radius: float,
    r_safe: float,
) -> CollisionAudit:
    """Audit per-step minimum separations against the overlap thresholds.

    min_obstacle_dists may contain +inf entries (no obstacles in range or
    none configured); those never violate.
    """
    dd = np.asarray(min_drone_dists, dtype=float)
    do = np.asarray(min_obstacle_dists, dtype=float)
    dd_thresh = 2.0 * drone_radius
    drone_viol = [int(k) for k in np.flatnonzero(dd < dd_thresh)]
    obst_viol = [int(k) for k in np.flatnonzero(do < r_safe)]
    return CollisionAudit(
        min_drone_distance=float(dd.min()) if dd.size else float("inf"),
        min_obstacle_distance=float(do.min()) if do.size else float("inf"),
        drone_threshold=dd_thresh,
        obstacle_threshold=r_safe,
        drone_violations=drone_viol,
        obstacle_violations=obst_viol,
    )

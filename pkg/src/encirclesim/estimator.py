"""Pair-wise range-difference Kalman estimation of target state.

Two drones observing the same target combine their squared ranges into a
scalar output that is linear in the target state.  The output noise is
non-Gaussian with non-zero mean and state-dependent variance; both are
estimated from the repeated range samples, and a Kalman recursion driven
by the scalar output produces the target state estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .model import SystemMatrices
from .sensing import RangeBatch


@dataclass(frozen=True)
class MeasurementRecord:
    """Scalar output built from one pair of range batches.

    theta is the squared-range difference corrected by the drone position
    terms; C is the 1x4 output row; mean_offset the known output-noise
    mean; var_hat the estimated output-noise variance.  degenerate is set
    when the two drones project to the same ground point, which zeroes C
    and turns the filter update into a pure prediction.
    """

    theta: float
    C: np.ndarray  # (4,)
    mean_offset: float
    var_hat: float
    target_id: int
    pair: tuple[int, int]
    p_pair: np.ndarray  # (3,) relative drone position x_i - x_g
    clamped: bool = False
    degenerate: bool = False


def estimate_output_variance(batch_i: RangeBatch, batch_g: RangeBatch) -> tuple[float, bool]:
    """Estimated variance of the single-sample squared-range-difference noise.

    Uses the batch means of the squared samples; the (mean - q) factors
    estimate the true squared distances and are clamped at zero since a
    squared distance cannot be negative.  Returns (variance, clamped?).
    """
    qi, qg = batch_i.q, batch_g.q
    di2 = batch_i.mean_square - qi
    dg2 = batch_g.mean_square - qg
    clamped = di2 < 0.0 or dg2 < 0.0
    var = 2.0 * qi * qi + 2.0 * qg * qg + 4.0 * max(di2, 0.0) * qi + 4.0 * max(dg2, 0.0) * qg
    return float(var), clamped


def build_measurement(
    batch_i: RangeBatch,
    batch_g: RangeBatch,
    x_i: np.ndarray,
    x_g: np.ndarray,
) -> MeasurementRecord:
    """Combine the two drones' batches into the scalar output record.

    theta averages the squared samples of each batch, so its noise is the
    mean of the per-sample output noises; var_hat is accordingly the
    single-sample variance estimate divided by the smaller batch size.
    x_i / x_g are the 3-D drone positions.
    """
    if batch_i.target_id != batch_g.target_id or batch_i.step != batch_g.step:
        raise ConfigurationError("batches must refer to the same target and step")
    if batch_i.drone_id == batch_g.drone_id:
        raise ConfigurationError("a measurement pair needs two distinct drones")
    x_i = np.asarray(x_i, dtype=float)
    x_g = np.asarray(x_g, dtype=float)
    gi = x_i[:2]
    gg = x_g[:2]
    theta = batch_i.mean_square - batch_g.mean_square - float(gi @ gi) + float(gg @ gg)
    p_pair = x_i - x_g
    c = np.zeros(4)
    c[:2] = -2.0 * p_pair[:2]
    degenerate = bool(np.allclose(p_pair[:2], 0.0))
    var_single, clamped = estimate_output_variance(batch_i, batch_g)
    f_eff = min(batch_i.samples.size, batch_g.samples.size)
    return MeasurementRecord(
        theta=float(theta),
        C=c,
        mean_offset=batch_i.q - batch_g.q,
        var_hat=var_single / f_eff,
        target_id=batch_i.target_id,
        pair=(batch_i.drone_id, batch_g.drone_id),
        p_pair=p_pair,
        clamped=clamped,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class EstimatorState:
    """Kalman state for one target: estimate, covariances, and last gain."""

    eta_hat: np.ndarray  # (4,) [position, velocity]
    zeta: np.ndarray  # (4, 4) error covariance
    zeta_pred: np.ndarray  # (4, 4) predicted covariance from the last update
    gain: np.ndarray  # (4,)
    target_id: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.eta_hat[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.eta_hat[2:]


def extract_state(est: EstimatorState) -> tuple[np.ndarray, np.ndarray]:
    """Split the stacked estimate into (position, velocity)."""
    return est.eta_hat[:2].copy(), est.eta_hat[2:].copy()


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def filter_predict(est: EstimatorState, Q: np.ndarray, mats: SystemMatrices) -> EstimatorState:
    """Prediction-only step, used when no range batch is available.

    Propagates the estimate through the target model and inflates the
    covariance by the process noise; the gain is zeroed.
    """
    a2, b2 = mats.A2, mats.B2
    zeta_pred = _symmetrize(a2 @ est.zeta @ a2.T + b2 @ np.asarray(Q, dtype=float) @ b2.T)
    return EstimatorState(
        eta_hat=a2 @ est.eta_hat,
        zeta=zeta_pred,
        zeta_pred=zeta_pred,
        gain=np.zeros(4),
        target_id=est.target_id,
    )


def filter_update(
    est: EstimatorState,
    meas: MeasurementRecord,
    Q: np.ndarray,
    mats: SystemMatrices,
) -> EstimatorState:
    """One predict/update cycle of the range-difference Kalman filter.

    Prediction uses the planar double-integrator model with process noise
    covariance Q; the update corrects with the scalar output, compensating
    its known noise mean.  The posterior covariance is symmetrized.  A
    degenerate (zero) output row yields a pure prediction because the
    gain vanishes.
    """
    a2, b2 = mats.A2, mats.B2
    zeta_pred = _symmetrize(a2 @ est.zeta @ a2.T + b2 @ np.asarray(Q, dtype=float) @ b2.T)
    c = meas.C
    innov_var = float(c @ zeta_pred @ c) + meas.var_hat
    if innov_var <= 0.0:
        raise NumericalError(f"innovation variance {innov_var} is not positive")
    gain = (zeta_pred @ c) / innov_var
    eta_pred = a2 @ est.eta_hat
    predicted_output = float(c @ eta_pred) + meas.mean_offset
    eta_hat = eta_pred + gain * (meas.theta - predicted_output)
    zeta = _symmetrize((np.eye(4) - np.outer(gain, c)) @ zeta_pred)
    return EstimatorState(
        eta_hat=eta_hat,
        zeta=zeta,
        zeta_pred=zeta_pred,
        gain=gain,
        target_id=est.target_id,
    )


def _circle_intersection(a: np.ndarray, b: np.ndarray, r_a: float, r_b: float) -> np.ndarray | None:
    """Intersection of two circles, made deterministic.

    The two intersection points are mirror images across the center line
    and therefore equidistant from the midpoint of the centers; the point
    on the +90 degree side of the a->b baseline is returned so the choice
    is deterministic.  None when the circles do not intersect.
    """
    d = float(np.linalg.norm(b - a))
    if d <= 0.0:
        return None
    if d > r_a + r_b or d < abs(r_a - r_b):
        return None
    along = (r_a * r_a - r_b * r_b + d * d) / (2.0 * d)
    h_sq = r_a * r_a - along * along
    h = np.sqrt(max(h_sq, 0.0))
    axis = (b - a) / d
    normal = np.array([-axis[1], axis[0]])
    return a + along * axis + h * normal


def _line_fallback(a: np.ndarray, b: np.ndarray, r_a: float, r_b: float) -> np.ndarray:
    """Range-residual minimizer on the center line for non-intersecting circles.

    For separated circles this is the midpoint of the gap between them
    (the plain center midpoint when the ranges are equal); when one
    circle contains the other it is the point beyond the nearer drone.
    Identical centers degrade to the center itself.
    """
    d = float(np.linalg.norm(b - a))
    if d <= 0.0:
        return a.copy()
    axis = (b - a) / d
    if d >= r_a + r_b:
        return a + 0.5 * (d + r_a - r_b) * axis
    # One circle inside the other: walk outward past the smaller-range drone.
    mu = 0.5 * (r_a + r_b - d)
    if r_a <= r_b:
        return a - mu * axis
    return b + mu * axis


def init_estimator(
    batch_i: RangeBatch,
    batch_g: RangeBatch,
    x_i: np.ndarray,
    x_g: np.ndarray,
    zeta0: np.ndarray,
    target_id: int = 0,
) -> EstimatorState:
    """Initial estimate from the first pair of range batches.

    The position seed intersects the two mean-range circles around the
    drones' ground projections, falling back to the range-residual
    minimizer on the center line when the circles miss each other (for
    equal ranges and separated circles that is the plain midpoint).
    Velocity starts at zero and the covariance at the supplied positive
    definite zeta0.
    """
    zeta0 = np.asarray(zeta0, dtype=float)
    if zeta0.shape != (4, 4) or not np.allclose(zeta0, zeta0.T):
        raise ConfigurationError("initial covariance must be a symmetric 4x4 matrix")
    if np.linalg.eigvalsh(zeta0).min() <= 0.0:
        raise ConfigurationError("initial covariance must be positive definite")
    a = np.asarray(x_i, dtype=float)[:2]
    b = np.asarray(x_g, dtype=float)[:2]
    r_a = max(batch_i.mean_range, 0.0)
    r_b = max(batch_g.mean_range, 0.0)
    point = _circle_intersection(a, b, r_a, r_b)
    if point is None:
        point = _line_fallback(a, b, r_a, r_b)
    eta0 = np.concatenate([point, np.zeros(2)])
    return EstimatorState(
        eta_hat=eta0,
        zeta=zeta0.copy(),
        zeta_pred=zeta0.copy(),
        gain=np.zeros(4),
        target_id=target_id,
    )

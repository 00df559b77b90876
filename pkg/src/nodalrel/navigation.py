"""Angles-only measurement model and extended Kalman filter over the nodal
relative state.

Satellite 1 measures the azimuth and elevation of the line of sight to
satellite 2 in its own RTN frame, plus the apparent angular size of the
(spherical, known-diameter) target.  The filter propagates the relative
state with the exact reference-anomaly timing: dp is held, the
eccentricity/inclination pairs are rotated analytically, and only dtheta
and the 6x6 state transition matrix are integrated numerically (RK4
substeps).  The reference parameters are treated as perfectly known and
advanced alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroRange
from .dynamics import advance_true_anomaly, f_unperturbed_jacobian
from .relstate import (
    NodalRelativeState,
    ReferenceParams,
    position_jacobians,
    relative_position,
)

#: |elevation| within this distance of pi/2 flags an ill-conditioned azimuth.
GIMBAL_EL_TOL = 1e-9


@dataclass(frozen=True)
class MeasurementTriple:
    """Azimuth, elevation (rad) and apparent angular size (rad)."""

    az: float
    el: float
    beta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.az, self.el, self.beta])


@dataclass(frozen=True)
class NoiseSpec:
    """1-sigma standard deviations of the white measurement noise, rad."""

    sigma_az: float
    sigma_el: float
    sigma_beta: float

    def __post_init__(self):
        if not (self.sigma_az > 0 and self.sigma_el > 0 and self.sigma_beta > 0):
            raise ValueError("noise standard deviations must be positive")

    def covariance(self) -> np.ndarray:
        return np.diag([self.sigma_az ** 2, self.sigma_el ** 2,
                        self.sigma_beta ** 2])


@dataclass(frozen=True)
class FilterState:
    """Estimate of the relative state with its 6x6 error covariance."""

    oe_hat: NodalRelativeState
    P: np.ndarray


@dataclass(frozen=True)
class PredictedMeasurement:
    """Noiseless measurement prediction with its state Jacobian."""

    y: MeasurementTriple
    H: np.ndarray
    gimbal_degenerate: bool


@dataclass(frozen=True)
class EkfUpdate:
    """Posterior state, innovation (az wrapped), and the chi-square gate flag."""

    state: FilterState
    innovation: np.ndarray
    outlier: bool


def measure(dr: np.ndarray, d: float, noise: NoiseSpec,
            rng: np.random.Generator) -> MeasurementTriple:
    """Synthesize a noisy angles-plus-size measurement from an RTN1
    relative position.

    Raises
    ------
    ZeroRange
        If the satellites are co-located.
    """
    dr = np.asarray(dr, dtype=float)
    rho = float(np.linalg.norm(dr))
    if not rho > 0.0:
        raise ZeroRange("measurement undefined at zero separation")
    return MeasurementTriple(
        az=math.atan2(dr[1], dr[0]) + noise.sigma_az * rng.standard_normal(),
        el=math.asin(dr[2] / rho) + noise.sigma_el * rng.standard_normal(),
        beta=d / rho + noise.sigma_beta * rng.standard_normal(),
    )


def predict_measurement(oe: NodalRelativeState, eta: ReferenceParams,
                        d: float) -> PredictedMeasurement:
    """Noiseless measurement and its 3x6 Jacobian with respect to the
    relative state, by the chain rule through the position mapping.

    Raises
    ------
    ZeroRange
        If the predicted separation is zero.
    """
    rel = relative_position(oe, eta)
    dr = rel.dr
    rho = float(np.linalg.norm(dr))
    if not rho > 0.0:
        raise ZeroRange("prediction undefined at zero separation")
    rho_rt2 = dr[0] * dr[0] + dr[1] * dr[1]
    el = math.asin(dr[2] / rho)
    gimbal = abs(abs(el) - 0.5 * math.pi) < GIMBAL_EL_TOL

    y = MeasurementTriple(az=math.atan2(dr[1], dr[0]), el=el, beta=d / rho)

    # d(az, el, beta)/d(dr)
    dy_ddr = np.zeros((3, 3))
    if rho_rt2 > 0.0:
        dy_ddr[0] = np.array([-dr[1], dr[0], 0.0]) / rho_rt2
        rho_rt = math.sqrt(rho_rt2)
        dy_ddr[1] = (np.array([0.0, 0.0, 1.0]) / rho_rt
                     - dr[2] * dr / (rho * rho * rho_rt))
    dy_ddr[2] = -d * dr / rho ** 3

    j_oe, _ = position_jacobians(oe, eta)
    return PredictedMeasurement(y=y, H=dy_ddr @ j_oe, gimbal_degenerate=gimbal)


def _advance_reference(eta: ReferenceParams, dt: float, mu: float,
                       ) -> tuple[ReferenceParams, float]:
    """Exact coast of the reference parameters; returns the anomaly sweep."""
    e1 = eta.e1
    nu0 = eta.nu1
    a1 = eta.p1 / (1.0 - e1 * e1)
    nu1 = float(advance_true_anomaly(nu0, e1, a1, dt, mu))
    new = ReferenceParams(p1=eta.p1, ec=e1 * math.cos(nu1),
                          es=e1 * math.sin(nu1))
    return new, nu1 - nu0


def ekf_propagate(fs: FilterState, eta: ReferenceParams, dt: float,
                  Q: np.ndarray, mu: float, substeps: int = 1,
                  ) -> tuple[FilterState, ReferenceParams]:
    """Propagate mean and covariance over dt seconds of coasting.

    The mean uses the analytic sub-solutions (dp constant, difference
    vectors rotated by the exact anomaly sweep); dtheta and the state
    transition matrix are advanced by RK4 substeps along the analytic
    mean history.  The covariance update is P <- Phi P Phi^T + Q dt, with
    Q a per-second disturbance rate matrix.

    Returns the propagated filter state together with the coasted
    reference parameters.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    oe0 = fs.oe_hat
    e1 = eta.e1
    nu0 = eta.nu1
    a1 = eta.p1 / (1.0 - e1 * e1)

    def stage(tau: float) -> tuple[NodalRelativeState, ReferenceParams]:
        """Analytically-known part of the state at offset tau (dtheta=0)."""
        nu = float(advance_true_anomaly(nu0, e1, a1, tau, mu))
        dnu = nu - nu0
        c, s = math.cos(dnu), math.sin(dnu)
        oe = NodalRelativeState(
            dtheta=0.0, dp=oe0.dp,
            dxi_x=c * oe0.dxi_x - s * oe0.dxi_y,
            dxi_y=s * oe0.dxi_x + c * oe0.dxi_y,
            dh_x=c * oe0.dh_x - s * oe0.dh_y,
            dh_y=s * oe0.dh_x + c * oe0.dh_y)
        et = ReferenceParams(p1=eta.p1, ec=e1 * math.cos(nu),
                             es=e1 * math.sin(nu))
        return oe, et

    def rates(cached, dtheta: float, phi: np.ndarray,
              ) -> tuple[float, np.ndarray]:
        oe_base, et = cached
        oe = NodalRelativeState(
            dtheta=dtheta, dp=oe_base.dp,
            dxi_x=oe_base.dxi_x, dxi_y=oe_base.dxi_y,
            dh_x=oe_base.dh_x, dh_y=oe_base.dh_y)
        k = math.sqrt(mu / et.p1 ** 3)
        c, s = math.cos(oe.dtheta), math.sin(oe.dtheta)
        denom = 1.0 + (oe.dxi_x + et.ec) * c - (oe.dxi_y + et.es) * s
        dth_rate = k * (denom * denom / (1.0 + oe.dp) ** 1.5
                        - (1.0 + et.ec) ** 2)
        return dth_rate, f_unperturbed_jacobian(oe, et, mu) @ phi

    h = dt / substeps
    dtheta = oe0.dtheta
    phi = np.eye(6)
    end_stage = None
    for i in range(substeps):
        tau0 = i * h
        st0 = stage(tau0) if end_stage is None else end_stage
        st_half = stage(tau0 + 0.5 * h)
        end_stage = stage(tau0 + h)
        k1t, k1p = rates(st0, dtheta, phi)
        k2t, k2p = rates(st_half, dtheta + 0.5 * h * k1t,
                         phi + 0.5 * h * k1p)
        k3t, k3p = rates(st_half, dtheta + 0.5 * h * k2t,
                         phi + 0.5 * h * k2p)
        k4t, k4p = rates(end_stage, dtheta + h * k3t, phi + h * k3p)
        dtheta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        phi = phi + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)

    oe_end, eta_new = end_stage
    oe_new = NodalRelativeState(
        dtheta=dtheta, dp=oe_end.dp,
        dxi_x=oe_end.dxi_x, dxi_y=oe_end.dxi_y,
        dh_x=oe_end.dh_x, dh_y=oe_end.dh_y)
    p_new = phi @ fs.P @ phi.T + np.asarray(Q, dtype=float) * dt
    p_new = 0.5 * (p_new + p_new.T)
    return FilterState(oe_hat=oe_new, P=p_new), eta_new


def ekf_update(fs: FilterState, eta: ReferenceParams, z: MeasurementTriple,
               noise: NoiseSpec, d: float,
               chi2_gate: Optional[float] = None) -> EkfUpdate:
    """Standard EKF measurement update with Joseph-form covariance.

    The azimuth residual is wrapped to (-pi, pi]; elevation and angular
    size are plain scalars.  When ``chi2_gate`` is given, the innovation
    Mahalanobis distance squared is compared against it and the result is
    flagged (never dropped) if it exceeds the gate.
    """
    pred = predict_measurement(fs.oe_hat, eta, d)
    innov = z.as_array() - pred.y.as_array()
    innov[0] = math.atan2(math.sin(innov[0]), math.cos(innov[0]))

    r_cov = noise.covariance()
    h = pred.H
    s_cov = h @ fs.P @ h.T + r_cov
    gain = np.linalg.solve(s_cov, h @ fs.P).T  # S symmetric

    outlier = False
    if chi2_gate is not None:
        maha2 = float(innov @ np.linalg.solve(s_cov, innov))
        outlier = maha2 > chi2_gate

    x = fs.oe_hat.as_array() + gain @ innov
    ikh = np.eye(6) - gain @ h
    p_new = ikh @ fs.P @ ikh.T + gain @ r_cov @ gain.T
    p_new = 0.5 * (p_new + p_new.T)
    return EkfUpdate(
        state=FilterState(oe_hat=NodalRelativeState.from_array(x), P=p_new),
        innovation=innov, outlier=outlier)

"""The six-state nodal relative parametrization, its inverse invariant
recovery, relative eccentricity/inclination vectors, and the exact mapping
to local (RTN1) position and velocity.

State conventions, with satellite 1 as the reference:

    dtheta          theta2 - theta1 (phase from the relative node)
    dp              (p2 - p1) / p1
    dxi_x, dxi_y    e2*(cos, sin)(theta1 - lambda2) - e1*(cos, sin)(nu1)
    dh_x, dh_y      tan(gamma/2) * (cos, sin)(theta1)

The reference parameters are p1 and the eccentricity phasor
(e1*cos nu1, e1*sin nu1), which together with the six relative states fully
determine the orbit-pair geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .frames import (
    COPLANAR_GAMMA_TOL,
    ClassicalElements,
    RelativeOrientation,
    relative_orientation,
    wrap_angle,
)


@dataclass(frozen=True)
class NodalRelativeState:
    """Relative state of satellite 2 with respect to reference satellite 1."""

    dtheta: float
    dp: float
    dxi_x: float
    dxi_y: float
    dh_x: float
    dh_y: float

    def __post_init__(self):
        vals = (self.dtheta, self.dp, self.dxi_x, self.dxi_y,
                self.dh_x, self.dh_y)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"nonfinite relative state {vals}")
        if not self.dp > -1.0:
            raise ValueError(f"dp must exceed -1 (p2 > 0), got {self.dp}")
        object.__setattr__(self, "dtheta", wrap_angle(self.dtheta))

    def as_array(self) -> np.ndarray:
        return np.array([self.dtheta, self.dp, self.dxi_x, self.dxi_y,
                         self.dh_x, self.dh_y])

    @classmethod
    def from_array(cls, x) -> "NodalRelativeState":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x))

    @property
    def dxi(self) -> float:
        """Magnitude of the relative eccentricity vector."""
        return math.hypot(self.dxi_x, self.dxi_y)

    @property
    def dh(self) -> float:
        """Magnitude of the relative inclination vector, tan(gamma/2)."""
        return math.hypot(self.dh_x, self.dh_y)


@dataclass(frozen=True)
class ReferenceParams:
    """Reference-orbit parameters: semiparameter and eccentricity phasor."""

    p1: float
    ec: float  # e1 * cos(nu1)
    es: float  # e1 * sin(nu1)

    def __post_init__(self):
        if not self.p1 > 0.0:
            raise ValueError(f"p1 must be positive, got {self.p1}")
        if not self.ec * self.ec + self.es * self.es < 1.0:
            raise ValueError("eccentricity phasor magnitude must be < 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.ec, self.es])

    @classmethod
    def from_array(cls, x) -> "ReferenceParams":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), float(x[2]))

    @property
    def e1(self) -> float:
        return math.hypot(self.ec, self.es)

    @property
    def nu1(self) -> float:
        """True anomaly of the reference; 0 by convention when e1 = 0."""
        if self.ec == 0.0 and self.es == 0.0:
            return 0.0
        return math.atan2(self.es, self.ec)

    @property
    def r1(self) -> float:
        """Reference orbital radius p1 / (1 + e1 cos nu1), km."""
        return self.p1 / (1.0 + self.ec)


@dataclass(frozen=True)
class EccIncVectors:
    """Relative eccentricity/inclination vectors in the node-aligned frame.

    ``de`` and ``di`` are expressed in a planar frame whose X axis points
    along the relative line of nodes.  ``dphi`` is the phase angle between
    the inclination and eccentricity vectors; ``dphi_defined`` is False when
    either vector vanishes (the phase is then meaningless and dphi is nan).
    """

    de: np.ndarray
    di: np.ndarray
    dxi_mag: float
    dh_mag: float
    dphi: float
    dphi_defined: bool


@dataclass(frozen=True)
class RelativePosition:
    """Output of the state-to-position mapping.

    ``dr`` is the RTN1 position of satellite 2 relative to satellite 1 (km);
    ``b`` is the unit direction of satellite 2 in RTN1 axes and ``q`` the
    radius ratio r2/r1.
    """

    dr: np.ndarray
    r1: float
    r2: float
    q: float
    b: np.ndarray


@dataclass(frozen=True)
class LocalState:
    """Relative position (km) and velocity (km/s) in the RTN1 frame."""

    dr: np.ndarray
    dv: np.ndarray


@dataclass(frozen=True)
class RecoveredInvariants:
    """Keplerian invariants recovered from a nodal relative state.

    When ``theta1_degenerate`` is set (gamma below the coplanar threshold),
    theta1 cannot be recovered from the inclination vector and the fields
    theta1, theta2, lambda1, lambda2 are nan; dlambda remains well defined.
    """

    a2: float
    e2: float
    gamma: float
    dlambda: float
    lambda1: float
    lambda2: float
    theta1: float
    theta2: float
    dtheta: float
    theta1_degenerate: bool


def oe_from_classical(el1: ClassicalElements, el2: ClassicalElements,
                      ) -> tuple[NodalRelativeState, ReferenceParams]:
    """Map a classical-element pair to the nodal relative state and the
    reference parameters.

    Raises
    ------
    RetrogradeSingularity
        Propagated from the relative-orientation extraction.
    """
    rel = relative_orientation(el1, el2)
    return oe_from_orientation(el1, el2, rel), ReferenceParams(
        p1=el1.p, ec=el1.e * math.cos(el1.nu), es=el1.e * math.sin(el1.nu))


def oe_from_orientation(el1: ClassicalElements, el2: ClassicalElements,
                        rel: RelativeOrientation) -> NodalRelativeState:
    """Nodal relative state from elements plus a precomputed orientation."""
    t_half = math.tan(0.5 * rel.gamma)
    return NodalRelativeState(
        dtheta=wrap_angle(rel.theta2 - rel.theta1),
        dp=(el2.p - el1.p) / el1.p,
        dxi_x=(el2.e * math.cos(rel.theta1 - rel.lambda2)
               - el1.e * math.cos(el1.nu)),
        dxi_y=(el2.e * math.sin(rel.theta1 - rel.lambda2)
               - el1.e * math.sin(el1.nu)),
        dh_x=t_half * math.cos(rel.theta1),
        dh_y=t_half * math.sin(rel.theta1),
    )


def classical_from_oe(oe: NodalRelativeState, eta: ReferenceParams,
                      coplanar_tol: float = COPLANAR_GAMMA_TOL,
                      ) -> RecoveredInvariants:
    """Recover the Keplerian invariants of satellite 2 and the nodal angles.

    The eccentricity phasor of satellite 2 is (dxi_x + ec, dxi_y + es), from
    which e2 and the periapsis offset dlambda follow; a2 comes from the
    semiparameter ratio, gamma from |dh|, and theta1 from the direction of
    the inclination vector whenever gamma exceeds ``coplanar_tol``.

    For a circular reference (e1 = 0) the split of theta1 into nu1 + lambda1
    uses the nu1 = 0 convention of :class:`ReferenceParams`.

    Raises
    ------
    GeometryError
        If the recovered e2 is not below 1 (no closed orbit matches).
    """
    e1 = eta.e1
    nu1 = eta.nu1
    e2 = math.hypot(oe.dxi_x + eta.ec, oe.dxi_y + eta.es)
    if not e2 < 1.0:
        raise GeometryError(f"recovered eccentricity e2 = {e2} is not < 1")
    dlambda = math.atan2(
        oe.dxi_x * math.sin(nu1) - oe.dxi_y * math.cos(nu1),
        oe.dxi_x * math.cos(nu1) + oe.dxi_y * math.sin(nu1) + e1)
    a2 = eta.p1 * (1.0 + oe.dp) / (1.0 - e2 * e2)
    dh = oe.dh
    gamma = 2.0 * math.atan(dh)

    degenerate = gamma < coplanar_tol
    if degenerate:
        theta1 = theta2 = lambda1 = lambda2 = math.nan
    else:
        theta1 = math.atan2(oe.dh_y, oe.dh_x)
        lambda1 = wrap_angle(theta1 - nu1)
        lambda2 = wrap_angle(lambda1 + dlambda)
        theta2 = wrap_angle(theta1 + oe.dtheta)

    return RecoveredInvariants(
        a2=a2, e2=e2, gamma=gamma, dlambda=dlambda,
        lambda1=lambda1, lambda2=lambda2, theta1=theta1, theta2=theta2,
        dtheta=oe.dtheta, theta1_degenerate=degenerate)


def ecc_inc_vectors(oe: NodalRelativeState, eta: ReferenceParams,
                    ) -> EccIncVectors:
    """Relative eccentricity/inclination vectors, magnitudes, and phase.

    The state components (dxi_x, dxi_y) and (dh_x, dh_y) are the node-frame
    vectors rotated by theta1 (with the eccentricity Y component reflected),
    so the magnitudes transfer directly and the node-frame vectors follow by
    back-rotation.  When |dh| = 0 the node direction is unknown and de is
    reported in the theta1 = 0 convention.
    """
    dxi_mag = oe.dxi
    dh_mag = oe.dh
    if dh_mag > 0.0:
        theta1 = math.atan2(oe.dh_y, oe.dh_x)
        c, s = math.cos(theta1), math.sin(theta1)
        ex = c * oe.dxi_x + s * oe.dxi_y
        ey = -(-s * oe.dxi_x + c * oe.dxi_y)
        de = np.array([ex, ey])
        di = np.array([dh_mag, 0.0])
    else:
        de = np.array([oe.dxi_x, -oe.dxi_y])
        di = np.array([0.0, 0.0])

    defined = dxi_mag > 0.0 and dh_mag > 0.0
    if defined:
        dphi = wrap_angle(math.atan2(oe.dh_y, oe.dh_x)
                          - math.atan2(oe.dxi_y, oe.dxi_x))
    else:
        dphi = math.nan
    return EccIncVectors(de=de, di=di, dxi_mag=dxi_mag, dh_mag=dh_mag,
                         dphi=dphi, dphi_defined=defined)


def _geometry(oe: NodalRelativeState, eta: ReferenceParams):
    """Shared scalars of the position mapping: (r1, denom, r2, q)."""
    r1 = eta.p1 / (1.0 + eta.ec)
    c, s = math.cos(oe.dtheta), math.sin(oe.dtheta)
    denom = 1.0 + (oe.dxi_x + eta.ec) * c - (oe.dxi_y + eta.es) * s
    if not denom > 0.0:
        raise GeometryError(
            f"radius denominator {denom} <= 0: state outside elliptic geometry")
    r2 = eta.p1 * (1.0 + oe.dp) / denom
    return r1, denom, r2, r2 / r1


def relative_position(oe: NodalRelativeState, eta: ReferenceParams,
                      ) -> RelativePosition:
    """Exact RTN1 relative position of satellite 2.

    dr = r1 * (q*b - [1, 0, 0]) with b the unit direction of satellite 2 in
    RTN1 axes (a function of dtheta and the inclination vector only) and
    q = r2/r1.

    Raises
    ------
    GeometryError
        If the radius denominator of satellite 2 is not positive.
    """
    r1, _, r2, q = _geometry(oe, eta)
    c, s = math.cos(oe.dtheta), math.sin(oe.dtheta)
    hx, hy = oe.dh_x, oe.dh_y
    smag = 1.0 + hx * hx + hy * hy
    b = np.array([
        ((1.0 + hx * hx - hy * hy) * c - 2.0 * hx * hy * s) / smag,
        ((1.0 - hx * hx + hy * hy) * s - 2.0 * hx * hy * c) / smag,
        (2.0 * hy * c + 2.0 * hx * s) / smag,
    ])
    dr = r1 * (q * b - np.array([1.0, 0.0, 0.0]))
    return RelativePosition(dr=dr, r1=r1, r2=r2, q=q, b=b)


def relative_position_batch(oe_arr: np.ndarray,
                            eta_arr: np.ndarray) -> np.ndarray:
    """RTN1 relative positions for stacked states.

    Parameters
    ----------
    oe_arr : ndarray, shape (n, 6)
    eta_arr : ndarray, shape (n, 3)

    Returns
    -------
    ndarray, shape (n, 3)
        Relative positions in km.  Rows with non-elliptic geometry are nan.
    """
    oe_arr = np.atleast_2d(np.asarray(oe_arr, dtype=float))
    eta_arr = np.atleast_2d(np.asarray(eta_arr, dtype=float))
    dtheta, dp = oe_arr[:, 0], oe_arr[:, 1]
    dxx, dxy = oe_arr[:, 2], oe_arr[:, 3]
    hx, hy = oe_arr[:, 4], oe_arr[:, 5]
    p1, ec, es = eta_arr[:, 0], eta_arr[:, 1], eta_arr[:, 2]

    c, s = np.cos(dtheta), np.sin(dtheta)
    r1 = p1 / (1.0 + ec)
    denom = 1.0 + (dxx + ec) * c - (dxy + es) * s
    denom = np.where(denom > 0.0, denom, np.nan)
    r2 = p1 * (1.0 + dp) / denom
    smag = 1.0 + hx * hx + hy * hy

    out = np.empty((oe_arr.shape[0], 3))
    out[:, 0] = (r2 * ((1.0 + hx * hx - hy * hy) * c - 2.0 * hx * hy * s)
                 / smag - r1)
    out[:, 1] = r2 * ((1.0 - hx * hx + hy * hy) * s - 2.0 * hx * hy * c) / smag
    out[:, 2] = r2 * (2.0 * hy * c + 2.0 * hx * s) / smag
    return out


def separation_distance(oe_arr: np.ndarray, eta_arr: np.ndarray) -> np.ndarray:
    """Inter-satellite distance r1*sqrt(1 + q^2 - 2 q b1) for stacked states.

    Parameters
    ----------
    oe_arr : ndarray, shape (n, 6)
    eta_arr : ndarray, shape (n, 3)

    Returns
    -------
    ndarray, shape (n,)
        Distances in km.  Entries with non-elliptic geometry are nan.
    """
    oe_arr = np.atleast_2d(np.asarray(oe_arr, dtype=float))
    eta_arr = np.atleast_2d(np.asarray(eta_arr, dtype=float))
    dtheta, dp = oe_arr[:, 0], oe_arr[:, 1]
    dxx, dxy = oe_arr[:, 2], oe_arr[:, 3]
    hx, hy = oe_arr[:, 4], oe_arr[:, 5]
    p1, ec, es = eta_arr[:, 0], eta_arr[:, 1], eta_arr[:, 2]

    c, s = np.cos(dtheta), np.sin(dtheta)
    r1 = p1 / (1.0 + ec)
    denom = 1.0 + (dxx + ec) * c - (dxy + es) * s
    denom = np.where(denom > 0.0, denom, np.nan)
    q = (1.0 + dp) * (1.0 + ec) / denom
    smag = 1.0 + hx * hx + hy * hy
    b1 = ((1.0 + hx * hx - hy * hy) * c - 2.0 * hx * hy * s) / smag
    return r1 * np.sqrt(np.maximum(1.0 + q * q - 2.0 * q * b1, 0.0))


def position_jacobians(oe: NodalRelativeState, eta: ReferenceParams,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials of the position mapping.

    Returns
    -------
    (j_oe, j_eta)
        ``j_oe`` is the 3x6 Jacobian of dr with respect to the relative
        state ordering (dtheta, dp, dxi_x, dxi_y, dh_x, dh_y); ``j_eta`` the
        3x3 Jacobian with respect to (p1, ec, es).
    """
    r1, denom, r2, _ = _geometry(oe, eta)
    c, s = math.cos(oe.dtheta), math.sin(oe.dtheta)
    hx, hy = oe.dh_x, oe.dh_y
    smag = 1.0 + hx * hx + hy * hy

    a_ = 1.0 + hx * hx - hy * hy
    b_ = 1.0 - hx * hx + hy * hy
    cc = 2.0 * hx * hy
    b = np.array([
        (a_ * c - cc * s) / smag,
        (b_ * s - cc * c) / smag,
        (2.0 * hy * c + 2.0 * hx * s) / smag,
    ])
    db_ddtheta = np.array([
        (-a_ * s - cc * c) / smag,
        (b_ * c + cc * s) / smag,
        (-2.0 * hy * s + 2.0 * hx * c) / smag,
    ])
    # d(b)/d(hx), d(b)/d(hy) by quotient rule; the numerators of b carry
    # +-2h factors and the denominator contributes -2h/S * b.
    db_dhx = np.array([
        (2.0 * hx * c - 2.0 * hy * s) / smag - b[0] * 2.0 * hx / smag,
        (-2.0 * hx * s - 2.0 * hy * c) / smag - b[1] * 2.0 * hx / smag,
        2.0 * s / smag - b[2] * 2.0 * hx / smag,
    ])
    db_dhy = np.array([
        (-2.0 * hy * c - 2.0 * hx * s) / smag - b[0] * 2.0 * hy / smag,
        (2.0 * hy * s - 2.0 * hx * c) / smag - b[1] * 2.0 * hy / smag,
        2.0 * c / smag - b[2] * 2.0 * hy / smag,
    ])

    ddenom_ddtheta = -(oe.dxi_x + eta.ec) * s - (oe.dxi_y + eta.es) * c
    u = np.array([1.0, 0.0, 0.0])

    j_oe = np.empty((3, 6))
    j_oe[:, 0] = -r2 / denom * ddenom_ddtheta * b + r2 * db_ddtheta
    j_oe[:, 1] = eta.p1 / denom * b
    j_oe[:, 2] = -r2 * c / denom * b
    j_oe[:, 3] = r2 * s / denom * b
    j_oe[:, 4] = r2 * db_dhx
    j_oe[:, 5] = r2 * db_dhy

    j_eta = np.empty((3, 3))
    j_eta[:, 0] = (1.0 + oe.dp) / denom * b - u / (1.0 + eta.ec)
    j_eta[:, 1] = -r2 * c / denom * b + eta.p1 / (1.0 + eta.ec) ** 2 * u
    j_eta[:, 2] = r2 * s / denom * b
    return j_oe, j_eta


def relative_velocity(oe: NodalRelativeState, eta: ReferenceParams,
                      mu: float) -> np.ndarray:
    """Time derivative of the RTN1 relative position under unperturbed
    motion, by the chain rule through the analytic position Jacobians."""
    from .dynamics import f_eta, f_unperturbed  # deferred: dynamics imports this module

    j_oe, j_eta = position_jacobians(oe, eta)
    return j_oe @ f_unperturbed(oe, eta, mu) + j_eta @ f_eta(eta, mu)


def local_state(oe: NodalRelativeState, eta: ReferenceParams,
                mu: float) -> LocalState:
    """Relative position and velocity in RTN1."""
    return LocalState(dr=relative_position(oe, eta).dr,
                      dv=relative_velocity(oe, eta, mu))


def haversine_psi(theta1: float, theta2: float, gamma: float) -> float:
    """Central angle between the two satellite position directions.

    Uses hav(psi) = hav(theta2 - theta1) + sin(theta1) sin(theta2) hav(gamma)
    with hav(x) = sin^2(x/2); the result is clamped to a valid haversine
    before inversion and returned in [0, pi].
    """
    hav = (math.sin(0.5 * (theta2 - theta1)) ** 2
           + math.sin(theta1) * math.sin(theta2)
           * math.sin(0.5 * gamma) ** 2)
    hav = min(max(hav, 0.0), 1.0)
    return 2.0 * math.asin(math.sqrt(hav))

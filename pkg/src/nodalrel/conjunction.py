"""Passive-safety screening and collision-avoidance planning.

Two conditions are necessary for a collision: the orbits must intersect
(C1, a pure function of the Keplerian invariants) and the satellites must
reach the intersection simultaneously (C2, checked by propagation).  For
noncoplanar pairs the intersection can only occur on the relative line of
nodes, which reduces C1 to scalar margins at the two node crossings; the
ascending margin is the collision safety margin zeta used for maneuver
planning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ZeroSensitivity, ZetaUndefined
from .dynamics import (
    PerturbationInput,
    input_matrices,
    orbital_period,
    propagate,
    unperturbed_flow,
)
from .relstate import (
    NodalRelativeState,
    ReferenceParams,
    separation_distance,
)

#: Default |dh| threshold selecting the coplanar branch of C1.
DEFAULT_COPLANAR_TOL = 1e-9

#: Default tolerance on the noncoplanar node-crossing margins.
DEFAULT_NODE_TOL = 1e-9


@dataclass(frozen=True)
class C1Verdict:
    """Outcome of the orbit-intersection test.

    ``coplanar`` selects which branch applies.  The coplanar margin is
    dp^2 - drho^2 (intersection possible iff <= 0); the noncoplanar margins
    are the signed node-crossing mismatches, zero (within tolerance) when
    the orbits meet at that crossing.  Inapplicable margins are nan and
    their satisfied flags False.
    """

    coplanar: bool
    margin_coplanar: float
    margin_ascending: float
    margin_descending: float
    satisfied_coplanar: bool
    satisfied_ascending: bool
    satisfied_descending: bool

    @property
    def satisfied(self) -> bool:
        """True when any applicable branch indicates possible intersection."""
        return (self.satisfied_coplanar or self.satisfied_ascending
                or self.satisfied_descending)


@dataclass(frozen=True)
class C2Result:
    """Minimum separation over the checked window."""

    collides: bool
    t_min: float
    d_min: float


@dataclass(frozen=True)
class ManeuverPlan:
    """Minimum-norm impulse on satellite 1 changing zeta by delta_zeta.

    ``delta_v`` (RTN1, km/s) is parallel to the sensitivity vector
    ``g_vec`` and has magnitude |delta_zeta| / ||g_vec||.
    """

    t_m: float
    delta_v: np.ndarray
    delta_zeta: float
    g_vec: np.ndarray


def _recovery_terms(oe: NodalRelativeState, eta: ReferenceParams,
                    ) -> tuple[float, float]:
    """Keplerian invariants (e2, dlambda) entering the coplanar branch."""
    e1, nu1 = eta.e1, eta.nu1
    e2 = math.hypot(oe.dxi_x + eta.ec, oe.dxi_y + eta.es)
    dlambda = math.atan2(
        oe.dxi_x * math.sin(nu1) - oe.dxi_y * math.cos(nu1),
        oe.dxi_x * math.cos(nu1) + oe.dxi_y * math.sin(nu1) + e1)
    return e2, dlambda


def coplanar_radial_terms(oe: NodalRelativeState, eta: ReferenceParams,
                          ) -> tuple[float, float]:
    """Amplitude and phase (drho, phi_c) of the coplanar radial mismatch
    dp + drho cos(nu1 + phi_c); intersection is possible iff |dp| <= drho."""
    e1 = eta.e1
    e2, dlambda = _recovery_terms(oe, eta)
    a_ = (1.0 + oe.dp) * e1 - e2 * math.cos(dlambda)
    b_ = e2 * math.sin(dlambda)
    drho = math.hypot(a_, b_)
    phi_c = math.atan2(b_, a_)
    return drho, phi_c


def _node_margins(oe: NodalRelativeState, eta: ReferenceParams,
                  ) -> tuple[float, float]:
    """Signed radial-mismatch margins at the ascending and descending
    relative-node crossings, for |dh| > 0."""
    dh = oe.dh
    # e1 cos(lambda1) and dxi cos(dphi) via inclination-vector projections.
    e_cos_l1 = (oe.dh_x * eta.ec + oe.dh_y * eta.es) / dh
    de_x = (oe.dh_x * oe.dxi_x + oe.dh_y * oe.dxi_y) / dh
    asc = oe.dp * (1.0 + e_cos_l1) - de_x
    desc = oe.dp * (1.0 - e_cos_l1) + de_x
    return asc, desc


def c1_test(oe: NodalRelativeState, eta: ReferenceParams,
            coplanar_tol: float = DEFAULT_COPLANAR_TOL,
            node_tol: float = DEFAULT_NODE_TOL) -> C1Verdict:
    """Orbit-intersection test on the Keplerian invariants.

    Coplanar pairs (|dh| <= coplanar_tol) intersect iff dp^2 - drho^2 <= 0.
    Noncoplanar pairs can only meet on the relative line of nodes; each
    node-crossing margin must vanish (|margin| <= node_tol) for an
    intersection there.  Margins are reported signed so that callers may
    apply scenario-level thresholds (e.g. filter confidence bands).
    """
    dh = oe.dh
    if dh <= coplanar_tol:
        drho, _ = coplanar_radial_terms(oe, eta)
        margin = oe.dp * oe.dp - drho * drho
        return C1Verdict(
            coplanar=True, margin_coplanar=margin,
            margin_ascending=math.nan, margin_descending=math.nan,
            satisfied_coplanar=margin <= 0.0,
            satisfied_ascending=False, satisfied_descending=False)

    asc, desc = _node_margins(oe, eta)
    return C1Verdict(
        coplanar=False, margin_coplanar=math.nan,
        margin_ascending=asc, margin_descending=desc,
        satisfied_coplanar=False,
        satisfied_ascending=abs(asc) <= node_tol,
        satisfied_descending=abs(desc) <= node_tol)


def zeta(oe: NodalRelativeState, eta: ReferenceParams) -> float:
    """Collision safety margin: the ascending node-crossing mismatch,

        zeta = dp - [dh_x (dxi_x - dp ec) + dh_y (dxi_y - dp es)] / |dh|,

    zero exactly when the orbits intersect at the ascending relative node.

    Raises
    ------
    ZetaUndefined
        For coplanar states (|dh| = 0).
    """
    dh = oe.dh
    if not dh > 0.0:
        raise ZetaUndefined("zeta requires a noncoplanar pair (|dh| > 0)")
    num = (oe.dh_x * (oe.dxi_x - oe.dp * eta.ec)
           + oe.dh_y * (oe.dxi_y - oe.dp * eta.es))
    return oe.dp - num / dh


def zeta_descending(oe: NodalRelativeState, eta: ReferenceParams) -> float:
    """Descending-node analogue of :func:`zeta` (same machinery, opposite
    crossing)."""
    dh = oe.dh
    if not dh > 0.0:
        raise ZetaUndefined("zeta requires a noncoplanar pair (|dh| > 0)")
    num = (oe.dh_x * (oe.dxi_x - oe.dp * eta.ec)
           + oe.dh_y * (oe.dxi_y - oe.dp * eta.es))
    return oe.dp + num / dh


def zeta_gradient(oe: NodalRelativeState, eta: ReferenceParams,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials of zeta with respect to the relative state
    (dtheta, dp, dxi_x, dxi_y, dh_x, dh_y) and to (p1, ec, es).

    Raises
    ------
    ZetaUndefined
        For coplanar states (|dh| = 0).
    """
    dh = oe.dh
    if not dh > 0.0:
        raise ZetaUndefined("zeta requires a noncoplanar pair (|dh| > 0)")
    hx, hy = oe.dh_x, oe.dh_y
    ax = oe.dxi_x - oe.dp * eta.ec
    ay = oe.dxi_y - oe.dp * eta.es
    num = hx * ax + hy * ay

    d_oe = np.array([
        0.0,
        1.0 + (hx * eta.ec + hy * eta.es) / dh,
        -hx / dh,
        -hy / dh,
        -ax / dh + num * hx / dh ** 3,
        -ay / dh + num * hy / dh ** 3,
    ])
    d_eta = np.array([0.0, oe.dp * hx / dh, oe.dp * hy / dh])
    return d_oe, d_eta


def plan_avoidance(oe: NodalRelativeState, eta: ReferenceParams,
                   delta_zeta: float, mu: float, t_m: float = 0.0,
                   min_sensitivity: float = 1e-12) -> ManeuverPlan:
    """Minimum-norm impulse on satellite 1 producing a first-order change
    delta_zeta in the safety margin.

    The sensitivity of zeta to an impulse is
    g = (dzeta/deta Geta - dzeta/doe G1)^T, and the minimum-norm solution
    of g . dv = delta_zeta is dv = g delta_zeta / ||g||^2.

    Raises
    ------
    ZeroSensitivity
        If ||g|| falls below min_sensitivity.
    ZetaUndefined
        For coplanar states.
    """
    d_oe, d_eta = zeta_gradient(oe, eta)
    g1, _, geta = input_matrices(oe, eta, mu)
    g = (d_eta @ geta - d_oe @ g1)
    gnorm = float(np.linalg.norm(g))
    if gnorm < min_sensitivity:
        raise ZeroSensitivity(f"|g| = {gnorm} below {min_sensitivity}")
    return ManeuverPlan(t_m=t_m, delta_v=g / gnorm ** 2 * delta_zeta,
                        delta_zeta=delta_zeta, g_vec=g)


def c2_check(oe: NodalRelativeState, eta: ReferenceParams,
             t0: float, tf: float, mu: float, miss_tol: float,
             u: Optional[Callable[[float], PerturbationInput]] = None,
             n_samples: Optional[int] = None, rtol: float = 1e-12,
             ) -> C2Result:
    """Search the window [t0, tf] for an actual close approach.

    The separation history is sampled densely (1/200 of the shorter orbital
    period, floored at 2000 window samples so that fast encounters are not
    stepped over) and the best sample is refined by golden-section search.
    A collision is declared when the refined minimum distance is at most
    miss_tol (km).

    With ``u`` given, samples come from the perturbed propagation at
    tolerance rtol; otherwise the exact unperturbed flow is used.
    """
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    e1 = eta.e1
    a1 = eta.p1 / (1.0 - e1 * e1)
    e2 = math.hypot(oe.dxi_x + eta.ec, oe.dxi_y + eta.es)
    a2 = eta.p1 * (1.0 + oe.dp) / (1.0 - e2 * e2)
    p_short = min(orbital_period(a1, mu), orbital_period(a2, mu))
    if n_samples is None:
        n_samples = int(max(math.ceil((tf - t0) / (p_short / 200.0)), 2000))
    t_grid = np.linspace(t0, tf, n_samples)

    if u is None:
        def distance_at(t):
            oe_arr, eta_arr = unperturbed_flow(oe, eta, mu, np.atleast_1d(t))
            return separation_distance(oe_arr, eta_arr)

        d_grid = distance_at(t_grid - t0)

        def scalar_distance(t):
            return float(distance_at(np.array([t - t0]))[0])
    else:
        traj = propagate(oe, eta, t0, tf, mu, u=u, rtol=rtol, t_eval=t_grid)
        d_grid = separation_distance(traj.oe, traj.eta)

        def scalar_distance(t):
            sub = propagate(oe, eta, t0, max(t, t0 + 1e-9), mu, u=u,
                            rtol=rtol, t_eval=[max(t, t0 + 1e-9)])
            return float(separation_distance(sub.oe, sub.eta)[0])

    k = int(np.nanargmin(d_grid))
    t_best, d_best = float(t_grid[k]), float(d_grid[k])

    if 0 < k < n_samples - 1 and d_best < d_grid[k - 1] and d_best < d_grid[k + 1]:
        res = minimize_scalar(
            scalar_distance,
            bracket=(float(t_grid[k - 1]), t_best, float(t_grid[k + 1])),
            method="golden", options={"xtol": 1e-12, "maxiter": 200})
        if res.fun < d_best:
            t_best, d_best = float(res.x), float(res.fun)

    return C2Result(collides=d_best <= miss_tol, t_min=t_best, d_min=d_best)

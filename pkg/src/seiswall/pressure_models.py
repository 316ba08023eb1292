"""Pseudo-static seismic earth pressure models.

Closed-form Mononobe-Okabe active/passive coefficients, the Wood rigid-wall
increment, resultant application heights, and a brute-force planar-wedge
equilibrium solver used to verify the closed forms.

All angles are in radians. Use :meth:`WallSoilParams.from_degrees` when the
inputs come from a config file.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PressureMode",
    "WallSoilParams",
    "SeismicCoefficients",
    "ValidityDomainError",
    "seismic_angle",
    "mo_coefficient",
    "mo_force",
    "wood_rigid_increment",
    "resultant_height_decomposed",
    "wedge_oracle_coefficient",
    "critical_wedge_angle",
    "WOOD_HEIGHT_RATIO",
    "SEED_WHITMAN_HEIGHT_RATIO",
]

# Application heights as fractions of H above the wall base.
STATIC_HEIGHT_RATIO = 1.0 / 3.0
SEED_WHITMAN_HEIGHT_RATIO = 0.6
WOOD_HEIGHT_RATIO = 0.63


class PressureMode(enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


class ValidityDomainError(ValueError):
    """Raised when no Mononobe-Okabe equilibrium wedge exists.

    ``k_h_limit`` is the horizontal coefficient at which the breakdown occurs
    for the given ``k_v`` (``None`` when the failure is not a k_h limit).
    """

    def __init__(self, message: str, k_h_limit: float | None = None):
        super().__init__(message)
        self.k_h_limit = k_h_limit


@dataclass(frozen=True)
class WallSoilParams:
    """Wall and backfill geometry/strength for wedge analysis.

    Attributes
    ----------
    phi : float
        Soil friction angle (rad).
    delta : float
        Wall-soil friction angle (rad).
    beta : float
        Inclination of the wall back face from vertical (rad).
    ground_slope_i : float
        Backfill surface slope from horizontal (rad).
    gamma : float
        Unit weight of soil (kN/m^3).
    height_H : float
        Vertical wall height (m).
    """

    phi: float
    delta: float = 0.0
    beta: float = 0.0
    ground_slope_i: float = 0.0
    gamma: float = 19.6
    height_H: float = 6.0

    def __post_init__(self):
        if not 0.0 < self.phi < math.pi / 2:
            raise ValueError("phi must lie in (0, pi/2) rad")
        if abs(self.delta) > self.phi + 1e-15:
            raise ValueError("|delta| must not exceed phi")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.height_H <= 0.0:
            raise ValueError("height_H must be positive")

    @classmethod
    def from_degrees(cls, phi_deg, delta_deg=0.0, beta_deg=0.0, slope_deg=0.0,
                     gamma=19.6, height_H=6.0) -> "WallSoilParams":
        return cls(math.radians(phi_deg), math.radians(delta_deg),
                   math.radians(beta_deg), math.radians(slope_deg),
                   gamma, height_H)


@dataclass(frozen=True)
class SeismicCoefficients:
    k_h: float = 0.0
    k_v: float = 0.0

    def __post_init__(self):
        if self.k_v >= 1.0:
            raise ValueError("k_v must be < 1")


def seismic_angle(c: SeismicCoefficients) -> float:
    """Inclination of the effective gravity vector, atan(k_h / (1 - k_v))."""
    if c.k_v >= 1.0:
        raise ValueError("k_v must be < 1")
    return math.atan(c.k_h / (1.0 - c.k_v))


def _breakdown_k_h(angle: float, k_v: float) -> float:
    return math.tan(angle) * (1.0 - k_v)


def _check_domain(p: WallSoilParams, theta: float, k_v: float,
                  m: PressureMode) -> float:
    """Return the sine argument of the square-root term or raise."""
    if m is PressureMode.ACTIVE:
        s_arg = p.phi - p.ground_slope_i - theta
        if s_arg < 0.0:
            lim = _breakdown_k_h(p.phi - p.ground_slope_i, k_v)
            raise ValidityDomainError(
                f"validity domain exceeded: theta + i > phi (k_h limit {lim:.6g})",
                k_h_limit=lim)
    else:
        s_arg = p.phi + p.ground_slope_i - theta
        if s_arg < 0.0:
            lim = _breakdown_k_h(p.phi + p.ground_slope_i, k_v)
            raise ValidityDomainError(
                f"validity domain exceeded: theta > phi + i (k_h limit {lim:.6g})",
                k_h_limit=lim)
    return s_arg


def mo_coefficient(p: WallSoilParams, c: SeismicCoefficients,
                   m: PressureMode) -> float:
    """Mononobe-Okabe seismic earth pressure coefficient.

    Active mode takes the upper signs of the composite expression and passive
    the lower ones. With ``k_h = k_v = 0`` this is the Coulomb coefficient.

    Raises
    ------
    ValidityDomainError
        If the seismic angle leaves no equilibrium wedge (``theta + i > phi``
        in active mode, ``theta > phi + i`` in passive mode). The exception
        carries the limiting ``k_h``.
    ValueError
        If a denominator cosine vanishes.
    """
    theta = seismic_angle(c)
    phi, delta, beta, i = p.phi, p.delta, p.beta, p.ground_slope_i
    s_arg = _check_domain(p, theta, c.k_v, m)
    if m is PressureMode.ACTIVE:
        num = math.cos(phi - beta - theta) ** 2
        c_wall = math.cos(delta + beta + theta)
    else:
        num = math.cos(phi + beta - theta) ** 2
        c_wall = math.cos(delta - beta + theta)
    c_slope = math.cos(i - beta)
    if abs(c_wall) < 1e-12 or abs(c_slope) < 1e-12 or abs(math.cos(theta)) < 1e-12:
        raise ValueError("denominator cosine vanishes for this parameter set")
    ratio = math.sin(phi + delta) * math.sin(s_arg) / (c_wall * c_slope)
    if ratio < 0.0:
        raise ValidityDomainError("negative square-root argument")
    root = math.sqrt(ratio)
    bracket = 1.0 + root if m is PressureMode.ACTIVE else 1.0 - root
    den = math.cos(theta) * math.cos(beta) ** 2 * c_wall * bracket ** 2
    if den <= 1e-14:
        raise ValueError("degenerate passive wedge (denominator <= 0)")
    return num / den


def mo_force(p: WallSoilParams, c: SeismicCoefficients, m: PressureMode) -> float:
    """Resultant thrust 0.5*gamma*H^2*(1 - k_v)*K in kN per metre of wall."""
    k = mo_coefficient(p, c, m)
    return 0.5 * p.gamma * p.height_H ** 2 * (1.0 - c.k_v) * k


def wood_rigid_increment(p: WallSoilParams, k_h: float,
                         f_p: float = 1.0) -> tuple[float, float]:
    """Dynamic thrust increment on a rigid, non-yielding wall.

    Returns ``(dP, dK)`` with ``dP = f_p * gamma * H^2 * k_h`` and the
    equivalent coefficient ``dK = 2 dP / (gamma H^2)``. The increment acts at
    ``WOOD_HEIGHT_RATIO * H`` above the base.
    """
    if k_h < 0.0:
        raise ValueError("k_h must be non-negative")
    if f_p <= 0.0:
        raise ValueError("f_p must be positive")
    dP = f_p * p.gamma * p.height_H ** 2 * k_h
    return dP, 2.0 * dP / (p.gamma * p.height_H ** 2)


def resultant_height_decomposed(P_static: float, dP_dyn: float, H: float) -> float:
    """Height above the base of static (at H/3) plus dynamic (at 0.6H) thrust."""
    if P_static < 0.0:
        raise ValueError("P_static must be non-negative")
    total = P_static + dP_dyn
    if total <= 0.0:
        raise ValueError("total force must be positive")
    return (P_static * STATIC_HEIGHT_RATIO * H
            + dP_dyn * SEED_WHITMAN_HEIGHT_RATIO * H) / total


# ---------------------------------------------------------------------------
# Trial-wedge equilibrium
# ---------------------------------------------------------------------------

def _wedge_setup(p: WallSoilParams, c: SeismicCoefficients, m: PressureMode):
    H = p.height_H
    # Heel at origin, backfill on +x. Positive beta tilts the back face so
    # the wall top moves away from the backfill (larger wedge).
    top = np.array([-H * math.tan(p.beta), H])
    u_wall = top / np.linalg.norm(top)
    n_wall = np.array([u_wall[1], -u_wall[0]])
    sgn = 1.0 if m is PressureMode.ACTIVE else -1.0
    p_dir = math.cos(p.delta) * n_wall + sgn * math.sin(p.delta) * u_wall
    ground = np.array([math.cos(p.ground_slope_i), math.sin(p.ground_slope_i)])
    # Positive k_h is the critical direction of each mode: inertia pushes the
    # active wedge onto the wall (-x) and drags the passive wedge away (+x).
    body_dir = np.array([-sgn * c.k_h, -(1.0 - c.k_v)])
    wall_angle = math.atan2(top[1], top[0])
    return top, p_dir, ground, body_dir, wall_angle, sgn


def _wedge_thrust(alpha, p, top, p_dir, ground, body_dir, sgn):
    """Wall thrust P(alpha) for trial failure planes through the heel."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    u_f = np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)
    # Intersection of the failure plane with the ground line from the top.
    det = u_f[:, 0] * (-ground[1]) - u_f[:, 1] * (-ground[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (top[0] * (-ground[1]) - top[1] * (-ground[0])) / det
        corner = r[:, None] * u_f
        area = 0.5 * np.abs(top[0] * corner[:, 1] - top[1] * corner[:, 0])
        weight = p.gamma * area
        n_f = np.stack([-u_f[:, 1], u_f[:, 0]], axis=-1)
        r_dir = math.cos(p.phi) * n_f + sgn * math.sin(p.phi) * u_f
        fx = weight * body_dir[0]
        fy = weight * body_dir[1]
        # P*p_dir + R*r_dir = -F
        dd = p_dir[0] * r_dir[:, 1] - p_dir[1] * r_dir[:, 0]
        P = (-fx * r_dir[:, 1] + fy * r_dir[:, 0]) / dd
        R = (p_dir[0] * -fy - p_dir[1] * -fx) / dd
    bad = ~np.isfinite(P) | (r <= 0.0) | (R < 0.0)
    P = np.where(bad, np.nan, P)
    return P


def _scan(p, c, m, n_angles):
    if n_angles < 1000:
        raise ValueError("n_angles must be >= 1000")
    _check_domain(p, seismic_angle(c), c.k_v, m)
    top, p_dir, ground, body_dir, wall_angle, sgn = _wedge_setup(p, c, m)
    lo = p.ground_slope_i + 1e-9
    hi = wall_angle - 1e-9
    alphas = np.linspace(lo, hi, n_angles)
    P = _wedge_thrust(alphas, p, top, p_dir, ground, body_dir, sgn)
    finite = np.isfinite(P)
    if not finite.any():
        raise ValidityDomainError("no admissible trial wedge")
    if m is PressureMode.ACTIVE:
        k = int(np.nanargmax(P))
        objective = lambda a: -_wedge_thrust(a, p, top, p_dir, ground, body_dir, sgn)[0]
    else:
        k = int(np.nanargmin(np.where(P > 0.0, P, np.nan)))
        objective = lambda a: _wedge_thrust(a, p, top, p_dir, ground, body_dir, sgn)[0]
    a, b = alphas[max(k - 1, 0)], alphas[min(k + 1, n_angles - 1)]
    alpha = _golden_section(objective, a, b, alphas[k])
    P_best = _wedge_thrust(alpha, p, top, p_dir, ground, body_dir, sgn)[0]
    if not np.isfinite(P_best):
        alpha, P_best = alphas[k], P[k]
    return alpha, P_best


def _golden_section(fun, a, b, guess, tol=1e-13, max_iter=200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if not np.isfinite(fc) or (np.isfinite(fd) and fc > fd):
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
        else:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
    x = 0.5 * (a + b)
    return x if np.isfinite(fun(x)) else guess


def wedge_oracle_coefficient(p: WallSoilParams, c: SeismicCoefficients,
                             m: PressureMode, n_angles: int = 100_000) -> float:
    """Earth pressure coefficient from force equilibrium of trial planar wedges.

    The failure-plane angle is scanned uniformly and the best trial is
    refined by golden-section search. Active takes the maximum thrust over
    trial planes, passive the minimum.
    """
    _, P = _scan(p, c, m, n_angles)
    return 2.0 * P / (p.gamma * p.height_H ** 2 * (1.0 - c.k_v))


def critical_wedge_angle(p: WallSoilParams, c: SeismicCoefficients,
                         m: PressureMode, n_angles: int = 4000) -> float:
    """Inclination from horizontal (rad) of the critical failure plane."""
    alpha, _ = _scan(p, c, m, n_angles)
    return float(alpha)

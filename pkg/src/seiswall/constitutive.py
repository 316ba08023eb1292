"""Material point updates for plane strain.

Stress is stored as ``(sigma_xx, sigma_yy, sigma_zz, tau_xy)`` in kPa with
tension positive. Strain is ``(eps_xx, eps_yy, eps_zz, gamma_xy)`` with
engineering shear; ``eps_zz`` is identically zero in plane strain while
``sigma_zz`` is tracked and takes part in the principal-stress ordering.

The Mohr-Coulomb return map works in principal stress space with the
multi-surface (main plane / edge / apex) selection for perfect plasticity.
Every branch is linear in the trial principal stresses, so the returns are
closed form and the consistent tangent is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Tangent of points returned to the apex, as a fraction of the elastic one.
# Keeps the global tangent non-singular around fully tensile zones.
APEX_STIFFNESS_FRACTION = 1e-4


@dataclass(frozen=True)
class ElasticParams:
    """Isotropic elasticity. ``E`` in MPa, ``rho`` in kg/m^3."""

    E: float
    nu: float
    rho: float

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError("E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("nu must lie in [0, 0.5)")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def bulk_modulus(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def lame_lambda(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


@dataclass(frozen=True)
class MohrCoulombParams:
    """Perfectly plastic Mohr-Coulomb strength.

    ``phi`` and ``psi`` in radians, ``cohesion_c`` in kPa. ``tension_cap``
    (kPa) limits the mean tensile stress; ``None`` leaves the cone apex
    ``c * cot(phi)`` as the only limit.
    """

    phi: float
    cohesion_c: float = 0.2
    psi: float = 0.0
    tension_cap: float | None = None

    def __post_init__(self):
        if not 0.0 < self.phi < math.pi / 2:
            raise ValueError("phi must lie in (0, pi/2)")
        if not 0.0 <= self.psi <= self.phi:
            raise ValueError("psi must lie in [0, phi]")
        if self.cohesion_c < 0.0:
            raise ValueError("cohesion must be non-negative")

    @property
    def apex_pressure(self) -> float:
        """Mean stress at the cone apex (tension positive)."""
        p = self.cohesion_c / math.tan(self.phi)
        if self.tension_cap is not None:
            p = min(p, self.tension_cap)
        return p


@dataclass
class GaussState:
    """Committed state for a batch of integration points (arrays of length n)."""

    stress: np.ndarray
    strain: np.ndarray
    plastic_strain: np.ndarray
    yielded: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "GaussState":
        return cls(np.zeros((n, 4)), np.zeros((n, 4)), np.zeros((n, 4)),
                   np.zeros(n, bool))

    def copy(self) -> "GaussState":
        return GaussState(self.stress.copy(), self.strain.copy(),
                          self.plastic_strain.copy(), self.yielded.copy())

    def __len__(self) -> int:
        return len(self.stress)


@dataclass(frozen=True)
class K0Profile:
    """At-rest stress profile below a level surface."""

    k0: float
    gamma: float
    surface_y: float

    def __post_init__(self):
        if not 0.0 < self.k0 < 1.0:
            raise ValueError("k0 must lie in (0, 1)")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")


# ---------------------------------------------------------------------------
# Elasticity
# ---------------------------------------------------------------------------

def elastic_tangent(ep: ElasticParams) -> np.ndarray:
    """Plane-strain elasticity, shape (4, 3).

    Maps ``(eps_xx, eps_yy, gamma_xy)`` to ``(sigma_xx, sigma_yy, sigma_zz,
    tau_xy)`` in the units of ``ep.E``.
    """
    lam = ep.lame_lambda
    G = ep.shear_modulus
    return np.array([
        [lam + 2 * G, lam, 0.0],
        [lam, lam + 2 * G, 0.0],
        [lam, lam, 0.0],
        [0.0, 0.0, G],
    ])


def _principal_elasticity(lam: float, G: float) -> np.ndarray:
    return np.full((3, 3), lam) + 2.0 * G * np.eye(3)


# ---------------------------------------------------------------------------
# Spectral helpers
# ---------------------------------------------------------------------------

def _in_plane_spectral(s: np.ndarray):
    cen = 0.5 * (s[:, 0] + s[:, 1])
    dif = 0.5 * (s[:, 0] - s[:, 1])
    R = np.hypot(dif, s[:, 3])
    ang = 0.5 * np.arctan2(s[:, 3], dif)
    return cen + R, cen - R, np.cos(ang), np.sin(ang)


def principal_stresses(s) -> np.ndarray:
    """Principal stresses ``(n, 3)`` ordered sigma_1 >= sigma_2 >= sigma_3."""
    s = np.atleast_2d(np.asarray(s, float))
    sa, sb, _, _ = _in_plane_spectral(s)
    vals = np.column_stack([sa, sb, s[:, 2]])
    return -np.sort(-vals, axis=1)


def mc_yield(s, mp: MohrCoulombParams) -> np.ndarray:
    """Mohr-Coulomb yield value (kPa); negative inside the elastic domain.

    ``f = (s1 - s3)/2 + (s1 + s3)/2 * sin(phi) - c * cos(phi)`` over the full
    principal set including ``sigma_zz``.
    """
    p = principal_stresses(s)
    sphi = math.sin(mp.phi)
    f = 0.5 * (p[:, 0] - p[:, 2]) + 0.5 * (p[:, 0] + p[:, 2]) * sphi \
        - mp.cohesion_c * math.cos(mp.phi)
    if np.ndim(s) == 1:
        return f[0]
    return f


# ---------------------------------------------------------------------------
# Return mapping
# ---------------------------------------------------------------------------

BRANCH_ELASTIC, BRANCH_MAIN, BRANCH_RIGHT, BRANCH_LEFT, BRANCH_APEX = range(5)


@dataclass
class ReturnResult:
    """Output of :func:`return_map_stress`.

    ``tangent`` is d(stress)/d(strain) with shape ``(n, 4, 3)`` (columns
    eps_xx, eps_yy, gamma_xy). ``branch`` holds the BRANCH_* code per point.
    """

    stress: np.ndarray
    tangent: np.ndarray
    branch: np.ndarray
    dgamma: np.ndarray = field(default=None)


def _plane_vectors(sphi: float, spsi: float):
    a = {
        "main": 0.5 * np.array([1 + sphi, 0.0, -(1 - sphi)]),
        "right": 0.5 * np.array([0.0, 1 + sphi, -(1 - sphi)]),
        "left": 0.5 * np.array([1 + sphi, -(1 - sphi), 0.0]),
    }
    n = {
        "main": 0.5 * np.array([1 + spsi, 0.0, -(1 - spsi)]),
        "right": 0.5 * np.array([0.0, 1 + spsi, -(1 - spsi)]),
        "left": 0.5 * np.array([1 + spsi, -(1 - spsi), 0.0]),
    }
    return a, n


def _ordered(p: np.ndarray, tol: np.ndarray) -> np.ndarray:
    return (p[:, 0] >= p[:, 1] - tol) & (p[:, 1] >= p[:, 2] - tol)


def return_map_stress(trial, mp: MohrCoulombParams, ep: ElasticParams,
                      scale: float = 1000.0) -> ReturnResult:
    """Vectorized Mohr-Coulomb stress return.

    Parameters
    ----------
    trial : ndarray, shape (n, 4)
        Elastic trial stresses (kPa).
    mp, ep : material parameters
    scale : float
        Factor from ``ep.E`` units to stress units (MPa -> kPa by default).
    """
    trial = np.atleast_2d(np.asarray(trial, float))
    n = trial.shape[0]
    lam = ep.lame_lambda * scale
    G = ep.shear_modulus * scale
    D43 = elastic_tangent(ep) * scale
    Dp = _principal_elasticity(lam, G)
    sphi, cphi = math.sin(mp.phi), math.cos(mp.phi)
    spsi = math.sin(mp.psi)
    k = mp.cohesion_c * cphi
    a, nv = _plane_vectors(sphi, spsi)

    stress = trial.copy()
    tangent = np.broadcast_to(D43, (n, 4, 3)).copy()
    branch = np.zeros(n, int)
    dgamma = np.zeros((n, 2))

    sa, sb, c, s = _in_plane_spectral(trial)
    vals = np.column_stack([sa, sb, trial[:, 2]])
    order = np.argsort(-vals, axis=1, kind="stable")
    srt = np.take_along_axis(vals, order, axis=1)
    f_tr = a["main"] @ srt.T - k
    p_apex = mp.apex_pressure
    p_tr = srt.mean(axis=1)
    ref = np.maximum(np.abs(p_tr), 1.0)
    plastic = f_tr > 0.0
    if mp.tension_cap is not None:
        plastic |= p_tr > p_apex
    if not plastic.any():
        return ReturnResult(stress, tangent, branch, dgamma)

    idx = np.flatnonzero(plastic)
    St = srt[idx]
    m = len(idx)
    tol = 1e-10 * ref[idx]
    I3 = np.eye(3)
    out = np.empty((m, 3))
    P = np.zeros((m, 3, 3))
    br = np.full(m, BRANCH_APEX)
    dg = np.zeros((m, 2))

    # Main plane.
    Dn = Dp @ nv["main"]
    denom = a["main"] @ Dn
    g = (St @ a["main"] - k) / denom
    S_main = St - g[:, None] * Dn
    ok = _ordered(S_main, tol) & (g >= 0.0)
    out[ok] = S_main[ok]
    P[ok] = I3 - np.outer(Dn, a["main"]) / denom
    br[ok] = BRANCH_MAIN
    dg[ok, 0] = g[ok]

    # Edges.
    for name, code in (("right", BRANCH_RIGHT), ("left", BRANCH_LEFT)):
        todo = br == BRANCH_APEX
        if not todo.any():
            break
        A = np.column_stack([a["main"], a[name]])
        Nn = np.column_stack([nv["main"], nv[name]])
        DN = Dp @ Nn
        M = A.T @ DN
        Minv = np.linalg.inv(M)
        rhs = St[todo] @ A - k
        gg = rhs @ Minv.T
        S_edge = St[todo] - gg @ DN.T
        good = _ordered(S_edge, tol[todo]) & (gg >= -1e-14 * np.abs(gg).max(initial=1.0)).all(axis=1)
        sel = np.flatnonzero(todo)[good]
        out[sel] = S_edge[good]
        P[sel] = I3 - DN @ Minv @ A.T
        br[sel] = code
        dg[sel] = gg[good]

    apex = br == BRANCH_APEX
    out[apex] = p_apex
    P[apex] = APEX_STIFFNESS_FRACTION * I3

    if mp.tension_cap is not None:
        capped = (out.mean(axis=1) > p_apex + 1e-12) & ~apex
        out[capped] = p_apex
        P[capped] = APEX_STIFFNESS_FRACTION * I3
        br[capped] = BRANCH_APEX

    # Back to the (a, b, z) slots.
    ordr = order[idx]
    slot_vals = np.empty_like(out)
    np.put_along_axis(slot_vals, ordr, out, axis=1)
    # P_slots[i, j] = P[rank(i), rank(j)]
    rank = np.argsort(ordr, axis=1)
    Ps = P[np.arange(m)[:, None, None], rank[:, :, None], rank[:, None, :]]

    cc, ss = c[idx], s[idx]
    new = np.empty((m, 4))
    new[:, 0] = slot_vals[:, 0] * cc ** 2 + slot_vals[:, 1] * ss ** 2
    new[:, 1] = slot_vals[:, 0] * ss ** 2 + slot_vals[:, 1] * cc ** 2
    new[:, 2] = slot_vals[:, 2]
    new[:, 3] = (slot_vals[:, 0] - slot_vals[:, 1]) * cc * ss
    stress[idx] = new

    # Spectral chain rule: T = sum P_ij m_i (x) r_j + ratio * q (x) qr.
    z = np.zeros(m)
    one = np.ones(m)
    m_sig = np.stack([
        np.stack([cc ** 2, ss ** 2, z, cc * ss], -1),
        np.stack([ss ** 2, cc ** 2, z, -cc * ss], -1),
        np.stack([z, z, one, z], -1),
    ], axis=1)
    m_row = m_sig.copy()
    m_row[:, :, 3] *= 2.0
    T = np.einsum("eij,eik,ejl->ekl", Ps, m_sig, m_row)
    gap_tr = vals[idx, 0] - vals[idx, 1]
    gap = slot_vals[:, 0] - slot_vals[:, 1]
    degenerate = np.abs(gap_tr) <= 1e-12 * ref[idx]
    safe = np.where(degenerate, 1.0, gap_tr)
    ratio = np.where(degenerate, Ps[:, 0, 0] - Ps[:, 0, 1], gap / safe)
    q = np.stack([-2 * cc * ss, 2 * cc * ss, z, cc ** 2 - ss ** 2], -1)
    qr = np.stack([-cc * ss, cc * ss, z, cc ** 2 - ss ** 2], -1)
    T += ratio[:, None, None] * q[:, :, None] * qr[:, None, :]
    tangent[idx] = T @ D43
    branch[idx] = br
    dgamma[idx] = dg
    return ReturnResult(stress, tangent, branch, dgamma)


def elastic_update(state: GaussState, d_strain, ep: ElasticParams,
                   scale: float = 1000.0):
    """Linear elastic update; returns ``(new_state, tangent (n, 4, 3))``."""
    d_strain = np.asarray(d_strain, float)
    D43 = elastic_tangent(ep) * scale
    de3 = d_strain[:, [0, 1, 3]]
    new = GaussState(state.stress + de3 @ D43.T, state.strain + d_strain,
                     state.plastic_strain.copy(), state.yielded.copy())
    return new, np.broadcast_to(D43, (len(state), 4, 3))


def mc_return_map(trial_stress, previous: GaussState, mp: MohrCoulombParams,
                  ep: ElasticParams, d_strain=None, scale: float = 1000.0):
    """Elastic-predictor / plastic-corrector update of a batch of points.

    Returns ``(new_state, tangent)``. ``d_strain`` (shape (n, 4)) is the
    total strain increment that produced ``trial_stress``; when given, the
    total and plastic strains are advanced too.
    """
    res = return_map_stress(trial_stress, mp, ep, scale)
    if d_strain is None:
        d_strain = np.zeros_like(previous.strain)
    d_strain = np.asarray(d_strain, float)
    # Plastic strain is the part of the increment not recovered elastically.
    comp = _elastic_compliance(ep, scale)
    d_elastic = (res.stress - previous.stress) @ comp.T
    d_plastic = d_strain - d_elastic
    d_plastic[res.branch == BRANCH_ELASTIC] = 0.0
    new = GaussState(res.stress, previous.strain + d_strain,
                     previous.plastic_strain + d_plastic,
                     previous.yielded | (res.branch != BRANCH_ELASTIC))
    return new, res.tangent


def _elastic_compliance(ep: ElasticParams, scale: float) -> np.ndarray:
    """3D isotropic compliance on (xx, yy, zz, xy-engineering)."""
    E = ep.E * scale
    nu = ep.nu
    G = ep.shear_modulus * scale
    C = np.array([
        [1.0, -nu, -nu, 0.0],
        [-nu, 1.0, -nu, 0.0],
        [-nu, -nu, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]) / E
    C[3, 3] = 1.0 / G
    return C


def mc_update(state: GaussState, d_strain, mp: MohrCoulombParams,
              ep: ElasticParams, scale: float = 1000.0):
    """Strain-driven Mohr-Coulomb update; returns ``(new_state, tangent)``."""
    d_strain = np.asarray(d_strain, float)
    D43 = elastic_tangent(ep) * scale
    trial = state.stress + d_strain[:, [0, 1, 3]] @ D43.T
    return mc_return_map(trial, state, mp, ep, d_strain, scale)


def plastic_work(stress_new, d_plastic) -> np.ndarray:
    """Plastic work increment per point (kJ/m^3), consistent with the implicit return.

    Evaluated at the returned stress; for ``psi <= phi`` it equals the
    plastic potential times the multiplier and is never negative.
    """
    return np.einsum("ij,ij->i", np.asarray(stress_new), np.asarray(d_plastic))


# ---------------------------------------------------------------------------
# Geostatic stress
# ---------------------------------------------------------------------------

def geostatic_stress(y, profile: K0Profile) -> np.ndarray:
    """At-rest stresses ``(n, 4)`` at elevations ``y`` below a level surface."""
    depth = np.maximum(profile.surface_y - np.asarray(y, float), 0.0)
    sv = -profile.gamma * depth
    out = np.zeros((depth.size, 4))
    out[:, 1] = sv
    out[:, 0] = profile.k0 * sv
    out[:, 2] = profile.k0 * sv
    return out

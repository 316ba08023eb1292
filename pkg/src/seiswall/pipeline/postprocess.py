"""Wall pressure extraction, back-calculated coefficients and peak tables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..pressure_models import (PressureMode, SeismicCoefficients, ValidityDomainError,
                               WallSoilParams, critical_wedge_angle, mo_coefficient)

G = 9.81
DEFAULT_NOISE_FLOOR = 0.01
# Relative deviation accepted as "approximately equal" for the active side.
MODERATE_AGREEMENT = 0.35


class Side(enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"

    @property
    def mode(self) -> PressureMode:
        return PressureMode.ACTIVE if self is Side.ACTIVE else PressureMode.PASSIVE


class PressureExtent(enum.Enum):
    """Portion of the wall over which the active-side resultant is integrated.

    ``FULL`` runs from the wall toe to the ground surface; ``RETAINED`` from
    the dredge level to the surface. The passive side always spans the
    embedment (toe to dredge level).
    """

    FULL = "full"
    RETAINED = "retained"


class ZeroResultantError(ValueError):
    """Application height requested for a profile with zero resultant."""


# ---------------------------------------------------------------------------
# Pure arithmetic
# ---------------------------------------------------------------------------

def resultant(sigma, h) -> float:
    """Resultant force per metre of wall, ``sum(h_i sigma_i)``."""
    return float(np.dot(np.asarray(h, float), np.asarray(sigma, float)))


def back_calculate_K(P: float, gamma: float, H: float, k_v: float = 0.0) -> float:
    """Lateral pressure coefficient ``2 P / (gamma H^2 (1 - k_v))``."""
    if H <= 0.0:
        raise ValueError("H must be positive")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if k_v >= 1.0:
        raise ValueError("k_v must be < 1")
    return 2.0 * P / (gamma * H * H * (1.0 - k_v))


def application_height(sigma, h, y) -> float:
    """Stress-weighted centroid ``sum(h sigma y) / sum(h sigma)`` (m above the base)."""
    w = np.asarray(h, float) * np.asarray(sigma, float)
    total = w.sum()
    scale = np.abs(w).sum()
    if total == 0.0 or abs(total) <= 1e-14 * scale:
        raise ZeroResultantError("application height is undefined for a zero resultant")
    return float(np.dot(w, np.asarray(y, float)) / total)


# ---------------------------------------------------------------------------
# Profiles from the model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WallFace:
    """Soil elements adjacent to one wall face.

    ``h`` are element heights, ``y`` centroid heights above ``base_y`` and
    ``H`` the integration height.
    """

    side: Side
    elements: np.ndarray
    h: np.ndarray
    y: np.ndarray
    base_y: float
    H: float


@dataclass(frozen=True)
class PressureProfile:
    side: Side
    sigma: np.ndarray
    h: np.ndarray
    y: np.ndarray
    H: float

    @property
    def P(self) -> float:
        return resultant(self.sigma, self.h)


def wall_face(mesh, side: Side | str, extent: PressureExtent | str = PressureExtent.FULL) -> WallFace:
    """Locate the soil column touching the wall on ``side``."""
    side, extent = Side(side), PressureExtent(extent)
    lv = mesh.levels
    if not lv:
        raise ValueError("mesh carries no wall levels")
    g = mesh.grid_index
    cen = mesh.centroids()
    if side is Side.ACTIVE:
        ix = int(np.searchsorted(mesh.x_lines, lv["wall_x1"] - 1e-9))
        lo = lv["toe"] if extent is PressureExtent.FULL else lv["dredge"]
        hi = lv["surface"]
    else:
        ix = int(np.searchsorted(mesh.x_lines, lv["wall_x0"] - 1e-9)) - 1
        lo, hi = lv["toe"], lv["dredge"]
    sel = (g[:, 0] == ix) & (cen[:, 1] > lo) & (cen[:, 1] < hi)
    elems = np.flatnonzero(sel)
    elems = elems[np.argsort(cen[elems, 1])]
    h = np.diff(mesh.y_lines)[g[elems, 1]]
    return WallFace(side, elems, h, cen[elems, 1] - lo, lo, hi - lo)


def face_stress(model, face: WallFace, stress=None) -> np.ndarray:
    """Compression-positive mean horizontal stress (kPa) of each face element.

    ``stress`` is a full Gauss-point stress array (committed state if omitted).
    """
    stress = model.state.stress if stress is None else stress
    e = face.elements
    sxx = stress[model.gp_index(e), 0].reshape(len(e), model.ng)
    w = model.geo.wdet[e]
    s = -(sxx * w).sum(axis=1) / w.sum(axis=1)
    s[~model.active[e]] = 0.0
    return s


def wall_pressure_profile(model, side: Side | str,
                          extent: PressureExtent | str = PressureExtent.FULL) -> PressureProfile:
    """Element-constant lateral stresses against the wall in the committed state."""
    face = wall_face(model.mesh, side, extent)
    return PressureProfile(face.side, face_stress(model, face), face.h, face.y, face.H)


# ---------------------------------------------------------------------------
# Seismic coefficient series
# ---------------------------------------------------------------------------

def wedge_centroid(mesh, side: Side | str, phi: float,
                   extent: PressureExtent | str = PressureExtent.FULL,
                   delta: float = 0.0) -> tuple[float, float]:
    """Centroid of the static planar failure wedge behind (or in front of) the wall."""
    side = Side(side)
    face = wall_face(mesh, side, extent)
    lv = mesh.levels
    p = WallSoilParams(phi, delta, height_H=face.H)
    alpha = critical_wedge_angle(p, SeismicCoefficients(), side.mode)
    run = face.H / math.tan(alpha)
    top = face.base_y + face.H
    if side is Side.ACTIVE:
        return lv["wall_x1"] + run / 3.0, top - face.H / 3.0
    return lv["wall_x0"] - run / 3.0, top - face.H / 3.0


def probe_node(model, side: Side | str, phi: float,
               extent: PressureExtent | str = PressureExtent.FULL, delta: float = 0.0) -> int:
    """Active node nearest the static wedge centroid on ``side``."""
    x, y = wedge_centroid(model.mesh, side, phi, extent, delta)
    nodes = model.mesh.nodes
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    if not (lo[0] <= x <= hi[0] and lo[1] <= y <= hi[1]):
        raise ValueError(f"wedge centroid ({x:.3f}, {y:.3f}) lies outside the mesh")
    cand = np.flatnonzero(model.active_nodes())
    d = np.hypot(nodes[cand, 0] - x, nodes[cand, 1] - y)
    return int(cand[np.argmin(d)])


def k_h_series(total_accel_x, gravity: float = G) -> np.ndarray:
    """Horizontal seismic coefficient from total horizontal acceleration (m/s^2).

    ``k_h = a_x / g`` with ``x`` pointing from the excavation towards the
    backfill, so positive values put the wedge inertia towards the wall on
    the active side and away from the wall on the passive side. Those are
    the directions in which each pseudo-static coefficient is evaluated for
    positive ``k_h``.
    """
    return np.asarray(total_accel_x, float) / gravity


def select_peaks(series, noise_floor: float = DEFAULT_NOISE_FLOOR) -> np.ndarray:
    """Indices of strict local maxima above ``noise_floor`` and strict minima below its negative."""
    k = np.asarray(series, float)
    if k.size < 3:
        return np.zeros(0, int)
    mid, left, right = k[1:-1], k[:-2], k[2:]
    is_max = (mid > left) & (mid > right) & (mid >= noise_floor)
    is_min = (mid < left) & (mid < right) & (mid <= -noise_floor)
    return np.flatnonzero(is_max | is_min) + 1


# ---------------------------------------------------------------------------
# Comparison table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PressureRecord:
    time: float
    side: Side
    sigma: np.ndarray
    h: np.ndarray
    y: np.ndarray
    H: float
    gamma: float
    k_h: float
    k_v: float = 0.0

    @property
    def P(self) -> float:
        return resultant(self.sigma, self.h)

    @property
    def K_back(self) -> float:
        return back_calculate_K(self.P, self.gamma, self.H, self.k_v)

    @property
    def Y(self) -> float:
        return application_height(self.sigma, self.h, self.y)

    @property
    def Y_over_H(self) -> float:
        return self.Y / self.H


@dataclass(frozen=True)
class AnalyticalParams:
    """Soil values for the pseudo-static comparison curves (angles in rad)."""

    phi: float
    K0: float
    gamma: float
    delta: float = 0.0
    wood_fp: float = 1.0


@dataclass(frozen=True)
class ComparisonRow:
    time: float
    side: Side
    k_h: float
    K_fe: float
    K_mo: float | None
    K_wood: float
    Y: float | None
    Y_over_H: float | None
    motion: str
    k_h_base: float = 0.0
    kind: str = "peak"

    @property
    def deviation(self) -> float | None:
        """Signed relative deviation ``(K_fe - K_mo) / K_mo``."""
        if self.K_mo is None or self.K_mo == 0.0:
            return None
        return (self.K_fe - self.K_mo) / self.K_mo


def pseudo_static_K(params: AnalyticalParams, side: Side, k_h: float, H: float) -> float | None:
    """Pseudo-static coefficient at ``|k_h|``; ``None`` outside its validity domain.

    The coefficient curve describes the critical inertia direction of each
    mode, so peaks of either sign are compared with it at their magnitude;
    the sign of ``k_h`` only classifies the direction of the peak.
    """
    p = WallSoilParams(params.phi, params.delta, gamma=params.gamma, height_H=H)
    try:
        return mo_coefficient(p, SeismicCoefficients(abs(k_h)), side.mode)
    except ValidityDomainError:
        return None


def wood_K(params: AnalyticalParams, k_h: float) -> float:
    """At-rest coefficient plus the rigid-wall increment ``2 f_p |k_h|``."""
    return params.K0 + 2.0 * params.wood_fp * abs(k_h)


def make_row(record: PressureRecord, params: AnalyticalParams, motion: str,
             k_h_base: float = 0.0, kind: str = "peak") -> ComparisonRow:
    try:
        Y = record.Y
        YH = Y / record.H
    except ZeroResultantError:
        Y = YH = None
    return ComparisonRow(record.time, record.side, record.k_h, record.K_back,
                         pseudo_static_K(params, record.side, record.k_h, record.H),
                         wood_K(params, record.k_h), Y, YH, motion, k_h_base, kind)


def comparison_table(records: list[PressureRecord], params: AnalyticalParams, motion: str,
                     k_h_base=None, kinds=None) -> list[ComparisonRow]:
    """One row per record, ordered by time (static rows first at equal times)."""
    rows = [make_row(r, params, motion,
                     0.0 if k_h_base is None else float(k_h_base[i]),
                     "peak" if kinds is None else kinds[i])
            for i, r in enumerate(records)]
    return sorted(rows, key=lambda r: (r.time, r.kind != "static", r.side.value))


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


@dataclass
class ObservationSummary:
    """Directional checks on one run; ``None`` marks a check without data."""

    flags: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"flags": self.flags, "stats": self.stats}


def summarize_observations(rows: list[ComparisonRow]) -> ObservationSummary:
    """Evaluate the per-run directional observations on the peak rows.

    a. active: mean K_fe over the peaks within 35 % of the mean K_mo
       (agreement of the point cloud with the curve)
    b. active: K_fe < K_mo on at least half of the peaks
    c. active: mean K_fe at positive-k_h peaks exceeds that at negative ones
    d. active: deviations from K_mo take both signs (scatter about the curve)
    e. passive: K_fe < K_mo on every peak
    g. passive: deviations share one sign (no scatter about the curve)

    Rows outside the validity domain of K_mo are left out of a, b, d, e
    and g. The trend with shaking level needs several runs, see
    :func:`passive_trend`.
    """
    out = ObservationSummary()
    act = [r for r in rows if r.side is Side.ACTIVE and r.kind == "peak"]
    pas = [r for r in rows if r.side is Side.PASSIVE and r.kind == "peak"]
    act_ok = [r for r in act if r.deviation is not None]
    dev_a = [r.deviation for r in act_ok]
    dev_p = [r.deviation for r in pas if r.deviation is not None]
    cloud = None
    if act_ok:
        k_mo = np.mean([r.K_mo for r in act_ok])
        cloud = float((np.mean([r.K_fe for r in act_ok]) - k_mo) / k_mo)
    within = [abs(d) <= MODERATE_AGREEMENT for d in dev_a]
    below = [d < 0.0 for d in dev_a]
    pos = _mean([r.K_fe for r in act if r.k_h > 0.0])
    neg = _mean([r.K_fe for r in act if r.k_h < 0.0])
    out.stats.update({
        "active_peaks": len(act), "passive_peaks": len(pas),
        "active_cloud_deviation": cloud,
        "active_mean_signed_deviation": _mean(dev_a),
        "active_mean_abs_deviation": _mean([abs(d) for d in dev_a]),
        "active_fraction_within_agreement": float(np.mean(within)) if within else None,
        "active_fraction_below_mo": float(np.mean(below)) if below else None,
        "active_mean_K_positive_kh": pos, "active_mean_K_negative_kh": neg,
        "active_max_abs_kh": max((abs(r.k_h) for r in act), default=None),
        "passive_mean_signed_deviation": _mean(dev_p),
        "passive_max_K": max((r.K_fe for r in pas), default=None),
        "active_mean_Y_over_H": _mean([r.Y_over_H for r in act]),
    })
    out.flags["a"] = None if cloud is None else bool(abs(cloud) <= MODERATE_AGREEMENT)
    out.flags["b"] = None if not below else bool(np.mean(below) >= 0.5)
    out.flags["c"] = None if pos is None or neg is None else bool(pos > neg)
    out.flags["d"] = None if len(dev_a) < 2 else bool(min(dev_a) < 0.0 < max(dev_a))
    out.flags["e"] = None if not dev_p else bool(max(dev_p) < 0.0)
    out.flags["g"] = None if len(dev_p) < 2 else bool(min(dev_p) > 0.0 or max(dev_p) < 0.0)
    return out


def passive_trend(peak_passive_K) -> bool:
    """True if peak passive coefficients are nondecreasing in the given (pga-sorted) order."""
    k = np.asarray(peak_passive_K, float)
    return bool(np.all(np.diff(k) >= 0.0))

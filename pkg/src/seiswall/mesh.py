"""Structured Q8 mesh of the sheet-pile wall site.

Coordinates: x runs from the left boundary (in front of the wall) to the
right boundary (behind the backfill); y is elevation above the model base.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .constitutive import ElasticParams
from .fem.elements import EDGE_NODES, element_geometry


class Region(enum.IntEnum):
    BACKFILL = 0
    FOUNDATION = 1
    WALL = 2
    # Excavation lift k (1-based, top first) is tagged LIFT_BASE + k.
    LIFT_BASE = 10


def lift_tag(k: int) -> int:
    return int(Region.LIFT_BASE) + k


def region_name(tag: int) -> str:
    if tag > Region.LIFT_BASE:
        return f"excavation_lift_{tag - Region.LIFT_BASE}"
    return Region(tag).name.lower()


MATERIAL_SOIL = 0
MATERIAL_WALL = 1


@dataclass(frozen=True)
class SiteConfig:
    """Site geometry and mesh grading (lengths in m)."""

    retained_height: float = 6.0
    embedment: float = 5.0
    wall_thickness: float = 0.5
    soil_front_width: float = 12.0
    soil_back_width: float = 26.0
    depth_below_wall: float = 4.0
    element_size_min: float = 0.25
    element_size_max: float = 1.0
    excavation_lifts: tuple = (3.0, 3.0)
    # Geometric growth limit between neighbouring element sizes.
    grading_ratio: float = 1.25

    def __post_init__(self):
        object.__setattr__(self, "excavation_lifts", tuple(float(v) for v in self.excavation_lifts))
        for name in ("retained_height", "embedment", "wall_thickness", "soil_front_width",
                     "soil_back_width", "depth_below_wall", "element_size_min",
                     "element_size_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.element_size_min > self.element_size_max:
            raise ValueError("element_size_min exceeds element_size_max")
        if any(v <= 0.0 for v in self.excavation_lifts):
            raise ValueError("excavation lift depths must be positive")
        if self.excavation_lifts and not math.isclose(sum(self.excavation_lifts),
                                                      self.retained_height, abs_tol=1e-9):
            raise ValueError("excavation lifts must sum to the retained height")
        if self.grading_ratio < 1.0:
            raise ValueError("grading_ratio must be >= 1")

    @property
    def wall_length(self) -> float:
        return self.retained_height + self.embedment

    @property
    def total_height(self) -> float:
        return self.wall_length + self.depth_below_wall

    @property
    def total_width(self) -> float:
        return self.soil_front_width + self.wall_thickness + self.soil_back_width

    @property
    def toe_y(self) -> float:
        return self.depth_below_wall

    @property
    def dredge_y(self) -> float:
        return self.depth_below_wall + self.embedment

    @property
    def surface_y(self) -> float:
        return self.total_height

    @property
    def wall_x(self) -> tuple[float, float]:
        return self.soil_front_width, self.soil_front_width + self.wall_thickness

    @property
    def wall_zone_size(self) -> float:
        """Vertical element size along the wall."""
        return math.sqrt(self.element_size_min * self.element_size_max)


@dataclass
class Mesh:
    """Q8 mesh with region tags and boundary node sets.

    ``grid_index[e] = (ix, iy)`` locates element ``e`` in the structured grid
    of ``x_lines`` by ``y_lines``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    region: np.ndarray
    material_id: np.ndarray
    boundary_sets: dict
    x_lines: np.ndarray
    y_lines: np.ndarray
    grid_index: np.ndarray
    config: SiteConfig | None = None
    levels: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_coords(self, ids=None) -> np.ndarray:
        conn = self.elements if ids is None else self.elements[ids]
        return self.nodes[conn]

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements[:, :4]].mean(axis=1)

    def region_counts(self) -> dict:
        tags, counts = np.unique(self.region, return_counts=True)
        return {region_name(int(t)): int(c) for t, c in zip(tags, counts)}

    def edge_lengths(self) -> np.ndarray:
        """Corner-to-corner edge lengths, shape (ne, 4)."""
        c = self.nodes[self.elements[:, :4]]
        return np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2)


class MeshGradingError(ValueError):
    pass


def graded_sizes(length: float, h_start: float, h_end: float, ratio: float,
                 h_min: float, h_max: float) -> np.ndarray:
    """Element sizes from ``h_start`` growing geometrically toward ``h_end``.

    The growth is capped at ``h_end`` and the uniform tail is resized so the
    sizes sum to ``length`` exactly.
    """
    tol = 1e-9
    if length <= 0.0:
        raise MeshGradingError("segment length must be positive")
    if h_start >= h_end or ratio <= 1.0:
        n = max(1, math.ceil(length / h_end - tol))
        sizes = np.full(n, length / n)
    else:
        growth = []
        h = h_start
        while h < h_end - tol:
            growth.append(h)
            h *= ratio
        sizes = None
        while sizes is None:
            rest = length - sum(growth)
            if rest <= tol:
                growth.pop()
                continue
            n_t = max(1, math.ceil(rest / h_end - tol))
            t = rest / n_t
            if growth and t < growth[-1] - tol:
                growth.pop()
                continue
            sizes = np.array(growth + [t] * n_t)
    if sizes.min() < h_min - 1e-9 or sizes.max() > h_max + 1e-9:
        raise MeshGradingError(
            f"cannot grade a {length:g} m segment within [{h_min:g}, {h_max:g}] m")
    return sizes


def _lines(start: float, sizes) -> np.ndarray:
    return start + np.concatenate([[0.0], np.cumsum(sizes)])


def structured_q8_mesh(x_lines, y_lines):
    """Conforming Q8 grid over the rectangle spanned by the given lines.

    Returns ``(nodes, elements, grid_index)``; nodes are numbered row by row
    over the refined (2nx+1) x (2ny+1) lattice, skipping element centres.
    """
    x_lines = np.asarray(x_lines, float)
    y_lines = np.asarray(y_lines, float)
    nx, ny = len(x_lines) - 1, len(y_lines) - 1
    if nx < 1 or ny < 1 or np.any(np.diff(x_lines) <= 0) or np.any(np.diff(y_lines) <= 0):
        raise MeshGradingError("grid lines must be strictly increasing")
    xr = np.empty(2 * nx + 1)
    xr[0::2] = x_lines
    xr[1::2] = 0.5 * (x_lines[:-1] + x_lines[1:])
    yr = np.empty(2 * ny + 1)
    yr[0::2] = y_lines
    yr[1::2] = 0.5 * (y_lines[:-1] + y_lines[1:])
    I, J = np.meshgrid(np.arange(2 * nx + 1), np.arange(2 * ny + 1))
    keep = ~((I % 2 == 1) & (J % 2 == 1))
    lattice = -np.ones(I.shape, int)
    lattice[keep] = np.arange(keep.sum())
    nodes = np.column_stack([xr[I[keep]], yr[J[keep]]])
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ix, iy = ix.ravel(), iy.ravel()
    i0, j0 = 2 * ix, 2 * iy
    elements = np.column_stack([
        lattice[j0, i0], lattice[j0, i0 + 2], lattice[j0 + 2, i0 + 2], lattice[j0 + 2, i0],
        lattice[j0, i0 + 1], lattice[j0 + 1, i0 + 2], lattice[j0 + 2, i0 + 1], lattice[j0 + 1, i0],
    ])
    return nodes, elements, np.column_stack([ix, iy])


def column_mesh(height: float, n_elements: int, width: float = 1.0) -> Mesh:
    """Single column of Q8 elements (soil material) with the standard boundary sets."""
    if height <= 0.0 or width <= 0.0 or n_elements < 1:
        raise MeshGradingError("column needs positive height, width and element count")
    x_lines = np.array([0.0, width])
    y_lines = np.linspace(0.0, height, n_elements + 1)
    nodes, elements, grid = structured_q8_mesh(x_lines, y_lines)
    tol = 1e-9
    boundary = {
        "Base": np.flatnonzero(np.abs(nodes[:, 1]) < tol),
        "LeftSide": np.flatnonzero(np.abs(nodes[:, 0]) < tol),
        "RightSide": np.flatnonzero(np.abs(nodes[:, 0] - width) < tol),
        "Surface": np.flatnonzero(np.abs(nodes[:, 1] - height) < tol),
    }
    n = len(elements)
    return Mesh(nodes, elements, np.full(n, int(Region.FOUNDATION)),
                np.full(n, MATERIAL_SOIL), boundary, x_lines, y_lines, grid)


def _axis_lines(cfg: SiteConfig):
    hmin, hmax, r = cfg.element_size_min, cfg.element_size_max, cfg.grading_ratio
    x0, x1 = cfg.wall_x
    front = graded_sizes(cfg.soil_front_width, hmin, hmax, r, hmin, hmax)[::-1]
    if not hmin - 1e-9 <= cfg.wall_thickness <= hmax + 1e-9:
        raise MeshGradingError("wall thickness is outside the element size range")
    back = graded_sizes(cfg.soil_back_width, hmin, hmax, r, hmin, hmax)
    x_lines = np.concatenate([_lines(0.0, front), [x1], _lines(x1, back)[1:]])

    hv = cfg.wall_zone_size
    below = graded_sizes(cfg.depth_below_wall, hv, hmax, r, hmin, hmax)[::-1]
    y_lines = [_lines(0.0, below)]
    # Key levels along the wall: toe, dredge line, lift bottoms, surface.
    levels = [cfg.toe_y, cfg.dredge_y]
    top = cfg.surface_y
    for d in reversed(cfg.excavation_lifts):
        levels.append(levels[-1] + d)
    if not cfg.excavation_lifts:
        levels.append(top)
    for a, b in zip(levels[:-1], levels[1:]):
        n = max(1, math.ceil((b - a) / hv - 1e-9))
        if (b - a) / n < hmin - 1e-9:
            raise MeshGradingError("lift thinner than the minimum element size")
        y_lines.append(np.linspace(a, b, n + 1)[1:])
    return x_lines, np.concatenate(y_lines)


def build_site_mesh(cfg: SiteConfig) -> Mesh:
    """Graded, conforming Q8 mesh of the wall-soil system."""
    x_lines, y_lines = _axis_lines(cfg)
    nodes, elements, grid = structured_q8_mesh(x_lines, y_lines)
    # Snap lattice coordinates that should coincide with key levels.
    cen = nodes[elements[:, :4]].mean(axis=1)
    x0, x1 = cfg.wall_x
    toe, dredge, surf = cfg.toe_y, cfg.dredge_y, cfg.surface_y
    region = np.full(len(elements), int(Region.FOUNDATION))
    above_toe = cen[:, 1] > toe
    region[above_toe & (cen[:, 0] > x1)] = Region.BACKFILL
    region[above_toe & (cen[:, 0] > x0) & (cen[:, 0] < x1)] = Region.WALL
    bottom = dredge
    for k, d in enumerate(reversed(cfg.excavation_lifts)):
        k_top = len(cfg.excavation_lifts) - k
        top = bottom + d
        in_lift = (cen[:, 0] < x0) & (cen[:, 1] > bottom) & (cen[:, 1] < top)
        region[in_lift] = lift_tag(k_top)
        bottom = top
    material = np.where(region == Region.WALL, MATERIAL_WALL, MATERIAL_SOIL)
    tol = 1e-9
    boundary = {
        "Base": np.flatnonzero(np.abs(nodes[:, 1]) < tol),
        "LeftSide": np.flatnonzero(np.abs(nodes[:, 0]) < tol),
        "RightSide": np.flatnonzero(np.abs(nodes[:, 0] - x_lines[-1]) < tol),
        "Surface": np.flatnonzero(np.abs(nodes[:, 1] - y_lines[-1]) < tol),
    }
    mesh = Mesh(nodes, elements, region, material, boundary, x_lines, y_lines, grid, cfg,
                levels={"toe": toe, "dredge": dredge, "surface": surf,
                        "wall_x0": x0, "wall_x1": x1})
    element_geometry(mesh.element_coords())  # raises on a bad Jacobian
    return mesh


def check_conformity(mesh: Mesh) -> bool:
    """True if every shared edge lists identical node triples from both sides."""
    seen = {}
    for e, conn in enumerate(mesh.elements):
        for a, m, b in EDGE_NODES:
            key = frozenset((conn[a], conn[b]))
            if key in seen and seen[key] != conn[m]:
                return False
            seen[key] = conn[m]
    return True


# ---------------------------------------------------------------------------
# Construction staging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    name: str
    deactivate: np.ndarray


def stage_plan(cfg: SiteConfig, mesh: Mesh) -> list[Stage]:
    """Geostatic stage (wall wished in place) followed by one stage per lift."""
    stages = [Stage("geostatic", np.zeros(0, int))]
    for k in range(1, len(cfg.excavation_lifts) + 1):
        ids = np.flatnonzero(mesh.region == lift_tag(k))
        stages.append(Stage(f"excavate_lift_{k}", ids))
    return stages


# ---------------------------------------------------------------------------
# Wave resolution
# ---------------------------------------------------------------------------

@dataclass
class WaveResolutionReport:
    passed: np.ndarray
    max_edge: np.ndarray
    limit: np.ndarray
    f_cutoff: float

    @property
    def all_passed(self) -> bool:
        return bool(self.passed.all())

    def failures(self) -> list[dict]:
        return [{"element": int(e), "max_edge": float(self.max_edge[e]),
                 "required_size": float(self.limit[e])}
                for e in np.flatnonzero(~self.passed)]


def shear_wave_velocity(ep: ElasticParams) -> float:
    """sqrt(G / rho) in m/s for ``E`` in MPa and ``rho`` in kg/m^3."""
    return math.sqrt(ep.shear_modulus * 1e6 / ep.rho)


def wave_size_limit(ep: ElasticParams, f_cutoff: float, points_per_wavelength: int = 8) -> float:
    """Largest element size resolving the shortest shear wavelength."""
    if f_cutoff <= 0.0:
        return math.inf
    return shear_wave_velocity(ep) / (points_per_wavelength * f_cutoff)


def wave_resolution_check(mesh: Mesh, materials: dict, f_cutoff: float,
                          elements=None) -> WaveResolutionReport:
    """Per-element check of max edge length <= V_s / (8 f_cutoff).

    ``materials`` maps material id to :class:`ElasticParams`.
    """
    ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    edge = mesh.edge_lengths()[ids].max(axis=1)
    limit = np.array([wave_size_limit(materials[int(m)], f_cutoff)
                      for m in mesh.material_id[ids]])
    return WaveResolutionReport(edge <= limit, edge, limit, f_cutoff)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_mesh(mesh: Mesh, path) -> None:
    """Plain-text mesh dump.

    Sections start with a ``*NODES``, ``*ELEMENTS``, ``*REGIONS`` or
    ``*BOUNDARY <name>`` line. Node rows: ``id x y``. Element rows:
    ``id region_tag material_id n1 .. n8`` (CCW corners, then midsides).
    Region rows: ``tag name count``. Boundary rows: node ids.
    """
    lines = [f"*NODES {mesh.n_nodes}"]
    lines += [f"{i} {x:.10g} {y:.10g}" for i, (x, y) in enumerate(mesh.nodes)]
    lines.append(f"*ELEMENTS {mesh.n_elements}")
    for e, conn in enumerate(mesh.elements):
        lines.append(f"{e} {mesh.region[e]} {mesh.material_id[e]} " + " ".join(map(str, conn)))
    tags, counts = np.unique(mesh.region, return_counts=True)
    lines.append(f"*REGIONS {len(tags)}")
    lines += [f"{t} {region_name(int(t))} {c}" for t, c in zip(tags, counts)]
    for name, ids in mesh.boundary_sets.items():
        lines.append(f"*BOUNDARY {name} {len(ids)}")
        lines += [str(int(i)) for i in ids]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> dict:
    """Parse :func:`export_mesh` output into plain arrays."""
    out = {"boundary_sets": {}}
    section, name = None, None
    nodes, elems = [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("*"):
                parts = line[1:].split()
                section = parts[0]
                if section == "BOUNDARY":
                    name = parts[1]
                    out["boundary_sets"][name] = []
                continue
            vals = line.split()
            if section == "NODES":
                nodes.append((float(vals[1]), float(vals[2])))
            elif section == "ELEMENTS":
                elems.append([int(v) for v in vals[1:]])
            elif section == "BOUNDARY":
                out["boundary_sets"][name].append(int(vals[0]))
    e = np.array(elems, int)
    out["nodes"] = np.array(nodes)
    out["region"] = e[:, 0]
    out["material_id"] = e[:, 1]
    out["elements"] = e[:, 2:]
    return out

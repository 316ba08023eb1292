"""Finite-element model state: mesh, materials, activity, supports, stresses.

Units are kN, m, s and tonnes (so stresses are kPa and densities t/m^3 in
the mass matrix).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..constitutive import (ElasticParams, GaussState, K0Profile, MohrCoulombParams,
                            elastic_tangent, elastic_update, geostatic_stress, mc_update)
from ..fem.assembly import (DofMap, assemble, assemble_vector, element_dofs)
from ..fem.elements import GAUSS_3x3, QuadratureRule, batch_mass, batch_stiffness, element_geometry
from ..mesh import Mesh

GRAVITY = 9.81
STRESS_SCALE = 1000.0  # MPa -> kPa


@dataclass(frozen=True)
class Material:
    elastic: ElasticParams
    plastic: MohrCoulombParams | None = None

    @property
    def density_t(self) -> float:
        return self.elastic.rho / 1000.0


class LevelSurfaceError(ValueError):
    pass


class FEModel:
    """Plane-strain model with committed displacement and Gauss-point state."""

    def __init__(self, mesh: Mesh, materials: dict, gravity: float = GRAVITY,
                 rule: QuadratureRule = GAUSS_3x3):
        self.mesh = mesh
        self.materials = dict(materials)
        self.gravity = gravity
        self.rule = rule
        self.ng = len(rule)
        self.geo = element_geometry(mesh.element_coords(), rule)
        self.dofs = element_dofs(mesh.elements)
        ne = mesh.n_elements
        self.active = np.ones(ne, bool)
        self.density = np.array([self.materials[int(m)].elastic.rho for m in mesh.material_id])
        self.state = GaussState.zeros(ne * self.ng)
        self.u = np.zeros(2 * mesh.n_nodes)
        self.fixed: set = set()
        self.ties: list = []
        self._dof_map = None

    # -- supports and activity ---------------------------------------------
    @property
    def n_dofs(self) -> int:
        return 2 * self.mesh.n_nodes

    def active_nodes(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_nodes, bool)
        mask[self.mesh.elements[self.active].ravel()] = True
        return mask

    @property
    def dof_map(self) -> DofMap:
        if self._dof_map is None:
            self._dof_map = DofMap(self.mesh.n_nodes, self.active_nodes(),
                                   sorted(self.fixed), self.ties)
        return self._dof_map

    def invalidate(self):
        self._dof_map = None

    def set_supports(self, fixed, ties=()):
        self.fixed = set((int(n), int(c)) for n, c in fixed)
        self.ties = list(ties)
        self.invalidate()

    def static_supports(self):
        """Fixed base and horizontal rollers on both lateral sides."""
        b = self.mesh.boundary_sets
        fixed = [(n, c) for n in b["Base"] for c in (0, 1)]
        fixed += [(n, 0) for n in np.concatenate([b["LeftSide"], b["RightSide"]])]
        return fixed

    def deactivate(self, element_ids):
        self.active[np.asarray(element_ids, int)] = False
        self.invalidate()

    def gp_index(self, elems) -> np.ndarray:
        elems = np.asarray(elems, int)
        return (elems[:, None] * self.ng + np.arange(self.ng)).ravel()

    # -- element loops -------------------------------------------------------
    def active_elements(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def evaluate(self, u_trial: np.ndarray, base_state: GaussState | None = None):
        """Internal force for a trial displacement.

        Strain increments are measured from the committed displacement and
        applied to ``base_state`` (committed state by default).

        Returns ``(f_int_full, trial_state, tangent)`` where ``tangent`` has
        shape ``(n_active, ng, 3, 3)`` and ``trial_state`` covers every point
        (inactive points keep their committed values).
        """
        base = self.state if base_state is None else base_state
        elems = self.active_elements()
        du = (u_trial - self.u)[self.dofs[elems]]
        B = self.geo.B[elems]
        d3 = np.matmul(B, du[:, None, :, None])[..., 0]
        new_state = base.copy()
        tangent = np.empty((len(elems), self.ng, 3, 3))
        for mid, mat in self.materials.items():
            sel = self.mesh.material_id[elems] == mid
            if not sel.any():
                continue
            gps = self.gp_index(elems[sel])
            de = np.zeros((len(gps), 4))
            de[:, [0, 1, 3]] = d3[sel].reshape(-1, 3)
            old = GaussState(base.stress[gps], base.strain[gps],
                             base.plastic_strain[gps], base.yielded[gps])
            if mat.plastic is None:
                st, C = elastic_update(old, de, mat.elastic, STRESS_SCALE)
            else:
                st, C = mc_update(old, de, mat.plastic, mat.elastic, STRESS_SCALE)
            new_state.stress[gps] = st.stress
            new_state.strain[gps] = st.strain
            new_state.plastic_strain[gps] = st.plastic_strain
            new_state.yielded[gps] = st.yielded
            tangent[sel] = np.asarray(C)[:, [0, 1, 3], :].reshape(-1, self.ng, 3, 3)
        f_int = self.internal_force(new_state, elems)
        return f_int, new_state, tangent

    def internal_force(self, state: GaussState | None = None, elems=None) -> np.ndarray:
        state = self.state if state is None else state
        elems = self.active_elements() if elems is None else elems
        s = state.stress[self.gp_index(elems)][:, [0, 1, 3]].reshape(len(elems), self.ng, 3)
        sw = (s * self.geo.wdet[elems][..., None]).reshape(len(elems), 1, -1)
        B = self.geo.B[elems].reshape(len(elems), -1, 16)
        fe = np.matmul(sw, B)[:, 0]
        return assemble_vector(fe, self.dofs[elems], self.n_dofs)

    def gravity_vector(self, density=None) -> np.ndarray:
        """Consistent body-force vector for active elements (kN)."""
        rho = (self.density if density is None else np.asarray(density)) / 1000.0
        elems = self.active_elements()
        fy = -self.gravity * np.einsum("ga,eg,e->ea", self.geo.N, self.geo.wdet[elems], rho[elems])
        fe = np.zeros((len(elems), 16))
        fe[:, 1::2] = fy
        return assemble_vector(fe, self.dofs[elems], self.n_dofs)

    def tangent_matrix(self, tangent: np.ndarray, dof_map: DofMap | None = None) -> sp.csr_matrix:
        elems = self.active_elements()
        Ke = batch_stiffness(self.geo_subset(elems), tangent)
        return assemble(Ke, self.dofs[elems], dof_map or self.dof_map)

    def geo_subset(self, elems):
        from ..fem.elements import ElementGeometry
        return ElementGeometry(self.geo.B[elems], self.geo.wdet[elems], self.geo.N,
                               self.geo.xg[elems])

    def elastic_tangent_field(self, elems) -> np.ndarray:
        out = np.empty((len(elems), self.ng, 3, 3))
        for mid, mat in self.materials.items():
            sel = self.mesh.material_id[elems] == mid
            D = elastic_tangent(mat.elastic)[[0, 1, 3]] * STRESS_SCALE
            out[sel] = D
        return out

    def elastic_stiffness(self, mask=None, dof_map: DofMap | None = None) -> sp.csr_matrix:
        """Elastic stiffness of active elements (optionally restricted by ``mask``)."""
        use = self.active if mask is None else self.active & np.asarray(mask, bool)
        elems = np.flatnonzero(use)
        Ke = batch_stiffness(self.geo_subset(elems), self.elastic_tangent_field(elems))
        return assemble(Ke, self.dofs[elems], dof_map or self.dof_map)

    def mass_matrix(self, mask=None, lumped: bool = False,
                    dof_map: DofMap | None = None) -> sp.csr_matrix:
        use = self.active if mask is None else self.active & np.asarray(mask, bool)
        elems = np.flatnonzero(use)
        rho = np.array([self.materials[int(m)].density_t for m in self.mesh.material_id[elems]])
        Me = batch_mass(self.geo_subset(elems), rho, lumped=lumped)
        return assemble(Me, self.dofs[elems], dof_map or self.dof_map)

    def commit(self, u: np.ndarray, state: GaussState):
        self.u = u.copy()
        self.state = state

    def reset_displacements(self):
        """Zero displacements and strains, keeping stresses (end of an initial phase)."""
        self.u[:] = 0.0
        self.state.strain[:] = 0.0
        self.state.plastic_strain[:] = 0.0

    # -- element summaries ---------------------------------------------------
    def element_mean_stress(self, elems, state: GaussState | None = None) -> np.ndarray:
        """Area-weighted mean stress ``(n, 4)`` of each listed element."""
        state = self.state if state is None else state
        elems = np.asarray(elems, int)
        s = state.stress[self.gp_index(elems)].reshape(len(elems), self.ng, 4)
        w = self.geo.wdet[elems]
        return np.einsum("egk,eg->ek", s, w) / w.sum(axis=1)[:, None]


def geostatic_initialize(model: FEModel, profile: K0Profile) -> np.ndarray:
    """Assign at-rest stresses to every active integration point.

    The active region's top must be level at ``profile.surface_y``. Returns
    the assigned stress array for the active points.
    """
    nodes = model.mesh.nodes
    act = model.active_nodes()
    xs = nodes[act, 0]
    ys = nodes[act, 1]
    order = np.lexsort((ys, xs))
    xs, ys = xs[order], ys[order]
    cols = np.flatnonzero(np.r_[True, np.diff(xs) > 1e-9])
    tops = np.maximum.reduceat(ys, cols)
    if np.any(np.abs(tops - profile.surface_y) > 1e-9):
        raise LevelSurfaceError("active region surface is not level at the stated elevation")
    elems = model.active_elements()
    gps = model.gp_index(elems)
    y = model.geo.xg[elems][..., 1].ravel()
    sig = geostatic_stress(y, profile)
    model.state.stress[gps] = sig
    model.state.strain[gps] = 0.0
    model.state.plastic_strain[gps] = 0.0
    model.state.yielded[gps] = False
    return sig

from .assembly import (DofMap, LinearSolver, SingularSystemError, assemble,
                       assemble_full, assemble_vector, element_dofs,
                       solve_linear_system)
from .elements import (EDGE_NODES, GAUSS_2x2, GAUSS_3x3, NODE_XI, ElementGeometry,
                       JacobianError, QuadratureRule, batch_mass, batch_stiffness,
                       edge_load_weights, element_geometry, element_mass,
                       element_stiffness, gauss_point_strain, shape_q8)

__all__ = [
    "DofMap", "LinearSolver", "SingularSystemError", "assemble", "assemble_full",
    "assemble_vector", "element_dofs", "solve_linear_system",
    "EDGE_NODES", "GAUSS_2x2", "GAUSS_3x3", "NODE_XI", "ElementGeometry",
    "JacobianError", "QuadratureRule", "batch_mass", "batch_stiffness",
    "edge_load_weights", "element_geometry", "element_mass", "element_stiffness",
    "gauss_point_strain", "shape_q8",
]

from .dynamic import (LATERAL_BOUNDARIES, DynamicResult, DynamicSolveError, DynamicSolveSettings,
                      NewmarkIntegrator, load_checkpoint, newmark_dynamic_solve,
                      rayleigh_coefficients, rayleigh_ratio, save_checkpoint)
from .modal import (ModalConvergenceError, ModalResult, lowest_frequency, lowest_modes,
                    single_dof_frequency)
from .model import GRAVITY, FEModel, LevelSurfaceError, Material, geostatic_initialize
from .static import (StageFailure, StageResult, StaticSolveSettings, newton_static_solve,
                     run_staged_construction)

__all__ = [
    "LATERAL_BOUNDARIES", "DynamicResult", "DynamicSolveError", "DynamicSolveSettings",
    "NewmarkIntegrator", "load_checkpoint", "newmark_dynamic_solve", "rayleigh_coefficients",
    "rayleigh_ratio", "save_checkpoint",
    "ModalConvergenceError", "ModalResult", "lowest_frequency", "lowest_modes",
    "single_dof_frequency",
    "GRAVITY", "FEModel", "LevelSurfaceError", "Material", "geostatic_initialize",
    "StageFailure", "StageResult", "StaticSolveSettings", "newton_static_solve",
    "run_staged_construction",
]

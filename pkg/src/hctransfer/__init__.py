"""Conservative high-order solution transfer between non-matching triangular meshes."""

from .field import DGField, project_analytic, read_field, test_function, write_field
from .harness import StudyConfig, export_viz, run_error_study, run_mass_study, run_quadrature_study
from .hct import HCTSurrogate, build_surrogate, synchronize
from .locate import Locator, LocationError
from .mesh import Domain, MeshError, TriMesh, read_mesh, structured_grid, unstructured_grid, write_mesh
from .metrics import l2_error, mass_variation
from .quadrature import QuadSpec
from .transfer import Method, TransferConfig, TransferError, limit, mass, transfer

__version__ = "0.1.0"

__all__ = [
    "DGField", "Domain", "HCTSurrogate", "Locator", "LocationError", "MeshError", "Method", "QuadSpec",
    "StudyConfig", "TransferConfig", "TransferError", "TriMesh", "build_surrogate", "export_viz", "l2_error",
    "limit", "mass", "mass_variation", "project_analytic", "read_field", "read_mesh", "run_error_study",
    "run_mass_study", "run_quadrature_study", "structured_grid", "synchronize", "test_function", "transfer",
    "unstructured_grid", "write_field", "write_mesh",
]

"""Mesh-to-CAD reconstruction: recover extrude/revolve programs from watertight meshes."""

__version__ = "0.1.0"

from .assembly import FitReport, backward_prune, greedy_select, iterative_fit, reconstruct_once, recover_finishing
from .candidates import Candidate, SweepConfig, canonicalize_interval, fit_revolve, generate_candidates, sweep_extrude_heights
from .config import ConfigError, FitConfig
from .geometry import Plane, TriMesh, load_mesh, normalize_mesh, point_in_mesh, points_in_mesh, save_stl, slice_with_plane
from .metrics import (
    Residuals,
    Similarity,
    Target,
    VoxelGrid,
    align_similarity,
    chamfer_distance,
    compute_residuals,
    error_decomposition,
    mesh_target,
    residual_target,
    volumetric_iou,
    voxelize,
)
from .prior import filter_profiles, score_profile
from .program import (
    CornerFeature,
    Operation,
    Program,
    Solid,
    apply_corner_feature,
    deserialize_program,
    emit_script,
    point_in_solid,
    points_in_solid,
    sample_candidate_surface,
    serialize_program,
    tessellate_solid,
)
from .sketch import Profile, extract_sketch_candidates, fit_primitives, group_profiles

__all__ = [name for name in dir() if not name.startswith("_")]

"""Handle-based differentiable Laplacian mesh deformation with per-sequence
refinement against keypoint, silhouette, rigidity and optical-flow evidence."""

from .mesh import (
    TriMesh,
    SparseLaplacian,
    HandleMap,
    load_obj,
    save_obj,
    cotangent_laplacian,
    geodesic_distances,
    farthest_point_sample,
    build_handle_map,
)
from .spsolve import SpdMatrix, factorize, solve_multi, dense_oracle_solve
from .deform import DeformSystem, HandleTargets, build_system, deform, solver_backward, gradcheck
from .camera import (
    WeakPerspectiveCamera,
    CameraMultiplex,
    project,
    project_with_depth,
    projection_jacobians,
    init_multiplex,
    multiplex_probabilities,
)
from .observations import (
    Mask,
    FlowField,
    KeypointSet,
    FrameObservation,
    load_mask,
    save_mask,
    load_flo,
    save_flo,
    distance_transform,
    sample_flow,
    vertex_visibility,
)
from .shapes import grid, icosahedron, icosphere, tetrahedron, unit_square
from .losses import (
    LossWeights,
    LossBreakdown,
    FrameSample,
    motion_loss,
    keypoint_loss,
    rigidity_loss,
    boundary_loss,
    total_loss,
    build_neighborhoods,
)
from .refine import (
    RefineConfig,
    RefineReport,
    SequenceState,
    refine,
    refine_single_image,
    pca_deformations,
)

__version__ = "0.1.0"

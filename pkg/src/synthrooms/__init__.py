"""Deterministic generation of randomized synthetic 3D indoor scenes.

Formula-driven objects (trigonometric radius fields on the sphere, IFS
fractals) and ingested CAD meshes are assembled into randomized rooms and
exported as multi-view point clouds, ray-cast depth maps, and
training-ready crops. Everything is a pure function of the configuration
and a master seed.
"""

from .analysis import DiversityReport, chamfer, diversity_report
from .crops import (
    CropConfig,
    crop_depth_rect,
    crop_knn,
    crop_pair_contrastive,
    pseudo_color,
    standard_augment,
)
from .fractal import IfsSystem, accept_system, chaos_game, sample_ifs
from .geometry import PointCloud, SurfaceMesh, normalize_unit_sphere, sample_surface
from .harmonics import (
    HarmonicCoefficients,
    eval_radius,
    generate_mesh,
    sample_coefficients,
)
from .meshio import load_mesh, read_ply_points, write_obj, write_ply_points
from .pipeline import (
    TOOL_VERSION,
    GenerationConfig,
    load_config,
    run_generation,
    validate_dataset,
)
from .raycast import (
    CameraIntrinsics,
    DepthFrame,
    build_accelerator,
    render_depth,
    sample_valid_view,
)
from .scenegen import (
    ObjectPlacement,
    SceneSpec,
    assemble_scene,
    augment_object,
    finalize_multiview,
    voxel_downsample,
)
from .seeds import derive_seed

__version__ = TOOL_VERSION

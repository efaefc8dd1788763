"""Deterministic procedural lunar terrain.

Seeded crater DEM synthesis, point-process asset scattering, heightfield
meshes and top-down annotations. Same config and seed, same bytes.
"""

__version__ = "0.1.0"

from .annotate import InstanceAnnotation, InstanceRaster, hillshade, rasterize_instances
from .config import CraterTier, ForgeConfig, ScatterRule, load_config, parse_config
from .craters import (
    CraterProfile,
    CraterSpec,
    CraterStamp,
    load_profiles,
    make_stamp,
    smooth_profile,
    stamp_into,
)
from .dem import Dem, GridCoord, bilinear_sample, fill_holes, load_dem, resample, save_dem
from .errors import (
    AnnotationError,
    BudgetExceededError,
    ConfigError,
    CraterError,
    DemError,
    DimensionMismatchError,
    FormatError,
    HeaderError,
    LunarForgeError,
    MeshError,
    PipelineError,
    ProfileError,
    SamplingError,
    UnreadableFileError,
)
from .forge import PlacementManifest, Randomization, StageError, forge_terrain, randomize, scatter_assets
from .mesh import MeshBuffers, collision_mesh, compute_normals, dem_to_mesh, export_mesh, triangulate
from .points import (
    DensityMask,
    Disk,
    HardCore,
    PointSet,
    Rectangle,
    sample_hardcore_poisson,
    sample_matern,
    sample_normal,
    sample_poisson,
    sample_thomas,
    sample_uniform,
)
from .rng import RngStream

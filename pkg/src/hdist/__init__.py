"""Exact two-way Hausdorff distance between 3-D point clouds via expanding-radius
neighbour search over a quantized index space."""
from .core import (SQRT3, Aabb, CellIndex, ConsistencyError, DegenerateGridError, DegenerateInputError,
                   HdistError, ParseError, Point3, aabb_of, cheb_dist, dist, sq_dist)
from .mesh_io import PointCloud, SceneSpec, build_scene, load_cloud, synthetic_cloud, write_ply_ascii
from .index_space import IndexSpace, build_grid, build_index_space, quantize
from .broad_search import BroadPhaseResult, broad_phase, build_bvh, epsilon_neighbors
from .narrow_phase import HausdorffConfig, HausdorffResult, brute_force_hausdorff, hausdorff, refine_one_sided
from .bench import run_no_index_space

__version__ = "0.1.0"

"""Generative modelling of kd-tree ordered point clouds over a PCA shape basis."""

__version__ = "0.1.0"

from .basis import PcaBasis, ShapeMatrix, devectorize, fit_pca, vectorize
from .evaluation import ShapeSet, evaluate_models, set_distance
from .gan import GanConfig, GanModel, build_model, generate, interpolate, train
from .ordering import OrderingStrategy, SwapSchedule, locality_score, optimize_ordering, sort_cloud
from .pointcloud import PointCloud, ShapeDataset, load_points, normalize_cloud, save_points
from .ppca import PpcaModel, fit_ppca, sample_ppca
from .sampling import TriangleMesh, load_mesh, sample_surface

__all__ = [
    "PcaBasis", "ShapeMatrix", "devectorize", "fit_pca", "vectorize",
    "ShapeSet", "evaluate_models", "set_distance",
    "GanConfig", "GanModel", "build_model", "generate", "interpolate", "train",
    "OrderingStrategy", "SwapSchedule", "locality_score", "optimize_ordering", "sort_cloud",
    "PointCloud", "ShapeDataset", "load_points", "normalize_cloud", "save_points",
    "PpcaModel", "fit_ppca", "sample_ppca",
    "TriangleMesh", "load_mesh", "sample_surface",
]

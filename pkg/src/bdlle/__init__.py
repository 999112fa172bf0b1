"""Boundary detection for point clouds sampled from manifolds with boundary."""

from .baselines import BaselineResult, CpsDistances, run_baseline
from .datasets import DatasetBundle, sample
from .diffusion import DmParams, denoise_detect, dm_embed
from .evaluation import F1Report, f1, f1_max, f1_max_cps
from .indicator import (BoundaryReport, Regularizer, choose_epsilon, detect_boundary, run_bdlle,
                        select_epsilon_range, select_K, select_regularizer)
from .pointcloud import NeighborParams, PointCloud, build_index, load_cloud, save_cloud

__all__ = [
    "BaselineResult", "BoundaryReport", "CpsDistances", "DatasetBundle", "DmParams", "F1Report",
    "NeighborParams", "PointCloud", "Regularizer", "build_index", "choose_epsilon",
    "denoise_detect", "detect_boundary", "dm_embed", "f1", "f1_max", "f1_max_cps", "load_cloud",
    "run_baseline", "run_bdlle", "sample", "save_cloud", "select_K", "select_epsilon_range",
    "select_regularizer",
]

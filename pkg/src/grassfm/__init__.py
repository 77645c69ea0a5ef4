"""Dense non-rigid structure from motion via Grassmann subspace clustering."""

from .bench import (EvalReport, Scene, SceneSpec, add_noise, e3d, generate_scene,
                    label_accuracy, noise_sweep, standard_scene, sweep_means)
from .clustering import (CouplingState, KernelMatrix, kernel_matrix, kmeans,
                         kmeans_pp_init, nuclear_norm, spectral_cluster, svt,
                         update_coefficients)
from .data import (Dataset, DatasetError, OrderingVector, arrange_columns,
                   load_dataset, restore_columns, restore_values, save_dataset,
                   save_shape, to_frame_major, to_point_major)
from .grassmann import (GrassmannPoint, GroupDecomposition, SimilarityGraph, embed,
                        grassmann_from_block, proj_distance_sq, similarity_graph)
from .lowdim import (LowDimSet, ProjectionCollapseError, ProjectionMap, fit_projection,
                     initial_map, project_all, project_point, project_set)
from .solver import (SolveResult, SolverConfig, SolveState, admm_solve, init_state,
                     objective_value, reconstruct_shape, regroup, update_shape)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetError", "OrderingVector", "arrange_columns", "load_dataset",
    "restore_columns", "restore_values", "save_dataset", "save_shape",
    "to_frame_major", "to_point_major",
    "GrassmannPoint", "GroupDecomposition", "SimilarityGraph", "embed",
    "grassmann_from_block", "proj_distance_sq", "similarity_graph",
    "LowDimSet", "ProjectionCollapseError", "ProjectionMap", "fit_projection",
    "initial_map", "project_all", "project_point", "project_set",
    "CouplingState", "KernelMatrix", "kernel_matrix", "kmeans", "kmeans_pp_init",
    "nuclear_norm", "spectral_cluster", "svt", "update_coefficients",
    "SolveResult", "SolverConfig", "SolveState", "admm_solve", "init_state",
    "objective_value", "reconstruct_shape", "regroup", "update_shape",
    "EvalReport", "Scene", "SceneSpec", "add_noise", "e3d", "generate_scene",
    "label_accuracy", "noise_sweep", "standard_scene", "sweep_means",
    "__version__",
]

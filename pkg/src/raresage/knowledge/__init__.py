"""Expert-knowledge machine for seizure-onset-zone components."""

from .clustering import Cluster, cluster_activation, dbscan_labels
from .geometry import (extract_brain_contour, inside_any, is_simple, moore_trace,
                       polygon_mask, winding_number, winding_numbers)
from .soz import (NONRARE, PROPOSITIONS, RARE, PropositionVector, Scene, Thresholds,
                  ablate_propositions, eke_dataset, evaluate_propositions, kappa_soz,
                  load_scene, region_fraction, render_scene, save_scene, scene_to_json,
                  train_eke, voxel_centers)
from .sparsity import gini_index, haar_details, sine_sparsity, wavelet_sparsity

__all__ = [
    "Cluster", "cluster_activation", "dbscan_labels", "extract_brain_contour",
    "inside_any", "is_simple", "moore_trace", "polygon_mask", "winding_number",
    "winding_numbers", "NONRARE", "PROPOSITIONS", "RARE", "PropositionVector", "Scene",
    "Thresholds", "ablate_propositions", "eke_dataset", "evaluate_propositions",
    "kappa_soz", "load_scene", "region_fraction", "render_scene", "save_scene",
    "scene_to_json", "train_eke", "voxel_centers", "gini_index", "haar_details",
    "sine_sparsity", "wavelet_sparsity",
]

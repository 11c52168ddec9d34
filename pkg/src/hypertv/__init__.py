"""Transductive semi-supervised classification on multi-modal hypergraphs.

Builds kNN and phenotypic hypergraphs from per-modality features, labels
unlabelled nodes by minimising the hypergraph total-variation ratio with a
semi-explicit flow, and refines predictions with an entropy-uncertainty
weighted alternating loop.
"""

from .hypergraph import (Hyperedge, Hypergraph, ModalityTable,
                         build_hypergraph, concat_hypergraphs,
                         knn_modal_hypergraph, load_hypergraph,
                         phenotypic_hypergraph, save_hypergraph)
from .labels import GIVEN, PSEUDO, UNKNOWN, LabelState
from .embedding import (AugmentPolicy, EncoderParams, augment_features,
                        augment_hypergraph, cosine_sim, ntxent_loss,
                        train_encoder)
from .diffusion import (DiagnosticsLog, FlowParams, InnerParams,
                        NodeFunctions, center_d, flow_step, norm_and_subgrad,
                        prox_tv, remove_d_component, run_binary_flow,
                        run_multiclass, tv_h)
from .uncertainty import (ClassifierParams, LoopParams, UncertaintyWeights,
                          alternate, entropy_weights, promote_pseudo_labels,
                          train_weighted_classifier)
from .synth import (MetricsReport, PlantedSpec, brute_force_best_ratio,
                    gen_planted, indicator_ratio, metrics)
from .config import RunConfig, load_config
from .dataio import load_dataset

__version__ = "0.1.0"

__all__ = [
    "Hyperedge", "Hypergraph", "ModalityTable", "build_hypergraph",
    "concat_hypergraphs", "knn_modal_hypergraph", "phenotypic_hypergraph",
    "save_hypergraph", "load_hypergraph",
    "GIVEN", "PSEUDO", "UNKNOWN", "LabelState",
    "AugmentPolicy", "EncoderParams", "augment_features",
    "augment_hypergraph", "cosine_sim", "ntxent_loss", "train_encoder",
    "DiagnosticsLog", "FlowParams", "InnerParams", "NodeFunctions",
    "center_d", "flow_step", "norm_and_subgrad", "prox_tv",
    "remove_d_component", "run_binary_flow", "run_multiclass", "tv_h",
    "ClassifierParams", "LoopParams", "UncertaintyWeights", "alternate",
    "entropy_weights", "promote_pseudo_labels", "train_weighted_classifier",
    "MetricsReport", "PlantedSpec", "brute_force_best_ratio", "gen_planted",
    "indicator_ratio", "metrics",
    "RunConfig", "load_config", "load_dataset",
]

"""Edge-mask GNN explanation with graph mixup.

Synthetic benchmarks with ground-truth explanations, a from-scratch 3-layer
GCN, two mask-based explainers, the mixup training objective, and evaluation
metrics (edge AUC-ROC, embedding-distance shift diagnostics).
"""
from .explain import (GibCoefficients, PgParams, gib_loss, gnnexplainer_explain,
                      pgexplainer_explain, pgexplainer_train)
from .gcn import (GcnModel, TrainConfig, gcn_backward, gcn_forward, load_model,
                  predict, save_model, train_gcn)
from .graphs import (Dataset, Graph, explanation_instances, instance_graph,
                     instance_ground_truth, khop_subgraph, load_dataset,
                     save_dataset, validate_graph)
from .metrics import (auc_roc, binarize_topk, cosine_score, dataset_auc,
                      euclidean_distance, instance_auc, pearson_corr,
                      shift_report)
from .runner import (ExperimentConfig, default_train_config, run_experiment)
from .mixup import (MixedGraph, MixupConfig, extend_adjacency,
                    mixup_gnnexplainer_explain, mixup_graphs, mixup_loss,
                    mixup_masks, mixup_pgexplainer_train, sample_cross_edges,
                    sample_partner)
from .synth import (GenConfig, canonical_config, gen_ba_2motifs, gen_ba_community,
                    gen_ba_graph, gen_ba_shapes, gen_tree_cycles, gen_tree_grid,
                    generate, load_edge_list_dataset)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

"""Meta-weight graph neural network: local-distribution aware node classification."""
__version__ = "0.1.0"

from .kernels import BACKEND
from .graph import (Graph, GraphBundle, build_graph, k_hop_neighbors, local_degree_profile,
                    shortest_path_matrix, sorted_context)
from .metrics import (global_edge_homophily, homophily_report, katz_centrality,
                      local_edge_homophily)
from .synthgen import (CombineSpec, SyntheticSpec, block_matrix_for_target_h, combine_graphs,
                       combined_preset, generate_graph)
from .models import GCN, MLP, MWGNN, MWGNNConfig, TrainConfig, TrainReport, evaluate, run_ablation, train
from .theory import (TheoremSetting, analytic_bound, expected_embedding, verify_concentration,
                     bernstein_probe)

__all__ = [
    "BACKEND", "Graph", "GraphBundle", "build_graph", "k_hop_neighbors", "local_degree_profile",
    "shortest_path_matrix", "sorted_context", "global_edge_homophily", "homophily_report",
    "katz_centrality", "local_edge_homophily", "CombineSpec", "SyntheticSpec",
    "block_matrix_for_target_h", "combine_graphs", "combined_preset", "generate_graph", "GCN",
    "MLP", "MWGNN", "MWGNNConfig", "TrainConfig", "TrainReport", "evaluate", "run_ablation",
    "train", "TheoremSetting", "analytic_bound", "expected_embedding", "verify_concentration",
    "bernstein_probe",
]

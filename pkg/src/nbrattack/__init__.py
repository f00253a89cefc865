"""Targeted black-box evasion attacks on graph neural networks.

The attack maximizes the distortion of a target node's k-hop
neighborhood under an edge-edit budget, using unsupervised embeddings
as a task-agnostic proxy, so one trained attacker transfers across
victim models and downstream tasks.
"""

from .distortion import DistortionScore, embedding_distortion, mean_l2_to_set
from .embed import EmbeddingTable, gin_forward, train_gin
from .graphs import (EdgeEdit, Graph, apply_edit, graph_distance,
                     k_hop_neighborhood, neighborhood_distortion)

__all__ = [
    "DistortionScore", "EdgeEdit", "EmbeddingTable", "Graph",
    "apply_edit", "embedding_distortion", "gin_forward", "graph_distance",
    "k_hop_neighborhood", "mean_l2_to_set", "neighborhood_distortion",
    "train_gin",
]

__version__ = "0.1.0"

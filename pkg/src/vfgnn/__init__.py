"""Simulator for vertically federated GraphSAGE training.

Holders own feature column blocks, private edge sets and (one of them) labels;
initial embeddings are computed over additive secret shares, local
propagation stays on each holder, and everything sent to the server is
published with differential privacy.
"""

from .dp import DpParams, PrivacyAccountant
from .graph import (MasterGraph, PartitionedGraph, generate_sbm, load_graph, save_graph,
                    single_holder, vertical_partition)
from .protocol import (TrainConfig, TrainResult, VFGNN, comm_audit, expected_counts, predict,
                       run_baselines, train)
from .ring import FixedPointCodec, decode, encode
from .transport import Network, Phase, Transcript

__all__ = [
    "DpParams", "PrivacyAccountant", "MasterGraph", "PartitionedGraph", "generate_sbm",
    "load_graph", "save_graph", "single_holder", "vertical_partition", "TrainConfig",
    "TrainResult", "VFGNN", "comm_audit", "expected_counts", "predict", "run_baselines",
    "train", "FixedPointCodec", "decode", "encode", "Network", "Phase", "Transcript",
]

__version__ = "0.1.0"

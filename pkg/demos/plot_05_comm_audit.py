"""
Counting the messages
=====================

Every message is logged with its phase and payload size.  The audit
compares the log with closed-form counts for the number of holders.
"""

from vfgnn.graph import generate_sbm, vertical_partition
from vfgnn.protocol import VFGNN, TrainConfig, comm_audit

for n in (2, 3, 4):
    master = generate_sbm(3, 20, 0.2, 0.02, feature_dim=12, class_signal=1.0, seed=n)
    graph = vertical_partition(master, [1 / n] * n, seed=n)
    cfg = TrainConfig(epochs=1, embed_dim=8)
    model = VFGNN(graph, cfg)
    model.fit()
    report = comm_audit(model.network.transcript, graph, 1, cfg)
    print(f"--- {n} holders: {'match' if report.ok else 'MISMATCH'}")
    print(report.format())

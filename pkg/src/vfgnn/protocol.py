"""End-to-end vertically federated GraphSAGE training.

Parties are objects with private state; every value that crosses a party
boundary goes through the :class:`~vfgnn.transport.Network`.  One epoch:

1. holders compute h0 (collaboratively over secret shares, or individually);
2. each holder propagates over its own edges and DP-publishes its local
   embeddings to the server;
3. the server combines them, runs its MLP and sends z_L to the label holder;
4. the label holder computes softmax/cross-entropy, DP-publishes dL/dz_L;
5. the server back-propagates and returns each holder's embedding gradient;
6. holders back-propagate locally, sync dL/dh0 and update their W shares.

The DP publication is treated as the identity in the backward pass
(straight-through): holders receive the gradient w.r.t. what they published.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dp as dpmod
from .dp import DpParams, PrivacyAccountant
from .gnn import LocalGnnParams, local_backward, local_forward
from .graph import PartitionedGraph, single_holder
from .ring import FixedPointCodec
from .secure_init import (SecureInit, init_weight_shares, reconstruct_weights,
                          update_weight_shares)
from .server import (CombineStrategy, OutputHead, ServerMlp, combine, combine_backward,
                     cross_entropy, output_backward, output_forward, server_backward,
                     server_forward)
from .sharing import TrustedDealer
from .transport import SERVER, LocalityGuard, Network, Phase, Transcript


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    depth: int = 2
    embed_dim: int = 16
    server_hidden: tuple[int, ...] | None = None
    combine: str = "mean"
    dp: DpParams = DpParams()
    seed: int = 0
    l2_reg: float = 1e-4
    dropout: float = 0.5
    init_mode: str = "collaborative"
    refresh_init: str = "epoch"
    sample_rate: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    frac_bits: int = 16
    bit_width: int = 64
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 1 <= self.depth <= 8:
            raise ValueError("depth K must be in [1, 8]")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not 0.0 <= self.l2_reg <= 1e-2:
            raise ValueError("l2_reg must lie in [0, 1e-2]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.init_mode not in ("collaborative", "individual"):
            raise ValueError("init_mode must be 'collaborative' or 'individual'")
        if self.refresh_init not in ("epoch", "once"):
            raise ValueError("refresh_init must be 'epoch' or 'once'")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate q must lie in (0, 1]")
        CombineStrategy(self.combine)
        if self.dp.mechanism == "james_stein" and self.embed_dim < 3:
            raise ValueError("James-Stein publication needs embed_dim >= 3")

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(self.server_hidden) if self.server_hidden else (self.embed_dim, self.embed_dim)

    @property
    def codec(self) -> FixedPointCodec:
        return FixedPointCodec(self.frac_bits, self.bit_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["server_hidden"] = list(self.server_hidden) if self.server_hidden else None
        return d


# --- parties -----------------------------------------------------------------

class Holder:
    def __init__(self, hid, features: np.ndarray, graph: PartitionedGraph, config: TrainConfig,
                 rng: np.random.Generator):
        self.id = hid
        self.features = features
        self.neighbors = graph.neighbors(hid)
        self.gnn = LocalGnnParams.init(config.depth, config.embed_dim, config.embed_dim, rng)
        self.own_w: np.ndarray | None = None
        self.w_share = None
        self.dp_rng = np.random.default_rng(rng.integers(2**63))
        self.h0: np.ndarray | None = None
        self.cache = None
        self.embeddings: np.ndarray | None = None

    def propagate(self) -> np.ndarray:
        self.embeddings, self.cache = local_forward(self.h0, self.gnn, self.neighbors)
        return self.embeddings

    def publish(self, params: DpParams, rng: np.random.Generator | None = None) -> np.ndarray:
        return dpmod.publish(self.embeddings, params, rng or self.dp_rng)


class LabelHolder(Holder):
    def __init__(self, hid, features, graph, config, rng, hidden_dim: int):
        super().__init__(hid, features, graph, config, rng)
        self.labels = graph.labels
        self.masks = {"train": graph.train_mask, "val": graph.val_mask, "test": graph.test_mask}
        self.head = OutputHead.init(hidden_dim, graph.num_classes, rng)
        self.z: np.ndarray | None = None
        self.probs: np.ndarray | None = None


class Server:
    def __init__(self, in_dim: int, config: TrainConfig, n_holders: int, rng: np.random.Generator):
        if config.combine == "regression":
            self.strategy = CombineStrategy.regression(n_holders, config.embed_dim)
        else:
            self.strategy = CombineStrategy(config.combine)
        self.mlp = ServerMlp.init(in_dim, config.hidden, rng, config.dropout)
        self.dropout_rng = np.random.default_rng(rng.integers(2**63))
        self.received: list[np.ndarray] | None = None
        self.cache = None


@dataclass
class Gradients:
    loss: float
    gnn: dict
    mlp: list[np.ndarray]
    head: np.ndarray
    omega: list[np.ndarray] | None
    init: object  # Shared gradient shares or list of per-holder plaintext grads


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    epsilon_spent: float
    messages: dict
    bytes: dict


class VFGNN:
    """Model state plus the synchronous round scheduler."""

    def __init__(self, graph: PartitionedGraph, config: TrainConfig = TrainConfig(),
                 guard: bool = True, keep_messages: bool = False):
        self.graph = graph
        self.config = config
        ss = np.random.SeedSequence(config.seed)
        (s_holders, s_dealer, s_share, s_server, s_sample, s_eval) = ss.spawn(6)
        self.sample_rng = np.random.default_rng(s_sample)
        self.eval_rng = np.random.default_rng(s_eval)
        locality = LocalityGuard(graph.features, graph.edge_sets, graph.labels) if guard else None
        self.guard = locality
        self.network = Network(Transcript(keep_messages=keep_messages), guard=locality)
        self.eval_network = Network(Transcript(), guard=locality)

        hrngs = [np.random.default_rng(s) for s in s_holders.spawn(graph.num_holders)]
        self.label_id = graph.label_holder
        self.holders: dict = {}
        for hid, x, r in zip(graph.holders, graph.features, hrngs):
            if hid == self.label_id:
                self.holders[hid] = LabelHolder(hid, x, graph, config, r, config.hidden[-1])
            else:
                self.holders[hid] = Holder(hid, x, graph, config, r)
        n = graph.num_holders
        in_dim = config.embed_dim * n if config.combine == "concat" else config.embed_dim
        self.server = Server(in_dim, config, n, np.random.default_rng(s_server))

        self.codec = config.codec
        share_rng = np.random.default_rng(s_share)
        self.collaborative = config.init_mode == "collaborative"
        if self.collaborative:
            self.dealer = TrustedDealer(np.random.default_rng(s_dealer), self.codec)
            self.session = SecureInit(graph, self.dealer, self.network, share_rng, self.codec)
            self.w_shares = init_weight_shares(graph, config.embed_dim, share_rng, self.codec, self.network)
        else:
            self.dealer = None
            self.session = None
            bound = 1.0 / math.sqrt(config.embed_dim)
            for h, r in zip(self.holders.values(), hrngs):
                h.own_w = r.uniform(-bound, bound, size=(h.features.shape[1], config.embed_dim))
        self.accountant = PrivacyAccountant(config.dp.epsilon, config.sample_rate, config.c1, config.c2)
        self.epoch = 0
        self._h0_fresh = False

    @property
    def label_holder(self) -> LabelHolder:
        return self.holders[self.label_id]

    # --- CG1 -------------------------------------------------------------------

    def compute_initial_embeddings(self, network: Network | None = None) -> None:
        if self.collaborative:
            if network is not None and network is not self.network:
                session = SecureInit(self.graph, self.dealer, network, self.session.rng, self.codec)
                h0 = session.forward(self.w_shares)
            else:
                h0 = self.session.forward(self.w_shares)
            for h in self.holders.values():
                h.h0 = h0.copy()
        else:
            for h in self.holders.values():
                h.h0 = h.features @ h.own_w

    def _local_pass(self) -> None:
        for h in self.holders.values():
            h.propagate()

    # --- CG1 -> CG2 -> CG3 -------------------------------------------------------

    def _publish_and_predict(self, network: Network, training: bool,
                             rng: np.random.Generator | None = None) -> np.ndarray:
        for h in self.holders.values():
            network.send(h.id, SERVER, Phase.EMBEDDING_PUBLISH, h.publish(self.config.dp, rng))
        srv = self.server
        srv.received = [network.recv(SERVER, Phase.EMBEDDING_PUBLISH, hid).payload for hid in self.holders]
        g = combine(srv.received, srv.strategy)
        z, srv.cache = server_forward(g, srv.mlp, training, srv.dropout_rng)
        network.send(SERVER, self.label_id, Phase.HIDDEN_TO_LABEL_HOLDER, z)
        lh = self.label_holder
        lh.z = network.recv(self.label_id, Phase.HIDDEN_TO_LABEL_HOLDER).payload
        lh.probs, _ = output_forward(lh.z, lh.head)
        return lh.probs

    def _train_mask(self) -> np.ndarray:
        mask = self.label_holder.masks["train"]
        q = self.config.sample_rate
        if q >= 1.0:
            return mask
        sub = mask & (self.sample_rng.random(len(mask)) < q)
        if not sub.any():
            sub = mask.copy()
        return sub

    def compute_gradients(self, mask: np.ndarray | None = None) -> Gradients:
        """Backward pass after ``_publish_and_predict(training=True)``."""
        net, cfg = self.network, self.config
        lh, srv = self.label_holder, self.server
        mask = self._train_mask() if mask is None else mask
        loss, d_logits = cross_entropy(lh.probs, lh.labels, mask)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {self.epoch}")
        d_head, d_z = output_backward(d_logits, lh.z, lh.head)
        # publish per-node gradients (undo the 1/|mask| mean) so clipping acts per node
        count = int(mask.sum())
        net.send(self.label_id, SERVER, Phase.GRADIENT_PUBLISH, dpmod.publish(d_z * count, cfg.dp, lh.dp_rng))
        d_z_srv = net.recv(SERVER, Phase.GRADIENT_PUBLISH).payload / count
        d_mlp, d_global = server_backward(d_z_srv, srv.cache, srv.mlp)
        d_locals, d_omega = combine_backward(d_global, srv.received, srv.strategy)
        for hid, d in zip(self.holders, d_locals):
            net.send(SERVER, hid, Phase.GRADIENT_RETURN, d)
        d_gnn, d_h0 = {}, {}
        for hid, h in self.holders.items():
            d = net.recv(hid, Phase.GRADIENT_RETURN).payload
            d_gnn[hid], d_h0[hid] = local_backward(d, h.cache, h.gnn)
        if self.collaborative:
            init = self._init_gradient(d_h0) if cfg.refresh_init == "epoch" else None
        else:
            init = {hid: h.features.T @ d_h0[hid] for hid, h in self.holders.items()}
        return Gradients(loss, d_gnn, d_mlp, d_head, d_omega, init)

    def _init_gradient(self, d_h0: dict):
        """Holders sync dL/dh0 (WeightSync) then run the shared backward."""
        net = self.network
        ids = list(self.holders)
        for i in ids:
            for j in ids:
                if i != j:
                    net.send(i, j, Phase.WEIGHT_SYNC, d_h0[i])
        total = {}
        for j in ids:
            g = d_h0[j].copy()
            for i in ids:
                if i != j:
                    g = g + net.recv(j, Phase.WEIGHT_SYNC, i).payload
            total[j] = g
        return self.session.backward(total[ids[0]])

    def apply_gradients(self, grads: Gradients) -> None:
        lr, l2 = self.config.learning_rate, self.config.l2_reg
        for hid, h in self.holders.items():
            h.gnn.apply(grads.gnn[hid], lr, l2)
        self.server.mlp.apply(grads.mlp, lr, l2)
        if grads.omega is not None:
            for w, g in zip(self.server.strategy.omega, grads.omega):
                w -= lr * (g + l2 * w)
        self.label_holder.head.apply(grads.head, lr, l2)
        if grads.init is None:
            return
        if self.collaborative:
            self.w_shares = update_weight_shares(self.w_shares, grads.init, lr, l2, self.network, self.dealer)
        else:
            for hid, h in self.holders.items():
                h.own_w -= lr * (grads.init[hid] + l2 * h.own_w)

    # --- evaluation --------------------------------------------------------------

    def _accuracies(self, probs: np.ndarray) -> dict:
        lh = self.label_holder
        pred = np.argmax(probs, axis=1)
        return {k: float(np.mean(pred[m] == lh.labels[m])) if m.any() else float("nan")
                for k, m in lh.masks.items()}

    def evaluate(self) -> dict:
        """Eval-mode forward on the current h0 over the evaluation network."""
        probs = self._publish_and_predict(self.eval_network, training=False, rng=self.eval_rng)
        return self._accuracies(probs)

    def predict(self, mask: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        """Fresh CG1 + eval forward; argmax with ties to the lowest class id."""
        self.compute_initial_embeddings(self.eval_network)
        self._local_pass()
        probs = self._publish_and_predict(self.eval_network, training=False, rng=self.eval_rng)
        return predictions_and_accuracy(probs, self.label_holder.labels, mask)

    # --- loop ----------------------------------------------------------------------

    def run_epoch(self, evaluate: bool = True) -> EpochRecord:
        before = self.network.transcript.snapshot()
        if self.collaborative and self.config.refresh_init == "once":
            if not self._h0_fresh:
                self.compute_initial_embeddings()
                self._h0_fresh = True
        else:
            self.compute_initial_embeddings()
        self._local_pass()
        acc = self.evaluate() if evaluate else {"train": math.nan, "val": math.nan, "test": math.nan}
        self._publish_and_predict(self.network, training=True)
        grads = self.compute_gradients()
        self.apply_gradients(grads)
        self.accountant = self.accountant.compose(1, warn=False)
        self.epoch += 1
        delta = self.network.transcript.delta(before)
        return EpochRecord(self.epoch, grads.loss, acc["train"], acc["val"], acc["test"],
                           self.accountant.total, delta["counts"], delta["bytes"])

    def fit(self, epochs: int | None = None) -> list[EpochRecord]:
        epochs = self.config.epochs if epochs is None else epochs
        every = max(1, self.config.eval_every)
        history = []
        for e in range(epochs):
            history.append(self.run_epoch(evaluate=(e % every == 0) or e == epochs - 1))
        if not self.accountant.guard_ok:
            acc = self.accountant
            warnings.warn(f"per-step epsilon {acc.per_step_epsilon} is not below c1*q*sqrt(T) = "
                          f"{acc.c1 * acc.q * math.sqrt(acc.steps):.4g}; the composition bound may not apply",
                          RuntimeWarning, stacklevel=2)
        return history

    def init_weights(self) -> np.ndarray | list[np.ndarray]:
        """Plaintext view of the h0 weights (simulator inspection only)."""
        if self.collaborative:
            return reconstruct_weights(self.w_shares)
        return [h.own_w.copy() for h in self.holders.values()]


def predictions_and_accuracy(probs: np.ndarray, labels: np.ndarray,
                             mask: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    pred = np.argmax(probs, axis=1)
    if mask is None:
        mask = np.ones(len(labels), dtype=bool)
    acc = float(np.mean(pred[mask] == labels[mask])) if mask.any() else float("nan")
    return pred, acc


@dataclass
class TrainResult:
    model: VFGNN
    history: list[EpochRecord]
    final: dict = field(default_factory=dict)

    @property
    def transcript(self) -> Transcript:
        return self.model.network.transcript

    @property
    def test_accuracy(self) -> float:
        return self.final["test"]

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]


def train(graph: PartitionedGraph, config: TrainConfig = TrainConfig(), **kwargs) -> TrainResult:
    """Train and evaluate the final model on train/val/test masks."""
    model = VFGNN(graph, config, **kwargs)
    history = model.fit()
    lh = model.label_holder
    final = {}
    model.compute_initial_embeddings(model.eval_network)
    model._local_pass()
    probs = model._publish_and_predict(model.eval_network, training=False, rng=model.eval_rng)
    for k, m in lh.masks.items():
        final[k] = predictions_and_accuracy(probs, lh.labels, m)[1]
    return TrainResult(model, history, final)


def predict(model: VFGNN, mask: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    return model.predict(mask)


# --- baselines -----------------------------------------------------------------------

def run_baselines(graph: PartitionedGraph, config: TrainConfig) -> dict[str, float]:
    """Test accuracy of isolated holders, the centralized model and VFGNN.

    Isolated and centralized runs are plaintext (no MPC, no DP); the
    centralized run sees the merged master graph, a simulator-only privilege.
    """
    plain = replace(config, init_mode="individual", dp=replace(config.dp, epsilon=math.inf))
    out = {}
    for hid in graph.holders:
        out[f"isolated_{hid}"] = train(graph.holder_view(hid), plain).test_accuracy
    out["federated"] = train(graph, config).test_accuracy
    out["centralized"] = train(single_holder(graph.merge()), plain).test_accuracy
    return out


# --- communication audit ----------------------------------------------------------------

def expected_counts(n_holders: int, epochs: int, config: TrainConfig) -> dict[str, int]:
    """Closed-form message counts for ``epochs`` training epochs (setup included)."""
    n = n_holders
    pairs = n * (n - 1)
    collab = config.init_mode == "collaborative" and n > 1
    rounds = (epochs if config.refresh_init == "epoch" else min(epochs, 1)) if collab else 0
    trains_w = collab and config.refresh_init == "epoch"
    return {
        Phase.SETUP.value: (n - 1) if collab else 0,
        Phase.SHARE_DISTRIBUTION.value: pairs * rounds,
        Phase.BEAVER_REVEAL.value: 2 * pairs * 2 * rounds,
        Phase.RECONSTRUCT.value: pairs * rounds,
        Phase.TRUNCATION.value: (2 * (n - 1) * epochs) if (trains_w and n > 2) else 0,
        Phase.WEIGHT_SYNC.value: pairs * epochs if trains_w else 0,
        Phase.EMBEDDING_PUBLISH.value: n * epochs,
        Phase.HIDDEN_TO_LABEL_HOLDER.value: epochs,
        Phase.GRADIENT_PUBLISH.value: epochs,
        Phase.GRADIENT_RETURN.value: n * epochs,
    }


def expected_bytes(graph: PartitionedGraph, epochs: int, config: TrainConfig) -> dict[str, int]:
    """Closed-form byte totals per phase (8 bytes per float64 or ring element)."""
    n, N, F = graph.num_holders, graph.node_count, graph.feature_dim
    d, z = config.embed_dim, config.hidden[-1]
    c = expected_counts(n, epochs, config)
    pairs = max(n * (n - 1), 1)
    rounds = c[Phase.SHARE_DISTRIBUTION.value] // pairs
    return {
        Phase.SETUP.value: c[Phase.SETUP.value] * F * d * 8,
        Phase.SHARE_DISTRIBUTION.value: rounds * (n - 1) * N * F * 8,
        Phase.BEAVER_REVEAL.value: rounds * n * (n - 1) * 2 * (N * F + F * d) * 8,
        Phase.RECONSTRUCT.value: c[Phase.RECONSTRUCT.value] * N * d * 8,
        Phase.TRUNCATION.value: c[Phase.TRUNCATION.value] * F * d * 8,
        Phase.WEIGHT_SYNC.value: c[Phase.WEIGHT_SYNC.value] * N * d * 8,
        Phase.EMBEDDING_PUBLISH.value: n * N * d * 8 * epochs,
        Phase.HIDDEN_TO_LABEL_HOLDER.value: N * z * 8 * epochs,
        Phase.GRADIENT_PUBLISH.value: N * z * 8 * epochs,
        Phase.GRADIENT_RETURN.value: n * N * d * 8 * epochs,
    }


@dataclass
class AuditReport:
    rows: list[dict]

    @property
    def ok(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def format(self) -> str:
        lines = [f"{'phase':<22}{'quantity':<10}{'expected':>14}{'observed':>14}  status"]
        for r in self.rows:
            lines.append(f"{r['phase']:<22}{r['quantity']:<10}{r['expected']:>14}{r['observed']:>14}  "
                         f"{'ok' if r['ok'] else 'MISMATCH'}")
        return "\n".join(lines)


def comm_audit(transcript: Transcript, graph: PartitionedGraph, epochs: int,
               config: TrainConfig) -> AuditReport:
    """Compare observed per-phase counts (and fixed-size byte totals) to closed forms."""
    rows = []
    for phase, exp in expected_counts(graph.num_holders, epochs, config).items():
        obs = transcript.counts.get(phase, 0)
        rows.append({"phase": phase, "quantity": "messages", "expected": exp, "observed": obs,
                     "ok": exp == obs})
    for phase, exp in expected_bytes(graph, epochs, config).items():
        obs = transcript.bytes.get(phase, 0)
        rows.append({"phase": phase, "quantity": "bytes", "expected": exp, "observed": obs,
                     "ok": exp == obs})
    extra = set(transcript.counts) - {r["phase"] for r in rows}
    for phase in sorted(extra):
        rows.append({"phase": phase, "quantity": "messages", "expected": 0,
                     "observed": transcript.counts[phase], "ok": False})
    return AuditReport(rows)

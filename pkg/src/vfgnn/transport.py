"""Synchronous in-process message layer with an auditable transcript.

Parties never hand each other objects directly: every value that crosses a
party boundary goes through :meth:`Network.send`, which logs it to the
:class:`Transcript` before delivery and optionally runs a locality guard.
"""

from __future__ import annotations

import enum
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

import numpy as np

SERVER = "server"

PartyId = Hashable


class Phase(str, enum.Enum):
    SETUP = "Setup"
    SHARE_DISTRIBUTION = "ShareDistribution"
    BEAVER_REVEAL = "BeaverReveal"
    RECONSTRUCT = "Reconstruct"
    TRUNCATION = "Truncation"
    EMBEDDING_PUBLISH = "EmbeddingPublish"
    HIDDEN_TO_LABEL_HOLDER = "HiddenToLabelHolder"
    GRADIENT_PUBLISH = "GradientPublish"
    GRADIENT_RETURN = "GradientReturn"
    WEIGHT_SYNC = "WeightSync"

    def __str__(self) -> str:
        return self.value


def payload_nbytes(payload: Any) -> int:
    if isinstance(payload, np.ndarray):
        return int(payload.nbytes)
    if isinstance(payload, (list, tuple)):
        return sum(payload_nbytes(p) for p in payload)
    if isinstance(payload, dict):
        return sum(payload_nbytes(p) for p in payload.values())
    if payload is None:
        return 0
    return int(np.asarray(payload).nbytes)


@dataclass
class Message:
    sender: PartyId
    receiver: PartyId
    phase: Phase
    payload: Any = None
    payload_bytes: int = -1

    def __post_init__(self):
        self.phase = Phase(self.phase)
        if self.payload_bytes < 0:
            self.payload_bytes = payload_nbytes(self.payload)


@dataclass
class Transcript:
    """Per-phase message and byte counters, with optional per-epoch snapshots."""

    counts: Counter = field(default_factory=Counter)
    bytes: Counter = field(default_factory=Counter)
    snapshots: list[dict[str, dict[str, int]]] = field(default_factory=list)
    keep_messages: bool = False
    messages: list[Message] = field(default_factory=list)

    def record(self, msg: Message) -> None:
        self.counts[msg.phase.value] += 1
        self.bytes[msg.phase.value] += msg.payload_bytes
        if self.keep_messages:
            self.messages.append(msg)

    def count(self, phase: Phase | str) -> int:
        return self.counts[Phase(phase).value]

    def nbytes(self, phase: Phase | str) -> int:
        return self.bytes[Phase(phase).value]

    def snapshot(self) -> dict[str, dict[str, int]]:
        snap = {"counts": dict(self.counts), "bytes": dict(self.bytes)}
        self.snapshots.append(snap)
        return snap

    def delta(self, since: dict[str, dict[str, int]]) -> dict[str, dict[str, int]]:
        """Counts and bytes accumulated after an earlier snapshot."""
        out = {"counts": {}, "bytes": {}}
        for key in ("counts", "bytes"):
            cur = self.counts if key == "counts" else self.bytes
            for phase, value in cur.items():
                diff = value - since[key].get(phase, 0)
                if diff:
                    out[key][phase] = diff
        return out


class DataLocalityError(RuntimeError):
    """A message would carry private raw data across a party boundary."""


class Network:
    """Mailbox router.  ``send`` logs then enqueues; ``recv`` drains in FIFO order."""

    def __init__(self, transcript: Transcript | None = None,
                 guard: Callable[[Message], None] | None = None):
        self.transcript = transcript if transcript is not None else Transcript()
        self.guard = guard
        self._inbox: dict[tuple[PartyId, Phase], deque[Message]] = defaultdict(deque)

    def send(self, sender: PartyId, receiver: PartyId, phase: Phase | str, payload: Any = None) -> None:
        if sender == receiver:
            raise ValueError("a party does not message itself")
        msg = Message(sender, receiver, Phase(phase), payload)
        self.transcript.record(msg)
        if self.guard is not None:
            self.guard(msg)
        self._inbox[(receiver, msg.phase)].append(msg)

    def recv(self, receiver: PartyId, phase: Phase | str, sender: PartyId | None = None) -> Message:
        box = self._inbox[(receiver, Phase(phase))]
        if not box:
            raise LookupError(f"no pending {Phase(phase)} message for {receiver!r}")
        if sender is None:
            return box.popleft()
        for i, msg in enumerate(box):
            if msg.sender == sender:
                del box[i]
                return msg
        raise LookupError(f"no pending {Phase(phase)} message from {sender!r} to {receiver!r}")

    def pending(self) -> int:
        return sum(len(b) for b in self._inbox.values())


# phases allowed on each kind of link
HOLDER_TO_HOLDER = {Phase.SETUP, Phase.SHARE_DISTRIBUTION, Phase.BEAVER_REVEAL,
                    Phase.RECONSTRUCT, Phase.TRUNCATION, Phase.WEIGHT_SYNC}
HOLDER_TO_SERVER = {Phase.EMBEDDING_PUBLISH, Phase.GRADIENT_PUBLISH}
SERVER_TO_HOLDER = {Phase.HIDDEN_TO_LABEL_HOLDER, Phase.GRADIENT_RETURN}
RING_PHASES = {Phase.SETUP, Phase.SHARE_DISTRIBUTION, Phase.BEAVER_REVEAL,
               Phase.RECONSTRUCT, Phase.TRUNCATION}


class LocalityGuard:
    """Structural check that raw features, edges and labels stay with their holder.

    Server-bound traffic may only be DP-published float matrices; holder-to-holder
    traffic may only be ring-element shares (or the public init-gradient sync).
    Any payload that reproduces a holder's feature columns, edge list or label
    vector is a violation regardless of phase.
    """

    def __init__(self, features: list[np.ndarray], edge_sets: list[np.ndarray],
                 labels: np.ndarray):
        self._columns = set()
        for x in features:
            for col in np.asarray(x, dtype=np.float64).T:
                self._columns.add(col.tobytes())
        self._edges = [np.asarray(e) for e in edge_sets if len(e)]
        self._labels = np.asarray(labels)
        self._n = len(self._labels)
        self.violations: list[str] = []

    def _reproduces_private(self, arr: np.ndarray) -> str | None:
        if arr.dtype.kind in "iub":
            if arr.shape == self._labels.shape and np.array_equal(arr, self._labels):
                return "label vector"
            for e in self._edges:
                if arr.shape == e.shape and np.array_equal(arr, e):
                    return "edge set"
            if arr.dtype.kind in "ib":
                return "raw integer array"
        if arr.dtype.kind == "f" and arr.ndim == 2 and arr.shape[0] == self._n:
            for col in arr.T:
                if np.ascontiguousarray(col, dtype=np.float64).tobytes() in self._columns:
                    return "raw feature column"
        if arr.dtype.kind == "f" and arr.ndim == 1 and arr.shape == self._labels.shape:
            if np.array_equal(arr, self._labels):
                return "label vector"
        return None

    def check(self, msg: Message) -> str | None:
        to_server = msg.receiver == SERVER
        from_server = msg.sender == SERVER
        if to_server and msg.phase not in HOLDER_TO_SERVER:
            return f"phase {msg.phase} not allowed towards the server"
        if from_server and msg.phase not in SERVER_TO_HOLDER:
            return f"phase {msg.phase} not allowed from the server"
        if not to_server and not from_server and msg.phase not in HOLDER_TO_HOLDER:
            return f"phase {msg.phase} not allowed between holders"
        for arr in _arrays(msg.payload):
            if msg.phase in RING_PHASES and arr.dtype != np.uint64:
                return f"{msg.phase} payload is not a ring share ({arr.dtype})"
            what = self._reproduces_private(arr)
            if what is not None:
                return f"{msg.phase} {msg.sender}->{msg.receiver} carries a {what}"
        return None

    def __call__(self, msg: Message) -> None:
        problem = self.check(msg)
        if problem is not None:
            self.violations.append(problem)
            raise DataLocalityError(problem)


def _arrays(payload: Any):
    if isinstance(payload, np.ndarray):
        yield payload
    elif isinstance(payload, (list, tuple)):
        for p in payload:
            yield from _arrays(p)
    elif isinstance(payload, dict):
        for p in payload.values():
            yield from _arrays(p)
    elif payload is not None:
        yield np.asarray(payload)


def scan_transcript(messages: list[Message], guard: LocalityGuard) -> list[str]:
    """Offline variant of the guard over a retained message list."""
    found = []
    for msg in messages:
        problem = guard.check(msg)
        if problem is not None:
            found.append(problem)
    return found

"""Experiment configuration files.

The format is JSON with nested sections.  Non-finite numbers may be written
as the strings ``"inf"``/``"-inf"``; :meth:`ExperimentConfig.to_json` writes
them that way, so files round-trip.  Unknown keys are rejected with the line
on which they appear.

Example::

    {
      "graph": {"sbm": {"blocks": 3, "per_block": 70, "p_in": 0.03, "p_out": 0.015,
                        "feature_dim": 24, "class_signal": 0.5}},
      "partition": {"holders": 2, "proportions": [0.5, 0.5]},
      "train": {"epochs": 300, "learning_rate": 1.0, "embed_dim": 32,
                "dp": {"epsilon": "inf", "mechanism": "gaussian"}},
      "sweep": {"seeds": [0, 1, 2, 3, 4], "epsilons": [4, 64, "inf"]},
      "out": "metrics.jsonl"
    }
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dp import DpParams
from .graph import MasterGraph, PartitionedGraph, generate_sbm, load_graph, vertical_partition
from .protocol import TrainConfig


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


def _num(v, key: str):
    if isinstance(v, str):
        low = v.strip().lower()
        if low in ("inf", "+inf", "infinity"):
            return math.inf
        if low in ("-inf", "-infinity"):
            return -math.inf
        raise ValueError(f"{key}: expected a number, got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{key}: expected a number, got {v!r}")
    return v


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 3
    per_block: int = 70
    p_in: float = 0.03
    p_out: float = 0.015
    feature_dim: int = 24
    class_signal: float = 0.5


@dataclass(frozen=True)
class FileSpec:
    features: str
    edges: str
    labels: str
    masks: str


@dataclass(frozen=True)
class PartitionSpec:
    holders: int = 2
    proportions: tuple[float, ...] | None = None
    edge_proportions: tuple[float, ...] | None = None
    label_holder: int = 0

    def feature_props(self) -> list[float]:
        if self.proportions is not None:
            return list(self.proportions)
        return [1.0 / self.holders] * self.holders


@dataclass(frozen=True)
class SweepSpec:
    seeds: tuple[int, ...] = (0,)
    epsilons: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0, math.inf)
    mechanisms: tuple[str, ...] = ("gaussian", "james_stein")
    holders: tuple[int, ...] = ()
    proportions: tuple[tuple[float, ...], ...] = ()
    combine: tuple[str, ...] = ("concat", "mean", "regression")


@dataclass(frozen=True)
class AuditSpec:
    epochs: int = 1
    inject_fault: str | None = None

    def __post_init__(self):
        if self.inject_fault not in (None, "extra_message"):
            raise ValueError("audit.inject_fault must be null or 'extra_message'")


@dataclass(frozen=True)
class ExperimentConfig:
    sbm: SbmSpec | None = field(default_factory=SbmSpec)
    files: FileSpec | None = None
    partition: PartitionSpec = PartitionSpec()
    train: TrainConfig = TrainConfig(epochs=300, learning_rate=1.0, embed_dim=32)
    sweep: SweepSpec = SweepSpec()
    audit: AuditSpec = AuditSpec()
    out: str | None = None

    # --- graph construction ---------------------------------------------------

    def master_graph(self, seed: int, base: Path | None = None) -> MasterGraph:
        if self.files is not None:
            base = base or Path(".")
            f = self.files
            return load_graph(*(base / p for p in (f.features, f.edges, f.labels, f.masks)))
        s = self.sbm
        return generate_sbm(s.blocks, s.per_block, s.p_in, s.p_out, s.feature_dim, s.class_signal, seed=seed)

    def partitioned(self, seed: int, holders: int | None = None,
                    proportions: list[float] | None = None, base: Path | None = None) -> PartitionedGraph:
        p = self.partition
        if holders is not None and proportions is None:
            proportions = [1.0 / holders] * holders
        props = proportions or p.feature_props()
        edge_props = p.edge_proportions if proportions is None else None
        return vertical_partition(self.master_graph(seed, base), props, edge_props, seed=seed,
                                  label_holder=p.label_holder)

    def train_config(self, seed: int, **overrides) -> TrainConfig:
        return replace(self.train, seed=seed, **overrides)

    # --- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        graph = {"sbm": _plain(self.sbm)} if self.files is None else {"files": _plain(self.files)}
        train = self.train.to_dict()
        train["dp"] = _plain(self.train.dp)
        return _jsonable({
            "graph": graph,
            "partition": _plain(self.partition),
            "train": train,
            "sweep": _plain(self.sweep),
            "audit": _plain(self.audit),
            "out": self.out,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _plain(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[f.name] = v
    return out


# --- parsing -------------------------------------------------------------------------

_SECTIONS = {"graph", "partition", "train", "sweep", "audit", "out"}


class _Locator:
    """Maps a key path back to the line where the key is written."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, key: str, after: int = 0) -> int | None:
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for i in range(after, len(self.lines)):
            if pat.search(self.lines[i]):
                return i + 1
        return None

    def line_of_path(self, path: tuple[str, ...]) -> int | None:
        line = 0
        for key in path:
            found = self.line_of(key, line)
            if found is None:
                return line or None
            line = found - 1
        return line + 1


def _check_keys(section: dict, allowed, path: tuple[str, ...], loc: _Locator) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"'{'.'.join(path)}' must be an object", loc.line_of_path(path))
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key '{'.'.join(path + (k,))}'", loc.line_of_path(path + (k,)))


def _build(cls, data: dict, path: tuple[str, ...], loc: _Locator, convert=None):
    names = {f.name for f in fields(cls)}
    _check_keys(data, names, path, loc)
    kwargs = {}
    for k, v in data.items():
        try:
            kwargs[k] = convert(k, v) if convert else v
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), loc.line_of_path(path + (k,))) from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{'.'.join(path)}: {exc}", loc.line_of_path(path)) from None


def _tuple(v, key, item=lambda x, k: x):
    if not isinstance(v, list):
        raise ValueError(f"{key}: expected a list")
    return tuple(item(x, key) for x in v)


_INT_FIELDS = {"epochs", "depth", "embed_dim", "seed", "frac_bits", "bit_width", "eval_every",
               "blocks", "per_block", "feature_dim", "holders", "label_holder"}


def _scalar(k, v):
    if k in _INT_FIELDS:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"{k}: expected an integer, got {v!r}")
        return v
    if k in ("combine", "init_mode", "refresh_init", "mechanism", "inject_fault",
             "features", "edges", "labels", "masks"):
        if v is not None and not isinstance(v, str):
            raise ValueError(f"{k}: expected a string, got {v!r}")
        return v
    return _num(v, k)


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    """Parse and validate a config document; raises :class:`ConfigError`."""
    try:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
        if not isinstance(raw, dict):
            raise ConfigError("top level must be an object", 1)
        return _parse(raw, _Locator(text))
    except ConfigError as exc:
        if path is not None and exc.path is None:
            raise ConfigError(str(exc).split(": ", 1)[-1] if exc.line else str(exc), exc.line, path) from None
        raise


def _parse(raw: dict, loc: _Locator) -> ExperimentConfig:
    _check_keys(raw, _SECTIONS, (), loc)
    kwargs = {}
    graph = raw.get("graph", {"sbm": {}})
    _check_keys(graph, {"sbm", "files"}, ("graph",), loc)
    if "sbm" in graph and "files" in graph:
        raise ConfigError("graph: give either 'sbm' or 'files', not both", loc.line_of_path(("graph",)))
    if "files" in graph:
        kwargs["files"] = _build(FileSpec, graph["files"], ("graph", "files"), loc, _scalar)
        kwargs["sbm"] = None
    else:
        kwargs["sbm"] = _build(SbmSpec, graph.get("sbm", {}), ("graph", "sbm"), loc, _scalar)

    def part_conv(k, v):
        if k in ("proportions", "edge_proportions"):
            return None if v is None else _tuple(v, k, _num)
        return _scalar(k, v)

    if "partition" in raw:
        kwargs["partition"] = _build(PartitionSpec, raw["partition"], ("partition",), loc, part_conv)

    if "train" in raw:
        t = dict(raw["train"]) if isinstance(raw["train"], dict) else raw["train"]
        _check_keys(t, {f.name for f in fields(TrainConfig)}, ("train",), loc)
        dp = DpParams()
        if "dp" in t:
            dp = _build(DpParams, t.pop("dp"), ("train", "dp"), loc, _scalar)

        def train_conv(k, v):
            if k == "server_hidden":
                return None if v is None else _tuple(v, k, lambda x, kk: _scalar("embed_dim", x))
            return _scalar(k, v)

        base = ExperimentConfig().train
        merged = _build(TrainConfig, {**{f.name: getattr(base, f.name) for f in fields(TrainConfig)
                                         if f.name not in ("dp",)}, **t}, ("train",), loc, train_conv)
        kwargs["train"] = replace(merged, dp=dp)

    def sweep_conv(k, v):
        if k == "seeds":
            return _tuple(v, k, lambda x, kk: _scalar("seed", x))
        if k == "holders":
            return _tuple(v, k, lambda x, kk: _scalar("holders", x))
        if k == "epsilons":
            return _tuple(v, k, _num)
        if k in ("mechanisms", "combine"):
            return _tuple(v, k, lambda x, kk: _scalar("mechanism", x))
        if k == "proportions":
            return _tuple(v, k, lambda x, kk: _tuple(x, kk, _num))
        raise ValueError(k)

    if "sweep" in raw:
        sweep = _build(SweepSpec, raw["sweep"], ("sweep",), loc, sweep_conv)
        if not sweep.seeds:
            raise ConfigError("sweep.seeds must be nonempty", loc.line_of_path(("sweep", "seeds")))
        kwargs["sweep"] = sweep
    if "audit" in raw:
        kwargs["audit"] = _build(AuditSpec, raw["audit"], ("audit",), loc, _scalar)
    if "out" in raw:
        if raw["out"] is not None and not isinstance(raw["out"], str):
            raise ConfigError("out must be a path string", loc.line_of_path(("out",)))
        kwargs["out"] = raw["out"]
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(p)) from None
    return parse_config(text, str(p))

"""Experiment runner: ``vfgnn {train,compare,dp-sweep,comm-audit}``.

Exit codes: 0 success, 1 runtime error or failed audit, 2 usage/config error.
Metrics are JSON lines, one record per epoch per run.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, _jsonable, load_config
from .graph import GraphFormatError
from .protocol import VFGNN, comm_audit, run_baselines, train
from .transport import SERVER, DataLocalityError, Phase

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Ctx:
    def __init__(self, args, cfg: ExperimentConfig, base: Path):
        self.args = args
        self.cfg = cfg
        self.base = base
        self.quiet = args.quiet

    @property
    def seeds(self) -> tuple[int, ...]:
        return (self.args.seed,) if self.args.seed is not None else self.cfg.sweep.seeds

    def out_path(self, default: str) -> Path:
        if self.args.out:
            return Path(self.args.out)
        if self.cfg.out:
            return self.base / self.cfg.out
        return Path(default)

    def say(self, text: str = "") -> None:
        if not self.quiet:
            print(text)


def _dumps(record: dict) -> str:
    return json.dumps(_jsonable(record), sort_keys=False, allow_nan=False)


def metrics_records(run_id: str, seed: int, history) -> list[dict]:
    return [{
        "run_id": run_id, "seed": seed, "epoch": r.epoch,
        "train_acc": r.train_acc, "val_acc": r.val_acc, "test_acc": r.test_acc,
        "loss": r.loss, "epsilon_spent": r.epsilon_spent,
        "messages": dict(sorted(r.messages.items())), "bytes": dict(sorted(r.bytes.items())),
    } for r in history]


def _mean_std(values) -> str:
    a = np.asarray(values, dtype=float)
    return f"{a.mean():.3f}±{a.std():.3f}"


def _plot(path: Path, series: dict, xlabel: str, ylabel: str, xticks=None) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o" if len(xs) < 20 else None, label=name)
    if xticks is not None:
        ax.set_xticks(range(len(xticks)))
        ax.set_xticklabels(xticks)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# --- subcommands -------------------------------------------------------------------

def cmd_train(ctx: _Ctx) -> int:
    out = ctx.out_path("metrics.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    curves = {}
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for seed in ctx.seeds:
            graph = ctx.cfg.partitioned(seed, base=ctx.base)
            res = train(graph, ctx.cfg.train_config(seed))
            run_id = f"train-seed{seed}"
            for rec in metrics_records(run_id, seed, res.history):
                fh.write(_dumps(rec) + "\n")
            fh.flush()
            curves[run_id] = ([r.epoch for r in res.history], [r.test_acc for r in res.history])
            ctx.say(f"{run_id}: loss {res.history[-1].loss:.4f}  "
                    f"train {res.final['train']:.3f}  val {res.final['val']:.3f}  test {res.final['test']:.3f}  "
                    f"epsilon' {res.model.accountant.total:.4g}")
    ctx.say(f"metrics written to {out}")
    if ctx.args.plot:
        _plot(Path(ctx.args.plot), curves, "epoch", "test accuracy")
    return EXIT_OK


def _combine_label(kind: str) -> str:
    return {"concat": "VFGNN_C", "mean": "VFGNN_M", "regression": "VFGNN_R"}[kind]


def _compare_one(ctx: _Ctx, seed: int, props: list[float] | None, holders: int | None = None) -> dict:
    cfg = ctx.cfg
    graph = cfg.partitioned(seed, holders=holders, proportions=props, base=ctx.base)
    base = cfg.train_config(seed)
    row = run_baselines(graph, replace(base, combine="mean"))
    out = {f"isolated_{i + 1}": row[f"isolated_{hid}"] for i, hid in enumerate(graph.holders)}
    for kind in cfg.sweep.combine:
        out[_combine_label(kind)] = row["federated"] if kind == "mean" else \
            train(graph, replace(base, combine=kind)).test_accuracy
    out["centralized"] = row["centralized"]
    return out


def cmd_compare(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    out = ctx.out_path("compare.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    records = []
    prop_sets = [list(p) for p in cfg.sweep.proportions] or [cfg.partition.feature_props()]
    tables = []
    for props in prop_sets:
        per_seed = [_compare_one(ctx, s, props) for s in ctx.seeds]
        label = ":".join(f"{round(10 * p)}" for p in props)
        for s, r in zip(ctx.seeds, per_seed):
            records.append({"run_id": f"compare-{label}", "seed": s, "proportions": props, "accuracy": r})
        tables.append((label, per_seed))
    ctx.say(f"{'model':<14}" + "".join(f"{lab:>16}" for lab, _ in tables))
    for key in tables[0][1][0]:
        cells = "".join(f"{_mean_std([r[key] for r in rows]) if key in rows[0] else '-':>16}"
                        for _, rows in tables)
        ctx.say(f"{key:<14}{cells}")

    if cfg.sweep.holders:
        means = []
        ctx.say("\nholders  VFGNN_M")
        for n in cfg.sweep.holders:
            accs = []
            for s in ctx.seeds:
                g = cfg.partitioned(s, holders=n, base=ctx.base)
                accs.append(train(g, replace(cfg.train_config(s), combine="mean")).test_accuracy)
                records.append({"run_id": f"compare-holders{n}", "seed": s, "holders": n,
                                "accuracy": {"VFGNN_M": accs[-1]}})
            means.append(float(np.mean(accs)))
            ctx.say(f"{n:>7}  {_mean_std(accs)}")
        trend = all(b <= a for a, b in zip(means, means[1:]))
        ctx.say(f"non-increasing in holder count: {'yes' if trend else 'NO'}")
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps(rec) + "\n")
    return EXIT_OK


def _fmt_eps(e: float) -> str:
    return "inf" if math.isinf(e) else f"{e:g}"


def cmd_dp_sweep(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    eps_list = list(cfg.sweep.epsilons)
    if not eps_list:
        raise ConfigError("sweep.epsilons must be nonempty")
    out = ctx.out_path("dp_sweep.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    means: dict[str, list[float]] = {}
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for mech in cfg.sweep.mechanisms:
            row = []
            for eps in eps_list:
                accs = []
                for s in ctx.seeds:
                    tc = cfg.train_config(s)
                    tc = replace(tc, dp=replace(tc.dp, epsilon=eps, mechanism=mech))
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        res = train(cfg.partitioned(s, base=ctx.base), tc)
                    accs.append(res.test_accuracy)
                    fh.write(_dumps({"run_id": f"dp-{mech}-eps{_fmt_eps(eps)}", "seed": s, "mechanism": mech,
                                     "epsilon": eps, "test_acc": res.test_accuracy,
                                     "epsilon_spent": res.model.accountant.total}) + "\n")
                row.append(float(np.mean(accs)))
            means[mech] = row
    ctx.say(f"{'mechanism':<14}" + "".join(f"{_fmt_eps(e):>9}" for e in eps_list))
    for mech, row in means.items():
        ctx.say(f"{mech:<14}" + "".join(f"{a:>9.3f}" for a in row))
    for mech, row in means.items():
        if any(b < a for a, b in zip(row, row[1:])):
            ctx.say(f"warning: {mech} accuracy is not non-decreasing in epsilon")
    if "gaussian" in means and "james_stein" in means:
        for e, g, j in zip(eps_list, means["gaussian"], means["james_stein"]):
            if j < g:
                ctx.say(f"warning: James-Stein below Gaussian at epsilon={_fmt_eps(e)} ({j:.3f} < {g:.3f})")
    if ctx.args.plot:
        ticks = [_fmt_eps(e) for e in eps_list]
        _plot(Path(ctx.args.plot), {m: (list(range(len(r))), r) for m, r in means.items()},
              "epsilon", "test accuracy", ticks)
    return EXIT_OK


def cmd_comm_audit(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    epochs = cfg.audit.epochs
    seed = ctx.seeds[0]
    graph = cfg.partitioned(seed, base=ctx.base)
    tc = replace(cfg.train_config(seed), epochs=epochs)
    model = VFGNN(graph, tc)
    model.fit()
    if cfg.audit.inject_fault == "extra_message":
        hid = graph.holders[0]
        model.network.send(hid, SERVER, Phase.EMBEDDING_PUBLISH, model.holders[hid].embeddings)
    report = comm_audit(model.network.transcript, graph, epochs, tc)
    ctx.say(f"holders={graph.num_holders} N={graph.node_count} F={graph.feature_dim} "
            f"d={tc.embed_dim} epochs={epochs} init={tc.init_mode}/{tc.refresh_init}")
    ctx.say(report.format())
    if not report.ok:
        print("communication audit: MISMATCH", file=sys.stderr)
        return EXIT_RUNTIME
    ctx.say("communication audit: all phases match")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "dp-sweep": cmd_dp_sweep,
            "comm-audit": cmd_comm_audit}


def _common(suppress: bool) -> argparse.ArgumentParser:
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="experiment config (JSON); defaults built in", **kw)
    p.add_argument("--seed", type=int, help="run a single seed instead of sweep.seeds", **kw)
    p.add_argument("--out", metavar="PATH", help="metrics output (JSON lines)", **kw)
    p.add_argument("--quiet", action="store_true", help="suppress console tables", **kw)
    p.add_argument("--plot", metavar="SVG", help="write an SVG accuracy plot (train, dp-sweep)", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    """Global flags are accepted before or after the subcommand."""
    parser = argparse.ArgumentParser(prog="vfgnn", description="Vertically federated GNN simulator",
                                     parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    late = _common(True)
    sub.add_parser("train", parents=[late], help="train and write per-epoch metrics")
    sub.add_parser("compare", parents=[late], help="isolated / federated / centralized table")
    sub.add_parser("dp-sweep", parents=[late], help="accuracy vs epsilon per DP mechanism")
    sub.add_parser("comm-audit", parents=[late], help="check message counts against closed forms")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
            base = Path(args.config).resolve().parent
        else:
            cfg = ExperimentConfig()
            base = Path(".")
        return COMMANDS[args.command](_Ctx(args, cfg, base))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphFormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataLocalityError as exc:
        print(f"data locality violation: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

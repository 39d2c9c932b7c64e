"""Command-line harness: data generation, training runs, transfer
benchmarking and partitioning comparison, reporting JSON metrics.

Subcommands:
    generate              write a random dynamic graph as an edge list
    train                 run distributed training, emit a run report
    bench-transfer        naive vs graph-difference transfer cost table
    compare-partitioning  snapshot vs vertex partitioning volume table

Reports are versioned JSON; every derived number in a report is
recomputable from the ledger counters embedded next to it.  Exit codes:
0 success, 2 configuration error, 1 runtime error.

A JSON config file (--config) may supply any of the keys
{model, workers, blocks, epochs, theta, window, edge_life, seed, lr,
layers, hidden, embed, scheduler}; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
import time

import numpy as np

from . import __version__
from .delta import naive_cost, stream_block, TransferLedger
from .dist import compare_partitioning_report, plan_snapshot_partition, train_distributed
from .dtdg import generate_random_dtdg, read_edge_list, write_edge_list
from .errors import ConfigError, DtgnnError
from .models import ModelConfig
from .training import prepare_training_data, sample_link_prediction_sets

REPORT_SCHEMA = "dtgnn.report/1"
PARAMS_MAGIC = b"DGNN"
PARAMS_VERSION = 1

_CONFIG_KEYS = (
    "model", "workers", "blocks", "epochs", "theta", "window",
    "edge_life", "seed", "lr", "layers", "hidden", "embed", "scheduler",
)

_DEFAULTS = {
    "workers": 1,
    "blocks": 1,
    "epochs": 10,
    "theta": 0.1,
    "window": 2,
    "edge_life": 2,
    "seed": 0,
    "lr": 0.01,
    "layers": 2,
    "hidden": 6,
    "embed": 6,
    "scheduler": "round-robin",
}


def save_params(params: dict, path) -> None:
    """Versioned little-endian binary dump of the parameter matrices."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<HI", PARAMS_VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_params(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != PARAMS_MAGIC:
            raise DtgnnError(f"{path}: not a parameter dump")
        version, count = struct.unpack("<HI", fh.read(6))
        if version != PARAMS_VERSION:
            raise DtgnnError(f"{path}: unsupported dump version {version}")
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            params[name] = data.astype(np.float64)
        return params


def _pythonify(obj):
    """Convert numpy scalars/arrays so the report serializes as plain JSON."""
    if isinstance(obj, dict):
        return {str(k): _pythonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pythonify(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _emit(report: dict, report_path, summary: str) -> None:
    payload = json.dumps(_pythonify(report), indent=2, sort_keys=True)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        print(summary)
    else:
        print(payload)


def _merge_config(args) -> dict:
    """Layer defaults < config file < explicit flags."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "model" not in merged or merged["model"] is None:
        raise ConfigError("a model must be given (--model or config file)")
    return merged


def _model_config(opts: dict) -> ModelConfig:
    return ModelConfig(
        architecture=opts["model"],
        in_features=2,
        hidden_features=int(opts["hidden"]),
        embed_features=int(opts["embed"]),
        layers=int(opts["layers"]),
        window=int(opts["window"]),
        edge_life=int(opts["edge_life"]),
    )


def _config_echo(opts: dict, graph) -> dict:
    echo = {k: opts[k] for k in _CONFIG_KEYS if k in opts}
    echo["num_vertices"] = graph.num_vertices
    echo["num_timesteps"] = graph.num_timesteps
    return echo


def cmd_generate(args) -> int:
    if args.density <= 0:
        raise ConfigError(f"--density must be positive, got {args.density}")
    g = generate_random_dtdg(args.timesteps, args.vertices, args.density, args.seed)
    write_edge_list(g, args.out)
    print(f"wrote {g.total_nnz()} records ({g.num_timesteps} snapshots, "
          f"{g.num_vertices} vertices) to {args.out}")
    return 0


def cmd_train(args) -> int:
    opts = _merge_config(args)
    graph = read_edge_list(args.data)
    if graph.num_timesteps < 2:
        raise ConfigError("training needs at least two snapshots (final one is held out)")
    cfg = _model_config(opts)
    # validate divisibility up front so errors name the constraint
    plan_snapshot_partition(graph.num_timesteps, int(opts["workers"]), int(opts["blocks"]))

    t0 = time.perf_counter()
    train_labels, test_labels = sample_link_prediction_sets(
        graph, float(opts["theta"]), int(opts["seed"]) + 1000003
    )
    data = prepare_training_data(cfg, graph)
    t_prep = time.perf_counter() - t0

    t0 = time.perf_counter()
    trace, params, comm, transfer, act = train_distributed(
        cfg, data, train_labels, test_labels,
        epochs=int(opts["epochs"]), seed=int(opts["seed"]),
        workers=int(opts["workers"]), nblk=int(opts["blocks"]),
        scheduler=opts["scheduler"], lr=float(opts["lr"]),
    )
    t_train = time.perf_counter() - t0

    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "command": "train",
        "config": _config_echo(opts, graph),
        "epochs": trace,
        "comm": comm.as_dict(),
        "transfer": transfer.as_dict(),
        "activation_peak": act.peak,
        "timing": {"preprocess_seconds": t_prep, "train_seconds": t_train},
    }
    if args.params_out:
        save_params(params, args.params_out)
        report["params_out"] = args.params_out
    last = trace[-1] if trace else None
    summary = (
        f"trained {opts['model']} for {len(trace)} epochs"
        + (f", final loss {last['loss']:.6f}, test accuracy {last['test_accuracy']}" if last else "")
        + (f"; report -> {args.report}" if args.report else "")
    )
    _emit(report, args.report, summary)
    return 0


def cmd_bench_transfer(args) -> int:
    opts = _merge_config(args)
    graph = read_edge_list(args.data)
    cfg = _model_config(opts)
    workers = int(opts["workers"])
    nblk = int(opts["blocks"])
    plan = plan_snapshot_partition(graph.num_timesteps, workers, nblk)

    t0 = time.perf_counter()
    data = prepare_training_data(cfg, graph)
    base = naive_cost(data.laps)
    gd = TransferLedger()
    for b in range(plan.nblk):
        for p in range(workers):
            for _ in stream_block([data.laps[t] for t in plan.steps_of(p, b)], gd):
                pass
    elapsed = time.perf_counter() - t0

    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "command": "bench-transfer",
        "config": _config_echo(opts, graph),
        "base": base.as_dict(),
        "gd": gd.as_dict(),
        "expected_delta_fraction": (plan.bsize - workers) / plan.bsize,
        "index_entry_ratio": (
            gd.index_entries_sent / base.index_entries_sent if base.index_entries_sent else 0.0
        ),
        "timing": {"bench_seconds": elapsed},
    }
    summary = (
        f"base index entries {base.index_entries_sent}, gd {gd.index_entries_sent} "
        f"(ratio {report['index_entry_ratio']:.3f})"
        + (f"; report -> {args.report}" if args.report else "")
    )
    _emit(report, args.report, summary)
    return 0


def cmd_compare_partitioning(args) -> int:
    opts = _merge_config(args)
    graph = read_edge_list(args.data)
    cfg = _model_config(opts)
    try:
        worker_counts = [int(x) for x in args.workers_list.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--workers-list must be comma-separated integers, got {args.workers_list!r}")
    if not worker_counts:
        raise ConfigError("--workers-list must name at least one worker count")

    t0 = time.perf_counter()
    data = prepare_training_data(cfg, graph)
    rows = compare_partitioning_report(data.graph, cfg, worker_counts)
    elapsed = time.perf_counter() - t0

    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "command": "compare-partitioning",
        "config": _config_echo(opts, graph),
        "rows": rows,
        "timing": {"compare_seconds": elapsed},
    }
    summary = "; ".join(
        f"P={r['workers']}: snapshot {r['snapshot_units']:.0f} vs vertex {r['vertex_units']}"
        for r in rows
    ) + (f"; report -> {args.report}" if args.report else "")
    _emit(report, args.report, summary)
    return 0


def _add_model_flags(p: argparse.ArgumentParser, with_training: bool):
    p.add_argument("--model", choices=("tm-gcn", "cd-gcn", "egcn-o"), default=None,
                   help="architecture to run")
    p.add_argument("--workers", type=int, default=None, help="simulated worker count P")
    p.add_argument("--blocks", type=int, default=None, help="gradient-checkpoint block count")
    p.add_argument("--window", type=int, default=None, help="temporal averaging window w")
    p.add_argument("--edge-life", dest="edge_life", type=int, default=None,
                   help="edge-life smoothing length l")
    p.add_argument("--layers", type=int, default=None, help="layer count")
    p.add_argument("--hidden", type=int, default=None, help="intermediate feature length")
    p.add_argument("--embed", type=int, default=None, help="embedding length")
    p.add_argument("--seed", type=int, default=None, help="run seed")
    p.add_argument("--config", default=None, help="JSON config file (flags win)")
    p.add_argument("--report", default=None, help="write the JSON report here")
    if with_training:
        p.add_argument("--epochs", type=int, default=None, help="training epochs")
        p.add_argument("--theta", type=float, default=None,
                       help="fraction of edges sampled as positives")
        p.add_argument("--lr", type=float, default=None, help="Adam learning rate")
        p.add_argument("--scheduler", choices=("round-robin", "threads"), default=None,
                       help="simulated worker scheduler")
        p.add_argument("--params-out", dest="params_out", default=None,
                       help="dump final parameters to this binary file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtgnn",
        description="Desk-scale dynamic-GNN training engine with exact cost ledgers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random dynamic graph as an edge list")
    g.add_argument("--timesteps", type=int, required=True, help="snapshot count T")
    g.add_argument("--vertices", type=int, required=True, help="vertex count N")
    g.add_argument("--density", type=float, required=True, help="edges per vertex f (m = N*f)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output edge-list path")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on an edge-list graph")
    t.add_argument("--data", required=True, help="edge-list input path")
    _add_model_flags(t, with_training=True)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench-transfer", help="naive vs graph-difference transfer cost")
    b.add_argument("--data", required=True, help="edge-list input path")
    _add_model_flags(b, with_training=False)
    b.set_defaults(func=cmd_bench_transfer)

    c = sub.add_parser("compare-partitioning", help="snapshot vs vertex partitioning volumes")
    c.add_argument("--data", required=True, help="edge-list input path")
    c.add_argument("--workers-list", dest="workers_list", default="2,4,8",
                   help="comma-separated worker counts")
    _add_model_flags(c, with_training=False)
    c.set_defaults(func=cmd_compare_partitioning)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DtgnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

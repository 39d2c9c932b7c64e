"""Deterministic simulated multi-worker execution.

Snapshot partitioning: each worker owns a contiguous run of bsize/P
timesteps inside every checkpoint block.  Graph convolutions run locally at
the timestep owners (communication free); the temporal operator runs on
contiguous vertex chunks after an all-to-all redistribution, and a second
all-to-all restores snapshot-major layout for the next layer.  Backward
mirrors the forward with two gradient redistributions per layer; the
checkpoint rerun repeats the forward exchanges (tagged separately in the
ledger).  The weight-evolution architecture never redistributes features:
every worker evolves the (tiny) weight chain locally and a single gradient
all-reduce ends the epoch.

Workers are simulated participants exchanging immutable numpy messages
through coordinator-driven phases; every phase boundary is a barrier.  Two
schedulers are provided (round-robin and genuinely threaded) and must
produce identical ledgers and gradients.  The vertex-partitioning baseline
(greedy BFS clustering standing in for a hypergraph partitioner) is
implemented only for communication-volume comparison.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import single_thread_blas, spmm, spmm_transpose
from .delta import TransferLedger, stream_block
from .dtdg import DynamicGraph
from .errors import ConfigError, ProtocolError
from .models import (
    ModelConfig,
    init_params,
    lstm_params_from,
    matrix_lstm_params_from,
    model_forward,
    parameter_count,
)
from .training import (
    ActivationLedger,
    LabelSet,
    TrainingData,
    zeros_like_params,
    adam_step,
    block_loss,
    block_loss_grads,
    evaluate_link_prediction,
    evolve_chain_backward,
    evolve_chain_forward,
    init_adam,
    lstm_block_backward,
    lstm_block_forward,
    mprod_block_backward,
    mprod_block_forward,
    plain_gcn_bwd_t,
    plain_gcn_fwd_t,
    skip_gcn_bwd_t,
    skip_gcn_fwd_t,
)

__all__ = [
    "CommLedger",
    "SnapshotPartition",
    "VertexPartition",
    "VolumeReport",
    "plan_snapshot_partition",
    "redistribute_to_vertex_major",
    "redistribute_to_snapshot_major",
    "distributed_epoch",
    "train_distributed",
    "partition_vertices_greedy",
    "vertex_comm_volume",
    "compare_partitioning_report",
    "SCHEDULERS",
]

SCHEDULERS = ("round-robin", "threads")


@dataclass
class CommLedger:
    """Exact counters of inter-worker traffic.

    redistribution_units counts feature vectors (embedding rows) moved
    between distinct workers; self-chunks are never charged.  Every
    all-to-all is also recorded as an event with its phase tag so tests can
    check the per-exchange volume law.
    """

    redistribution_units: int = 0
    all_reduce_scalars: int = 0
    messages: int = 0
    events: list = field(default_factory=list)

    def record_alltoall(self, units: int, messages: int, phase: str, block: int, layer: int):
        self.redistribution_units += units
        self.messages += messages
        self.events.append(
            {"kind": "alltoall", "phase": phase, "block": block, "layer": layer, "units": units}
        )

    def record_allreduce(self, scalars: int, workers: int):
        self.all_reduce_scalars += scalars
        if workers > 1:
            self.messages += workers - 1
        self.events.append({"kind": "allreduce", "scalars": scalars})

    def alltoall_events(self, phase=None):
        evs = [e for e in self.events if e["kind"] == "alltoall"]
        if phase is not None:
            evs = [e for e in evs if e["phase"] == phase]
        return evs

    def as_dict(self) -> dict:
        return {
            "redistribution_units": self.redistribution_units,
            "all_reduce_scalars": self.all_reduce_scalars,
            "messages": self.messages,
            "alltoall_count": len(self.alltoall_events()),
        }


@dataclass(frozen=True)
class SnapshotPartition:
    """Block-wise snapshot ownership: inside block b, worker p owns the p-th
    contiguous run of bsize/P timesteps."""

    num_timesteps: int
    workers: int
    nblk: int

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if self.nblk < 1 or self.num_timesteps % self.nblk != 0:
            raise ConfigError(
                f"block count {self.nblk} must divide the timeline length {self.num_timesteps}"
            )
        if self.bsize % self.workers != 0:
            raise ConfigError(
                f"worker count {self.workers} must divide the block size {self.bsize}"
            )

    @property
    def bsize(self) -> int:
        return self.num_timesteps // self.nblk

    @property
    def chunk(self) -> int:
        return self.bsize // self.workers

    def owner_of(self, t: int) -> int:
        return (t % self.bsize) // self.chunk

    def block_steps(self, b: int) -> list:
        return list(range(b * self.bsize, (b + 1) * self.bsize))

    def steps_of(self, p: int, b: int) -> list:
        start = b * self.bsize + p * self.chunk
        return list(range(start, start + self.chunk))


def plan_snapshot_partition(num_timesteps: int, workers: int, nblk: int) -> SnapshotPartition:
    return SnapshotPartition(num_timesteps, workers, nblk)


def _vertex_chunks(n: int, workers: int) -> list:
    if n % workers != 0:
        raise ConfigError(f"worker count {workers} must divide the vertex count {n}")
    k = n // workers
    return [(q * k, (q + 1) * k) for q in range(workers)]


def redistribute_to_vertex_major(frames: dict, plan: SnapshotPartition, ledger: CommLedger,
                                 phase: str = "forward", block: int = -1, layer: int = -1):
    """All-to-all from snapshot-major frames at their timestep owners to
    per-worker vertex-chunk rows.  Worker q receives rows V_q of every
    frame; self-chunks are uncharged."""
    if not frames:
        raise ProtocolError("redistribution requires at least one frame")
    n = next(iter(frames.values())).shape[0]
    chunks = _vertex_chunks(n, plan.workers)
    out = {q: {} for q in range(plan.workers)}
    units = 0
    message_pairs = set()
    for t in sorted(frames):
        p = plan.owner_of(t)
        frame = frames[t]
        if frame.shape[0] != n:
            raise ProtocolError(f"frame at step {t} has {frame.shape[0]} rows, expected {n}")
        for q, (lo, hi) in enumerate(chunks):
            out[q][t] = frame[lo:hi]
            if q != p:
                units += hi - lo
                message_pairs.add((p, q))
    ledger.record_alltoall(units, len(message_pairs), phase, block, layer)
    return out


def redistribute_to_snapshot_major(rows_by_worker: dict, plan: SnapshotPartition, ledger: CommLedger,
                                   phase: str = "forward", block: int = -1, layer: int = -1):
    """Exact inverse of redistribute_to_vertex_major: reassemble full frames
    at their timestep owners from the per-worker vertex chunks."""
    if len(rows_by_worker) != plan.workers:
        raise ProtocolError(
            f"expected chunks from {plan.workers} workers, got {len(rows_by_worker)}"
        )
    ts = sorted(rows_by_worker[0])
    for q in range(plan.workers):
        if sorted(rows_by_worker[q]) != ts:
            raise ProtocolError(f"worker {q} is missing vertex chunks")
    frames = {}
    units = 0
    message_pairs = set()
    for t in ts:
        p = plan.owner_of(t)
        parts = []
        for q in range(plan.workers):
            rows = rows_by_worker[q][t]
            parts.append(rows)
            if q != p:
                units += rows.shape[0]
                message_pairs.add((q, p))
        frames[t] = np.vstack(parts)
    ledger.record_alltoall(units, len(message_pairs), phase, block, layer)
    return frames


# ---------------------------------------------------------------------------
# simulated worker


class _Worker:
    """One simulated participant.  Owns a contiguous vertex chunk for the
    temporal operator and a per-block run of timesteps for the graph
    convolutions; mutates only its own state between barriers."""

    def __init__(self, wid, cfg, data, params, plan, vchunk, labels, scale):
        self.wid = wid
        self.cfg = cfg
        self.data = data
        self.params = params
        self.plan = plan
        self.vlo, self.vhi = vchunk
        self.labels = labels
        self.scale = scale
        self.arch = cfg.architecture
        self.dims = cfg.layer_dims()
        self.layers = len(self.dims)

        self.transfer = TransferLedger()
        self.grads = zeros_like_params(params)
        self.rnn_state = self._initial_state()
        self.trailing_rows = [dict() for _ in range(self.layers)]
        self.dtrailing_rows = [dict() for _ in range(self.layers)]
        self.dstate = self._zero_state_grads()
        self.pi = {}

        # per-block scratch
        self.block_ts = []
        self.local_laps = {}
        self.x_snap = {}
        self.z_final = {}
        self.caches = None
        self.keep_cache = False
        self.active_state = None
        self.dcur = {}
        self.dy_frames = {}

    # -- state helpers ------------------------------------------------

    def _rows(self) -> int:
        return self.vhi - self.vlo

    def _initial_state(self):
        states = []
        for layer, dim in enumerate(self.dims):
            if self.arch == "cd-gcn":
                states.append((np.zeros((self._rows(), dim.out)), np.zeros((self._rows(), dim.out))))
            elif self.arch == "egcn-o":
                states.append(self.params[f"evolve{layer}.w0"])
            else:
                states.append(None)
        return states

    def _zero_state_grads(self):
        grads = []
        for layer, dim in enumerate(self.dims):
            if self.arch == "cd-gcn":
                grads.append((np.zeros((self._rows(), dim.out)), np.zeros((self._rows(), dim.out))))
            elif self.arch == "egcn-o":
                grads.append(np.zeros_like(self.params[f"evolve{layer}.w0"]))
            else:
                grads.append(None)
        return grads

    # -- phases ---------------------------------------------------------

    def begin_block(self, b: int, keep_cache: bool):
        """Stream the block's snapshot chunk through the delta codec (the
        first snapshot of the chunk travels in full, the rest as diffs) and
        reset per-block scratch."""
        self.block_ts = self.plan.steps_of(self.wid, b)
        self.keep_cache = keep_cache
        self.local_laps = {}
        for t, lap in zip(
            self.block_ts,
            stream_block([self.data.laps[t] for t in self.block_ts], self.transfer),
        ):
            self.local_laps[t] = lap
        self.x_snap = {}
        self.caches = [dict() for _ in range(self.layers)] if keep_cache else None
        if keep_cache:  # checkpoint rerun: resume from pi_{b-1}
            self.active_state = list(self.pi[b - 1]) if b > 0 else self._initial_state()
        else:  # forward sweep: continue the sequential carry
            self.active_state = list(self.rnn_state)

    def gcn_forward(self, b: int, layer: int):
        out = {}
        if self.arch == "egcn-o":
            cell = matrix_lstm_params_from(self.params, layer)
            all_ts = self.plan.block_steps(b)
            w_by_t, w_last, ev_cache = evolve_chain_forward(cell, self.active_state[layer], all_ts)
            self.active_state[layer] = w_last
            if self.keep_cache:
                self.caches[layer]["evolve"] = ev_cache
                self.caches[layer]["w_by_t"] = w_by_t
            gcn_cache = {}
            for t in self.block_ts:
                s = self.data.s1[t] if layer == 0 else spmm(self.local_laps[t], self.x_snap[t])
                y, cache_t = plain_gcn_fwd_t(s, w_by_t[t])
                out[t] = y
                gcn_cache[t] = cache_t
            if self.keep_cache:
                self.caches[layer]["gcn"] = gcn_cache
            return out
        w = self.params[f"gcn{layer}.w"]
        gcn_cache = {}
        for t in self.block_ts:
            s = self.data.s1[t] if layer == 0 else spmm(self.local_laps[t], self.x_snap[t])
            if self.arch == "cd-gcn":
                y, cache_t = skip_gcn_fwd_t(s, w)
            else:
                y, cache_t = plain_gcn_fwd_t(s, w)
            out[t] = y
            gcn_cache[t] = cache_t
        if self.keep_cache:
            self.caches[layer]["gcn"] = gcn_cache
        return out

    def rnn_forward(self, b: int, layer: int, rows_in: dict):
        all_ts = self.plan.block_steps(b)
        if self.arch == "tm-gcn":
            frames = dict(self.trailing_rows[layer])
            frames.update(rows_in)
            zs = mprod_block_forward(self.data.m_matrix, all_ts, frames)
            keep = min(self.data.m_matrix.window, len(all_ts))
            for t in all_ts[-keep:]:
                self.trailing_rows[layer][t] = rows_in[t]
            return zs
        cell = lstm_params_from(self.params, layer)
        ys, state, cache = lstm_block_forward(cell, self.active_state[layer], all_ts, rows_in)
        self.active_state[layer] = state
        if self.keep_cache:
            self.caches[layer]["lstm"] = cache
        self.trailing_rows[layer][all_ts[-1]] = ys[all_ts[-1]]
        return ys

    def set_layer_input(self, b: int, layer: int, frames_own: dict):
        self.x_snap = frames_own
        if layer == self.layers - 1:
            self.z_final = frames_own

    def block_loss(self, b: int):
        return block_loss(self.cfg, self.params, self.z_final, self.labels, self.block_ts)

    def store_pi(self, b: int):
        self.rnn_state = list(self.active_state)
        self.pi[b] = list(self.active_state)

    def loss_grads(self, b: int):
        dz, dhw, dhb = block_loss_grads(
            self.cfg, self.params, self.z_final, self.labels, self.block_ts, self.scale
        )
        self.grads["head.w"] += dhw
        self.grads["head.b"] += dhb
        self.dcur = dz

    def emit_dcur(self, b: int, layer: int):
        return self.dcur

    def rnn_backward(self, b: int, layer: int, drows: dict):
        all_ts = self.plan.block_steps(b)
        if self.arch == "tm-gcn":
            like = next(iter(drows.values()))
            dy, dy_before = mprod_block_backward(self.data.m_matrix, all_ts, drows, all_ts[0], like)
            for t in all_ts:
                if t in self.dtrailing_rows[layer]:
                    dy[t] += self.dtrailing_rows[layer].pop(t)
            for t, g in dy_before.items():
                if t in self.dtrailing_rows[layer]:
                    self.dtrailing_rows[layer][t] += g
                else:
                    self.dtrailing_rows[layer][t] = g
            return dy
        cell = lstm_params_from(self.params, layer)
        dy, dstate, dcell = lstm_block_backward(
            cell, all_ts, self.caches[layer]["lstm"], drows, self.dstate[layer]
        )
        self.dstate[layer] = dstate
        self.grads[f"lstm{layer}.wx"] += dcell["wx"]
        self.grads[f"lstm{layer}.wh"] += dcell["wh"]
        self.grads[f"lstm{layer}.b"] += dcell["b"]
        return dy

    def set_dy(self, b: int, layer: int, dy_own: dict):
        self.dy_frames = dy_own

    def gcn_backward(self, b: int, layer: int):
        dy = self.dcur if self.arch == "egcn-o" else self.dy_frames
        dprev = {}
        gcn_cache = self.caches[layer]["gcn"]
        if self.arch == "egcn-o":
            cell = matrix_lstm_params_from(self.params, layer)
            dw_seeds = {}
            for t in self.block_ts:
                dw_t, ds = plain_gcn_bwd_t(gcn_cache[t], dy[t], self.caches[layer]["w_by_t"][t])
                dw_seeds[t] = dw_t
                if layer > 0:
                    dprev[t] = spmm_transpose(self.local_laps[t], ds)
            all_ts = self.plan.block_steps(b)
            dgates, dbias, dw_in = evolve_chain_backward(
                cell, all_ts, self.caches[layer]["evolve"], dw_seeds, self.dstate[layer]
            )
            self.dstate[layer] = dw_in
            self.grads[f"evolve{layer}.gates"] += dgates
            self.grads[f"evolve{layer}.bias"] += dbias
        else:
            w = self.params[f"gcn{layer}.w"]
            dw_total = np.zeros_like(w)
            for t in self.block_ts:
                if self.arch == "cd-gcn":
                    dw, ds = skip_gcn_bwd_t(gcn_cache[t], dy[t], w)
                else:
                    dw, ds = plain_gcn_bwd_t(gcn_cache[t], dy[t], w)
                dw_total += dw
                if layer > 0:
                    dprev[t] = spmm_transpose(self.local_laps[t], ds)
            self.grads[f"gcn{layer}.w"] += dw_total
        self.dcur = dprev

    def finalize_epoch(self):
        if self.arch == "egcn-o":
            for layer in range(self.layers):
                self.grads[f"evolve{layer}.w0"] += self.dstate[layer]
        return self.grads, self.transfer


# ---------------------------------------------------------------------------
# coordinator


class _PhaseRunner:
    """Runs one phase on every worker and joins; the join is the barrier.

    round-robin: a single-sequence scheduler in worker order.
    threads: every worker executes the phase on its own OS thread.
    """

    def __init__(self, workers, scheduler: str):
        if scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {scheduler!r}; expected one of {SCHEDULERS}")
        self.workers = workers
        self.scheduler = scheduler
        self._pool = ThreadPoolExecutor(max_workers=len(workers)) if scheduler == "threads" else None

    def run(self, method: str, *shared, per_worker=None):
        calls = []
        for w in self.workers:
            args = shared + ((per_worker[w.wid],) if per_worker is not None else ())
            calls.append((getattr(w, method), args))
        if self._pool is None:
            return [fn(*args) for fn, args in calls]
        futures = [self._pool.submit(fn, *args) for fn, args in calls]
        return [f.result() for f in futures]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)


def _merge_frames(pieces) -> dict:
    merged = {}
    for d in pieces:
        merged.update(d)
    return merged


def _own_slice(frames: dict, plan: SnapshotPartition, wid: int, b: int) -> dict:
    return {t: frames[t] for t in plan.steps_of(wid, b)}


def distributed_epoch(cfg: ModelConfig, data: TrainingData, labels: LabelSet, params: dict,
                      workers: int, nblk: int, scheduler: str = "round-robin",
                      comm: CommLedger | None = None, transfer: TransferLedger | None = None,
                      act_ledger: ActivationLedger | None = None):
    """One training epoch under snapshot partitioning with simulated workers.

    Returns (loss, grads, comm, transfer).  With one worker this reproduces
    training.backward_checkpoint bit-identically; with more workers the
    results agree to accumulation-order noise (1e-9).
    """
    plan = plan_snapshot_partition(data.num_timesteps, workers, nblk)
    _vertex_chunks(data.num_vertices, workers)  # validate early
    comm = comm if comm is not None else CommLedger()
    transfer = transfer if transfer is not None else TransferLedger()
    act = act_ledger if act_ledger is not None else ActivationLedger()
    layers = len(cfg.layer_dims())
    feature_rnn = cfg.architecture != "egcn-o"
    count = labels.total_pairs()
    scale = (1.0 / count) if count else 1.0

    chunks = _vertex_chunks(data.num_vertices, workers)
    sim = [_Worker(w, cfg, data, params, plan, chunks[w], labels, scale) for w in range(workers)]
    runner = _PhaseRunner(sim, scheduler)

    def _layer_forward(b: int, phase: str):
        for layer in range(layers):
            frames = _merge_frames(runner.run("gcn_forward", b, layer))
            if feature_rnn:
                rows = redistribute_to_vertex_major(frames, plan, comm, phase, b, layer)
                zrows = runner.run("rnn_forward", b, layer, per_worker=rows)
                frames = redistribute_to_snapshot_major(
                    {q: zrows[q] for q in range(workers)}, plan, comm, phase, b, layer
                )
            runner.run(
                "set_layer_input", b, layer,
                per_worker={w: _own_slice(frames, plan, w, b) for w in range(workers)},
            )

    try:
        with single_thread_blas():
            # forward sweep: loss and checkpoints only
            loss_sum = 0.0
            for b in range(plan.nblk):
                runner.run("begin_block", b, False)
                _layer_forward(b, "forward")
                for piece, _ in runner.run("block_loss", b):
                    loss_sum += piece
                runner.run("store_pi", b)
                act.alloc_checkpoint(1.0)
            loss = loss_sum * scale if count else 0.0

            # backward sweep: rerun with caches, then mirror the forward
            for b in reversed(range(plan.nblk)):
                act.alloc_activations(plan.bsize * 2 * layers)
                runner.run("begin_block", b, True)
                _layer_forward(b, "rerun")
                runner.run("loss_grads", b)
                for layer in reversed(range(layers)):
                    if feature_rnn:
                        dz = _merge_frames(runner.run("emit_dcur", b, layer))
                        drows = redistribute_to_vertex_major(dz, plan, comm, "backward", b, layer)
                        dyrows = runner.run("rnn_backward", b, layer, per_worker=drows)
                        dy = redistribute_to_snapshot_major(
                            {q: dyrows[q] for q in range(workers)}, plan, comm, "backward", b, layer
                        )
                        runner.run(
                            "set_dy", b, layer,
                            per_worker={w: _own_slice(dy, plan, w, b) for w in range(workers)},
                        )
                    runner.run("gcn_backward", b, layer)
                act.free_activations(plan.bsize * 2 * layers)
                act.free_checkpoint(1.0)

            # gradient all-reduce (and ledger merges)
            results = runner.run("finalize_epoch")
            grads = {
                k: np.sum(np.stack([res[0][k] for res in results]), axis=0)
                for k in sorted(params)
            }
            comm.record_allreduce(parameter_count(params), workers)
            for res in results:
                transfer.merge(res[1])
    finally:
        runner.close()
    return loss, grads, comm, transfer


def train_distributed(cfg: ModelConfig, data: TrainingData, train_labels: LabelSet,
                      test_labels: LabelSet, epochs: int, seed: int, workers: int, nblk: int,
                      scheduler: str = "round-robin", lr: float = 0.01):
    """Epoch loop around distributed_epoch; ledgers accumulate across the run.

    Returns (trace, params, comm, transfer, act_ledger)."""
    params = init_params(cfg, seed)
    adam = init_adam(params)
    comm = CommLedger()
    transfer = TransferLedger()
    act = ActivationLedger()
    trace = []
    with single_thread_blas():
        for epoch in range(1, epochs + 1):
            loss, grads, _, _ = distributed_epoch(
                cfg, data, train_labels, params, workers, nblk, scheduler,
                comm=comm, transfer=transfer, act_ledger=act,
            )
            adam_step(params, grads, adam, lr)
            z = model_forward(cfg, data.laps, data.feats, params)
            acc = evaluate_link_prediction(z, test_labels, params)
            trace.append({"epoch": epoch, "loss": loss, "test_accuracy": acc})
    return trace, params, comm, transfer, act


# ---------------------------------------------------------------------------
# vertex-partitioning baseline (volume comparison only)


@dataclass(frozen=True)
class VertexPartition:
    """Equal-size vertex parts plus the contiguity renaming (old id -> new
    id in clustering order; part p occupies the p-th renamed run)."""

    parts: list
    owner: np.ndarray
    renaming: np.ndarray


@dataclass(frozen=True)
class VolumeReport:
    """Per-GCN-layer, one-direction redistribution volume in feature-vector
    units.  send_units excludes the owner (a worker never sends to itself);
    raw_units counts every owner holding a reader, as the plain lambda sum
    does."""

    send_units: int
    raw_units: int


def partition_vertices_greedy(g: DynamicGraph, workers: int) -> VertexPartition:
    """Equal-size vertex partition from a BFS over the union graph.

    Stands in for a hypergraph partitioner: BFS order clusters vertices
    with their aggregate-adjacency neighbors, then consecutive runs of
    N/P vertices become the parts.  Deterministic; falls back to index
    order on disconnected remainders.
    """
    n = g.num_vertices
    if workers < 1:
        raise ConfigError("worker count must be >= 1")
    if n % workers != 0:
        raise ConfigError(f"worker count {workers} must divide the vertex count {n}")
    neighbors = [set() for _ in range(n)]
    for snap in g.snapshots:
        for u, v in zip(snap.rows, snap.cols):
            neighbors[int(u)].add(int(v))
            neighbors[int(v)].add(int(u))

    order = []
    visited = np.zeros(n, dtype=bool)
    for start in range(n):
        if visited[start]:
            continue
        queue = [start]
        visited[start] = True
        while queue:
            u = queue.pop(0)
            order.append(u)
            for v in sorted(neighbors[u]):
                if not visited[v]:
                    visited[v] = True
                    queue.append(v)

    order = np.asarray(order, dtype=np.int64)
    k = n // workers
    parts = [order[p * k : (p + 1) * k] for p in range(workers)]
    owner = np.empty(n, dtype=np.int64)
    renaming = np.empty(n, dtype=np.int64)
    for p, part in enumerate(parts):
        owner[part] = p
    renaming[order] = np.arange(n, dtype=np.int64)
    return VertexPartition(parts=parts, owner=owner, renaming=renaming)


def vertex_comm_volume(g: DynamicGraph, partition: VertexPartition) -> VolumeReport:
    """Communication volume of vertex partitioning for one GCN layer.

    For each snapshot, the feature of vertex v must reach every worker
    owning a reader of v (a vertex u with an entry (u, v)).  raw counts
    distinct (v, reader-owner) pairs; send excludes v's own owner.
    """
    owner = partition.owner
    workers = int(owner.max()) + 1 if owner.size else 1
    raw = 0
    send = 0
    for snap in g.snapshots:
        if snap.nnz == 0:
            continue
        reader_owner = owner[snap.rows]
        keys = snap.cols * np.int64(workers) + reader_owner
        raw += int(np.unique(keys).shape[0])
        cross = reader_owner != owner[snap.cols]
        if cross.any():
            send += int(np.unique(keys[cross]).shape[0])
    return VolumeReport(send_units=send, raw_units=raw)


def compare_partitioning_report(g: DynamicGraph, cfg: ModelConfig, worker_counts) -> list:
    """Snapshot-vs-vertex volume table (Table-3-style rows).

    Snapshot volume is the scheme's fixed formula: two redistributions per
    layer in each direction, T*N*(P-1)/P units each (zero for the
    weight-evolution architecture).  Vertex volume is measured from the
    greedy partition, doubled for the backward direction.
    """
    t_count = g.num_timesteps
    n = g.num_vertices
    layers = len(cfg.layer_dims())
    rows = []
    for p in worker_counts:
        vol = vertex_comm_volume(g, partition_vertices_greedy(g, p))
        if cfg.architecture == "egcn-o":
            snap_units = 0.0
        else:
            snap_units = 2.0 * 2.0 * layers * t_count * n * (p - 1) / p
        rows.append(
            {
                "workers": int(p),
                "snapshot_units": snap_units,
                "vertex_units": 2 * layers * vol.send_units,
                "lambda_send": vol.send_units,
                "lambda_raw": vol.raw_units,
            }
        )
    return rows

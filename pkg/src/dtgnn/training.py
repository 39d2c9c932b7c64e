"""Loss, manual reverse-mode gradients, the gradient-checkpoint engine with
carryover-state handoff, and the optimizer.

The timeline is tiled into nblk blocks of bsize = T/nblk timesteps.  The
forward sweep walks blocks in order keeping only the small inter-block
carryover pi_b (temporal-operator state at the block's last step plus the
trailing window of operator-input frames).  The backward sweep walks blocks
in reverse, re-running each block's forward from pi_{b-1} with caches and
then backpropagating; parameter gradients accumulate per block, so the
blocked path agrees with the monolithic one to accumulation-order noise
(1e-10) and bit-exactly when nblk = 1.

Both the sequential engines here and the simulated distributed engine are
composed from the same per-timestep / per-block primitives, in the same
order, which is what makes a one-worker distributed run bit-identical to
the sequential checkpoint path.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .core import SparseMatrix, single_thread_blas, spmm, spmm_transpose
from .dtdg import (
    DynamicGraph,
    FeatureSequence,
    MMatrix,
    apply_edge_life,
    build_m_matrix,
    degree_features,
    m_transform_features,
    m_transform_graph,
    normalize_laplacian,
)
from .errors import ConfigError, InputError
from .models import (
    LstmCellParams,
    MatrixLstmParams,
    ModelConfig,
    init_params,
    link_pred_forward,
    lstm_params_from,
    matrix_lstm_params_from,
    model_forward,
    precompute_first_layer,
    relu,
    sigmoid,
)

__all__ = [
    "LabelSet",
    "BlockPlan",
    "CheckpointState",
    "ActivationLedger",
    "TrainingData",
    "AdamState",
    "prepare_training_data",
    "cross_entropy_loss",
    "sample_link_prediction_sets",
    "evaluate_link_prediction",
    "forward_loss",
    "backward_full",
    "backward_checkpoint",
    "init_adam",
    "adam_step",
    "train_epochs",
]


# ---------------------------------------------------------------------------
# labels and loss


@dataclass(frozen=True)
class LabelSet:
    """Supervised vertex pairs with class labels, grouped by the embedding
    frame that scores them.

    by_time maps a 0-based embedding-frame index to (pairs, labels) where
    pairs is (R, 2) int64 and labels is (R,) int64 with classes 0..C-1
    (class 1 marks a real edge in link prediction).
    """

    num_classes: int
    by_time: dict

    def __post_init__(self):
        for t, (pairs, labels) in self.by_time.items():
            if pairs.shape[0] != labels.shape[0]:
                raise InputError(f"pair/label count mismatch at step {t}")
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise InputError(f"label out of range [0, {self.num_classes}) at step {t}")

    def total_pairs(self) -> int:
        return sum(p.shape[0] for p, _ in self.by_time.values())


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray, reduction: str = "mean"):
    """Softmax cross-entropy and its gradient w.r.t. the logits.

    reduction "mean" divides by the row count (the training default);
    "sum" leaves the raw sum, which makes the loss additive over pairs.
    """
    if reduction not in ("mean", "sum"):
        raise InputError(f"unknown reduction {reduction!r}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != logits.shape[0]:
        raise InputError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"label out of range [0, {logits.shape[1]})")
    rows = logits.shape[0]
    if rows == 0:
        return 0.0, np.zeros_like(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss_vec = -log_p[np.arange(rows), labels]
    grad = np.exp(log_p)
    grad[np.arange(rows), labels] -= 1.0
    if reduction == "mean":
        return float(loss_vec.mean()), grad / rows
    return float(loss_vec.sum()), grad


def sample_link_prediction_sets(g: DynamicGraph, theta: float, seed: int):
    """Build train/test pair sets for link prediction.

    Per timestep, ceil(theta * nnz) edges are sampled without replacement
    as positives (label 1) plus an equal number of distinct uniform
    non-edges as negatives (label 0).  The final timestep is held out as
    the test set and is scored with the last embedding computed without
    seeing it, so both sets are keyed by the scoring frame: train pairs
    from snapshot t sit under frame t (t <= T-2, 0-based), test pairs from
    the final snapshot sit under frame T-2.
    """
    if not (0.0 < theta <= 1.0):
        raise InputError(f"theta must lie in (0, 1], got {theta}")
    if g.num_timesteps < 2:
        raise InputError("link prediction needs at least two snapshots")
    rng = np.random.default_rng(seed)
    n = g.num_vertices
    space = n * n

    def _sample_step(snap: SparseMatrix):
        nnz = snap.nnz
        if nnz == 0:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        npos = math.ceil(theta * nnz)
        pick = rng.permutation(nnz)[:npos]
        pos = np.stack([snap.rows[pick], snap.cols[pick]], axis=1)
        edge_keys = set(int(k) for k in snap.index_keys())
        nneg = min(npos, space - nnz)
        neg_keys = []
        seen = set()
        while len(neg_keys) < nneg:
            batch = rng.integers(0, space, size=max(64, 2 * (nneg - len(neg_keys))))
            for key in batch:
                k = int(key)
                if k in edge_keys or k in seen:
                    continue
                seen.add(k)
                neg_keys.append(k)
                if len(neg_keys) == nneg:
                    break
        neg_keys = np.asarray(neg_keys, dtype=np.int64)
        neg = np.stack([neg_keys // n, neg_keys % n], axis=1)
        pairs = np.concatenate([pos, neg], axis=0)
        labels = np.concatenate(
            [np.ones(npos, dtype=np.int64), np.zeros(nneg, dtype=np.int64)]
        )
        return pairs, labels

    train = {}
    for t in range(g.num_timesteps - 1):
        pairs, labels = _sample_step(g.snapshots[t])
        if pairs.shape[0]:
            train[t] = (pairs, labels)
    test_pairs, test_labels = _sample_step(g.snapshots[g.num_timesteps - 1])
    test = {}
    if test_pairs.shape[0]:
        test[g.num_timesteps - 2] = (test_pairs, test_labels)
    return LabelSet(2, train), LabelSet(2, test)


def evaluate_link_prediction(z: FeatureSequence, labels: LabelSet, params: dict):
    """Classification accuracy of the head on the given pair set; None if
    the set is empty."""
    correct = total = 0
    for t, (pairs, lab) in sorted(labels.by_time.items()):
        logits = link_pred_forward(z.frames[t], pairs, params["head.w"], params["head.b"])
        correct += int((logits.argmax(axis=1) == lab).sum())
        total += lab.shape[0]
    return correct / total if total else None


# ---------------------------------------------------------------------------
# training data and block plan


@dataclass(frozen=True)
class TrainingData:
    """Model-ready inputs: smoothed graph, per-timestep Laplacians, input
    frames, and the precomputed parameter-free first-layer products."""

    graph: DynamicGraph
    laps: list
    feats: FeatureSequence
    s1: list
    m_matrix: MMatrix | None = None

    @property
    def num_timesteps(self) -> int:
        return len(self.laps)

    @property
    def num_vertices(self) -> int:
        return self.feats.num_vertices


def prepare_training_data(cfg: ModelConfig, graph: DynamicGraph) -> TrainingData:
    """Architecture-specific preprocessing: smoothing, degree features and
    Laplacian / first-layer precomputation.

    tm-gcn applies the M-transform to both the adjacency tensor and the
    degree features of the raw graph; egcn-o applies edge-life and takes
    degrees of the smoothed graph; cd-gcn trains on the raw snapshots.
    """
    t_count = graph.num_timesteps
    m = None
    if cfg.architecture == "tm-gcn":
        m = build_m_matrix(t_count, cfg.window)
        smoothed = m_transform_graph(graph, m)
        feats = m_transform_features(degree_features(graph), m)
    elif cfg.architecture == "egcn-o":
        smoothed = apply_edge_life(graph, cfg.edge_life)
        feats = degree_features(smoothed)
    else:
        smoothed = graph
        feats = degree_features(graph)
    if feats.width != cfg.in_features:
        raise ConfigError(
            f"configured in_features={cfg.in_features} but input frames have width {feats.width}"
        )
    laps = [normalize_laplacian(s) for s in smoothed.snapshots]
    s1 = precompute_first_layer(laps, feats)
    return TrainingData(graph=smoothed, laps=laps, feats=feats, s1=s1, m_matrix=m)


@dataclass(frozen=True)
class BlockPlan:
    """Tiling of the timeline into nblk equal blocks of bsize timesteps."""

    num_timesteps: int
    nblk: int

    def __post_init__(self):
        if self.nblk < 1:
            raise ConfigError("block count must be >= 1")
        if self.num_timesteps % self.nblk != 0:
            raise ConfigError(
                f"block count {self.nblk} must divide the timeline length {self.num_timesteps}"
            )

    @property
    def bsize(self) -> int:
        return self.num_timesteps // self.nblk

    def block_steps(self, b: int) -> list:
        """0-based timesteps of block b (0-based block index)."""
        return list(range(b * self.bsize, (b + 1) * self.bsize))

    def blocks(self):
        return [(b, self.block_steps(b)) for b in range(self.nblk)]


@dataclass
class CheckpointState:
    """Inter-block carryover pi_b: temporal-operator state at the block's
    last step per layer, plus the trailing min(window, bsize) operator-input
    frames per layer (empty for the weight-evolution architecture, whose
    only carry is the evolved weight itself)."""

    block_index: int
    rnn_state: list
    trailing: list


class ActivationLedger:
    """Logical memory accounting: counts retained activation records.

    One record is one sublayer's per-timestep cache bundle (fractional for
    row slices held by simulated workers); each stored pi_b counts as one
    checkpoint record.  peak tracks the maximum of live activations plus
    live checkpoints.  Thread-safe so concurrent simulated workers can
    charge it.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.live_activations = 0.0
        self.live_checkpoints = 0.0
        self.peak = 0.0
        self.peak_activations = 0.0
        self.peak_checkpoints = 0.0

    def _bump(self):
        total = self.live_activations + self.live_checkpoints
        if total > self.peak:
            self.peak = total
        if self.live_activations > self.peak_activations:
            self.peak_activations = self.live_activations
        if self.live_checkpoints > self.peak_checkpoints:
            self.peak_checkpoints = self.live_checkpoints

    def alloc_activations(self, amount: float):
        with self._lock:
            self.live_activations += amount
            self._bump()

    def free_activations(self, amount: float):
        with self._lock:
            self.live_activations -= amount

    def alloc_checkpoint(self, amount: float = 1.0):
        with self._lock:
            self.live_checkpoints += amount
            self._bump()

    def free_checkpoint(self, amount: float = 1.0):
        with self._lock:
            self.live_checkpoints -= amount


# ---------------------------------------------------------------------------
# per-timestep / per-block primitives shared by every engine


def plain_gcn_fwd_t(s: np.ndarray, w: np.ndarray):
    y = relu(s @ w)
    return y, (s, y)


def plain_gcn_bwd_t(cache, dy: np.ndarray, w: np.ndarray):
    s, y = cache
    dpre = dy * (y > 0.0)
    return s.T @ dpre, dpre @ w.T


def skip_gcn_fwd_t(s: np.ndarray, w: np.ndarray):
    q = s @ w
    r = relu(np.concatenate([s, q], axis=1))
    return r, (s, q, r)


def skip_gcn_bwd_t(cache, dr: np.ndarray, w: np.ndarray):
    s, q, r = cache
    dpre = dr * (r > 0.0)
    split = s.shape[1]
    ds = dpre[:, :split].copy()
    dq = dpre[:, split:]
    dw = s.T @ dq
    ds += dq @ w.T
    return dw, ds


def lstm_block_forward(cell: LstmCellParams, state_in, ts, xs: dict):
    """LSTM over a block's timesteps (ascending); xs maps abs timestep to
    the input rows.  Returns outputs, the final (h, c), and the gate cache
    needed for BPTT."""
    hidden = cell.hidden
    h, c = state_in
    ys = {}
    cache = []
    for t in ts:
        x = xs[t]
        z = x @ cell.wx + h @ cell.wh + cell.b
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        o = sigmoid(z[:, 2 * hidden : 3 * hidden])
        g = np.tanh(z[:, 3 * hidden :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append((x, h, c, i, f, o, g, c_new, tanh_c))
        h, c = h_new, c_new
        ys[t] = h_new
    return ys, (h, c), cache


def lstm_block_backward(cell: LstmCellParams, ts, cache, dys: dict, dstate_out):
    """Reverse-mode through a block's LSTM steps (descending timesteps)."""
    hidden = cell.hidden
    dh_carry, dc_carry = dstate_out
    dh_carry = dh_carry.copy()
    dc_carry = dc_carry.copy()
    dwx = np.zeros_like(cell.wx)
    dwh = np.zeros_like(cell.wh)
    db = np.zeros_like(cell.b)
    dxs = {}
    for t, entry in zip(reversed(ts), reversed(cache)):
        x, h_prev, c_prev, i, f, o, g, c_new, tanh_c = entry
        dh = dys[t] + dh_carry
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_carry
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_carry = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g * g),
            ],
            axis=1,
        )
        dwx += x.T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dxs[t] = dz @ cell.wx.T
        dh_carry = dz @ cell.wh.T
    return dxs, (dh_carry, dc_carry), {"wx": dwx, "wh": dwh, "b": db}


def mprod_block_forward(m: MMatrix, ts, frames: dict):
    """Windowed average along the timeline for a block; `frames` must cover
    the block's own operator inputs plus the trailing window from earlier
    blocks."""
    zs = {}
    for t in ts:
        lo = max(0, t - m.window + 1)
        acc = m.matrix[t, lo] * frames[lo]
        for k in range(lo + 1, t + 1):
            acc = acc + m.matrix[t, k] * frames[k]
        zs[t] = acc
    return zs


def mprod_block_backward(m: MMatrix, ts, dzs: dict, block_start: int, like: np.ndarray):
    """Adjoint of mprod_block_forward: scatter each dZ_t over its window.
    Returns gradients for in-block input frames and for frames before the
    block (owed to earlier blocks)."""
    dy = {t: np.zeros_like(like) for t in ts}
    dy_before = {}
    for t in ts:
        lo = max(0, t - m.window + 1)
        for k in range(lo, t + 1):
            contrib = m.matrix[t, k] * dzs[t]
            if k >= block_start:
                dy[k] += contrib
            elif k in dy_before:
                dy_before[k] += contrib
            else:
                dy_before[k] = contrib
    return dy, dy_before


def evolve_chain_forward(cell: MatrixLstmParams, w_in: np.ndarray, ts):
    """Weight evolution over a block's timesteps; pure in w_in, so the
    rerun from a checkpoint reproduces it exactly."""
    w = w_in
    w_by_t = {}
    cache = []
    for t in ts:
        z = cell.gates * w + cell.bias
        i = sigmoid(z[0])
        f = sigmoid(z[1])
        o = sigmoid(z[2])
        g = np.tanh(z[3])
        c = f * w + i * g
        tanh_c = np.tanh(c)
        w_new = o * tanh_c
        cache.append((w, i, f, o, g, tanh_c))
        w_by_t[t] = w_new
        w = w_new
    return w_by_t, w, cache


def evolve_chain_backward(cell: MatrixLstmParams, ts, cache, dw_seeds: dict, dw_out):
    """Reverse-mode through the weight-evolution chain (descending)."""
    dgates = np.zeros_like(cell.gates)
    dbias = np.zeros_like(cell.bias)
    dw_carry = dw_out.copy()
    for t, entry in zip(reversed(ts), reversed(cache)):
        w_prev, i, f, o, g, tanh_c = entry
        dw_new = dw_carry
        if t in dw_seeds:
            dw_new = dw_new + dw_seeds[t]
        do = dw_new * tanh_c
        dc = dw_new * o * (1.0 - tanh_c * tanh_c)
        df = dc * w_prev
        di = dc * g
        dg = dc * i
        dw_prev = dc * f
        dzi = di * i * (1.0 - i)
        dzf = df * f * (1.0 - f)
        dzo = do * o * (1.0 - o)
        dzg = dg * (1.0 - g * g)
        for k, dz in enumerate((dzi, dzf, dzo, dzg)):
            dgates[k] += dz * w_prev
            dbias[k] += dz
            dw_prev = dw_prev + dz * cell.gates[k]
        dw_carry = dw_prev
    return dgates, dbias, dw_carry


# ---------------------------------------------------------------------------
# sequential block engine


def initial_carry_state(cfg: ModelConfig, params: dict, n: int) -> list:
    """Per-layer temporal-operator state before the first timestep."""
    states = []
    for layer, dims in enumerate(cfg.layer_dims()):
        if cfg.architecture == "cd-gcn":
            states.append((np.zeros((n, dims.out)), np.zeros((n, dims.out))))
        elif cfg.architecture == "egcn-o":
            states.append(params[f"evolve{layer}.w0"])
        else:
            states.append(None)
    return states


def zero_state_grads(cfg: ModelConfig, params: dict, n: int) -> list:
    grads = []
    for layer, dims in enumerate(cfg.layer_dims()):
        if cfg.architecture == "cd-gcn":
            grads.append((np.zeros((n, dims.out)), np.zeros((n, dims.out))))
        elif cfg.architecture == "egcn-o":
            grads.append(np.zeros_like(params[f"evolve{layer}.w0"]))
        else:
            grads.append(None)
    return grads


@dataclass
class _BlockForward:
    z_frames: dict          # abs_t -> final-layer output
    state_out: list         # per layer
    trailing_out: list      # per layer: abs_t -> operator-input frame
    caches: list | None     # per layer cache bundle (None when not kept)


def run_block_forward(cfg, data: TrainingData, params, ts, state_in, trailing_lookup, keep_cache: bool):
    """Forward through every layer for one block of timesteps.

    trailing_lookup supplies operator-input frames from earlier blocks for
    windowed temporal operators (one dict per layer, absolute timestep
    keys).  With keep_cache the per-sublayer bundles needed for the
    backward pass are retained.
    """
    arch = cfg.architecture
    dims = cfg.layer_dims()
    cur = None  # layer input frames (unused at layer 0: s1 is precomputed)
    state_out = []
    trailing_out = []
    caches = [] if keep_cache else None
    bsize = len(ts)
    z_frames = {}

    for layer, dim in enumerate(dims):
        # graph-convolution sublayer (snapshot-major)
        layer_cache = {}
        if arch == "egcn-o":
            cell = matrix_lstm_params_from(params, layer)
            w_by_t, w_last, ev_cache = evolve_chain_forward(cell, state_in[layer], ts)
            state_out.append(w_last)
            gcn_out = {}
            gcn_cache = {}
            for t in ts:
                s = data.s1[t] if layer == 0 else spmm(data.laps[t], cur[t])
                y, cache_t = plain_gcn_fwd_t(s, w_by_t[t])
                gcn_out[t] = y
                gcn_cache[t] = cache_t
            layer_cache = {"evolve": ev_cache, "w_by_t": w_by_t, "gcn": gcn_cache}
            out = gcn_out
            trailing_out.append({})
        else:
            w = params[f"gcn{layer}.w"]
            gcn_out = {}
            gcn_cache = {}
            for t in ts:
                s = data.s1[t] if layer == 0 else spmm(data.laps[t], cur[t])
                if arch == "cd-gcn":
                    r, cache_t = skip_gcn_fwd_t(s, w)
                else:
                    r, cache_t = plain_gcn_fwd_t(s, w)
                gcn_out[t] = r
                gcn_cache[t] = cache_t
            layer_cache = {"gcn": gcn_cache}

            # temporal sublayer (vertex-major)
            if arch == "tm-gcn":
                frames = dict(trailing_lookup[layer])
                frames.update(gcn_out)
                out = mprod_block_forward(data.m_matrix, ts, frames)
                keep = min(data.m_matrix.window, bsize)
                trailing_out.append({t: gcn_out[t] for t in ts[-keep:]})
            else:  # cd-gcn
                cell = lstm_params_from(params, layer)
                ys, st, lstm_cache = lstm_block_forward(cell, state_in[layer], ts, gcn_out)
                layer_cache["lstm"] = lstm_cache
                out = ys
                state_out.append(st)
                trailing_out.append({ts[-1]: ys[ts[-1]]})
        if arch == "tm-gcn":
            state_out.append(None)
        if keep_cache:
            caches.append(layer_cache)
        cur = out

    z_frames = cur
    return _BlockForward(z_frames, state_out, trailing_out, caches)


def run_block_backward(cfg, data: TrainingData, params, ts, caches, dz_seeds, dstate_out, dtrailing_in):
    """Reverse through one block given its forward caches.

    dz_seeds: gradients w.r.t. the block's final-layer outputs.
    dstate_out: per-layer gradient w.r.t. the state this block handed to
    the next one.  dtrailing_in: per-layer gradients, owed by later blocks,
    w.r.t. operator-input frames produced inside this block.
    Returns (dparams, dstate_in, dtrailing_out) where dtrailing_out holds
    gradients w.r.t. frames of earlier blocks.
    """
    arch = cfg.architecture
    dims = cfg.layer_dims()
    block_start = ts[0]
    dparams = {}
    dstate_in = [None] * len(dims)
    dtrailing_out = [dict() for _ in dims]
    dcur = dz_seeds

    for layer in reversed(range(len(dims))):
        layer_cache = caches[layer]
        # temporal sublayer backward
        if arch == "tm-gcn":
            like = next(iter(dcur.values()))
            dy, dy_before = mprod_block_backward(data.m_matrix, ts, dcur, block_start, like)
            for t, g in dtrailing_in[layer].items():
                dy[t] += g
            dtrailing_out[layer] = dy_before
        elif arch == "cd-gcn":
            cell = lstm_params_from(params, layer)
            dy, dstate, dcell = lstm_block_backward(
                cell, ts, layer_cache["lstm"], dcur, dstate_out[layer]
            )
            dstate_in[layer] = dstate
            dparams[f"lstm{layer}.wx"] = dcell["wx"]
            dparams[f"lstm{layer}.wh"] = dcell["wh"]
            dparams[f"lstm{layer}.b"] = dcell["b"]
        else:
            dy = dcur

        # graph-convolution sublayer backward
        gcn_cache = layer_cache["gcn"]
        dprev = {}
        if arch == "egcn-o":
            cell = matrix_lstm_params_from(params, layer)
            dw_seeds = {}
            for t in ts:
                dw_t, ds = plain_gcn_bwd_t(gcn_cache[t], dy[t], layer_cache["w_by_t"][t])
                dw_seeds[t] = dw_t
                if layer > 0:
                    dprev[t] = spmm_transpose(data.laps[t], ds)
            dgates, dbias, dw_in = evolve_chain_backward(
                cell, ts, layer_cache["evolve"], dw_seeds, dstate_out[layer]
            )
            dparams[f"evolve{layer}.gates"] = dgates
            dparams[f"evolve{layer}.bias"] = dbias
            dstate_in[layer] = dw_in
        else:
            w = params[f"gcn{layer}.w"]
            dw_total = np.zeros_like(w)
            for t in ts:
                if arch == "cd-gcn":
                    dw, ds = skip_gcn_bwd_t(gcn_cache[t], dy[t], w)
                else:
                    dw, ds = plain_gcn_bwd_t(gcn_cache[t], dy[t], w)
                dw_total += dw
                if layer > 0:
                    dprev[t] = spmm_transpose(data.laps[t], ds)
            dparams[f"gcn{layer}.w"] = dw_total
        dcur = dprev

    return dparams, dstate_in, dtrailing_out


# ---------------------------------------------------------------------------
# loss plumbing over blocks


def block_loss(cfg, params, z_frames, labels: LabelSet, ts):
    """Sum of per-pair losses (and the pair count) for the block's steps."""
    loss_sum = 0.0
    count = 0
    for t in ts:
        if t not in labels.by_time:
            continue
        pairs, lab = labels.by_time[t]
        logits = link_pred_forward(z_frames[t], pairs, params["head.w"], params["head.b"])
        piece, _ = cross_entropy_loss(logits, lab, reduction="sum")
        loss_sum += piece
        count += lab.shape[0]
    return loss_sum, count


def block_loss_grads(cfg, params, z_frames, labels: LabelSet, ts, scale: float):
    """Seed gradients w.r.t. the block's embeddings plus head gradients."""
    embed = cfg.embed_features
    head_w = params["head.w"]
    dz = {}
    dhead_w = np.zeros_like(head_w)
    dhead_b = np.zeros_like(params["head.b"])
    for t in ts:
        dz[t] = np.zeros_like(z_frames[t])
        if t not in labels.by_time:
            continue
        pairs, lab = labels.by_time[t]
        z = z_frames[t]
        concat = np.concatenate([z[pairs[:, 0]], z[pairs[:, 1]]], axis=1)
        logits = concat @ head_w + params["head.b"]
        _, dlogits = cross_entropy_loss(logits, lab, reduction="sum")
        dlogits = dlogits * scale
        dhead_w += concat.T @ dlogits
        dhead_b += dlogits.sum(axis=0)
        dconcat = dlogits @ head_w.T
        np.add.at(dz[t], pairs[:, 0], dconcat[:, :embed])
        np.add.at(dz[t], pairs[:, 1], dconcat[:, embed:])
    return dz, dhead_w, dhead_b


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _accumulate(dst: dict, src: dict):
    for k in src:
        dst[k] += src[k]


def _merge_initial_state_grads(cfg, grads: dict, dstate_in: list):
    """Gradient w.r.t. the pre-timeline state: learnable only for the
    weight-evolution architecture (its initial weight matrices)."""
    if cfg.architecture == "egcn-o":
        for layer, g in enumerate(dstate_in):
            grads[f"evolve{layer}.w0"] += g


def forward_loss(cfg, data: TrainingData, labels: LabelSet, params, reduction: str = "mean"):
    """Loss via the straight-line forward; reference path for gradient
    checks."""
    z = model_forward(cfg, data.laps, data.feats, params)
    total = 0.0
    count = 0
    for t in sorted(labels.by_time):
        pairs, lab = labels.by_time[t]
        logits = link_pred_forward(z.frames[t], pairs, params["head.w"], params["head.b"])
        piece, _ = cross_entropy_loss(logits, lab, reduction="sum")
        total += piece
        count += lab.shape[0]
    if reduction == "mean" and count:
        total /= count
    return total


def backward_full(cfg, data: TrainingData, labels: LabelSet, params, reduction: str = "mean"):
    """Reference two-phase path: one forward storing every activation, then
    one reverse sweep.  Exact reverse-mode gradients of the composed model."""
    with single_thread_blas():
        ts = list(range(data.num_timesteps))
        state0 = initial_carry_state(cfg, params, data.num_vertices)
        trailing0 = [dict() for _ in cfg.layer_dims()]
        fwd = run_block_forward(cfg, data, params, ts, state0, trailing0, keep_cache=True)
        loss_sum, count = block_loss(cfg, params, fwd.z_frames, labels, ts)
        scale = (1.0 / count) if (reduction == "mean" and count) else 1.0
        loss = loss_sum * scale

        grads = zeros_like_params(params)
        dz, dhw, dhb = block_loss_grads(cfg, params, fwd.z_frames, labels, ts, scale)
        grads["head.w"] += dhw
        grads["head.b"] += dhb
        dstate = zero_state_grads(cfg, params, data.num_vertices)
        dtrailing = [dict() for _ in cfg.layer_dims()]
        dparams, dstate_in, _ = run_block_backward(
            cfg, data, params, ts, fwd.caches, dz, dstate, dtrailing
        )
        _accumulate(grads, dparams)
        _merge_initial_state_grads(cfg, grads, dstate_in)
        return loss, grads


def backward_checkpoint(cfg, data: TrainingData, labels: LabelSet, params, nblk: int,
                        reduction: str = "mean", act_ledger: ActivationLedger | None = None):
    """Gradient-checkpointed training step.

    Forward sweep stores only the per-block carryover; the backward sweep
    re-runs each block from the previous block's carryover and then
    backpropagates, so at most one block's activations are retained at any
    instant (plus the stored carryovers, counted by the activation ledger).
    Gradients match backward_full to 1e-10 (bit-exactly when nblk=1).
    """
    plan = BlockPlan(data.num_timesteps, nblk)
    layers = len(cfg.layer_dims())
    ledger = act_ledger or ActivationLedger()
    with single_thread_blas():
        # forward sweep: loss and checkpoints only
        state = initial_carry_state(cfg, params, data.num_vertices)
        trailing_store = [dict() for _ in range(layers)]
        pis = {}
        loss_sum = 0.0
        count = 0
        for b, ts in plan.blocks():
            fwd = run_block_forward(cfg, data, params, ts, state, trailing_store, keep_cache=False)
            piece, c = block_loss(cfg, params, fwd.z_frames, labels, ts)
            loss_sum += piece
            count += c
            state = fwd.state_out
            pis[b] = CheckpointState(b, fwd.state_out, fwd.trailing_out)
            for layer in range(layers):
                trailing_store[layer].update(fwd.trailing_out[layer])
            ledger.alloc_checkpoint(1.0)
        scale = (1.0 / count) if (reduction == "mean" and count) else 1.0
        loss = loss_sum * scale

        # backward sweep: rerun each block with caches, then backpropagate
        grads = zeros_like_params(params)
        dstate = zero_state_grads(cfg, params, data.num_vertices)
        dtrailing_store = [dict() for _ in range(layers)]
        initial = initial_carry_state(cfg, params, data.num_vertices)
        for b in reversed(range(plan.nblk)):
            ts = plan.block_steps(b)
            state_in = pis[b - 1].rnn_state if b > 0 else initial
            ledger.alloc_activations(len(ts) * 2 * layers)
            fwd = run_block_forward(cfg, data, params, ts, state_in, trailing_store, keep_cache=True)
            dz, dhw, dhb = block_loss_grads(cfg, params, fwd.z_frames, labels, ts, scale)
            grads["head.w"] += dhw
            grads["head.b"] += dhb
            dtr_in = []
            block_steps = set(ts)
            for layer in range(layers):
                owed = [t for t in dtrailing_store[layer] if t in block_steps]
                dtr_in.append({t: dtrailing_store[layer].pop(t) for t in owed})
            dparams, dstate_in, dtr_out = run_block_backward(
                cfg, data, params, ts, fwd.caches, dz, dstate, dtr_in
            )
            _accumulate(grads, dparams)
            dstate = dstate_in
            for layer in range(layers):
                for t, g in dtr_out[layer].items():
                    if t in dtrailing_store[layer]:
                        dtrailing_store[layer][t] += g
                    else:
                        dtrailing_store[layer][t] = g
            ledger.free_activations(len(ts) * 2 * layers)
            if b > 0:
                ledger.free_checkpoint(1.0)
        ledger.free_checkpoint(1.0)  # pi of the last block
        _merge_initial_state_grads(cfg, grads, dstate)
        return loss, grads


# ---------------------------------------------------------------------------
# optimizer and training loop


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def init_adam(params: dict) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(val) for k, val in params.items()},
        v={k: np.zeros_like(val) for k, val in params.items()},
    )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 0.01,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Standard Adam update, in place and deterministic (sorted key order)."""
    state.step += 1
    t = state.step
    for k in sorted(params):
        g = grads[k]
        if g.shape != params[k].shape:
            raise InputError(f"gradient shape mismatch for {k}")
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = state.m[k] / (1.0 - beta1**t)
        v_hat = state.v[k] / (1.0 - beta2**t)
        params[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def train_epochs(cfg, data: TrainingData, train_labels: LabelSet, test_labels: LabelSet,
                 epochs: int, seed: int, nblk: int = 1, lr: float = 0.01):
    """Sequential training loop: checkpointed backward + Adam per epoch.

    Returns (trace, params) where trace holds one record per epoch with the
    pre-update loss and the post-update test accuracy.  Deterministic given
    the seed.
    """
    params = init_params(cfg, seed)
    adam = init_adam(params)
    trace = []
    with single_thread_blas():
        for epoch in range(1, epochs + 1):
            loss, grads = backward_checkpoint(cfg, data, train_labels, params, nblk)
            adam_step(params, grads, adam, lr)
            z = model_forward(cfg, data.laps, data.feats, params)
            acc = evaluate_link_prediction(z, test_labels, params)
            trace.append({"epoch": epoch, "loss": loss, "test_accuracy": acc})
    return trace, params

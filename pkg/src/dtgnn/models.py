"""Forward passes for the shared dynamic-GNN framework and its three
instantiations, plus the link-prediction head.

Every architecture alternates a per-snapshot graph convolution with a
per-vertex temporal operator:

* tm-gcn   : plain GCN followed by the parameter-free windowed M-product.
* cd-gcn   : skip-concatenation GCN followed by an LSTM (window 1), fixed
             at two layers.
* egcn-o   : the GCN weight matrix itself evolves through an elementwise
             matrix LSTM; there is no feature-space temporal operator.

The activation is ReLU throughout.  Parameters are Glorot-uniform from a
seeded generator, biases zero except the LSTM forget gate (1.0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SparseMatrix, matmul, spmm
from .dtdg import FeatureSequence, MMatrix, m_transform_features
from .errors import ConfigError, InputError

__all__ = [
    "ARCHITECTURES",
    "ModelConfig",
    "LayerDims",
    "LstmCellParams",
    "MatrixLstmParams",
    "init_params",
    "parameter_count",
    "relu",
    "sigmoid",
    "gcn_forward",
    "lstm_step",
    "m_product_rnn",
    "egcn_evolve",
    "model_forward",
    "precompute_first_layer",
    "link_pred_forward",
]

ARCHITECTURES = ("tm-gcn", "cd-gcn", "egcn-o")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus the tunable lengths of Fig-2-style layer chains."""

    architecture: str
    in_features: int = 2
    hidden_features: int = 6
    embed_features: int = 6
    layers: int = 2
    window: int = 2
    edge_life: int = 2
    classes: int = 2

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}"
            )
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.architecture == "cd-gcn" and self.layers != 2:
            raise ConfigError("cd-gcn is a fixed two-layer architecture")
        if min(self.in_features, self.hidden_features, self.embed_features) < 1:
            raise ConfigError("feature lengths must be positive")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.edge_life < 1:
            raise ConfigError("edge life must be >= 1")
        if self.classes < 2:
            raise ConfigError("need at least two classification categories")

    def layer_dims(self):
        dims = []
        fin = self.in_features
        for layer in range(self.layers):
            last = layer == self.layers - 1
            if self.architecture == "cd-gcn":
                gcn_out = self.hidden_features
                out = self.embed_features if last else self.hidden_features
            else:
                gcn_out = self.embed_features if last else self.hidden_features
                out = gcn_out
            dims.append(LayerDims(fin=fin, gcn_out=gcn_out, out=out))
            fin = out
        return dims


@dataclass(frozen=True)
class LayerDims:
    fin: int       # layer input width
    gcn_out: int   # width after the graph convolution weight
    out: int       # layer output width (after the temporal operator)


@dataclass(frozen=True)
class LstmCellParams:
    """Packed LSTM cell parameters; gate column order is [input | forget |
    output | candidate]."""

    wx: np.ndarray  # (F_in, 4H)
    wh: np.ndarray  # (H, 4H)
    b: np.ndarray   # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]


@dataclass(frozen=True)
class MatrixLstmParams:
    """Elementwise matrix-LSTM parameters for the weight-evolution cell.

    gates/bias are stacked (4, F_in, F_out) arrays in [i, f, o, g] order;
    w0 is the learnable initial weight matrix.
    """

    gates: np.ndarray
    bias: np.ndarray
    w0: np.ndarray


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def _init_lstm(rng, f_in: int, hidden: int) -> dict:
    wx = np.concatenate([_glorot(rng, f_in, hidden) for _ in range(4)], axis=1)
    wh = np.concatenate([_glorot(rng, hidden, hidden) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return {"wx": wx, "wh": wh, "b": b}


def init_params(cfg: ModelConfig, seed: int) -> dict:
    """Seeded parameter dict; key order (and hence the draw order) is fixed
    so identical seeds give bit-identical parameters."""
    rng = np.random.default_rng(seed)
    params = {}
    for layer, dims in enumerate(cfg.layer_dims()):
        if cfg.architecture == "egcn-o":
            params[f"evolve{layer}.w0"] = _glorot(rng, dims.fin, dims.gcn_out)
            params[f"evolve{layer}.gates"] = np.stack(
                [_glorot(rng, dims.fin, dims.gcn_out) for _ in range(4)]
            )
            bias = np.zeros((4, dims.fin, dims.gcn_out))
            bias[1] = 1.0  # forget-gate bias
            params[f"evolve{layer}.bias"] = bias
        else:
            params[f"gcn{layer}.w"] = _glorot(rng, dims.fin, dims.gcn_out)
            if cfg.architecture == "cd-gcn":
                cell = _init_lstm(rng, dims.fin + dims.gcn_out, dims.out)
                params[f"lstm{layer}.wx"] = cell["wx"]
                params[f"lstm{layer}.wh"] = cell["wh"]
                params[f"lstm{layer}.b"] = cell["b"]
    # the final projection starts at zero so initial logits are neutral;
    # a Glorot head on top of unnormalized degree-driven embeddings starts
    # saturated and costs most of a short training budget to unwind
    params["head.w"] = np.zeros((2 * cfg.embed_features, cfg.classes))
    params["head.b"] = np.zeros(cfg.classes)
    return params


def parameter_count(params: dict) -> int:
    return sum(int(np.prod(a.shape)) for a in params.values())


def lstm_params_from(params: dict, layer: int) -> LstmCellParams:
    return LstmCellParams(
        wx=params[f"lstm{layer}.wx"],
        wh=params[f"lstm{layer}.wh"],
        b=params[f"lstm{layer}.b"],
    )


def matrix_lstm_params_from(params: dict, layer: int) -> MatrixLstmParams:
    return MatrixLstmParams(
        gates=params[f"evolve{layer}.gates"],
        bias=params[f"evolve{layer}.bias"],
        w0=params[f"evolve{layer}.w0"],
    )


def gcn_forward(lap: SparseMatrix, x: np.ndarray, w: np.ndarray, skip_concat: bool = False) -> np.ndarray:
    """Graph convolution relu(lap @ x @ w); the skip variant concatenates
    the aggregated input before the activation, widening the output to
    x.width + w.width columns."""
    if lap.dim != x.shape[0]:
        raise InputError(f"laplacian dim {lap.dim} does not match {x.shape[0]} rows")
    if x.shape[1] != w.shape[0]:
        raise InputError(f"gcn weight shape {w.shape} does not chain with input {x.shape}")
    y0 = spmm(lap, x)
    y1 = matmul(y0, w)
    if skip_concat:
        return relu(np.concatenate([y0, y1], axis=1))
    return relu(y1)


def _lstm_gates(cell: LstmCellParams, x: np.ndarray, h: np.ndarray):
    """Pre-activation split of the packed gate computation."""
    hidden = cell.hidden
    z = x @ cell.wx + h @ cell.wh + cell.b
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    o = sigmoid(z[:, 2 * hidden : 3 * hidden])
    g = np.tanh(z[:, 3 * hidden :])
    return i, f, o, g


def lstm_step(cell: LstmCellParams, state, x: np.ndarray):
    """One standard LSTM cell step applied row-wise (per vertex).

    state is the (h, c) pair; returns (y, (h', c')) with y = h'.
    """
    h, c = state
    if x.shape[1] != cell.wx.shape[0]:
        raise InputError(f"lstm input width {x.shape[1]} != expected {cell.wx.shape[0]}")
    if h.shape != (x.shape[0], cell.hidden) or c.shape != h.shape:
        raise InputError("lstm state shape does not match input rows / hidden length")
    i, f, o, g = _lstm_gates(cell, x, h)
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, (h_new, c_new)


def m_product_rnn(y: FeatureSequence, m: MMatrix) -> FeatureSequence:
    """Parameter-free temporal operator: delegates to the M-transform."""
    return m_transform_features(y, m)


def egcn_evolve(cell: MatrixLstmParams, w_prev: np.ndarray) -> np.ndarray:
    """Evolve a GCN weight matrix by one elementwise matrix-LSTM step.

    The previous weight serves as the cell's input, hidden and cell state
    (its only recurrent carry), so the step is a pure function of w_prev:

        i, f, o = sigmoid(P_* . w + B_*)     g = tanh(P_g . w + B_g)
        c = f . w + i . g                    W_next = o . tanh(c)

    with "." elementwise.
    """
    if w_prev.shape != cell.gates.shape[1:]:
        raise InputError(
            f"weight shape {w_prev.shape} does not match gate shape {cell.gates.shape[1:]}"
        )
    z = cell.gates * w_prev + cell.bias
    i = sigmoid(z[0])
    f = sigmoid(z[1])
    o = sigmoid(z[2])
    g = np.tanh(z[3])
    c = f * w_prev + i * g
    return o * np.tanh(c)


def _zero_lstm_state(n: int, hidden: int):
    return np.zeros((n, hidden)), np.zeros((n, hidden))


def model_forward(cfg: ModelConfig, laps, x: FeatureSequence, params: dict) -> FeatureSequence:
    """Straight-line forward over the whole timeline, no caching.

    laps is the per-timestep list of precomputed normalized Laplacians.
    Returns the embedding tensor as a sequence of T frames of width
    cfg.embed_features.  This path is the reference for finite-difference
    checks and evaluation; the training engines recompute the same values
    blockwise.
    """
    laps = list(laps)
    if len(laps) != x.num_timesteps:
        raise ConfigError(
            f"{len(laps)} laplacians vs {x.num_timesteps} feature frames"
        )
    if x.width != cfg.in_features:
        raise ConfigError(
            f"feature width {x.width} does not match configured in_features {cfg.in_features}"
        )
    frames = list(x.frames)
    n = x.num_vertices
    t_count = len(frames)

    from .dtdg import build_m_matrix  # deferred: avoids cycle at import time

    for layer, dims in enumerate(cfg.layer_dims()):
        if cfg.architecture == "tm-gcn":
            w = params[f"gcn{layer}.w"]
            out = [gcn_forward(laps[t], frames[t], w) for t in range(t_count)]
            m = build_m_matrix(t_count, cfg.window)
            frames = m_product_rnn(FeatureSequence(out), m).frames
        elif cfg.architecture == "cd-gcn":
            w = params[f"gcn{layer}.w"]
            cell = lstm_params_from(params, layer)
            state = _zero_lstm_state(n, dims.out)
            out = []
            for t in range(t_count):
                r = gcn_forward(laps[t], frames[t], w, skip_concat=True)
                y, state = lstm_step(cell, state, r)
                out.append(y)
            frames = out
        else:  # egcn-o
            cell = matrix_lstm_params_from(params, layer)
            w_t = cell.w0
            out = []
            for t in range(t_count):
                w_t = egcn_evolve(cell, w_t)
                out.append(gcn_forward(laps[t], frames[t], w_t))
            frames = out
    return FeatureSequence(frames)


def precompute_first_layer(laps, x: FeatureSequence):
    """Parameter-independent products lap_t @ X_t, computed once and reused
    by every epoch's first GCN layer."""
    laps = list(laps)
    if len(laps) != x.num_timesteps:
        raise InputError(f"{len(laps)} laplacians vs {x.num_timesteps} frames")
    return [spmm(lap, frame) for lap, frame in zip(laps, x.frames)]


def link_pred_forward(z: np.ndarray, pairs: np.ndarray, head: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Logits for vertex pairs: concatenate the two endpoint embeddings and
    apply the fully connected head."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InputError("pairs must be an (R, 2) array")
    if pairs.size and (pairs.min() < 0 or pairs.max() >= z.shape[0]):
        raise InputError(f"vertex id out of range [0, {z.shape[0]})")
    if head.shape[0] != 2 * z.shape[1]:
        raise InputError(
            f"head expects input width {head.shape[0]}, embeddings give {2 * z.shape[1]}"
        )
    concat = np.concatenate([z[pairs[:, 0]], z[pairs[:, 1]]], axis=1)
    return concat @ head + bias

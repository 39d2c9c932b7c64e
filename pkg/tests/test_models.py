import math

import numpy as np
import pytest

from dtgnn.core import SparseMatrix
from dtgnn.dtdg import FeatureSequence, build_m_matrix, generate_random_dtdg, normalize_laplacian
from dtgnn.errors import ConfigError, InputError
from dtgnn.models import (
    LstmCellParams,
    MatrixLstmParams,
    ModelConfig,
    egcn_evolve,
    gcn_forward,
    init_params,
    link_pred_forward,
    lstm_step,
    model_forward,
    precompute_first_layer,
)
from dtgnn.training import prepare_training_data, run_block_forward, initial_carry_state

from conftest import ARCHES, sparse_from


class TestModelConfig:
    def test_unknown_architecture(self):
        with pytest.raises(ConfigError):
            ModelConfig(architecture="gat")

    def test_cd_gcn_layers_fixed(self):
        with pytest.raises(ConfigError):
            ModelConfig(architecture="cd-gcn", layers=3)

    def test_layer_dims_chain(self):
        cfg = ModelConfig(architecture="tm-gcn", in_features=2, hidden_features=5,
                          embed_features=3, layers=3)
        dims = cfg.layer_dims()
        assert [(d.fin, d.out) for d in dims] == [(2, 5), (5, 5), (5, 3)]

    def test_cd_gcn_dims(self):
        cfg = ModelConfig(architecture="cd-gcn", in_features=2)
        dims = cfg.layer_dims()
        assert [(d.fin, d.gcn_out, d.out) for d in dims] == [(2, 6, 6), (6, 6, 6)]


class TestGcnForward:
    def test_identity_laplacian_and_weight(self):
        x = np.abs(np.random.default_rng(0).standard_normal((4, 3)))
        out = gcn_forward(SparseMatrix.identity(4), x, np.eye(3))
        assert np.array_equal(out, x)

    def test_hand_example_all_half_laplacian(self):
        lap = normalize_laplacian(sparse_from(2, [(0, 1, 1.0), (1, 0, 1.0)]))
        out = gcn_forward(lap, np.array([[1.0], [1.0]]), np.array([[1.0]]))
        assert np.allclose(out, [[1.0], [1.0]])

    def test_skip_concat_width(self):
        lap = SparseMatrix.identity(4)
        x = np.ones((4, 2))
        w = np.ones((2, 3))
        assert gcn_forward(lap, x, w, skip_concat=True).shape == (4, 5)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            gcn_forward(SparseMatrix.identity(3), np.ones((3, 2)), np.ones((3, 2)))


def scalar_lstm_oracle(cell: LstmCellParams, h, c, xs):
    """Independent plain-float LSTM for a single vertex and hidden size 1."""
    wx, wh, b = cell.wx[:, 0], cell.wh[0], cell.b
    outs = []
    for x in xs:
        def gate(col, squash):
            z = sum(float(xk) * float(cell.wx[k, col]) for k, xk in enumerate(x))
            z += h * float(cell.wh[0, col]) + float(cell.b[col])
            return squash(z)
        sig = lambda z: 1.0 / (1.0 + math.exp(-z))
        i = gate(0, sig)
        f = gate(1, sig)
        o = gate(2, sig)
        g = gate(3, math.tanh)
        c = f * c + i * g
        h = o * math.tanh(c)
        outs.append(h)
    return outs


class TestLstmStep:
    def _zero_cell(self, f_in, hidden):
        return LstmCellParams(
            wx=np.zeros((f_in, 4 * hidden)),
            wh=np.zeros((hidden, 4 * hidden)),
            b=np.zeros(4 * hidden),
        )

    def test_zero_params_zero_state(self):
        cell = self._zero_cell(3, 2)
        y, (h, c) = lstm_step(cell, (np.zeros((4, 2)), np.zeros((4, 2))), np.zeros((4, 3)))
        assert np.array_equal(y, np.zeros((4, 2)))
        assert np.array_equal(c, np.zeros((4, 2)))

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        cell = LstmCellParams(
            wx=rng.standard_normal((3, 8)), wh=rng.standard_normal((2, 8)),
            b=rng.standard_normal(8),
        )
        x = rng.standard_normal((5, 3))
        state = (rng.standard_normal((5, 2)), rng.standard_normal((5, 2)))
        perm = rng.permutation(5)
        y, _ = lstm_step(cell, state, x)
        y_perm, _ = lstm_step(cell, (state[0][perm], state[1][perm]), x[perm])
        assert np.allclose(y_perm, y[perm], atol=1e-14)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(4)
        cell = LstmCellParams(
            wx=rng.standard_normal((2, 4)), wh=rng.standard_normal((1, 4)),
            b=rng.standard_normal(4),
        )
        xs = [rng.standard_normal(2) for _ in range(6)]
        expected = scalar_lstm_oracle(cell, 0.0, 0.0, xs)
        state = (np.zeros((1, 1)), np.zeros((1, 1)))
        got = []
        for x in xs:
            y, state = lstm_step(cell, state, x.reshape(1, 2))
            got.append(float(y[0, 0]))
        assert np.allclose(got, expected, atol=1e-12)

    def test_shape_mismatch(self):
        cell = self._zero_cell(3, 2)
        with pytest.raises(InputError):
            lstm_step(cell, (np.zeros((4, 2)), np.zeros((4, 2))), np.zeros((4, 5)))


def scalar_evolve_oracle(p, b, w):
    """Plain-float weight-evolution cell for a 1x1 weight."""
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))
    i = sig(p[0] * w + b[0])
    f = sig(p[1] * w + b[1])
    o = sig(p[2] * w + b[2])
    g = math.tanh(p[3] * w + b[3])
    c = f * w + i * g
    return o * math.tanh(c)


class TestEgcnEvolve:
    def test_zero_everything(self):
        cell = MatrixLstmParams(
            gates=np.zeros((4, 2, 3)), bias=np.zeros((4, 2, 3)), w0=np.zeros((2, 3))
        )
        assert np.array_equal(egcn_evolve(cell, np.zeros((2, 3))), np.zeros((2, 3)))

    def test_output_shape(self):
        rng = np.random.default_rng(5)
        cell = MatrixLstmParams(
            gates=rng.standard_normal((4, 3, 5)), bias=rng.standard_normal((4, 3, 5)),
            w0=rng.standard_normal((3, 5)),
        )
        assert egcn_evolve(cell, cell.w0).shape == (3, 5)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(6)
        p = rng.standard_normal(4)
        b = rng.standard_normal(4)
        cell = MatrixLstmParams(
            gates=p.reshape(4, 1, 1), bias=b.reshape(4, 1, 1), w0=np.array([[0.3]])
        )
        w = 0.7
        expected = scalar_evolve_oracle(p, b, w)
        got = egcn_evolve(cell, np.array([[w]]))
        assert got[0, 0] == pytest.approx(expected, abs=1e-14)

    def test_shape_mismatch(self):
        cell = MatrixLstmParams(
            gates=np.zeros((4, 2, 3)), bias=np.zeros((4, 2, 3)), w0=np.zeros((2, 3))
        )
        with pytest.raises(InputError):
            egcn_evolve(cell, np.zeros((3, 2)))


class TestModelForward:
    def test_degenerate_timeline_is_relu_chain(self):
        # identity laplacian and identity weights: each layer is ReLU, and
        # the single-step window makes the temporal operator the identity
        n = 4
        cfg = ModelConfig(architecture="tm-gcn", in_features=3, hidden_features=3,
                          embed_features=3, layers=2, window=1)
        params = init_params(cfg, 0)
        params["gcn0.w"] = np.eye(3)
        params["gcn1.w"] = np.eye(3)
        x = np.random.default_rng(1).standard_normal((n, 3))
        out = model_forward(cfg, [SparseMatrix.identity(n)], FeatureSequence([x]), params)
        assert np.allclose(out.frames[0], np.maximum(x, 0.0))

    @pytest.mark.parametrize("arch", ARCHES)
    def test_output_shape_contract(self, arch):
        g = generate_random_dtdg(3, 5, 2, seed=1)
        cfg = ModelConfig(architecture=arch, in_features=2, embed_features=4)
        data = prepare_training_data(cfg, g)
        out = model_forward(cfg, data.laps, data.feats, init_params(cfg, 0))
        assert out.num_timesteps == 3
        assert all(f.shape == (5, 4) for f in out.frames)

    def test_tm_gcn_matches_dense_straight_line_oracle(self):
        t_count, n, w = 3, 4, 2
        g = generate_random_dtdg(t_count, n, 2, seed=9)
        cfg = ModelConfig(architecture="tm-gcn", in_features=2, window=w)
        data = prepare_training_data(cfg, g)
        params = init_params(cfg, 7)
        out = model_forward(cfg, data.laps, data.feats, params)

        # dense straight-line reference: no sparse ops, no blocking
        laps = [lap.to_dense() for lap in data.laps]
        frames = [f.copy() for f in data.feats.frames]
        m = build_m_matrix(t_count, w).matrix
        for key in ("gcn0.w", "gcn1.w"):
            ys = [np.maximum(l @ f @ params[key], 0.0) for l, f in zip(laps, frames)]
            frames = [
                sum(m[t, k] * ys[k] for k in range(t_count)) for t in range(t_count)
            ]
        for got, exp in zip(out.frames, frames):
            assert np.allclose(got, exp, atol=1e-12)

    @pytest.mark.parametrize("arch", ARCHES)
    def test_vertex_permutation_equivariance(self, arch):
        rng = np.random.default_rng(12)
        g = generate_random_dtdg(4, 6, 2, seed=2)
        cfg = ModelConfig(architecture=arch, in_features=2)
        data = prepare_training_data(cfg, g)
        params = init_params(cfg, 3)
        base = model_forward(cfg, data.laps, data.feats, params)

        perm = rng.permutation(6)
        # new index j holds old vertex perm[j], so old entry (r, c) moves to
        # (inv[r], inv[c]) with inv the inverse permutation
        inv = np.argsort(perm)
        laps_p = [
            SparseMatrix.from_entries(6, inv[lap.rows], inv[lap.cols], lap.vals)
            for lap in data.laps
        ]
        feats_p = FeatureSequence([f[perm] for f in data.feats.frames])
        out_p = model_forward(cfg, laps_p, feats_p, params)
        for a, b in zip(out_p.frames, base.frames):
            assert np.allclose(a, b[perm], atol=1e-12)

    def test_egcn_weight_trajectory_is_data_independent(self):
        cfg = ModelConfig(architecture="egcn-o", in_features=2)
        params = init_params(cfg, 4)
        trajectories = []
        for seed in (1, 2):
            g = generate_random_dtdg(4, 8, 2, seed=seed)
            data = prepare_training_data(cfg, g)
            state = initial_carry_state(cfg, params, 8)
            fwd = run_block_forward(
                cfg, data, params, list(range(4)), state,
                [dict(), dict()], keep_cache=True,
            )
            trajectories.append([fwd.caches[layer]["w_by_t"] for layer in range(2)])
        for layer in range(2):
            for t in range(4):
                assert np.array_equal(
                    trajectories[0][layer][t], trajectories[1][layer][t]
                )

    def test_per_vertex_temporal_independence(self):
        # altering vertex u's inputs changes only row u of the LSTM outputs
        from dtgnn.training import lstm_block_forward
        from dtgnn.models import lstm_params_from

        cfg = ModelConfig(architecture="cd-gcn", in_features=2)
        params = init_params(cfg, 5)
        cell = lstm_params_from(params, 0)
        rng = np.random.default_rng(8)
        n, width = 6, 8
        xs = {t: rng.standard_normal((n, width)) for t in range(3)}
        state = (np.zeros((n, 6)), np.zeros((n, 6)))
        ys, _, _ = lstm_block_forward(cell, state, [0, 1, 2], xs)
        xs2 = {t: xs[t].copy() for t in xs}
        xs2[1][2] += 1.0
        ys2, _, _ = lstm_block_forward(cell, state, [0, 1, 2], xs2)
        for t in (1, 2):
            diff_rows = np.where(np.any(ys[t] != ys2[t], axis=1))[0]
            assert diff_rows.tolist() == [2]


class TestMProductRnn:
    def test_delegates_to_feature_transform(self):
        from dtgnn.dtdg import m_transform_features
        from dtgnn.models import m_product_rnn

        rng = np.random.default_rng(10)
        x = FeatureSequence([rng.standard_normal((4, 3)) for _ in range(5)])
        m = build_m_matrix(5, 3)
        got = m_product_rnn(x, m)
        expected = m_transform_features(x, m)
        for a, b in zip(got.frames, expected.frames):
            assert np.array_equal(a, b)


class TestPrecomputeFirstLayer:
    def test_identity_laplacians(self):
        x = FeatureSequence([np.arange(8, dtype=np.float64).reshape(4, 2)])
        out = precompute_first_layer([SparseMatrix.identity(4)], x)
        assert np.array_equal(out[0], x.frames[0])

    def test_equals_spmm_per_frame(self):
        from dtgnn.core import spmm

        g = generate_random_dtdg(3, 5, 2, seed=3)
        laps = [normalize_laplacian(s) for s in g.snapshots]
        x = FeatureSequence([np.random.default_rng(t).standard_normal((5, 2)) for t in range(3)])
        out = precompute_first_layer(laps, x)
        for lap, frame, got in zip(laps, x.frames, out):
            assert np.array_equal(got, spmm(lap, frame))

    def test_reuse_is_bit_stable(self):
        g = generate_random_dtdg(2, 5, 2, seed=3)
        laps = [normalize_laplacian(s) for s in g.snapshots]
        x = FeatureSequence([np.ones((5, 2)), np.ones((5, 2))])
        runs = [precompute_first_layer(laps, x) for _ in range(5)]
        for other in runs[1:]:
            for a, b in zip(runs[0], other):
                assert np.array_equal(a, b)


class TestLinkPredHead:
    def test_zero_head(self):
        z = np.ones((4, 3))
        out = link_pred_forward(z, np.array([[0, 1]]), np.zeros((6, 2)), np.zeros(2))
        assert np.array_equal(out, np.zeros((1, 2)))

    def test_swap_symmetry_with_block_symmetric_head(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((5, 3))
        half = rng.standard_normal((3, 2))
        head = np.concatenate([half, half], axis=0)  # symmetric under block swap
        a = link_pred_forward(z, np.array([[1, 3]]), head, np.zeros(2))
        b = link_pred_forward(z, np.array([[3, 1]]), head, np.zeros(2))
        assert np.allclose(a, b, atol=1e-14)

    def test_hand_evaluated_single_pair(self):
        z = np.array([[1.0, 2.0], [3.0, 4.0]])
        head = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.0]])
        bias = np.array([0.25, -0.25])
        out = link_pred_forward(z, np.array([[0, 1]]), head, bias)
        # concat = [1, 2, 3, 4]; col0 = 1 + 3 + 2 = 6 (+0.25), col1 = 2 + 3 = 5 (-0.25)
        assert np.allclose(out, [[6.25, 4.75]])

    def test_out_of_range_vertex(self):
        with pytest.raises(InputError):
            link_pred_forward(np.ones((3, 2)), np.array([[0, 3]]), np.zeros((4, 2)), np.zeros(2))

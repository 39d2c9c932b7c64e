"""Shared fixtures and oracle helpers."""

import numpy as np
import pytest

from dtgnn.core import SparseMatrix
from dtgnn.dtdg import generate_random_dtdg
from dtgnn.models import ModelConfig
from dtgnn.training import (
    forward_loss,
    prepare_training_data,
    sample_link_prediction_sets,
)

ARCHES = ("tm-gcn", "cd-gcn", "egcn-o")


def sparse_from(dim, entries):
    """Entries as (row, col[, value]) tuples."""
    rows = [e[0] for e in entries]
    cols = [e[1] for e in entries]
    vals = [e[2] if len(e) > 2 else 1.0 for e in entries]
    return SparseMatrix.from_entries(dim, rows, cols, vals)


def random_sparse(rng, dim, nnz):
    keys = rng.choice(dim * dim, size=min(nnz, dim * dim), replace=False)
    vals = rng.standard_normal(keys.shape[0])
    vals[vals == 0.0] = 1.0
    return SparseMatrix.from_entries(dim, keys // dim, keys % dim, vals)


def toy_setup(arch, t=4, n=6, density=2, seed=11, theta=0.9, label_seed=5, **cfg_kw):
    """Small training instance shared by gradient tests."""
    g = generate_random_dtdg(t, n, density, seed=seed)
    cfg = ModelConfig(architecture=arch, in_features=2, **cfg_kw)
    data = prepare_training_data(cfg, g)
    train, test = sample_link_prediction_sets(g, theta, label_seed)
    return g, cfg, data, train, test


def randomize_head(params, seed=77):
    """Gradient tests need a non-zero head: the default zero-initialized
    projection makes the loss locally flat in every upstream parameter."""
    rng = np.random.default_rng(seed)
    params["head.w"] = rng.uniform(-0.5, 0.5, size=params["head.w"].shape)
    params["head.b"] = rng.uniform(-0.1, 0.1, size=params["head.b"].shape)
    return params


def finite_difference_grads(cfg, data, labels, params, step=1e-5):
    """Independent central-difference oracle over every parameter entry."""
    fd = {}
    for name in sorted(params):
        arr = params[name]
        out = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            lp = forward_loss(cfg, data, labels, params)
            arr[idx] = orig - step
            lm = forward_loss(cfg, data, labels, params)
            arr[idx] = orig
            out[idx] = (lp - lm) / (2.0 * step)
        fd[name] = out
    return fd


def assert_gradcheck(analytic, fd, rtol=1e-6, atol=1e-9):
    """Entrywise |fd - an| <= atol + rtol * max(|fd|, |an|).

    atol absorbs the roundoff floor of central differences at step 1e-5
    (about 1e-11 absolute at unit loss scale); above it the comparison is
    the stated relative tolerance.
    """
    for name in sorted(analytic):
        a, f = analytic[name], fd[name]
        err = np.abs(a - f)
        bound = atol + rtol * np.maximum(np.abs(a), np.abs(f))
        bad = err > bound
        assert not bad.any(), (
            f"{name}: {bad.sum()} entries fail gradcheck; worst "
            f"err={err.max():.3e} analytic={a[bad][0]:.6e} fd={f[bad][0]:.6e}"
        )


def max_param_diff(a: dict, b: dict) -> float:
    return max(float(np.max(np.abs(a[k] - b[k]))) for k in a)


def params_equal(a: dict, b: dict) -> bool:
    return all(np.array_equal(a[k], b[k]) for k in a)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

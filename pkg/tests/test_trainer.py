import csv

import numpy as np
import pytest

from annealsgd.anneal import AnnealConfig
from annealsgd.data import synth_blobs
from annealsgd.trainer import (
    MLP,
    Adam,
    DivergenceError,
    MLPSpec,
    NesterovSGD,
    alignment,
    default_anneal,
    min_abs_gradient,
    train,
)


def fd_grad(fun, x, eps=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return g


@pytest.fixture(scope="module")
def toy():
    return synth_blobs(3, 4, 10, 0.3, seed=2)


def test_backprop_matches_finite_differences(toy):
    net = MLP(MLPSpec(hidden=(6, 5), init="he", init_seed=1, weight_decay=1e-2), toy.dim, toy.classes)
    x, y = toy.train
    loss, g = net.loss_and_grad(x, y)
    assert loss == pytest.approx(net.loss(x, y), rel=1e-14)
    fd = fd_grad(lambda w: net.loss(x, y, w), net.w.copy())
    assert np.max(np.abs(g - fd)) / np.max(np.abs(g)) < 1e-6


def test_parameter_layout(toy):
    net = MLP(MLPSpec(hidden=(6, 5)), toy.dim, toy.classes)
    assert net.num_params == 4 * 6 + 6 + 6 * 5 + 5 + 5 * 3 + 3
    assert net.num_layers == 3
    W, b = net.layer(net.w, 1)
    assert W.shape == (6, 5) and b.shape == (5,)
    assert np.shares_memory(W, net.w)
    assert net.weight_mask().sum() == 24 + 30 + 15
    bound = 1 / np.sqrt(4)
    W0, b0 = net.layer(net.w, 0)
    assert np.abs(W0).max() <= bound and np.abs(b0).max() <= bound


def test_spec_validation():
    with pytest.raises(ValueError):
        MLPSpec(hidden=())
    with pytest.raises(ValueError):
        MLPSpec(hidden=(3, 0))
    with pytest.raises(ValueError):
        MLPSpec(init="orthogonal")


def test_min_abs_gradient_cases():
    assert min_abs_gradient(np.zeros(5)) == 0.0
    assert min_abs_gradient(np.array([-0.3])) == pytest.approx(0.3)
    assert min_abs_gradient([np.array([1.0, -2.0]), np.array([[0.5]])]) == 0.5


def test_alignment_cases():
    h = np.array([1.0, 2.0, -1.0])
    assert alignment(np.array([2.0, -1.0, 0.0]), h) == 0.0
    assert alignment(h, h) == pytest.approx(h @ h)
    with pytest.raises(ValueError):
        alignment(np.ones(2), h)


def test_optimizers_minimize_a_quadratic():
    for opt in (NesterovSGD(0.05), Adam(0.05)):
        w = np.array([3.0, -2.0])
        for _ in range(500):
            opt.step(w, 2 * w)
        assert np.abs(w).max() < 1e-2


def test_zero_learning_rate_freezes_everything():
    data = synth_blobs(2, 3, 50, 0.5, seed=0)
    spec = MLPSpec(hidden=(4,))
    m = train(spec, data, "sgd_momentum", epochs=3, batch_size=8, lr=0.0)
    assert np.array_equal(m.final_weights, MLP(spec, data.dim, data.classes).w)
    assert len(set(m.val_error)) == 1 and len(set(m.train_error)) == 1
    assert max(m.loss) - min(m.loss) < 1e-12
    assert m.alignment == [0.0, 0.0, 0.0]


def test_separable_blobs_are_learned():
    data = synth_blobs(3, 5, 60, 0.0, seed=4)
    m = train(MLPSpec(hidden=(16,), init="he"), data, "adam", epochs=20, batch_size=16, lr=1e-2)
    assert m.train_error[-1] == 0.0
    assert all(0 <= e <= 100 for e in m.val_error)


def test_training_is_deterministic_and_seeded():
    data = synth_blobs(3, 5, 30, 0.5, seed=1)
    spec = MLPSpec(hidden=(8, 8))
    ac = AnnealConfig(J=1e-2, p_est=3, n_est=5, seed=2)
    a = train(spec, data, "adam", ac, epochs=2, batch_size=8, lr=1e-2, seed=5)
    b = train(spec, data, "adam", ac, epochs=2, batch_size=8, lr=1e-2, seed=5)
    c = train(spec, data, "adam", ac, epochs=2, batch_size=8, lr=1e-2, seed=6)
    assert np.array_equal(a.final_weights, b.final_weights) and a.loss == b.loss
    assert not np.array_equal(a.final_weights, c.final_weights)


@pytest.mark.parametrize("opt", ["adam", "sgd_momentum"])
def test_zero_coupling_matches_plain_training_bitwise(opt):
    data = synth_blobs(3, 5, 30, 0.5, seed=1)
    spec = MLPSpec(hidden=(8, 8, 8))
    net = MLP(spec, data.dim, data.classes)
    plain = train(spec, data, opt, None, epochs=2, batch_size=8, lr=1e-2, seed=3)
    zero = train(spec, data, opt, default_anneal(net, J=0.0, seed=4), epochs=2, batch_size=8, lr=1e-2, seed=3)
    assert np.array_equal(plain.final_weights, zero.final_weights)
    assert plain.loss == zero.loss and plain.min_abs_grad == zero.min_abs_grad


def test_perturbation_changes_trajectory_and_alignment_nonnegative():
    data = synth_blobs(3, 5, 30, 0.5, seed=1)
    spec = MLPSpec(hidden=(8, 8, 8))
    net = MLP(spec, data.dim, data.classes)
    ac = default_anneal(net, J=1e-2, seed=1)
    plain = train(spec, data, "adam", None, epochs=1, lr=1e-2)
    fixed = train(spec, data, "adam", ac, epochs=1, lr=1e-2)
    noisy = train(spec, data, "adam", ac, "resampled", epochs=1, lr=1e-2)
    assert not np.array_equal(plain.final_weights, fixed.final_weights)
    assert not np.array_equal(fixed.final_weights, noisy.final_weights)
    assert all(a >= 0 for a in fixed.step_alignment + noisy.step_alignment)


def test_bad_arguments():
    data = synth_blobs(2, 3, 10, 0.5)
    spec = MLPSpec(hidden=(4,))
    with pytest.raises(ValueError):
        train(spec, data, "rmsprop")
    with pytest.raises(ValueError):
        train(spec, data, noise_baseline="resampled")
    with pytest.raises(ValueError):
        train(spec, data, anneal=AnnealConfig(), noise_baseline="pink")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    data = synth_blobs(2, 3, 20, 0.5)
    with pytest.raises(DivergenceError, match="non-finite"):
        train(MLPSpec(hidden=(16, 16, 16), init="he", weight_decay=0.0), data, "sgd_momentum",
              epochs=5, batch_size=4, lr=1e200)


def test_metrics_csv(tmp_path):
    data = synth_blobs(2, 3, 20, 0.5)
    m = train(MLPSpec(hidden=(4,)), data, epochs=2, lr=1e-2)
    m.write_csv(tmp_path / "m.csv")
    with open(tmp_path / "m.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "loss", "val_error", "min_abs_grad", "alignment"]
    assert len(rows) == 3 and float(rows[1][1]) == m.loss[0]


def test_default_anneal_shape(toy):
    net = MLP(MLPSpec(hidden=(32,) * 16), 20, 10)
    ac = default_anneal(net)
    assert ac.p_est == 17
    assert ac.n_est == int(np.sqrt(net.num_params / 17))

"""Forward/backward engine tests: hand-computed values, finite differences,
update rules, the training loop, and checkpoint round-trips."""

import numpy as np
import pytest

from ncap import mlp
from ncap.data import DatasetSpec, generate_blobs
from ncap.serialize import load_checkpoint, save_checkpoint


def tiny_model():
    # W1 = [[1, -1], [0, 1]], W2 = identity; x = (1, 2) gives a1 = (-1, 2)
    spec = mlp.MlpSpec([2, 2, 2])
    w1 = np.array([[1.0, -1.0], [0.0, 1.0]])
    w2 = np.eye(2)
    return mlp.MlpModel(spec, [w1, w2])


def random_model(layer_sizes, seed):
    return mlp.init_kaiming_normal(mlp.MlpSpec(layer_sizes), seed)


def random_one_hot(rng, n, k):
    y = np.zeros((n, k))
    y[np.arange(n), rng.integers(0, k, size=n)] = 1.0
    return y


def test_forward_hand_example():
    trace = mlp.forward(tiny_model(), np.array([1.0, 2.0]))
    assert np.allclose(trace.a[1], [[-1.0, 2.0]])
    assert np.allclose(trace.z[1], [[0.0, 2.0]])
    assert np.allclose(trace.sigma_prime[1], [[0.0, 1.0]])
    # softmax of (0, 2)
    e = np.exp([0.0, 2.0])
    assert np.allclose(trace.z[2], (e / e.sum())[None, :], atol=1e-15)


def test_forward_batch_matches_single():
    model = random_model([3, 5, 4, 2], seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3))
    batch = mlp.forward(model, x)
    for b in range(6):
        single = mlp.forward(model, x[b])
        for l in range(model.n_layers + 1):
            assert np.allclose(batch.z[l][b], single.z[l][0], atol=1e-15)


def test_forward_rejects_bad_input():
    model = tiny_model()
    with pytest.raises(ValueError):
        mlp.forward(model, np.zeros(3))
    with pytest.raises(ValueError):
        mlp.forward(model, np.array([1.0, np.nan]))


def test_softmax_rows_sum_to_one_and_stable():
    model = random_model([4, 6, 3], seed=2)
    x = np.random.default_rng(3).normal(size=(5, 4)) * 100.0
    trace = mlp.forward(model, x)
    z = trace.z[model.n_layers]
    assert np.all(np.isfinite(z))
    assert np.allclose(z.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(z > 0.0)


def test_relu_derivative_is_zero_at_zero():
    spec = mlp.MlpSpec([2, 1, 2])
    model = mlp.MlpModel(spec, [np.array([[1.0, -1.0]]), np.ones((2, 1))])
    trace = mlp.forward(model, np.array([1.0, 1.0]))  # a1 = 0 exactly
    assert trace.a[1][0, 0] == 0.0
    assert trace.sigma_prime[1][0, 0] == 0.0


def test_loss_hand_values():
    z = np.array([[0.7, 0.2, 0.1]])
    y = np.array([[1.0, 0.0, 0.0]])
    assert mlp.loss_cross_entropy(z, y) == pytest.approx(0.35667494393873245, abs=1e-15)
    uniform = np.full((1, 3), 1.0 / 3.0)
    assert mlp.loss_cross_entropy(uniform, y) == pytest.approx(np.log(3.0), abs=1e-12)


def test_loss_clamps_tiny_probabilities():
    z = np.array([[1.0, 0.0]])
    y = np.array([[0.0, 1.0]])
    assert mlp.loss_cross_entropy(z, y) == pytest.approx(-np.log(1e-15))


def test_loss_rejects_soft_labels():
    z = np.full((1, 2), 0.5)
    with pytest.raises(ValueError):
        mlp.loss_cross_entropy(z, np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError):
        mlp.loss_cross_entropy(z, np.array([[1.0, 1.0]]))


def test_backward_fills_trace():
    model = random_model([3, 4, 4, 2], seed=4)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 3))
    y = random_one_hot(rng, 3, 2)
    trace = mlp.forward_backward(model, x, y)
    assert trace.complete
    assert trace.residual.shape == (3, 2)
    assert np.allclose(trace.residual, trace.z[3] - y, atol=1e-15)
    assert len(trace.gradients()) == 3
    # delta recursion holds exactly: delta^(l-1) = (delta^l . mask) W^(l)
    d2 = trace.delta[2] * trace.sigma_prime[2]
    assert np.allclose(trace.delta[1], d2 @ model.weight(2), atol=1e-14)


def test_incomplete_trace_has_no_gradients():
    trace = mlp.forward(tiny_model(), np.array([1.0, 2.0]))
    assert not trace.complete
    with pytest.raises(ValueError):
        trace.gradients()


def test_output_delta_shortcut_matches_chain_rule():
    # residual z - y must equal J_softmax^T (dC/dz) with J = diag(z) - z z^T
    model = random_model([3, 5, 4], seed=6)
    rng = np.random.default_rng(7)
    x = rng.normal(size=3)
    y = np.zeros(4)
    y[2] = 1.0
    trace = mlp.forward_backward(model, x, y[None, :])
    z = trace.z[2][0]
    dc_dz = -y / np.clip(z, 1e-15, None)
    jac = np.diag(z) - np.outer(z, z)
    assert np.allclose(trace.residual[0], jac.T @ dc_dz, atol=1e-10)


def test_gradients_match_finite_differences():
    # central differences on every weight of several small nets
    rng = np.random.default_rng(8)
    h = 1e-6
    for trial in range(5):
        sizes = [3] + [int(rng.integers(2, 6)) for _ in range(rng.integers(1, 4))] + [3]
        model = random_model(sizes, seed=100 + trial)
        x = rng.normal(size=(4, 3))
        y = random_one_hot(rng, 4, 3)
        trace = mlp.forward_backward(model, x, y)
        grads = trace.gradients()
        for l in range(1, model.n_layers + 1):
            w = model.weight(l)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    orig = w[i, j]
                    w[i, j] = orig + h
                    up = mlp.loss_cross_entropy(mlp.forward(model, x).z[model.n_layers], y)
                    w[i, j] = orig - h
                    dn = mlp.loss_cross_entropy(mlp.forward(model, x).z[model.n_layers], y)
                    w[i, j] = orig
                    fd = (up - dn) / (2 * h)
                    an = grads[l - 1][i, j]
                    assert abs(an - fd) <= max(1e-9, 1e-5 * max(abs(an), abs(fd)))


def test_gradient_zero_when_prediction_exact():
    # a dead ReLU blocks everything below it
    spec = mlp.MlpSpec([2, 1, 2])
    model = mlp.MlpModel(spec, [np.array([[-1.0, -1.0]]), np.ones((2, 1))])
    x = np.array([[1.0, 1.0]])  # a1 = -2 < 0, z1 = 0
    y = np.array([[1.0, 0.0]])
    trace = mlp.forward_backward(model, x, y)
    assert np.all(trace.grad_w[1] == 0.0)


def test_sgd_step_hand_value():
    spec = mlp.MlpSpec([1, 1])
    model = mlp.MlpModel(spec, [np.array([[1.0]])])
    stepped = mlp.sgd_step(model, [np.array([[0.5]])], alpha=0.1)
    assert stepped.weight(1)[0, 0] == pytest.approx(0.95, abs=1e-15)


def test_sgd_step_frozen_layer_untouched():
    spec = mlp.MlpSpec([2, 3, 2], frozen=[False, True])
    model = mlp.init_kaiming_normal(spec, seed=9)
    grads = [np.ones((3, 2)), np.ones((2, 3))]
    stepped = mlp.sgd_step(model, grads, alpha=0.1)
    assert stepped.weight(2) is model.weight(2)  # shared array, not a copy
    assert not np.allclose(stepped.weight(1), model.weight(1))


def test_sgd_step_rejects_non_finite_gradients():
    spec = mlp.MlpSpec([1, 1])
    model = mlp.MlpModel(spec, [np.array([[1.0]])])
    with pytest.raises(mlp.DivergenceError):
        mlp.sgd_step(model, [np.array([[np.inf]])], alpha=0.1)


def test_evaluate_perfect_and_chance():
    spec = mlp.MlpSpec([2, 2])
    model = mlp.MlpModel(spec, [np.array([[10.0, 0.0], [0.0, 10.0]])])
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.eye(2)
    loss, acc = mlp.evaluate(model, x, y)
    assert acc == 1.0
    assert loss < 1e-3


def test_learning_curve_validation():
    curve = mlp.LearningCurve()
    curve.append(0, 1.0, 0.5, 0.5)
    curve.append(1, 0.9, 0.6, 0.55, beta_eff=0.2)
    assert len(curve) == 2
    assert curve.column("val_acc") == [0.5, 0.55]
    assert curve[0]["beta_eff"] is None
    with pytest.raises(ValueError):
        curve.append(1, 0.8, 0.7, 0.6)  # not increasing
    with pytest.raises(ValueError):
        curve.append(2, 0.8, 1.7, 0.6)  # accuracy outside [0, 1]


def blob_task(seed):
    ds = generate_blobs(
        DatasetSpec(
            source="synthetic-blobs",
            n_classes=2,
            n_features=3,
            n_source=0,
            n_train=256,
            n_val=256,
            n_test=0,
            seed=seed,
            separation=3.0,
            cluster_std=1.0,
            clusters_per_class=1,
        )
    )
    return ds.split("train") + ds.split("val")


def test_train_records_epoch_zero_and_t_epochs():
    xtr, ytr, xv, yv = blob_task(3)
    model = random_model([3, 8, 2], seed=0)
    final, curve = mlp.train(model, xtr, ytr, xv, yv, alpha=0.05, batch_size=32, epochs=4, seed=1)
    assert curve.column("epoch") == [0, 1, 2, 3, 4]
    # epoch 0 is the pre-update model
    loss0, acc0 = mlp.evaluate(model, xtr, ytr)
    assert curve[0]["train_loss"] == pytest.approx(loss0, abs=1e-15)
    assert curve[0]["train_acc"] == acc0


def test_train_zero_epochs_returns_input_model():
    xtr, ytr, xv, yv = blob_task(3)
    model = random_model([3, 8, 2], seed=0)
    final, curve = mlp.train(model, xtr, ytr, xv, yv, alpha=0.05, batch_size=32, epochs=0, seed=1)
    assert len(curve) == 1
    for l in range(1, model.n_layers + 1):
        assert np.array_equal(final.weight(l), model.weight(l))


def test_train_deterministic_bit_for_bit():
    xtr, ytr, xv, yv = blob_task(4)
    runs = []
    for _ in range(2):
        model = random_model([3, 8, 8, 2], seed=5)
        final, curve = mlp.train(
            model, xtr, ytr, xv, yv, alpha=0.05, batch_size=32, epochs=5, seed=6
        )
        runs.append((final, curve))
    a, b = runs
    for l in range(1, a[0].n_layers + 1):
        assert np.array_equal(a[0].weight(l), b[0].weight(l))
    assert a[1].records == b[1].records


def test_train_learns_separable_blobs():
    xtr, ytr, xv, yv = blob_task(3)
    model = random_model([3, 8, 8, 8, 2], seed=0)
    final, curve = mlp.train(model, xtr, ytr, xv, yv, alpha=0.05, batch_size=32, epochs=30, seed=11)
    assert curve.records[-1]["val_acc"] > 0.95
    assert curve.records[-1]["train_loss"] < curve.records[0]["train_loss"]


def test_train_probe_hook_called_each_record():
    xtr, ytr, xv, yv = blob_task(3)
    model = random_model([3, 8, 2], seed=0)
    seen = []

    def hook(m):
        seen.append(m)
        return float(len(seen))

    final, curve = mlp.train(
        model, xtr, ytr, xv, yv, alpha=0.05, batch_size=32, epochs=3, seed=1, probe_hook=hook
    )
    assert curve.column("beta_eff") == [1.0, 2.0, 3.0, 4.0]
    assert seen[0] is model


def test_train_divergence_raises():
    xtr, ytr, xv, yv = blob_task(3)
    model = random_model([3, 8, 2], seed=0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(mlp.DivergenceError):
            mlp.train(model, xtr * 1e150, ytr, xv, yv, alpha=1e10, batch_size=32, epochs=5, seed=1)


def test_kaiming_init_statistics():
    spec = mlp.MlpSpec([256, 256, 2])
    model = mlp.init_kaiming_normal(spec, seed=12)
    w = model.weight(1)
    want = np.sqrt(2.0 / 256.0)
    assert abs(w.std() - want) / want < 0.1
    assert abs(w.mean()) < 0.01
    # deterministic per seed
    again = mlp.init_kaiming_normal(spec, seed=12)
    assert np.array_equal(again.weight(1), w)
    assert not np.array_equal(mlp.init_kaiming_normal(spec, seed=13).weight(1), w)


def test_spec_validation():
    with pytest.raises(ValueError):
        mlp.MlpSpec([4])
    with pytest.raises(ValueError):
        mlp.MlpSpec([4, 0, 2])
    with pytest.raises(ValueError):
        mlp.MlpSpec([4, 3, 2], frozen=[True])
    with pytest.raises(ValueError):
        mlp.MlpModel(mlp.MlpSpec([2, 2]), [np.zeros((3, 2))])


def test_checkpoint_round_trip(tmp_path):
    spec = mlp.MlpSpec([3, 5, 2], frozen=[False, True])
    model = mlp.init_kaiming_normal(spec, seed=14)
    path = tmp_path / "model.json"
    save_checkpoint(model, str(path), seed=14, epoch=7)
    loaded, seed, epoch = load_checkpoint(str(path))
    assert loaded.spec == spec
    assert seed == 14 and epoch == 7
    for l in range(1, model.n_layers + 1):
        assert np.array_equal(loaded.weight(l), model.weight(l))  # 17-digit exact

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bornxy.analysis import shannon_entropy
from bornxy.common import NumericalError
from bornxy.mps import TensorTrain, init_tensor_train, to_dense
from bornxy.sampler import Dataset, sample_dense
from bornxy.training import (
    OptimizerState,
    TrainConfig,
    adam_step,
    dataset_nll,
    learning_rate_at,
    loss_and_gradient,
    nll_gradient,
    nll_loss,
    renormalize,
    train,
)
from bornxy.spin_model import DenseState

from test_mps import random_train


def dense_nll(tt, configs):
    """Oracle: Born probabilities from the expanded vector."""
    vec = to_dense(tt).amplitudes
    p = vec**2 / (vec**2).sum()
    n = tt.n_sites
    codes = np.asarray(configs) @ (1 << np.arange(n - 1, -1, -1))
    return -np.log(p[codes]).mean()


def fd_gradient(tt, configs, step=1e-5):
    grads = []
    for k, a in enumerate(tt.tensors):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            vals = []
            for sign in (1, -1):
                ts = [t.copy() for t in tt.tensors]
                ts[k][idx] += sign * step
                vals.append(nll_loss(TensorTrain(ts, tt.boundary), configs).nll)
            g[idx] = (vals[0] - vals[1]) / (2 * step)
        grads.append(g)
    return grads


def assert_grad_close(got, ref, rel=1e-5, floor=1e-8):
    for g, r in zip(got, ref):
        err = np.abs(g - r)
        assert np.all(err <= rel * np.abs(r) + floor), err.max()


def test_uniform_model_loss():
    tt = init_tensor_train(6, 2, "open", noise=0.0)
    batch = np.random.default_rng(0).integers(0, 2, (30, 6))
    assert nll_loss(tt, batch).nll == pytest.approx(6 * np.log(2), rel=1e-12)


def test_matching_distribution_loss_is_entropy():
    # a model whose Born distribution equals the batch frequencies
    freqs = np.array([0.5, 0.25, 0.25, 0.0])
    from bornxy.mps import from_dense
    tt = from_dense(DenseState(np.sqrt(freqs)))
    batch = np.array([[0, 0], [0, 0], [0, 1], [1, 0]])
    data = Dataset(batch, 2)
    assert nll_loss(tt, batch).nll == pytest.approx(shannon_entropy(data), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["open", "periodic"]), st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_loss_matches_dense_oracle(boundary, n, d, seed):
    tt = random_train(n, d, boundary, seed)
    batch = np.random.default_rng(seed).integers(0, 2, (20, n))
    assert nll_loss(tt, batch).nll == pytest.approx(dense_nll(tt, batch), rel=1e-10)


@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_gradient_matches_finite_differences(boundary):
    tt = random_train(4, 2, boundary, seed=17)
    batch = np.random.default_rng(1).integers(0, 2, (12, 4))
    assert_grad_close(nll_gradient(tt, batch), fd_gradient(tt, batch))


def test_gradient_zero_at_one_hot_optimum():
    target = [1, 0, 1, 1]
    ts = []
    for k, s in enumerate(target):
        t = np.zeros((1, 2, 1))
        t[0, s, 0] = 1.0
        ts.append(t)
    tt = TensorTrain(ts, "open")
    grads = nll_gradient(tt, np.array([target]))
    assert all(np.abs(g).max() == 0.0 for g in grads)


def test_zero_amplitude_in_batch_names_the_configuration():
    ts = []
    for _ in range(3):
        t = np.zeros((1, 2, 1))
        t[0, 0, 0] = 1.0
        ts.append(t)
    tt = TensorTrain(ts, "open")
    with pytest.raises(NumericalError, match="010"):
        nll_gradient(tt, np.array([[0, 0, 0], [0, 1, 0]]))


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["open", "periodic"]), st.floats(0.01, 100), st.integers(0, 2**32 - 1))
def test_loss_is_scale_invariant(boundary, c, seed):
    tt = random_train(5, 2, boundary, seed)
    batch = np.random.default_rng(seed).integers(0, 2, (15, 5))
    scaled = TensorTrain([t * c for t in tt.tensors], boundary)
    assert nll_loss(scaled, batch).nll == pytest.approx(nll_loss(tt, batch).nll, rel=1e-10, abs=1e-10)


def test_renormalize_keeps_loss():
    tt = random_train(6, 3, "periodic", 2)
    batch = np.random.default_rng(2).integers(0, 2, (25, 6))
    before = nll_loss(tt, batch).nll
    renormalize(tt)
    after = nll_loss(tt, batch)
    assert after.log_z == pytest.approx(0.0, abs=1e-12)
    assert after.nll == pytest.approx(before, rel=1e-12)


def test_adam_zero_gradient_is_a_no_op():
    p = [np.array([1.5, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], OptimizerState.zeros_like(p), TrainConfig())
    assert np.array_equal(new[0], p[0])
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    cfg = TrainConfig(learning_rate=0.1)
    p = [np.array([0.0])]
    new, _ = adam_step(p, [np.array([3.0])], OptimizerState.zeros_like(p), cfg)
    assert abs(abs(new[0][0]) - 0.1) < 1e-6


def test_adam_three_step_trace():
    # hand-computed bias-corrected Adam, lr = 0.1, p0 = 0
    expected = [-0.09999999900000009, -0.12663370262909696, -0.16067661693515362]
    cfg = TrainConfig(learning_rate=0.1)
    p = [np.array([0.0])]
    state = OptimizerState.zeros_like(p)
    for g, want in zip([1.0, -0.5, 0.25], expected):
        p, state = adam_step(p, [np.array([g])], state, cfg)
        assert abs(p[0][0] - want) < 1e-12


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(2)], OptimizerState.zeros_like(p), TrainConfig())


def test_learning_rate_schedule():
    const = TrainConfig(learning_rate=0.01)
    assert learning_rate_at(const, 37, 100) == 0.01
    decay = TrainConfig(learning_rate=0.01, final_learning_rate=0.001)
    assert learning_rate_at(decay, 0, 101) == pytest.approx(0.01)
    assert learning_rate_at(decay, 50, 101) == pytest.approx(np.sqrt(1e-5))
    assert learning_rate_at(decay, 100, 101) == pytest.approx(0.001)


@pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"epochs": 0}, {"learning_rate": -1},
                                    {"adam_beta1": 1.0}, {"prob_floor": 0}, {"final_learning_rate": 0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_collapse_to_single_configuration():
    data = Dataset(np.tile([1, 0, 0, 1, 1], (10000, 1)), 5)
    tt = init_tensor_train(5, 2, "open", seed=3)
    model, hist = train(tt, data, TrainConfig())
    p = to_dense(model).probabilities()
    assert hist.epoch_loss[-1] < 0.01
    assert p[0b10011] > 0.99


def small_problem():
    vec = np.random.default_rng(4).random(2**6)
    state = DenseState(vec / np.linalg.norm(vec))
    data = sample_dense(state, 600, seed=2)
    return state, data


def test_history_shapes_and_lower_bound():
    state, data = small_problem()
    cfg = TrainConfig(batch_size=64, epochs=4, learning_rate=0.01)
    tt = init_tensor_train(6, 2, "periodic", seed=1, noise=0.1, noise_kind="positive")
    model, hist = train(tt, data, cfg, reference=state)
    assert len(hist.step_loss) == 4 * int(np.ceil(600 / 64)) == len(hist.step_epoch)
    assert len(hist.epoch_loss) == len(hist.epoch_fidelity) == len(hist.epoch_seconds) == 4
    s = shannon_entropy(data)
    assert all(loss >= s - 1e-9 for loss in hist.epoch_loss)
    assert dataset_nll(model, data) == pytest.approx(hist.epoch_loss[-1], rel=1e-12)
    assert hist.epoch_loss[-1] < hist.initial_loss


def test_training_does_not_touch_input_and_is_deterministic():
    _, data = small_problem()
    cfg = TrainConfig(batch_size=50, epochs=2, learning_rate=0.01, shuffle_seed=5)
    tt = init_tensor_train(6, 3, "open", seed=2)
    snapshot = [t.copy() for t in tt.tensors]
    m1, h1 = train(tt, data, cfg)
    m2, h2 = train(tt, data, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(tt.tensors, snapshot))
    assert np.array(h1.step_loss).tobytes() == np.array(h2.step_loss).tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m1.tensors, m2.tensors))


def test_train_rejects_size_mismatch():
    _, data = small_problem()
    with pytest.raises(ValueError):
        train(init_tensor_train(5, 2, "open"), data)


def test_complex_trains_are_not_trainable():
    from bornxy.mps import rotate_basis
    tt = rotate_basis(random_train(4, 2, "open", 0), "y")
    with pytest.raises(TypeError):
        loss_and_gradient(tt, np.zeros((2, 4), dtype=int))

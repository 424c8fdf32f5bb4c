import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offnet.core import RngStream
from offnet.gradcheck import numerical_grad, relative_error
from offnet.models import ModelSpec, build_model
from offnet.optim import (
    Adam,
    Amsgrad,
    CheckpointError,
    EarlyStopping,
    EncodedSet,
    TrainConfig,
    amsgrad_step,
    binary_cross_entropy,
    categorical_cross_entropy,
    iter_batches,
    l2_penalty,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)


class CheckedAmsgrad(Amsgrad):
    """Asserts that every v_hat entry never decreases."""

    def step(self, params, grads):
        before = {k: v.copy() for k, v in self.v_hat.items()}
        super().step(params, grads)
        for k, old in before.items():
            assert np.all(self.v_hat[k] >= old)


def quadratic_run(steps, lr=0.01, theta0=1.0):
    theta = {"t": np.array([theta0])}
    opt = CheckedAmsgrad(lr)
    trace = []
    for _ in range(steps):
        opt.step(theta, {"t": 2 * theta["t"]})
        trace.append(float(theta["t"][0]))
    return trace


def scripted_amsgrad(steps, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar reference written directly from the update rule."""
    th, m, v, vh = 1.0, 0.0, 0.0, 0.0
    for _ in range(steps):
        g = 2 * th
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        vh = max(vh, v)
        th = th - lr * m / (math.sqrt(vh) + eps)
    return th


# -- losses -------------------------------------------------------------------

def test_loss_examples():
    assert loss("binary_cross_entropy", [0.5], [1])[0] == pytest.approx(math.log(2), abs=1e-12)
    assert loss("binary_cross_entropy", [1.0, 0.0], [1, 0])[0] == pytest.approx(0.0, abs=1e-10)
    assert loss("categorical_cross_entropy", [[1 / 3] * 3], [2])[0] == pytest.approx(math.log(3), abs=1e-12)
    with pytest.raises(ValueError):
        loss("hinge", [0.5], [1])


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients_match_differences(seed):
    rng = RngStream(seed)
    p = rng.uniform(0.05, 0.95, 6)
    y = (rng.random(6) < 0.5).astype(float)
    _, g = binary_cross_entropy(p, y)
    num = numerical_grad(lambda: binary_cross_entropy(p, y)[0], p, 1e-6)
    assert relative_error(g, num) < 1e-6
    q = rng.uniform(0.05, 1.0, (4, 3))
    gold = rng.integers(0, 3, 4)
    _, g = categorical_cross_entropy(q, gold)
    num = numerical_grad(lambda: categorical_cross_entropy(q, gold)[0], q, 1e-6)
    assert relative_error(g, num) < 1e-6


# -- AMSGrad ------------------------------------------------------------------

def test_amsgrad_zero_gradient():
    params = {"w": np.array([1.0, -2.0])}
    amsgrad_step(Amsgrad(), params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_amsgrad_single_step():
    theta = quadratic_run(1)[0]
    # m = 0.2, v_hat = 0.004, step = 0.01 * 0.2 / sqrt(0.004)
    assert theta == pytest.approx(1 - 0.01 * 0.2 / (math.sqrt(0.004) + 1e-8), abs=1e-15)
    assert theta == pytest.approx(0.968377, abs=1e-6)


def test_amsgrad_convergence_matches_script():
    trace = quadratic_run(2000)
    assert abs(trace[-1]) < 1e-2
    assert trace[-1] == pytest.approx(scripted_amsgrad(2000), rel=1e-9, abs=1e-300)


def test_amsgrad_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        Amsgrad().step({"w": np.zeros(3)}, {"w": np.zeros(2)})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40))
def test_vhat_monotone(gs):
    opt = CheckedAmsgrad(0.1)
    p = {"w": np.zeros(1)}
    for g in gs:
        opt.step(p, {"w": np.array([g])})


def test_descent_sanity():
    loss_curve = [t * t for t in quadratic_run(300, lr=0.001)]
    for s in range(10, 290):
        assert loss_curve[s + 10] <= loss_curve[s]


def test_adam_bias_correction():
    p = {"w": np.array([1.0])}
    Adam(lr=0.1).step(p, {"w": np.array([3.0])})
    # first corrected step is lr * sign(g)
    assert p["w"][0] == pytest.approx(0.9, abs=1e-7)


# -- L2 -----------------------------------------------------------------------

def test_l2_examples(rng):
    w = {"W": rng.normal(size=(2, 3))}
    assert l2_penalty(w, 0.0)[0] == 0.0
    assert not l2_penalty(w, 0.0)[1]["W"].any()
    assert l2_penalty({"W": np.array([3.0, 4.0])}, 0.01)[0] == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        l2_penalty(w, -1)


def test_l2_gradient(rng):
    w = {"A": rng.normal(size=(3, 2)), "B": rng.normal(size=4)}
    _, g = l2_penalty(w, 0.01)
    for k in w:
        num = numerical_grad(lambda: l2_penalty(w, 0.01)[0], w[k], 1e-5)
        assert relative_error(g[k], num) < 1e-6


# -- early stopping and batching -----------------------------------------------

def test_early_stopping_sequence():
    es = EarlyStopping(patience=2)
    events = [es.update(v, 0.01) for v in [1.0, 0.9, 0.95, 0.97]]
    assert [e[1] for e in events] == [False, False, False, True]
    assert es.best_epoch == 2


def test_lr_reduction_schedule():
    es = EarlyStopping(patience=3, factor=0.5, min_lr=0.003)
    lr = 0.01
    lrs = []
    for v in [1.0, 1.1, 1.2]:
        _, stop, lr = es.update(v, lr)
        lrs.append(lr)
    assert lrs == [0.01, 0.01, 0.005]
    es = EarlyStopping(patience=3, factor=0.1, min_lr=0.003)
    es.update(1.0, 0.01)
    es.update(2.0, 0.01)
    assert es.update(2.0, 0.01)[2] == 0.003


def test_batch_count():
    assert len(list(iter_batches(7000, 128, RngStream(0)))) == 55
    covered = np.concatenate(list(iter_batches(7000, 128, RngStream(0))))
    np.testing.assert_array_equal(np.sort(covered), np.arange(7000))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


# -- training ------------------------------------------------------------------

def tiny_problem(n=24, L=6, vocab=12, seed=0):
    rng = RngStream(seed, 50)
    x = rng.integers(2, vocab, (n, L))
    y = (np.arange(n) % 2).astype(np.int64)
    x[y == 1, 0] = 2
    x[y == 0, 0] = 3
    mask = np.ones((n, L))
    spec = ModelSpec.keis_bigru(vocab, embed_dim=4, seq_len=L, rnn_units=3, dense_units=5)
    return spec, EncodedSet(x, mask, y, [f"r{i}" for i in range(n)])


def test_training_is_reproducible():
    spec, data = tiny_problem()
    cfg = TrainConfig(epochs=4, batch_size=8, seed=3)
    _, h1 = train(build_model(spec, RngStream(1)), data, data, cfg)
    _, h2 = train(build_model(spec, RngStream(1)), data, data, cfg)
    assert h1.to_csv() == h2.to_csv()


def test_train_returns_best_epoch():
    from offnet.optim import evaluate
    spec, data = tiny_problem()
    cfg = TrainConfig(epochs=12, batch_size=4, lr=0.3, seed=0, patience=2)
    model, hist = train(build_model(spec, RngStream(2)), data, data, cfg)
    assert len(hist.val_loss) == len(hist.lr)
    best = int(np.argmin(hist.val_loss))
    assert hist.best_epoch == best + 1
    assert evaluate(model, data)[0] == pytest.approx(hist.val_loss[best], abs=1e-12)
    assert evaluate(model, data)[0] <= min(hist.val_loss) + 1e-12


def test_train_rejects_bad_labels():
    spec, data = tiny_problem()
    bad = EncodedSet(data.x, data.mask, data.y + 1, data.ids)
    with pytest.raises(ValueError, match="head"):
        train(build_model(spec, RngStream(0)), bad, data, TrainConfig(epochs=1))
    empty = data.subset(np.array([], dtype=int))
    with pytest.raises(ValueError, match="empty"):
        train(build_model(spec, RngStream(0)), empty, data, TrainConfig(epochs=1))


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    spec, data = tiny_problem()
    model, _ = train(build_model(spec, RngStream(4)), data, data, TrainConfig(epochs=2, batch_size=8))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, {"note": "x"})
    loaded, meta = load_checkpoint(path, spec)
    assert meta == {"note": "x"}
    for k, v in model.params().items():
        assert loaded.params()[k].tobytes() == v.tobytes()


def test_checkpoint_spec_mismatch(tmp_path):
    spec, _ = tiny_problem()
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(spec, RngStream(0)), path)
    other = ModelSpec.keis_cnn(12, embed_dim=4, seq_len=7)
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(path, other)
    assert spec.digest() in str(exc.value) and other.digest() in str(exc.value)


@pytest.mark.parametrize("cut", [3, 30, 200, -5, -1])
def test_checkpoint_truncated(tmp_path, cut):
    spec, _ = tiny_problem()
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(spec, RngStream(0)), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:cut])
    with pytest.raises(CheckpointError, match="offset"):
        load_checkpoint(path)


def test_checkpoint_bit_flip(tmp_path):
    spec, _ = tiny_problem()
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(spec, RngStream(0)), path)
    blob = bytearray(path.read_bytes())
    blob[-20] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)

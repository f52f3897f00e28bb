import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dprl.tensornet import (
    ACTIVATIONS,
    DenseNet,
    DimensionError,
    FourierTimeEmbedding,
    NonFiniteError,
    Optimizer,
    Var,
    autodiff as ad,
    ema_update,
    forward,
    grad,
    optimizer_step,
)
from dprl.tensornet.dense import activate

from fdcheck import central_diff, max_rel_error


def naive_forward(widths, activation, params, x):
    """Triple-loop matmul reference, independent of the vectorized path."""
    off = 0
    h = list(x)
    for li, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        W = params[off:off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = params[off:off + fo]
        off += fo
        z = []
        for j in range(fo):
            acc = b[j]
            for i in range(fi):
                acc += h[i] * W[i, j]
            z.append(acc)
        if li < len(widths) - 2:
            z = [_act(activation, v) for v in z]
        h = z
    return np.array(h)


def _act(kind, v):
    if kind == "relu":
        return max(v, 0.0)
    if kind == "tanh":
        return np.tanh(v)
    if kind == "elu":
        return v if v > 0 else np.expm1(v)
    if kind == "silu":
        return v / (1 + np.exp(-v))
    if kind == "mish":
        return v * np.tanh(np.log1p(np.exp(v)))
    return v


def test_param_count_matches_layout():
    net = DenseNet([3, 5, 4, 2])
    assert net.num_params == (3 + 1) * 5 + (5 + 1) * 4 + (4 + 1) * 2


def test_zero_params_give_zero_output():
    net = DenseNet([4, 8, 3], "tanh")
    np.testing.assert_array_equal(forward(net, np.arange(4.0)), np.zeros(3))


def test_identity_single_layer():
    net = DenseNet([3, 3], "identity")
    (W, b), = net.weights()
    W[...] = np.eye(3)
    x = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(net.forward(x), x)


@pytest.mark.parametrize("activation", ACTIVATIONS)
def test_forward_matches_naive_matmul(activation):
    rng = np.random.default_rng(7)
    widths = [4, 6, 5, 3]
    net = DenseNet.init(widths, activation, rng)
    x = rng.normal(size=4)
    np.testing.assert_allclose(net.forward(x), naive_forward(widths, activation, net.params, x), rtol=1e-12, atol=1e-12)


def test_dimension_error_names_widths():
    net = DenseNet([3, 2])
    with pytest.raises(DimensionError) as err:
        net.forward(np.zeros(5))
    assert err.value.expected == 3 and err.value.actual == 5


def test_constant_loss_head_gives_zero_grads():
    rng = np.random.default_rng(0)
    net = DenseNet.init([3, 4, 2], "tanh", rng)
    pg, xg = grad(net, lambda out: 3.0, rng.normal(size=3))
    assert not pg.any() and not xg.any()


def test_linear_quadratic_gradient_by_hand():
    rng = np.random.default_rng(1)
    net = DenseNet.init([3, 2], "identity", rng)
    net.params[-2:] = rng.normal(size=2)
    x = rng.normal(size=3)
    pg, xg = grad(net, lambda out: 0.5 * ad.vsum(ad.square(out)), x)
    out = net.forward(x)
    (W, _), = net.weights()
    np.testing.assert_allclose(pg[:6].reshape(3, 2), np.outer(x, out), rtol=1e-12)
    np.testing.assert_allclose(pg[6:], out, rtol=1e-12)
    np.testing.assert_allclose(xg, W @ out, rtol=1e-12)


@pytest.mark.parametrize("activation", ACTIVATIONS)
@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(activation, seed):
    rng = np.random.default_rng(seed)
    net = DenseNet.init([3, 5, 4, 2], activation, rng)
    net.params[:] += 0.1 * rng.normal(size=net.num_params)
    x = rng.normal(size=(2, 3))
    target = rng.normal(size=(2, 2))

    def head(out):
        return ad.mean(ad.square(out - target)) + ad.mean(ad.tanh(out))

    pg, xg = grad(net, head, x)

    def loss_p(p):
        return float(ad.value(head(DenseNet([3, 5, 4, 2], activation, p).forward(x))))

    def loss_x(xx):
        return float(ad.value(head(net.forward(xx))))

    assert max_rel_error(pg, central_diff(loss_p, net.params)) < 1e-4
    assert max_rel_error(xg, central_diff(loss_x, x)) < 1e-4


def test_non_finite_forward_names_layer():
    net = DenseNet([1, 2, 1], "relu")
    net.params[:] = 1e308
    with pytest.raises(NonFiniteError) as err, np.errstate(over="ignore"):
        net.forward(np.array([1e308]))
    assert err.value.layer == 0


def test_mish_is_finite_for_large_inputs():
    z = np.array([-800.0, -30.0, 0.0, 25.0, 800.0])
    a, d = activate("mish", z)
    assert np.all(np.isfinite(a)) and np.all(np.isfinite(d))
    np.testing.assert_allclose(a[-2:], z[-2:], rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_forward_is_bitwise_pure(seed):
    rng = np.random.default_rng(seed)
    net = DenseNet.init([2, 7, 3], "mish", rng)
    x = rng.normal(size=(4, 2))
    assert np.array_equal(net.forward(x), net.forward(x.copy()))


def test_fourier_pairs_have_unit_norm():
    emb = FourierTimeEmbedding(64)
    feats = emb(np.linspace(0, 1, 11))
    pair_norm = feats[:, :32] ** 2 + feats[:, 32:] ** 2
    np.testing.assert_allclose(pair_norm, 1.0, rtol=1e-12)
    assert emb.frequencies[0] == 1.0 and np.isclose(emb.frequencies[-1], 1e4)


@pytest.mark.parametrize("dim", [0, 3, -2])
def test_fourier_rejects_bad_dim(dim):
    with pytest.raises(ValueError):
        FourierTimeEmbedding(dim)


def test_sgd_zero_grad_and_definition():
    p = np.array([1.0, -2.0])
    opt = Optimizer("sgd", 0.1)
    np.testing.assert_array_equal(optimizer_step(opt, p, np.zeros(2)), p)
    g = np.array([0.5, 3.0])
    np.testing.assert_allclose(optimizer_step(opt, p, g), p - 0.1 * g)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), min_size=1, max_size=6))
def test_adam_first_step_opposes_gradient(g):
    g = np.array(g)
    p = np.zeros_like(g)
    opt = Optimizer("adam", 1e-3)
    new = optimizer_step(opt, p, g)
    np.testing.assert_array_equal(np.sign(new - p), -np.sign(g))
    assert opt.m.shape == p.shape and opt.v.shape == p.shape


def test_optimizer_shape_mismatch():
    with pytest.raises(ValueError):
        optimizer_step(Optimizer(), np.zeros(3), np.zeros(2))


def test_ema_definition_cases():
    t, o = np.zeros(3), np.ones(3)
    np.testing.assert_array_equal(ema_update(t, o, 0.0), t)
    np.testing.assert_array_equal(ema_update(t, o, 1.0), o)
    np.testing.assert_allclose(ema_update(np.zeros(1), np.ones(1), 0.005), [0.005])
    with pytest.raises(ValueError):
        ema_update(t, o, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_ema_contracts_toward_online(seed, rate):
    rng = np.random.default_rng(seed)
    t, o = rng.normal(size=5), rng.normal(size=5)
    new = ema_update(t, o, rate)
    assert np.linalg.norm(new - o) <= (1 - rate) * np.linalg.norm(t - o) + 1e-12


def test_checkpoint_bytes_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    net = DenseNet.init([3, 4, 2], "elu", rng)
    net.save(tmp_path / "n.fpnet")
    back = DenseNet.load(tmp_path / "n.fpnet")
    assert back.layer_widths == net.layer_widths and back.activation == "elu"
    assert back.params.tobytes() == net.params.tobytes()
    blob = net.to_bytes()
    assert blob[:5] == b"FPNET"
    with pytest.raises(ValueError):
        DenseNet.from_bytes(b"XXXXX" + blob[5:])


def test_var_ops_gradients():
    rng = np.random.default_rng(5)
    x0 = rng.uniform(0.5, 1.5, size=(3, 2))

    def f(xv):
        return ad.mean(ad.logsumexp(ad.sqrt(xv) * ad.exp(-xv), axis=-1) + ad.minimum(xv, 1.0)[:, 0])

    x = Var(x0, requires_grad=True)
    f(x).backward()
    num = central_diff(lambda v: float(ad.value(f(v))), x0)
    assert max_rel_error(x.grad, num) < 1e-6

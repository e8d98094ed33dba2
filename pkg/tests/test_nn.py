import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvadbench import _kernels, nn


def _tiny_lstm_params(d=3, h=4, seed=0):
    rng = np.random.default_rng(seed)
    p = nn.ParameterSet()
    nn.add_lstm(p, rng, "l", d, h)
    nn.add_linear(p, rng, "out", h, 3)
    p["l.b"].data[:] = rng.normal(size=4 * h) * 0.3
    return p


def test_lstm_gradients_match_finite_differences():
    p = _tiny_lstm_params()
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, 6)

    def loss():
        h, _, _ = nn.run_lstm(p, "l", x)
        return nn.softmax_cross_entropy(nn.run_linear(p, "out", h), y)

    errs = nn.gradient_check(loss, p)
    assert max(errs.values()) < 1e-6


def test_batched_lstm_gradients():
    p = _tiny_lstm_params(d=2, h=3, seed=4)
    x = np.random.default_rng(2).normal(size=(5, 4, 2))
    y = np.array([0, 1, 2, 1])

    def loss():
        h = nn.mean_time(nn.run_lstm(p, "l", x)[0])
        return nn.softmax_cross_entropy(nn.run_linear(p, "out", h), y)

    assert max(nn.gradient_check(loss, p).values()) < 1e-6


def test_film_cosine_concat_gradients():
    rng = np.random.default_rng(3)
    p = nn.ParameterSet()
    p.add("x", rng.normal(size=(4, 3)))
    p.add("g", rng.normal(size=(4, 3)))
    p.add("b", rng.normal(size=(4, 3)))
    e = rng.normal(size=3)

    def loss():
        f = nn.film(p["x"], p["g"], p["b"])
        z = nn.concat([f, nn.cosine_rows(p["x"], e)])
        return nn.softmax_cross_entropy(nn.slice_last(z, 1, 4), np.array([0, 2, 1, 0]))

    assert max(nn.gradient_check(loss, p).values()) < 1e-6


def test_unused_parameter_gets_zero_gradient():
    p = _tiny_lstm_params()
    p.add("unused", np.ones(3))
    h, _, _ = nn.run_lstm(p, "l", np.ones((2, 3)))
    g = nn.backward(nn.softmax_cross_entropy(nn.run_linear(p, "out", h), np.array([0, 1])), p)
    assert np.all(g["unused"] == 0)


def test_backward_requires_scalar_and_graph():
    with pytest.raises(nn.GraphError):
        nn.backward(nn.Tensor(np.ones(3), requires_grad=True))
    with pytest.raises(nn.GraphError):
        nn.backward(nn.Tensor(1.0))


def test_repeated_backward_does_not_accumulate():
    p = _tiny_lstm_params()
    x = np.ones((3, 3))

    def loss():
        return nn.softmax_cross_entropy(nn.run_linear(p, "out", nn.run_lstm(p, "l", x)[0]), np.zeros(3, int))

    g1 = nn.backward(loss(), p)
    g2 = nn.backward(loss(), p)
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


def test_cross_entropy_label_range():
    with pytest.raises(ValueError):
        nn.softmax_cross_entropy(nn.Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_affine_shape_error():
    with pytest.raises(nn.ShapeError):
        nn.affine(np.ones((2, 3)), np.ones((4, 5)))


def test_adam_first_step_is_lr_times_sign():
    p = nn.ParameterSet()
    p.add("w", np.zeros(3))
    opt = nn.Adam(p, lr=0.01)
    opt.step({"w": np.array([2.0, -0.5, 1e-3])})
    np.testing.assert_allclose(p["w"].data, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_minimises_quadratic():
    p = nn.ParameterSet()
    p.add("w", np.array([3.0, -2.0]))
    opt = nn.Adam(p, lr=0.05)
    for _ in range(500):
        opt.step({"w": 2 * p["w"].data})
    assert np.all(np.abs(p["w"].data) < 1e-2)


def test_parameter_set_roundtrip_and_count():
    p = _tiny_lstm_params()
    assert p.count() == nn.lstm_param_count(3, 4) + nn.linear_param_count(4, 3)
    snap = p.arrays()
    p["l.w_ih"].data[:] = 0
    p.load_arrays(snap)
    np.testing.assert_array_equal(p["l.w_ih"].data, snap["l.w_ih"])
    with pytest.raises(KeyError):
        p.add("l.b", np.zeros(1))


def test_softmax_rows_sum_to_one():
    z = np.random.default_rng(0).normal(size=(5, 3)) * 50
    np.testing.assert_allclose(nn.softmax(z).sum(axis=1), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(1, 3), st.integers(1, 6), st.integers(0, 10_000))
def test_numba_and_numpy_kernels_agree(T, B, H, seed):
    if not hasattr(_kernels, "lstm_forward_numba"):
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(seed)
    xproj = rng.normal(size=(T, B, 4 * H))
    w = rng.normal(size=(H, 4 * H)) * 0.5
    h0 = rng.normal(size=(B, H))
    c0 = rng.normal(size=(B, H))
    a = _kernels.lstm_forward_numpy(xproj, w, h0, c0)
    b = _kernels.lstm_forward_numba(xproj, w, h0, c0)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=1e-12)
    dhs = rng.normal(size=(T, B, H))
    dz, dw, dh0, dc0 = _kernels.lstm_backward_numpy(dhs, a[2], a[0], a[1], h0, c0, w)
    dz2, dh02, dc02 = _kernels.lstm_backward_numba(dhs, a[2], a[0], a[1], h0, c0, w)
    np.testing.assert_allclose(dz, dz2, atol=1e-12)
    np.testing.assert_allclose(dh0, dh02, atol=1e-12)
    np.testing.assert_allclose(dc0, dc02, atol=1e-12)

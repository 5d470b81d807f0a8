import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import astnlab.autograd as ag
from astnlab.autograd import Tensor, default_dtype, finite_difference_check


def naive_conv2d(x, k, stride=1, pad=0):
    c, w, h = x.shape
    o, _, kw, kh = k.shape
    xp = np.zeros((c, w + 2 * pad, h + 2 * pad))
    xp[:, pad:pad + w, pad:pad + h] = x
    wo = (w + 2 * pad - kw) // stride + 1
    ho = (h + 2 * pad - kh) // stride + 1
    out = np.zeros((o, wo, ho))
    for oc in range(o):
        for i in range(wo):
            for j in range(ho):
                acc = 0.0
                for ic in range(c):
                    for a in range(kw):
                        for b in range(kh):
                            acc += xp[ic, i * stride + a, j * stride + b] * k[oc, ic, a, b]
                out[oc, i, j] = acc
    return out


def naive_conv1d(x, k, stride=1, pad=0):
    c, length = x.shape
    o, _, kk = k.shape
    xp = np.zeros((c, length + 2 * pad))
    xp[:, pad:pad + length] = x
    lo = (length + 2 * pad - kk) // stride + 1
    out = np.zeros((o, lo))
    for oc in range(o):
        for i in range(lo):
            out[oc, i] = sum(xp[ic, i * stride + a] * k[oc, ic, a] for ic in range(c) for a in range(kk))
    return out


# -- leaky relu ----------------------------------------------------------------


@pytest.mark.parametrize("x,w,expected", [(2.0, 0.01, 2.0), (-1.0, 0.01, -0.01), (0.0, 0.3, 0.0)])
def test_leaky_relu_examples(x, w, expected):
    out = ag.leaky_relu(Tensor(np.array([x], dtype=np.float64)), w)
    assert out.values[0] == pytest.approx(expected, abs=1e-15)


def test_leaky_relu_slope_gradient():
    x = Tensor(np.array([-2.0, -0.5, 0.0, 1.5]), requires_grad=True)
    ag.leaky_relu(x, 0.2).sum().backward()
    np.testing.assert_array_equal(x.grad, [0.2, 0.2, 1.0, 1.0])


def test_leaky_relu_rejects_bad_slope():
    with pytest.raises(ValueError):
        ag.leaky_relu(Tensor([1.0]), 1.5)


# -- convolution ---------------------------------------------------------------


def test_conv2d_sum_of_ones():
    out = ag.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == 9.0


def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).random((1, 5, 5)).astype(np.float32)
    out = ag.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1), dtype=np.float32)))
    np.testing.assert_array_equal(out.values, x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_matches_naive_loops(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.standard_normal((2, 8, 8)).astype(np.float32)
    k = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    out = ag.conv2d(Tensor(x), Tensor(k), stride=stride, padding=pad)
    ref = naive_conv2d(x.astype(np.float64), k.astype(np.float64), stride, pad)
    assert out.shape == ref.shape
    assert np.max(np.abs(out.values - ref)) < 1e-5


def test_conv2d_batched_equals_per_sample():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 2, 6, 5))
    k = rng.standard_normal((4, 2, 3, 3))
    batched = ag.conv2d(Tensor(x), Tensor(k), padding=1).values
    for i in range(3):
        np.testing.assert_allclose(batched[i], ag.conv2d(Tensor(x[i]), Tensor(k), padding=1).values, atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ValueError, match="channels"):
        ag.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_conv2d_output_size_formula():
    out = ag.conv2d(Tensor(np.ones((1, 7, 9))), Tensor(np.ones((2, 1, 3, 3))), stride=2, padding=1)
    assert out.shape == (2, (7 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)


def test_conv1d_hand_sum():
    out = ag.conv1d(Tensor(np.array([[1.0, 2.0, 3.0]])), Tensor(np.ones((1, 1, 2))))
    np.testing.assert_array_equal(out.values, [[3.0, 5.0]])


def test_conv1d_identity():
    x = np.random.default_rng(1).standard_normal((1, 7))
    out = ag.conv1d(Tensor(x), Tensor(np.ones((1, 1, 1))))
    np.testing.assert_array_equal(out.values, x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv1d_matches_naive_loops(stride, pad):
    rng = np.random.default_rng(7 + stride + pad)
    x = rng.standard_normal((3, 12)).astype(np.float32)
    k = rng.standard_normal((5, 3, 3)).astype(np.float32)
    out = ag.conv1d(Tensor(x), Tensor(k), stride=stride, padding=pad)
    ref = naive_conv1d(x.astype(np.float64), k.astype(np.float64), stride, pad)
    assert np.max(np.abs(out.values - ref)) < 1e-5


def test_max_pool_tie_routes_to_first_index():
    x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
    ag.max_pool2d(x, 2).sum().backward()
    np.testing.assert_array_equal(x.grad, [[[1.0, 0.0], [0.0, 0.0]]])
    y = Tensor(np.array([[3.0, 3.0, 1.0, 1.0]]), requires_grad=True)
    ag.max_pool1d(y, 2).sum().backward()
    np.testing.assert_array_equal(y.grad, [[1.0, 0.0, 1.0, 0.0]])


# -- backward semantics --------------------------------------------------------


def test_sum_gradient_is_ones():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_square_gradient():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, -4.0])


def test_two_consumers_accumulate():
    x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    (x.sum() + (x * x).sum()).backward()
    np.testing.assert_allclose(x.grad, 1 + 2 * x.values)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (x * 2.0).backward()


def test_second_backward_is_an_error():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(RuntimeError, match="consumed"):
        loss.backward()


def test_tape_is_topological():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ag.tanh(x) * ag.sigmoid(x)
    loss = (y + x).sum()
    order = ag.tape(loss)
    pos = {id(n): i for i, n in enumerate(order)}
    assert len(pos) == len(order)
    for node in order:
        for parent in node._parents:
            assert pos[id(parent)] < pos[id(node)]


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with ag.no_grad():
        y = (x * x).sum()
    assert not y.requires_grad and y.is_leaf


def test_ops_do_not_mutate_inputs():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
    k = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
    before = a.values.copy(), k.values.copy()
    out = ag.max_pool2d(ag.leaky_relu(ag.conv2d(a, k, padding=1)), 2)
    ag.bce(ag.sigmoid(out), np.zeros(out.shape)).backward()
    np.testing.assert_array_equal(a.values, before[0])
    np.testing.assert_array_equal(k.values, before[1])


def test_forward_values_stay_finite():
    x = Tensor(np.array([-1e4, -50.0, 0.0, 50.0, 1e4], dtype=np.float32))
    for out in (ag.sigmoid(x), ag.tanh(x), ag.leaky_relu(x)):
        assert np.all(np.isfinite(out.values))
    assert np.isfinite(ag.bce(ag.sigmoid(x), np.ones(5)).values)


# -- finite differences --------------------------------------------------------


def test_fd_sum_of_squares():
    with default_dtype(np.float64):
        p = Tensor(np.array([3.0]), requires_grad=True)
        assert finite_difference_check(lambda: (p * p).sum(), [p]) < 1e-9


def test_fd_leaky_relu_away_from_kink():
    rng = np.random.default_rng(0)
    v = rng.uniform(0.1, 1.0, 20) * rng.choice([-1, 1], 20)
    x = Tensor(v, requires_grad=True)
    assert finite_difference_check(lambda: ag.leaky_relu(x, 0.01).sum(), [x]) < 1e-8


def _primitive_cases(rng):
    """(name, params, loss builder) triples; losses are nonlinear so every input matters."""
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    c = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=False)
    img = Tensor(rng.standard_normal((2, 2, 5, 6)), requires_grad=True)
    k2 = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b2 = Tensor(rng.standard_normal(3), requires_grad=True)
    seq = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True)
    k1 = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
    b1 = Tensor(rng.standard_normal(4), requires_grad=True)
    # distinct values keep max-pool away from ties
    pool_in = Tensor(rng.permutation(96).reshape(2, 3, 4, 4) * 0.1, requires_grad=True)
    pool1_in = Tensor(rng.permutation(48).reshape(2, 3, 8) * 0.1, requires_grad=True)
    lr_in = Tensor(rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1, 1], (3, 4)), requires_grad=True)
    probs = Tensor(rng.uniform(0.05, 0.95, 6), requires_grad=True)
    labels = rng.integers(0, 2, 6)
    sq = lambda t: (t * w).sum() if t.shape == w.shape else ag.square(t).sum()
    return [
        ("add", [a, c], lambda: sq(ag.add(a, c) * a)),
        ("sub", [a, c], lambda: sq(ag.sub(a, c) * c)),
        ("mul", [a, c], lambda: sq(ag.mul(a, c))),
        ("square", [a], lambda: sq(ag.square(a))),
        ("abs", [lr_in], lambda: sq(ag.abs(lr_in) * lr_in)),
        ("matmul", [a, b], lambda: ag.square(ag.matmul(a, b)).sum()),
        ("sigmoid", [a], lambda: sq(ag.sigmoid(a))),
        ("tanh", [a], lambda: sq(ag.tanh(a))),
        ("leaky_relu", [lr_in], lambda: sq(ag.leaky_relu(lr_in, 0.1) * lr_in)),
        ("mean", [a], lambda: ag.square(ag.mean(a * a, axis=0)).sum() + ag.mean(a) * ag.mean(a)),
        ("concat", [a, c], lambda: ag.square(ag.concat([a * a, c], axis=1)).mean()),
        ("stack", [a, c], lambda: ag.square(ag.stack([a, c * a], axis=1)).sum()),
        ("take", [a], lambda: ag.square(ag.take(a * a, [2, 0, 2], axis=0)).sum()),
        ("getitem", [a], lambda: ag.square(a[1:, ::2] * a[:2, 1::2]).sum()),
        ("transpose", [a], lambda: ag.square(a.transpose() @ c.detach()).sum()),
        ("conv2d", [img, k2, b2], lambda: ag.square(ag.conv2d(img, k2, b2, stride=1, padding=1)).sum()),
        ("conv2d_strided", [img, k2], lambda: ag.square(ag.conv2d(img, k2, stride=2, padding=1)).sum()),
        ("conv1d", [seq, k1, b1], lambda: ag.square(ag.conv1d(seq, k1, b1, padding=1)).sum()),
        ("max_pool2d", [pool_in], lambda: ag.square(ag.max_pool2d(pool_in, 2)).sum()),
        ("max_pool1d", [pool1_in], lambda: ag.square(ag.max_pool1d(pool1_in, 2)).sum()),
        ("bce", [probs], lambda: ag.bce(probs, labels, np.linspace(0.5, 1.5, 6))),
    ]


PRIMITIVE_NAMES = [name for name, _, _ in _primitive_cases(np.random.default_rng(0))]


@pytest.mark.parametrize("name", PRIMITIVE_NAMES)
def test_primitive_gradients_over_ten_seeds(name):
    worst = 0.0
    with default_dtype(np.float64):
        for seed in range(10):
            cases = {n: (p, f) for n, p, f in _primitive_cases(np.random.default_rng(seed))}
            params, f = cases[name]
            worst = max(worst, finite_difference_check(f, params, eps=1e-5))
    assert worst < 1e-6, f"{name}: {worst:.2e}"


# -- Adam ----------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    state = ag.AdamState()
    before = p.values.copy()
    ag.adam_update([p], [np.zeros(2, dtype=np.float32)], state)
    np.testing.assert_array_equal(p.values, before)
    assert state.step_count == 1


@pytest.mark.parametrize("g", [1e-3, 0.5, -3.0, 250.0])
def test_adam_first_step_magnitude(g):
    p = Tensor(np.array([0.0]), requires_grad=True)
    state = ag.AdamState(lr=1e-3)
    ag.adam_update([p], [np.array([g])], state)
    # first step: m_hat = g, v_hat = g^2
    expected = 1e-3 * abs(g) / (abs(g) + 1e-8)
    assert abs(abs(p.values[0]) - expected) < 1e-12
    assert abs(abs(p.values[0]) - 1e-3) < 1e-6


def test_adam_shape_mismatch():
    p = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError):
        ag.adam_update([p], [np.zeros(2)], ag.AdamState())


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.standard_normal((4, 3)).astype(np.float32), requires_grad=True)
        opt = ag.Adam([p])
        for _ in range(20):
            opt.zero_grad()
            ag.square(ag.tanh(p)).sum().backward()
            opt.step()
        return p.values.tobytes()

    assert run() == run()


# -- checkpoint container --------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"w": rng.standard_normal((3, 4)).astype(np.float32), "b": np.arange(5, dtype=np.float64)}
    path = tmp_path / "p.astn"
    ag.save_tensors(path, tensors, {"note": "x"})
    assert path.read_bytes()[:5] == b"ASTN1"
    loaded, meta = ag.load_tensors(path)
    assert meta == {"note": "x"}
    for k, v in tensors.items():
        assert loaded[k].dtype == v.dtype
        assert loaded[k].tobytes() == v.tobytes()


def test_checkpoint_rejects_damage(tmp_path):
    path = tmp_path / "p.astn"
    ag.save_tensors(path, {"w": np.ones(100, dtype=np.float32)})
    data = path.read_bytes()
    (tmp_path / "trunc.astn").write_bytes(data[:-10])
    with pytest.raises(ag.CheckpointError, match="truncated"):
        ag.load_tensors(tmp_path / "trunc.astn")
    (tmp_path / "magic.astn").write_bytes(b"XXXX1" + data[5:])
    with pytest.raises(ag.CheckpointError, match="magic"):
        ag.load_tensors(tmp_path / "magic.astn")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12))
def test_mean_gradient_property(xs):
    x = Tensor(np.array(xs), requires_grad=True)
    x.mean().backward()
    np.testing.assert_allclose(x.grad, np.full(len(xs), 1.0 / len(xs)))

import math

import numpy as np
import pytest

from coughgan import nn
from coughgan.errors import DomainError, ShapeError, TrainingError
from coughgan.nn import conv as convmod


def naive_conv2d(x, k, s):
    """Nested-loop cross-correlation with explicit high-side-biased padding."""
    B, H, W, C = x.shape
    kh, kw, _, O = k.shape
    Ho, Wo = -(-H // s), -(-W // s)
    ph = max((Ho - 1) * s + kh - H, 0)
    pw = max((Wo - 1) * s + kw - W, 0)
    top, left = ph // 2, pw // 2
    y = np.zeros((B, Ho, Wo, O))
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                for di in range(kh):
                    for dj in range(kw):
                        r, c = i * s + di - top, j * s + dj - left
                        if 0 <= r < H and 0 <= c < W:
                            y[b, i, j] += x[b, r, c] @ k[di, dj]
    return y


class FixedMask:
    """Stands in for a Generator so a dropout mask repeats across calls."""

    def __init__(self, values):
        self.values = values

    def random(self, shape):
        return self.values.reshape(shape)


class TestDense:
    def test_examples(self, rng):
        d = nn.Dense(2, 2, rng)
        d.params["kernel"][:] = np.eye(2)
        d.params["bias"][:] = 1
        np.testing.assert_array_equal(d.forward(np.array([[1.0, 2.0]], np.float32)), [[2, 3]])
        d.params["bias"][:] = 0
        x = rng.normal(size=(3, 2)).astype(np.float32)
        np.testing.assert_array_equal(d.forward(x), x)

    def test_shape_error(self, rng):
        with pytest.raises(ShapeError):
            nn.Dense(3, 2, rng).forward(np.ones((1, 4), np.float32))


class TestEmbedding:
    def test_lookup_and_scatter(self, rng):
        e = nn.Embedding(50, 1, rng)
        out = e.forward(np.array([[0], [3], [3]]))
        assert out.shape == (3, 1, 1)
        assert out[0, 0, 0] == e.params["table"][0, 0]
        e.backward(np.array([[[1.0]], [[2.0]], [[5.0]]], np.float32))
        assert e.grads["table"][3, 0] == 7.0 and e.grads["table"][0, 0] == 1.0

    def test_range(self, rng):
        with pytest.raises(DomainError):
            nn.Embedding(50, 1, rng).forward(np.array([[50]]))


class TestConv:
    def test_same_padding_high_side(self):
        assert nn.same_padding(24, 3, 2) == (12, 0, 1)
        assert nn.same_padding(3, 3, 2) == (2, 1, 1)
        assert nn.same_padding(5, 5, 1) == (5, 2, 2)

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 5, 4, 1))
        k = np.zeros((3, 3, 1, 1))
        k[1, 1] = 1
        np.testing.assert_allclose(nn.conv2d(x, k)[0], x)

    def test_discriminator_spatial_chain(self):
        h, w = 128, 24
        trace = [(h, w)]
        for _ in range(4):
            h, w = nn.same_padding(h, 3, 2)[0], nn.same_padding(w, 3, 2)[0]
            trace.append((h, w))
        assert trace == [(128, 24), (64, 12), (32, 6), (16, 3), (8, 2)]
        assert 8 * 2 * 512 == 8192

    @pytest.mark.parametrize("shape,ks,s", [((2, 7, 5, 3), 3, 1), ((1, 8, 6, 2), 3, 2), ((2, 5, 5, 1), 5, 2),
                                            ((1, 9, 4, 2), 5, 1), ((1, 3, 3, 4), 3, 2)])
    def test_matches_nested_loops(self, rng, shape, ks, s):
        x = rng.normal(size=shape)
        k = rng.normal(size=(ks, ks, shape[3], 3))
        np.testing.assert_allclose(nn.conv2d(x, k, s)[0], naive_conv2d(x, k, s), rtol=1e-5, atol=1e-10)

    def test_transpose_shapes(self, rng):
        y, _ = nn.conv2d_transpose(rng.normal(size=(1, 16, 3, 4)), rng.normal(size=(5, 5, 2, 4)), 2)
        assert y.shape == (1, 32, 6, 2)
        y, _ = nn.conv2d_transpose(rng.normal(size=(1, 16, 3, 4)), rng.normal(size=(5, 5, 2, 4)), 1)
        assert y.shape == (1, 16, 3, 2)

    def test_adjoint_random_geometries(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            s = int(rng.choice([1, 2]))
            kk = int(rng.choice([1, 3, 5]))
            cin, cout = rng.integers(1, 5, size=2)
            h, w = rng.integers(1, 7, size=2)
            b = int(rng.integers(1, 3))
            x = rng.normal(size=(b, h * s, w * s, cin))
            k = rng.normal(size=(kk, kk, cin, cout))
            y = rng.normal(size=(b, h, w, cout))
            lhs = np.sum(nn.conv2d(x, k, s)[0] * y)
            rhs = np.sum(x * nn.conv2d_transpose(y, k, s)[0])
            assert lhs == pytest.approx(rhs, rel=1e-4, abs=1e-9)

    def test_chunked_transpose_matches_unchunked(self, rng, monkeypatch):
        x = rng.normal(size=(5, 4, 3, 3))
        k = rng.normal(size=(5, 5, 2, 3))
        dy = rng.normal(size=(5, 8, 6, 2))
        y_full, cache = nn.conv2d_transpose(x, k, 2)
        dx_full, dk_full = nn.conv2d_transpose_backward(dy, cache)
        monkeypatch.setattr(convmod, "_chunk", lambda per_sample: 2)
        y, cache = nn.conv2d_transpose(x, k, 2)
        dx, dk = nn.conv2d_transpose_backward(dy, cache)
        np.testing.assert_allclose(y, y_full, atol=1e-12)
        np.testing.assert_allclose(dx, dx_full, atol=1e-12)
        np.testing.assert_allclose(dk, dk_full, atol=1e-12)

    def test_errors(self, rng):
        with pytest.raises(ShapeError):
            nn.conv2d(rng.normal(size=(1, 4, 4, 2)), rng.normal(size=(3, 3, 3, 1)))
        with pytest.raises(ShapeError):
            nn.conv2d(rng.normal(size=(1, 4, 4, 1)), rng.normal(size=(3, 3, 1, 1)), stride=0)


class TestBatchNorm:
    def test_standardizes(self, rng):
        bn = nn.BatchNorm(3)
        y = bn.forward(rng.normal(2, 5, size=(8, 4, 4, 3)).astype(np.float32), training=True)
        assert np.all(np.abs(y.mean(axis=(0, 1, 2))) < 1e-5)
        np.testing.assert_allclose(y.var(axis=(0, 1, 2)), 1, atol=1e-3)

    def test_momentum_zero(self, rng):
        bn = nn.BatchNorm(2)
        x = rng.normal(size=(4, 3, 3, 2)).astype(np.float32)
        bn.forward(x, training=True)
        np.testing.assert_array_equal(bn.buffers["moving_mean"], x.mean(axis=(0, 1, 2)))
        np.testing.assert_allclose(bn.buffers["moving_var"], x.var(axis=(0, 1, 2)), rtol=1e-6)

    def test_inference_uses_moving(self, rng):
        bn = nn.BatchNorm(1)
        bn.buffers["moving_mean"][:] = 2.0
        bn.buffers["moving_var"][:] = 4.0 - 1e-3
        np.testing.assert_allclose(bn.forward(np.full((1, 1, 1, 1), 4.0, np.float32)), [[[[1.0]]]], rtol=1e-6)

    def test_batch_of_one(self):
        with pytest.raises(DomainError):
            nn.BatchNorm(2).forward(np.ones((1, 2, 2, 2), np.float32), training=True)


class TestActivations:
    def test_values(self):
        assert nn.leaky_relu(np.array(-1.0)) == pytest.approx(-0.2)
        np.testing.assert_allclose(nn.softmax(np.zeros((1, 3))), [[1 / 3] * 3])
        big = np.array([[1000.0, 0.0, -1000.0]])
        assert np.isfinite(nn.softmax(big)).all()
        assert np.all(np.abs(np.tanh(np.array([-1e6, 1e6, 0.3]))) <= 1)
        assert nn.sigmoid(np.array([-800.0, 800.0])).tolist() == [0.0, 1.0]

    def test_softmax_rows(self, rng):
        p = nn.softmax(rng.normal(scale=10, size=(50, 7)))
        np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)

    def test_unknown(self):
        with pytest.raises(DomainError):
            nn.Activation("gelu")


class TestDropout:
    def test_identity_cases(self, rng):
        x = rng.normal(size=(4, 4)).astype(np.float32)
        assert nn.Dropout(0.5, rng).forward(x, training=False) is x
        assert nn.Dropout(0.0, rng).forward(x, training=True) is x

    def test_survivor_fraction(self):
        y = nn.Dropout(0.5, np.random.default_rng(3)).forward(np.ones(10**6, np.float32), training=True)
        assert abs(np.mean(y > 0) - 0.5) <= 0.002
        assert set(np.unique(y)) == {0.0, 2.0}

    def test_rate_bounds(self, rng):
        with pytest.raises(DomainError):
            nn.Dropout(1.0, rng)

    def test_reproducible(self):
        x = np.ones((10, 10), np.float32)
        a = nn.Dropout(0.5, np.random.default_rng(5)).forward(x, training=True)
        b = nn.Dropout(0.5, np.random.default_rng(5)).forward(x, training=True)
        np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------ grad checks

def _layers(rng):
    mask = rng.random(2 * 3 * 3 * 2)
    v = rng.normal(size=(4, 6))
    away_from_kink = np.sign(v) * (np.abs(v) + 0.1)
    return [
        ("dense", nn.Dense(4, 3, rng), rng.normal(size=(5, 4)), 1e-4),
        ("embedding", nn.Embedding(50, 2, rng), np.array([[1], [7], [1]]), 1e-4),
        ("conv2d_s1", nn.Conv2D(2, 3, 3, 1, rng), rng.normal(size=(2, 5, 4, 2)), 1e-4),
        ("conv2d_s2", nn.Conv2D(2, 3, 3, 2, rng), rng.normal(size=(2, 6, 5, 2)), 1e-4),
        ("conv2d_transpose_s2", nn.Conv2DTranspose(3, 2, 5, 2, rng, stddev=0.5), rng.normal(size=(2, 3, 2, 3)), 1e-4),
        ("conv2d_transpose_s1", nn.Conv2DTranspose(2, 2, 5, 1, rng, stddev=0.5), rng.normal(size=(1, 4, 3, 2)), 1e-4),
        ("batchnorm", nn.BatchNorm(2), rng.normal(size=(4, 3, 2, 2)), 1e-3),
        ("dropout", nn.Dropout(0.5, FixedMask(mask)), rng.normal(size=(2, 3, 3, 2)), 1e-4),
        ("relu", nn.Activation("relu"), away_from_kink, 1e-4),
        ("leaky_relu", nn.Activation("leaky_relu"), away_from_kink, 1e-4),
        ("sigmoid", nn.Activation("sigmoid"), rng.normal(size=(4, 6)), 1e-4),
        ("tanh", nn.Activation("tanh"), rng.normal(size=(4, 6)), 1e-4),
        ("softmax", nn.Activation("softmax"), rng.normal(size=(4, 6)), 1e-4),
        ("linear", nn.Activation("linear"), rng.normal(size=(4, 6)), 1e-4),
        ("reshape", nn.Reshape((6, 1)), rng.normal(size=(3, 2, 3)), 1e-4),
        ("flatten", nn.Flatten(), rng.normal(size=(3, 2, 3)), 1e-4),
    ]


@pytest.mark.parametrize("idx", range(16))
def test_grad_check(idx):
    name, layer, x, tol = _layers(np.random.default_rng(11))[idx]
    report = nn.grad_check(layer, x, tolerance=tol)
    assert report.passed, (name, report.max_rel_error)


def test_grad_check_batchnorm_inference():
    bn = nn.BatchNorm(3)
    bn.buffers["moving_mean"][:] = [0.1, -0.2, 0.3]
    bn.buffers["moving_var"][:] = [0.5, 1.5, 2.0]
    assert nn.grad_check(bn, np.random.default_rng(1).normal(size=(2, 3, 3)), training=False).passed


class _SignFlipDense(nn.Dense):
    def backward(self, dy):
        dx = super().backward(dy)
        self.grads["kernel"] = -self.grads["kernel"]
        return dx


def test_negative_control():
    rng = np.random.default_rng(0)
    report = nn.grad_check(_SignFlipDense(4, 3, rng), rng.normal(size=(5, 4)))
    assert not report.passed
    assert report.max_rel_error["param:kernel"] > 0.5


# ----------------------------------------------------------------- losses

class TestLosses:
    def test_bce_values(self):
        assert nn.bce_loss(np.array([1.0]), np.array([1.0]))[0] <= 1e-6
        assert nn.bce_loss(np.array([0.5]), np.array([1.0]))[0] == pytest.approx(math.log(2), abs=1e-6)

    def test_bce_grad(self, rng):
        p = rng.uniform(0.05, 0.95, size=7)
        y = (rng.random(7) > 0.5).astype(float)
        _, g = nn.bce_loss(p, y)
        h = 1e-6
        for i in range(7):
            e = np.zeros(7)
            e[i] = h
            num = (nn.bce_loss(p + e, y)[0] - nn.bce_loss(p - e, y)[0]) / (2 * h)
            assert g[i] == pytest.approx(num, rel=1e-4)

    def test_fused_sigmoid_grad(self, rng):
        z = rng.normal(size=(6, 1))
        y = (rng.random((6, 1)) > 0.5).astype(float)
        p = nn.sigmoid(z)
        _, dp = nn.bce_loss(p, y)
        np.testing.assert_allclose(nn.sigmoid_bce_grad(p, y), dp * p * (1 - p), rtol=1e-6)

    def test_scce_values(self):
        assert nn.scce_loss(np.array([[0.0, 1.0, 0.0]]), [1])[0] <= 1e-6
        assert nn.scce_loss(np.full((2, 3), 1 / 3), [0, 2])[0] == pytest.approx(math.log(3), abs=1e-6)

    def test_fused_softmax_grad(self, rng):
        z = rng.normal(size=(4, 3))
        labels = np.array([0, 2, 1, 2])
        p = nn.softmax(z)
        onehot = np.eye(3)[labels]
        np.testing.assert_allclose(nn.softmax_scce_grad(p, labels), (p - onehot) / 4, atol=1e-12)
        _, dp = nn.scce_loss(p, labels)
        chain = p * (dp - (dp * p).sum(axis=1, keepdims=True))
        np.testing.assert_allclose(nn.softmax_scce_grad(p, labels), chain, atol=1e-6)

    def test_label_range(self):
        with pytest.raises(ShapeError):
            nn.scce_loss(np.full((1, 3), 1 / 3), [3])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.bce_loss(np.ones(3), np.ones(2))


# ------------------------------------------------------------------- adam

class TestAdam:
    def test_first_step(self):
        w = {"w": np.array([1.0])}
        nn.Adam().step(w, {"w": np.array([3.0])})
        assert w["w"][0] == pytest.approx(1.0 - 2e-4, abs=1e-9)

    def test_zero_gradient(self):
        w = {"w": np.array([1.0, -2.0])}
        nn.Adam().step(w, {"w": np.zeros(2)})
        np.testing.assert_array_equal(w["w"], [1.0, -2.0])

    def test_quadratic_bowl(self):
        opt = nn.Adam(lr=0.01)
        w = {"w": np.array([1.0])}
        trace = []
        for _ in range(500):
            opt.step(w, {"w": 2 * w["w"]})
            trace.append(abs(w["w"][0]))
        assert all(b < a for a, b in zip(trace[10:], trace[11:]) if a > 1e-3)
        assert trace[-1] < trace[10]

    def test_non_finite(self):
        w = {"w": np.array([1.0])}
        with pytest.raises(TrainingError):
            nn.Adam().step(w, {"w": np.array([np.nan])})
        assert w["w"][0] == 1.0

    def test_state_round_trip(self, rng):
        opt = nn.Adam()
        w = {"a": rng.normal(size=3), "b": rng.normal(size=(2, 2))}
        for _ in range(3):
            opt.step(w, {k: rng.normal(size=v.shape) for k, v in w.items()})
        opt.step({"a": w["a"]}, {"a": np.ones(3)})
        other = nn.Adam()
        other.load_state(opt.state())
        assert other.t == {"a": 4, "b": 3}
        g = {k: rng.normal(size=v.shape) for k, v in w.items()}
        w2 = {k: v.copy() for k, v in w.items()}
        opt.step(w, g)
        other.step(w2, g)
        for k in w:
            np.testing.assert_array_equal(w[k], w2[k])

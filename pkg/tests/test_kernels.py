"""Kernel backends: agreement with each other and with finite differences."""

import numpy as np
import pytest

from ecgdenoise.tiramisu import kernels, kernels_numpy

try:
    from ecgdenoise.tiramisu import _corekern
except ImportError:
    _corekern = None

BACKENDS = [kernels_numpy] + ([_corekern] if _corekern else [])


def _fd_grad(f, arr, h=1e-6):
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
class TestConv1d:
    @pytest.mark.parametrize("pad", [0, 1])
    def test_matches_direct_convolution(self, backend, pad):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 10))
        w = rng.standard_normal((4, 3, 3))
        b = rng.standard_normal(4)
        y = backend.conv1d_forward(x, w, b, pad)
        lout = 10 + 2 * pad - 3 + 1
        assert y.shape == (2, 4, lout)
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        for bi in range(2):
            for co in range(4):
                for j in range(lout):
                    expected = b[co] + np.sum(w[co] * xp[bi, :, j : j + 3])
                    assert abs(y[bi, co, j] - expected) < 1e-12

    @pytest.mark.parametrize("pad", [0, 1])
    def test_gradients_match_fd(self, backend, pad):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 8))
        w = rng.standard_normal((2, 3, 3))
        b = rng.standard_normal(2)
        dy = rng.standard_normal(backend.conv1d_forward(x, w, b, pad).shape)

        def loss():
            return float(np.sum(backend.conv1d_forward(x, w, b, pad) * dy))

        dx, dw, db = backend.conv1d_backward(x, w, dy, pad)
        assert np.allclose(dx, _fd_grad(loss, x), atol=1e-6)
        assert np.allclose(dw, _fd_grad(loss, w), atol=1e-6)
        assert np.allclose(db, _fd_grad(loss, b), atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
class TestConvTranspose:
    def test_forward_definition(self, backend):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 5))
        w = rng.standard_normal((2, 3, 3))
        b = rng.standard_normal(3)
        y = backend.convtr1d_forward(x, w, b, 2)
        assert y.shape == (1, 3, 11)  # (5-1)*2 + 3
        expected = np.tile(b[:, None], (1, 11))[None]
        for i in range(5):
            for t in range(3):
                expected[0, :, 2 * i + t] += x[0, :, i] @ w[:, :, t]
        assert np.allclose(y, expected, atol=1e-12)

    def test_gradients_match_fd(self, backend):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 2, 5))
        w = rng.standard_normal((2, 2, 3))
        b = rng.standard_normal(2)
        dy = rng.standard_normal(backend.convtr1d_forward(x, w, b, 2).shape)

        def loss():
            return float(np.sum(backend.convtr1d_forward(x, w, b, 2) * dy))

        dx, dw, db = backend.convtr1d_backward(x, w, dy, 2)
        assert np.allclose(dx, _fd_grad(loss, x), atol=1e-6)
        assert np.allclose(dw, _fd_grad(loss, w), atol=1e-6)
        assert np.allclose(db, _fd_grad(loss, b), atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
class TestMaxPool(object):
    def test_forward_and_ties(self, backend):
        x = np.array([[[1.0, 3.0, 2.0, 2.0, -1.0, -5.0]]])
        y, idx = backend.maxpool2_forward(x)
        assert y.tolist() == [[[3.0, 2.0, -1.0]]]
        assert idx.tolist() == [[[1, 0, 0]]]  # tie resolves left

    def test_backward_routes_to_argmax(self, backend):
        x = np.array([[[1.0, 3.0, 2.0, 0.0]]])
        y, idx = backend.maxpool2_forward(x)
        dy = np.array([[[10.0, 20.0]]])
        dx = backend.maxpool2_backward(idx, dy)
        assert dx.tolist() == [[[0.0, 10.0, 20.0, 0.0]]]


@pytest.mark.skipif(_corekern is None, reason="compiled extension not built")
class TestBackendParity:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_all_ops_agree(self, dtype):
        rng = np.random.default_rng(4)
        tol = dict(rtol=1e-4, atol=1e-5) if dtype == np.float32 else dict(rtol=1e-10, atol=1e-12)
        x = rng.standard_normal((3, 5, 16)).astype(dtype)
        w = rng.standard_normal((7, 5, 3)).astype(dtype)
        b = rng.standard_normal(7).astype(dtype)
        for pad in (0, 1):
            y_np = kernels_numpy.conv1d_forward(x, w, b, pad)
            y_c = _corekern.conv1d_forward(x, w, b, pad)
            assert y_c.dtype == dtype
            assert np.allclose(y_np, y_c, **tol)
            dy = rng.standard_normal(y_np.shape).astype(dtype)
            for g_np, g_c in zip(
                kernels_numpy.conv1d_backward(x, w, dy, pad),
                _corekern.conv1d_backward(x, w, dy, pad),
            ):
                assert np.allclose(g_np, g_c, **tol)
        wt = rng.standard_normal((5, 4, 3)).astype(dtype)
        bt = rng.standard_normal(4).astype(dtype)
        y_np = kernels_numpy.convtr1d_forward(x, wt, bt, 2)
        y_c = _corekern.convtr1d_forward(x, wt, bt, 2)
        assert np.allclose(y_np, y_c, **tol)
        dy = rng.standard_normal(y_np.shape).astype(dtype)
        for g_np, g_c in zip(
            kernels_numpy.convtr1d_backward(x, wt, dy, 2),
            _corekern.convtr1d_backward(x, wt, dy, 2),
        ):
            assert np.allclose(g_np, g_c, **tol)

    def test_selected_backend_is_compiled_by_default(self):
        import os

        if os.environ.get("ECGDENOISE_BACKEND", "auto") in ("auto", "compiled"):
            assert kernels.backend_name() == "compiled"

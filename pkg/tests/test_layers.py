import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_rff.cvnn import layers as L
from volterra_rff.errors import ConfigError

from _util import crandn


def conv_loops(x, w, b, stride, pad):
    """Direct complex cross-correlation with zero padding."""
    bsz, _, n = x.shape
    out_ch, in_ch, k = w.shape
    lo = (n + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    y = np.zeros((bsz, out_ch, lo), complex)
    for bi in range(bsz):
        for o in range(out_ch):
            for t in range(lo):
                y[bi, o, t] = b[o] + sum(w[o, c, j] * xp[bi, c, t * stride + j] for c in range(in_ch) for j in range(k))
    return y


class TestConv:
    def test_identity_kernel_stride_one(self, rng):
        x = crandn(rng, 2, 1, 20)
        w = np.zeros((1, 1, 9), complex)
        w[0, 0, 4] = 1
        y = L.complex_conv1d(L.ComplexTensor.from_complex(x), w, np.zeros(1), stride=1, pad=4)
        assert np.array_equal(y.to_complex(), x)

    def test_imaginary_kernel_rotates(self, rng):
        x = crandn(rng, 1, 1, 12)
        w = np.zeros((1, 1, 9), complex)
        w[0, 0, 4] = 1j
        y = L.complex_conv1d(L.ComplexTensor.from_complex(x), w, np.zeros(1), stride=1, pad=4)
        assert np.allclose(y.to_complex(), 1j * x, atol=1e-15)

    def test_matches_loops(self, rng):
        x = crandn(rng, 2, 3, 17)
        w = crandn(rng, 4, 3, 9)
        b = crandn(rng, 4)
        y = L.complex_conv1d(L.ComplexTensor.from_complex(x), w, b)
        assert np.allclose(y.to_complex(), conv_loops(x, w, b, 2, 4), atol=1e-12)

    @pytest.mark.parametrize("n,out", [(910, 455), (15, 8), (8, 4), (1, 1)])
    def test_output_length(self, n, out):
        assert L.conv_output_length(n) == out

    def test_linear(self, rng):
        w = crandn(rng, 2, 1, 9)
        x1, x2 = crandn(rng, 1, 1, 30), crandn(rng, 1, 1, 30)
        a, b = 0.3 - 1.2j, 2 + 0.5j

        def f(x):
            return L.complex_conv1d(L.ComplexTensor.from_complex(x), w, np.zeros(2)).to_complex()

        assert np.allclose(f(a * x1 + b * x2), a * f(x1) + b * f(x2), atol=1e-12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ConfigError):
            L.complex_conv1d(L.ComplexTensor.from_complex(crandn(rng, 1, 2, 10)), crandn(rng, 1, 3, 9), np.zeros(1))


def bn_params(c, **over):
    p = {k: np.ones(c) if k.startswith(("gamma", "var")) else np.zeros(c)
         for k in ("gamma_re", "beta_re", "gamma_im", "beta_im", "mean_re", "var_re", "mean_im", "var_im")}
    p.update(over)
    return p


class TestBatchNorm:
    def test_train_mode_standardizes_each_part(self, rng):
        x = L.ComplexTensor.from_complex(3 + 2j + crandn(rng, 8, 3, 11) * np.array([1, 5, 0.1])[None, :, None])
        y = L.complex_batchnorm(x, bn_params(3), eps=1e-5)
        for part, src in ((y.re, x.re), (y.im, x.im)):
            v = src.var(axis=(0, 2))
            assert np.allclose(part.mean(axis=(0, 2)), 0, atol=1e-12)
            assert np.allclose(part.var(axis=(0, 2)), v / (v + 1e-5), rtol=1e-12)

    def test_constant_channel_goes_to_beta(self):
        x = L.ComplexTensor(np.full((4, 1, 5), 7.0), np.full((4, 1, 5), -2.0))
        y = L.complex_batchnorm(x, bn_params(1, beta_re=np.array([0.5]), beta_im=np.array([-0.25])))
        assert np.allclose(y.re, 0.5) and np.allclose(y.im, -0.25)
        assert np.all(np.isfinite(y.re))

    def test_eval_mode_is_affine_with_running_stats(self, rng):
        x = crandn(rng, 3, 2, 6)
        p = bn_params(2, mean_re=np.array([1.0, -1]), var_re=np.array([4.0, 9]),
                      gamma_im=np.array([2.0, 3]), beta_im=np.array([0.1, 0.2]))
        y = L.complex_batchnorm(L.ComplexTensor.from_complex(x), p, "eval", eps=0.0)
        exp_re = (x.real - np.array([1, -1])[None, :, None]) / np.array([2, 3])[None, :, None]
        exp_im = x.imag * np.array([2, 3])[None, :, None] + np.array([0.1, 0.2])[None, :, None]
        assert np.allclose(y.re, exp_re) and np.allclose(y.im, exp_im)

    def test_train_mode_leaves_params_alone(self, rng):
        p = bn_params(2)
        before = {k: v.copy() for k, v in p.items()}
        L.complex_batchnorm(L.ComplexTensor.from_complex(crandn(rng, 4, 2, 5)), p)
        assert all(np.array_equal(p[k], before[k]) for k in p)

    def test_single_value_rejected(self):
        with pytest.raises(ConfigError):
            L.complex_batchnorm(L.ComplexTensor(np.ones((1, 1, 1)), np.ones((1, 1, 1))), bn_params(1))

    def test_bad_mode(self, rng):
        with pytest.raises(ConfigError):
            L.complex_batchnorm(L.ComplexTensor.from_complex(crandn(rng, 2, 1, 3)), bn_params(1), "infer")


class TestActivations:
    def test_silu_values(self):
        assert L.silu(np.array([0.0]))[0] == 0.0
        assert L.silu(np.array([1.0]))[0] == pytest.approx(0.7310585786, abs=1e-9)
        assert L.silu(np.array([-20.0]))[0] == pytest.approx(-20 / (1 + math.exp(20)), rel=1e-9)
        assert np.isfinite(L.silu(np.array([-1000.0, 1000.0]))).all()

    def test_split_silu(self):
        y = L.complex_silu(L.ComplexTensor(np.array([1.0]), np.array([-1.0])))
        assert y.re[0] == pytest.approx(0.7310585786)
        assert y.im[0] == pytest.approx(-0.2689414214)

    @given(st.floats(-30, 30))
    @settings(max_examples=60, deadline=None)
    def test_silu_grad_matches_difference(self, x):
        h = 1e-6
        fd = (L.silu(np.array([x + h])) - L.silu(np.array([x - h])))[0] / (2 * h)
        assert L.silu_grad(np.array([x]))[0] == pytest.approx(fd, abs=1e-7)

    def test_complex_to_real(self):
        assert L.complex_to_real(np.array([1 + 1j]))[0] == pytest.approx(math.sqrt(2))
        assert L.complex_to_real(np.array([1 - 1j]))[0] == 0.0
        t = L.ComplexTensor(np.array([3.0]), np.array([1.0]))
        assert L.complex_to_real(t)[0] == pytest.approx(4 / math.sqrt(2))

    def test_complex_to_real_symmetric_in_parts(self, rng):
        x = rng.standard_normal(10)
        z = crandn(rng, 10)
        assert np.allclose(L.complex_to_real(x), x / math.sqrt(2))
        # a real x and j*x only swap the two parts
        assert np.array_equal(L.complex_to_real(x + 0j), L.complex_to_real(1j * x))
        assert np.allclose(L.complex_to_real(z), L.complex_to_real(z.imag + 1j * z.real))


class TestLoss:
    def test_uniform_logits(self):
        assert L.cross_entropy(np.zeros((1, 30)), np.array([7])) == pytest.approx(math.log(30))
        assert L.cross_entropy(np.zeros((3, 2)), np.array([0, 1, 1])) == pytest.approx(math.log(2))

    def test_large_margin(self):
        logits = np.array([[100.0, 0, 0]])
        assert L.cross_entropy(logits, np.array([0])) == pytest.approx(2 * math.exp(-100), abs=1e-40)
        assert L.cross_entropy(logits, np.array([1])) == pytest.approx(100, rel=1e-12)

    def test_label_range(self):
        with pytest.raises(ConfigError):
            L.cross_entropy(np.zeros((1, 3)), np.array([3]))

    @given(st.integers(0, 2**31), st.integers(1, 6), st.integers(2, 10))
    @settings(max_examples=40, deadline=None)
    def test_softmax_is_distribution(self, seed, batch, classes):
        rng = np.random.default_rng(seed)
        p = L.softmax(rng.normal(0, 50, (batch, classes)))
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_grad_matches_difference(self, rng):
        logits = rng.standard_normal((4, 5))
        labels = np.array([0, 3, 4, 1])
        g = L.cross_entropy_grad(logits, labels)
        h = 1e-6
        for idx in np.ndindex(logits.shape):
            lp, lm = logits.copy(), logits.copy()
            lp[idx] += h
            lm[idx] -= h
            fd = (L.cross_entropy(lp, labels) - L.cross_entropy(lm, labels)) / (2 * h)
            assert g[idx] == pytest.approx(fd, abs=1e-8)

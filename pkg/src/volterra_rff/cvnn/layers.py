"""Complex-valued layers on split real/imaginary float64 arrays.

Each layer has a ``*_forward`` returning ``(outputs..., cache)`` and a
``*_backward`` mapping output gradients to input and parameter gradients.
Real and imaginary parts are treated as independent real parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import ConfigError

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ComplexTensor:
    """``(batch, channels, length)`` complex tensor held as two real arrays."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        if re.shape != im.shape:
            raise ConfigError(f"real/imag shapes differ: {re.shape} vs {im.shape}")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexTensor":
        z = np.asarray(z)
        return cls(z.real.copy(), z.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self) -> tuple:
        return self.re.shape


def conv_output_length(length: int, kernel: int = 9, stride: int = 2, pad: int = 4) -> int:
    return (length + 2 * pad - kernel) // stride + 1


# --- convolution -----------------------------------------------------------

def _windows(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    return sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :]


def _conv(win: np.ndarray, w: np.ndarray) -> np.ndarray:
    # win (B, C, Lo, K), w (O, C, K) -> (B, O, Lo)
    return np.tensordot(win, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)


def conv1d_forward(x_re, x_im, w_re, w_im, b_re, b_im, stride=2, pad=4):
    if x_re.shape[1] != w_re.shape[1]:
        raise ConfigError(f"input has {x_re.shape[1]} channels, kernel expects {w_re.shape[1]}")
    kernel = w_re.shape[2]
    if x_re.shape[2] + 2 * pad < kernel:
        raise ConfigError("input too short for kernel")
    win_re = _windows(x_re, kernel, stride, pad)
    win_im = _windows(x_im, kernel, stride, pad)
    out_re = _conv(win_re, w_re) - _conv(win_im, w_im) + b_re[None, :, None]
    out_im = _conv(win_re, w_im) + _conv(win_im, w_re) + b_im[None, :, None]
    cache = (win_re, win_im, w_re, w_im, x_re.shape, stride, pad)
    return out_re, out_im, cache


def _col2im(dwin: np.ndarray, length: int, stride: int, pad: int) -> np.ndarray:
    b, c, lo, kernel = dwin.shape
    dxp = np.zeros((b, c, length + 2 * pad))
    for k in range(kernel):
        dxp[:, :, k : k + stride * (lo - 1) + 1 : stride] += dwin[:, :, :, k]
    return dxp[:, :, pad : pad + length]


def conv1d_backward(g_re, g_im, cache):
    win_re, win_im, w_re, w_im, x_shape, stride, pad = cache

    def dw(g, win):
        return np.tensordot(g, win, axes=([0, 2], [0, 2]))  # (O, C, K)

    def dwin(g, w):
        return np.tensordot(g, w, axes=([1], [0])).transpose(0, 2, 1, 3)  # (B, C, Lo, K)

    dw_re = dw(g_re, win_re) + dw(g_im, win_im)
    dw_im = dw(g_im, win_re) - dw(g_re, win_im)
    dwin_re = dwin(g_re, w_re) + dwin(g_im, w_im)
    dwin_im = dwin(g_im, w_re) - dwin(g_re, w_im)
    length = x_shape[2]
    dx_re = _col2im(dwin_re, length, stride, pad)
    dx_im = _col2im(dwin_im, length, stride, pad)
    return dx_re, dx_im, dw_re, dw_im, g_re.sum(axis=(0, 2)), g_im.sum(axis=(0, 2))


def complex_conv1d(x: ComplexTensor, w: np.ndarray, b: np.ndarray, stride: int = 2, pad: int = 4) -> ComplexTensor:
    """Complex 1-D convolution (cross-correlation) with complex weights ``w`` (O, C, K)."""
    w = np.asarray(w, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    out_re, out_im, _ = conv1d_forward(x.re, x.im, w.real, w.imag, b.real, b.imag, stride, pad)
    return ComplexTensor(out_re, out_im)


# --- split batch normalization ---------------------------------------------

def _bn_part_forward(x, gamma, beta, mean, var, eps):
    std = np.sqrt(var + eps)
    xhat = (x - mean[None, :, None]) / std[None, :, None]
    return gamma[None, :, None] * xhat + beta[None, :, None], (xhat, std, gamma)


def batchnorm_forward(x_re, x_im, p: dict, mode: str, eps: float = 1e-5):
    """Real and imaginary parts normalized independently per channel.

    ``p`` holds ``gamma_re, beta_re, gamma_im, beta_im`` and, for eval mode,
    the running ``mean_re, var_re, mean_im, var_im``. Train mode returns the
    batch statistics in the cache instead of mutating ``p``.
    """
    if mode == "train":
        if x_re.shape[0] * x_re.shape[2] < 2:
            raise ConfigError("train-mode batch norm needs at least 2 values per channel")
        stats = {
            "mean_re": x_re.mean(axis=(0, 2)), "var_re": x_re.var(axis=(0, 2)),
            "mean_im": x_im.mean(axis=(0, 2)), "var_im": x_im.var(axis=(0, 2)),
        }
    elif mode == "eval":
        stats = {k: p[k] for k in ("mean_re", "var_re", "mean_im", "var_im")}
    else:
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    y_re, c_re = _bn_part_forward(x_re, p["gamma_re"], p["beta_re"], stats["mean_re"], stats["var_re"], eps)
    y_im, c_im = _bn_part_forward(x_im, p["gamma_im"], p["beta_im"], stats["mean_im"], stats["var_im"], eps)
    return y_re, y_im, (c_re, c_im, mode, stats)


def _bn_part_backward(g, cache, train):
    xhat, std, gamma = cache
    dgamma = np.sum(g * xhat, axis=(0, 2))
    dbeta = np.sum(g, axis=(0, 2))
    dxhat = g * gamma[None, :, None]
    if not train:
        return dxhat / std[None, :, None], dgamma, dbeta
    dx = (dxhat - dxhat.mean(axis=(0, 2), keepdims=True)
          - xhat * np.mean(dxhat * xhat, axis=(0, 2), keepdims=True)) / std[None, :, None]
    return dx, dgamma, dbeta


def batchnorm_backward(g_re, g_im, cache):
    c_re, c_im, mode, _ = cache
    train = mode == "train"
    dx_re, dg_re, db_re = _bn_part_backward(g_re, c_re, train)
    dx_im, dg_im, db_im = _bn_part_backward(g_im, c_im, train)
    return dx_re, dx_im, {"gamma_re": dg_re, "beta_re": db_re, "gamma_im": dg_im, "beta_im": db_im}


def complex_batchnorm(x: ComplexTensor, params: dict, mode: str = "train", eps: float = 1e-5) -> ComplexTensor:
    y_re, y_im, _ = batchnorm_forward(x.re, x.im, params, mode, eps)
    return ComplexTensor(y_re, y_im)


# --- activations ------------------------------------------------------------

def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def complex_silu(x: ComplexTensor) -> ComplexTensor:
    """SiLU applied separately to real and imaginary parts."""
    return ComplexTensor(silu(x.re), silu(x.im))


def complex_to_real(x: ComplexTensor | np.ndarray) -> np.ndarray:
    """``(Re z + Im z) / sqrt(2)`` elementwise."""
    if isinstance(x, ComplexTensor):
        return (x.re + x.im) * INV_SQRT2
    x = np.asarray(x)
    return (x.real + x.imag) * INV_SQRT2


def complex_to_real_backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return g * INV_SQRT2, g * INV_SQRT2


# --- loss -------------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ConfigError(f"labels must lie in [0, {logits.shape[1]})")
    lp = log_softmax(logits)
    return float(-np.mean(lp[np.arange(labels.size), labels]))


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = softmax(logits)
    p[np.arange(labels.size), labels] -= 1.0
    return p / labels.size

"""CBS-block classifier: parameters, forward/backward pass and checkpoints.

Architecture: ``n_cbs_blocks`` x (complex conv -> split batch norm -> split
SiLU), then ``(re + im)/sqrt(2)``, flatten, dense, SiLU, dense.

Parameter order (also the checkpoint tensor order), for each block ``i``::

    block{i}.conv.w_re, block{i}.conv.w_im      (out, in, kernel)
    block{i}.conv.b_re, block{i}.conv.b_im      (out,)
    block{i}.bn.gamma_re, block{i}.bn.beta_re, block{i}.bn.gamma_im, block{i}.bn.beta_im

then ``fc1.w (hidden, flat)``, ``fc1.b``, ``fc2.w (classes, hidden)``, ``fc2.b``.
Buffers follow: ``block{i}.bn.{mean_re,var_re,mean_im,var_im}`` and the input
standardization ``input.{mean_re,mean_im,std_re,std_im}``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError, PersistenceError
from . import layers as L

CKPT_MAGIC = b"CVNN"
CKPT_VERSION = 1
BN_PARAMS = ("gamma_re", "beta_re", "gamma_im", "beta_im")
BN_BUFFERS = ("mean_re", "var_re", "mean_im", "var_im")


@dataclass(frozen=True)
class NetworkConfig:
    input_len: int
    n_cbs_blocks: int = 5
    widths: tuple = (8, 16, 32, 64, 64)
    kernel: int = 9
    stride: int = 2
    pad: int = 4
    fc_hidden: int = 128
    n_classes: int = 30
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.n_cbs_blocks < 1:
            raise ConfigError("n_cbs_blocks must be >= 1")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if len(self.widths) != self.n_cbs_blocks:
            raise ConfigError(f"{self.n_cbs_blocks} blocks but {len(self.widths)} channel widths")
        if self.input_len < 1 or self.fc_hidden < 1:
            raise ConfigError("input_len and fc_hidden must be positive")
        if self.final_length() < 1:
            raise ConfigError("input too short for the configured convolution stack")

    def lengths(self) -> list[int]:
        out = [self.input_len]
        for _ in range(self.n_cbs_blocks):
            out.append(L.conv_output_length(out[-1], self.kernel, self.stride, self.pad))
        return out

    def final_length(self) -> int:
        lengths = self.lengths()
        return lengths[-1] if min(lengths) >= 1 else 0

    @property
    def flat_dim(self) -> int:
        return self.widths[-1] * self.final_length()


@dataclass(eq=False)
class NetworkParams:
    config: NetworkConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.params.items()},
                             {k: v.copy() for k, v in self.buffers.items()})

    def block(self, i: int) -> tuple[dict, dict]:
        conv = {k: self.params[f"block{i}.conv.{k}"] for k in ("w_re", "w_im", "b_re", "b_im")}
        bn = {k: self.params[f"block{i}.bn.{k}"] for k in BN_PARAMS}
        bn.update({k: self.buffers[f"block{i}.bn.{k}"] for k in BN_BUFFERS})
        return conv, bn

    def standardize(self, theta: np.ndarray) -> L.ComplexTensor:
        """Complex features ``(count, D)`` -> standardized ``(count, 1, D)`` tensor."""
        theta = np.atleast_2d(theta)
        if theta.shape[1] != self.config.input_len:
            raise ConfigError(f"features have length {theta.shape[1]}, network expects {self.config.input_len}")
        b = self.buffers
        re = (theta.real - b["input.mean_re"]) / b["input.std_re"]
        im = (theta.imag - b["input.mean_im"]) / b["input.std_im"]
        return L.ComplexTensor(re[:, None, :], im[:, None, :])

    def fit_standardization(self, theta: np.ndarray) -> None:
        """Set per-position input statistics from training features."""
        def spread(x):
            s = x.std(axis=0)
            return np.where(s > 0, s, 1.0)

        self.buffers["input.mean_re"] = theta.real.mean(axis=0)
        self.buffers["input.mean_im"] = theta.imag.mean(axis=0)
        self.buffers["input.std_re"] = spread(theta.real)
        self.buffers["input.std_im"] = spread(theta.imag)


def init_params(config: NetworkConfig, rng: np.random.Generator) -> NetworkParams:
    """Uniform init with bound ``1/sqrt(fan_in)`` per real part; zero biases."""
    p, b = {}, {}
    in_ch = 1
    for i, out_ch in enumerate(config.widths):
        bound = 1.0 / np.sqrt(in_ch * config.kernel)
        p[f"block{i}.conv.w_re"] = rng.uniform(-bound, bound, (out_ch, in_ch, config.kernel))
        p[f"block{i}.conv.w_im"] = rng.uniform(-bound, bound, (out_ch, in_ch, config.kernel))
        p[f"block{i}.conv.b_re"] = np.zeros(out_ch)
        p[f"block{i}.conv.b_im"] = np.zeros(out_ch)
        p[f"block{i}.bn.gamma_re"] = np.ones(out_ch)
        p[f"block{i}.bn.beta_re"] = np.zeros(out_ch)
        p[f"block{i}.bn.gamma_im"] = np.ones(out_ch)
        p[f"block{i}.bn.beta_im"] = np.zeros(out_ch)
        b[f"block{i}.bn.mean_re"] = np.zeros(out_ch)
        b[f"block{i}.bn.var_re"] = np.ones(out_ch)
        b[f"block{i}.bn.mean_im"] = np.zeros(out_ch)
        b[f"block{i}.bn.var_im"] = np.ones(out_ch)
        in_ch = out_ch
    flat = config.flat_dim
    bound = 1.0 / np.sqrt(flat)
    p["fc1.w"] = rng.uniform(-bound, bound, (config.fc_hidden, flat))
    p["fc1.b"] = np.zeros(config.fc_hidden)
    bound = 1.0 / np.sqrt(config.fc_hidden)
    p["fc2.w"] = rng.uniform(-bound, bound, (config.n_classes, config.fc_hidden))
    p["fc2.b"] = np.zeros(config.n_classes)
    d = config.input_len
    b["input.mean_re"] = np.zeros(d)
    b["input.mean_im"] = np.zeros(d)
    b["input.std_re"] = np.ones(d)
    b["input.std_im"] = np.ones(d)
    return NetworkParams(config, p, b)


def forward(net: NetworkParams, x: L.ComplexTensor, mode: str = "eval"):
    """Logits ``(batch, n_classes)`` and a cache for :func:`backward`.

    Train mode normalizes with batch statistics; they are returned in the
    cache (``cache["bn_stats"]``) and never written into ``net``.
    """
    cfg = net.config
    if x.re.ndim != 3 or x.re.shape[1] != 1 or x.re.shape[2] != cfg.input_len:
        raise ConfigError(f"expected input of shape (batch, 1, {cfg.input_len}), got {x.re.shape}")
    re, im = x.re, x.im
    caches, stats = [], []
    for i in range(cfg.n_cbs_blocks):
        conv, bn = net.block(i)
        re, im, c_conv = L.conv1d_forward(re, im, conv["w_re"], conv["w_im"], conv["b_re"], conv["b_im"],
                                          cfg.stride, cfg.pad)
        re, im, c_bn = L.batchnorm_forward(re, im, bn, mode, cfg.bn_eps)
        pre_re, pre_im = re, im
        re, im = L.silu(re), L.silu(im)
        caches.append((c_conv, c_bn, pre_re, pre_im))
        stats.append(c_bn[3])
    real = L.complex_to_real(L.ComplexTensor(re, im))
    flat = real.reshape(real.shape[0], -1)
    h_pre = flat @ net.params["fc1.w"].T + net.params["fc1.b"]
    h = L.silu(h_pre)
    logits = h @ net.params["fc2.w"].T + net.params["fc2.b"]
    cache = {"blocks": caches, "flat": flat, "shape": real.shape, "h_pre": h_pre, "h": h,
             "bn_stats": stats, "mode": mode}
    return logits, cache


def backward(net: NetworkParams, cache: dict, dlogits: np.ndarray) -> dict:
    """Gradients of the loss for every entry of ``net.params``."""
    grads = {}
    grads["fc2.w"] = dlogits.T @ cache["h"]
    grads["fc2.b"] = dlogits.sum(axis=0)
    dh = dlogits @ net.params["fc2.w"]
    dh_pre = dh * L.silu_grad(cache["h_pre"])
    grads["fc1.w"] = dh_pre.T @ cache["flat"]
    grads["fc1.b"] = dh_pre.sum(axis=0)
    dflat = dh_pre @ net.params["fc1.w"]
    g_re, g_im = L.complex_to_real_backward(dflat.reshape(cache["shape"]))
    for i in reversed(range(net.config.n_cbs_blocks)):
        c_conv, c_bn, pre_re, pre_im = cache["blocks"][i]
        g_re = g_re * L.silu_grad(pre_re)
        g_im = g_im * L.silu_grad(pre_im)
        g_re, g_im, dbn = L.batchnorm_backward(g_re, g_im, c_bn)
        for k, v in dbn.items():
            grads[f"block{i}.bn.{k}"] = v
        g_re, g_im, dw_re, dw_im, db_re, db_im = L.conv1d_backward(g_re, g_im, c_conv)
        grads[f"block{i}.conv.w_re"] = dw_re
        grads[f"block{i}.conv.w_im"] = dw_im
        grads[f"block{i}.conv.b_re"] = db_re
        grads[f"block{i}.conv.b_im"] = db_im
    return {k: grads[k] for k in net.params}


def loss_and_grads(net: NetworkParams, x: L.ComplexTensor, labels: np.ndarray):
    """Train-mode cross-entropy, its gradients and the batch-norm batch statistics."""
    logits, cache = forward(net, x, "train")
    loss = L.cross_entropy(logits, labels)
    grads = backward(net, cache, L.cross_entropy_grad(logits, labels))
    return loss, grads, cache["bn_stats"], logits


def update_running_stats(net: NetworkParams, stats: list[dict]) -> None:
    m = net.config.bn_momentum
    for i, s in enumerate(stats):
        for k in BN_BUFFERS:
            key = f"block{i}.bn.{k}"
            net.buffers[key] = (1.0 - m) * net.buffers[key] + m * s[k]


# --- checkpoint -------------------------------------------------------------

def _config_json(config: NetworkConfig) -> bytes:
    return json.dumps(asdict(config), sort_keys=True).encode("utf-8")


def encode_checkpoint(net: NetworkParams) -> bytes:
    """``CVNN`` | version u32 | config-json length u32 | config json | tensor count u32 |
    per tensor: name length u16, name, ndim u8, shape u64 x ndim, float64 data."""
    cfg = _config_json(net.config)
    tensors = list(net.params.items()) + list(net.buffers.items())
    parts = [struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> NetworkParams:
    try:
        magic, version, clen = struct.unpack_from("<4sII", raw, 0)
        if magic != CKPT_MAGIC:
            raise FormatError(f"{source}: bad magic {magic!r}")
        if version != CKPT_VERSION:
            raise FormatError(f"{source}: unsupported checkpoint version {version}")
        off = 12
        config = NetworkConfig(**json.loads(raw[off : off + clen].decode("utf-8")))
        off += clen
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}Q", raw, off)
            off += 8 * ndim
            n = int(np.prod(shape, dtype=np.int64))
            if off + 8 * n > len(raw):
                raise FormatError(f"{source}: truncated tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
            off += 8 * n
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{source}: corrupt checkpoint: {exc}") from exc
    if off != len(raw):
        raise FormatError(f"{source}: {len(raw) - off} trailing bytes")
    template = init_params(config, np.random.default_rng(0))
    params = {k: tensors.pop(k) for k in template.params if k in tensors}
    buffers = {k: tensors.pop(k) for k in template.buffers if k in tensors}
    if len(params) != len(template.params) or len(buffers) != len(template.buffers) or tensors:
        raise FormatError(f"{source}: tensor set does not match the stored config")
    for k, v in template.params.items():
        if params[k].shape != v.shape:
            raise FormatError(f"{source}: tensor {k} has shape {params[k].shape}, expected {v.shape}")
    return NetworkParams(config, params, buffers)


def save_checkpoint(net: NetworkParams, path: str | Path) -> None:
    try:
        Path(path).write_bytes(encode_checkpoint(net))
    except OSError as exc:
        raise PersistenceError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> NetworkParams:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(raw, str(path))

"""Toy fully convolutional segmentation net trained from scratch.

Encoder: three conv3x3 + relu + maxpool2x2 blocks (output stride 8). Head:
three size-preserving convolutions with shrinking kernels (7, 5, 3); each head
layer is also projected to one channel by a 1x1 conv and the projections are
summed into the score map. The score map is upsampled back to input size by a
learnable transposed convolution initialized to exact bilinear weights, with a
stride-4 skip connection in the "fine" granularity.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .imagecore import BinaryMask
from .interaction import TrainingPair
from .nnops import (
    bce_loss,
    bilinear_upsample_params,
    conv2d_backward,
    conv2d_forward,
    conv_transpose2d_backward,
    conv_transpose2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    upsample_pad,
)

COARSE = "coarse"
FINE = "fine"

CHECKPOINT_MAGIC = b"LFCN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised on malformed or incompatible checkpoint files."""


@dataclass(frozen=True)
class NetworkConfig:
    encoder_channels: tuple = (16, 32, 64)
    head_kernels: tuple = (7, 5, 3)
    head_channels: int = 64
    granularity: str = COARSE
    input_channels: int = 5

    def __post_init__(self):
        ks = self.head_kernels
        if any(k % 2 == 0 for k in ks) or list(ks) != sorted(ks, reverse=True) \
                or len(set(ks)) != len(ks):
            raise ValueError("head kernels must be odd and strictly decreasing")
        if self.granularity not in (COARSE, FINE):
            raise ValueError(f"bad granularity {self.granularity!r}")
        if self.input_channels != 5:
            raise ValueError("input is 3 RGB + 2 click-distance channels")
        if len(self.encoder_channels) != 3:
            raise ValueError("encoder has three conv/pool blocks")

    @property
    def output_stride(self) -> int:
        return 8

    def to_json(self) -> str:
        return json.dumps({
            "encoder_channels": list(self.encoder_channels),
            "head_kernels": list(self.head_kernels),
            "head_channels": self.head_channels,
            "granularity": self.granularity,
            "input_channels": self.input_channels,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "NetworkConfig":
        d = json.loads(blob)
        return cls(tuple(d["encoder_channels"]), tuple(d["head_kernels"]),
                   d["head_channels"], d["granularity"], d["input_channels"])


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-3
    head_lr_multiplier: float = 100.0
    weight_decay: float = 5e-3
    iterations: int = 2000
    lr_policy: str = "fixed"
    rng_seed: int = 0

    def __post_init__(self):
        if self.base_lr < 0 or self.head_lr_multiplier <= 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative, multiplier positive")
        if self.lr_policy != "fixed":
            raise ValueError("only the fixed learning policy is supported")


@dataclass
class Network:
    config: NetworkConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    # parameters whose learning rate gets the head multiplier
    HEAD_PREFIXES = ("head", "proj")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probability map (H, W) for a (5, H, W) input."""
        prob, _ = _forward(self.params, self.config, x)
        return prob


def _param_names(config: NetworkConfig) -> list[str]:
    names = []
    for i in range(3):
        names += [f"enc{i}.w", f"enc{i}.b"]
    for i in range(len(config.head_kernels)):
        names += [f"head{i}.w", f"head{i}.b", f"proj{i}.w", f"proj{i}.b"]
    if config.granularity == FINE:
        names += ["skip.w", "skip.b", "up2.w", "up2.b", "up4.w", "up4.b"]
    else:
        names += ["up8.w", "up8.b"]
    return names


def init_network(config: NetworkConfig, rng_seed: int,
                 from_coarse: Network | None = None) -> Network:
    """He-initialized encoder/head, zero score projections, bilinear upsamplers.

    The first-layer kernel slices for the two click-distance channels start at
    exactly zero. With `from_coarse`, every same-shape parameter is copied from
    the coarser network.
    """
    rng = np.random.default_rng(rng_seed)
    ec = config.encoder_channels
    hc = config.head_channels
    params: dict[str, np.ndarray] = {}

    def he(shape):
        fan_in = int(np.prod(shape[1:]))
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

    in_ch = config.input_channels
    for i, out_ch in enumerate(ec):
        params[f"enc{i}.w"] = he((out_ch, in_ch, 3, 3))
        params[f"enc{i}.b"] = np.zeros(out_ch, dtype=np.float32)
        in_ch = out_ch
    params["enc0.w"][:, 3:5] = 0.0  # click channels learn from zero

    in_ch = ec[-1]
    for i, k in enumerate(config.head_kernels):
        params[f"head{i}.w"] = he((hc, in_ch, k, k))
        params[f"head{i}.b"] = np.zeros(hc, dtype=np.float32)
        params[f"proj{i}.w"] = np.zeros((1, hc, 1, 1), dtype=np.float32)
        params[f"proj{i}.b"] = np.zeros(1, dtype=np.float32)
        in_ch = hc

    if config.granularity == FINE:
        params["skip.w"] = np.zeros((1, ec[1], 1, 1), dtype=np.float32)
        params["skip.b"] = np.zeros(1, dtype=np.float32)
        for f in (2, 4):
            w, b = bilinear_upsample_params(f, dtype=np.float32)
            params[f"up{f}.w"], params[f"up{f}.b"] = w, b
    else:
        w, b = bilinear_upsample_params(8, dtype=np.float32)
        params["up8.w"], params["up8.b"] = w, b

    if from_coarse is not None:
        copied = 0
        for name, value in from_coarse.params.items():
            if name in params and params[name].shape == value.shape:
                params[name] = value.copy()
                copied += 1
        if copied == 0:
            raise CheckpointError("coarse network shares no parameter shapes")
    return Network(config, params)


def _forward(params, config, x):
    """Forward pass returning (probability map (H, W), cache for backward)."""
    c, h, w = x.shape
    stride = config.output_stride
    if h % stride or w % stride:
        raise ValueError(f"input {h}x{w} not divisible by output stride {stride}")
    cache = {"x": x}
    a = x
    for i in range(3):
        z = conv2d_forward(a, params[f"enc{i}.w"], params[f"enc{i}.b"], 1, 1)
        r = relu_forward(z)
        p, idx = maxpool2x2_forward(r)
        cache[f"enc{i}"] = (a, z, idx)
        a = p
        if i == 1:
            cache["f_s4"] = a
    feats = a

    h_in = feats
    zs = []
    for i, k in enumerate(config.head_kernels):
        z = conv2d_forward(h_in, params[f"head{i}.w"], params[f"head{i}.b"], 1, k // 2)
        zs.append((h_in, z))
        h_in = relu_forward(z)
    cache["head"] = zs

    score = None
    for i, (_, z) in enumerate(zs):
        p_i = conv2d_forward(z, params[f"proj{i}.w"], params[f"proj{i}.b"])
        score = p_i if score is None else score + p_i
    cache["score"] = score

    if config.granularity == FINE:
        s2 = conv_transpose2d_forward(score, params["up2.w"], params["up2.b"],
                                      2, upsample_pad(2))
        skip = conv2d_forward(cache["f_s4"], params["skip.w"], params["skip.b"])
        fused = s2 + skip
        cache["fused"] = fused
        logits = conv_transpose2d_forward(fused, params["up4.w"], params["up4.b"],
                                          4, upsample_pad(4))
    else:
        logits = conv_transpose2d_forward(score, params["up8.w"], params["up8.b"],
                                          8, upsample_pad(8))
    cache["logits"] = logits
    prob = sigmoid(logits)
    cache["prob"] = prob
    return prob[0], cache


def _backward(params, config, cache, label_bits):
    """Gradients of the mean BCE loss w.r.t. every parameter."""
    prob = cache["prob"]
    y = label_bits.astype(prob.dtype)[None]
    n = prob.size
    dlogits = (prob - y) / n  # fused sigmoid + BCE gradient

    grads = {}
    if config.granularity == FINE:
        dfused, grads["up4.w"], grads["up4.b"] = conv_transpose2d_backward(
            cache["fused"], params["up4.w"], dlogits, 4, upsample_pad(4))
        dskip_in, grads["skip.w"], grads["skip.b"] = conv2d_backward(
            cache["f_s4"], params["skip.w"], dfused)
        dscore, grads["up2.w"], grads["up2.b"] = conv_transpose2d_backward(
            cache["score"], params["up2.w"], dfused, 2, upsample_pad(2))
    else:
        dscore, grads["up8.w"], grads["up8.b"] = conv_transpose2d_backward(
            cache["score"], params["up8.w"], dlogits, 8, upsample_pad(8))
        dskip_in = None

    zs = cache["head"]
    dzs = [None] * len(zs)
    for i, (_, z) in enumerate(zs):
        dz, grads[f"proj{i}.w"], grads[f"proj{i}.b"] = conv2d_backward(
            z, params[f"proj{i}.w"], dscore)
        dzs[i] = dz

    dh_next = None  # gradient flowing into relu(z_i) from conv i+1
    for i in reversed(range(len(zs))):
        h_in, z = zs[i]
        k = config.head_kernels[i]
        dz = dzs[i] if dh_next is None else dzs[i] + relu_backward(z, dh_next)
        dh_in, grads[f"head{i}.w"], grads[f"head{i}.b"] = conv2d_backward(
            h_in, params[f"head{i}.w"], dz, 1, k // 2)
        dh_next = dh_in
    dfeats = dh_next

    da = dfeats
    for i in reversed(range(3)):
        a, z, idx = cache[f"enc{i}"]
        if i == 1 and dskip_in is not None:
            da = da + dskip_in
        r_shape = z.shape
        dr = maxpool2x2_backward(r_shape, idx, da)
        dz = relu_backward(z, dr)
        da, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = conv2d_backward(
            a, params[f"enc{i}.w"], dz, 1, 1)
    return grads


def build_input(pair: TrainingPair) -> np.ndarray:
    """Stack RGB (scaled to [0,1]) with the two normalized click-distance maps."""
    rgb = pair.image.pixels.astype(np.float32).transpose(2, 0, 1) / 255.0
    pos = pair.pos_map.normalized().astype(np.float32)[None]
    neg = pair.neg_map.normalized().astype(np.float32)[None]
    return np.concatenate([rgb, pos, neg], axis=0)


def loss_and_grads(net: Network, pair: TrainingPair):
    x = build_input(pair)
    prob, cache = _forward(net.params, net.config, x)
    loss, _ = bce_loss(prob, pair.label.bits)
    grads = _backward(net.params, net.config, cache, pair.label.bits)
    return loss, grads


def train(dataset: list[TrainingPair], net: Network,
          tc: TrainConfig) -> tuple[Network, list[float]]:
    """Plain per-sample SGD over rng-shuffled epochs.

    Head convolutions and score projections train at base_lr * multiplier;
    L2 weight decay applies to every kernel, never to biases. Returns a new
    network (the input is not mutated) and one loss per iteration.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(tc.rng_seed)
    params = {k: v.copy() for k, v in net.params.items()}
    work = Network(net.config, params)
    history: list[float] = []
    order: list[int] = []
    for _ in range(tc.iterations):
        if not order:
            order = list(rng.permutation(len(dataset)))
        pair = dataset[order.pop(0)]
        loss, grads = loss_and_grads(work, pair)
        history.append(loss)
        for name, g in grads.items():
            lr = tc.base_lr
            if name.startswith(Network.HEAD_PREFIXES):
                lr *= tc.head_lr_multiplier
            step = g.astype(np.float32)
            if name.endswith(".w"):
                step = step + np.float32(tc.weight_decay) * params[name]
            params[name] -= np.float32(lr) * step
    return work, history


def predict_mask(prob: np.ndarray, threshold: float = 0.5) -> BinaryMask:
    """Binarize a probability map; strict inequality, so 0.5 at 0.5 is background."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return BinaryMask(prob > threshold)


def save_checkpoint(net: Network, path) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    blob = net.config.to_json().encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name in sorted(net.params):
        arr = np.ascontiguousarray(net.params[name], dtype="<f4")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    data = buf.getvalue()
    if hasattr(path, "write"):
        path.write(data)
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def load_checkpoint(path) -> Network:
    if hasattr(path, "read"):
        data = path.read()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    view = memoryview(data)
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(view):
            raise CheckpointError("truncated checkpoint file")
        chunk = view[off:off + n]
        off += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (blen,) = struct.unpack("<I", take(4))
    config = NetworkConfig.from_json(bytes(take(blen)).decode("utf-8"))
    params: dict[str, np.ndarray] = {}
    while off < len(view):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape))
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        params[name] = arr.astype(np.float32)
    missing = set(_param_names(config)) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)}")
    return Network(config, params)

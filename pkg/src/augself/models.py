"""Toy generator, discriminator backbone, adversarial head and self-supervised heads."""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import CATEGORIES, CATEGORY_DIMS
from .tensor import ShapeError, Tensor

FUSIONS = ("subtract", "concat", "aug_only", "bilinear")
DEPTHS = ("linear", "two_layer_mlp")
CHECKPOINT_MAGIC = b"AUGSELF1"


class Module:
    """Container whose Tensor attributes (and sub-modules) are parameters."""

    def named_parameters(self, prefix: str = "") -> "OrderedDict[str, Tensor]":
        out = OrderedDict()
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                out[prefix + name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{prefix}{name}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{prefix}{name}.{i}."))
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{prefix}{name}.{key}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 2.0):
        self.W = Tensor(rng.normal(0.0, np.sqrt(gain / n_in), (n_in, n_out)), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, stride: int = 1, pad: int = 0):
        fan_in = c_in * k * k
        self.W = Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, k, k)), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.W, self.stride, self.pad)
        return out + self.b.reshape(1, -1, 1, 1)


@dataclass
class ModelConfig:
    image_shape: tuple = (3, 16, 16)
    latent_dim: int = 32
    gen_hidden: tuple = (256, 256)
    channels: tuple = (32, 64)
    disc_hidden: int = 256
    feat_dim: int = 128
    fusion: str = "subtract"
    head_depth: str = "linear"
    signals: tuple = field(default_factory=lambda: CATEGORIES)
    seed: int = 0


class Generator(Module):
    """MLP from latent codes to tanh images."""

    def __init__(self, latent_dim: int, hidden: tuple, image_shape: tuple, rng: np.random.Generator):
        self.latent_dim = latent_dim
        self.image_shape = tuple(image_shape)
        widths = [latent_dim, *hidden, int(np.prod(image_shape))]
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, z) -> Tensor:
        z = T.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"latent batch must be N x {self.latent_dim}, got {z.shape}")
        h = z
        for layer in self.layers[:-1]:
            h = T.leaky_relu(layer(h))
        out = T.tanh(self.layers[-1](h))
        return out.reshape(z.shape[0], *self.image_shape)


class Backbone(Module):
    """Two stride-2 convolutions followed by an MLP to the feature vector."""

    def __init__(self, image_shape: tuple, channels: tuple, hidden: int, feat_dim: int, rng: np.random.Generator):
        c, h, w = image_shape
        self.image_shape = tuple(image_shape)
        self.feat_dim = feat_dim
        self.convs = []
        for c_out in channels:
            self.convs.append(Conv2d(c, c_out, 3, rng, stride=2, pad=1))
            c, h, w = c_out, (h + 1) // 2, (w + 1) // 2
        self.fc1 = Linear(c * h * w, hidden, rng)
        self.fc2 = Linear(hidden, feat_dim, rng)

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[1:] != self.image_shape:
            raise ShapeError(f"expected images of shape {self.image_shape}, got {x.shape[1:]}")
        h = x
        for conv in self.convs:
            h = T.leaky_relu(conv(h))
        h = h.reshape(x.shape[0], -1)
        h = T.leaky_relu(self.fc1(h))
        return T.leaky_relu(self.fc2(h))


class AdvHead(Module):
    def __init__(self, feat_dim: int, rng: np.random.Generator):
        self.fc = Linear(feat_dim, 1, rng, gain=1.0)

    def __call__(self, features: Tensor) -> Tensor:
        return self.fc(features).reshape(-1)


class SelfSupHead(Module):
    """Maps a pair of feature batches to a d_k-dimensional prediction."""

    def __init__(self, feat_dim: int, out_dim: int, rng: np.random.Generator, fusion: str = "subtract", depth: str = "linear"):
        if fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {fusion!r}")
        if depth not in DEPTHS:
            raise ValueError(f"unknown head depth {depth!r}")
        self.fusion = fusion
        self.depth = depth
        self.out_dim = out_dim
        self.feat_dim = feat_dim
        if fusion == "bilinear":
            self.W = Tensor(rng.normal(0.0, 1.0 / feat_dim, (feat_dim, out_dim * feat_dim)), requires_grad=True)
            self.b = Tensor(np.zeros(out_dim), requires_grad=True)
            return
        n_in = 2 * feat_dim if fusion == "concat" else feat_dim
        if depth == "linear":
            self.layers = [Linear(n_in, out_dim, rng, gain=1.0)]
        else:
            self.layers = [Linear(n_in, feat_dim, rng), Linear(feat_dim, out_dim, rng, gain=1.0)]

    def __call__(self, f_aug: Tensor, f_ref: Tensor) -> Tensor:
        if f_aug.shape != f_ref.shape:
            raise ShapeError(f"feature batches differ in shape: {f_aug.shape} vs {f_ref.shape}")
        if self.fusion == "bilinear":
            n = f_aug.shape[0]
            proj = (f_aug @ self.W).reshape(n, self.out_dim, self.feat_dim)
            return (proj * f_ref.reshape(n, 1, self.feat_dim)).sum(axis=2) + self.b
        if self.fusion == "subtract":
            h = f_aug - f_ref
        elif self.fusion == "concat":
            h = T.concat([f_aug, f_ref], axis=1)
        else:
            h = f_aug
        for layer in self.layers[:-1]:
            h = T.leaky_relu(layer(h))
        return self.layers[-1](h)


class ModelBundle(Module):
    def __init__(self, generator: Generator, backbone: Backbone, adv_head: AdvHead, ss_heads: dict):
        self.generator = generator
        self.backbone = backbone
        self.adv_head = adv_head
        self.ss_heads = dict(ss_heads)

    def discriminator_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((k, v) for k, v in self.named_parameters().items() if not k.startswith("generator."))

    def generator_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((k, v) for k, v in self.named_parameters().items() if k.startswith("generator."))

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.named_parameters().items())

    def load_state_dict(self, state: dict) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks tensors: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()


def build_bundle(config: ModelConfig) -> ModelBundle:
    rng = np.random.default_rng(config.seed)
    gen = Generator(config.latent_dim, config.gen_hidden, config.image_shape, rng)
    backbone = Backbone(config.image_shape, config.channels, config.disc_hidden, config.feat_dim, rng)
    adv = AdvHead(config.feat_dim, rng)
    heads = {
        k: SelfSupHead(config.feat_dim, CATEGORY_DIMS[k], rng, config.fusion, config.head_depth)
        for k in CATEGORIES
        if k in config.signals
    }
    return ModelBundle(gen, backbone, adv, heads)


def generator_forward(generator: Generator, z) -> Tensor:
    return generator(z)


def discriminator_forward(backbone: Backbone, adv_head: AdvHead, x) -> tuple[Tensor, Tensor]:
    features = backbone(x)
    return features, adv_head(features)


def selfsup_predict(backbone: Backbone, head: SelfSupHead, x_aug, x_ref) -> Tensor:
    x_aug, x_ref = T.as_tensor(x_aug), T.as_tensor(x_ref)
    if x_aug.shape != x_ref.shape:
        raise ShapeError(f"augmented and reference batches differ: {x_aug.shape} vs {x_ref.shape}")
    return head(backbone(x_aug), backbone(x_ref))


def count_params(bundle: ModelBundle) -> dict:
    counts = {
        "generator": bundle.generator.num_parameters(),
        "backbone": bundle.backbone.num_parameters(),
        "adv_head": bundle.adv_head.num_parameters(),
        "ss_heads": sum(h.num_parameters() for h in bundle.ss_heads.values()),
    }
    counts["total"] = sum(counts.values())
    disc = counts["backbone"] + counts["adv_head"] + counts["ss_heads"]
    counts["ss_fraction"] = counts["ss_heads"] / disc
    return counts


# -- checkpoint files ---------------------------------------------------------
#
# Layout (little-endian): magic "AUGSELF1", then per tensor
#   u32 name length, name bytes (utf-8), u32 rank, u64 dims[rank], f64 data.


def save_tensors(path, tensors: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an AUGSELF1 checkpoint")
    out = OrderedDict()
    pos = 8
    while pos < len(raw):
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", raw, pos)
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * count
    return out

"""Differentiable color, translation and cutout augmentations.

Each augmentation instance is fully described by a per-sample parameter
vector in the unit interval: three color values (brightness, saturation,
contrast), two translation values (x, y) and two cutout offsets (x, y).
The value 0.5 is the identity for color and translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

CATEGORIES = ("color", "translation", "cutout")
CATEGORY_DIMS = {"color": 3, "translation": 2, "cutout": 2}
PRESETS = {
    "normal": {"translation_ratio": 1 / 8, "cutout_ratio": 1 / 2},
    "strong": {"translation_ratio": 1 / 4, "cutout_ratio": 3 / 4},
}


@dataclass
class AugConfig:
    translation_ratio: float = 1 / 8
    cutout_ratio: float = 1 / 2
    enabled: tuple = CATEGORIES
    preset: str = "normal"

    def __post_init__(self):
        if not 0 < self.translation_ratio <= 0.5:
            raise ValueError(f"translation_ratio must be in (0, 1/2], got {self.translation_ratio}")
        if not 0 < self.cutout_ratio <= 1:
            raise ValueError(f"cutout_ratio must be in (0, 1], got {self.cutout_ratio}")
        unknown = set(self.enabled) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown augmentation categories: {sorted(unknown)}")
        self.enabled = tuple(c for c in CATEGORIES if c in self.enabled)

    @classmethod
    def from_preset(cls, preset: str = "normal", **overrides) -> "AugConfig":
        if preset not in PRESETS:
            raise ValueError(f"unknown augmentation preset {preset!r}")
        kwargs = dict(PRESETS[preset], preset=preset)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


@dataclass
class AugParams:
    """Per-sample augmentation parameters, one row per batch element."""

    color: np.ndarray
    translation: np.ndarray
    cutout: np.ndarray

    def __post_init__(self):
        for name in CATEGORIES:
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.shape[1] != CATEGORY_DIMS[name]:
                raise ValueError(f"{name} parameters need {CATEGORY_DIMS[name]} columns, got {arr.shape}")
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} parameters must lie in [0, 1]")
            setattr(self, name, arr)

    def __len__(self) -> int:
        return self.color.shape[0]

    def __getitem__(self, category: str) -> np.ndarray:
        return getattr(self, category)

    def positive(self, category: str) -> np.ndarray:
        """Regression target for augmented real data."""
        return self[category]

    def negative(self, category: str) -> np.ndarray:
        """Regression target for augmented generated data."""
        return -self[category]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.color, self.translation, self.cutout], axis=1)

    @classmethod
    def from_vector(cls, omega, batch_size: int = 1) -> "AugParams":
        omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
        if omega.shape[1] != 7:
            raise ValueError(f"expected 7 parameters per sample, got {omega.shape[1]}")
        if omega.shape[0] == 1 and batch_size > 1:
            omega = np.repeat(omega, batch_size, axis=0)
        return cls(omega[:, :3], omega[:, 3:5], omega[:, 5:7])

    @classmethod
    def identity(cls, batch_size: int = 1) -> "AugParams":
        return cls.from_vector(np.full(7, 0.5), batch_size)


def sample_params(rng: np.random.Generator, config: AugConfig | None, batch_size: int) -> AugParams:
    """Draw i.i.d. uniform parameters for every category.

    All seven components are drawn even for disabled categories, so the RNG
    consumption does not depend on the configuration.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return AugParams.from_vector(rng.random((batch_size, 7)))


def _per_sample(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64).reshape(-1, 1, 1, 1)


def apply_color(image, omega_color) -> Tensor:
    """Brightness, then saturation, then contrast.

    brightness adds ``b - 0.5``; saturation scales the deviation from the
    per-pixel channel mean by ``2 s``; contrast scales the deviation from the
    whole-image mean by ``c + 0.5``.
    """
    image = T.as_tensor(image)
    if image.ndim != 4 or image.shape[1] not in (1, 3):
        raise ValueError(f"color augmentation needs N x C x H x W with C in (1, 3), got {image.shape}")
    omega = np.atleast_2d(np.asarray(omega_color, dtype=np.float64))
    shift = _per_sample(omega[:, 0] - 0.5)
    sat = _per_sample(omega[:, 1] * 2.0)
    con = _per_sample(omega[:, 2] + 0.5)

    # x*s + m*(1-s) keeps the identity setting (s == 1) bit-exact.
    x = image + shift
    if image.shape[1] > 1:
        m = x.mean(axis=1, keepdims=True)
        x = x * sat + m * (1.0 - sat)
    m = x.mean(axis=(1, 2, 3), keepdims=True)
    return x * con + m * (1.0 - con)


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def translation_shifts(omega_translation, height: int, width: int, config: AugConfig) -> tuple[np.ndarray, np.ndarray]:
    """Integer (dy, dx) shifts per sample."""
    omega = np.atleast_2d(np.asarray(omega_translation, dtype=np.float64))
    sy = math.ceil(config.translation_ratio * height)
    sx = math.ceil(config.translation_ratio * width)
    dx = _round_half_away((omega[:, 0] - 0.5) * 2 * sx).astype(int)
    dy = _round_half_away((omega[:, 1] - 0.5) * 2 * sy).astype(int)
    return dy, dx


def apply_translation(image, omega_translation, config: AugConfig) -> Tensor:
    """Shift along x (columns) and y (rows) with zero fill."""
    image = T.as_tensor(image)
    dy, dx = translation_shifts(omega_translation, image.shape[2], image.shape[3], config)
    if not dy.any() and not dx.any():
        return image
    return T.shift2d(image, dy, dx)


def cutout_windows(omega_cutout, height: int, width: int, config: AugConfig):
    """(row offset, col offset, cut_h, cut_w) per sample; windows lie inside the image."""
    omega = np.atleast_2d(np.asarray(omega_cutout, dtype=np.float64))
    cut_h = math.ceil(config.cutout_ratio * height)
    cut_w = math.ceil(config.cutout_ratio * width)
    col = np.floor(omega[:, 0] * (width - cut_w) + 0.5).astype(int)
    row = np.floor(omega[:, 1] * (height - cut_h) + 0.5).astype(int)
    return row, col, cut_h, cut_w


def cutout_mask(omega_cutout, shape: tuple, config: AugConfig) -> np.ndarray:
    n, _, h, w = shape
    row, col, cut_h, cut_w = cutout_windows(omega_cutout, h, w, config)
    mask = np.ones((n, 1, h, w))
    for i in range(n):
        mask[i, :, row[i] : row[i] + cut_h, col[i] : col[i] + cut_w] = 0.0
    return mask


def apply_cutout(image, omega_cutout, config: AugConfig) -> Tensor:
    image = T.as_tensor(image)
    return image * cutout_mask(omega_cutout, image.shape, config)


def apply_all(image, params: AugParams, config: AugConfig) -> Tensor:
    """Enabled augmentations in the fixed order color, translation, cutout."""
    x = T.as_tensor(image)
    if "color" in config.enabled:
        x = apply_color(x, params.color)
    if "translation" in config.enabled:
        x = apply_translation(x, params.translation, config)
    if "cutout" in config.enabled:
        x = apply_cutout(x, params.cutout, config)
    return x


# -- preview images -----------------------------------------------------------


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Map [-1, 1] pixels to uint8 via round((v + 1) * 127.5), clamped."""
    return np.clip(np.floor((np.asarray(image) + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def write_pnm(path, image: np.ndarray) -> None:
    """Write a C x H x W image in [-1, 1] as binary PGM (C=1) or PPM (C=3)."""
    image = np.asarray(image)
    c, h, w = image.shape
    if c == 1:
        header, payload = b"P5", to_bytes(image[0])
    elif c == 3:
        header, payload = b"P6", to_bytes(image.transpose(1, 2, 0))
    else:
        raise ValueError(f"cannot write {c}-channel image as PNM")
    with open(path, "wb") as fh:
        fh.write(header + b"\n%d %d\n255\n" % (w, h))
        fh.write(payload.tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM written by :func:`write_pnm` into [-1, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM file {path}")
    c = 1 if magic == b"P5" else 3
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * c, offset=pos).astype(np.float64)
    data = data.reshape(h, w, c).transpose(2, 0, 1)
    return data / 127.5 - 1.0


def test_image(size: int = 32) -> np.ndarray:
    """Deterministic 3 x size x size picture used by the augmentation preview."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    img = np.stack([xx * 2 - 1, yy * 2 - 1, np.full_like(xx, -0.6)])
    disc = (xx - 0.35) ** 2 + (yy - 0.4) ** 2 < 0.2**2
    img[:, disc] = np.array([0.9, 0.8, -0.9])[:, None]
    square = (np.abs(xx - 0.7) < 0.12) & (np.abs(yy - 0.7) < 0.12)
    img[:, square] = np.array([-0.8, 0.2, 0.9])[:, None]
    return img


test_image.__test__ = False

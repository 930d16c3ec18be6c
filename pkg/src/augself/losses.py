"""Adversarial, DiffAugment and augmentation-aware self-supervised objectives.

Squared errors are summed over the parameter dimension and averaged over the
batch. Self-supervised targets are ``+omega`` for augmented real data and
``-omega`` for augmented generated data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import CATEGORIES, CATEGORY_DIMS, AugConfig, AugParams, apply_all
from .models import ModelBundle
from .tensor import ShapeError, Tensor

GAN_KINDS = ("hinge", "log", "lsgan")
SS_TASKS = ("none", "SS", "SSplus", "ASS", "fixed")
GEN_VARIANTS = ("combination", "saturating", "non_saturating", "none")


class ConfigError(ValueError):
    """Invalid loss or experiment configuration."""


@dataclass
class LossConfig:
    gan_kind: str = "hinge"
    ss_task: str = "ASS"
    gen_ss_variant: str = "combination"
    predicted_signals: tuple = CATEGORIES
    lambda_d: float = 1.0
    lambda_g: float = 1.0
    fixed_c: dict | None = None

    def __post_init__(self):
        if self.gan_kind not in GAN_KINDS:
            raise ConfigError(f"unknown GAN loss kind {self.gan_kind!r}")
        if self.ss_task not in SS_TASKS:
            raise ConfigError(f"unknown self-supervised task {self.ss_task!r}")
        if self.gen_ss_variant not in GEN_VARIANTS:
            raise ConfigError(f"unknown generator variant {self.gen_ss_variant!r}")
        if self.lambda_d < 0 or self.lambda_g < 0:
            raise ConfigError("lambda_d and lambda_g must be non-negative")
        unknown = set(self.predicted_signals) - set(CATEGORIES)
        if unknown:
            raise ConfigError(f"unknown predicted signals {sorted(unknown)}")
        self.predicted_signals = tuple(c for c in CATEGORIES if c in self.predicted_signals)
        if self.ss_task != "none" and not self.predicted_signals:
            raise ConfigError("predicted_signals must be nonempty when ss_task is not 'none'")

    def constant_target(self, category: str) -> np.ndarray:
        if self.fixed_c and category in self.fixed_c:
            return np.asarray(self.fixed_c[category], dtype=np.float64)
        return np.ones(CATEGORY_DIMS[category])

    def check_against(self, aug: AugConfig) -> None:
        missing = set(self.predicted_signals) - set(aug.enabled)
        if self.ss_task != "none" and missing:
            raise ConfigError(f"predicted signals {sorted(missing)} are not enabled augmentations")


# -- adversarial losses --------------------------------------------------------


def gan_d_loss(real_scores, fake_scores, gan_kind: str = "hinge") -> Tensor:
    r, f = T.as_tensor(real_scores), T.as_tensor(fake_scores)
    if gan_kind == "hinge":
        return T.relu(1.0 - r).mean() + T.relu(1.0 + f).mean()
    if gan_kind == "log":
        # -log sigmoid(r) = softplus(-r); -log(1 - sigmoid(f)) = softplus(f)
        return T.softplus(-r).mean() + T.softplus(f).mean()
    if gan_kind == "lsgan":
        return T.square(r - 1.0).mean() + T.square(f + 1.0).mean()
    raise ConfigError(f"unknown GAN loss kind {gan_kind!r}")


def gan_g_loss(fake_scores, gan_kind: str = "hinge") -> Tensor:
    f = T.as_tensor(fake_scores)
    if gan_kind == "hinge":
        return -f.mean()
    if gan_kind == "log":
        return T.softplus(-f).mean()
    if gan_kind == "lsgan":
        return T.square(f - 1.0).mean()
    raise ConfigError(f"unknown GAN loss kind {gan_kind!r}")


# -- self-supervised regression losses ----------------------------------------


def _sq_dist(pred, target) -> Tensor:
    """Batch mean of the squared Euclidean distance along the last axis."""
    pred = T.as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape[-1] != target.shape[-1]:
        raise ShapeError(f"prediction dim {pred.shape[-1]} != target dim {target.shape[-1]}")
    diff = pred - target
    per_sample = T.square(diff).sum(axis=-1)
    return per_sample.mean()


def augself_d_loss(pred_real, pred_fake, omega, omega_fake=None) -> Tensor:
    """Regress augmented real data onto +omega and augmented fakes onto -omega.

    ``omega_fake`` defaults to ``omega``; pass it when real and fake batches
    were augmented with different draws.
    """
    omega_fake = omega if omega_fake is None else omega_fake
    return _sq_dist(pred_real, omega) + _sq_dist(pred_fake, -np.asarray(omega_fake))


def augself_g_loss(pred_fake, omega, variant: str = "combination") -> Tensor:
    omega = np.asarray(omega, dtype=np.float64)
    if variant == "non_saturating":
        return _sq_dist(pred_fake, omega)
    if variant == "saturating":
        return -_sq_dist(pred_fake, -omega)
    if variant == "combination":
        return _sq_dist(pred_fake, omega) - _sq_dist(pred_fake, -omega)
    if variant == "none":
        return T.as_tensor(0.0)
    raise ConfigError(f"unknown generator variant {variant!r}")


def ss_variant_d_loss(pred_real, pred_fake, omega, task: str, c=None, omega_fake=None) -> Tensor:
    omega_fake = omega if omega_fake is None else omega_fake
    if task == "SS":
        return _sq_dist(pred_real, omega)
    if task == "SSplus":
        return _sq_dist(pred_real, omega) + _sq_dist(pred_fake, omega_fake)
    if task == "ASS":
        return augself_d_loss(pred_real, pred_fake, omega, omega_fake)
    if task == "fixed":
        dim = T.as_tensor(pred_real).shape[-1]
        c = np.ones(dim) if c is None else np.asarray(c, dtype=np.float64)
        n_real, n_fake = T.as_tensor(pred_real).shape[0], T.as_tensor(pred_fake).shape[0]
        return _sq_dist(pred_real, np.tile(c, (n_real, 1))) + _sq_dist(pred_fake, -np.tile(c, (n_fake, 1)))
    raise ConfigError(f"unknown self-supervised task {task!r}")


def ss_variant_g_loss(pred_fake, omega, task: str, variant: str = "combination", c=None) -> Tensor:
    if task in ("SS", "SSplus"):
        return _sq_dist(pred_fake, omega)
    if task == "ASS":
        return augself_g_loss(pred_fake, omega, variant)
    if task == "fixed":
        pred_fake = T.as_tensor(pred_fake)
        c = np.ones(pred_fake.shape[-1]) if c is None else np.asarray(c, dtype=np.float64)
        return augself_g_loss(pred_fake, np.tile(c, (pred_fake.shape[0], 1)), variant)
    raise ConfigError(f"unknown self-supervised task {task!r}")


# -- full objectives -----------------------------------------------------------


@dataclass
class LossTerms:
    """A total loss plus its named scalar parts (as floats)."""

    total: Tensor
    adversarial: float
    ss: dict = field(default_factory=dict)

    @property
    def ss_total(self) -> float:
        return float(sum(self.ss.values()))


def _ss_active(cfg: LossConfig) -> bool:
    return cfg.ss_task != "none"


def discriminator_objective(bundle: ModelBundle, real, fake, params_real: AugParams, params_fake: AugParams,
                            cfg: LossConfig, aug: AugConfig) -> LossTerms:
    """DiffAugment discriminator loss plus ``lambda_d`` times the per-category ss losses.

    ``fake`` is treated as a constant: it is detached before use.
    """
    real = T.as_tensor(real)
    fake = T.as_tensor(fake).detach()
    real_aug = apply_all(real, params_real, aug)
    fake_aug = apply_all(fake, params_fake, aug)
    f_real_aug = bundle.backbone(real_aug)
    f_fake_aug = bundle.backbone(fake_aug)
    adv = gan_d_loss(bundle.adv_head(f_real_aug), bundle.adv_head(f_fake_aug), cfg.gan_kind)
    terms = LossTerms(total=adv, adversarial=adv.item())
    if not _ss_active(cfg):
        return terms

    f_real = bundle.backbone(real)
    f_fake = bundle.backbone(fake)
    ss_sum = None
    for k in cfg.predicted_signals:
        head = bundle.ss_heads[k]
        loss_k = ss_variant_d_loss(
            head(f_real_aug, f_real), head(f_fake_aug, f_fake), params_real[k], cfg.ss_task,
            c=cfg.constant_target(k), omega_fake=params_fake[k],
        )
        terms.ss[k] = loss_k.item()
        ss_sum = loss_k if ss_sum is None else ss_sum + loss_k
    if cfg.lambda_d != 0:
        terms.total = adv + cfg.lambda_d * ss_sum
    return terms


def generator_objective(bundle: ModelBundle, fake, params: AugParams, cfg: LossConfig, aug: AugConfig) -> LossTerms:
    """DiffAugment generator loss plus ``lambda_g`` times the per-category ss losses.

    Gradients flow through both the augmented fake and the reference fake.
    """
    fake = T.as_tensor(fake)
    fake_aug = apply_all(fake, params, aug)
    f_fake_aug = bundle.backbone(fake_aug)
    adv = gan_g_loss(bundle.adv_head(f_fake_aug), cfg.gan_kind)
    terms = LossTerms(total=adv, adversarial=adv.item())
    if not _ss_active(cfg) or cfg.gen_ss_variant == "none":
        return terms

    f_fake = bundle.backbone(fake)
    ss_sum = None
    for k in cfg.predicted_signals:
        pred = bundle.ss_heads[k](f_fake_aug, f_fake)
        loss_k = ss_variant_g_loss(pred, params[k], cfg.ss_task, cfg.gen_ss_variant, c=cfg.constant_target(k))
        terms.ss[k] = loss_k.item()
        ss_sum = loss_k if ss_sum is None else ss_sum + loss_k
    if cfg.lambda_g != 0:
        terms.total = adv + cfg.lambda_g * ss_sum
    return terms


@dataclass
class StepParams:
    """Augmentation draws for one step: real and fake for D, fake for G."""

    d_real: AugParams
    d_fake: AugParams
    g_fake: AugParams


def total_losses(bundle: ModelBundle, real, z, aug_params: StepParams, cfg: LossConfig, aug: AugConfig) -> dict:
    """Both objectives for one batch, with the generator output shared.

    Returns ``d_total`` and ``g_total`` Tensors plus float ``components``.
    """
    fake = bundle.generator(z)
    d = discriminator_objective(bundle, real, fake, aug_params.d_real, aug_params.d_fake, cfg, aug)
    g = generator_objective(bundle, fake, aug_params.g_fake, cfg, aug)
    components = {"d_adv": d.adversarial, "g_adv": g.adversarial, "d_ss_total": d.ss_total, "g_ss_total": g.ss_total}
    for k, v in d.ss.items():
        components[f"d_ss_{k}"] = v
    for k, v in g.ss.items():
        components[f"g_ss_{k}"] = v
    return {"d_total": d.total, "g_total": g.total, "components": components, "d_terms": d, "g_terms": g}

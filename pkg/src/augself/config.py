"""Flat ``key=value`` experiment configuration.

Files hold one ``key = value`` pair per line; ``#`` starts a comment.
Command-line overrides use the same syntax and win over file values.
"""

from __future__ import annotations

from pathlib import Path

from .augment import CATEGORIES, PRESETS, AugConfig
from .losses import GAN_KINDS, GEN_VARIANTS, SS_TASKS, ConfigError, LossConfig
from .models import DEPTHS, FUSIONS, ModelConfig

AUTO = "auto"

# key -> (type, default, description)
SCHEMA = {
    "dataset.n": (int, 2000, "number of synthetic shape images"),
    "dataset.seed": (int, 0, "seed for rendering the synthetic dataset"),
    "dataset.size": (int, 16, "image side length in pixels"),
    "dataset.idx": (str, "", "optional IDX image file used instead of the synthetic shapes"),
    "data.fraction": (float, 1.0, "fraction of the dataset kept for training"),
    "model.feat_dim": (int, 128, "discriminator feature dimension"),
    "model.latent_dim": (int, 32, "generator latent dimension"),
    "model.fusion": (str, "subtract", "self-supervised head input: " + "|".join(FUSIONS)),
    "model.head_depth": (str, "linear", "self-supervised head: " + "|".join(DEPTHS)),
    "aug.preset": (str, "normal", "augmentation strength: " + "|".join(PRESETS)),
    "aug.translation_ratio": (float, AUTO, "max translation as a fraction of the side (auto: preset)"),
    "aug.cutout_ratio": (float, AUTO, "cutout side as a fraction of the image side (auto: preset)"),
    "aug.policy": (list, list(CATEGORIES), "enabled augmentations"),
    "loss.gan_kind": (str, "hinge", "|".join(GAN_KINDS)),
    "loss.ss_task": (str, "ASS", "|".join(SS_TASKS)),
    "loss.gen_ss_variant": (str, "combination", "|".join(GEN_VARIANTS)),
    "loss.signals": (list, list(CATEGORIES), "predicted self-supervised signals"),
    "loss.lambda_d": (float, 1.0, "weight of the discriminator self-supervised loss"),
    "loss.lambda_g": (float, 1.0, "weight of the generator self-supervised loss"),
    "train.steps": (int, 2000, "number of generator updates"),
    "train.batch_size": (int, 32, "batch size"),
    "train.lr": (float, 2e-4, "Adam learning rate"),
    "train.beta1": (float, 0.5, "Adam first-moment decay"),
    "train.beta2": (float, 0.999, "Adam second-moment decay"),
    "train.d_steps": (int, 1, "discriminator updates per generator update"),
    "train.seed": (int, 0, "seed for weights, data order and latents"),
    "train.aug_seed": (int, -1, "seed of the augmentation stream (-1: derived from train.seed)"),
    "train.eval_interval": (int, 100, "steps between evaluations"),
    "eval.n_samples": (int, 500, "generated samples per evaluation"),
    "eval.fd_features": (str, "pixels", "pixels|disc"),
    "eval.probe_steps": (int, 300, "gradient steps of the linear probe"),
    "out.dir": (str, "runs/default", "output directory"),
}


class Config(dict):
    """Validated mapping from every schema key to its value."""

    def aug_config(self) -> AugConfig:
        return AugConfig.from_preset(
            self["aug.preset"],
            translation_ratio=None if self["aug.translation_ratio"] == AUTO else self["aug.translation_ratio"],
            cutout_ratio=None if self["aug.cutout_ratio"] == AUTO else self["aug.cutout_ratio"],
            enabled=tuple(self["aug.policy"]),
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            gan_kind=self["loss.gan_kind"],
            ss_task=self["loss.ss_task"],
            gen_ss_variant=self["loss.gen_ss_variant"],
            predicted_signals=tuple(self["loss.signals"]),
            lambda_d=self["loss.lambda_d"],
            lambda_g=self["loss.lambda_g"],
        )

    def model_config(self, channels: int = 3) -> ModelConfig:
        size = self["dataset.size"]
        return ModelConfig(
            image_shape=(channels, size, size),
            latent_dim=self["model.latent_dim"],
            feat_dim=self["model.feat_dim"],
            fusion=self["model.fusion"],
            head_depth=self["model.head_depth"],
            signals=tuple(self["loss.signals"]),
            seed=self["train.seed"],
        )

    def with_overrides(self, **pairs) -> "Config":
        """Copy with dotted keys given as ``section__name=value``."""
        merged = dict(self)
        merged.update({k.replace("__", "."): v for k, v in pairs.items()})
        return validate(merged)

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())


def format_value(value) -> str:
    if isinstance(value, list):
        return ",".join(value)
    return str(value)


def _convert(key: str, raw: str):
    kind = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if kind is list:
            return [item.strip() for item in raw.split(",") if item.strip()]
        if kind is float and raw == AUTO and SCHEMA[key][1] == AUTO:
            return AUTO
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def _parse_lines(lines, origin: str) -> dict:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown configuration key")
        out[key] = _convert(key, value)
    return out


def validate(values: dict) -> Config:
    cfg = Config({k: spec[1] for k, spec in SCHEMA.items()})
    for key, value in values.items():
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown configuration key")
        cfg[key] = _convert(key, value) if isinstance(value, str) and SCHEMA[key][0] is not str else value

    def check(key, ok, why):
        if not ok:
            raise ConfigError(f"{key}: {why} (got {cfg[key]!r})")

    check("dataset.n", cfg["dataset.n"] >= 1, "must be >= 1")
    check("dataset.size", cfg["dataset.size"] >= 4, "must be >= 4")
    check("data.fraction", 0 < cfg["data.fraction"] <= 1, "must lie in (0, 1]")
    check("model.feat_dim", cfg["model.feat_dim"] >= 1, "must be >= 1")
    check("model.latent_dim", cfg["model.latent_dim"] >= 1, "must be >= 1")
    check("model.fusion", cfg["model.fusion"] in FUSIONS, "unknown fusion")
    check("model.head_depth", cfg["model.head_depth"] in DEPTHS, "unknown head depth")
    check("aug.preset", cfg["aug.preset"] in PRESETS, "unknown preset")
    check("aug.policy", set(cfg["aug.policy"]) <= set(CATEGORIES), "unknown augmentation")
    tr, cr = cfg["aug.translation_ratio"], cfg["aug.cutout_ratio"]
    check("aug.translation_ratio", tr == AUTO or 0 < tr <= 0.5, "must lie in (0, 1/2]")
    check("aug.cutout_ratio", cr == AUTO or 0 < cr <= 1, "must lie in (0, 1]")
    check("loss.gan_kind", cfg["loss.gan_kind"] in GAN_KINDS, "unknown GAN loss")
    check("loss.ss_task", cfg["loss.ss_task"] in SS_TASKS, "unknown self-supervised task")
    check("loss.gen_ss_variant", cfg["loss.gen_ss_variant"] in GEN_VARIANTS, "unknown generator variant")
    signals = cfg["loss.signals"]
    check("loss.signals", set(signals) <= set(CATEGORIES), "unknown signal")
    check("loss.signals", cfg["loss.ss_task"] == "none" or len(signals) > 0, "must be nonempty")
    check("loss.signals", cfg["loss.ss_task"] == "none" or set(signals) <= set(cfg["aug.policy"]),
          "must be a subset of aug.policy")
    check("loss.lambda_d", cfg["loss.lambda_d"] >= 0, "must be >= 0")
    check("loss.lambda_g", cfg["loss.lambda_g"] >= 0, "must be >= 0")
    check("train.steps", cfg["train.steps"] >= 0, "must be >= 0")
    check("train.batch_size", cfg["train.batch_size"] >= 1, "must be >= 1")
    check("train.lr", cfg["train.lr"] > 0, "must be > 0")
    check("train.beta1", 0 <= cfg["train.beta1"] < 1, "must lie in [0, 1)")
    check("train.beta2", 0 <= cfg["train.beta2"] < 1, "must lie in [0, 1)")
    check("train.d_steps", cfg["train.d_steps"] >= 1, "must be >= 1")
    check("train.eval_interval", cfg["train.eval_interval"] >= 1, "must be >= 1")
    check("eval.n_samples", cfg["eval.n_samples"] >= 2, "must be >= 2")
    check("eval.fd_features", cfg["eval.fd_features"] in ("pixels", "disc"), "must be pixels or disc")
    check("eval.probe_steps", cfg["eval.probe_steps"] >= 1, "must be >= 1")
    return cfg


def parse_config(file_path=None, overrides=()) -> Config:
    """Merge defaults, an optional config file and ``key=value`` overrides."""
    values = {}
    if file_path:
        path = Path(file_path)
        values.update(_parse_lines(path.read_text().splitlines(), str(path)))
    values.update(_parse_lines(list(overrides), "override"))
    return validate(values)


def default_config() -> Config:
    return validate({})

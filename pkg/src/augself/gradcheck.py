"""Finite-difference checks for every differentiable op and every loss.

Each case draws a random instance and returns ``(f, params)`` where ``f``
reduces to a scalar through a random weighting. Inputs to kinked ops (relu,
hinge, leaky relu) are kept away from the kink, and cubes away from zero where
the relative error is ill-conditioned.

Probed coordinates whose analytic gradient is below ``SMALL_GRAD`` (cutout
windows, chance cancellations) are compared in absolute terms instead.
"""

from __future__ import annotations

import time

import numpy as np

from . import tensor as T
from .augment import AugConfig, apply_all, apply_color, apply_cutout, apply_translation, sample_params
from .losses import (
    LossConfig,
    augself_d_loss,
    augself_g_loss,
    discriminator_objective,
    gan_d_loss,
    gan_g_loss,
    generator_objective,
    ss_variant_d_loss,
    ss_variant_g_loss,
)
from .models import ModelConfig, build_bundle

TOLERANCE = 1e-4


def _param(rng, *shape, away_from_zero=False):
    data = rng.normal(size=shape)
    if away_from_zero:
        data = np.sign(data) * (np.abs(data) + 0.05)
    return T.Tensor(data, requires_grad=True)


def _weighted(out, w):
    return (out * w).sum()


def _unary(op, domain="real"):
    def case(rng):
        x = _param(rng, 3, 4, away_from_zero=domain == "kinked")
        if domain == "positive":
            x.data = np.abs(x.data) + 0.5
        w = rng.normal(size=x.shape)
        return (lambda x: _weighted(op(x), w)), [x]
    return case


def _binary(op, shape_b=(3, 4), positive_b=False):
    def case(rng):
        a, b = _param(rng, 3, 4), _param(rng, *shape_b)
        if positive_b:
            b.data = np.abs(b.data) + 0.5
        w = rng.normal(size=(3, 4))
        return (lambda a, b: _weighted(op(a, b), w)), [a, b]
    return case


def _reduction(op):
    def case(rng):
        x = _param(rng, 2, 3, 4)
        w = rng.normal(size=(2, 4))
        return (lambda x: _weighted(op(x), w)), [x]
    return case


def _case_getitem(rng):
    x = _param(rng, 5, 3)
    idx = rng.integers(0, 5, 7)
    w = rng.normal(size=(7, 3))
    return (lambda x: _weighted(x[idx], w)), [x]


def _case_concat(rng):
    a, b = _param(rng, 2, 3), _param(rng, 2, 5)
    w = rng.normal(size=(2, 8))
    return (lambda a, b: _weighted(T.concat([a, b], axis=1), w)), [a, b]


def _case_pad(rng):
    x = _param(rng, 2, 2, 3, 3)
    w = rng.normal(size=(2, 2, 5, 5))
    return (lambda x: _weighted(T.pad2d(x, 1), w)), [x]


def _case_shift(rng):
    x = _param(rng, 3, 2, 5, 5)
    dy, dx = rng.integers(-2, 3, 3), rng.integers(-2, 3, 3)
    w = rng.normal(size=x.shape)
    return (lambda x: _weighted(T.shift2d(x, dy, dx), w)), [x]


def _case_matmul(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    w = rng.normal(size=(3, 2))
    return (lambda a, b: _weighted(a @ b, w)), [a, b]


def _case_conv(rng):
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    x, k = _param(rng, 1, 2, 6, 6), _param(rng, 3, 2, 3, 3)
    out_shape = T.conv2d(x.data, k.data, stride, pad).shape
    w = rng.normal(size=out_shape)
    return (lambda x, k: _weighted(T.conv2d(x, k, stride, pad), w)), [x, k]


def _images(rng, n=2, c=3, size=8):
    return T.Tensor(rng.uniform(-1, 1, (n, c, size, size)), requires_grad=True)


def _aug_case(which):
    def case(rng):
        cfg = AugConfig()
        x = _images(rng)
        p = sample_params(rng, cfg, x.shape[0])
        w = rng.normal(size=x.shape)
        ops = {
            "color": lambda x: apply_color(x, p.color),
            "translation": lambda x: apply_translation(x, p.translation, cfg),
            "cutout": lambda x: apply_cutout(x, p.cutout, cfg),
            "all": lambda x: apply_all(x, p, cfg),
        }
        return (lambda x: _weighted(ops[which](x), w)), [x]
    return case


def _scores(rng, n=6):
    # keep margins away from the hinge kinks at +-1
    s = rng.uniform(-3, 3, n)
    s = np.where(np.abs(np.abs(s) - 1) < 0.05, s + 0.1, s)
    return T.Tensor(s, requires_grad=True)


def _gan_d(kind):
    def case(rng):
        return (lambda r, f: gan_d_loss(r, f, kind)), [_scores(rng), _scores(rng)]
    return case


def _gan_g(kind):
    def case(rng):
        return (lambda f: gan_g_loss(f, kind)), [_scores(rng)]
    return case


def _ss_d(task):
    def case(rng):
        pr, pf = _param(rng, 5, 3), _param(rng, 5, 3)
        omega, omega_f = rng.random((5, 3)), rng.random((5, 3))
        c = rng.normal(size=3)
        if task == "ASS":
            return (lambda pr, pf: augself_d_loss(pr, pf, omega, omega_f)), [pr, pf]
        if task == "SS":
            return (lambda pr: ss_variant_d_loss(pr, pf.data, omega, task)), [pr]
        return (lambda pr, pf: ss_variant_d_loss(pr, pf, omega, task, c=c, omega_fake=omega_f)), [pr, pf]
    return case


def _ss_g(task, variant="combination"):
    def case(rng):
        pf = _param(rng, 5, 3)
        omega = rng.random((5, 3))
        c = rng.normal(size=3)
        if task == "ASS":
            return (lambda pf: augself_g_loss(pf, omega, variant)), [pf]
        return (lambda pf: ss_variant_g_loss(pf, omega, task, variant, c=c)), [pf]
    return case


_TINY = dict(image_shape=(3, 8, 8), latent_dim=4, gen_hidden=(12,), channels=(4,), disc_hidden=12, feat_dim=6)


def _objective(side, task="ASS", variant="combination", fusion="subtract", gan_kind="hinge"):
    def case(rng):
        seed = int(rng.integers(2**31))
        bundle = build_bundle(ModelConfig(**_TINY, fusion=fusion, seed=seed))
        aug = AugConfig()
        loss_cfg = LossConfig(gan_kind=gan_kind, ss_task=task, gen_ss_variant=variant, lambda_d=0.7, lambda_g=1.3)
        n = 3
        z = rng.normal(size=(n, 4))
        if side == "d":
            real = rng.uniform(-0.9, 0.9, (n, 3, 8, 8))
            fake = bundle.generator(z).data
            pr, pf = sample_params(rng, aug, n), sample_params(rng, aug, n)
            params = [bundle.backbone.fc2.W, bundle.adv_head.fc.W] + [h.parameters()[0] for h in bundle.ss_heads.values()]
            return (lambda *_: discriminator_objective(bundle, real, fake, pr, pf, loss_cfg, aug).total), params
        pg = sample_params(rng, aug, n)
        params = [bundle.generator.layers[0].W, bundle.generator.layers[-1].b]
        return (lambda *_: generator_objective(bundle, bundle.generator(z), pg, loss_cfg, aug).total), params
    return case


CASES = {
    "add": _binary(lambda a, b: a + b),
    "add_broadcast": _binary(lambda a, b: a + b, shape_b=(4,)),
    "sub": _binary(lambda a, b: a - b),
    "mul": _binary(lambda a, b: a * b),
    "mul_broadcast": _binary(lambda a, b: a * b, shape_b=(1, 4)),
    "div": _binary(lambda a, b: a / b, positive_b=True),
    "neg": _unary(T.neg),
    "power": _unary(lambda x: T.power(x, 3.0), domain="kinked"),
    "square": _unary(T.square),
    "tanh": _unary(T.tanh),
    "sigmoid": _unary(T.sigmoid),
    "sin": _unary(T.sin),
    "cos": _unary(T.cos),
    "softplus": _unary(T.softplus),
    "exp": _unary(T.exp),
    "log": _unary(T.log, domain="positive"),
    "relu": _unary(T.relu, domain="kinked"),
    "leaky_relu": _unary(T.leaky_relu, domain="kinked"),
    "sum": _reduction(lambda x: T.tsum(x, axis=1)),
    "mean": _reduction(lambda x: T.mean(x, axis=1)),
    "reshape": _unary(lambda x: T.reshape(x, (4, 3)).T),
    "transpose": _reduction(lambda x: T.transpose(x, (0, 2, 1)).sum(axis=2)),
    "getitem": _case_getitem,
    "concat": _case_concat,
    "pad2d": _case_pad,
    "shift2d": _case_shift,
    "matmul": _case_matmul,
    "conv2d": _case_conv,
    "aug_color": _aug_case("color"),
    "aug_translation": _aug_case("translation"),
    "aug_cutout": _aug_case("cutout"),
    "aug_all": _aug_case("all"),
    "gan_d_hinge": _gan_d("hinge"),
    "gan_d_log": _gan_d("log"),
    "gan_d_lsgan": _gan_d("lsgan"),
    "gan_g_hinge": _gan_g("hinge"),
    "gan_g_log": _gan_g("log"),
    "gan_g_lsgan": _gan_g("lsgan"),
    "ss_d_ASS": _ss_d("ASS"),
    "ss_d_SS": _ss_d("SS"),
    "ss_d_SSplus": _ss_d("SSplus"),
    "ss_d_fixed": _ss_d("fixed"),
    "ss_g_combination": _ss_g("ASS", "combination"),
    "ss_g_saturating": _ss_g("ASS", "saturating"),
    "ss_g_non_saturating": _ss_g("ASS", "non_saturating"),
    "ss_g_SS": _ss_g("SS"),
    "ss_g_fixed": _ss_g("fixed"),
    "objective_d_ASS": _objective("d"),
    "objective_d_log_concat": _objective("d", fusion="concat", gan_kind="log"),
    "objective_d_bilinear": _objective("d", fusion="bilinear"),
    "objective_d_baseline": _objective("d", task="none"),
    "objective_g_ASS": _objective("g"),
    "objective_g_saturating": _objective("g", variant="saturating"),
    "objective_g_baseline": _objective("g", task="none"),
}

# full-network cases only probe a few coordinates per tensor
_MAX_COORDS = 6
# Below this analytic magnitude central-difference roundoff (~1e-16 |f| / eps)
# makes the relative error meaningless, so such coordinates get an absolute check.
SMALL_GRAD = 1e-4
ABS_TOLERANCE = 1e-8


def _numeric(f, params, k: int, i: int, eps: float) -> float:
    flat = params[k].data.reshape(-1)
    orig = flat[i]
    flat[i] = orig + eps
    up = f(*params).item()
    flat[i] = orig - eps
    down = f(*params).item()
    flat[i] = orig
    return (up - down) / (2.0 * eps)


def check_case(name: str, rng: np.random.Generator, eps: float = 1e-5) -> tuple[float, float]:
    """(relative error on well-conditioned coordinates, absolute error on near-zero ones)."""
    f, params = CASES[name](rng)
    for p in params:
        p.data = np.ascontiguousarray(p.data)
        p.requires_grad = True
        p.zero_grad()
    f(*params).backward()
    rel_coords, small = {}, []
    for k, p in enumerate(params):
        probe = np.arange(p.size) if p.size <= _MAX_COORDS else rng.choice(p.size, _MAX_COORDS, replace=False)
        g = np.zeros(p.size) if p.grad is None else p.grad.reshape(-1)
        rel_coords[k] = probe[np.abs(g[probe]) >= SMALL_GRAD]
        small += [(k, i, g[i]) for i in probe[np.abs(g[probe]) < SMALL_GRAD]]
    rel = T.finite_diff_check(f, params, eps=eps, coords=rel_coords)
    absolute = max((abs(g - _numeric(f, params, k, i, eps)) for k, i, g in small), default=0.0)
    return rel, absolute


def run_suite(instances: int = 100, seed: int = 0, names=None, eps: float = 1e-5) -> dict:
    """Worst errors per case over ``instances`` random draws."""
    names = list(CASES) if names is None else list(names)
    unknown = set(names) - set(CASES)
    if unknown:
        raise KeyError(f"unknown gradient cases: {sorted(unknown)}")
    start = time.perf_counter()
    results, small = {}, {}
    for name in names:
        # seed per case name so adding a case leaves the others' draws unchanged
        rng = np.random.default_rng([seed, *name.encode()])
        errs = [check_case(name, rng, eps) for _ in range(instances)]
        results[name] = float(max(e[0] for e in errs))
        small[name] = float(max(e[1] for e in errs))
    worst = max(results.values(), default=0.0)
    worst_abs = max(small.values(), default=0.0)
    return {
        "cases": results,
        "small_gradient_abs_error": small,
        "instances": instances,
        "max_relative_error": worst,
        "max_small_gradient_abs_error": worst_abs,
        "tolerance": TOLERANCE,
        "abs_tolerance": ABS_TOLERANCE,
        "passed": bool(worst < TOLERANCE and worst_abs < ABS_TOLERANCE),
        "seconds": time.perf_counter() - start,
    }

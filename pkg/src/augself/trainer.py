"""Synthetic data, the adversarial training loop, evaluation metrics and experiment runs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .augment import AugConfig, sample_params
from .config import Config, validate
from .losses import LossConfig, discriminator_objective, generator_objective
from .models import ModelBundle, build_bundle, load_tensors, save_tensors
from .tensor import NumericError

logger = logging.getLogger(__name__)

SHAPES = ("disc", "square", "cross")
COLORS = np.array([
    [1.0, -1.0, -1.0],  # red
    [-1.0, 1.0, -1.0],  # green
    [-1.0, -1.0, 1.0],  # blue
    [1.0, 1.0, -1.0],  # yellow
    [-1.0, 1.0, 1.0],  # cyan
    [1.0, -1.0, 1.0],  # magenta
])
GRID = 3
CSV_HEADER = (
    "step,d_loss,g_loss,ss_d_color,ss_d_trans,ss_d_cutout,ss_g_color,ss_g_trans,ss_g_cutout,"
    "fd,mode_coverage,probe_shape,probe_color,probe_pos"
)
LAMBDA_GRID = (0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)


class DegenerateLabelError(ValueError):
    """A probe was asked to fit labels with a single class."""


# -- data ------------------------------------------------------------------------


@dataclass
class ShapesDataset:
    images: np.ndarray
    shape_labels: np.ndarray | None
    color_labels: np.ndarray | None
    position_labels: np.ndarray | None
    seed: int = 0

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def labels(self) -> dict:
        return {"shape": self.shape_labels, "color": self.color_labels, "pos": self.position_labels}

    def take(self, indices) -> "ShapesDataset":
        indices = np.asarray(indices, dtype=int)
        pick = lambda a: None if a is None else a[indices]  # noqa: E731
        return ShapesDataset(self.images[indices], pick(self.shape_labels), pick(self.color_labels),
                             pick(self.position_labels), self.seed)


def _shape_alpha(kind: int, cx: float, cy: float, size: int, extent: float, supersample: int = 4) -> np.ndarray:
    n = size * supersample
    coords = (np.arange(n) + 0.5) / supersample
    xx, yy = np.meshgrid(coords, coords)
    dx, dy = np.abs(xx - cx), np.abs(yy - cy)
    if kind == 0:
        inside = dx**2 + dy**2 <= extent**2
    elif kind == 1:
        half = extent * 0.85
        inside = (dx <= half) & (dy <= half)
    else:
        arm = extent * 0.35
        inside = ((dx <= extent) & (dy <= arm)) | ((dx <= arm) & (dy <= extent))
    return inside.reshape(size, supersample, size, supersample).mean(axis=(1, 3))


def make_shapes_dataset(n: int = 2000, seed: int = 0, size: int = 16) -> ShapesDataset:
    """Anti-aliased disc/square/cross images on a dark background, pixels in [-1, 1].

    Each image carries three labels: shape, one of six colors, and the 3 x 3
    grid cell containing the shape centre.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    extent = 0.18 * size
    cell = size / GRID
    margin = 0.05 * size
    shapes = rng.integers(0, len(SHAPES), n)
    colors = rng.integers(0, len(COLORS), n)
    positions = rng.integers(0, GRID * GRID, n)
    images = np.empty((n, 3, size, size))
    for i in range(n):
        row, col = divmod(int(positions[i]), GRID)
        lo_x = max(col * cell + margin, extent + 0.5)
        hi_x = min((col + 1) * cell - margin, size - extent - 0.5)
        lo_y = max(row * cell + margin, extent + 0.5)
        hi_y = min((row + 1) * cell - margin, size - extent - 0.5)
        cx, cy = rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)
        alpha = _shape_alpha(int(shapes[i]), cx, cy, size, extent)
        images[i] = -1.0 + alpha[None] * (COLORS[colors[i]][:, None, None] + 1.0)
    return ShapesDataset(images, shapes, colors, positions, seed)


def subsample(dataset: ShapesDataset, fraction: float, seed: int = 0) -> ShapesDataset:
    """Keep floor(fraction * N) items drawn without replacement, in original order."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(dataset)
    if fraction == 1:
        return dataset.take(np.arange(n))
    k = max(1, math.floor(fraction * n))
    rng = np.random.default_rng(seed)
    return dataset.take(np.sort(rng.choice(n, size=k, replace=False)))


def load_idx_images(path) -> ShapesDataset:
    """Read an unsigned-byte IDX image file (magic 0x00000803) into N x 1 x H x W in [-1, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    magic, n, h, w = struct.unpack(">IIII", raw[:16])
    if magic != 0x00000803:
        raise ValueError(f"{path}: IDX magic {magic:#010x}, expected 0x00000803")
    data = np.frombuffer(raw, dtype=np.uint8, count=n * h * w, offset=16)
    images = data.reshape(n, 1, h, w).astype(np.float64) / 127.5 - 1.0
    return ShapesDataset(images, None, None, None)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images)
    n, _, h, w = images.shape
    payload = np.clip(np.floor((images[:, 0] + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)
    Path(path).write_bytes(struct.pack(">IIII", 0x00000803, n, h, w) + payload.tobytes())


# -- optimiser ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(weights: dict, grads: dict, state: AdamState, lr: float = 2e-4, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8, step_index: int | None = None) -> AdamState:
    """Bias-corrected Adam update applied in place to the Tensors in ``weights``.

    A missing gradient counts as zero.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            where = state.t if step_index is None else step_index
            raise NumericError(f"non-finite gradient for {name} at step {where}")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, w in weights.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(w.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        w.data = w.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# -- training --------------------------------------------------------------------


@dataclass
class TrainSetup:
    loss: LossConfig
    aug: AugConfig
    batch_size: int = 32
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps: int = 1

    @classmethod
    def from_config(cls, cfg: Config) -> "TrainSetup":
        loss, aug = cfg.loss_config(), cfg.aug_config()
        loss.check_against(aug)
        return cls(loss, aug, cfg["train.batch_size"], cfg["train.lr"], cfg["train.beta1"],
                   cfg["train.beta2"], cfg["train.d_steps"])


@dataclass
class TrainState:
    bundle: ModelBundle
    adam_d: AdamState
    adam_g: AdamState
    rngs: dict
    step: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, bundle: ModelBundle, seed: int, aug_seed: int = -1) -> "TrainState":
        data_ss, latent_ss, aug_ss = np.random.SeedSequence(seed).spawn(3)
        if aug_seed >= 0:
            aug_ss = np.random.SeedSequence([aug_seed, 0xA5])
        rngs = {
            "data": np.random.Generator(np.random.PCG64(data_ss)),
            "latent": np.random.Generator(np.random.PCG64(latent_ss)),
            "aug": np.random.Generator(np.random.PCG64(aug_ss)),
        }
        return cls(bundle, AdamState(), AdamState(), rngs)

    def save(self, path) -> None:
        """Weights and moments go to the binary checkpoint; counters and RNGs to ``<path>.json``."""
        tensors = {}
        for name, arr in self.bundle.state_dict().items():
            tensors[f"model.{name}"] = arr
        for tag, adam in (("d", self.adam_d), ("g", self.adam_g)):
            for name in adam.m:
                tensors[f"adam_{tag}.m.{name}"] = adam.m[name]
                tensors[f"adam_{tag}.v.{name}"] = adam.v[name]
        save_tensors(path, tensors)
        meta = {
            "step": self.step,
            "adam_d_t": self.adam_d.t,
            "adam_g_t": self.adam_g.t,
            "rngs": {k: g.bit_generator.state for k, g in self.rngs.items()},
            "history": self.history,
        }
        Path(f"{path}.json").write_text(json.dumps(meta))

    def load(self, path) -> "TrainState":
        tensors = load_tensors(path)
        self.bundle.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("model.")})
        meta = json.loads(Path(f"{path}.json").read_text())
        for tag, adam, t_key in (("d", self.adam_d, "adam_d_t"), ("g", self.adam_g, "adam_g_t")):
            adam.m = {k[len(f"adam_{tag}.m."):]: v for k, v in tensors.items() if k.startswith(f"adam_{tag}.m.")}
            adam.v = {k[len(f"adam_{tag}.v."):]: v for k, v in tensors.items() if k.startswith(f"adam_{tag}.v.")}
            adam.t = meta[t_key]
        for k, g in self.rngs.items():
            g.bit_generator.state = meta["rngs"][k]
        self.step = meta["step"]
        self.history = meta["history"]
        return self


@dataclass
class MetricsRecord:
    step: int
    d_loss: float
    g_loss: float
    ss_d: dict = field(default_factory=dict)
    ss_g: dict = field(default_factory=dict)
    fd: float | None = None
    mode_coverage: int | None = None
    probe: dict = field(default_factory=dict)

    def csv_row(self) -> list:
        ss = lambda d, k: d.get(k, 0.0)  # noqa: E731
        return [
            self.step, self.d_loss, self.g_loss,
            ss(self.ss_d, "color"), ss(self.ss_d, "translation"), ss(self.ss_d, "cutout"),
            ss(self.ss_g, "color"), ss(self.ss_g, "translation"), ss(self.ss_g, "cutout"),
            self.fd, self.mode_coverage,
            self.probe.get("shape"), self.probe.get("color"), self.probe.get("pos"),
        ]


def _check_finite(terms, what: str, step: int) -> None:
    value = terms.total.item()
    if not np.isfinite(value):
        parts = {"adversarial": terms.adversarial, **{f"ss_{k}": v for k, v in terms.ss.items()}}
        raise NumericError(f"{what} loss is {value} at step {step}; components: {parts}")


def train_step(state: TrainState, real_batch: np.ndarray, setup: TrainSetup) -> tuple[TrainState, MetricsRecord]:
    """One generator update preceded by ``setup.d_steps`` discriminator updates.

    ``real_batch`` holds ``d_steps`` consecutive real batches stacked along axis 0.
    """
    bundle = state.bundle
    latent_dim = bundle.generator.latent_dim
    rng_latent, rng_aug = state.rngs["latent"], state.rngs["aug"]
    d_params = bundle.discriminator_parameters()
    g_params = bundle.generator_parameters()

    for real in np.array_split(np.asarray(real_batch), setup.d_steps):
        n = real.shape[0]
        z = rng_latent.standard_normal((n, latent_dim))
        p_real = sample_params(rng_aug, setup.aug, n)
        p_fake = sample_params(rng_aug, setup.aug, n)
        with T.no_grad():
            fake = bundle.generator(z)
        bundle.zero_grad()
        d_terms = discriminator_objective(bundle, real, fake, p_real, p_fake, setup.loss, setup.aug)
        _check_finite(d_terms, "discriminator", state.step)
        d_terms.total.backward()
        adam_step(d_params, {k: p.grad for k, p in d_params.items()}, state.adam_d,
                  setup.lr, setup.beta1, setup.beta2, step_index=state.step)

    z = rng_latent.standard_normal((setup.batch_size, latent_dim))
    p_gen = sample_params(rng_aug, setup.aug, setup.batch_size)
    bundle.zero_grad()
    g_terms = generator_objective(bundle, bundle.generator(z), p_gen, setup.loss, setup.aug)
    _check_finite(g_terms, "generator", state.step)
    g_terms.total.backward()
    adam_step(g_params, {k: p.grad for k, p in g_params.items()}, state.adam_g,
              setup.lr, setup.beta1, setup.beta2, step_index=state.step)
    bundle.zero_grad()

    state.step += 1
    record = MetricsRecord(state.step, d_terms.total.item(), g_terms.total.item(), dict(d_terms.ss), dict(g_terms.ss))
    state.history.append([record.step, record.d_loss, record.g_loss])
    return state, record


def draw_real_batch(state: TrainState, images: np.ndarray, setup: TrainSetup) -> np.ndarray:
    n = images.shape[0]
    batches = []
    for _ in range(setup.d_steps):
        idx = state.rngs["data"].choice(n, size=min(setup.batch_size, n), replace=False)
        batches.append(images[idx])
    return np.concatenate(batches)


# -- metrics ---------------------------------------------------------------------


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    """|mu_a - mu_b|^2 + tr(A + B - 2 (A B)^(1/2)) for covariance matrices A, B.

    tr (A B)^(1/2) is the sum of square roots of the eigenvalues of the
    symmetric matrix A^(1/2) B A^(1/2).
    """
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape:
        raise ValueError("moment dimensions differ")
    evals, evecs = np.linalg.eigh(cov_a)
    sqrt_a = (evecs * np.sqrt(np.clip(evals, 0, None))) @ evecs.T
    middle = sqrt_a @ cov_b @ sqrt_a
    middle = (middle + middle.T) / 2
    tr_sqrt = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(middle), 0, None))))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def moments(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(vectors, dtype=np.float64).reshape(len(vectors), -1)
    mu = x.mean(axis=0)
    cov = np.cov(x, rowvar=False) if len(x) > 1 else np.zeros((x.shape[1], x.shape[1]))
    cov = np.atleast_2d(cov)
    if len(x) < x.shape[1] + 1:
        cov = cov + 1e-6 * np.eye(x.shape[1])
    return mu, cov


def frechet_distance(set_a, set_b) -> float:
    a = np.asarray(set_a, dtype=np.float64).reshape(len(set_a), -1)
    b = np.asarray(set_b, dtype=np.float64).reshape(len(set_b), -1)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"vector dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return frechet_from_moments(*moments(a), *moments(b))


def mode_coverage(samples, centers, radius: float) -> int:
    """Number of centers with at least one sample within ``radius``."""
    centers = np.asarray(centers, dtype=np.float64)
    if len(centers) == 0:
        raise ValueError("centers must be nonempty")
    centers = centers.reshape(len(centers), -1)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return 0
    samples = samples.reshape(len(samples), -1)
    d2 = (np.sum(centers**2, axis=1)[:, None] + np.sum(samples**2, axis=1)[None, :]
          - 2.0 * centers @ samples.T)
    return int(np.sum(np.any(d2 <= radius**2, axis=1)))


def linear_probe(features, labels, steps: int = 300, seed: int = 0, lr: float = 0.5, l2: float = 1e-4) -> float:
    """Held-out accuracy of multinomial logistic regression on frozen features.

    80/20 split fixed by ``seed``; features standardised with train statistics;
    full-batch gradient descent.
    """
    x = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
    y = np.asarray(labels).astype(int)
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabelError("linear probe needs at least two classes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    n_train = int(round(0.8 * len(x)))
    tr, te = order[:n_train], order[n_train:]
    mu = x[tr].mean(axis=0)
    sd = x[tr].std(axis=0)
    sd[sd == 0] = 1.0
    xs = (x - mu) / sd
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[c] for c in y])
    onehot = np.eye(len(classes))[yi[tr]]
    W = np.zeros((x.shape[1], len(classes)))
    b = np.zeros(len(classes))
    for _ in range(steps):
        logits = xs[tr] @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        prob = np.exp(logits)
        prob /= prob.sum(axis=1, keepdims=True)
        err = (prob - onehot) / len(tr)
        W -= lr * (xs[tr].T @ err + l2 * W)
        b -= lr * err.sum(axis=0)
    pred = np.argmax(xs[te] @ W + b, axis=1)
    return float(np.mean(pred == yi[te]))


# -- evaluation ------------------------------------------------------------------


@dataclass
class EvalContext:
    reference: ShapesDataset
    train_images: np.ndarray
    n_samples: int = 500
    fd_features: str = "pixels"
    probe_steps: int = 300
    seed: int = 0
    ref_moments: tuple | None = None
    centers: np.ndarray | None = None
    radius: float = 0.0

    def __post_init__(self):
        ref = self.reference.images.reshape(len(self.reference), -1)
        if self.fd_features == "pixels":
            self.ref_moments = moments(ref)
        labels = self.reference.labels
        if labels["shape"] is not None:
            key = (labels["shape"] * len(COLORS) + labels["color"]) * GRID * GRID + labels["pos"]
        else:
            key = np.zeros(len(ref), dtype=int)
        groups = [np.flatnonzero(key == k) for k in np.unique(key)]
        self.centers = np.stack([ref[g].mean(axis=0) for g in groups])
        own = np.concatenate([np.linalg.norm(ref[g] - self.centers[i], axis=1) for i, g in enumerate(groups)])
        self.radius = float(np.quantile(own, 0.9))


def discriminator_features(bundle: ModelBundle, images: np.ndarray, chunk: int = 500) -> np.ndarray:
    with T.no_grad():
        return np.concatenate([bundle.backbone(images[i : i + chunk]).data for i in range(0, len(images), chunk)])


def evaluate(state: TrainState, ctx: EvalContext, setup: TrainSetup) -> MetricsRecord:
    """Losses on a fixed evaluation batch plus sample-quality and probe metrics.

    Uses its own RNG seeded by ``ctx.seed`` so evaluation never perturbs training.
    """
    bundle = state.bundle
    rng = np.random.default_rng([ctx.seed, 0xE7A1])
    latent_dim = bundle.generator.latent_dim
    n = min(setup.batch_size, len(ctx.train_images))
    with T.no_grad():
        real = ctx.train_images[rng.choice(len(ctx.train_images), size=n, replace=False)]
        fake = bundle.generator(rng.standard_normal((n, latent_dim)))
        d_terms = discriminator_objective(bundle, real, fake, sample_params(rng, setup.aug, n),
                                          sample_params(rng, setup.aug, n), setup.loss, setup.aug)
        g_terms = generator_objective(bundle, fake, sample_params(rng, setup.aug, n), setup.loss, setup.aug)
        samples = bundle.generator(rng.standard_normal((ctx.n_samples, latent_dim))).data

    flat = samples.reshape(len(samples), -1)
    if ctx.fd_features == "pixels":
        fd = frechet_from_moments(*moments(flat), *ctx.ref_moments)
    else:
        fd = frechet_distance(discriminator_features(bundle, samples), discriminator_features(bundle, ctx.reference.images))
    coverage = mode_coverage(flat, ctx.centers, ctx.radius)

    probe = {}
    labels = ctx.reference.labels
    if labels["shape"] is not None:
        feats = discriminator_features(bundle, ctx.reference.images)
        for name in ("shape", "color", "pos"):
            probe[name] = linear_probe(feats, labels[name], ctx.probe_steps, seed=ctx.seed)
    else:
        probe = {name: 0.0 for name in ("shape", "color", "pos")}
    return MetricsRecord(state.step, d_terms.total.item(), g_terms.total.item(), dict(d_terms.ss), dict(g_terms.ss),
                         fd, coverage, probe)


# -- experiments -----------------------------------------------------------------


def load_dataset(cfg: Config) -> ShapesDataset:
    if cfg["dataset.idx"]:
        return load_idx_images(cfg["dataset.idx"])
    return make_shapes_dataset(cfg["dataset.n"], cfg["dataset.seed"], cfg["dataset.size"])


def prepare(cfg: Config) -> tuple[TrainState, TrainSetup, ShapesDataset, ShapesDataset]:
    full = load_dataset(cfg)
    train = subsample(full, cfg["data.fraction"], cfg["dataset.seed"])
    channels, size = full.images.shape[1], full.images.shape[2]
    cfg = validate({**cfg, "dataset.size": size})
    bundle = build_bundle(cfg.model_config(channels))
    state = TrainState.create(bundle, cfg["train.seed"], cfg["train.aug_seed"])
    return state, TrainSetup.from_config(cfg), full, train


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def metrics_csv(records: list) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for rec in records:
        writer.writerow([_fmt(v) for v in rec.csv_row()])
    return buf.getvalue()


def run_experiment(cfg: Config, out_dir=None, progress: bool = False) -> dict:
    """Train, evaluate every ``train.eval_interval`` steps and write the run artifacts.

    Writes ``metrics.csv``, ``checkpoint.bin`` (+ ``checkpoint.bin.json``),
    ``config.txt`` and ``summary.json`` into ``out_dir`` (default ``out.dir``).
    """
    out = Path(out_dir or cfg["out.dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    start = time.perf_counter()
    state, setup, full, train = prepare(cfg)
    ctx = EvalContext(full, train.images, cfg["eval.n_samples"], cfg["eval.fd_features"],
                      cfg["eval.probe_steps"], seed=cfg["train.seed"])
    records = [evaluate(state, ctx, setup)]
    interval = cfg["train.eval_interval"]
    steps = cfg["train.steps"]
    while state.step < steps:
        batch = draw_real_batch(state, train.images, setup)
        train_step(state, batch, setup)
        if state.step % interval == 0 or state.step == steps:
            records.append(evaluate(state, ctx, setup))
            if progress:
                r = records[-1]
                logger.info("step %d d_loss %.4f g_loss %.4f fd %.3f", r.step, r.d_loss, r.g_loss, r.fd)

    (out / "metrics.csv").write_text(metrics_csv(records))
    (out / "config.txt").write_text(cfg.to_text())
    state.save(out / "checkpoint.bin")
    final, best = records[-1], min(records, key=lambda r: r.fd)
    summary = {
        "config": dict(cfg),
        "final": _record_dict(final),
        "best": _record_dict(best),
        "initial_fd": records[0].fd,
        "train_size": len(train),
        "wall_time_s": time.perf_counter() - start,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _record_dict(rec: MetricsRecord) -> dict:
    return {k: v for k, v in asdict(rec).items()}


# -- sweeps ----------------------------------------------------------------------


def sweep_points(cfg: Config, grid: str, seeds: int = 5) -> list[tuple[str, Config]]:
    """Named configurations for one sweep.

    lambda: lambda_d = lambda_g over the hyper-parameter grid.
    seeds: DiffAugment baseline and AugSelf over ``seeds`` training seeds.
    strength: baseline and AugSelf with normal and strong augmentation.
    task: each self-supervised task variant.
    """
    base = dict(cfg)
    points = []
    if grid == "lambda":
        for lam in LAMBDA_GRID:
            points.append((f"lambda_{lam:g}", {"loss.lambda_d": lam, "loss.lambda_g": lam}))
    elif grid == "seeds":
        for s in range(seeds):
            seed = base["train.seed"] + s
            points.append((f"baseline_seed{seed}", {"loss.ss_task": "none", "train.seed": seed}))
            points.append((f"augself_seed{seed}", {"loss.ss_task": "ASS", "train.seed": seed}))
    elif grid == "strength":
        for preset in ("normal", "strong"):
            points.append((f"baseline_{preset}", {"loss.ss_task": "none", "aug.preset": preset}))
            points.append((f"augself_{preset}", {"loss.ss_task": "ASS", "aug.preset": preset}))
    elif grid == "task":
        for task in ("none", "SS", "SSplus", "ASS", "fixed"):
            points.append((f"task_{task}", {"loss.ss_task": task}))
    else:
        raise ValueError(f"unknown sweep grid {grid!r}")
    return [(name, validate({**base, **changes, "out.dir": str(Path(base["out.dir"]) / name)}))
            for name, changes in points]


def _run_point(args):
    name, cfg = args
    return name, run_experiment(cfg)


def run_sweep(cfg: Config, grid: str, jobs: int = 1, seeds: int = 5) -> dict:
    """Run every grid point into its own subdirectory and write a combined summary."""
    points = sweep_points(cfg, grid, seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_run_point, points))
    else:
        results = dict(_run_point(p) for p in points)

    rows = []
    for name, _ in points:
        s = results[name]
        rows.append({"point": name, "final_fd": s["final"]["fd"], "best_fd": s["best"]["fd"],
                     "mode_coverage": s["final"]["mode_coverage"], **{f"probe_{k}": v for k, v in s["final"]["probe"].items()}})
    report = {"grid": grid, "points": rows}
    if grid == "seeds":
        base = {r["point"].split("_seed")[1]: r for r in rows if r["point"].startswith("baseline")}
        aug = {r["point"].split("_seed")[1]: r for r in rows if r["point"].startswith("augself")}
        wins = sum(aug[s]["final_fd"] <= base[s]["final_fd"] for s in base)
        report["comparison"] = {
            "augself_fd_wins": wins,
            "seeds": len(base),
            "claim_holds": wins >= math.ceil(0.6 * len(base)),
            "median_fd_baseline": float(np.median([r["final_fd"] for r in base.values()])),
            "median_fd_augself": float(np.median([r["final_fd"] for r in aug.values()])),
            "median_probe_pos_baseline": float(np.median([r["probe_pos"] for r in base.values()])),
            "median_probe_pos_augself": float(np.median([r["probe_pos"] for r in aug.values()])),
        }
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    header = list(rows[0])
    lines = [",".join(header)] + [",".join(_fmt(r[h]) for h in header) for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    (out / "sweep.json").write_text(json.dumps(report, indent=2))
    return report

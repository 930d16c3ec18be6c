import numpy as np
import pytest

from augself.augment import CATEGORY_DIMS
from augself.models import (
    ModelConfig,
    SelfSupHead,
    build_bundle,
    count_params,
    discriminator_forward,
    generator_forward,
    load_tensors,
    save_tensors,
    selfsup_predict,
)
from augself.tensor import ShapeError, Tensor

SMALL = dict(image_shape=(3, 8, 8), latent_dim=6, gen_hidden=(16,), channels=(4, 8), disc_hidden=16, feat_dim=10)


@pytest.fixture(scope="module")
def bundle():
    return build_bundle(ModelConfig(**SMALL))


def test_generator_shape_and_range(bundle):
    z = np.random.default_rng(0).normal(size=(64, 6))
    out = generator_forward(bundle.generator, z).data
    assert out.shape == (64, 3, 8, 8)
    assert np.all(np.abs(out) < 1)


def test_generator_deterministic(bundle):
    z = np.random.default_rng(1).normal(size=(3, 6))
    assert np.array_equal(generator_forward(bundle.generator, z).data, generator_forward(bundle.generator, z).data)


def test_generator_rejects_wrong_latent(bundle):
    with pytest.raises(ShapeError):
        generator_forward(bundle.generator, np.zeros((2, 5)))


def test_discriminator_score_is_head_of_features(bundle):
    x = np.random.default_rng(2).uniform(-1, 1, (4, 3, 8, 8))
    feats, score = discriminator_forward(bundle.backbone, bundle.adv_head, x)
    assert feats.shape == (4, 10) and score.shape == (4,)
    assert np.array_equal(score.data, bundle.adv_head(feats).data)


def test_discriminator_batch_independence(bundle):
    x = np.random.default_rng(3).uniform(-1, 1, (6, 3, 8, 8))
    _, whole = discriminator_forward(bundle.backbone, bundle.adv_head, x)
    _, a = discriminator_forward(bundle.backbone, bundle.adv_head, x[:3])
    _, b = discriminator_forward(bundle.backbone, bundle.adv_head, x[3:])
    assert np.allclose(whole.data, np.concatenate([a.data, b.data]), atol=1e-12)


def test_discriminator_rejects_wrong_image(bundle):
    with pytest.raises(ShapeError):
        discriminator_forward(bundle.backbone, bundle.adv_head, np.zeros((1, 3, 6, 6)))


def test_selfsup_subtract_is_zero_on_identical_inputs(bundle):
    x = np.random.default_rng(4).uniform(-1, 1, (2, 3, 8, 8))
    head = bundle.ss_heads["color"]
    pred = selfsup_predict(bundle.backbone, head, x, x).data
    assert np.allclose(pred, np.broadcast_to(head.layers[0].b.data, pred.shape))


@pytest.mark.parametrize("fusion", ["subtract", "concat", "aug_only", "bilinear"])
@pytest.mark.parametrize("depth", ["linear", "two_layer_mlp"])
def test_head_variants_output_shape(fusion, depth):
    head = SelfSupHead(10, 3, np.random.default_rng(0), fusion, depth)
    rng = np.random.default_rng(1)
    out = head(Tensor(rng.normal(size=(4, 10))), Tensor(rng.normal(size=(4, 10))))
    assert out.shape == (4, 3)


@pytest.mark.parametrize("feat_dim", [1, 7, 128])
def test_head_parameter_formula(feat_dim):
    cfg = ModelConfig(image_shape=(3, 8, 8), feat_dim=feat_dim, gen_hidden=(8,), channels=(2,), disc_hidden=8)
    counts = count_params(build_bundle(cfg))
    assert counts["ss_heads"] == sum(feat_dim * d + d for d in CATEGORY_DIMS.values())


def test_default_overhead():
    counts = count_params(build_bundle(ModelConfig()))
    assert counts["ss_heads"] == 903
    assert counts["ss_fraction"] < 0.005


def test_signal_subset_builds_only_requested_heads():
    b = build_bundle(ModelConfig(**SMALL, signals=("cutout",)))
    assert list(b.ss_heads) == ["cutout"]


def test_parameter_split_is_disjoint(bundle):
    d, g = bundle.discriminator_parameters(), bundle.generator_parameters()
    assert not set(d) & set(g)
    assert len(d) + len(g) == len(bundle.named_parameters())


def test_checkpoint_round_trip(tmp_path, bundle):
    path = tmp_path / "w.bin"
    state = bundle.state_dict()
    save_tensors(path, state)
    assert path.read_bytes()[:8] == b"AUGSELF1"
    loaded = load_tensors(path)
    assert list(loaded) == list(state)
    assert all(np.array_equal(loaded[k], state[k]) for k in state)

    other = build_bundle(ModelConfig(**SMALL, seed=9))
    other.load_state_dict(loaded)
    z = np.ones((1, 6))
    assert np.array_equal(other.generator(z).data, bundle.generator(z).data)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC")
    with pytest.raises(ValueError):
        load_tensors(path)

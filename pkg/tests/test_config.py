import pytest

from augself.config import SCHEMA, ConfigError, default_config, parse_config


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == default_config()
    assert cfg["loss.lambda_d"] == 1.0 and cfg["loss.lambda_g"] == 1.0


def test_every_key_has_default_and_doc():
    for key, (kind, default, doc) in SCHEMA.items():
        assert doc, key
    assert set(default_config()) == set(SCHEMA)


def test_override_wins_over_file(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# comment\nloss.lambda_g = 0.7\ntrain.steps = 5  # trailing\n")
    cfg = parse_config(path, ["loss.lambda_g=0.2"])
    assert cfg["loss.lambda_g"] == 0.2 and cfg["train.steps"] == 5


@pytest.mark.parametrize(
    "override,key",
    [
        ("loss.ss_task=BOGUS", "loss.ss_task"),
        ("nope.key=1", "nope.key"),
        ("train.steps=abc", "train.steps"),
        ("data.fraction=0", "data.fraction"),
        ("aug.translation_ratio=0.9", "aug.translation_ratio"),
        ("loss.signals=", "loss.signals"),
    ],
)
def test_errors_name_the_key(override, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(overrides=[override])


def test_signals_must_be_enabled():
    with pytest.raises(ConfigError, match="loss.signals"):
        parse_config(overrides=["aug.policy=color,translation", "loss.signals=cutout"])


def test_signal_subset_allowed():
    cfg = parse_config(overrides=["loss.signals=color"])
    assert cfg.loss_config().predicted_signals == ("color",)


def test_auto_ratios_follow_preset():
    aug = parse_config(overrides=["aug.preset=strong"]).aug_config()
    assert (aug.translation_ratio, aug.cutout_ratio) == (0.25, 0.75)
    aug = parse_config(overrides=["aug.preset=strong", "aug.cutout_ratio=0.3"]).aug_config()
    assert aug.cutout_ratio == 0.3


def test_text_round_trip(tmp_path):
    cfg = parse_config(overrides=["loss.signals=color,cutout", "train.lr=0.001"])
    path = tmp_path / "echo.cfg"
    path.write_text(cfg.to_text())
    assert parse_config(path) == cfg

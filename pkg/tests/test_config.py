import pytest

from cka_distill.config import ConfigError, ExperimentConfig
from cka_distill.toy.train import Strategy


def test_defaults_echo_every_key_and_round_trip():
    cfg = ExperimentConfig()
    text = cfg.to_text()
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert keys == ExperimentConfig.keys()
    assert ExperimentConfig.from_text(text) == cfg


def test_loss_coefficient_defaults():
    cfg = ExperimentConfig()
    assert (cfg.alpha, cfg.beta, cfg.gamma, cfg.temperature) == (1.0, 0.8, 1.0, 2.0)
    assert (cfg.num_classes, cfg.audio_len, cfg.cue_count) == (4, 32, 4)


def test_parse_comments_and_types():
    cfg = ExperimentConfig.from_text(
        "# comment\n\nseed = 3  # trailing\nnoise_sigma=0.5\nstrategy = SFT\nquery_policy = MeanOverResponseTokens\n"
    )
    assert cfg.seed == 3 and cfg.noise_sigma == 0.5
    assert cfg.train_config().strategy is Strategy.SFT


@pytest.mark.parametrize(
    "text, msg",
    [
        ("bogus_key = 1\n", "unknown config key 'bogus_key'"),
        ("seed = 1\nseed = 2\n", "duplicate"),
        ("seed = one\n", "cannot parse"),
        ("seed\n", "expected 'key = value'"),
        ("strategy = Magic\n", "strategy"),
        ("query_policy = Last\n", "query_policy"),
        ("teacher_embed_dim = 8\n", "teacher_embed_dim must exceed"),
        ("student_heads = 3\n", "divisible"),
        ("vocab_size = 5\n", "vocab_size"),
        ("temperature = 0\n", "temperature"),
    ],
)
def test_rejections(text, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_text(text)


def test_derived_configs():
    cfg = ExperimentConfig()
    t, s = cfg.teacher_model(), cfg.student_model()
    assert t.embed_dim > s.embed_dim and t.vocab_size == s.vocab_size
    assert cfg.pretrain_config().weight_decay == cfg.teacher_weight_decay
    assert cfg.train_config("ForwardKL").strategy is Strategy.FORWARD_KL

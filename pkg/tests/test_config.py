import pytest

from nuwave2.config import ConfigError, RunConfig, load_config, parse_config
from nuwave2.diffusion import DEFAULT_INFERENCE_LAMBDAS
from nuwave2.metrics import EVAL_RATES


def test_empty_text_gives_defaults():
    assert parse_config("") == RunConfig()
    assert parse_config("# only a comment\n\n   \n") == RunConfig()


def test_full_example(tmp_path):
    text = """
    # model
    model.channels = 16
    model.n_layers = 4   # trailing comment
    train.lr = 1e-3
    train.batch = 2
    data.corpus_root = /data/vctk
    data.holdout = p360, p361
    metric.rates = 8000, 24000
    sample.n_steps = 3
    sample.lambdas = -2.6, 5.0, 17.2
    """
    p = tmp_path / "run.cfg"
    p.write_text(text)
    cfg = load_config(p)
    assert (cfg.model.channels, cfg.model.n_layers) == (16, 4)
    assert cfg.train.lr == 1e-3 and cfg.train.batch == 2
    assert cfg.data.corpus_root == "/data/vctk"
    assert cfg.data.holdout == ("p360", "p361")
    assert cfg.metric.rates == (8000, 24000)
    assert cfg.sample.schedule().lambdas == (-2.6, 5.0, 17.2)


def test_defaults_round_out_sections():
    cfg = parse_config("model.channels = 8")
    assert cfg.sample.lambdas == DEFAULT_INFERENCE_LAMBDAS
    assert cfg.metric.rates == EVAL_RATES
    assert cfg.metric.stft().fft_size == 2048


@pytest.mark.parametrize(
    "text,line",
    [
        ("model.channels = 8\nnonsense", 2),
        ("bogus.key = 1", 1),
        ("model.nope = 1", 1),
        ("\n\nmodel.channels = eight", 3),
        ("model.channels = 8\nmodel.channels = 16", 2),
        ("channels = 8", 1),
        ("a.b.c = 1", 1),
        ("metric.rates = 8000, x", 1),
    ],
)
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f"^line {line}:") as info:
        parse_config(text)
    assert info.value.line == line


def test_step_count_must_match_lambdas():
    with pytest.raises(ConfigError, match="n_steps"):
        parse_config("sample.n_steps = 4")


def test_invalid_model_values_rejected():
    with pytest.raises(ConfigError):
        parse_config("model.channels = 3")

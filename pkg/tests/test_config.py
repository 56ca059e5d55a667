import pytest

from spectral_meta.config import ConfigError, MtrConfig, Prop1Config, RunConfig, parse_pairs


def test_parse_pairs_comments_and_errors():
    assert parse_pairs("a = 1  # note\n\n# full line\nb=x y\n") == {"a": "1", "b": "x y"}
    with pytest.raises(ConfigError, match=":2:"):
        parse_pairs("a = 1\nbroken\n")


def test_load_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("method = maml\nlambda_kappa = 1\nnormalize = yes\n")
    cfg = RunConfig.load(p, ["beta=0.5", "episodes = 12"])
    assert (cfg.method, cfg.lambda_kappa, cfg.normalize, cfg.beta, cfg.episodes) == ("maml", 1.0, True, 0.5, 12)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_pairs({"bogus": "1"})


@pytest.mark.parametrize("pairs,key", [
    ({"method": "svm"}, "method"),
    ({"beta": "-1"}, "beta"),
    ({"n_way": "0"}, "n_way"),
    ({"episodes": "abc"}, "episodes"),
    ({"activation": "sigmoid"}, "activation"),
    ({"n_way": "40"}, "n_way"),
])
def test_validation_names_the_key(pairs, key):
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_pairs(pairs)


def test_tuples_and_dump_roundtrip():
    cfg = Prop1Config.from_pairs({"gammas": "0.5, 2", "dims": "2 3"})
    assert cfg.gammas == (0.5, 2.0) and cfg.dims == (2, 3)
    again = Prop1Config.from_pairs(parse_pairs(cfg.dumps()))
    assert again == cfg
    assert RunConfig.from_pairs(parse_pairs(RunConfig().dumps())) == RunConfig()


def test_mtr_validation():
    with pytest.raises(ConfigError):
        MtrConfig.from_pairs({"k": "11"})
    with pytest.raises(ConfigError):
        MtrConfig.from_pairs({"n_mc": "10"})

from __future__ import annotations

import pytest

from lorenz_cocycles.config import ConfigError, ExperimentConfig, default_config_text, parse_config


def test_defaults_round_trip_through_text():
    cfg = parse_config(default_config_text())
    assert cfg.canonical() == ExperimentConfig().canonical()


def test_overrides_and_hash():
    a = ExperimentConfig()
    b = a.with_overrides(seed=5)
    assert b.experiment.seed == 5 and a.hash() != b.hash()
    # output location and worker count do not change the hash
    assert a.with_overrides(output_dir="elsewhere", threads=4).hash() == a.hash()


def test_values_parsed():
    cfg = parse_config("[experiment]\nd_list = 2, 4\ntrials = 3\n[inducing]\ndelta = markov\n[cocycle]\nepsilon = 0.1\n")
    assert cfg.experiment.d_list == (2, 4) and cfg.experiment.trials == 3
    assert cfg.inducing.delta is None and cfg.cocycle.epsilon == 0.1


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "[experiment]\ntrials = 0\n",
        "[experiment]\ntrials = many\n",
        "[experiment]\norbit = chaotic\n",
        "[lorenz]\nrho = 0.5\n",
        "[lorenz]\nfoo = 1\n",
        "[measure]\nbins = 1\n",
        "[inducing]\nmax_time = 0\n",
        "not an ini file",
    ],
)
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_rho_message_names_expansion_bound():
    with pytest.raises(ConfigError, match="expansion bound"):
        parse_config("[lorenz]\nrho = 0.5\n")

import pytest

from mmddp.config import SamplerConfig, load_config, parse_config


def test_defaults():
    c = SamplerConfig()
    assert (c.n_iter, c.burn_in, c.thin) == (10000, 2000, 5)
    assert c.alpha_prior == (1.0, 1.0) and c.tau_eps_prior == (0.1, 0.1)
    assert c.rho_grid_size == 100 and c.rho_grid_max == 0.99


def test_parse_grammar():
    text = """
    # comment
    model = mm_mv
    n_iter = 200     ; inline comment
    BURN_IN = 50
    alpha_prior = 4, 1
    wishart_df = none
    record_fitted = no
    """
    c = parse_config(text)
    assert c.model == "mmmv" and c.n_iter == 200 and c.burn_in == 50
    assert c.alpha_prior == (4.0, 1.0) and c.wishart_df is None and c.record_fitted is False


def test_section_header_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[sampler]\nmodel = ddp\nn_iter = 100\nburn_in = 20\n")
    c = load_config(p, seed=9)
    assert c.seed == 9 and c.n_iter == 100


@pytest.mark.parametrize("text", ["colour = red", "model = lasso", "n_iter = 10\nburn_in = 20",
                                  "thin = 0", "[other]\nx = 1"])
def test_rejects(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_round_trip_dict():
    c = SamplerConfig(alpha_prior=(2, 3), seed=4)
    assert SamplerConfig(**c.to_dict()) == c

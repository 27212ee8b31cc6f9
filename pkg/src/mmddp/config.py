"""Sampler configuration and its key-value file format.

Grammar (one setting per line)::

    # comment
    key = value
    alpha_prior = 1.0, 1.0      # tuples are comma separated

Blank lines and ``#``/``;`` comments are ignored, keys are case-insensitive,
unknown keys are an error. An optional ``[sampler]`` header is accepted.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

MODELS = ("mmcar", "mmmv", "ddp")


@dataclass
class SamplerConfig:
    model: str = "ddp"
    n_iter: int = 10000
    burn_in: int = 2000
    thin: int = 5
    seed: int = 0
    n_chains: int = 1
    alpha_prior: tuple[float, float] = (1.0, 1.0)
    tau_eps_prior: tuple[float, float] = (0.1, 0.1)
    tau_gamma_prior: tuple[float, float] = (0.1, 0.1)
    # None -> q + 1, the minimum proper value
    wishart_df: float | None = None
    wishart_scale: float = 1.0
    # 0 -> flat prior on (mu, beta)
    fixed_prior_precision: float = 0.0
    rho_grid_size: int = 100
    rho_grid_max: float = 0.99
    alpha_init: float = 1.0
    init_clusters: int = 1
    record_fitted: bool = True
    # joint location/fixed-effect shifts after the cluster step
    translation_moves: bool = True

    def __post_init__(self):
        self.model = self.model.lower().replace("_", "")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if not (self.n_iter >= self.burn_in >= 0):
            raise ValueError("need n_iter >= burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if not 0 < self.rho_grid_max < 1:
            raise ValueError("rho_grid_max must lie in (0, 1)")
        self.alpha_prior = tuple(float(v) for v in self.alpha_prior)
        self.tau_eps_prior = tuple(float(v) for v in self.tau_eps_prior)
        self.tau_gamma_prior = tuple(float(v) for v in self.tau_gamma_prior)

    def replace(self, **kw) -> "SamplerConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(f: dataclasses.Field, raw: str):
    raw = raw.strip()
    t = str(f.type)
    if t.startswith("tuple"):
        return tuple(float(v) for v in raw.split(","))
    if t.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean {raw!r} for {f.name}")
    if "None" in t and raw.lower() in ("none", ""):
        return None
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, **overrides) -> SamplerConfig:
    if not text.lstrip().startswith("["):
        text = "[sampler]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    if set(cp.sections()) - {"sampler"}:
        raise ValueError(f"unknown config sections {cp.sections()}")
    fields = {f.name: f for f in dataclasses.fields(SamplerConfig)}
    values = {}
    for key, raw in cp["sampler"].items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _coerce(fields[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SamplerConfig(**values)


def load_config(path, **overrides) -> SamplerConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)

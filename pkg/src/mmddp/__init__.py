"""Bayesian semi- and nonparametric models for repeated-measures multiple-membership data."""
from .config import SamplerConfig, load_config, parse_config
from .data import MMDataset, build_weights, load_dataset, load_dataset_dir, write_dataset
from .models import ChainOutput, run_chain

__version__ = "0.1.0"

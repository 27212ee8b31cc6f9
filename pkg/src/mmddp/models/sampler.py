"""Chain driver: runs a model's Gibbs sweep and stores thinned draws."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import SamplerConfig
from ..data import MMDataset
from ..dp import SamplerError
from ..numerics import make_rng
from .additive import MmcarModel, MmMvModel
from .common import FIXED_NAMES, Q_DIM, ModelData, obs_loglik
from .ddp import DdpModel

log = logging.getLogger(__name__)

MODEL_CLASSES = {"mmcar": MmcarModel, "mmmv": MmMvModel, "ddp": DdpModel}


def make_model(name: str, data: MMDataset, config: SamplerConfig):
    key = name.lower().replace("_", "")
    if key not in MODEL_CLASSES:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_CLASSES)}")
    return MODEL_CLASSES[key](ModelData(data, config))


def base_record(state) -> dict:
    out = {"mu": state.coef[0]}
    for name, v in zip(FIXED_NAMES, state.coef[1:]):
        out[f"beta[{name}]"] = v
    out["tau_eps"] = state.tau_eps
    out["alpha"] = state.clusters.alpha
    out["n_clusters"] = state.clusters.n_clusters
    for i in range(Q_DIM):
        for j in range(i, Q_DIM):
            out[f"Lambda[{i + 1},{j + 1}]"] = state.Lam[i, j]
    return out


@dataclass
class ChainOutput:
    """Thinned draws of one chain.

    ``params`` maps parameter names to (T,) traces. ``client_effects`` holds
    each client's q-vector of random effects (b_i, or θ_i = Δ_i x̃_i for the
    DDP); ``locations`` holds the per-draw (M_t, q, p) DDP cluster matrices.
    """

    model: str
    chain_id: int
    seed: int
    iterations: np.ndarray
    params: dict
    loglik: np.ndarray
    fitted: np.ndarray | None
    assignments: np.ndarray
    client_effects: np.ndarray
    locations: list | None = None
    elapsed: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.iterations)

    def beta_draws(self) -> np.ndarray:
        """(T, 5) in model order (T, t, t², Tt, Tt²)."""
        return np.column_stack([self.params[f"beta[{n}]"] for n in FIXED_NAMES]) if self.n_draws else np.zeros((0, 5))

    def trace(self, name: str) -> np.ndarray:
        return self.params[name]


def run_chain(model_name: str, data: MMDataset, config: SamplerConfig,
              rng: np.random.Generator | None = None, chain_id: int = 1,
              callback=None) -> ChainOutput:
    """Run one chain: burn in, then keep every ``thin``-th sweep.

    Sweep order is the model's ``steps()``: fixed effects, client/cluster
    step, module step (additive models), precisions, ρ (DDP), α.
    """
    if rng is None:
        rng = make_rng(config.seed, chain_id)
    model = make_model(model_name, data, config)
    md = model.md
    state = model.init_state(rng)
    steps = model.steps()

    keep = np.arange(config.burn_in + config.thin, config.n_iter + 1, config.thin)
    T = len(keep)
    records: dict[str, list] = {}
    loglik = np.empty((T, md.N))
    fitted = np.empty((T, md.N)) if config.record_fitted else None
    assignments = np.empty((T, md.n), dtype=int)
    effects = np.empty((T, md.n, Q_DIM))
    locations = [] if model.name == "ddp" else None

    t0 = time.perf_counter()
    k = 0
    for it in range(1, config.n_iter + 1):
        for pname, fn in steps:
            try:
                fn(state, model, rng)
            except Exception as exc:
                raise SamplerError(f"iteration {it}: update of {pname} failed: {exc}") from exc
        if k < T and it == keep[k]:
            fit = model.fit(state)
            loglik[k] = obs_loglik(md.y, fit, state.tau_eps)
            if fitted is not None:
                fitted[k] = fit
            assignments[k] = state.clusters.assignments
            effects[k] = model.client_theta(state)
            if locations is not None:
                locations.append(model.cluster_locations(state).copy())
            rec = base_record(state)
            rec.update(model.record(state))
            for name, v in rec.items():
                records.setdefault(name, []).append(v)
            k += 1
        if callback is not None:
            callback(it, state)
    elapsed = time.perf_counter() - t0
    log.info("%s chain %d: %d iterations in %.1fs", model.name, chain_id, config.n_iter, elapsed)
    if not records:
        rec = base_record(state)
        rec.update(model.record(state))
        records = {name: [] for name in rec}
    params = {name: np.asarray(v, dtype=float) for name, v in records.items()}
    return ChainOutput(model=model.name, chain_id=chain_id, seed=config.seed, iterations=keep,
                       params=params, loglik=loglik, fitted=fitted, assignments=assignments,
                       client_effects=effects, locations=locations, elapsed=elapsed,
                       config=config.to_dict())


def merge_chains(chains: list[ChainOutput]) -> ChainOutput:
    """Concatenate draws across chains (ordered by chain id)."""
    chains = sorted(chains, key=lambda c: c.chain_id)
    first = chains[0]
    cat = lambda xs: np.concatenate(xs, axis=0)
    params = {k: cat([c.params[k] for c in chains]) for k in first.params}
    locs = None
    if first.locations is not None:
        locs = [l for c in chains for l in c.locations]
    return ChainOutput(model=first.model, chain_id=0, seed=first.seed,
                       iterations=cat([c.iterations for c in chains]), params=params,
                       loglik=cat([c.loglik for c in chains]),
                       fitted=None if first.fitted is None else cat([c.fitted for c in chains]),
                       assignments=cat([c.assignments for c in chains]),
                       client_effects=cat([c.client_effects for c in chains]), locations=locs,
                       elapsed=sum(c.elapsed for c in chains), config=first.config)


def successive_conditional(model_name: str, data: MMDataset, config: SamplerConfig, n_cycles: int,
                           rng: np.random.Generator, monitor=("tau_eps", "mu", "beta[T]"),
                           init=None) -> dict:
    """Successive-conditional ("getting it right") simulator.

    Alternates y ~ p(y | θ) with one Gibbs sweep θ ~ K(θ | y). If the sweep
    leaves p(θ | y) invariant, the θ marginal is the prior, so the traces
    of ``monitor`` must reproduce prior moments. Needs proper priors
    (``fixed_prior_precision`` > 0). ``init(state, rng)`` may overwrite the
    starting state with a prior draw.
    """
    if config.fixed_prior_precision <= 0:
        raise ValueError("successive-conditional checks need a proper prior on (mu, beta)")
    model = make_model(model_name, data, config)
    state = model.init_state(rng)
    if init is not None:
        init(state, rng)
    steps = model.steps()
    out = {k: np.empty(n_cycles) for k in monitor}
    for c in range(n_cycles):
        y = model.fit(state) + rng.standard_normal(model.md.N) / np.sqrt(state.tau_eps)
        model.md = model.md.with_response(y)
        for _, fn in steps:
            fn(state, model, rng)
        rec = base_record(state)
        rec.update(model.record(state))
        for k in monitor:
            out[k][c] = rec[k]
    return out

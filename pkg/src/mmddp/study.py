"""Replicated simulation study: parameter recovery, fit-statistic ordering and
module-trajectory recovery on data drawn from the DDP generating model."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import SamplerConfig
from .data import MMDataset
from .fit import fit_report
from .models.common import FIXED_NAMES, Q_DIM, random_design
from .models.sampler import ChainOutput, run_chain
from .numerics import make_rng
from .posterior import client_module_trajectories, integrated_squared_error, treatment_effect_draws
from .simulate import SimConfig, SimTruth, generate

MODELS = ("ddp", "mmmv", "mmcar")
MARGIN_TIMES = (0.0, 3.0, 6.0)
TRAJECTORY_GRID = np.linspace(0.0, 6.0, 25)


@dataclass
class Replication:
    seed: int
    stats: dict = field(default_factory=dict)      # model -> {d_bar, neg_lpml, dic3}
    elapsed: dict = field(default_factory=dict)    # model -> seconds
    intervals: dict = field(default_factory=dict)  # DDP 95% intervals by quantity
    truth: dict = field(default_factory=dict)
    ise: dict = field(default_factory=dict)        # model -> trajectory ISE
    chains: dict = field(default_factory=dict)
    data: MMDataset | None = None

    @property
    def covered(self) -> dict:
        return {k: bool(lo <= self.truth[k] <= hi) for k, (lo, hi) in self.intervals.items()}

    @property
    def all_covered(self) -> bool:
        return all(self.covered.values())

    def ordered(self, stat: str, models=MODELS) -> bool:
        vals = [self.stats[m][stat] for m in models]
        return all(a < b for a, b in zip(vals, vals[1:]))

    @property
    def lpml_gap(self) -> float:
        """−LPML(MM_MV) − (−LPML(DDP))."""
        return self.stats["mmmv"]["neg_lpml"] - self.stats["ddp"]["neg_lpml"]


def recovery_intervals(chain: ChainOutput, truth: SimTruth, level: float = 0.95,
                       margin_times=MARGIN_TIMES) -> tuple[dict, dict]:
    """Equal-tailed intervals and generating values for μ, β, τ_ε and the margins."""
    a = (1 - level) / 2
    draws = {"mu": chain.params["mu"], "tau_eps": chain.params["tau_eps"]}
    values = {"mu": truth.mu, "tau_eps": truth.tau_eps}
    for k in FIXED_NAMES:
        draws[f"beta[{k}]"] = chain.params[f"beta[{k}]"]
        values[f"beta[{k}]"] = truth.beta[k]
    eff = treatment_effect_draws(chain.beta_draws(), margin_times)
    for j, t in enumerate(margin_times):
        draws[f"margin[{t:g}]"] = eff[:, j]
        values[f"margin[{t:g}]"] = float(truth.treatment_effect([t])[0])
    iv = {k: tuple(float(v) for v in np.quantile(x, [a, 1 - a])) for k, x in draws.items()}
    return iv, values


def _center_within_groups(traj: np.ndarray, data: MMDataset) -> np.ndarray:
    out = traj.copy()
    for block in data.adjacency().group_blocks:
        out[..., block, :] -= out[..., block, :].mean(axis=-2, keepdims=True)
    return out


def module_trajectory_estimates(chain: ChainOutput, data: MMDataset, truth: SimTruth, grid) -> np.ndarray:
    """(M_true, S, len(grid)) posterior-mean module trajectories per generating cluster.

    DDP: per-client trajectories averaged over the CBT clients of each
    generating cluster. Additive models have one trajectory per module, shared
    by every cluster.
    """
    grid = np.asarray(grid, dtype=float)
    M, S = truth.n_clusters, data.n_modules
    Zg = random_design(grid)
    if chain.model == "ddp":
        per_client = client_module_trajectories(chain, grid)
        est = np.zeros((M, S, len(grid)))
        cbt = data.treatment == 1
        for m in range(M):
            idx = cbt & (truth.assignments == m)
            if idx.any():
                est[m] = per_client[idx].mean(axis=0)
        return est
    if chain.model == "mmmv":
        G = np.array([[chain.params[f"Gamma[{s},{j + 1}]"].mean() for j in range(Q_DIM)]
                      for s in data.module_ids])
        shared = G @ Zg.T
    else:
        g = np.array([chain.params[f"gamma[{s}]"].mean() for s in data.module_ids])
        shared = np.repeat(g[:, None], len(grid), axis=1)
    return np.broadcast_to(shared, (M, S, len(grid))).copy()


def trajectory_ise(chain: ChainOutput, data: MMDataset, truth: SimTruth, grid=TRAJECTORY_GRID) -> float:
    """Integrated squared error of module trajectories against the generating ones.

    Both sides are centred across the modules of each group: the additive
    models pin module effects to sum to zero, so only within-group contrasts
    are comparable across model families.
    """
    grid = np.asarray(grid, dtype=float)
    true = np.stack([[truth.module_trajectory(m, s, grid) for s in range(data.n_modules)]
                     for m in range(truth.n_clusters)])
    est = module_trajectory_estimates(chain, data, truth, grid)
    return integrated_squared_error(_center_within_groups(est, data),
                                    _center_within_groups(true, data), grid)


def run_replication(seed: int, config: SamplerConfig | None = None, models=MODELS,
                    sim_config: SimConfig | None = None, keep_chains: bool = False,
                    log=None) -> Replication:
    """Generate one dataset from stream (seed, 0); fit every model on stream (seed, 1)."""
    config = SamplerConfig() if config is None else config
    data, truth = generate(sim_config or SimConfig(), make_rng(seed, 0))
    rep = Replication(seed=seed, data=data if keep_chains else None)
    for model in models:
        t0 = time.perf_counter()
        chain = run_chain(model, data, config.replace(model=model, seed=seed), make_rng(seed, 1))
        rep.elapsed[model] = time.perf_counter() - t0
        fr = fit_report(chain.loglik)
        rep.stats[model] = {"d_bar": fr.d_bar, "neg_lpml": fr.neg_lpml, "dic3": fr.dic3}
        if data.n_modules:
            rep.ise[model] = trajectory_ise(chain, data, truth)
        if model == "ddp":
            rep.intervals, rep.truth = recovery_intervals(chain, truth)
        if keep_chains:
            rep.chains[model] = chain
        if log is not None:
            log(f"seed {seed} {model}: {rep.elapsed[model]:.0f}s -LPML {fr.neg_lpml:.1f} DIC3 {fr.dic3:.1f}")
    return rep

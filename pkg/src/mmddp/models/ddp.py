"""MM DDP model: client-by-module random-effect matrices under a DP.

y_ij = μ + d'β + z_ij' Δ_i x̃_i + ε with x̃_i = (1, x_i) and Δ_i = Δ*_{s_i},
Δ*_m ~ N_{q×(S+1)}(0, Λ⁻¹, P⁻¹), P = diag(1, Q_1(ρ_1), …, Q_G(ρ_G)),
Q_g(ρ) = D_g − ρ Ω_g. Locations are stored row-stacked, δ = vec_row(Δ).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dp import ClusterState, SamplerError
from ..graph import group_logdet_grid, proper_car_matrix
from .additive import draw_alpha
from .common import (Q_DIM, KronDesign, ModelData, client_effects, draw_lambda, draw_tau_eps,
                     initial_clusters, initial_coef, kron_cluster_step, random_part,
                     translate_locations, translation_directions, update_fixed_effects)


@dataclass
class DdpState:
    coef: np.ndarray
    tau_eps: float
    clusters: ClusterState
    Lam: np.ndarray
    rho: np.ndarray


class DdpModel:
    name = "ddp"

    def __init__(self, md: ModelData):
        self.md = md
        self.S = md.S
        self.p = md.S + 1
        self.kd = KronDesign.build(md, md.dataset.ddp_weights)
        self.directions = translation_directions(md, self.kd) if md.config.translation_moves else []
        if self.S:
            self.adj = md.adjacency
            self.G = self.adj.n_groups
        else:
            self.adj = None
            self.G = 0
        cfg = md.config
        self.rho_grid = np.linspace(-cfg.rho_grid_max, cfg.rho_grid_max, cfg.rho_grid_size)
        self.grid_logdet = [group_logdet_grid(self.adj, g, self.rho_grid) for g in range(self.G)]

    def P(self, rho) -> np.ndarray:
        P = np.zeros((self.p, self.p))
        P[0, 0] = 1.0
        if self.S:
            P[1:, 1:] = proper_car_matrix(self.adj, rho)
        return P

    def random_fit(self, state) -> np.ndarray:
        return random_part(client_effects(state.clusters, self.kd), self.md)

    def fit(self, state) -> np.ndarray:
        return self.md.W @ state.coef + self.random_fit(state)

    def client_theta(self, state) -> np.ndarray:
        return client_effects(state.clusters, self.kd)

    def cluster_locations(self, state) -> np.ndarray:
        return state.clusters.locations.reshape(-1, Q_DIM, self.p)

    def init_state(self, rng) -> DdpState:
        md = self.md
        coef = initial_coef(md)
        resid = md.y - md.W @ coef
        return DdpState(coef=coef, tau_eps=1.0 / max(resid.var(), 1e-8),
                        clusters=initial_clusters(md, Q_DIM * self.p, md.config, rng),
                        Lam=np.eye(Q_DIM), rho=np.full(self.G, 0.5))

    def steps(self):
        out = [("fixed_effects", update_fixed_effects), ("clusters", update_clusters_ddp)]
        if self.directions:
            out.append(("shift", lambda s, m, r: translate_locations(s, m, r, m.P(s.rho))))
        out += [("tau_eps", draw_tau_eps),
               ("Lambda", lambda s, m, r: draw_lambda(s, m, r, m.cluster_locations(s), m.P(s.rho)))]
        if self.G:
            out.append(("rho", update_rho))
        out.append(("alpha", draw_alpha))
        return out

    def record(self, state) -> dict:
        return {f"rho[{g + 1}]": state.rho[g] for g in range(self.G)}


def update_clusters_ddp(state: DdpState, model: DdpModel, rng):
    md = model.md
    resid = md.y - md.W @ state.coef
    P = model.P(state.rho)
    kron_cluster_step(state.clusters, md, model.kd, resid, state.Lam, P, state.tau_eps, rng)
    return state


def rho_log_weights(state: DdpState, model: DdpModel, g: int) -> np.ndarray:
    """Grid log-weights for ρ_g: (Mq/2) log|Q_g(ρ)| + (ρ/2) Σ_m tr(Λ A_mg Ω_g A_mg')."""
    locs = model.cluster_locations(state)
    M = locs.shape[0]
    block = model.adj.group_blocks[g]
    A = locs[:, :, 1:][:, :, block]
    om = model.adj.omega[np.ix_(block, block)]
    cross = float(np.einsum("kh,mhs,st,mkt->", state.Lam, A, om, A))
    return 0.5 * M * Q_DIM * model.grid_logdet[g] + 0.5 * model.rho_grid * cross


def update_rho(state: DdpState, model: DdpModel, rng):
    rho = state.rho.copy()
    for g in range(model.G):
        lw = rho_log_weights(state, model, g)
        if not np.any(np.isfinite(lw)):
            raise SamplerError(f"rho[{g + 1}]: all grid weights are -inf")
        w = np.exp(lw - lw.max())
        rho[g] = model.rho_grid[rng.choice(len(w), p=w / w.sum())]
    state.rho = rho
    return state

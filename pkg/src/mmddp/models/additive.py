"""Additive multiple-membership models with a DP on client effects.

MMCAR:  y_ij = μ + d'β + z'b_i + x_i'γ + ε,      γ ~ improper CAR(τ_γ (D − Ω))
MM_MV:  y_ij = μ + d'β + z'b_i + (x_i'Γ) z + ε,  vec_row(Γ) ~ improper CAR((D − Ω) ⊗ Λ)

Improper-CAR module effects are identified by constraining every group to
sum to zero (per polynomial order for Γ); the full conditional is drawn
unconstrained and then conditioned on the constraint by kriging.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dp import ClusterState, update_alpha
from ..numerics import PrecisionGaussian, condition_on_zero_sums, sample_canonical_gaussian, sample_gamma
from .common import (Q_DIM, KronDesign, ModelData, client_effects, draw_lambda, draw_tau_eps,
                     initial_clusters, initial_coef, kron_cluster_step, random_part,
                     translate_locations, translation_directions, update_fixed_effects)


@dataclass
class MmcarState:
    coef: np.ndarray
    tau_eps: float
    clusters: ClusterState
    Lam: np.ndarray
    gamma: np.ndarray
    tau_gamma: float = 1.0


@dataclass
class MmMvState:
    coef: np.ndarray
    tau_eps: float
    clusters: ClusterState
    Lam: np.ndarray
    Gamma: np.ndarray = field(default=None)


class _AdditiveModel:
    name = ""

    def __init__(self, md: ModelData):
        self.md = md
        self.kd = KronDesign.build(md, np.ones((md.n, 1)))
        self.P1 = np.ones((1, 1))
        self.S = md.S
        self.directions = translation_directions(md, self.kd) if md.config.translation_moves else []
        if self.S:
            self.Qimp = md.improper.matrix
            self.rank = md.improper.rank
            self.A = md.adjacency.sum_to_zero_constraints()

    def client_part(self, state) -> np.ndarray:
        return random_part(client_effects(state.clusters, self.kd), self.md)

    def random_fit(self, state) -> np.ndarray:
        if not self.S:
            return self.client_part(state)
        return self.client_part(state) + self.module_part(state)

    def fit(self, state) -> np.ndarray:
        return self.md.W @ state.coef + self.random_fit(state)

    def client_theta(self, state) -> np.ndarray:
        return client_effects(state.clusters, self.kd)

    def cluster_locations(self, state) -> np.ndarray:
        return state.clusters.locations.reshape(-1, Q_DIM, 1)


def update_clients_dp(state, model: _AdditiveModel, rng):
    """DP step over {b_i}: urn reassignment + conjugate location refresh."""
    md = model.md
    resid = md.y - md.W @ state.coef
    if model.S:
        resid = resid - model.module_part(state)
    kron_cluster_step(state.clusters, md, model.kd, resid, state.Lam, model.P1, state.tau_eps, rng)
    return state


def draw_alpha(state, model, rng):
    c = state.clusters
    c.alpha = update_alpha(c.n_clusters, model.md.n, c.alpha, model.md.config.alpha_prior, rng)
    return state


class MmcarModel(_AdditiveModel):
    name = "mmcar"

    def __init__(self, md: ModelData):
        super().__init__(md)
        if self.S:
            self.XtX = md.Xobs.T @ md.Xobs

    def module_part(self, state) -> np.ndarray:
        return (self.md.X @ state.gamma)[self.md.obs_client]

    def init_state(self, rng) -> MmcarState:
        md = self.md
        coef = initial_coef(md)
        resid = md.y - md.W @ coef
        return MmcarState(coef=coef, tau_eps=1.0 / max(resid.var(), 1e-8),
                          clusters=initial_clusters(md, Q_DIM, md.config, rng),
                          Lam=np.eye(Q_DIM), gamma=np.zeros(self.S), tau_gamma=1.0)

    def steps(self):
        out = [("fixed_effects", update_fixed_effects), ("client_effects", update_clients_dp)]
        if self.directions:
            out.append(("shift", lambda s, m, r: translate_locations(s, m, r, m.P1)))
        if self.S:
            out.append(("gamma", update_module_effects_mmcar))
        out += [("tau_eps", draw_tau_eps)]
        if self.S:
            out.append(("tau_gamma", draw_tau_gamma))
        out += [("Lambda", lambda s, m, r: draw_lambda(s, m, r, m.cluster_locations(s), m.P1)),
                ("alpha", draw_alpha)]
        return out

    def record(self, state) -> dict:
        out = {"tau_gamma": state.tau_gamma}
        for k, m in enumerate(self.md.dataset.module_ids):
            out[f"gamma[{m}]"] = state.gamma[k]
        return out


def mmcar_module_conditional(state: MmcarState, model: MmcarModel) -> PrecisionGaussian:
    """γ | rest without the sum-to-zero constraint."""
    md = model.md
    resid = md.y - md.W @ state.coef - model.client_part(state)
    prec = state.tau_gamma * model.Qimp + state.tau_eps * model.XtX
    return PrecisionGaussian(prec, state.tau_eps * md.Xobs.T @ resid)


def update_module_effects_mmcar(state: MmcarState, model: MmcarModel, rng):
    g = mmcar_module_conditional(state, model)
    draw = sample_canonical_gaussian(g, rng)
    state.gamma = condition_on_zero_sums(draw, g.chol, model.A)
    return state


def tau_gamma_conditional(state: MmcarState, model: MmcarModel) -> tuple[float, float]:
    a, b = model.md.config.tau_gamma_prior
    return a + 0.5 * model.rank, b + 0.5 * float(state.gamma @ model.Qimp @ state.gamma)


def draw_tau_gamma(state, model, rng):
    state.tau_gamma = sample_gamma(*tau_gamma_conditional(state, model), rng)
    return state


class MmMvModel(_AdditiveModel):
    name = "mmmv"

    def __init__(self, md: ModelData):
        super().__init__(md)
        if self.S:
            # rows x_i ⊗ z_ij against the row-stacked vec(Γ) = (γ_1, …, γ_S)
            self.Cmv = np.einsum("ns,nk->nsk", md.Xobs, md.Z).reshape(md.N, -1)
            self.CtC = self.Cmv.T @ self.Cmv
            self.Amv = np.kron(self.A, np.eye(Q_DIM))

    def module_part(self, state) -> np.ndarray:
        md = self.md
        return np.einsum("nk,nk->n", md.Z, (md.X @ state.Gamma)[md.obs_client])

    def init_state(self, rng) -> MmMvState:
        md = self.md
        coef = initial_coef(md)
        resid = md.y - md.W @ coef
        return MmMvState(coef=coef, tau_eps=1.0 / max(resid.var(), 1e-8),
                         clusters=initial_clusters(md, Q_DIM, md.config, rng),
                         Lam=np.eye(Q_DIM), Gamma=np.zeros((self.S, Q_DIM)))

    def lambda_extra(self, state):
        if not self.S:
            return 0.0, None
        return float(self.rank), state.Gamma.T @ self.Qimp @ state.Gamma

    def steps(self):
        out = [("fixed_effects", update_fixed_effects), ("client_effects", update_clients_dp)]
        if self.directions:
            out.append(("shift", lambda s, m, r: translate_locations(s, m, r, m.P1)))
        if self.S:
            out.append(("Gamma", update_module_effects_mmmv))
        out += [("tau_eps", draw_tau_eps),
                ("Lambda", lambda s, m, r: draw_lambda(s, m, r, m.cluster_locations(s), m.P1,
                                                       *m.lambda_extra(s))),
                ("alpha", draw_alpha)]
        return out

    def record(self, state) -> dict:
        out = {}
        for k, m in enumerate(self.md.dataset.module_ids):
            for j in range(Q_DIM):
                out[f"Gamma[{m},{j + 1}]"] = state.Gamma[k, j]
        return out


def mmmv_module_conditional(state: MmMvState, model: MmMvModel) -> PrecisionGaussian:
    """vec_row(Γ) | rest without the sum-to-zero constraint."""
    md = model.md
    resid = md.y - md.W @ state.coef - model.client_part(state)
    prec = np.kron(model.Qimp, state.Lam) + state.tau_eps * model.CtC
    return PrecisionGaussian(prec, state.tau_eps * model.Cmv.T @ resid)


def update_module_effects_mmmv(state: MmMvState, model: MmMvModel, rng):
    g = mmmv_module_conditional(state, model)
    draw = sample_canonical_gaussian(g, rng)
    draw = condition_on_zero_sums(draw, g.chol, model.Amv)
    state.Gamma = draw.reshape(model.S, Q_DIM)
    return state

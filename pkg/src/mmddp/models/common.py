"""Pieces shared by the three model families.

Every model has the same observation skeleton

    y_ij = μ + d_ij'β + (random part)_ij + ε_ij,   ε_ij ~ N(0, 1/τ_ε),

with d_ij = (T_i, t_ij, t_ij², T_i t_ij, T_i t_ij²) and z_ij = (1, t_ij, t_ij²).

Client-level DP locations are handled uniformly as q×p matrices Δ with a
matrix-normal base N(0, Λ⁻¹ ⊗ P⁻¹) over the row-stacked vector δ and
per-observation design row z_ij ⊗ w_i. The additive models use p = 1,
w_i = 1, P = [1] (so Δ = b); the DDP uses p = S + 1, w_i = (1, x_i) and
P = diag(1, Q_1, …, Q_G).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from ..config import SamplerConfig
from ..data import MMDataset
from ..dp import ClusterState, SamplerError, resample_locations, urn_sweep
from ..numerics import (PrecisionGaussian, cholesky, sample_canonical_gaussian, sample_gamma,
                        sample_wishart)

Q_DIM = 3
FIXED_NAMES = ("T", "t", "t2", "Tt", "Tt2")
LOG_2PI = np.log(2.0 * np.pi)


def fixed_design(treatment_obs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Rows (1, T, t, t², T t, T t²); the leading 1 carries μ."""
    T = treatment_obs.astype(float)
    return np.column_stack([np.ones_like(t), T, t, t * t, T * t, T * t * t])


def random_design(t: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(t), t, t * t])


@dataclass(frozen=True)
class ModelData:
    """Per-observation design arrays derived once from an MMDataset."""

    dataset: MMDataset
    config: SamplerConfig

    @property
    def n(self) -> int:
        return self.dataset.n_clients

    @property
    def N(self) -> int:
        return self.dataset.n_obs

    @property
    def S(self) -> int:
        return self.dataset.n_modules

    @property
    def y(self) -> np.ndarray:
        return self.dataset.y

    @property
    def obs_client(self) -> np.ndarray:
        return self.dataset.obs_client

    @cached_property
    def W(self) -> np.ndarray:
        ds = self.dataset
        return fixed_design(ds.treatment[ds.obs_client], ds.obs_time)

    @cached_property
    def WtW(self) -> np.ndarray:
        return self.W.T @ self.W

    @cached_property
    def Z(self) -> np.ndarray:
        return random_design(self.dataset.obs_time)

    @cached_property
    def X(self) -> np.ndarray:
        return self.dataset.weights

    @cached_property
    def Xobs(self) -> np.ndarray:
        return self.X[self.obs_client]

    @cached_property
    def starts(self) -> np.ndarray:
        return self.dataset.obs_start

    @cached_property
    def counts(self) -> np.ndarray:
        return self.dataset.obs_counts

    @cached_property
    def adjacency(self):
        return self.dataset.adjacency()

    @cached_property
    def improper(self):
        from ..graph import improper_car_precision
        return improper_car_precision(self.adjacency)

    @cached_property
    def Zpad(self) -> np.ndarray:
        """(n, o_max, q) per-client Z blocks padded with zero rows."""
        omax = int(self.counts.max())
        out = np.zeros((self.n, omax, Q_DIM))
        pos = np.arange(self.N) - self.starts[self.obs_client]
        out[self.obs_client, pos] = self.Z
        return out

    @cached_property
    def pad_mask(self) -> np.ndarray:
        omax = int(self.counts.max())
        return np.arange(omax)[None, :] < self.counts[:, None]

    @cached_property
    def obs_pos(self) -> np.ndarray:
        return np.arange(self.N) - self.starts[self.obs_client]

    def per_client_sum(self, a: np.ndarray) -> np.ndarray:
        """Sum rows of an (N, ...) array within each client."""
        return np.add.reduceat(a, self.starts, axis=0)

    def with_response(self, y: np.ndarray) -> "ModelData":
        """Same design, new outcome vector (design caches are reused)."""
        y = np.asarray(y, dtype=float)
        if y.shape != self.dataset.y.shape:
            raise ValueError(f"response has shape {y.shape}, expected {self.dataset.y.shape}")
        new = ModelData(dataclasses.replace(self.dataset, y=y), self.config)
        for k, v in self.__dict__.items():
            if k not in ("dataset", "config"):
                new.__dict__[k] = v
        return new

    @property
    def wishart_df0(self) -> float:
        return Q_DIM + 1.0 if self.config.wishart_df is None else float(self.config.wishart_df)


@dataclass
class KronDesign:
    """Design of a DP over q×p client locations (row-stacked to length qp)."""

    C: np.ndarray        # (N, q p) rows z_ij ⊗ w_i
    Wc: np.ndarray       # (n, p) client weight rows w_i
    p: int

    @classmethod
    def build(cls, md: ModelData, Wc: np.ndarray) -> "KronDesign":
        Wc = np.asarray(Wc, dtype=float)
        C = np.einsum("nk,nj->nkj", md.Z, Wc[md.obs_client]).reshape(md.N, -1)
        return cls(C=C, Wc=Wc, p=Wc.shape[1])


def client_effects(clusters: ClusterState, kd: KronDesign) -> np.ndarray:
    """θ_i = Δ_{s_i} w_i for every client, shape (n, q)."""
    D = clusters.locations.reshape(clusters.n_clusters, Q_DIM, kd.p)
    return np.einsum("ikj,ij->ik", D[clusters.assignments], kd.Wc)


def random_part(theta: np.ndarray, md: ModelData) -> np.ndarray:
    return np.einsum("nk,nk->n", md.Z, theta[md.obs_client])


def kron_cluster_step(clusters: ClusterState, md: ModelData, kd: KronDesign, resid: np.ndarray,
                      Lam: np.ndarray, P: np.ndarray, tau: float, rng: np.random.Generator,
                      P_chol: np.ndarray | None = None) -> ClusterState:
    """Pólya-urn reassignment then location refresh for a Gaussian DP.

    ``resid`` is y minus every term except the DP locations. The base is
    δ ~ N(0, (Λ ⊗ P)⁻¹) and ``resid_i ~ N(C_i δ, I/τ)``. A new cluster's
    marginal is N(0, I/τ + (w_i'P⁻¹w_i) Z_i Λ⁻¹ Z_i'), evaluated in the
    o_i-dimensional observation space.
    """
    B = np.kron(Lam, P)
    C = kd.C
    half_log_tau = 0.5 * (np.log(tau) - LOG_2PI)
    const = md.counts * half_log_tau

    def loglik(locs):
        F = C @ locs.T
        ll = -0.5 * tau * (resid[:, None] - F) ** 2
        return md.per_client_sum(ll) + const[:, None]

    log_marg = new_cluster_log_marginal(md, kd, resid, Lam, P, tau, P_chol)

    def draw_new(i):
        rows = np.arange(md.starts[i], md.starts[i] + md.counts[i])
        return sample_canonical_gaussian(location_conditional(kd, resid, B, tau, rows), rng)

    urn_sweep(clusters, loglik, log_marg, draw_new, rng)

    obs_cluster = clusters.assignments[md.obs_client]

    def posterior(members):
        rows = np.flatnonzero(obs_cluster == clusters.assignments[members[0]])
        return location_conditional(kd, resid, B, tau, rows)

    return resample_locations(clusters, posterior, rng)


def location_conditional(kd: KronDesign, resid: np.ndarray, base_prec: np.ndarray, tau: float,
                         rows: np.ndarray) -> PrecisionGaussian:
    """δ given the observations ``rows`` of its members: precision Λ ⊗ P + τ C'C."""
    Cm = kd.C[rows]
    return PrecisionGaussian(base_prec + tau * Cm.T @ Cm, tau * Cm.T @ resid[rows])


def new_cluster_log_marginal(md: ModelData, kd: KronDesign, resid: np.ndarray, Lam: np.ndarray,
                             P: np.ndarray, tau: float, P_chol: np.ndarray | None = None) -> np.ndarray:
    """log N(resid_i; 0, I/τ + (w_i'P⁻¹w_i) Z_i Λ⁻¹ Z_i') for every client."""
    Lp = cholesky(P) if P_chol is None else P_chol
    V = linalg.solve_triangular(Lp, kd.Wc.T, lower=True)
    s = np.einsum("ji,ji->i", V, V)
    Lam_inv = linalg.cho_solve((cholesky(Lam), True), np.eye(Lam.shape[0]))
    Zp = md.Zpad
    cov = s[:, None, None] * np.einsum("nak,kl,nbl->nab", Zp, Lam_inv, Zp)
    omax = Zp.shape[1]
    cov += np.eye(omax)[None] / tau
    r = np.zeros((md.n, omax))
    r[md.obs_client, md.obs_pos] = resid
    Lc = np.linalg.cholesky(cov)
    sol = np.linalg.solve(Lc, r[..., None])[..., 0]
    logdet = 2.0 * np.log(np.diagonal(Lc, axis1=1, axis2=2)).sum(axis=1)
    full = -0.5 * (omax * LOG_2PI + logdet + (sol ** 2).sum(axis=1))
    # padded coordinates are independent N(0, 1/τ) at zero
    n_pad = omax - md.counts
    return full - n_pad * (0.5 * (np.log(tau) - LOG_2PI))


def translation_directions(md: ModelData, kd: KronDesign) -> list[tuple[np.ndarray, list[int]]]:
    """Directions u along which shifting every location, Δ_m → Δ_m + c u', and
    the matching fixed effects by −c leaves the likelihood unchanged.

    Candidates are the intercept column (against μ, β_t, β_t²) and, for the
    DDP, the sum of the module columns (against β_T, β_Tt, β_Tt²); the latter
    holds only when every CBT client has module weights summing to one.
    """
    cands = [(np.eye(kd.p)[0], [0, 2, 3])]
    if kd.p > 1:
        cands.append((np.r_[0.0, np.ones(kd.p - 1)], [1, 4, 5]))
    out = []
    for u, cols in cands:
        lhs = md.Z * (kd.Wc @ u)[md.obs_client][:, None]
        if np.allclose(lhs, md.W[:, cols]):
            out.append((u, cols))
    return out


def translation_conditional(state, model, P: np.ndarray, u: np.ndarray, cols) -> PrecisionGaussian:
    """Law of the shift c given the orbit: the DP base contributes
    precision M (u'Pu) Λ and shift −Λ Σ_m Δ_m P u."""
    M = state.clusters.n_clusters
    D = state.clusters.locations.reshape(M, Q_DIM, model.kd.p)
    Pu = P @ u
    prec = M * float(u @ Pu) * state.Lam
    h = -state.Lam @ np.einsum("mkj,j->k", D, Pu)
    kappa = model.md.config.fixed_prior_precision
    if kappa > 0:
        prec = prec + kappa * np.eye(Q_DIM)
        h = h + kappa * state.coef[cols]
    return PrecisionGaussian(prec, h)


def translate_locations(state, model, rng: np.random.Generator, P: np.ndarray):
    """Joint shift of all cluster locations against the fixed effects.

    A group move with Lebesgue Haar measure and unit Jacobian, so the
    exact draw of c keeps the posterior invariant. It removes the slow
    random walk of (μ, β) against the cluster means.
    """
    for u, cols in model.directions:
        c = sample_canonical_gaussian(translation_conditional(state, model, P, u, cols), rng)
        M = state.clusters.n_clusters
        D = state.clusters.locations.reshape(M, Q_DIM, model.kd.p)
        D = D + c[None, :, None] * u[None, None, :]
        state.clusters.locations = D.reshape(M, -1)
        coef = state.coef.copy()
        coef[cols] -= c
        state.coef = coef
    return state


def fixed_effects_conditional(md: ModelData, resid: np.ndarray, tau: float) -> PrecisionGaussian:
    """(μ, β) | rest with flat (or N(0, 1/κ) if configured) prior."""
    prec = tau * md.WtW
    kappa = md.config.fixed_prior_precision
    if kappa > 0:
        prec = prec + kappa * np.eye(prec.shape[0])
    return PrecisionGaussian(prec, tau * md.W.T @ resid)


def update_fixed_effects(state, model, rng: np.random.Generator):
    md = model.md
    g = fixed_effects_conditional(md, md.y - model.random_fit(state), state.tau_eps)
    try:
        state.coef = sample_canonical_gaussian(g, rng)
    except np.linalg.LinAlgError as exc:
        raise SamplerError(f"fixed effects: singular design crossproduct ({exc})") from exc
    return state


def tau_eps_conditional(md: ModelData, resid: np.ndarray) -> tuple[float, float]:
    a, b = md.config.tau_eps_prior
    return a + 0.5 * md.N, b + 0.5 * float(resid @ resid)


def lambda_conditional(md: ModelData, locs: np.ndarray, P: np.ndarray,
                       extra_df: float = 0.0, extra_ss: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Wishart(df, scale) full conditional of Λ.

    ``locs`` is (M, q, p); each contributes |Λ|^{p/2} exp(−½ tr(Λ Δ P Δ')).
    """
    M, q, p = locs.shape
    ss = np.einsum("mkj,jl,mhl->kh", locs, P, locs)
    if extra_ss is not None:
        ss = ss + extra_ss
    prec = np.eye(q) / md.config.wishart_scale + ss
    scale = linalg.cho_solve((cholesky(0.5 * (prec + prec.T)), True), np.eye(q))
    return md.wishart_df0 + M * p + extra_df, 0.5 * (scale + scale.T)


def draw_tau_eps(state, model, rng):
    md = model.md
    shape, rate = tau_eps_conditional(md, md.y - model.fit(state))
    state.tau_eps = sample_gamma(shape, rate, rng)
    return state


def draw_lambda(state, model, rng, locs, P, extra_df=0.0, extra_ss=None):
    df, scale = lambda_conditional(model.md, locs, P, extra_df, extra_ss)
    state.Lam = sample_wishart(df, scale, rng)
    return state


def obs_loglik(y: np.ndarray, fit: np.ndarray, tau: float) -> np.ndarray:
    return 0.5 * (np.log(tau) - LOG_2PI) - 0.5 * tau * (y - fit) ** 2


def initial_coef(md: ModelData) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(md.W, md.y, rcond=None)
    return coef


def initial_clusters(md: ModelData, dim: int, config: SamplerConfig, rng) -> ClusterState:
    k = max(1, min(config.init_clusters, md.n))
    assign = np.arange(md.n) % k if k > 1 else np.zeros(md.n, dtype=int)
    if k > 1:
        assign = rng.permutation(assign)
    return ClusterState(assign, np.zeros((k, dim)), config.alpha_init)

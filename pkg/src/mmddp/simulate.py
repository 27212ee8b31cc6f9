"""Synthetic multiple-membership data with known truth.

Default design: 132 CBT and 168 usual-care clients, 24 modules in a single
open-enrollment sequence split into blocks of 4. CBT clients are spread
evenly over the blocks; each starts at a uniform module inside its block
and attends 4 consecutive modules, wrapping around the end of its group
(modules are offered on a repeating cycle). Data come from the DDP
generating model with 4 clusters of 3×(S+1) effect matrices.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import MMDataset, make_dataset
from .graph import build_adjacency, proper_car_matrix
from .models.common import FIXED_NAMES, fixed_design, random_design
from .numerics import sample_matrix_normal_kron

LAMBDA_INV = ((50.0, -12.0, 0.5), (-12.0, 16.0, -1.2), (0.5, -1.2, 0.12))
# keyed by design column; the generating values for d = (t, t², T, Tt, Tt²)
BETA = {"t": -3.0, "t2": 0.25, "T": 0.0, "Tt": -2.5, "Tt2": 0.25}


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    n_cbt: int = 132
    n_uc: int = 168
    n_modules: int = 24
    group_sizes: tuple | None = None
    block_size: int = 4
    modules_per_client: int = 4
    times: tuple = (0.0, 3.0, 6.0)
    mu: float = 35.0
    beta: dict = field(default_factory=lambda: dict(BETA))
    tau_eps: float = 0.1
    rho: float = 0.7
    lambda_inv: tuple = LAMBDA_INV
    n_clusters: int = 4
    # None -> (11, 26) for the 24-module design, otherwise (1, unbounded)
    attendance_bounds: tuple | None = None
    dropout: float = 0.0
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.group_sizes is None:
            self.group_sizes = (self.n_modules,)
        self.group_sizes = tuple(int(g) for g in self.group_sizes)
        if sum(self.group_sizes) != self.n_modules:
            raise ValueError("group_sizes must sum to n_modules")
        if self.attendance_bounds is None:
            self.attendance_bounds = (11, 26) if self.n_modules == 24 else (1, None)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class SimTruth:
    mu: float
    beta: dict
    tau_eps: float
    rho_gen: float
    lambda_inv: np.ndarray
    n_clusters: int
    cluster_locations: np.ndarray  # (M, q, S+1)
    assignments: np.ndarray        # (n,) 0-based cluster index per client
    attendance: list

    def beta_model_order(self) -> np.ndarray:
        return np.array([self.beta[k] for k in FIXED_NAMES])

    def treatment_effect(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return self.beta["T"] + self.beta["Tt"] * t + self.beta["Tt2"] * t * t

    def module_trajectory(self, cluster: int, module_index: int, times) -> np.ndarray:
        """a_{s,m}'z(t) for 0-based module index s."""
        a = self.cluster_locations[cluster][:, 1 + module_index]
        return random_design(np.asarray(times, dtype=float)) @ a

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda_inv"] = np.asarray(self.lambda_inv).tolist()
        d["cluster_locations"] = np.asarray(self.cluster_locations).tolist()
        d["assignments"] = np.asarray(self.assignments).tolist()
        d["attendance"] = [sorted(int(m) for m in a) for a in self.attendance]
        d["beta_order"] = ["t", "t2", "T", "Tt", "Tt2"]
        d["beta"] = {k: self.beta[k] for k in d["beta_order"]}
        return json.dumps(d, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SimTruth":
        d = json.loads(text)
        d.pop("beta_order", None)
        d["lambda_inv"] = np.array(d["lambda_inv"])
        d["cluster_locations"] = np.array(d["cluster_locations"])
        d["assignments"] = np.array(d["assignments"], dtype=int)
        return cls(**d)


def module_layout(group_sizes):
    """module_id -> group_id and order_in_group, ids consecutive from 1."""
    group, order = {}, {}
    mid = 1
    for g, size in enumerate(group_sizes, start=1):
        for o in range(1, size + 1):
            group[mid], order[mid] = g, o
            mid += 1
    return group, order


def draw_attendance(cfg: SimConfig, rng: np.random.Generator) -> list[list[int]]:
    """Module ids attended by each CBT client, within the attendance bounds."""
    blocks = []  # (first module id of group, group size, block offset)
    first = 1
    for size in cfg.group_sizes:
        for b in range(math.ceil(size / cfg.block_size)):
            blocks.append((first, size, b * cfg.block_size))
        first += size
    block_of = rng.permutation(np.arange(cfg.n_cbt) % len(blocks))
    lo, hi = cfg.attendance_bounds
    hi = np.inf if hi is None else hi
    k = min(cfg.modules_per_client, min(cfg.group_sizes))
    for _ in range(cfg.max_attempts):
        u = rng.integers(0, cfg.block_size, size=cfg.n_cbt)
        att = []
        counts = np.zeros(cfg.n_modules, dtype=int)
        for i in range(cfg.n_cbt):
            g_first, g_size, off = blocks[block_of[i]]
            start = off + u[i]
            mods = [g_first + (start + j) % g_size for j in range(k)]
            att.append(mods)
            counts[np.array(mods) - 1] += 1
        if counts.min() >= lo and counts.max() <= hi:
            return att
    raise SimulationError(f"attendance counts not within [{lo}, {hi}] after {cfg.max_attempts} attempts")


def draw_cluster_locations(n_clusters: int, lambda_inv, adj, rho, rng) -> np.ndarray:
    """(M, q, S+1) draws from N(0, Λ⁻¹ ⊗ diag(1, D − ρΩ)⁻¹)."""
    Lam = np.linalg.inv(np.asarray(lambda_inv, dtype=float))
    S = adj.n_modules
    P = np.eye(S + 1)
    P[1:, 1:] = proper_car_matrix(adj, rho)
    from .numerics import cholesky
    Lr, Lc = cholesky(Lam), cholesky(P)
    return np.stack([sample_matrix_normal_kron(Lam, P, rng, Lr, Lc) for _ in range(n_clusters)])


def generate(cfg: SimConfig | None = None, rng: np.random.Generator | None = None) -> tuple[MMDataset, SimTruth]:
    cfg = SimConfig() if cfg is None else cfg
    rng = np.random.default_rng() if rng is None else rng
    n = cfg.n_cbt + cfg.n_uc
    module_group, module_order = module_layout(cfg.group_sizes)
    adj = build_adjacency(module_group, module_order)

    cbt_att = draw_attendance(cfg, rng)
    attendance = cbt_att + [[] for _ in range(cfg.n_uc)]
    treatment = np.r_[np.ones(cfg.n_cbt, dtype=int), np.zeros(cfg.n_uc, dtype=int)]

    locs = draw_cluster_locations(cfg.n_clusters, cfg.lambda_inv, adj, cfg.rho, rng)
    assign = rng.integers(0, cfg.n_clusters, size=n)

    times = np.asarray(cfg.times, dtype=float)
    oc = np.repeat(np.arange(n), len(times))
    ot = np.tile(times, n)
    ow = np.tile(np.arange(1, len(times) + 1), n)
    if cfg.dropout > 0:
        keep = (ow == 1) | (rng.random(len(ow)) >= cfg.dropout)
        oc, ot, ow = oc[keep], ot[keep], ow[keep]

    from .data import build_weights
    X = build_weights(attendance, cfg.n_modules, ddp_form=True)
    theta = np.einsum("ikj,ij->ik", locs[assign], X)
    beta = np.array([cfg.beta[k] for k in FIXED_NAMES])
    W = fixed_design(treatment[oc], ot)
    mean = cfg.mu + W[:, 1:] @ beta + np.einsum("nk,nk->n", random_design(ot), theta[oc])
    y = mean + rng.standard_normal(len(oc)) / math.sqrt(cfg.tau_eps)

    client_ids = np.arange(1, n + 1)
    ds = make_dataset(client_ids, treatment, client_ids[oc], ot, ow, y,
                      {i + 1: a for i, a in enumerate(attendance)}, module_group, module_order)
    truth = SimTruth(mu=cfg.mu, beta=dict(cfg.beta), tau_eps=cfg.tau_eps, rho_gen=cfg.rho,
                     lambda_inv=np.asarray(cfg.lambda_inv, dtype=float), n_clusters=cfg.n_clusters,
                     cluster_locations=locs, assignments=assign, attendance=attendance)
    return ds, truth

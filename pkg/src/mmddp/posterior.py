"""Posterior summaries: Dahl partition, treatment margins, growth curves and
cluster-level module-effect trajectories."""
from __future__ import annotations

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .data import MMDataset
from .models.common import FIXED_NAMES, Q_DIM, fixed_design, random_design


def canonical_labels(labels) -> np.ndarray:
    """Relabel to 1..K in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=int)
    rank[np.argsort(first)] = np.arange(1, len(first) + 1)
    return rank[inv]


def _cocluster_counts(A: np.ndarray) -> np.ndarray:
    n = A.shape[1]
    C = np.zeros((n, n), dtype=np.int64)
    for row in A:
        C += row[:, None] == row[None, :]
    return C


def coclustering(assignment_draws) -> np.ndarray:
    A = np.atleast_2d(np.asarray(assignment_draws))
    return _cocluster_counts(A) / A.shape[0]


def _scaled_losses(A: np.ndarray) -> np.ndarray:
    """T² times the Dahl loss, in exact integer arithmetic."""
    T, n = A.shape
    iu = np.triu_indices(n, 1)
    C = _cocluster_counts(A)[iu]
    out = np.empty(T, dtype=np.int64)
    for t, row in enumerate(A):
        d = T * (row[:, None] == row[None, :])[iu].astype(np.int64) - C
        out[t] = d @ d
    return out


def dahl_losses(assignment_draws) -> np.ndarray:
    """Σ_{i<j} (1{s_i = s_j} − π̂_ij)² for every draw."""
    A = np.atleast_2d(np.asarray(assignment_draws))
    return _scaled_losses(A) / A.shape[0] ** 2


def dahl_partition(assignment_draws) -> np.ndarray:
    """Least-squares partition among the sampled ones (ties: earliest draw)."""
    A = np.atleast_2d(np.asarray(assignment_draws))
    return canonical_labels(A[int(np.argmin(_scaled_losses(A)))])


def order_by_size(partition) -> np.ndarray:
    """Relabel clusters 1..K from largest to smallest (ties: first appearance)."""
    p = canonical_labels(partition)
    sizes = np.bincount(p)[1:]
    order = np.lexsort((np.arange(len(sizes)), -sizes))
    new = np.empty(len(sizes), dtype=int)
    new[order] = np.arange(1, len(sizes) + 1)
    return new[p - 1]


def partition_agreement(a, b) -> float:
    """Adjusted Rand index between two partitions."""
    return float(adjusted_rand_score(np.asarray(a), np.asarray(b)))


def _summary(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.025, 0.25, 0.75, 0.975])
    return {"mean": float(x.mean()), "q025": q[0], "q25": q[1], "q75": q[2], "q975": q[3]}


def treatment_effect_draws(beta_draws, times) -> np.ndarray:
    """(T, len(times)) draws of β_T + β_Tt t + β_Tt² t² (β in model order)."""
    B = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    iT, iTt, iTt2 = (FIXED_NAMES.index(k) for k in ("T", "Tt", "Tt2"))
    t = np.asarray(times, dtype=float)
    return B[:, [iT]] + B[:, [iTt]] * t + B[:, [iTt2]] * t * t


def predictive_margins(beta_draws, times) -> list[dict]:
    """CBT-vs-UC contrast at each time holding random effects fixed."""
    eff = treatment_effect_draws(beta_draws, times)
    return [dict(time=float(t), **_summary(eff[:, k])) for k, t in enumerate(times)]


def effective_client_polynomials(chain, data: MMDataset) -> np.ndarray:
    """Posterior-mean per-client (n, q) coefficients on z(t) = (1, t, t²)."""
    theta = chain.client_effects.mean(axis=0)
    if chain.model == "mmcar" and data.n_modules:
        gamma = np.array([chain.params[f"gamma[{m}]"].mean() for m in data.module_ids])
        theta = theta.copy()
        theta[:, 0] += data.weights @ gamma
    elif chain.model == "mmmv" and data.n_modules:
        G = np.array([[chain.params[f"Gamma[{m},{j + 1}]"].mean() for j in range(Q_DIM)]
                      for m in data.module_ids])
        theta = theta + data.weights @ G
    return theta


def growth_curves(chain, data: MMDataset, time_grid) -> np.ndarray:
    """(n, len(grid)) posterior-mean fitted curves with each client's weights fixed."""
    t = np.asarray(time_grid, dtype=float)
    mu = chain.params["mu"].mean()
    beta = chain.beta_draws().mean(axis=0)
    theta = effective_client_polynomials(chain, data)
    Zg = random_design(t)
    curves = np.empty((data.n_clients, len(t)))
    for T in (0, 1):
        idx = np.flatnonzero(data.treatment == T)
        fixed = mu + fixed_design(np.full(len(t), T), t)[:, 1:] @ beta
        curves[idx] = fixed[None, :] + theta[idx] @ Zg.T
    return curves


def module_coefficients(chain, partition, include_uc: bool = True, treatment=None):
    """Cluster-averaged module coefficients, shape (K, S, q).

    For every draw each client's module-s vector is its cluster's location
    column; vectors are averaged over the clients of each (fixed) partition
    cluster, then over draws. Clusters are labelled by ``partition`` (1..K).
    """
    if chain.locations is None:
        raise ValueError("module trajectories need a DDP chain with stored locations")
    part = np.asarray(partition)
    n = chain.assignments.shape[1]
    if part.shape != (n,):
        raise ValueError(f"partition has length {part.size}, expected {n}")
    members = np.ones(n, dtype=bool)
    if not include_uc:
        if treatment is None:
            raise ValueError("treatment indicators needed to exclude usual-care clients")
        members = np.asarray(treatment) == 1
    K = int(part.max())
    onehot = np.zeros((K, n))
    onehot[part[members] - 1, np.flatnonzero(members)] = 1.0
    sizes = onehot.sum(axis=1)
    q, p = chain.locations[0].shape[1:]
    acc = np.zeros((K, q, p - 1))
    for t, locs in enumerate(chain.locations):
        lab = chain.assignments[t]
        counts = onehot @ np.eye(locs.shape[0])[lab]
        acc += np.einsum("cm,mkj->ckj", counts, locs[:, :, 1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = acc / (sizes[:, None, None] * len(chain.locations))
    return np.transpose(coef, (0, 2, 1))


def module_trajectories(chain, data: MMDataset, partition, time_grid, include_uc: bool = True):
    """(coefficients (K, S, q), trajectories (K, S, len(grid)))."""
    coef = module_coefficients(chain, partition, include_uc, data.treatment)
    Zg = random_design(np.asarray(time_grid, dtype=float))
    return coef, coef @ Zg.T


def client_module_trajectories(chain, time_grid) -> np.ndarray:
    """Posterior-mean module-effect trajectories per client, (n, S, len(grid)).

    For the DDP each client's module-s coefficients are its cluster location
    column at every draw.
    """
    if chain.locations is None:
        raise ValueError("client module trajectories need a DDP chain with stored locations")
    n = chain.assignments.shape[1]
    q, p = chain.locations[0].shape[1:]
    acc = np.zeros((n, q, p - 1))
    for t, locs in enumerate(chain.locations):
        acc += locs[chain.assignments[t]][:, :, 1:]
    coef = np.transpose(acc / len(chain.locations), (0, 2, 1))
    return coef @ random_design(np.asarray(time_grid, dtype=float)).T


def integrated_squared_error(estimate, truth, time_grid) -> float:
    """Trapezoid-rule ∫ (estimate − truth)² dt summed over all leading axes."""
    d2 = (np.asarray(estimate) - np.asarray(truth)) ** 2
    return float(np.trapezoid(d2, np.asarray(time_grid, dtype=float), axis=-1).sum())

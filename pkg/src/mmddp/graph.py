"""Module adjacency graphs and CAR precision matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

RANK_RTOL = 1e-8


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class AdjacencyStructure:
    """Lag-1 within-group neighbour structure over S modules.

    Modules are indexed 0..S-1 (position ``k`` holds the k-th smallest module
    id). ``group_blocks[g]`` lists the module indices of group ``g``.
    """

    omega: np.ndarray
    group_blocks: tuple[np.ndarray, ...]
    module_ids: tuple[int, ...] = ()

    @property
    def n_modules(self) -> int:
        return self.omega.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_blocks)

    @cached_property
    def degree(self) -> np.ndarray:
        return self.omega.sum(axis=1)

    @cached_property
    def group_of(self) -> np.ndarray:
        out = np.empty(self.n_modules, dtype=int)
        for g, block in enumerate(self.group_blocks):
            out[block] = g
        return out

    @cached_property
    def group_spectra(self) -> tuple[np.ndarray, ...]:
        """Eigenvalues of D_g^{-1/2} Ω_g D_g^{-1/2} for each group."""
        out = []
        for block in self.group_blocks:
            om = self.omega[np.ix_(block, block)]
            dh = 1.0 / np.sqrt(om.sum(axis=1))
            out.append(np.linalg.eigvalsh(dh[:, None] * om * dh[None, :]))
        return tuple(out)

    @cached_property
    def group_logdet_degree(self) -> np.ndarray:
        return np.array([np.log(self.degree[b]).sum() for b in self.group_blocks])

    def sum_to_zero_constraints(self) -> np.ndarray:
        """G × S indicator rows; ``A @ γ = 0`` means every group sums to zero."""
        A = np.zeros((self.n_groups, self.n_modules))
        for g, block in enumerate(self.group_blocks):
            A[g, block] = 1.0
        return A


def build_adjacency(module_group: Mapping[int, int], module_order: Mapping[int, int]) -> AdjacencyStructure:
    """Modules s, s' are neighbours iff same group and |order(s) − order(s')| = 1."""
    module_ids = sorted(module_group)
    idx = {m: k for k, m in enumerate(module_ids)}
    S = len(module_ids)
    groups: dict[int, list[int]] = {}
    for m in module_ids:
        groups.setdefault(module_group[m], []).append(m)
    omega = np.zeros((S, S))
    blocks = []
    for g in sorted(groups):
        members = groups[g]
        if len(members) < 2:
            raise GraphError(f"group {g} has a single module; CAR structure needs at least two")
        orders = [module_order[m] for m in members]
        if len(set(orders)) != len(orders):
            raise GraphError(f"group {g} has duplicate order_in_group values")
        by_order = {module_order[m]: idx[m] for m in members}
        for o, k in by_order.items():
            nb = by_order.get(o + 1)
            if nb is not None:
                omega[k, nb] = omega[nb, k] = 1.0
        block = np.array(sorted(idx[m] for m in members), dtype=int)
        if np.any(omega[np.ix_(block, block)].sum(axis=1) == 0):
            raise GraphError(f"group {g} has a module with no lag-1 neighbour (gap in order_in_group)")
        blocks.append(block)
    return AdjacencyStructure(omega=omega, group_blocks=tuple(blocks), module_ids=tuple(module_ids))


def chain_adjacency(group_sizes: Sequence[int]) -> AdjacencyStructure:
    """Convenience: consecutive modules grouped into chains of the given sizes."""
    module_group, module_order = {}, {}
    mid = 1
    for g, size in enumerate(group_sizes):
        for o in range(1, size + 1):
            module_group[mid] = g + 1
            module_order[mid] = o
            mid += 1
    return build_adjacency(module_group, module_order)


@dataclass
class CarPrecision:
    kind: str
    matrix: np.ndarray
    adjacency: AdjacencyStructure
    rho: np.ndarray | None = None
    rank: int = 0
    eigvals: np.ndarray | None = field(default=None, repr=False)
    eigvecs: np.ndarray | None = field(default=None, repr=False)
    rank_tol: float = 0.0

    def logdet(self) -> float:
        """log|Q| for the proper form, from the cached group spectra."""
        if self.kind != "proper":
            raise ValueError("improper CAR precision has no log-determinant")
        return float(proper_car_logdet(self.adjacency, self.rho).sum())


def improper_car_precision(adj: AdjacencyStructure) -> CarPrecision:
    Q = np.diag(adj.degree) - adj.omega
    if adj.n_modules == 0:
        return CarPrecision("improper", Q, adj, rank=0, eigvals=np.zeros(0), eigvecs=np.zeros((0, 0)))
    lam, vecs = np.linalg.eigh(Q)
    tol = RANK_RTOL * lam.max()
    lam = np.where(lam < tol, 0.0, lam)
    rank = int((lam > tol).sum())
    if rank != adj.n_modules - adj.n_groups:
        raise GraphError(f"rank(D - Ω) = {rank}, expected S - G = {adj.n_modules - adj.n_groups}")
    return CarPrecision("improper", Q, adj, rank=rank, eigvals=lam, eigvecs=vecs, rank_tol=tol)


def _check_rho(adj: AdjacencyStructure, rho) -> np.ndarray:
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (adj.n_groups,)).copy()
    if np.any(np.abs(rho) >= 1.0):
        raise ValueError(f"CAR smoothing parameters must lie in (-1, 1), got {rho}")
    return rho


def proper_car_matrix(adj: AdjacencyStructure, rho) -> np.ndarray:
    """Block-diagonal Q with Q_g = D_g − ρ_g Ω_g."""
    rho = _check_rho(adj, rho)
    rho_pair = rho[adj.group_of] if adj.n_modules else np.zeros(0)
    return np.diag(adj.degree) - rho_pair[:, None] * adj.omega


def proper_car_logdet(adj: AdjacencyStructure, rho) -> np.ndarray:
    """Per-group log|D_g − ρ_g Ω_g| = log|D_g| + Σ_k log(1 − ρ_g λ_k)."""
    rho = _check_rho(adj, rho)
    return np.array([
        adj.group_logdet_degree[g] + np.log1p(-rho[g] * lam).sum()
        for g, lam in enumerate(adj.group_spectra)
    ])


def group_logdet_grid(adj: AdjacencyStructure, g: int, grid: np.ndarray) -> np.ndarray:
    """log|Q_g(ρ)| for every ρ in ``grid`` (vectorised over the grid)."""
    lam = adj.group_spectra[g]
    return adj.group_logdet_degree[g] + np.log1p(-np.outer(grid, lam)).sum(axis=1)


def proper_car_precision(adj: AdjacencyStructure, rho) -> CarPrecision:
    rho = _check_rho(adj, rho)
    Q = proper_car_matrix(adj, rho)
    return CarPrecision("proper", Q, adj, rho=rho, rank=adj.n_modules)

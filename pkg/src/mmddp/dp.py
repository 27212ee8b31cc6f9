"""Dirichlet-process cluster bookkeeping and the conjugate Pólya-urn sampler."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .numerics import PrecisionGaussian, sample_canonical_gaussian


class SamplerError(RuntimeError):
    pass


@dataclass
class ClusterState:
    """Cluster labels 0..M-1 with one location row per live cluster."""

    assignments: np.ndarray
    locations: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=int)
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))

    @property
    def n_clusters(self) -> int:
        return self.locations.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_clusters)

    def members(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == m)

    def client_locations(self) -> np.ndarray:
        return self.locations[self.assignments]

    def check(self) -> None:
        counts = self.counts
        if len(counts) != self.n_clusters or np.any(counts < 1):
            raise SamplerError("cluster state has empty or orphaned clusters")

    @classmethod
    def single(cls, n: int, dim: int, alpha: float = 1.0) -> "ClusterState":
        return cls(np.zeros(n, dtype=int), np.zeros((1, dim)), alpha)


@njit(cache=True)
def _urn_advance(order, start, s, counts, L, locs, M, log_alpha, log_marg, u):
    """Visit clients order[start:], stopping right after a new cluster opens.

    Returns (next step, M, status): status is -1 when the pass finished,
    the client id when a new cluster was opened in slot M - 1, and
    -2 - client when a log-density was not finite.
    """
    n = order.shape[0]
    lw = np.empty(L.shape[1] + 1)
    for step in range(start, n):
        i = order[step]
        k = s[i]
        counts[k] -= 1
        if counts[k] == 0:
            last = M - 1
            if k != last:
                locs[k, :] = locs[last, :]
                L[:, k] = L[:, last]
                counts[k] = counts[last]
                for j in range(s.shape[0]):
                    if s[j] == last:
                        s[j] = k
            counts[last] = 0
            M -= 1
        mx = -np.inf
        for m in range(M):
            lw[m] = np.log(counts[m]) + L[i, m]
            if lw[m] > mx:
                mx = lw[m]
        lw[M] = log_alpha + log_marg[i]
        if lw[M] > mx:
            mx = lw[M]
        if not np.isfinite(mx):
            return step, M, -2 - i
        total = 0.0
        for m in range(M + 1):
            if not np.isfinite(lw[m]) and not lw[m] == -np.inf:
                return step, M, -2 - i
            lw[m] = np.exp(lw[m] - mx)
            total += lw[m]
        target = u[step] * total
        acc = 0.0
        j = M
        for m in range(M + 1):
            acc += lw[m]
            if target < acc:
                j = m
                break
        counts[j] += 1
        s[i] = j
        if j == M:
            return step + 1, M + 1, i
    return n, M, -1


def urn_sweep(state: ClusterState,
              loglik: Callable[[np.ndarray], np.ndarray],
              log_marginal: np.ndarray,
              draw_new: Callable[[int], np.ndarray],
              rng: np.random.Generator,
              order: np.ndarray | None = None) -> ClusterState:
    """One Pólya-urn pass over all clients (Neal's algorithm 2).

    ``loglik(locations)`` maps a (K, dim) block of locations to the (n, K)
    matrix of per-client log-likelihoods. Existing locations are fixed during
    the pass, so their columns are computed once; newly opened clusters add a
    column. ``log_marginal[i]`` is client i's log-likelihood integrated over
    the base measure and ``draw_new(i)`` draws a location from the base
    posterior given client i alone.

    Clients are visited in a fresh uniform random order unless ``order`` is
    given. Labels stay contiguous: an emptied cluster is replaced by the
    last one.
    """
    s = state.assignments.copy()
    n = len(s)
    M = state.n_clusters
    dim = state.locations.shape[1]
    cap = M + n + 1
    locs = np.empty((cap, dim))
    locs[:M] = state.locations
    L = np.empty((n, cap))
    if M:
        L[:, :M] = loglik(locs[:M])
    counts = np.zeros(cap, dtype=np.int64)
    counts[:M] = np.bincount(s, minlength=M)
    order = rng.permutation(n) if order is None else np.asarray(order, dtype=np.int64)
    u = rng.random(n)
    log_marginal = np.ascontiguousarray(log_marginal, dtype=float)
    log_alpha = float(np.log(state.alpha))

    step = 0
    while True:
        step, M, status = _urn_advance(order, step, s, counts, L, locs, M, log_alpha, log_marginal, u)
        if status == -1:
            break
        if status <= -2:
            raise SamplerError(f"non-finite log-density for client {-2 - status}")
        locs[M - 1] = draw_new(status)
        L[:, M - 1] = loglik(locs[M - 1:M])[:, 0]

    state.assignments = s
    state.locations = locs[:M].copy()
    return state


def resample_locations(state: ClusterState,
                       cluster_posterior: Callable[[np.ndarray], PrecisionGaussian],
                       rng: np.random.Generator) -> ClusterState:
    """Redraw every live location from its conjugate full conditional."""
    for m in range(state.n_clusters):
        g = cluster_posterior(state.members(m))
        state.locations[m] = sample_canonical_gaussian(g, rng)
    return state


def update_alpha(M: int, n: int, alpha: float, prior: tuple[float, float], rng: np.random.Generator) -> float:
    """Escobar & West (1995) auxiliary-variable update of the DP concentration.

    With α ~ Ga(a, b) (rate b): draw η ~ Beta(α + 1, n), then α from the
    mixture π Ga(a + M, b − log η) + (1 − π) Ga(a + M − 1, b − log η) with
    π / (1 − π) = (a + M − 1) / (n (b − log η)).
    """
    a, b = prior
    eta = rng.beta(alpha + 1.0, n)
    rate = b - np.log(eta)
    odds = (a + M - 1.0) / (n * rate)
    pi = odds / (1.0 + odds)
    shape = a + M if rng.random() < pi else a + M - 1.0
    if shape <= 0:
        shape = a + M
    return float(rng.gamma(shape, 1.0 / rate))


def expected_clusters(alpha, n: int):
    """E[M | α] = Σ_{i<n} α / (α + i) under the Chinese restaurant process."""
    alpha = np.asarray(alpha, dtype=float)
    i = np.arange(n)
    return (alpha[..., None] / (alpha[..., None] + i)).sum(axis=-1)

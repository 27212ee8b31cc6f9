"""Random variate generation and structured Gaussian solves.

All conjugate Gaussian full conditionals in the samplers are expressed in
canonical form, ``density ∝ exp(-0.5 θ'Pθ + h'θ)``, and drawn through a
Cholesky factor of the precision ``P``; no explicit inverses are formed.

Random streams are numpy ``Generator`` objects backed by PCG64. Each chain
gets its own stream built from ``SeedSequence(seed, spawn_key=(stream_id,))``,
so a (seed, stream_id) pair always yields the same draw sequence and
distinct stream ids are statistically independent. PCG64 is a 128-bit-state
generator with 64-bit output that supports ``advance``/``jumped``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "RngStream",
    "make_rng",
    "PrecisionGaussian",
    "cholesky",
    "sample_canonical_gaussian",
    "sample_matrix_normal_kron",
    "sample_wishart",
    "sample_gamma",
    "sample_improper_car",
    "condition_on_zero_sums",
]


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a precision matrix is not symmetric positive definite."""


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    return RngStream(seed, stream_id).generator()


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises FactorizationError on non-SPD input."""
    try:
        return linalg.cholesky(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationError(f"matrix is not positive definite: {exc}") from exc


@dataclass
class PrecisionGaussian:
    """Gaussian in canonical form with precision ``precision`` and shift ``shift``."""

    precision: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.precision = np.atleast_2d(np.asarray(self.precision, dtype=float))
        self.shift = np.atleast_1d(np.asarray(self.shift, dtype=float))
        self._chol = None

    @property
    def dim(self) -> int:
        return self.shift.shape[0]

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol = cholesky(self.precision)
        return self._chol

    @property
    def mean(self) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), self.shift)

    @property
    def covariance(self) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), np.eye(self.dim))


def sample_canonical_gaussian(g: PrecisionGaussian, rng: np.random.Generator) -> np.ndarray:
    """Draw θ ~ N(P⁻¹h, P⁻¹) via P = LLᵀ: solve Lw = h, then Lᵀθ = w + z."""
    L = g.chol
    w = linalg.solve_triangular(L, g.shift, lower=True)
    z = rng.standard_normal(g.dim)
    return linalg.solve_triangular(L.T, w + z, lower=False)


def sample_matrix_normal_kron(row_prec: np.ndarray, col_prec: np.ndarray, rng: np.random.Generator,
                              row_chol: np.ndarray | None = None,
                              col_chol: np.ndarray | None = None) -> np.ndarray:
    """Draw a zero-mean q×p matrix A with Cov[vec_row(A)] = Λ⁻¹ ⊗ P⁻¹.

    ``vec_row`` stacks the rows of A. With Λ = L_Λ L_Λᵀ and P = L_P L_Pᵀ the
    draw is A = L_Λ⁻ᵀ Z L_P⁻¹ for a standard normal Z, so the qp×qp Kronecker
    product is never formed. Precomputed lower factors may be passed in.
    """
    Lr = cholesky(row_prec) if row_chol is None else row_chol
    Lc = cholesky(col_prec) if col_chol is None else col_chol
    q, p = Lr.shape[0], Lc.shape[0]
    z = rng.standard_normal((q, p))
    a = linalg.solve_triangular(Lr.T, z, lower=False)
    return linalg.solve_triangular(Lc.T, a.T, lower=False).T


def sample_wishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bartlett construction; E[W] = df · scale."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    p = scale.shape[0]
    if df < p:
        raise ValueError(f"Wishart degrees of freedom {df} < dimension {p}")
    L = cholesky(scale)
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    LA = L @ A
    W = LA @ LA.T
    return 0.5 * (W + W.T)


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    return float(rng.gamma(shape, 1.0 / rate))


def sample_improper_car(carprec, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(0, [τ(D − Ω)]⁺) restricted to the per-group sum-to-zero space.

    Uses the cached eigendecomposition of D − Ω: independent normals with
    variance 1/(τλ) along each non-null eigenvector, nothing along the G null
    directions. Group sums are then re-zeroed to strip rounding noise.
    """
    lam, vecs = carprec.eigvals, carprec.eigvecs
    keep = lam > carprec.rank_tol
    z = rng.standard_normal(int(keep.sum()))
    draw = vecs[:, keep] @ (z / np.sqrt(tau * lam[keep]))
    for block in carprec.adjacency.group_blocks:
        draw[block] -= draw[block].mean()
    return draw


def condition_on_zero_sums(draw: np.ndarray, chol: np.ndarray, constraints: np.ndarray) -> np.ndarray:
    """Condition a draw from N(·, (LLᵀ)⁻¹) on ``constraints @ θ = 0``.

    Conditioning by kriging: θ* = θ − Σ Aᵀ (A Σ Aᵀ)⁻¹ A θ with Σ = (LLᵀ)⁻¹.
    The result is an exact draw from the Gaussian restricted to the
    constraint plane.
    """
    A = np.atleast_2d(constraints)
    if A.shape[0] == 0:
        return draw
    V = linalg.cho_solve((chol, True), A.T)
    W = A @ V
    return draw - V @ np.linalg.solve(W, A @ draw)

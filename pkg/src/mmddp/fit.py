"""Model-comparison statistics from per-observation log-likelihood draws."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass
class FitReport:
    d_bar: float
    neg_lpml: float
    dic3: float
    p_d: float
    per_obs_cpo: np.ndarray
    n_draws: int
    # CPO itself underflows for very poorly fit observations
    per_obs_log_cpo: np.ndarray | None = None

    def to_json(self) -> str:
        return json.dumps({"d_bar": self.d_bar, "neg_lpml": self.neg_lpml, "dic3": self.dic3,
                           "n_draws": self.n_draws}, indent=1)


def _check(loglik) -> np.ndarray:
    ll = np.atleast_2d(np.asarray(loglik, dtype=float))
    if ll.shape[0] < 1:
        raise ValueError("need at least one draw")
    bad = ~np.isfinite(ll)
    if bad.any():
        t, i = np.argwhere(bad)[0]
        raise ValueError(f"non-finite log-likelihood for observation {i} (draw {t})")
    return ll


def log_cpo(loglik) -> np.ndarray:
    """log CPO_i = log T − logsumexp_t(−ℓ_ti)."""
    ll = _check(loglik)
    return np.log(ll.shape[0]) - logsumexp(-ll, axis=0)


def compute_lpml(loglik) -> tuple[float, np.ndarray]:
    """(−LPML, CPO) with CPO_i the harmonic mean of f(y_i | θ_t) over draws."""
    lc = log_cpo(loglik)
    return float(-lc.sum()), np.exp(lc)


def compute_dic3(loglik) -> tuple[float, float]:
    """(D̄, DIC₃) with DIC₃ = D̄ + pD and pD = D̄ + 2 log f̂(y).

    D̄ = mean_t(−2 Σ_i ℓ_ti); log f̂(y) = Σ_i [logsumexp_t ℓ_ti − log T], the
    log of the posterior-mean predictive density.
    """
    ll = _check(loglik)
    d_bar = float(np.mean(-2.0 * ll.sum(axis=1)))
    log_fhat = float((logsumexp(ll, axis=0) - np.log(ll.shape[0])).sum())
    p_d = d_bar + 2.0 * log_fhat
    return d_bar, d_bar + p_d


def fit_report(loglik) -> FitReport:
    ll = _check(loglik)
    lc = log_cpo(ll)
    d_bar, dic3 = compute_dic3(ll)
    return FitReport(d_bar=d_bar, neg_lpml=float(-lc.sum()), dic3=dic3, p_d=dic3 - d_bar,
                     per_obs_cpo=np.exp(lc), n_draws=ll.shape[0], per_obs_log_cpo=lc)

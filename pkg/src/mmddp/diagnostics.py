"""Consistent batch means MCSE and fixed-width convergence checks."""
from __future__ import annotations

import csv

import numpy as np

MIN_DRAWS = 100


class InsufficientSamplesError(ValueError):
    pass


def cbm_mcse(trace) -> tuple[float, int]:
    """Batch size ⌊√T⌋, trailing partial batch dropped.

    MCSE = sd(batch means) / √(number of batches).
    """
    x = np.asarray(trace, dtype=float).ravel()
    T = x.size
    if T < MIN_DRAWS:
        raise InsufficientSamplesError(f"need at least {MIN_DRAWS} draws for batch means, got {T}")
    b = int(np.floor(np.sqrt(T)))
    a = T // b
    means = x[: a * b].reshape(a, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(a)), a


def fixed_width_verdict(trace, epsilon: float, z: float = 1.96) -> bool:
    mcse, _ = cbm_mcse(trace)
    return bool(z * mcse < epsilon)


def diagnose(params: dict, epsilon_sd: float = 0.1, z: float = 1.96) -> list[dict]:
    """Per-parameter summary; the half-width target is ``epsilon_sd`` posterior sds."""
    rows = []
    for name, trace in params.items():
        x = np.asarray(trace, dtype=float)
        mcse, _ = cbm_mcse(x)
        sd = float(x.std(ddof=1))
        # a constant trace passes at any positive target
        eps = epsilon_sd * sd if sd > 0 else np.inf
        rows.append({"parameter": name, "mean": float(x.mean()), "sd": sd, "mcse": mcse,
                     "verdict": "pass" if z * mcse < eps else "fail"})
    return rows


def write_diagnostics(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["parameter", "mean", "sd", "mcse", "verdict"])
        w.writeheader()
        w.writerows(rows)

"""On-disk layout of a fit directory.

samples.csv      chain, iter, parameter, value (long format)
loglik.csv       chain, iter, one column per observation
assignments.csv  chain, iter, one column per client (cluster labels, 1-based)
draws.npz        the same arrays in binary form plus client effects, fitted
                 values and, for the DDP, the per-draw cluster locations
meta.json        model, seed, chains, sampler config, input content hash
"""
from __future__ import annotations

import csv
import hashlib
import json
import os

import numpy as np

from .models.sampler import ChainOutput, merge_chains


def content_hash(paths) -> str:
    """sha256 over the bytes of the given files, in the order given."""
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(os.path.basename(p).encode())
            h.update(b"\0")
            h.update(fh.read())
    return h.hexdigest()


def dataset_hash(directory) -> str:
    return content_hash([os.path.join(directory, f) for f in ("outcomes.csv", "attendance.csv", "modules.csv")])


def _wide_csv(path, chains, attr, prefix, fmt):
    with open(path, "w", encoding="utf-8") as fh:
        width = getattr(chains[0], attr).shape[1]
        fh.write(",".join(["chain", "iter"] + [f"{prefix}{j + 1}" for j in range(width)]) + "\n")
        for c in chains:
            block = getattr(c, attr)
            lead = np.column_stack([np.full(c.n_draws, c.chain_id), c.iterations])
            np.savetxt(fh, np.column_stack([lead, block]), delimiter=",",
                       fmt=["%d", "%d"] + [fmt] * width)


def save_fit(directory, chains: list[ChainOutput], meta: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    chains = sorted(chains, key=lambda c: c.chain_id)
    with open(os.path.join(directory, "samples.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iter", "parameter", "value"])
        for c in chains:
            names = list(c.params)
            for k, it in enumerate(c.iterations):
                for name in names:
                    w.writerow([c.chain_id, int(it), name, repr(float(c.params[name][k]))])
    _wide_csv(os.path.join(directory, "loglik.csv"), chains, "loglik", "obs", "%.17g")
    labelled = [_with_labels(c) for c in chains]
    _wide_csv(os.path.join(directory, "assignments.csv"), labelled, "assignments", "client", "%d")

    arrays = {}
    for c in chains:
        p = f"c{c.chain_id}_"
        arrays[p + "iterations"] = c.iterations
        arrays[p + "loglik"] = c.loglik
        arrays[p + "assignments"] = c.assignments
        arrays[p + "client_effects"] = c.client_effects
        if c.fitted is not None:
            arrays[p + "fitted"] = c.fitted
        if c.locations is not None:
            sizes = np.array([l.shape[0] for l in c.locations], dtype=int)
            arrays[p + "location_sizes"] = sizes
            arrays[p + "locations"] = (np.concatenate(c.locations) if len(sizes)
                                       else np.zeros((0, 0, 0)))
        for name, v in c.params.items():
            arrays[p + "param:" + name] = v
    np.savez_compressed(os.path.join(directory, "draws.npz"), **arrays)

    meta = dict(meta)
    meta["chains"] = [{"chain_id": c.chain_id, "seed": c.seed, "elapsed": c.elapsed,
                       "n_draws": c.n_draws} for c in chains]
    meta["model"] = chains[0].model
    meta["config"] = chains[0].config
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, default=_json_default)


def _with_labels(c: ChainOutput):
    out = ChainOutput(**{**c.__dict__})
    out.assignments = c.assignments + 1
    return out


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, np.ndarray)):
        return list(o)
    raise TypeError(type(o))


def load_meta(directory) -> dict:
    path = os.path.join(directory, "meta.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{directory} is not a fit directory (no meta.json)")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_chains(directory) -> list[ChainOutput]:
    meta = load_meta(directory)
    path = os.path.join(directory, "draws.npz")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {path}")
    z = np.load(path)
    out = []
    for info in meta["chains"]:
        p = f"c{info['chain_id']}_"
        params = {k[len(p) + 6:]: z[k] for k in z.files if k.startswith(p + "param:")}
        locs = None
        if p + "location_sizes" in z.files:
            sizes = z[p + "location_sizes"]
            flat = z[p + "locations"]
            locs = np.split(flat, np.cumsum(sizes)[:-1]) if len(sizes) else []
        out.append(ChainOutput(model=meta["model"], chain_id=info["chain_id"], seed=info["seed"],
                               iterations=z[p + "iterations"], params=params, loglik=z[p + "loglik"],
                               fitted=z[p + "fitted"] if p + "fitted" in z.files else None,
                               assignments=z[p + "assignments"],
                               client_effects=z[p + "client_effects"], locations=locs,
                               elapsed=info["elapsed"], config=meta["config"]))
    return out


def load_fit(directory) -> ChainOutput:
    """All chains of a fit directory merged into one ChainOutput."""
    return merge_chains(load_chains(directory))

"""Command-line entry point: ``mmddp <command> [flags]``.

Commands: simulate, fit, stats, diagnose, summarize, compare, sensitivity.
``--out`` defaults to a subdirectory of $MMDDP_OUTPUT_DIR (or the working
directory). Exit status is 0 only when every output was written.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import SamplerConfig, load_config
from .data import DataError, MMDataset, load_dataset_dir, write_dataset
from .diagnostics import InsufficientSamplesError, diagnose, write_diagnostics
from .dp import SamplerError
from .fit import fit_report
from .models.sampler import ChainOutput, run_chain
from .numerics import make_rng
from .posterior import (dahl_partition, growth_curves, module_trajectories, order_by_size,
                        partition_agreement, predictive_margins)
from .simulate import SimConfig, SimulationError, generate
from .store import dataset_hash, load_fit, load_meta, save_fit

log = logging.getLogger("mmddp")
OUTPUT_ENV = "MMDDP_OUTPUT_DIR"


class CliError(Exception):
    pass


def default_out(name: str) -> str:
    return os.path.join(os.environ.get(OUTPUT_ENV, "."), name)


def _ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable")
    return path


def _parse_times(text: str) -> np.ndarray:
    """'0,3,6' or 'start:stop:step' (stop inclusive)."""
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        return np.round(np.arange(a, b + s / 2, s), 10)
    return np.array([float(v) for v in text.split(",")])


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> None:
    if args.clients_cbt < 1 or args.clients_uc < 0:
        raise CliError("need at least one CBT client and a non-negative number of UC clients")
    cfg = SimConfig(n_cbt=args.clients_cbt, n_uc=args.clients_uc, n_modules=args.modules,
                    dropout=args.dropout)
    ds, truth = generate(cfg, make_rng(args.seed))
    out = _ensure_dir(args.out or default_out("sim"))
    write_dataset(ds, out)
    with open(os.path.join(out, "truth.json"), "w", encoding="utf-8") as fh:
        fh.write(truth.to_json())
    print(f"wrote {ds.n_clients} clients, {ds.n_modules} modules, {ds.n_obs} observations to {out}")


# -- fit --------------------------------------------------------------------

def _run_one(job):
    model, data, config, seed, chain_id = job
    return run_chain(model, data, config, make_rng(seed, chain_id), chain_id=chain_id)


def run_chains(model: str, data: MMDataset, config: SamplerConfig, n_chains: int, seed: int,
               workers: int | None = None) -> list[ChainOutput]:
    """Chain c uses RNG stream (seed, c); chains run in a process pool."""
    config = config.replace(model=model, seed=seed, n_chains=n_chains)
    jobs = [(model, data, config, seed, c) for c in range(1, n_chains + 1)]
    workers = min(n_chains, workers or os.cpu_count() or 1)
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


def _load_config(args) -> SamplerConfig:
    if args.config:
        if not os.path.exists(args.config):
            raise CliError(f"config file {args.config} not found")
        return load_config(args.config)
    return SamplerConfig()


def cmd_fit(args) -> None:
    data = load_dataset_dir(args.data)
    config = _load_config(args)
    if args.iterations is not None:
        config = config.replace(n_iter=args.iterations,
                                burn_in=min(config.burn_in, args.iterations // 2))
    out = _ensure_dir(args.out or default_out(f"fit_{args.model}"))
    chains = run_chains(args.model, data, config, args.chains, args.seed)
    save_fit(out, chains, {"seed": args.seed, "data": os.path.abspath(args.data),
                           "data_hash": dataset_hash(args.data),
                           "streams": [[args.seed, c.chain_id] for c in chains]})
    print(f"{args.model}: {args.chains} chain(s), {sum(c.n_draws for c in chains)} draws -> {out}")


# -- stats / diagnose / compare ---------------------------------------------

def cmd_stats(args) -> None:
    chain = load_fit(args.fit)
    report = fit_report(chain.loglik)
    path = args.out or os.path.join(args.fit, "stats.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"D_bar {report.d_bar:.2f}  -LPML {report.neg_lpml:.2f}  DIC3 {report.dic3:.2f}")


def cmd_diagnose(args) -> None:
    chain = load_fit(args.fit)
    rows = diagnose(chain.params, epsilon_sd=args.epsilon, z=args.z)
    path = args.out or os.path.join(args.fit, "diagnostics.csv")
    write_diagnostics(rows, path)
    failed = [r["parameter"] for r in rows if r["verdict"] == "fail"]
    print("verdict: pass" if not failed else f"verdict: fail ({', '.join(failed)})")


def compare_fits(fit_dirs) -> list[dict]:
    rows = []
    for d in fit_dirs:
        meta = load_meta(d)
        rep = fit_report(load_fit(d).loglik)
        rows.append({"model": meta["model"], "fit": d, "d_bar": rep.d_bar,
                     "neg_lpml": rep.neg_lpml, "dic3": rep.dic3})
    return rows


def cmd_compare(args) -> None:
    rows = compare_fits(args.fits)
    path = args.out or default_out("comparison.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["model", "fit", "d_bar", "neg_lpml", "dic3"])
        w.writeheader()
        w.writerows(rows)
    print(f"{'model':8s} {'D_bar':>10s} {'-LPML':>10s} {'DIC3':>10s}")
    for r in rows:
        print(f"{r['model']:8s} {r['d_bar']:10.1f} {r['neg_lpml']:10.1f} {r['dic3']:10.1f}")


# -- summarize --------------------------------------------------------------

def write_summaries(chain: ChainOutput, data: MMDataset, out: str, margin_times, grid,
                    include_uc: bool = True) -> list[str]:
    written = []
    path = os.path.join(out, "margins.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["time", "mean", "q025", "q25", "q75", "q975"])
        w.writeheader()
        w.writerows(predictive_margins(chain.beta_draws(), margin_times))
    written.append(path)

    curves = growth_curves(chain, data, grid)
    path = os.path.join(out, "curves.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["client", "time", "fit"])
        for i, cid in enumerate(data.client_ids):
            for t, v in zip(grid, curves[i]):
                w.writerow([cid, t, repr(float(v))])
    written.append(path)

    if chain.locations is not None and data.n_modules:
        part = order_by_size(dahl_partition(chain.assignments))
        coef, traj = module_trajectories(chain, data, part, grid, include_uc)
        tpath, cpath = os.path.join(out, "trajectories.csv"), os.path.join(out, "coefficients.csv")
        with open(tpath, "w", newline="", encoding="utf-8") as ft, \
                open(cpath, "w", newline="", encoding="utf-8") as fc:
            wt, wc = csv.writer(ft), csv.writer(fc)
            wt.writerow(["cluster", "group", "module", "time", "effect"])
            wc.writerow(["cluster", "group", "module", "order", "value"])
            for k in range(coef.shape[0]):
                for s, m in enumerate(data.module_ids):
                    g = data.module_group[m]
                    for t, v in zip(grid, traj[k, s]):
                        wt.writerow([k + 1, g, m, t, repr(float(v))])
                    for o in range(coef.shape[2]):
                        wc.writerow([k + 1, g, m, o + 1, repr(float(coef[k, s, o]))])
        with open(os.path.join(out, "partition.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["client", "cluster"])
            w.writerows(zip(data.client_ids.tolist(), part.tolist()))
        written += [tpath, cpath, os.path.join(out, "partition.csv")]
    return written


def cmd_summarize(args) -> None:
    chain = load_fit(args.fit)
    meta = load_meta(args.fit)
    data = load_dataset_dir(args.data or meta["data"])
    out = _ensure_dir(args.out or args.fit)
    written = write_summaries(chain, data, out, _parse_times(args.margin_times),
                              _parse_times(args.grid), include_uc=not args.exclude_uc)
    print("wrote " + ", ".join(os.path.basename(p) for p in written))


# -- sensitivity ------------------------------------------------------------

def sensitivity_sweep(data: MMDataset, config: SamplerConfig, grid, seed: int,
                      base: tuple[float, float] = (1.0, 1.0), base_chain: ChainOutput | None = None,
                      callback=None) -> list[dict]:
    """Refit the DDP for every (a1, b1) in grid × grid and compare Dahl partitions
    with the base fit by the adjusted Rand index."""
    config = config.replace(model="ddp")
    if base_chain is None:
        base_chain = run_chain("ddp", data, config.replace(alpha_prior=base), make_rng(seed, 1))
    base_part = dahl_partition(base_chain.assignments)
    rows = []
    for a1 in grid:
        for b1 in grid:
            if (float(a1), float(b1)) == tuple(map(float, base)):
                chain = base_chain
            else:
                chain = run_chain("ddp", data, config.replace(alpha_prior=(a1, b1)), make_rng(seed, 1))
            part = dahl_partition(chain.assignments)
            row = {"a1": float(a1), "b1": float(b1), "n_clusters": int(part.max()),
                   "ari": partition_agreement(base_part, part),
                   "mean_alpha": float(chain.params["alpha"].mean())}
            rows.append(row)
            if callback is not None:
                callback(row)
    return rows


def cmd_sensitivity(args) -> None:
    data = load_dataset_dir(args.data)
    config = _load_config(args)
    if args.iterations is not None:
        config = config.replace(n_iter=args.iterations,
                                burn_in=min(config.burn_in, args.iterations // 2))
    grid = [float(v) for v in args.grid.split(",")]
    rows = sensitivity_sweep(data, config, grid, args.seed,
                             callback=lambda r: print(f"a1={r['a1']:g} b1={r['b1']:g} "
                                                      f"K={r['n_clusters']} ARI={r['ari']:.3f}",
                                                      flush=True))
    path = args.out or default_out("sensitivity.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"minimum ARI {min(r['ari'] for r in rows):.3f}")


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmddp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--modules", type=int, choices=(24, 48, 66), default=24)
    s.add_argument("--clients-cbt", type=int, default=132)
    s.add_argument("--clients-uc", type=int, default=168)
    s.add_argument("--dropout", type=float, default=0.0)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run MCMC for one model")
    f.add_argument("--model", required=True, choices=("mmcar", "mmmv", "ddp"))
    f.add_argument("--data", required=True)
    f.add_argument("--config")
    f.add_argument("--out")
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--iterations", type=int, help="override n_iter from the config")
    f.set_defaults(func=cmd_fit)

    st = sub.add_parser("stats", help="D_bar, -LPML and DIC3 of a fit")
    st.add_argument("--fit", required=True)
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)

    d = sub.add_parser("diagnose", help="batch-means MCSE and fixed-width verdicts")
    d.add_argument("--fit", required=True)
    d.add_argument("--out")
    d.add_argument("--epsilon", type=float, default=0.1, help="half-width target in posterior sd units")
    d.add_argument("--z", type=float, default=1.96)
    d.set_defaults(func=cmd_diagnose)

    su = sub.add_parser("summarize", help="margins, growth curves and module trajectories")
    su.add_argument("--fit", required=True)
    su.add_argument("--data", help="dataset directory (default: the one recorded at fit time)")
    su.add_argument("--out")
    su.add_argument("--margin-times", default="0,3,6")
    su.add_argument("--grid", default="0:6:0.5")
    su.add_argument("--exclude-uc", action="store_true",
                    help="leave usual-care clients out of cluster trajectory averages")
    su.set_defaults(func=cmd_summarize)

    c = sub.add_parser("compare", help="fit statistics across fit directories")
    c.add_argument("fits", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    se = sub.add_parser("sensitivity", help="DP concentration prior sweep")
    se.add_argument("--data", required=True)
    se.add_argument("--config")
    se.add_argument("--out")
    se.add_argument("--seed", type=int, default=0)
    se.add_argument("--grid", default="1,4", help="comma-separated values used for both a1 and b1")
    se.add_argument("--iterations", type=int)
    se.set_defaults(func=cmd_sensitivity)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SamplerError as exc:
        print(f"error: sampler aborted: {exc}", file=sys.stderr)
        return 3
    except (CliError, DataError, SimulationError, InsufficientSamplesError, FileNotFoundError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Successive-conditional (getting-it-right) check of the samplers.

Alternates y ~ p(y | θ) with one full sweep θ ~ p(θ | y) on a tiny design;
the θ marginals must reproduce the (proper) prior.

    python3 scripts/getting_it_right.py --cycles 100000
"""
import argparse

import numpy as np

from mmddp.config import SamplerConfig
from mmddp.data import make_dataset
from mmddp.diagnostics import cbm_mcse
from mmddp.models import successive_conditional
from mmddp.numerics import make_rng


def five_clients():
    ids = np.arange(1, 6)
    times = np.array([0.0, 3.0, 6.0])
    oc, ot = np.repeat(ids, 3), np.tile(times, 5)
    ow = np.tile([1, 2, 3], 5)
    attendance = {1: [1, 2], 2: [2, 3], 3: [3, 4, 1]}
    return make_dataset(ids, [1, 1, 1, 0, 0], oc, ot, ow, 20 - ot, attendance,
                        {1: 1, 2: 1, 3: 2, 4: 2}, {1: 1, 2: 2, 3: 1, 4: 2})


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cycles", type=int, default=100_000)
    p.add_argument("--models", default="mmcar,mmmv,ddp")
    p.add_argument("--seed", type=int, default=51)
    args = p.parse_args()

    shape, rate, prec = 3.0, 2.0, 0.05
    cfg = SamplerConfig(fixed_prior_precision=prec, tau_eps_prior=(shape, rate), tau_gamma_prior=(3.0, 2.0),
                        wishart_df=6, wishart_scale=0.5)
    prior = {"tau_eps": (shape / rate, shape * (shape + 1) / rate ** 2),
             "mu": (0.0, 1 / prec), "beta[T]": (0.0, 1 / prec)}

    def init(state, rng):
        state.tau_eps = rng.gamma(shape, 1 / rate)
        state.coef = rng.standard_normal(len(state.coef)) / np.sqrt(prec)

    for k, model in enumerate(args.models.split(",")):
        tr = successive_conditional(model, five_clients(), cfg, args.cycles, make_rng(args.seed, k), init=init)
        for name, (m1, m2) in prior.items():
            x = tr[name]
            z1 = (x.mean() - m1) / cbm_mcse(x)[0]
            z2 = ((x ** 2).mean() - m2) / cbm_mcse(x ** 2)[0]
            print(f"{model:6s} {name:8s} mean {x.mean():8.4f} (prior {m1:g}, z {z1:+.2f})  "
                  f"second moment {np.mean(x ** 2):8.3f} (prior {m2:g}, z {z2:+.2f})")


if __name__ == "__main__":
    main()

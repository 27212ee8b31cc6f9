from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmddp.config import SamplerConfig
from mmddp.models import ChainOutput, run_chain
from mmddp.models.common import FIXED_NAMES, random_design
from mmddp.numerics import make_rng
from mmddp.posterior import (canonical_labels, client_module_trajectories, coclustering, dahl_losses,
                             dahl_partition, growth_curves, integrated_squared_error, module_trajectories,
                             order_by_size, partition_agreement, predictive_margins, treatment_effect_draws)

from conftest import toy_dataset

TRUTH_BETA = {"T": 0.0, "t": -3.0, "t2": 0.25, "Tt": -2.5, "Tt2": 0.25}


def brute_force_dahl(A):
    """Naive double loop over pairs in exact rationals; earliest draw wins ties."""
    A = [list(r) for r in A]
    T, n = len(A), len(A[0])
    pi = [[Fraction(sum(r[i] == r[j] for r in A), T) for j in range(n)] for i in range(n)]
    best, best_t = None, None
    for t, r in enumerate(A):
        loss = sum(((r[i] == r[j]) - pi[i][j]) ** 2 for i in range(n) for j in range(i + 1, n))
        if best is None or loss < best:
            best, best_t = loss, t
    return best_t, best


def test_dahl_three_client_example():
    A = np.array([[1, 1, 2], [1, 1, 2], [1, 2, 2]])
    losses = dahl_losses(A)
    # π̂ = (2/3, 0, 1/3) on pairs (12, 13, 23)
    assert np.allclose(losses, [2 / 9, 2 / 9, 8 / 9], rtol=0, atol=1e-15)
    assert list(dahl_partition(A)) == [1, 1, 2]


def test_dahl_identical_draws():
    A = np.tile([3, 1, 3, 2], (5, 1))
    assert list(dahl_partition(A)) == [1, 2, 1, 3]


def test_dahl_label_permuted_copies():
    A = np.array([[1, 1, 2, 3], [2, 2, 3, 1], [3, 3, 1, 2]])
    assert list(dahl_partition(A)) == [1, 1, 2, 3]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(st.lists(st.integers(0, n - 1), min_size=n, max_size=n),
                                                    min_size=1, max_size=20)))
def test_dahl_matches_exhaustive_search(draws):
    A = np.array(draws)
    t, loss = brute_force_dahl(draws)
    got = dahl_partition(A)
    assert list(got) == list(canonical_labels(A[t]))
    assert abs(dahl_losses(A)[t] - float(loss)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 3), min_size=5, max_size=5), min_size=1, max_size=10),
       st.permutations(range(4)))
def test_dahl_relabel_invariant(draws, perm):
    A = np.array(draws)
    B = np.array(perm)[A]
    assert np.array_equal(dahl_partition(A), dahl_partition(B))
    assert np.allclose(coclustering(A), coclustering(B))


def test_order_by_size_and_ari():
    p = order_by_size([1, 2, 2, 3, 3, 3])
    assert list(p) == [3, 2, 2, 1, 1, 1]
    assert partition_agreement([1, 1, 2, 2], [2, 2, 1, 1]) == 1.0


def test_margin_at_zero_is_beta_t():
    B = make_rng(0).standard_normal((50, 5))
    eff = treatment_effect_draws(B, [0.0])
    assert np.array_equal(eff[:, 0], B[:, FIXED_NAMES.index("T")])


def test_point_mass_margins():
    B = np.tile([TRUTH_BETA[k] for k in FIXED_NAMES], (10, 1))
    rows = predictive_margins(B, [0, 3, 6])
    for r, want in zip(rows, (0.0, -5.25, -6.0)):
        assert np.isclose(r["mean"], want) and np.isclose(r["q025"], want) and np.isclose(r["q975"], want)
        assert r["q25"] <= r["q75"]


def _fake_chain(model, data, T=2, mu=4.0, beta=None, effects=None, locations=None, assignments=None, params=None):
    n = data.n_clients
    beta = np.zeros(5) if beta is None else np.asarray(beta, float)
    pr = {"mu": np.full(T, mu)}
    pr.update({f"beta[{k}]": np.full(T, beta[j]) for j, k in enumerate(FIXED_NAMES)})
    pr.update(params or {})
    return ChainOutput(model=model, chain_id=1, seed=0, iterations=np.arange(T), params=pr,
                       loglik=np.zeros((T, data.n_obs)), fitted=None,
                       assignments=np.zeros((T, n), int) if assignments is None else assignments,
                       client_effects=np.zeros((T, n, 3)) if effects is None else effects,
                       locations=locations)


def test_growth_curves_zero_effects():
    ds = toy_dataset(n_cbt=2, n_uc=2)
    beta = np.array([1.0, -0.5, 0.1, 0.3, -0.02])
    gamma = {f"gamma[{m}]": np.zeros(2) for m in ds.module_ids}
    chain = _fake_chain("mmcar", ds, beta=beta, params=gamma)
    grid = np.linspace(0, 6, 7)
    curves = growth_curves(chain, ds, grid)
    for i in range(ds.n_clients):
        T = ds.treatment[i]
        want = 4.0 + beta[0] * T + beta[1] * grid + beta[2] * grid ** 2 + T * (beta[3] * grid + beta[4] * grid ** 2)
        assert np.allclose(curves[i], want)


def test_growth_curves_ddp_offset():
    ds = toy_dataset(n_cbt=1, n_uc=1)
    theta = np.array([[2.0, -1.0, 0.1], [0.0, 0.0, 0.0]])
    chain = _fake_chain("ddp", ds, effects=np.tile(theta, (2, 1, 1)),
                        locations=[np.zeros((1, 3, 3))] * 2)
    grid = np.array([0.0, 1.0, 2.5])
    base = _fake_chain("ddp", ds, locations=[np.zeros((1, 3, 3))] * 2)
    diff = growth_curves(chain, ds, grid) - growth_curves(base, ds, grid)
    assert np.allclose(diff[0], random_design(grid) @ theta[0])
    assert np.allclose(diff[1], 0)


def test_module_trajectories_single_draw_single_cluster():
    ds = toy_dataset(n_cbt=2, n_uc=1)
    loc = make_rng(1).standard_normal((1, 3, 3))
    chain = _fake_chain("ddp", ds, T=1, locations=[loc])
    grid = np.linspace(0, 6, 5)
    coef, traj = module_trajectories(chain, ds, np.ones(3, int), grid)
    assert coef.shape == (1, 2, 3)
    for s in range(2):
        assert np.allclose(traj[0, s], random_design(grid) @ loc[0][:, 1 + s])
    per_client = client_module_trajectories(chain, grid)
    assert np.allclose(per_client[2, 1], traj[0, 1])


def test_module_trajectories_average_and_uc_exclusion():
    ds = toy_dataset(n_cbt=2, n_uc=2)
    locs = np.stack([np.full((3, 3), 1.0), np.full((3, 3), 3.0)])
    # clients 0, 2 in location 0; clients 1, 3 in location 1, for both draws
    assign = np.tile([0, 1, 0, 1], (2, 1))
    chain = _fake_chain("ddp", ds, locations=[locs, locs], assignments=assign)
    coef, _ = module_trajectories(chain, ds, np.ones(4, int), [0.0])
    assert np.allclose(coef, 2.0)
    coef, _ = module_trajectories(chain, ds, np.ones(4, int), [0.0], include_uc=False)
    assert np.allclose(coef, 2.0)
    coef, _ = module_trajectories(chain, ds, np.array([1, 2, 1, 2]), [0.0])
    assert np.allclose(coef[0], 1.0) and np.allclose(coef[1], 3.0)


def test_module_trajectories_partition_length():
    ds = toy_dataset()
    chain = _fake_chain("ddp", ds, locations=[np.zeros((1, 3, 3))] * 2)
    with pytest.raises(ValueError, match="length"):
        module_trajectories(chain, ds, np.ones(2, int), [0.0])


def test_integrated_squared_error():
    grid = np.linspace(0, 6, 601)
    assert np.isclose(integrated_squared_error(grid, np.zeros_like(grid), grid), 72.0, rtol=1e-5)
    assert integrated_squared_error(np.ones((2, 3, 601)), np.ones((2, 3, 601)), grid) == 0.0


def test_fitted_curve_residuals_on_real_chain():
    ds = toy_dataset(n_cbt=3, n_uc=3, group_sizes=(3,), seed=2)
    cfg = SamplerConfig(model="ddp", n_iter=300, burn_in=100, thin=2, seed=1)
    chain = run_chain("ddp", ds, cfg, make_rng(1, 1))
    curves = growth_curves(chain, ds, [0.0, 3.0, 6.0])
    wave = ds.obs_wave - 1
    resid = ds.y - curves[ds.obs_client, wave]
    assert np.isfinite(resid).all()
    # the posterior-mean curve sits no further from the data than the grand mean does
    assert np.sum(resid ** 2) <= np.sum((ds.y - ds.y.mean()) ** 2)

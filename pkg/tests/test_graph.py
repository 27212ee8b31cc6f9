import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmddp.graph import (GraphError, build_adjacency, chain_adjacency, group_logdet_grid,
                         improper_car_precision, proper_car_logdet, proper_car_matrix,
                         proper_car_precision)


def test_chain_of_three():
    adj = build_adjacency({1: 1, 2: 1, 3: 1}, {1: 1, 2: 2, 3: 3})
    assert np.array_equal(adj.omega, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert np.array_equal(adj.degree, [1, 2, 1])
    assert np.linalg.matrix_rank(np.diag(adj.degree) - adj.omega) == 2


def test_order_not_id_order():
    # neighbours follow order_in_group, not module ids
    adj = build_adjacency({1: 1, 2: 1, 3: 1}, {1: 3, 2: 1, 3: 2})
    assert adj.omega[1, 2] == 1 and adj.omega[2, 0] == 1 and adj.omega[0, 1] == 0


def test_two_groups_block_diagonal():
    adj = build_adjacency({1: 1, 2: 1, 3: 2, 4: 2}, {1: 1, 2: 2, 3: 1, 4: 2})
    assert adj.omega[:2, 2:].sum() == 0 and adj.omega[2:, :2].sum() == 0
    car = improper_car_precision(adj)
    assert car.rank == 2
    assert np.linalg.matrix_rank(car.matrix) == 2


def test_singleton_group_rejected():
    with pytest.raises(GraphError):
        build_adjacency({1: 1, 2: 1, 3: 2}, {1: 1, 2: 2, 3: 1})


def test_duplicate_orders_rejected():
    with pytest.raises(GraphError):
        build_adjacency({1: 1, 2: 1}, {1: 1, 2: 1})


def test_improper_chain_matrix():
    car = improper_car_precision(chain_adjacency((3,)))
    assert np.array_equal(car.matrix, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 7), min_size=1, max_size=4))
def test_improper_annihilates_group_constants_and_rank(sizes):
    adj = chain_adjacency(sizes)
    car = improper_car_precision(adj)
    for block in adj.group_blocks:
        v = np.zeros(adj.n_modules)
        v[block] = 1.0
        assert np.array_equal(car.matrix @ v, np.zeros(adj.n_modules))
    lam = np.linalg.eigvalsh(car.matrix)
    assert int((lam < 1e-8 * lam.max()).sum()) == len(sizes)
    assert car.rank == adj.n_modules - adj.n_groups


def test_adjacency_invariants():
    adj = chain_adjacency((4, 3))
    assert np.array_equal(adj.omega, adj.omega.T)
    assert np.all(np.diag(adj.omega) == 0)
    assert np.all(adj.degree >= 1)


def test_proper_rho_zero_is_degree():
    adj = chain_adjacency((4,))
    assert np.array_equal(proper_car_matrix(adj, 0.0), np.diag(adj.degree))


def test_proper_logdet_chain_three():
    adj = chain_adjacency((3,))
    dense = np.array([[1, -0.7, 0], [-0.7, 2, -0.7], [0, -0.7, 1]])
    assert np.isclose(proper_car_logdet(adj, 0.7)[0], np.linalg.slogdet(dense)[1], rtol=1e-12)
    assert np.allclose(proper_car_precision(adj, 0.7).matrix, dense)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(2, 8), min_size=1, max_size=3))
def test_cached_logdet_matches_dense_on_grid(sizes):
    adj = chain_adjacency(sizes)
    grid = np.linspace(-0.99, 0.99, 100)
    for g, block in enumerate(adj.group_blocks):
        cached = group_logdet_grid(adj, g, grid)
        for rho, val in zip(grid, cached):
            Q = proper_car_matrix(adj, rho)[np.ix_(block, block)]
            sign, dense = np.linalg.slogdet(Q)
            assert sign > 0
            assert abs(val - dense) <= 1e-8 * max(1.0, abs(dense))


def test_smallest_eigenvalue_decreases_to_zero():
    adj = chain_adjacency((5,))
    rhos = np.linspace(0.0, 0.999, 50)
    mins = [np.linalg.eigvalsh(proper_car_matrix(adj, r)).min() for r in rhos]
    assert np.all(np.diff(mins) < 0)
    assert 0 < mins[-1] < 0.01


def test_proper_positive_definite_and_domain():
    adj = chain_adjacency((3, 2))
    for r in (-0.99, -0.5, 0.5, 0.99):
        assert np.linalg.eigvalsh(proper_car_matrix(adj, [r, -r])).min() > 0
    for bad in (1.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            proper_car_matrix(adj, bad)


def test_proper_logdet_sum():
    adj = chain_adjacency((3, 4))
    car = proper_car_precision(adj, [0.3, -0.6])
    assert np.isclose(car.logdet(), np.linalg.slogdet(car.matrix)[1], rtol=1e-12)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from mftc.measure_space import (ParticleEnsemble, ShapeError, TimeGrid, inner_product, matching_cost, mean,
                                optimal_matching, permute, sym_sum, wasserstein2)


def E(*rows):
    return ParticleEnsemble(np.array(rows, dtype=float))


def brute_force_w2(a, b):
    """Minimum over all permutations: exact for tiny N."""
    x, y = a.points, b.points
    return min(np.mean(np.sum((x - y[list(p)]) ** 2, axis=1)) for p in itertools.permutations(range(a.N))) ** 0.5


def lp_assignment(a, b):
    """Optimal permutation from the transport LP over doubly stochastic plans.

    The assignment polytope has integral vertices, so the simplex solution
    rounds to a permutation matrix."""
    N = a.N
    C = ((a.points[:, None, :] - b.points[None, :, :]) ** 2).sum(axis=2)
    A_eq = np.zeros((2 * N, N * N))
    for i in range(N):
        A_eq[i, i * N:(i + 1) * N] = 1
        A_eq[N + i, i::N] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.ones(2 * N), bounds=(0, None), method="highs-ds")
    plan = np.rint(res.x.reshape(N, N)).astype(int)
    assert np.array_equal(plan.sum(axis=0), np.ones(N)) and np.array_equal(plan.sum(axis=1), np.ones(N))
    return plan.argmax(axis=1)


def lp_w2(a, b):
    return math.sqrt(matching_cost(a.points, b.points, lp_assignment(a, b)))


# rounded so that squares never underflow to zero
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False).map(lambda v: round(v, 6))


def ensembles(N=st.integers(1, 8), n=st.integers(1, 3)):
    return st.tuples(N, n).flatmap(lambda s: arrays(np.float64, s, elements=finite).map(ParticleEnsemble))


def pairs(max_N=8, n=None):
    dims = st.integers(1, 3) if n is None else st.just(n)
    return st.tuples(st.integers(1, max_N), dims).flatmap(
        lambda s: st.tuples(arrays(np.float64, s, elements=finite), arrays(np.float64, s, elements=finite))
    ).map(lambda ab: (ParticleEnsemble(ab[0]), ParticleEnsemble(ab[1])))


# examples

def test_inner_product_examples():
    assert inner_product(E([1], [-1]), E([1], [-1])) == 1.0
    assert inner_product(E([1], [-1]), E([1], [1])) == 0.0
    assert inner_product(E([1, 0], [0, 1]), E([2, 0], [0, 3])) == 2.5


def test_inner_product_shape_errors():
    with pytest.raises(ShapeError):
        inner_product(E([1], [2]), E([1], [2], [3]))
    with pytest.raises(ShapeError):
        inner_product(E([1, 0]), E([1]))


def test_mean_examples():
    assert mean(E([1], [-1])).tolist() == [0.0]
    assert mean(E([2, 4])).tolist() == [2.0, 4.0]
    assert mean(E([0], [1], [2])).tolist() == [1.0]


def test_wasserstein_examples():
    assert wasserstein2(E([0], [2]), E([1], [3])) == 1.0
    a = E([0.3, 1], [2, -1], [5, 5])
    assert wasserstein2(a, a) == 0.0
    assert wasserstein2(E([0, 0], [1, 1]), E([1, 1], [0, 0])) == 0.0
    assert brute_force_w2(E([0, 0], [1, 1]), E([1, 1], [0, 0])) == 0.0


def test_wasserstein_count_mismatch():
    with pytest.raises(ShapeError):
        wasserstein2(E([0], [1]), E([0]))


def test_permute_examples():
    assert permute(E([1], [2]), [1, 0]).points.tolist() == [[2.0], [1.0]]
    a = E([1], [2], [3])
    assert permute(a, [0, 1, 2]).points.tolist() == a.points.tolist()
    with pytest.raises(ShapeError):
        permute(a, [0, 0, 1])
    with pytest.raises(ShapeError):
        permute(a, [0, 1])


def test_ensemble_validation_and_immutability():
    with pytest.raises(ShapeError):
        ParticleEnsemble(np.zeros((0, 2)))
    a = E([1, 2])
    with pytest.raises(ValueError):
        a.points[0, 0] = 5.0
    assert ParticleEnsemble([1.0, 2.0]).points.shape == (2, 1)


def test_arithmetic():
    a, b = E([1], [2]), E([3], [5])
    assert (a + b).points.tolist() == [[4.0], [7.0]]
    assert (b - a).points.tolist() == [[2.0], [3.0]]
    assert (2 * a).points.tolist() == (a * 2).points.tolist() == [[2.0], [4.0]]
    assert (-a).points.tolist() == [[-1.0], [-2.0]]
    assert a.norm() == pytest.approx(np.sqrt(2.5))


def test_csv_roundtrip(tmp_path):
    a = ParticleEnsemble(np.random.default_rng(0).standard_normal((5, 3)))
    a.to_csv(tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "x0,x1,x2"
    b = ParticleEnsemble.from_csv(tmp_path / "x.csv")
    assert np.array_equal(a.points, b.points)


def test_time_grid():
    g = TimeGrid(0.2, 1.0, 4)
    assert g.nodes[0] == 0.2 and g.nodes[-1] == 1.0
    assert np.all(np.diff(g.nodes) > 0)
    assert g.dt == pytest.approx(0.2)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 4)


def test_sort_tie_breaking_is_stable():
    # sorted a is (a2, a0, a1), ties kept in index order; b is all ties
    a, b = E([1], [1], [0]), E([2], [2], [2])
    assert optimal_matching(a, b).perm.tolist() == [1, 2, 0]


def test_approximate_matcher_is_flagged_and_bounds_exact():
    rng = np.random.default_rng(4)
    a = ParticleEnsemble(rng.standard_normal((70, 2)))
    b = ParticleEnsemble(rng.standard_normal((70, 2)) + 0.5)
    approx = optimal_matching(a, b)
    exact = optimal_matching(a, b, n_max=100)
    assert not approx.exact and exact.exact
    assert approx.distance >= exact.distance - 1e-12
    assert approx.distance <= 1.1 * exact.distance


# properties

@given(ensembles())
def test_inner_product_positive(a):
    v = inner_product(a, a)
    assert v >= 0
    assert (v == 0) == bool(np.all(a.points == 0))


@given(pairs())
def test_inner_product_symmetric(ab):
    a, b = ab
    assert inner_product(a, b) == inner_product(b, a)


@given(pairs(), finite)
def test_inner_product_linear(ab, s):
    a, b = ab
    lhs = inner_product(a * s + b, b)
    rhs = s * inner_product(a, b) + inner_product(b, b)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


integer_coords = st.integers(-50, 50).map(float)


@given(st.integers(1, 8).flatmap(lambda N: st.tuples(
    arrays(np.float64, (N, 1), elements=integer_coords), arrays(np.float64, (N, 1), elements=integer_coords))))
@settings(max_examples=100)
def test_sort_matching_equals_lp_in_one_dimension(ab):
    # integer points give integer costs, far above the LP's optimality tolerance
    a, b = ParticleEnsemble(ab[0]), ParticleEnsemble(ab[1])
    assert wasserstein2(a, b) == lp_w2(a, b)


@given(pairs(max_N=6, n=1))
@settings(max_examples=100)
def test_sort_matching_equals_enumeration_in_one_dimension(ab):
    a, b = ab
    assert wasserstein2(a, b) == pytest.approx(brute_force_w2(a, b), rel=1e-12, abs=1e-12)


@given(pairs(max_N=6))
@settings(max_examples=60)
def test_assignment_matches_brute_force(ab):
    a, b = ab
    assert wasserstein2(a, b) == pytest.approx(brute_force_w2(a, b), rel=1e-12, abs=1e-12)


@given(pairs(max_N=8))
def test_w2_bounded_by_index_coupling(ab):
    a, b = ab
    assert wasserstein2(a, b) <= (a - b).norm() * (1 + 1e-12) + 1e-12


@given(pairs(max_N=8))
def test_w2_symmetric(ab):
    a, b = ab
    assert wasserstein2(a, b) == pytest.approx(wasserstein2(b, a), rel=1e-12, abs=1e-12)


@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_w2_triangle(N, n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (ParticleEnsemble(rng.standard_normal((N, n)) * rng.uniform(0.1, 3)) for _ in range(3))
    assert wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-12


@given(ensembles(), st.randoms(use_true_random=False))
def test_w2_zero_on_same_law(a, rnd):
    perm = list(range(a.N))
    rnd.shuffle(perm)
    assert wasserstein2(a, permute(a, perm)) == 0.0


@given(ensembles(), st.randoms(use_true_random=False))
def test_mean_and_norm_permutation_invariant(a, rnd):
    perm = list(range(a.N))
    rnd.shuffle(perm)
    b = permute(a, perm)
    assert np.array_equal(mean(a), mean(b))
    assert a.norm() == b.norm()


def test_sym_sum_order_independent():
    x = np.array([1e16, 1.0, -1e16, 3.0])
    assert sym_sum(x) == sym_sum(x[::-1])


def test_matching_cost_exact_rounding():
    a = np.array([[0.1], [0.2], [0.3]])
    perm = np.arange(3)
    assert matching_cost(a, a, perm) == 0.0

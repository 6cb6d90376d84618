import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.linalg import expm

from bseelab.space import (
    SemigroupOperator,
    SpaceSpec,
    lp_norm,
    matrix_exponential,
    operator_norm,
    replay_witness,
    semigroup_gamma_bound,
)


@pytest.mark.parametrize("v, q, want", [
    ((3.0, 4.0), 2.0, 5.0),
    ((0.0, 0.0, 0.0), 3.0, 0.0),
    ((1.0, 1.0), 4.0, 2 ** 0.25),
])
def test_lp_norm_examples(v, q, want):
    assert lp_norm(np.array(v), SpaceSpec(len(v), q)) == pytest.approx(want, rel=1e-15, abs=0)


def test_lp_norm_dimension_mismatch():
    with pytest.raises(ValueError):
        lp_norm(np.ones(3), SpaceSpec(2))


@pytest.mark.parametrize("q", [1.0, math.inf, 0.5])
def test_space_rejects_exponents_outside_umd_range(q):
    with pytest.raises(ValueError):
        SpaceSpec(2, q)
    with pytest.raises(ValueError):
        SpaceSpec(2, 2.0, q)


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0, 7.0])
def test_norm_axioms_on_samples(q, rng):
    sp = SpaceSpec(4, q)
    x, y = rng.standard_normal((2, 500, 4))
    c = rng.standard_normal((500, 1))
    assert np.all(sp.norm(x + y) <= sp.norm(x) + sp.norm(y) + 1e-12)
    np.testing.assert_allclose(sp.norm(c * x), np.abs(c[:, 0]) * sp.norm(x), rtol=1e-13)


def test_matrix_exponential_examples():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3)), 5.0), np.eye(3))
    a = np.array([0.3, 1.0, 2.5])
    np.testing.assert_allclose(matrix_exponential(np.diag(a), 0.7), np.diag(np.exp(-0.7 * a)), rtol=1e-14)
    R = matrix_exponential(np.array([[0.0, 1.0], [-1.0, 0.0]]), math.pi)
    np.testing.assert_allclose(R, -np.eye(2), atol=1e-14)


def test_matrix_exponential_accuracy_against_eigendecomposition(rng):
    # symmetric generators: exp(-tA) = Q exp(-t L) Q^T
    for _ in range(10):
        B = rng.standard_normal((4, 4))
        A = B + B.T
        t = 100.0 / np.abs(np.linalg.eigvalsh(A)).max() / 4
        lam, Q = np.linalg.eigh(A)
        want = (Q * np.exp(-t * lam)) @ Q.T
        got = matrix_exponential(A, t)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) <= 1e-12


@pytest.mark.parametrize("A, t", [(np.array([[np.nan]]), 1.0), (np.ones((2, 3)), 1.0), (np.eye(2), -1.0)])
def test_matrix_exponential_errors(A, t):
    with pytest.raises(ValueError):
        matrix_exponential(A, t)


def test_semigroup_cache_and_law(rng):
    A = rng.standard_normal((3, 3))
    S = SemigroupOperator(A, 2.0, 10)
    np.testing.assert_array_equal(S(0), np.eye(3))
    for s in range(11):
        for t in range(11 - s):
            assert np.linalg.norm(S(s) @ S(t) - S(s + t), 2) <= 1e-10
    with pytest.raises(ValueError):
        S.grid_cache[1, 0, 0] = 1.0


def test_semigroup_integral_matches_quadrature():
    A = np.array([[1.0, 2.0], [0.0, 3.0]])
    S = SemigroupOperator(A, 1.0, 4)
    s = np.linspace(0, 1, 20001)
    vals = np.stack([expm(-x * A) for x in s])
    want = trapezoid(vals, s, axis=0)
    np.testing.assert_allclose(S.integral(4), want, atol=1e-8)


@pytest.mark.parametrize("A, T, want", [
    (np.zeros((2, 2)), 1.0, 1.0),
    (np.diag([1.0, 2.0]), 1.0, 1.0),
    (-np.eye(1), 1.0, math.e),
])
def test_gamma_bound_hilbert_examples(A, T, want):
    est = semigroup_gamma_bound(SemigroupOperator(A, T, 8), SpaceSpec(A.shape[0]))
    assert est.kind == "exact_hilbert"
    assert est.value == pytest.approx(want, rel=1e-12)


def test_gamma_bound_hilbert_equals_max_singular_value(rng):
    A = rng.standard_normal((3, 3))
    S = SemigroupOperator(A, 1.5, 6)
    want = max(np.linalg.svd(S(k), compute_uv=False)[0] for k in range(7))
    assert abs(semigroup_gamma_bound(S, SpaceSpec(3)).value - want) <= 1e-10


def test_gamma_bound_lp_is_lower_bound_dominating_single_ratios():
    A = np.array([[1.0, 4.0], [0.0, 1.5]])
    S = SemigroupOperator(A, 1.0, 8)
    sp = SpaceSpec(2, 4.0)
    est = semigroup_gamma_bound(S, sp, budget=60, seed=3)
    assert est.kind == "lower_bound_search"
    single = max(operator_norm(S(k), sp)[0] for k in range(9))
    assert est.value >= single - 1e-12


def test_operator_norm_lp_matches_brute_force(rng):
    B = rng.standard_normal((2, 2))
    sp = SpaceSpec(2, 3.0)
    th = np.linspace(0, 2 * np.pi, 200001)
    X = np.stack([np.cos(th), np.sin(th)], axis=1)
    brute = np.max(sp.norm(X @ B.T) / sp.norm(X))
    got, _ = operator_norm(B, sp)
    # the grid maximum is itself a lower bound, accurate to O(h^2)
    assert got == pytest.approx(brute, rel=1e-9)


def test_witness_replay_within_three_sigma():
    # a family where a two-term witness is chosen: rotations in l^4
    A = np.array([[0.0, 2.0], [-2.0, 0.0]])
    S = SemigroupOperator(A, 1.0, 8)
    sp = SpaceSpec(2, 4.0)
    est = semigroup_gamma_bound(S, sp, budget=100, seed=5, samples=8192)
    r, se = replay_witness(S, sp, est.witness, est.samples, seed=77)
    if len(est.witness.times) == 1:
        # single-operator witnesses are deterministic ratios
        assert r == pytest.approx(est.value, rel=1e-9)
    else:
        assert abs(r - est.value) <= 3 * math.hypot(se, est.std_error)


@pytest.mark.parametrize("budget", [0, -3])
def test_gamma_bound_rejects_zero_budget(budget):
    with pytest.raises(ValueError):
        semigroup_gamma_bound(SemigroupOperator(np.eye(2), 1.0, 2), SpaceSpec(2, 3.0), budget=budget)


def test_gamma_bound_is_reproducible():
    S = SemigroupOperator(np.array([[0.5, 1.0], [0.0, 1.0]]), 1.0, 5)
    sp = SpaceSpec(2, 3.0)
    a = semigroup_gamma_bound(S, sp, budget=30, seed=11)
    b = semigroup_gamma_bound(S, sp, budget=30, seed=11)
    assert a.value == b.value

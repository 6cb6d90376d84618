import math

import numpy as np
import pytest

from bseelab.drivers import DriverSpec
from bseelab.solvers import (
    NonContractionError,
    NonConvergenceError,
    PicardConfig,
    SolutionPair,
    backward_recursion_oracle,
    contraction_guard,
    continuity_modulus,
    discrete_mild_residual,
    mild_residual_profile,
    process_norm,
    solve_a0,
    solve_general_picard,
    solve_linear_drift,
    uniqueness_check,
)
from bseelab.space import SemigroupOperator, SpaceSpec
from bseelab.stochastic import AdaptedProcess, LatticeModel, PathModel, RandomVector, TimeGrid, TreeModel

T = 1.0
X = np.array([1.0, -0.5])
A_TRI = np.array([[1.0, 0.5], [0.0, 2.0]])
SP = SpaceSpec(2)


def _tree(N=8):
    return TreeModel(TimeGrid(T, N))


def _const(m, x, stop=None):
    return AdaptedProcess.from_function(m, lambda t, w: np.tile(x, (len(w), 1)), stop=stop)


def _zero_driver(m):
    return DriverSpec("zero", 2).as_process(m)


def test_guard_formula():
    assert contraction_guard(0.0, 1.0, 5.0) == 0.0
    L, d, g = 0.5, 0.25, 1.0
    assert contraction_guard(L, d, g) == pytest.approx(L * d + L * 0.5 * (1 + 0.5))


@pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=0.1, tol=0.0), dict(delta=0.1, max_iter=0),
                                dict(delta=0.1, guard_threshold=1.5)])
def test_picard_config_rejects(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


def test_zero_solution_residual_on_tree():
    m = _tree()
    S = SemigroupOperator(A_TRI, T, 8)
    zero = SolutionPair(AdaptedProcess.zeros(m, 2), AdaptedProcess.zeros(m, 2, stop=8))
    prof = mild_residual_profile(zero, S, _zero_driver(m), RandomVector.constant(m, X), SP)
    want = [np.linalg.norm(S(8 - i) @ X) for i in range(9)]
    np.testing.assert_allclose(prof, want, rtol=1e-14)


def test_zero_solution_residual_on_lattice_is_an_upper_bound():
    m = LatticeModel(TimeGrid(T, 8))
    S = SemigroupOperator(A_TRI, T, 8)
    zero = SolutionPair(AdaptedProcess.zeros(m, 2), AdaptedProcess.zeros(m, 2, stop=8))
    res = discrete_mild_residual(zero, S, _zero_driver(m), RandomVector.constant(m, X), SP)
    assert res >= max(np.linalg.norm(S(k) @ X) for k in range(9)) - 1e-14


@pytest.mark.parametrize("model", ["tree", "lattice"])
def test_a0_examples(model):
    m = _tree() if model == "tree" else LatticeModel(TimeGrid(T, 8))
    sol = solve_a0(_zero_driver(m), RandomVector.constant(m, X), SP)
    for i in range(9):
        np.testing.assert_allclose(sol.U.at(i), np.tile(X, (m.size(i), 1)), atol=1e-14)
    for j in range(8):
        np.testing.assert_allclose(sol.V.at(j), 0.0, atol=1e-14)
    sol = solve_a0(_const(m, X, stop=8), RandomVector.constant(m, np.zeros(2)), SP)
    for i in range(9):
        np.testing.assert_allclose(sol.U.at(i), np.tile(-(T - i * m.dt) * X, (m.size(i), 1)), atol=1e-14)
    assert sol.residual <= 1e-13


def test_linear_drift_examples():
    m = _tree()
    S = SemigroupOperator(A_TRI, T, 8)
    sol = solve_linear_drift(S, _zero_driver(m), RandomVector.constant(m, X), SP)
    for i in range(9):
        np.testing.assert_allclose(sol.U.at(i), np.tile(S(8 - i) @ X, (m.size(i), 1)), atol=1e-14)
    sol = solve_linear_drift(S, _zero_driver(m), RandomVector(m, 8, np.outer(m.wiener(8), X)), SP)
    for i in range(9):
        np.testing.assert_allclose(sol.U.at(i), np.outer(m.wiener(i), S(8 - i) @ X), atol=1e-13)
    for j in range(8):
        np.testing.assert_allclose(sol.V.at(j), np.tile(S(8 - j) @ X, (m.size(j), 1)), atol=1e-13)
    assert sol.residual <= 1e-13


def test_linear_drift_scalar_kernel_sign():
    # f = W(t) x with zero terminal: V(sigma) -> -(1 - e^{-a(T - sigma)}) / a x
    a = 1.5
    errs = []
    for N in (8, 16):
        m = TreeModel(TimeGrid(T, N))
        S = SemigroupOperator(np.array([[a]]), T, N)
        f = AdaptedProcess.from_function(m, lambda t, w: w[:, None], stop=N)
        sol = solve_linear_drift(S, f, RandomVector.constant(m, [0.0]), SpaceSpec(1))
        sig = np.arange(N) * m.dt
        want = -(1 - np.exp(-a * (T - sig))) / a
        errs.append(max(float(np.max(np.abs(sol.V.at(j)[:, 0] - want[j]))) for j in range(N)))
        assert sol.residual <= 1e-12
    assert errs[1] < errs[0] < 0.2


def test_oracle_wiener_square_exact():
    m = _tree(10)
    S = SemigroupOperator(np.zeros((2, 2)), T, 10)
    e1 = np.array([1.0, 0.0])
    uT = RandomVector(m, 10, np.outer(m.wiener(10) ** 2, e1))
    sol = backward_recursion_oracle(S, _zero_driver(m), uT, SP)
    for i in range(11):
        np.testing.assert_allclose(sol.U.at(i), np.outer(m.wiener(i) ** 2 + T - i * m.dt, e1), atol=1e-12)
    for j in range(10):
        np.testing.assert_allclose(sol.V.at(j), np.outer(2 * m.wiener(j), e1), atol=1e-12)
    assert sol.residual <= 1e-9


def test_oracle_guards():
    m = _tree(4)
    S = SemigroupOperator(np.zeros((2, 2)), T, 4)
    with pytest.raises(NonConvergenceError):
        backward_recursion_oracle(S, DriverSpec("affine", 2, a=4.0), RandomVector.constant(m, X), SP)
    pm = PathModel(TimeGrid(T, 4), 50)
    with pytest.raises(ValueError):
        backward_recursion_oracle(S, DriverSpec("zero", 2), RandomVector.constant(pm, X), SP)


def test_picard_driver_without_solution_dependence():
    m = _tree()
    S = SemigroupOperator(A_TRI, T, 8)
    drv = DriverSpec("time_process", 2, tuple(X), name="wiener")
    uT = RandomVector(m, 8, np.outer(np.cos(m.wiener(8)), X))
    pic = solve_general_picard(S, drv, uT, SP, PicardConfig(delta=0.25, tol=1e-10))
    lin = solve_linear_drift(S, drv.as_process(m), uT, SP)
    assert all(len(h) <= 2 for h in pic.contraction_history)
    assert pic.U.max_abs_difference(lin.U) <= 1e-10
    assert pic.V.max_abs_difference(lin.V) <= 1e-10


def test_picard_decay_closed_form_improves_with_n():
    a, A = 0.5, np.diag([1.0, 2.0])
    drv = DriverSpec("affine", 2, a=a)
    errs = []
    for N in (8, 16):
        m = LatticeModel(TimeGrid(T, N))
        S = SemigroupOperator(A, T, N)
        sol = solve_general_picard(S, drv, RandomVector.constant(m, X), SP, PicardConfig(delta=0.2, tol=1e-10))
        err = 0.0
        for i in range(N + 1):
            tau = T - i * m.dt
            want = math.exp(-a * tau) * (S(N - i) @ X)
            err = max(err, float(np.max(np.abs(sol.U.at(i) - want))))
        errs.append(err)
        assert sol.residual <= 1e-8
    assert errs[1] < 0.6 * errs[0]


def test_picard_matches_oracle_nonlinear():
    m = _tree(10)
    S = SemigroupOperator(A_TRI, T, 10)
    drv = DriverSpec("nonlinear", 2, name="tanh_uv", scale=0.6)
    uT = RandomVector(m, 10, np.outer(np.sin(m.wiener(10)), X))
    pic = solve_general_picard(S, drv, uT, SP, PicardConfig(delta=0.2, tol=1e-10))
    orc = backward_recursion_oracle(S, drv, uT, SP)
    assert pic.info["theta"] < 0.5
    assert pic.U.max_abs_difference(orc.U) <= 1e-9
    assert pic.V.max_abs_difference(orc.V) <= 1e-9


def test_picard_lattice_agrees_with_tree():
    drv = DriverSpec("nonlinear", 2, name="sin_u", scale=0.5)
    sols = []
    for m in (TreeModel(TimeGrid(T, 8)), LatticeModel(TimeGrid(T, 8))):
        S = SemigroupOperator(A_TRI, T, 8)
        uT = RandomVector(m, 8, np.outer(m.wiener(8) ** 2, X))
        sols.append(solve_general_picard(S, drv, uT, SP, PicardConfig(delta=0.2, tol=1e-11)))
    tree, lat = sols
    for i in range(9):
        ups = np.round((tree.model.wiener(i) / math.sqrt(T / 8) + i) / 2).astype(int)
        np.testing.assert_allclose(tree.U.at(i), lat.U.at(i)[ups], atol=1e-10)


def test_picard_degenerate_zero_problem():
    m = _tree(4)
    S = SemigroupOperator(A_TRI, T, 4)
    sol = solve_general_picard(S, DriverSpec("zero", 2), RandomVector.constant(m, np.zeros(2)), SP,
                               PicardConfig(delta=0.25))
    assert sol.iterations == 0 and sol.residual == 0.0
    assert sol.U.max_abs_difference(AdaptedProcess.zeros(m, 2)) == 0.0


def test_picard_guard_and_errors():
    m = _tree(8)
    S = SemigroupOperator(A_TRI, T, 8)
    uT = RandomVector.constant(m, X)
    strong = DriverSpec("nonlinear", 2, name="sin_u", scale=3.0)
    with pytest.raises(NonContractionError) as exc:
        solve_general_picard(S, strong, uT, SP, PicardConfig(delta=0.5))
    assert exc.value.theta >= 0.5
    weak = DriverSpec("nonlinear", 2, name="sin_u", scale=0.5)
    with pytest.raises(ValueError):
        solve_general_picard(S, weak, uT, SP, PicardConfig(delta=2.0))
    with pytest.raises(ValueError):
        solve_general_picard(S, weak, uT, SP, PicardConfig(delta=0.05))
    with pytest.raises(ValueError):
        solve_general_picard(SemigroupOperator(A_TRI, T, 4), weak, uT, SP, PicardConfig(delta=0.2))
    with pytest.raises(ValueError):
        solve_general_picard(S, DriverSpec("nonlinear", 3, name="sin_u", scale=0.5), uT, SP, PicardConfig(delta=0.2))
    with pytest.raises(NonConvergenceError):
        solve_general_picard(S, weak, RandomVector(m, 8, np.outer(m.wiener(8), X)), SP,
                             PicardConfig(delta=0.2, tol=1e-14, max_iter=2))


def test_continuity_modulus_examples():
    m = _tree(8)
    U = AdaptedProcess.from_function(m, lambda t, w: np.tile(X, (len(w), 1)))
    sol = SolutionPair(U, AdaptedProcess.zeros(m, 2, stop=8))
    assert continuity_modulus(sol, SP) == 0.0
    U = AdaptedProcess.from_function(m, lambda t, w: np.outer(w, X))
    assert continuity_modulus(SolutionPair(U, sol.V), SP) == pytest.approx(np.linalg.norm(X), rel=1e-14)


def test_uniqueness_examples():
    m = _tree(8)
    S = SemigroupOperator(A_TRI, T, 8)
    cfg = PicardConfig(delta=0.25, tol=1e-9)
    uT = RandomVector(m, 8, np.outer(m.wiener(8), X))
    rep = uniqueness_check(S, DriverSpec("affine", 2, tuple(X), a=0.3, b=0.2, c0=1.0), uT, SP, cfg)
    assert rep.passed and rep.distance <= 10 * cfg.tol
    rep = uniqueness_check(S, DriverSpec("zero", 2), uT, SP, cfg)
    assert rep.distance <= 1e-10


def test_process_norm_lattice_surrogate():
    m = LatticeModel(TimeGrid(T, 4))
    proc = AdaptedProcess.from_function(m, lambda t, w: np.tile(X, (len(w), 1)))
    sp = SpaceSpec(2, 4.0, 3.0)
    assert process_norm(proc, sp, 0, 4) == pytest.approx(SpaceSpec(2, 4.0).norm(X), rel=1e-14)


def test_paths_linear_solve_small_residual():
    m = PathModel(TimeGrid(T, 6), 4000, seed=2)
    S = SemigroupOperator(A_TRI, T, 6)
    uT = RandomVector(m, 6, np.outer(m.wiener(6), X))
    sol = solve_linear_drift(S, _zero_driver(m), uT, SP)
    assert sol.residual < 0.05
    for j in range(6):
        np.testing.assert_allclose(sol.V.at(j).mean(axis=0), S(6 - j) @ X, atol=0.05)

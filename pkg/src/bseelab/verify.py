"""Property suites run by ``bseelab verify`` at pinned desk-scale parameters."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from .drivers import DriverSpec
from .gamma import (
    FiniteRankGammaElement,
    KernelGammaElement,
    convolve_kernel,
    convolve_semigroup,
    gamma_norm_hilbert_exact,
    gamma_norm_mc,
    gamma_norm_quadrature,
    gamma_p_norm,
    kalton_weis_extend,
    nest_flatten,
    nested_gamma_norm,
)
from .representation import kernel_construction, martingale_representation
from .solvers import (
    PicardConfig,
    backward_recursion_oracle,
    continuity_modulus,
    solve_a0,
    solve_general_picard,
    solve_linear_drift,
    uniqueness_check,
)
from .space import SemigroupOperator, SpaceSpec, operator_norm, replay_witness, semigroup_gamma_bound
from .stochastic import (
    AdaptedKernel,
    AdaptedProcess,
    PathModel,
    RandomVector,
    TimeGrid,
    TreeModel,
    conditional_expectation,
    gamma_norm_of_process,
    ito_integral,
    lp_moment,
    stochastic_fubini_swap,
)

SUITES = ("gamma", "stochastic", "representation", "solvers")


@dataclass
class PropertyResult:
    suite: str
    name: str
    value: float
    threshold: float
    comparison: str  # "<=" or ">="
    passed: bool
    detail: str = ""

    def as_dict(self):
        d = asdict(self)
        for k in ("value", "threshold"):
            if not math.isfinite(d[k]):
                d[k] = str(d[k])
        return d


def _le(suite, name, value, threshold, detail=""):
    return PropertyResult(suite, name, float(value), float(threshold), "<=", bool(value <= threshold), detail)


def _ge(suite, name, value, threshold, detail=""):
    return PropertyResult(suite, name, float(value), float(threshold), ">=", bool(value >= threshold), detail)


def random_adapted(model, dim, rng, stop=None, start=0):
    stop = model.steps + 1 if stop is None else stop
    return AdaptedProcess(model, [rng.standard_normal((model.size(i), dim)) for i in range(start, stop)], start)


# --------------------------------------------------------------------- gamma
def suite_gamma(seed: int) -> list:
    out = []
    rng = np.random.default_rng(seed)
    # Hilbert oracle on 100 random elements
    worst = 0.0
    for k in range(100):
        d, n = rng.integers(1, 5), rng.integers(1, 7)
        g = FiniteRankGammaElement(rng.standard_normal((d, n)))
        exact = gamma_norm_hilbert_exact(g).value
        est = gamma_norm_mc(g, SpaceSpec(int(d)), samples=4000, seed=seed * 1000 + k)
        worst = max(worst, abs(est.value - exact) / est.std_error)
    out.append(_le("gamma", "hilbert_oracle_max_zscore", worst, 3.0,
                   "max over 100 elements of |MC - Frobenius| / sigma"))
    # l^4 quadrature oracle
    sp4 = SpaceSpec(2, 4.0)
    g = FiniteRankGammaElement(np.eye(2))
    q = gamma_norm_quadrature(g, sp4, 64).value
    mc = gamma_norm_mc(g, sp4, samples=200_000, seed=seed)
    out.append(_le("gamma", "l4_quadrature_zscore", abs(mc.value - q) / mc.std_error, 3.0))
    # representation independence
    C = rng.standard_normal((3, 4))
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    sp = SpaceSpec(3, 3.0)
    a = gamma_norm_mc(g := FiniteRankGammaElement(C), sp, 50_000, seed)
    b = gamma_norm_mc(g.transform(Q), sp, 50_000, seed + 1)
    out.append(_le("gamma", "orthogonal_invariance_zscore", abs(a.value - b.value) / math.hypot(a.std_error, b.std_error), 3.0))
    # Kahane-Khintchine stability and monotonicity
    ratios = {p: [] for p in (1.0, 4.0, 8.0)}
    for s in range(10):
        base = gamma_p_norm(g, sp, 2.0, 20_000, seed + 100 + s).value
        for p in ratios:
            ratios[p].append(gamma_p_norm(g, sp, p, 20_000, seed + 100 + s).value / base)
    cv = max(np.std(r) / np.mean(r) for r in ratios.values())
    out.append(_le("gamma", "kahane_khintchine_cv", cv, 0.05))
    means = [np.mean(ratios[p]) for p in (1.0, 4.0, 8.0)]
    out.append(_ge("gamma", "kahane_khintchine_monotone", float(min(np.diff([means[0], 1.0, means[1], means[2]]))), 0.0))
    # rank-one Gaussian moment
    x = rng.standard_normal(3)
    p = 3.0
    want = SpaceSpec(3, 3.0).norm(x) * math.sqrt(2) * (gamma_fn((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)
    est = gamma_p_norm(FiniteRankGammaElement(x[:, None]), SpaceSpec(3, 3.0), p, 100_000, seed)
    out.append(_le("gamma", "rank_one_moment_zscore", abs(est.value - want) / est.std_error, 3.0))
    # ideal property and convolution bounds (l^2 exact)
    worst_ideal, worst_c1, worst_c2 = -np.inf, -np.inf, -np.inf
    for k in range(50):
        d, N = int(rng.integers(1, 5)), int(rng.integers(2, 9))
        T = float(rng.uniform(0.5, 2.0))
        A = rng.standard_normal((d, d))
        S = SemigroupOperator(A, T, N)
        gS = semigroup_gamma_bound(S, SpaceSpec(d)).value
        vals = rng.standard_normal((N, d))
        f = FiniteRankGammaElement.from_grid_process(vals, S.dt)
        op = rng.standard_normal((int(rng.integers(1, 6)), N))
        lhs = gamma_norm_hilbert_exact(kalton_weis_extend(op, f)).value
        worst_ideal = max(worst_ideal, lhs - np.linalg.norm(op, 2) * gamma_norm_hilbert_exact(f).value)
        conv = convolve_semigroup(S, vals)
        cn = gamma_norm_hilbert_exact(FiniteRankGammaElement.from_grid_process(conv[:N], S.dt)).value
        worst_c1 = max(worst_c1, cn - T * gS * gamma_norm_hilbert_exact(f).value)
        kv = np.tril(rng.standard_normal((N, N, d)).transpose(2, 0, 1), -1).transpose(1, 2, 0)
        kern = KernelGammaElement(kv)
        kc = gamma_norm_hilbert_exact(FiniteRankGammaElement.from_grid_process(convolve_kernel(S, kern), S.dt)).value
        kn = nested_gamma_norm(kern, SpaceSpec(d), S.dt).value
        worst_c2 = max(worst_c2, kc - math.sqrt(T) * gS * kn)
    out.append(_le("gamma", "kalton_weis_ideal_excess", worst_ideal, 1e-12))
    out.append(_le("gamma", "convolution_part1_excess", worst_c1, 1e-12))
    out.append(_le("gamma", "convolution_part2_excess", worst_c2, 1e-12))
    # nesting: l^2 equality, l^4 ratio
    N, dt = 5, 0.2
    kv = np.tril(rng.standard_normal((N, N, 2)).transpose(2, 0, 1), -1).transpose(1, 2, 0)
    kern = KernelGammaElement(kv)
    eq = abs(gamma_norm_hilbert_exact(nest_flatten(kern, dt)).value - nested_gamma_norm(kern, SpaceSpec(2), dt).value)
    out.append(_le("gamma", "nesting_l2_equality", eq, 1e-10))
    flat = gamma_norm_mc(nest_flatten(kern, dt), sp4, 50_000, seed).value
    nested = nested_gamma_norm(kern, sp4, dt, 50_000, seed).value
    out.append(_le("gamma", "nesting_l4_ratio", flat / nested, 5.0))
    # semigroup gamma-bounds
    S = SemigroupOperator(np.array([[1.0, 3.0], [0.0, 2.0]]), 1.0, 8)
    hb = semigroup_gamma_bound(S, SpaceSpec(2)).value
    svd = max(np.linalg.svd(S(k), compute_uv=False)[0] for k in range(9))
    out.append(_le("gamma", "gamma_bound_hilbert_exact", abs(hb - svd), 1e-10))
    est = semigroup_gamma_bound(S, sp4, budget=100, seed=seed)
    single = max(operator_norm(S(k), sp4)[0] for k in range(9))
    out.append(_ge("gamma", "gamma_bound_dominates_single", est.value - single, -1e-12))
    if est.witness is not None and len(est.witness.times) > 1:
        r, se = replay_witness(S, sp4, est.witness, est.samples, seed + 99)
        out.append(_le("gamma", "witness_replay_zscore", abs(r - est.value) / math.hypot(se, est.std_error), 3.0))
    return out


# --------------------------------------------------------------- stochastic
def suite_stochastic(seed: int) -> list:
    out = []
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(25):
        N, d = int(rng.integers(1, 13)), int(rng.integers(1, 5))
        m = TreeModel(TimeGrid(float(rng.uniform(0.5, 2)), N))
        phi = random_adapted(m, d, rng, stop=N)
        lhs = lp_moment(ito_integral(phi, 0, N), SpaceSpec(d)) ** 2
        rhs = sum(float(np.dot(m.probabilities(i), np.sum(phi.at(i) ** 2, axis=1))) for i in range(N)) * m.dt
        worst = max(worst, abs(lhs - rhs))
    out.append(_le("stochastic", "ito_isometry_defect", worst, 1e-10))
    m = TreeModel(TimeGrid(1.0, 10))
    phi = random_adapted(m, 2, rng, stop=10)
    full = ito_integral(phi, 0, 10)
    mart = max(float(np.max(np.abs(conditional_expectation(full, i).values - ito_integral(phi, 0, i).values)))
               for i in range(11))
    out.append(_le("stochastic", "ito_martingale_property", mart, 1e-10))
    sq = RandomVector.from_function(m, lambda t, w: (w * w)[:, None])
    ce = max(float(np.max(np.abs(conditional_expectation(sq, i).values[:, 0] - (m.wiener(i) ** 2 + 1 - m.grid.t(i)))))
             for i in range(11))
    out.append(_le("stochastic", "conditional_expectation_wiener_square", ce, 1e-10))
    w4 = lp_moment(RandomVector.from_function(m, lambda t, w: w[:, None]), SpaceSpec(1, 2.0, 4.0))
    out.append(_le("stochastic", "binomial_fourth_moment", abs(w4 - (3 - 2 * m.dt) ** 0.25), 1e-12))
    # Ito isomorphism two-sidedness, l^4 and p = 3
    sp = SpaceSpec(2, 4.0, 3.0)
    ratios = []
    for k in range(6):
        mm = TreeModel(TimeGrid(1.0, 8))
        phi = random_adapted(mm, 2, rng, stop=8)
        num = lp_moment(ito_integral(phi, 0, 8), sp)
        den = gamma_norm_of_process(phi, sp, samples=256, seed=seed + k).value
        ratios.append(num / den)
    c = max(max(ratios), 1 / min(ratios))
    out.append(_le("stochastic", "ito_isomorphism_constant", c, 10.0))
    # path/tree agreement for E W(T)^2 and E W(T)^4
    pm = PathModel(TimeGrid(1.0, 8), 50_000, seed)
    out.append(_ge("stochastic", "paths_seed_sanity", float(pm.sanity_check()), 1.0))
    tm = TreeModel(TimeGrid(1.0, 8))
    z = 0.0
    for fn in (lambda t, w: (w * w)[:, None], lambda t, w: np.cos(w)[:, None]):
        est, se = lp_moment(RandomVector.from_function(pm, fn), SpaceSpec(1), return_error=True)
        exact = lp_moment(RandomVector.from_function(tm, fn), SpaceSpec(1))
        # the tree differs from the Gaussian law at O(dt); allow that bias on top of 5 SE
        z = max(z, abs(est - exact) / (5 * se + 0.05 * exact))
    out.append(_le("stochastic", "path_tree_agreement", z, 1.0))
    # scrambling test for the builtin Markov construction
    level = 4
    scr = pm.scrambled(level, seed + 17)
    v1 = AdaptedProcess.from_function(pm, lambda t, w: np.sin(w)[:, None])
    v2 = AdaptedProcess.from_function(scr, lambda t, w: np.sin(w)[:, None])
    out.append(_le("stochastic", "path_adaptedness_scrambling",
                   max(float(np.max(np.abs(v1.at(i) - v2.at(i)))) for i in range(level + 1)), 0.0))
    # stochastic Fubini
    mk = TreeModel(TimeGrid(1.0, 8))
    k = AdaptedKernel(mk, {l: [rng.standard_normal((mk.size(j), 2)) for j in range(l)] for l in range(8)}, 0, 2)
    rep = stochastic_fubini_swap(k, rng.standard_normal(8))
    out.append(_le("stochastic", "fubini_discrepancy", rep.discrepancy, 1e-10))
    gp = gamma_norm_of_process(AdaptedProcess.from_function(mk, lambda t, w: w[:, None]), SpaceSpec(1)).value
    out.append(_le("stochastic", "gamma_norm_wiener_process", abs(gp - math.sqrt(sum(i * mk.dt * mk.dt for i in range(8)))), 1e-12))
    return out


# ----------------------------------------------------------- representation
def kernel_slice(kr, l: int) -> np.ndarray:
    """``E f(s_l) + sum_{j<l} k(s_l, sigma_j) dW_{j+1}`` on the level-``l`` states."""
    k = kr.kernel
    model = k.model
    base = model.extend(kr.conditional[l], k.start, l)
    if l == k.start:
        return base
    proc = AdaptedProcess(model, [k.value(l, j) for j in range(k.start, l)], k.start)
    return base + ito_integral(proc, k.start, l).values


def suite_representation(seed: int) -> list:
    out = []
    rng = np.random.default_rng(seed)
    m = TreeModel(TimeGrid(1.0, 10))
    corpus = {
        "constant": lambda t, w: np.tile([1.0, -2.0], (len(w), 1)),
        "wiener_linear": lambda t, w: w[:, None] * np.array([1.0, 0.5]),
        "wiener_square": lambda t, w: (w * w)[:, None] * np.array([1.0, 0.0]),
        "call_like": lambda t, w: np.maximum(np.exp(w - 0.5 * t) - 1, 0)[:, None] * np.array([1.0, 1.0]),
    }
    worst = 0.0
    for name, fn in corpus.items():
        xi = RandomVector.from_function(m, fn)
        rep = martingale_representation(xi)
        recon = rep.mean + ito_integral(rep.integrand, 0, 10).values
        worst = max(worst, float(np.max(np.abs(recon - xi.values))))
    xi = RandomVector(m, 10, rng.standard_normal((m.size(10), 3)))
    rep = martingale_representation(xi)
    worst = max(worst, float(np.max(np.abs(rep.mean + ito_integral(rep.integrand, 0, 10).values - xi.values))))
    out.append(_le("representation", "reconstruction_residual", worst, 1e-10))
    rep = martingale_representation(RandomVector.from_function(m, corpus["wiener_square"]))
    v_err = max(float(np.max(np.abs(rep.integrand.at(i)[:, 0] - 2 * m.wiener(i)))) for i in range(10))
    out.append(_le("representation", "wiener_square_integrand", v_err, 1e-10))
    # uniqueness: a single-node perturbation breaks reconstruction
    V = rep.integrand
    i, node = 6, 13
    bumped = [v.copy() for v in V.values]
    bumped[i][node, 0] += 1e-3
    bad = ito_integral(AdaptedProcess(m, bumped), 0, 10).values - ito_integral(V, 0, 10).values
    out.append(_ge("representation", "perturbation_breaks_reconstruction", float(np.max(np.abs(bad))), 1e-4))
    # kernel lemma
    mk = TreeModel(TimeGrid(1.0, 8))
    sp = SpaceSpec(2)
    ratios, slice_err, support = [], 0.0, 0.0
    for fn in corpus.values():
        f = AdaptedProcess.from_function(mk, fn, stop=8)
        kr = kernel_construction(f, sp)
        ratios.append(kr.norm_ratio)
        for l in range(8):
            slice_err = max(slice_err, float(np.max(np.abs(kernel_slice(kr, l) - f.at(l)))))
        support = max(support, max((float(np.max(np.abs(kr.kernel.value(l, j)))) for l in range(8) for j in range(l, 8)), default=0.0))
    f = random_adapted(mk, 2, rng, stop=8)
    ratios.append(kernel_construction(f, sp).norm_ratio)
    out.append(_le("representation", "kernel_support", support, 0.0))
    out.append(_le("representation", "kernel_slice_identity", slice_err, 1e-10))
    out.append(_le("representation", "kernel_norm_ratio", max(ratios), 10.0))
    g = random_adapted(mk, 2, rng, stop=8)
    kf, kg = kernel_construction(f).kernel, kernel_construction(g).kernel
    kfg = kernel_construction(f * 2.0 + g * -3.0).kernel
    lin = max(float(np.max(np.abs(kfg.value(l, j) - 2 * kf.value(l, j) + 3 * kg.value(l, j))))
              for l in range(8) for j in range(l))
    out.append(_le("representation", "kernel_linearity", lin, 1e-10))
    return out


# ------------------------------------------------------------------ solvers
def suite_solvers(seed: int) -> list:
    out = []
    T, tol = 1.0, 1e-8
    worst_res, worst_oracle, worst_ratio_excess, worst_uniq = 0.0, 0.0, -np.inf, 0.0
    corpus = [
        ("sin_u", np.diag([0.5, 1.0]), DriverSpec("nonlinear", 2, name="sin_u", scale=0.5),
         lambda t, w: (w * w)[:, None] * np.array([1.0, 0.0])),
        ("affine", np.array([[1.0, 0.5], [0.0, 2.0]]), DriverSpec("affine", 2, (1.0, 0.0), a=0.4, b=0.2, c0=1.0),
         lambda t, w: w[:, None] * np.array([1.0, -1.0])),
        ("tanh_uv", np.array([[0.0, 1.0], [-1.0, 0.0]]), DriverSpec("nonlinear", 2, name="tanh_uv", scale=0.6),
         lambda t, w: np.maximum(np.exp(w - 0.5 * t) - 1, 0)[:, None] * np.array([1.0, 1.0])),
    ]
    sp = SpaceSpec(2)
    for name, A, drv, term in corpus:
        m = TreeModel(TimeGrid(T, 10))
        S = SemigroupOperator(A, T, 10)
        uT = RandomVector.from_function(m, term)
        orc = backward_recursion_oracle(S, drv, uT, sp)
        worst_res = max(worst_res, orc.residual)
        cfg = PicardConfig(delta=0.2, tol=tol, seed=seed)
        pic = solve_general_picard(S, drv, uT, sp, cfg)
        worst_oracle = max(worst_oracle, pic.U.max_abs_difference(orc.U), pic.V.max_abs_difference(orc.V))
        theta = pic.info["theta"]
        for hist in pic.contraction_history:
            for n in range(2, len(hist) - 1):
                if hist[n] > 1e-13 and hist[n + 1] > 1e-13:
                    worst_ratio_excess = max(worst_ratio_excess, hist[n + 1] / hist[n] - (theta + 0.1))
        worst_uniq = max(worst_uniq, uniqueness_check(S, drv, uT, sp, cfg, seed=seed + 1).distance)
    out.append(_le("solvers", "oracle_residual", worst_res, 1e-9))
    out.append(_le("solvers", "picard_vs_oracle", worst_oracle, 10 * tol))
    out.append(_le("solvers", "contraction_ratio_excess", worst_ratio_excess, 0.0,
                   "ratio minus (theta + 0.1), from iteration 3 on, ignoring round-off differences"))
    out.append(_le("solvers", "uniqueness_distance", worst_uniq, 10 * tol))
    # A = 0 examples and consistency
    m = TreeModel(TimeGrid(T, 8))
    x = np.array([1.0, 0.5])
    I = SemigroupOperator(np.zeros((2, 2)), T, 8)
    zero = DriverSpec("zero", 2).as_process(m)
    a0 = solve_a0(zero, RandomVector.from_function(m, lambda t, w: w[:, None] * x), sp)
    e = max(max(float(np.max(np.abs(a0.U.at(i) - m.wiener(i)[:, None] * x))) for i in range(9)),
            max(float(np.max(np.abs(a0.V.at(i) - x))) for i in range(8)))
    out.append(_le("solvers", "a0_martingale_case", max(e, a0.residual), 1e-10))
    f = AdaptedProcess.from_function(m, lambda t, w: np.stack([np.sin(w), w * t], axis=1), stop=8)
    uT = RandomVector.from_function(m, lambda t, w: np.stack([w ** 3, np.cos(w)], axis=1))
    lin0 = solve_linear_drift(I, f, uT, sp)
    a0 = solve_a0(f, uT, sp)
    out.append(_le("solvers", "a0_linear_consistency", max(lin0.U.max_abs_difference(a0.U), lin0.V.max_abs_difference(a0.V)), 1e-10))
    # terminal condition and conditional-expectation identity for f = 0
    S = SemigroupOperator(np.array([[1.0, 0.5], [0.0, 2.0]]), T, 8)
    lin = solve_linear_drift(S, zero, uT, sp)
    out.append(_le("solvers", "terminal_condition", float(np.max(np.abs(lin.U.at(8) - uT.values))), 0.0))
    ce = 0.0
    for j in range(9):
        for i in range(j, 9):
            lhs = m.condition(S.apply(i - j, lin.U.at(i)), i, j)
            ce = max(ce, float(np.max(np.abs(lhs - lin.U.at(j)))))
    out.append(_le("solvers", "conditional_expectation_identity", ce, 1e-10))
    # continuity across N doubling
    worst = 0.0
    for A, term in ((np.diag([1.0, 2.0]), lambda t, w: w[:, None] * x),
                    (np.array([[0.0, 1.0], [-1.0, 0.0]]), lambda t, w: (w * w)[:, None] * x)):
        mods = []
        for N in (8, 16):
            mN = TreeModel(TimeGrid(T, N))
            SN = SemigroupOperator(A, T, N)
            fN = AdaptedProcess.from_function(mN, lambda t, w: w[:, None] * x, stop=N)
            mods.append(continuity_modulus(solve_linear_drift(SN, fN, RandomVector.from_function(mN, term), sp), sp))
        worst = max(worst, mods[1] / mods[0])
    out.append(_le("solvers", "continuity_ratio", worst, 2.0))
    return out


RUNNERS: dict[str, Callable[[int], list]] = {
    "gamma": suite_gamma,
    "stochastic": suite_stochastic,
    "representation": suite_representation,
    "solvers": suite_solvers,
}


def run_suites(name: str, seed: int = 0) -> list:
    if name == "all":
        names = SUITES
    elif name in RUNNERS:
        names = (name,)
    else:
        raise KeyError(name)
    results = []
    for n in names:
        results += RUNNERS[n](seed)
    return results

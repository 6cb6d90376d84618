"""Mild-solution solvers for ``dU + AU dt = f(t, U, V) dt + V dW``, ``U(T) = u_T``.

Every solver targets the discrete mild equation (left-endpoint sums):

    U_i + sum_{j=i}^{N-1} S(t_j - t_i) [f_j dt + V_j dW_{j+1}] = S(T - t_i) u_T

with ``f_j = f(t_j, U_j, V_j)``. ``U`` lives on the nodes ``0..N`` and ``V``
on the cells ``0..N-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .drivers import DriverSpec, check_bounds
from .representation import kernel_construction, martingale_representation
from .space import SemigroupOperator, SpaceSpec, semigroup_gamma_bound
from .stochastic import (
    AdaptedProcess,
    RandomVector,
    StochasticModel,
    edge_moment,
    gamma_norm_of_process,
    lp_moment,
)


class NonContractionError(ValueError):
    """The contraction guard rejects the requested Picard step length."""

    def __init__(self, message: str, theta: float):
        super().__init__(message)
        self.theta = theta


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, theta: float):
        super().__init__(message)
        self.theta = theta


@dataclass
class SolutionPair:
    U: AdaptedProcess
    V: AdaptedProcess
    residual: float = float("nan")
    iterations: int = 0
    contraction_history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def model(self) -> StochasticModel:
        return self.U.model


@dataclass(frozen=True)
class PicardConfig:
    delta: float
    tol: float = 1e-8
    max_iter: int = 100
    guard_threshold: float = 0.5
    gamma_budget: int = 200
    seed: int = 0
    norm_samples: int = 256

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.guard_threshold <= 1:
            raise ValueError("guard_threshold must lie in (0, 1]")


def contraction_guard(lipschitz: float, delta: float, gamma: float) -> float:
    """``theta = L delta g + L sqrt(delta) g (1 + sqrt(delta) g)`` with ``g`` the gamma-bound of S.

    The first term bounds the drift part of one Picard step on an interval of
    length ``delta``, the second the stochastic part through the kernel-norm
    estimate; the implied constants are taken to be 1.
    """
    r = math.sqrt(delta)
    return lipschitz * delta * gamma + lipschitz * r * gamma * (1 + r * gamma)


def _identity_semigroup(model: StochasticModel, dim: int) -> SemigroupOperator:
    return SemigroupOperator(np.zeros((dim, dim)), model.grid.horizon, model.steps)


def _check_grid(S: SemigroupOperator, model: StochasticModel):
    if S.steps != model.steps or not math.isclose(S.horizon, model.grid.horizon, rel_tol=1e-12):
        raise ValueError(f"semigroup grid (T={S.horizon}, N={S.steps}) differs from the model grid "
                         f"(T={model.grid.horizon}, N={model.steps})")


def _driver_values(driver, U: AdaptedProcess, V: AdaptedProcess, j: int) -> np.ndarray:
    if isinstance(driver, AdaptedProcess):
        return driver.at(j)
    model = U.model
    return driver(model.grid.t(j), model.wiener(j), U.at(j), V.at(j))


def _op_norm_upper(B: np.ndarray, space: SpaceSpec) -> float:
    if space.is_hilbert:
        return float(np.linalg.norm(B, 2))
    # Riesz-Thorin between l^1 and l^inf
    q = space.norm_exponent
    n1 = np.abs(B).sum(axis=0).max()
    ninf = np.abs(B).sum(axis=1).max()
    return float(n1 ** (1 / q) * ninf ** (1 - 1 / q))


def mild_residual_profile(sol: SolutionPair, S: SemigroupOperator, driver, u_T: RandomVector,
                          space: SpaceSpec) -> np.ndarray:
    """``(E||D_i||^p)^(1/p)`` for ``i = 0..N``.

    On tree and path models ``D_i`` is evaluated directly from its definition
    on the terminal states. The lattice has no paths, so there the value is
    the upper bound ``sum_j ||S(t_j - t_i)|| ||delta_j||`` built from the
    one-step defects ``delta_j`` on the lattice edges.
    """
    model = sol.model
    _check_grid(S, model)
    N, dt = model.steps, model.dt
    U, V = sol.U, sol.V
    if U.start != 0 or U.stop != N + 1 or V.start != 0 or V.stop < N:
        raise ValueError("solution must cover U on 0..N and V on 0..N-1")
    fvals = [_driver_values(driver, U, V, j) for j in range(N)]
    out = np.empty(N + 1)
    if model.supports_paths:
        w = model.probabilities(N)
        p = space.moment_exponent
        terms = []
        for j in range(N):
            inc = model.increment(j)[:, None]
            step = model.extend(fvals[j] * dt, j, j + 1) + model.extend(V.at(j), j, j + 1) * inc
            terms.append(model.extend(step, j + 1, N))
        uT = u_T.values
        for i in range(N + 1):
            D = model.extend(U.at(i), i, N) - S.apply(N - i, uT)
            for j in range(i, N):
                D = D + S.apply(j - i, terms[j])
            out[i] = float(np.dot(w, space.norm(D) ** p)) ** (1 / p)
        return out
    defects = []
    for j in range(N):
        e = model.edges(j)
        nxt = S.apply(1, U.at(j + 1))
        d = (U.at(j)[e.parent] + fvals[j][e.parent] * dt + V.at(j)[e.parent] * e.increment[:, None]
             - nxt[e.child])
        defects.append(edge_moment(d, e.weight, space))
    term = lp_moment(RandomVector(model, N, U.at(N) - u_T.values), space)
    norms = [_op_norm_upper(S(k), space) for k in range(N + 1)]
    for i in range(N + 1):
        out[i] = norms[N - i] * term + sum(norms[j - i] * defects[j] for j in range(i, N))
    return out


def discrete_mild_residual(sol: SolutionPair, S: SemigroupOperator, driver, u_T: RandomVector,
                           space: SpaceSpec) -> float:
    """``max_i (E||D_i||^p)^(1/p)`` for the discrete mild equation."""
    return float(np.max(mild_residual_profile(sol, S, driver, u_T, space)))


def _require_adapted(f: AdaptedProcess, model: StochasticModel):
    if f.model is not model:
        raise ValueError("driver process and terminal value live on different models")
    if f.start != 0 or f.stop < model.steps:
        raise ValueError("driver process must cover the cells 0..N-1")


def solve_a0(f: AdaptedProcess, u_T: RandomVector, space: SpaceSpec) -> SolutionPair:
    """``A = 0``: ``U_i = M_i + sum_{j<i} f_j dt`` with ``M_i = E(u_T - sum_j f_j dt | F_i)``.

    ``V`` represents the martingale ``M``. The recombining lattice cannot form
    the path integral ``sum_j f_j dt``; there the linear-drift formula with
    ``S = I`` is used, which gives the same discrete solution.
    """
    model = u_T.model
    _require_adapted(f, model)
    N, dt, d = model.steps, model.dt, u_T.dim
    I = _identity_semigroup(model, d)
    if not model.supports_paths:
        sol = solve_linear_drift(I, f, u_T, space)
        sol.info["method"] = "a0 (lattice: linear-drift formula with S = I)"
        return sol
    running = [np.zeros((model.size(0), d))]
    for j in range(N):
        running.append(model.extend(running[-1], j, j + 1) + model.extend(f.at(j), j, j + 1) * dt)
    xi = RandomVector(model, N, u_T.values - running[N])
    rep = martingale_representation(xi)
    U = AdaptedProcess(model, [rep.martingale.at(i) + running[i] for i in range(N + 1)])
    V = rep.integrand
    sol = SolutionPair(U, V, info={"method": "a0", "representation_residual": rep.residual})
    sol.residual = discrete_mild_residual(sol, I, f, u_T, space)
    return sol


def _linear_interval(S: SemigroupOperator, g: AdaptedProcess, u_b: RandomVector, a: int):
    """Solve the linear problem on ``[t_a, t_b]`` with terminal ``u_b`` at ``b``.

    ``U_i = S(t_b - t_i) E(u_b | F_i) - sum_{j=i}^{b-1} S(t_j - t_i) E(g_j | F_i) dt``
    ``V_j = S(t_b - t_j) phi_j - sum_{l=j+1}^{b-1} S(t_l - t_j) k(t_l, t_j) dt``
    where ``phi`` represents ``u_b`` and ``k`` is the kernel of ``g``, both
    relative to ``F_a``.
    """
    model = u_b.model
    b, dt = u_b.level, model.dt
    rep = martingale_representation(u_b, start=a)
    ker = kernel_construction(g, start=a, stop=b).kernel if b > a else None
    U = []
    for i in range(a, b + 1):
        val = S.apply(b - i, rep.martingale.at(i))
        for j in range(i, b):
            val = val - S.apply(j - i, model.condition(g.at(j), j, i)) * dt
        U.append(val)
    V = []
    for j in range(a, b):
        val = S.apply(b - j, rep.integrand.at(j))
        for l in range(j + 1, b):
            val = val - S.apply(l - j, ker.value(l, j)) * dt
        V.append(val)
    return U, V, rep.residual


def solve_linear_drift(S: SemigroupOperator, f: AdaptedProcess, u_T: RandomVector,
                       space: SpaceSpec) -> SolutionPair:
    """Driver independent of ``(U, V)``; explicit representation formula."""
    model = u_T.model
    _check_grid(S, model)
    _require_adapted(f, model)
    U, V, rres = _linear_interval(S, f.restrict(0, model.steps), u_T, 0)
    sol = SolutionPair(AdaptedProcess(model, U), AdaptedProcess(model, V),
                       info={"method": "linear", "representation_residual": rres})
    sol.residual = discrete_mild_residual(sol, S, f, u_T, space)
    return sol


def process_norm(proc: AdaptedProcess, space: SpaceSpec, start: int, stop: int,
                 samples: int = 256, seed: int = 0) -> float:
    """``||proc||_{L^p(Omega; gamma(t_start, t_stop; X))}`` on the cells ``[start, stop)``.

    On the lattice outside the Euclidean ``p = 2`` case the surrogate
    ``(sum_i ||proc_i||_{L^p}^2 dt)^(1/2)`` is returned.
    """
    model = proc.model
    if model.supports_paths or (space.is_hilbert and space.moment_exponent == 2.0):
        return gamma_norm_of_process(proc, space, samples=samples, seed=seed, start=start, stop=stop).value
    return math.sqrt(sum(lp_moment(proc.slice(i), space) ** 2 for i in range(start, stop)) * model.dt)


def _intervals(N: int, m: int):
    cuts, b = [], N
    while b > 0:
        a = max(0, b - m)
        cuts.append((a, b))
        b = a
    return cuts


def _is_trivial(driver: DriverSpec, u_T: RandomVector) -> bool:
    return driver.kind == "zero" and not np.any(u_T.values)


def solve_general_picard(S: SemigroupOperator, driver: DriverSpec, u_T: RandomVector, space: SpaceSpec,
                         cfg: PicardConfig, initial: Optional[SolutionPair] = None) -> SolutionPair:
    """Picard iteration on intervals of ``m = floor(delta / dt)`` steps, patched right to left.

    Iterate ``n + 1`` solves the linear problem with the driver frozen at
    iterate ``n`` (``(0, 0)`` unless ``initial`` is given). An interval stops
    once ``||U_{n+1} - U_n|| + ||V_{n+1} - V_n|| < tol`` in the discretised
    ``L^p(Omega; gamma(I; X))`` norms. Only ``U`` at the cut is handed to the
    next interval on the left.
    """
    model = u_T.model
    _check_grid(S, model)
    N, dt, d = model.steps, model.dt, u_T.dim
    if driver.dim != d or space.dim != d:
        raise ValueError("driver, space and terminal value dimensions differ")
    if cfg.delta > model.grid.horizon * (1 + 1e-12):
        raise ValueError(f"delta={cfg.delta} exceeds the horizon {model.grid.horizon}")
    bounds = check_bounds(driver, space, model.grid.horizon, seed=cfg.seed)
    if not bounds.ok:
        raise ValueError(f"driver violates its declared bounds (Lipschitz ratio {bounds.lipschitz_ratio:.3g}, "
                         f"growth ratio {bounds.growth_ratio:.3g})")
    if _is_trivial(driver, u_T):
        z = AdaptedProcess.zeros(model, d)
        return SolutionPair(z, AdaptedProcess.zeros(model, d, stop=N), 0.0, 0, [],
                            {"method": "picard", "theta": 0.0, "degenerate": True})
    gamma = semigroup_gamma_bound(S, space, budget=cfg.gamma_budget, seed=cfg.seed)
    theta = contraction_guard(driver.lipschitz, cfg.delta, gamma.value)
    if theta >= cfg.guard_threshold:
        raise NonContractionError(
            f"contraction guard theta={theta:.4g} >= {cfg.guard_threshold} for delta={cfg.delta}; "
            f"choose a smaller delta", theta)
    m = int(math.floor(cfg.delta / dt + 1e-9))
    if m < 1:
        raise ValueError(f"delta={cfg.delta} is shorter than the time step {dt}")

    U_vals = [None] * (N + 1)
    V_vals = [None] * N
    U_vals[N] = u_T.values
    history, total = [], 0
    for a, b in _intervals(N, m):
        u_b = RandomVector(model, b, U_vals[b])
        if initial is None:
            Un = [np.zeros((model.size(i), d)) for i in range(a, b + 1)]
            Vn = [np.zeros((model.size(j), d)) for j in range(a, b)]
        else:
            Un = [initial.U.at(i) for i in range(a, b + 1)]
            Vn = [initial.V.at(j) for j in range(a, b)]
        diffs = []
        for n in range(1, cfg.max_iter + 1):
            g = AdaptedProcess(model, [driver(model.grid.t(j), model.wiener(j), Un[j - a], Vn[j - a])
                                       for j in range(a, b)], a)
            U1, V1, _ = _linear_interval(S, g, u_b, a)
            dU = AdaptedProcess(model, [x - y for x, y in zip(U1, Un)], a)
            dV = AdaptedProcess(model, [x - y for x, y in zip(V1, Vn)], a)
            diff = (process_norm(dU, space, a, b, cfg.norm_samples, cfg.seed)
                    + process_norm(dV, space, a, b, cfg.norm_samples, cfg.seed))
            diffs.append(diff)
            Un, Vn = U1, V1
            if diff < cfg.tol:
                break
        else:
            raise NonConvergenceError(
                f"interval [{a}, {b}] did not converge in {cfg.max_iter} iterations "
                f"(last difference {diffs[-1]:.3g}, theta={theta:.4g})", theta)
        total += len(diffs)
        history.append(diffs)
        for i in range(a, b):
            U_vals[i] = Un[i - a]
            V_vals[i] = Vn[i - a]
    sol = SolutionPair(AdaptedProcess(model, U_vals), AdaptedProcess(model, V_vals), iterations=total,
                       contraction_history=history,
                       info={"method": "picard", "theta": theta, "gamma_bound": gamma.value,
                             "gamma_kind": gamma.kind, "interval_steps": m, "intervals": len(history),
                             "guard_threshold": cfg.guard_threshold})
    sol.residual = discrete_mild_residual(sol, S, driver, u_T, space)
    return sol


def backward_recursion_oracle(S: SemigroupOperator, driver: Union[DriverSpec, AdaptedProcess],
                              u_T: RandomVector, space: Optional[SpaceSpec] = None, inner_tol: float = 1e-12,
                              inner_max: int = 500) -> SolutionPair:
    """Dynamic programming on an exact model.

    ``V_i = E[S(dt) U_{i+1} dW_{i+1} | F_i] / dt`` and
    ``U_i = E[S(dt) U_{i+1} | F_i] - dt f(t_i, U_i, V_i)``, the implicit ``U_i``
    found by fixed-point iteration (a contraction when ``dt L < 1``).
    """
    model = u_T.model
    if not model.exact:
        raise ValueError("the backward recursion oracle needs an exact (tree or lattice) model")
    _check_grid(S, model)
    N, dt, d = model.steps, model.dt, u_T.dim
    L = 0.0 if isinstance(driver, AdaptedProcess) else driver.lipschitz
    if dt * L >= 1:
        raise NonConvergenceError(f"inner fixed point is not a contraction: dt*L = {dt * L:.3g} >= 1", dt * L)
    U = [None] * (N + 1)
    V = [None] * N
    U[N] = u_T.values
    for i in range(N - 1, -1, -1):
        Y = S.apply(1, U[i + 1])
        EY = model.condition(Y, i + 1, i)
        V[i] = model.covariation(Y, i, EY)
        t, w = model.grid.t(i), model.wiener(i)
        if isinstance(driver, AdaptedProcess):
            U[i] = EY - dt * driver.at(i)
            continue
        u = EY
        for _ in range(inner_max):
            u_new = EY - dt * driver(t, w, u, V[i])
            if np.max(np.abs(u_new - u)) <= inner_tol:
                u = u_new
                break
            u = u_new
        else:
            raise NonConvergenceError(f"inner iteration at level {i} did not reach {inner_tol}", dt * L)
        U[i] = u
    sol = SolutionPair(AdaptedProcess(model, U), AdaptedProcess(model, V), info={"method": "oracle"})
    sol.residual = discrete_mild_residual(sol, S, driver, u_T, space if space is not None else SpaceSpec(d))
    return sol


def continuity_modulus(sol: SolutionPair, space: SpaceSpec) -> float:
    """``max_i (E||U_{i+1} - U_i||^p)^(1/p) / sqrt(dt)``."""
    model = sol.model
    best = 0.0
    for i in range(model.steps):
        e = model.edges(i)
        diff = sol.U.at(i + 1)[e.child] - sol.U.at(i)[e.parent]
        best = max(best, edge_moment(diff, e.weight, space))
    return best / math.sqrt(model.dt)


@dataclass
class UniquenessReport:
    distance_U: float
    distance_V: float
    tol: float
    iterations: tuple
    perturbation_seed: int

    @property
    def distance(self) -> float:
        return max(self.distance_U, self.distance_V)

    @property
    def passed(self) -> bool:
        return self.distance <= 10 * self.tol


def adapted_noise(model: StochasticModel, dim: int, space: SpaceSpec, seed: int) -> tuple:
    """Seeded adapted perturbation with ``||dU|| + ||dV|| = 1`` in the Picard norm."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    N = model.steps
    dU = AdaptedProcess(model, [rng.standard_normal((model.size(i), dim)) for i in range(N + 1)])
    dV = AdaptedProcess(model, [rng.standard_normal((model.size(i), dim)) for i in range(N)])
    scale = process_norm(dU, space, 0, N, seed=seed) + process_norm(dV, space, 0, N, seed=seed)
    return dU * (1 / scale), dV * (1 / scale)


def uniqueness_check(S: SemigroupOperator, driver: DriverSpec, u_T: RandomVector, space: SpaceSpec,
                     cfg: PicardConfig, seed: int = 1) -> UniquenessReport:
    """Run Picard from ``(0, 0)`` and from a perturbed reference and compare.

    The reference is the backward-recursion solution on exact models and the
    first Picard run otherwise.
    """
    first = solve_general_picard(S, driver, u_T, space, cfg)
    model = u_T.model
    ref = backward_recursion_oracle(S, driver, u_T, space) if model.exact else first
    nU, nV = adapted_noise(model, u_T.dim, space, seed)
    start = SolutionPair(ref.U + nU, ref.V + nV)
    second = solve_general_picard(S, driver, u_T, space, cfg, initial=start)
    return UniquenessReport(first.U.max_abs_difference(second.U), first.V.max_abs_difference(second.V),
                            cfg.tol, (first.iterations, second.iterations), seed)

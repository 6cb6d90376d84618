"""Brownian drivers, the filtration they generate, adapted processes and
the discrete stochastic calculus used by the solvers.

Three models share one interface. Values of a process at grid level ``i``
are stored as an array with one row per state of the level-``i`` sigma-field:

* ``TreeModel`` -- the non-recombining binary tree, ``2^i`` states at level
  ``i``; the children of state ``k`` are ``2k`` (down) and ``2k + 1`` (up),
  so every atom of ``F_i`` is a contiguous block of terminal states.
  Increments are ``+-sqrt(dt)`` with probability 1/2. All expectations are
  finite sums.
* ``LatticeModel`` -- the same random walk quotiented by the number of up
  moves (``i + 1`` states). Exact for Markov data (functions of ``t`` and
  ``W(t)``); path functionals such as stochastic integrals are unavailable.
* ``PathModel`` -- seeded Gaussian increments; conditional expectations by
  ridge regression on polynomials of ``W(t_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import binom

from .gamma import GammaNormEstimate
from .space import SpaceSpec

TREE_MAX_DEPTH = 24


class NotAdaptedError(ValueError):
    """Raised when values are not measurable with respect to the filtration."""


class UnsupportedOnModel(NotImplementedError):
    """Raised for path functionals on a model that cannot represent them."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def t(self, i: int) -> float:
        return i * self.dt


@dataclass(frozen=True)
class Edges:
    """Transitions from level ``i`` to ``i + 1``."""

    parent: np.ndarray
    child: np.ndarray
    weight: np.ndarray
    increment: np.ndarray


class StochasticModel:
    kind: str = ""
    exact: bool = False
    supports_paths: bool = True

    def __init__(self, grid: TimeGrid):
        self.grid = grid

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    def size(self, level: int) -> int:
        raise NotImplementedError

    def probabilities(self, level: int) -> np.ndarray:
        raise NotImplementedError

    def wiener(self, level: int) -> np.ndarray:
        raise NotImplementedError

    def edges(self, level: int) -> Edges:
        raise NotImplementedError

    def condition(self, values: np.ndarray, source: int, target: int) -> np.ndarray:
        """``E(values | F_target)`` for ``values`` measurable at level ``source``."""
        raise NotImplementedError

    def extend(self, values: np.ndarray, source: int, target: int) -> np.ndarray:
        """View a level-``source`` array on the states of a later level."""
        raise NotImplementedError

    def increment(self, level: int) -> np.ndarray:
        """``W(t_{level+1}) - W(t_level)`` on the states of level ``level + 1``."""
        raise NotImplementedError

    def covariation(self, following: np.ndarray, level: int, current: Optional[np.ndarray] = None) -> np.ndarray:
        """``E[(X - current) dW | F_level] / dt`` for ``X`` at ``level + 1``."""
        raise NotImplementedError

    def _check_level(self, level: int):
        if not 0 <= level <= self.steps:
            raise IndexError(f"level {level} outside 0..{self.steps}")

    def describe(self) -> dict:
        return {"kind": self.kind, "horizon": self.grid.horizon, "steps": self.steps}


def _rows(values: np.ndarray) -> np.ndarray:
    return values if values.ndim > 1 else values[:, None]


class TreeModel(StochasticModel):
    kind = "tree"
    exact = True

    def __init__(self, grid: TimeGrid):
        if grid.steps > TREE_MAX_DEPTH:
            raise ValueError(f"tree depth {grid.steps} exceeds the hard limit {TREE_MAX_DEPTH}")
        super().__init__(grid)
        self._wiener = {}

    def size(self, level):
        self._check_level(level)
        return 1 << level

    def probabilities(self, level):
        return np.full(self.size(level), 0.5 ** level)

    def wiener(self, level):
        self._check_level(level)
        if level not in self._wiener:
            if level == 0:
                w = np.zeros(1)
            else:
                w = np.repeat(self.wiener(level - 1), 2) + self.increment(level - 1)
            w.setflags(write=False)
            self._wiener[level] = w
        return self._wiener[level]

    def increment(self, level):
        self._check_level(level + 1)
        h = math.sqrt(self.dt)
        return np.tile(np.array([-h, h]), 1 << level)

    def edges(self, level):
        child = np.arange(self.size(level + 1))
        return Edges(child >> 1, child, self.probabilities(level + 1), self.increment(level))

    def condition(self, values, source, target):
        if target > source:
            raise ValueError("cannot condition on a later sigma-field than the variable's level")
        self._check_level(target)
        if target == source:
            return values
        block = 1 << (source - target)
        return values.reshape((self.size(target), block) + values.shape[1:]).mean(axis=1)

    def extend(self, values, source, target):
        if target < source:
            raise ValueError("extend goes forward in time only")
        return np.repeat(values, 1 << (target - source), axis=0)

    def covariation(self, following, level, current=None):
        pairs = following.reshape((self.size(level), 2) + following.shape[1:])
        return (pairs[:, 1] - pairs[:, 0]) / (2 * math.sqrt(self.dt))


class LatticeModel(StochasticModel):
    kind = "lattice"
    exact = True
    supports_paths = False

    def size(self, level):
        self._check_level(level)
        return level + 1

    def probabilities(self, level):
        return binom.pmf(np.arange(level + 1), level, 0.5)

    def wiener(self, level):
        self._check_level(level)
        return math.sqrt(self.dt) * (2 * np.arange(level + 1) - level)

    def edges(self, level):
        n = level + 1
        k = np.arange(n)
        w = self.probabilities(level) / 2
        h = math.sqrt(self.dt)
        return Edges(np.concatenate([k, k]), np.concatenate([k, k + 1]),
                     np.concatenate([w, w]), np.concatenate([np.full(n, -h), np.full(n, h)]))

    def condition(self, values, source, target):
        if target > source:
            raise ValueError("cannot condition on a later sigma-field than the variable's level")
        for _ in range(source - target):
            values = 0.5 * (values[:-1] + values[1:])
        return values

    def extend(self, values, source, target):
        if target == source:
            return values
        raise UnsupportedOnModel("the recombining lattice has no path structure; use a tree or path model")

    def increment(self, level):
        raise UnsupportedOnModel("increments are edge quantities on the lattice")

    def covariation(self, following, level, current=None):
        return (following[1:] - following[:-1]) / (2 * math.sqrt(self.dt))


class PathModel(StochasticModel):
    """Monte-Carlo ensemble of Brownian paths.

    Increments come from a Philox counter-based stream keyed by ``seed``;
    the normal draw for ``(path, step)`` sits at a fixed counter offset, so
    the ensemble is reproducible independently of how it is consumed.
    """

    kind = "paths"

    def __init__(self, grid: TimeGrid, path_count: int, seed: int = 0, degree: int = 3,
                 ridge: float = 1e-8, increments: Optional[np.ndarray] = None):
        super().__init__(grid)
        if path_count < 2:
            raise ValueError("path_count must be at least 2")
        self.path_count = int(path_count)
        self.seed = int(seed)
        self.degree = degree
        self.ridge = ridge
        if increments is None:
            rng = np.random.Generator(np.random.Philox(key=self.seed))
            increments = rng.standard_normal((self.path_count, grid.steps)) * math.sqrt(grid.dt)
        increments = np.array(increments, dtype=float)
        if increments.shape != (self.path_count, grid.steps):
            raise ValueError("increment array has the wrong shape")
        increments.setflags(write=False)
        self.increments = increments
        w = np.zeros((self.path_count, grid.steps + 1))
        np.cumsum(increments, axis=1, out=w[:, 1:])
        w.setflags(write=False)
        self._w = w

    def describe(self):
        return {**super().describe(), "path_count": self.path_count, "seed": self.seed,
                "regression_degree": self.degree, "ridge": self.ridge}

    def size(self, level):
        self._check_level(level)
        return self.path_count

    def probabilities(self, level):
        return np.full(self.path_count, 1.0 / self.path_count)

    def wiener(self, level):
        self._check_level(level)
        return self._w[:, level]

    def increment(self, level):
        self._check_level(level + 1)
        return self.increments[:, level]

    def edges(self, level):
        idx = np.arange(self.path_count)
        return Edges(idx, idx, self.probabilities(level), self.increment(level))

    def scrambled(self, level: int, seed: int) -> "PathModel":
        """Same increments before ``level``, fresh ones from ``level`` on."""
        inc = np.array(self.increments)
        rng = np.random.Generator(np.random.Philox(key=seed))
        inc[:, level:] = rng.standard_normal((self.path_count, self.steps - level)) * math.sqrt(self.dt)
        return PathModel(self.grid, self.path_count, self.seed, self.degree, self.ridge, inc)

    def sanity_check(self, sigmas: float = 5.0) -> bool:
        """Sample mean of every increment within ``sigmas * sqrt(dt / M)`` of 0."""
        bound = sigmas * math.sqrt(self.dt / self.path_count)
        return bool(np.all(np.abs(self.increments.mean(axis=0)) <= bound))

    def _basis(self, level):
        t = self.grid.t(level)
        if t == 0.0:
            return np.ones((self.path_count, 1))
        z = self._w[:, level] / math.sqrt(t)
        # probabilists' Hermite polynomials keep the Gram matrix well conditioned
        cols = [np.ones_like(z), z, z * z - 1.0, z ** 3 - 3 * z][: self.degree + 1]
        return np.stack(cols, axis=1)

    def _regress(self, target, level):
        B = self._basis(level)
        y = _rows(target)
        if B.shape[1] == 1:
            fit = np.broadcast_to(y.mean(axis=0), y.shape).copy()
        else:
            mean = y.mean(axis=0)
            G = B.T @ B / self.path_count + self.ridge * np.eye(B.shape[1])
            coef = np.linalg.solve(G, B.T @ (y - mean) / self.path_count)
            fit = mean + B @ coef - (B.mean(axis=0) @ coef)
        return fit.reshape(target.shape)

    def condition(self, values, source, target):
        if target > source:
            raise ValueError("cannot condition on a later sigma-field than the variable's level")
        self._check_level(target)
        if target == source:
            return values
        return self._regress(values, target)

    def extend(self, values, source, target):
        return values

    def covariation(self, following, level, current=None):
        centred = following if current is None else following - current
        inc = self.increment(level)
        return self._regress(centred * inc.reshape((-1,) + (1,) * (following.ndim - 1)), level) / self.dt


def make_model(kind: str, grid: TimeGrid, path_count: int = 10000, seed: int = 0) -> StochasticModel:
    if kind == "tree":
        return TreeModel(grid)
    if kind == "lattice":
        return LatticeModel(grid)
    if kind == "paths":
        return PathModel(grid, path_count, seed)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class RandomVector:
    model: StochasticModel
    level: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.model.size(self.level):
            raise NotAdaptedError(
                f"{v.shape[0]} rows given, level {self.level} has {self.model.size(self.level)} states")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, model, vector, level=None):
        level = model.steps if level is None else level
        vector = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(model, level, np.tile(vector, (model.size(level), 1)))

    @classmethod
    def from_function(cls, model, fn: Callable, level=None):
        """``fn(t, w)`` maps the Brownian values at a level to ``(n, d)`` rows."""
        level = model.steps if level is None else level
        return cls(model, level, fn(model.grid.t(level), model.wiener(level)))

    def __add__(self, other):
        if isinstance(other, RandomVector):
            if other.level != self.level:
                raise ValueError("levels differ")
            other = other.values
        return RandomVector(self.model, self.level, self.values + other)

    def __sub__(self, other):
        if isinstance(other, RandomVector):
            other = other.values
        return RandomVector(self.model, self.level, self.values - other)

    def __mul__(self, c):
        return RandomVector(self.model, self.level, self.values * c)

    __rmul__ = __mul__


class AdaptedProcess:
    """Grid-indexed process; ``values[i]`` has one row per level-``i`` state."""

    def __init__(self, model: StochasticModel, values, start: int = 0):
        self.model = model
        self.start = start
        vals = []
        for offset, v in enumerate(values):
            level = start + offset
            v = np.asarray(v, dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            if v.shape[0] != model.size(level):
                raise NotAdaptedError(
                    f"level {level}: {v.shape[0]} rows given, the filtration has {model.size(level)} atoms")
            vals.append(v)
        if not vals:
            raise ValueError("empty process")
        self.values = vals

    @property
    def stop(self) -> int:
        """One past the last stored level."""
        return self.start + len(self.values)

    @property
    def dim(self) -> int:
        return self.values[0].shape[1]

    def at(self, i: int) -> np.ndarray:
        if not self.start <= i < self.stop:
            raise IndexError(f"level {i} not stored (have {self.start}..{self.stop - 1})")
        return self.values[i - self.start]

    def slice(self, i: int) -> RandomVector:
        return RandomVector(self.model, i, self.at(i))

    def levels(self):
        return range(self.start, self.stop)

    @classmethod
    def zeros(cls, model, dim, start=0, stop=None):
        stop = model.steps + 1 if stop is None else stop
        return cls(model, [np.zeros((model.size(i), dim)) for i in range(start, stop)], start)

    @classmethod
    def from_function(cls, model, fn: Callable, start=0, stop=None):
        """Builtin Markov construction: level ``i`` gets ``fn(t_i, W(t_i))``."""
        stop = model.steps + 1 if stop is None else stop
        return cls(model, [fn(model.grid.t(i), model.wiener(i)) for i in range(start, stop)], start)

    @classmethod
    def from_terminal_array(cls, model, array, atol=0.0):
        """Build from values indexed by (level, terminal state); checks adaptedness.

        On the tree the value at level ``i`` must be constant on every block of
        terminal states sharing the first ``i`` signs.
        """
        array = np.asarray(array, dtype=float)
        if not model.supports_paths:
            raise UnsupportedOnModel("terminal-state arrays need a tree or path model")
        N = model.steps
        vals = []
        for i in range(array.shape[0]):
            a = _rows(array[i]) if array.ndim > 2 else array[i][:, None]
            if isinstance(model, TreeModel):
                blocks = a.reshape(model.size(i), -1, a.shape[-1])
                spread = np.max(np.abs(blocks - blocks[:, :1])) if blocks.size else 0.0
                if spread > atol:
                    raise NotAdaptedError(f"level {i} depends on signs after step {i} (spread {spread:g})")
                vals.append(blocks[:, 0])
            else:
                vals.append(a)
        if len(vals) > N + 1:
            raise ValueError("too many levels")
        return cls(model, vals)

    def restrict(self, start, stop) -> "AdaptedProcess":
        return AdaptedProcess(self.model, [self.at(i) for i in range(start, stop)], start)

    def _combine(self, other, op):
        if isinstance(other, AdaptedProcess):
            if (other.start, other.stop) != (self.start, self.stop):
                raise ValueError("processes cover different levels")
            return AdaptedProcess(self.model, [op(a, b) for a, b in zip(self.values, other.values)], self.start)
        return AdaptedProcess(self.model, [op(a, other) for a in self.values], self.start)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        return self._combine(c, np.multiply)

    __rmul__ = __mul__

    def max_abs_difference(self, other: "AdaptedProcess") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.values, other.values))

    def terminal_view(self, start=None, stop=None) -> np.ndarray:
        """Array ``(terminal states, levels, d)`` with every level extended to ``N``."""
        start = self.start if start is None else start
        stop = self.stop if stop is None else stop
        N = self.model.steps
        return np.stack([self.model.extend(self.at(i), i, N) for i in range(start, stop)], axis=1)


class AdaptedKernel:
    """Two-parameter adapted kernel ``k(s_l, sigma_j)``, ``j < l``.

    ``rows[l][j - start]`` is an array on the level-``j`` states. Rows are
    stored for cells ``l`` in ``[start, stop)``; entries with ``j < start``
    are not kept (they are not needed on the sub-interval).
    """

    def __init__(self, model: StochasticModel, rows: dict, start: int = 0, dim: int = 1):
        self.model = model
        self.rows = rows
        self.start = start
        self.dim = dim

    def value(self, l: int, j: int) -> np.ndarray:
        if j >= l:
            return np.zeros((self.model.size(j), self.dim))
        return self.rows[l][j - self.start]

    def cells(self):
        return sorted(self.rows)

    @classmethod
    def from_function(cls, model, fn: Callable, dim: int, start: int = 0, stop=None):
        """``fn(s, sigma, w_sigma)`` on the level of ``sigma``; zero for ``sigma >= s``."""
        stop = model.steps if stop is None else stop
        rows = {}
        for l in range(start, stop):
            rows[l] = [np.asarray(fn(model.grid.t(l), model.grid.t(j), model.wiener(j)), dtype=float)
                       .reshape(model.size(j), dim) for j in range(start, l)]
        return cls(model, rows, start, dim)

    def terminal_view(self) -> np.ndarray:
        """``(terminal states, N, N, d)`` dense view (tree / paths)."""
        N = self.model.steps
        out = np.zeros((self.model.size(N), N, N, self.dim))
        for l, row in self.rows.items():
            for offset, v in enumerate(row):
                j = self.start + offset
                out[:, l, j] = self.model.extend(v, j, N)
        return out


def conditional_expectation(xi, level: int) -> RandomVector:
    """``E(xi | F_level)`` for a random vector (or a process slice)."""
    if isinstance(xi, tuple):
        process, i = xi
        xi = process.slice(i)
    model = xi.model
    if not 0 <= level <= model.steps:
        raise IndexError(f"level {level} outside 0..{model.steps}")
    if level > xi.level:
        raise ValueError(f"variable is measurable at level {xi.level}; conditioning level {level} is later")
    return RandomVector(model, level, model.condition(xi.values, xi.level, level))


def ito_integral(phi: AdaptedProcess, start: int, stop: int) -> RandomVector:
    """Left-endpoint sum ``sum_{i=start}^{stop-1} phi(t_i) dW_{i+1}`` at level ``stop``."""
    model = phi.model
    if not model.supports_paths:
        raise UnsupportedOnModel("stochastic integrals are path functionals; use a tree or path model")
    if start > stop:
        raise ValueError("start must not exceed stop")
    acc = np.zeros((model.size(start), phi.dim))
    for i in range(start, stop):
        acc = model.extend(acc, i, i + 1) + model.extend(phi.at(i), i, i + 1) * model.increment(i)[:, None]
    return RandomVector(model, stop, acc)


def lp_moment(xi: RandomVector, space: SpaceSpec, return_error: bool = False):
    """``(E||xi||^p)^(1/p)``; exact weighted sum on tree/lattice, sample mean on paths."""
    p = space.moment_exponent
    norms = space.norm(xi.values) ** p
    w = xi.model.probabilities(xi.level)
    m = float(np.dot(w, norms))
    value = m ** (1.0 / p)
    if not return_error:
        return value
    if xi.model.exact or m == 0.0:
        return value, 0.0
    se_m = float(np.std(norms, ddof=1) / math.sqrt(len(norms)))
    return value, value * se_m / (p * m)


def edge_moment(values: np.ndarray, weights: np.ndarray, space: SpaceSpec) -> float:
    """``(sum_e w_e ||x_e||^p)^(1/p)`` for per-edge vectors."""
    p = space.moment_exponent
    return float(np.dot(weights, space.norm(values) ** p)) ** (1.0 / p)


def step_differences(process: AdaptedProcess, level: int) -> tuple[np.ndarray, np.ndarray]:
    """``X(t_{i+1}) - X(t_i)`` on the edges from ``level`` with their weights."""
    e = process.model.edges(level)
    return process.at(level + 1)[e.child] - process.at(level)[e.parent], e.weight


@dataclass(frozen=True)
class FubiniReport:
    iterated_ds_dw: np.ndarray
    iterated_dw_ds: np.ndarray
    discrepancy: float


def stochastic_fubini_swap(k: AdaptedKernel, h) -> FubiniReport:
    """Compare ``sum_s h(s) dt [sum_{sigma<s} k dW]`` with ``sum_sigma [sum_{s>sigma} h k dt] dW``."""
    model = k.model
    if not model.supports_paths:
        raise UnsupportedOnModel("the swap is checked pathwise; use a tree or path model")
    N, dt = model.steps, model.dt
    h = np.broadcast_to(np.asarray(h, dtype=float), (N,))
    for l, row in k.rows.items():
        for offset in range(len(row)):
            if offset + k.start >= l:
                raise ValueError("kernel support violation")
    lhs = np.zeros((model.size(N), k.dim))
    for l in k.cells():
        inner = np.zeros((model.size(k.start), k.dim))
        for j in range(k.start, l):
            inner = model.extend(inner, j, j + 1) + model.extend(k.value(l, j), j, j + 1) * model.increment(j)[:, None]
        lhs += h[l] * dt * model.extend(inner, l, N)
    rhs = np.zeros((model.size(N), k.dim))
    for j in range(k.start, N):
        inner = np.zeros((model.size(j), k.dim))
        for l in k.cells():
            if l > j:
                inner = inner + h[l] * k.value(l, j) * dt
        rhs += model.extend(model.extend(inner, j, j + 1) * model.increment(j)[:, None], j + 1, N)
    return FubiniReport(lhs, rhs, float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0)


def _gaussian_bank(seed: int, samples: int, cells: int) -> np.ndarray:
    return np.random.Generator(np.random.Philox(key=seed)).standard_normal((samples, cells))


def gamma_norm_of_process(phi: AdaptedProcess, space: SpaceSpec, samples: int = 256, seed: int = 0,
                          start: Optional[int] = None, stop: Optional[int] = None,
                          batches: int = 8) -> GammaNormEstimate:
    """``||phi||_{L^p(Omega; gamma(t_start, t_stop; X))}`` on the cells ``[start, stop)``.

    Per terminal state the cell values form a finite-rank element with
    columns ``sqrt(dt) phi(t_i)``; its gamma-norm is the Frobenius norm for
    ``l^2`` and a Monte-Carlo estimate with a shared Gaussian bank otherwise
    (standard error from ``batches`` batch means). On the lattice only the
    Euclidean ``p = 2`` case, which depends on marginals alone, is available.
    """
    model = phi.model
    start = phi.start if start is None else start
    stop = min(phi.stop, model.steps) if stop is None else stop
    dt, p = model.dt, space.moment_exponent
    if stop <= start:
        return GammaNormEstimate(0.0, 0.0, 0, "hilbert_exact")
    if not model.supports_paths:
        if not (space.is_hilbert and p == 2.0):
            raise UnsupportedOnModel("lattice gamma-norms are available for l^2 and p = 2 only")
        total = sum(float(np.dot(model.probabilities(i), np.sum(phi.at(i) ** 2, axis=1))) for i in range(start, stop))
        return GammaNormEstimate(math.sqrt(total * dt), 0.0, 0, "hilbert_exact")

    view = phi.terminal_view(start, stop) * math.sqrt(dt)  # (omega, cells, d)
    weights = model.probabilities(model.steps)
    if space.is_hilbert:
        per_path = np.sqrt(np.sum(view ** 2, axis=(1, 2)))
        value = float(np.dot(weights, per_path ** p)) ** (1 / p)
        if model.exact:
            return GammaNormEstimate(value, 0.0, 0, "hilbert_exact")
        se = float(np.std(per_path ** p, ddof=1) / math.sqrt(len(per_path)))
        m = value ** p
        return GammaNormEstimate(value, value * se / (p * m) if m else 0.0, 0, "hilbert_exact")

    bank = _gaussian_bank(seed, samples, stop - start)
    sq = np.empty((view.shape[0], samples))
    chunk = max(1, (1 << 22) // max(1, samples * view.shape[2]))
    for a in range(0, view.shape[0], chunk):
        y = np.einsum("sc,wcd->wsd", bank, view[a:a + chunk])
        sq[a:a + chunk] = space.norm(y) ** 2

    def reduce(cols):
        per_path = np.sqrt(sq[:, cols].mean(axis=1))
        return float(np.dot(weights, per_path ** p)) ** (1 / p)

    value = reduce(slice(None))
    parts = np.array_split(np.arange(samples), batches)
    batch_values = np.array([reduce(c) for c in parts])
    se = float(batch_values.std(ddof=1) / math.sqrt(batches)) if batches > 1 else 0.0
    return GammaNormEstimate(value, se, samples, "monte_carlo")

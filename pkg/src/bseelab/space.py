"""State spaces, matrix semigroups and gamma-bounds of semigroup families."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class SpaceSpec:
    """Finite-dimensional state space ``(R^d, l^q)`` together with the moment
    exponent ``p`` used for ``L^p(Omega; X)`` norms.
    """

    dim: int
    norm_exponent: float = 2.0
    moment_exponent: float = 2.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        for name in ("norm_exponent", "moment_exponent"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 1.0:
                raise ValueError(f"{name} must lie in (1, inf), got {value!r}")

    @property
    def is_hilbert(self) -> bool:
        return self.norm_exponent == 2.0

    def norm(self, v) -> np.ndarray:
        """Norm along the last axis (batched)."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got shape {v.shape}")
        q = self.norm_exponent
        if q == 2.0:
            return np.sqrt(np.sum(v * v, axis=-1))
        return np.sum(np.abs(v) ** q, axis=-1) ** (1.0 / q)


def lp_norm(v, space: SpaceSpec) -> float:
    """``(sum |v_i|^q)^(1/q)`` with ``q = space.norm_exponent``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("lp_norm expects a single vector")
    return float(space.norm(v))


def matrix_exponential(A, t: float) -> np.ndarray:
    """Return ``exp(-t A)``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"generator must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("generator has non-finite entries")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return np.eye(A.shape[0])
    return expm(-t * A)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SemigroupOperator:
    """``S(t) = exp(-t A)`` cached on the uniform grid ``t_k = k T / N``."""

    generator: np.ndarray
    horizon: float
    steps: int
    grid_cache: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.generator, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"generator must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("generator has non-finite entries")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        dt = self.horizon / self.steps
        cache = np.empty((self.steps + 1,) + A.shape)
        cache[0] = np.eye(A.shape[0])
        for k in range(1, self.steps + 1):
            cache[k] = matrix_exponential(A, k * dt)
        object.__setattr__(self, "generator", _frozen(A))
        object.__setattr__(self, "grid_cache", _frozen(cache))

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def __call__(self, k: int) -> np.ndarray:
        """``S(k dt)`` for a grid offset ``k``."""
        return self.grid_cache[k]

    def apply(self, k: int, values: np.ndarray) -> np.ndarray:
        """Apply ``S(k dt)`` to an array of row vectors ``(..., d)``."""
        return values @ self.grid_cache[k].T

    @property
    def is_identity(self) -> bool:
        return not np.any(self.generator)

    def restrict(self, steps: int) -> "SemigroupOperator":
        """Same generator on a grid with the same step but fewer nodes."""
        return SemigroupOperator(self.generator, steps * self.dt, steps)

    def integral(self, k: int) -> np.ndarray:
        """``int_0^{k dt} S(s) ds`` via the augmented-matrix exponential."""
        d = self.dim
        big = np.zeros((2 * d, 2 * d))
        big[:d, :d] = -self.generator
        big[:d, d:] = np.eye(d)
        return expm(k * self.dt * big)[:d, d:]


def operator_norm(B: np.ndarray, space: SpaceSpec, restarts: int = 4, iters: int = 60,
                  rng: Optional[np.random.Generator] = None) -> tuple[float, np.ndarray]:
    """Lower bound for ``||B||_{q->q}`` with a maximising vector.

    Exact (largest singular value) for ``q = 2``; otherwise Boyd's nonlinear
    power iteration from the coordinate vectors and a few random starts.
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    if space.is_hilbert:
        _, s, vt = np.linalg.svd(B)
        return float(s[0]), vt[0]
    q = space.norm_exponent
    qd = q / (q - 1.0)
    rng = rng if rng is not None else np.random.default_rng(0)
    starts = [np.eye(d)[i] for i in range(d)] + [np.ones(d)]
    starts += [rng.standard_normal(d) for _ in range(restarts)]
    best, best_x = 0.0, starts[0]
    for x in starts:
        x = x / space.norm(x)
        for _ in range(iters):
            y = B @ x
            ny = space.norm(y)
            if ny == 0.0:
                break
            s = np.sign(y) * (np.abs(y) / ny) ** (q - 1.0)
            z = B.T @ s
            nz = np.sum(np.abs(z) ** qd) ** (1.0 / qd)
            if nz == 0.0:
                break
            x_new = np.sign(z) * (np.abs(z) / nz) ** (qd - 1.0)
            x_new /= space.norm(x_new)
            if np.allclose(x_new, x, rtol=0, atol=1e-14):
                x = x_new
                break
            x = x_new
        ratio = float(space.norm(B @ x) / space.norm(x))
        if ratio > best:
            best, best_x = ratio, x
    return best, best_x


@dataclass(frozen=True)
class GammaWitness:
    """Finite subsets ``{t_n}`` (grid offsets) and ``{x_n}`` realising a ratio."""

    times: tuple
    vectors: np.ndarray


@dataclass(frozen=True)
class GammaBoundEstimate:
    value: float
    kind: str  # "exact_hilbert" | "lower_bound_search"
    samples: int
    witness: Optional[GammaWitness] = None
    std_error: float = 0.0


def witness_ratio(S: SemigroupOperator, space: SpaceSpec, times, vectors,
                  gaussians: np.ndarray) -> tuple[float, float]:
    """Estimate ``(E||sum g_n S(t_n) x_n||^2 / E||sum g_n x_n||^2)^(1/2)``.

    Numerator and denominator share the Gaussian draws; the standard error
    comes from the delta method for a ratio of means.
    """
    vectors = np.asarray(vectors, dtype=float)
    images = np.stack([S(k) @ x for k, x in zip(times, vectors)])
    num = space.norm(gaussians @ images) ** 2
    den = space.norm(gaussians @ vectors) ** 2
    a, b = num.mean(), den.mean()
    if b == 0.0:
        return 0.0, 0.0
    r2 = a / b
    m = len(num)
    se_r2 = np.std(num - r2 * den, ddof=1) / (b * np.sqrt(m)) if m > 1 else 0.0
    r = np.sqrt(r2)
    return float(r), float(se_r2 / (2 * r)) if r > 0 else 0.0


def semigroup_gamma_bound(S: SemigroupOperator, space: SpaceSpec, budget: int = 200,
                          seed: int = 0, samples: int = 4096) -> GammaBoundEstimate:
    """Gamma-bound of ``{S(t_k) : k = 0..N}``.

    In the Euclidean case this is ``max_k ||S(t_k)||_op`` exactly. Otherwise a
    randomized witness search returns a lower bound: single-operator ratios
    from power iteration, then multi-term Gaussian-sum ratios; the best
    multi-term witness is re-scored on fresh draws to remove selection bias.
    """
    if S.grid_cache.shape[0] == 0:
        raise ValueError("empty grid")
    if budget <= 0:
        raise ValueError("budget must be positive")
    if S.dim != space.dim:
        raise ValueError("semigroup and space dimensions differ")
    nodes = S.grid_cache.shape[0]

    if space.is_hilbert:
        norms = [np.linalg.norm(S(k), 2) for k in range(nodes)]
        k = int(np.argmax(norms))
        _, vec = operator_norm(S(k), space)
        return GammaBoundEstimate(float(norms[k]), "exact_hilbert", 0,
                                  GammaWitness((k,), vec[None, :]))

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    search_rng, score_rng, vec_rng = streams

    single_best, single_k, single_x = 0.0, 0, np.eye(space.dim)[0]
    maximisers = []
    for k in range(nodes):
        r, x = operator_norm(S(k), space, rng=vec_rng)
        maximisers.append(x)
        if r > single_best:
            single_best, single_k, single_x = r, k, x

    max_terms = min(6, nodes)
    search_samples = max(256, samples // 8)
    best_ratio, best_w = -1.0, None
    if max_terms >= 2:
        for _ in range(budget):
            n = int(search_rng.integers(2, max_terms + 1))
            times = tuple(int(t) for t in search_rng.choice(nodes, size=n, replace=False))
            vecs = search_rng.standard_normal((n, space.dim))
            if search_rng.random() < 0.5:
                vecs = np.stack([maximisers[t] for t in times]) * search_rng.standard_normal((n, 1))
            g = search_rng.standard_normal((search_samples, n))
            r, _ = witness_ratio(S, space, times, vecs, g)
            if r > best_ratio:
                best_ratio, best_w = r, GammaWitness(times, vecs)

    multi_value, multi_se = -1.0, 0.0
    if best_w is not None:
        g = score_rng.standard_normal((samples, len(best_w.times)))
        multi_value, multi_se = witness_ratio(S, space, best_w.times, best_w.vectors, g)

    if multi_value > single_best:
        return GammaBoundEstimate(multi_value, "lower_bound_search", samples, best_w, multi_se)
    return GammaBoundEstimate(single_best, "lower_bound_search", samples,
                              GammaWitness((single_k,), single_x[None, :]), 0.0)


def replay_witness(S: SemigroupOperator, space: SpaceSpec, witness: GammaWitness,
                   samples: int, seed: int) -> tuple[float, float]:
    """Re-score a stored witness on an independent Gaussian stream."""
    g = np.random.default_rng(seed).standard_normal((samples, len(witness.times)))
    return witness_ratio(S, space, witness.times, witness.vectors, g)

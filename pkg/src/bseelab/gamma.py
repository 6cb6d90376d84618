"""Gamma-radonifying norms of finite-rank operators on grid Hilbert spaces.

An element ``sum_j h_j (x) x_j`` with orthonormal ``h_j`` is stored as the
``d x n`` matrix whose columns are the ``x_j``. A process sampled on the cells
of a uniform grid embeds through ``x_j = sqrt(dt) * phi(t_j)`` against the
normalised cell indicators, so that in the Euclidean case the gamma-norm is
the ``L^2(0, T; R^d)`` norm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .space import SemigroupOperator, SpaceSpec

_BATCH = 1 << 15


@dataclass(frozen=True)
class FiniteRankGammaElement:
    coefficients: np.ndarray
    hilbert_dim_tag: str = ""

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2:
            raise ValueError(f"coefficients must be a d x n matrix, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]

    @property
    def rank(self) -> int:
        return self.coefficients.shape[1]

    @classmethod
    def from_grid_process(cls, values, dt: float) -> "FiniteRankGammaElement":
        """Embed cell values ``phi(t_j)`` (shape ``(n, d)``) of a grid process."""
        values = np.asarray(values, dtype=float)
        return cls(np.sqrt(dt) * values.T, f"time grid of {values.shape[0]} cells, dt={dt:g}")

    def transform(self, Q: np.ndarray) -> "FiniteRankGammaElement":
        """Re-express the element in the orthonormal family ``h'_k = sum_j Q_jk h_j``."""
        return FiniteRankGammaElement(self.coefficients @ Q, self.hilbert_dim_tag)


@dataclass(frozen=True)
class GammaNormEstimate:
    value: float
    std_error: float
    samples: int
    method: str  # "hilbert_exact" | "monte_carlo" | "quadrature"


@dataclass(frozen=True)
class KernelGammaElement:
    """Two-time-parameter element: ``values[i, j]`` is the vector at ``(s_i, sigma_j)``."""

    values: np.ndarray
    support_mask: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise ValueError(f"kernel values must have shape (n, n, d), got {v.shape}")
        object.__setattr__(self, "values", v)
        if self.support_mask and support_violation(v) > 0.0:
            raise ValueError("kernel has mass on sigma >= s but is declared lower-triangular")

    @property
    def cells(self) -> int:
        return self.values.shape[0]


def support_violation(values: np.ndarray) -> float:
    """Largest entry on or above the diagonal ``sigma >= s``."""
    n = values.shape[0]
    upper = np.triu(np.ones((n, n), dtype=bool))
    if not upper.any():
        return 0.0
    return float(np.max(np.abs(values[upper])))


def _require_hilbert(space):
    if space is not None and not space.is_hilbert:
        raise ValueError("the Hilbert-Schmidt identification needs norm_exponent = 2")


def gamma_norm_hilbert_exact(g: FiniteRankGammaElement, space: SpaceSpec | None = None) -> GammaNormEstimate:
    """Frobenius norm of the coefficient matrix."""
    _require_hilbert(space)
    return GammaNormEstimate(float(np.linalg.norm(g.coefficients)), 0.0, 0, "hilbert_exact")


def _gaussian_norm_moments(g, space, samples, seed, moment):
    if samples < 2:
        raise ValueError("at least two samples are required")
    if g.dim != space.dim:
        raise ValueError("element and space dimensions differ")
    rng = np.random.Generator(np.random.Philox(key=seed))
    out = np.empty(samples)
    C = g.coefficients
    for start in range(0, samples, _BATCH):
        stop = min(samples, start + _BATCH)
        G = rng.standard_normal((stop - start, g.rank))
        out[start:stop] = space.norm(G @ C.T) ** moment
    return out


def gamma_p_norm(g: FiniteRankGammaElement, space: SpaceSpec, moment: float = 2.0,
                 samples: int = 20000, seed: int = 0) -> GammaNormEstimate:
    """Monte-Carlo ``(E||sum_j g_j x_j||^p)^(1/p)`` with a delta-method standard error."""
    if moment < 1:
        raise ValueError("moment must be >= 1")
    draws = _gaussian_norm_moments(g, space, samples, seed, moment)
    m = draws.mean()
    if m == 0.0:
        return GammaNormEstimate(0.0, 0.0, samples, "monte_carlo")
    se_m = draws.std(ddof=1) / math.sqrt(samples)
    value = m ** (1.0 / moment)
    return GammaNormEstimate(float(value), float(value * se_m / (moment * m)), samples, "monte_carlo")


def gamma_norm_mc(g: FiniteRankGammaElement, space: SpaceSpec, samples: int = 20000,
                  seed: int = 0) -> GammaNormEstimate:
    return gamma_p_norm(g, space, 2.0, samples, seed)


def _radial_moment(n: int, p: float) -> float:
    """``E R^p`` for the norm ``R`` of a standard Gaussian vector in ``R^n``."""
    return 2 ** (p / 2) * math.exp(math.lgamma((n + p) / 2) - math.lgamma(n / 2))


def _circle_mean(fn, coeffs: np.ndarray, nodes: int) -> float:
    # Components of cos(t) a + sin(t) b vanish at isolated angles where |.|^q
    # has a kink; Gauss-Legendre on each arc between them keeps spectral accuracy.
    a, b = coeffs[:, 0], coeffs[:, 1]
    breaks = [0.0, 2 * math.pi]
    for ak, bk in zip(a, b):
        if ak == 0.0 and bk == 0.0:
            continue
        t0 = math.atan2(-ak, bk) % math.pi
        breaks += [t0, t0 + math.pi]
    breaks = np.unique(np.clip(breaks, 0.0, 2 * math.pi))
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi - lo < 1e-15:
            continue
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        pts = np.stack([np.cos(t), np.sin(t)], axis=1)
        total += 0.5 * (hi - lo) * float(np.sum(w * fn(pts)))
    return total / (2 * math.pi)


def _sphere_mean(fn, nodes: int) -> float:
    u, wu = np.polynomial.legendre.leggauss(nodes)
    theta = 2 * math.pi * np.arange(2 * nodes) / (2 * nodes)
    uu, tt = np.meshgrid(u, theta, indexing="ij")
    r = np.sqrt(1 - uu ** 2)
    pts = np.stack([r * np.cos(tt), r * np.sin(tt), uu], axis=-1).reshape(-1, 3)
    vals = fn(pts).reshape(uu.shape)
    return float(np.sum(wu[:, None] * vals) / (2 * 2 * nodes))


def gamma_norm_quadrature(g: FiniteRankGammaElement, space: SpaceSpec, nodes_per_dim: int = 64,
                          moment: float = 2.0, rule: str = "spherical") -> GammaNormEstimate:
    """Deterministic ``(E||sum_j g_j x_j||^p)^(1/p)`` for at most 3 columns.

    ``rule="spherical"`` (default) uses that the integrand is homogeneous of
    degree ``p``: the radial moment is closed form and only the angular mean
    is integrated numerically. ``rule="gauss_hermite"`` is the plain tensor
    rule; it converges slowly because the integrand is not smooth at 0.
    """
    if g.rank > 3:
        raise ValueError(f"quadrature limited to 3 Gaussian dimensions, got {g.rank}")
    if nodes_per_dim < 20:
        raise ValueError("nodes_per_dim must be at least 20")
    if g.dim != space.dim:
        raise ValueError("element and space dimensions differ")
    n, C = g.rank, g.coefficients
    if n == 0 or not np.any(C):
        return GammaNormEstimate(0.0, 0.0, 0, "quadrature")

    def fn(pts):
        return space.norm(pts @ C.T) ** moment

    if rule == "gauss_hermite":
        x, w = hermegauss(nodes_per_dim)
        w = w / math.sqrt(2 * math.pi)
        pts = np.array(list(itertools.product(x, repeat=n)))
        wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
        total = float(np.sum(wts * fn(pts)))
    elif rule == "spherical":
        if n == 1:
            angular = float(fn(np.array([[1.0]]))[0])
        elif n == 2:
            angular = _circle_mean(fn, C, nodes_per_dim)
        else:
            angular = _sphere_mean(fn, nodes_per_dim)
        total = _radial_moment(n, moment) * angular
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return GammaNormEstimate(total ** (1.0 / moment), 0.0, 0, "quadrature")


def kalton_weis_extend(op_matrix, g: FiniteRankGammaElement) -> FiniteRankGammaElement:
    """Extension of a scalar operator ``T: R^n -> R^m`` on the Hilbert side."""
    op = np.atleast_2d(np.asarray(op_matrix, dtype=float))
    if op.shape[1] != g.rank:
        raise ValueError(f"operator acts on {op.shape[1]} coordinates, element has {g.rank}")
    return FiniteRankGammaElement(g.coefficients @ op.T, g.hilbert_dim_tag)


def indefinite_integral_row(cells: int, dt: float, start: int, stop: int) -> np.ndarray:
    """Row vector of the functional ``phi -> int_{t_start}^{t_stop} phi`` in cell coordinates."""
    row = np.zeros((1, cells))
    row[0, start:stop] = np.sqrt(dt)
    return row


def pointwise_multiply(M, g: FiniteRankGammaElement) -> FiniteRankGammaElement:
    """Column ``j`` of the result is ``M[j] @ x_j``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 3 or M.shape[0] != g.rank or M.shape[1:] != (g.dim, g.dim):
        raise ValueError(f"need {g.rank} matrices of shape ({g.dim}, {g.dim}), got {M.shape}")
    return FiniteRankGammaElement(np.einsum("jab,bj->aj", M, g.coefficients), g.hilbert_dim_tag)


def convolve_semigroup(S: SemigroupOperator, values) -> np.ndarray:
    """Left-endpoint ``t_i -> sum_{j<i} S(t_i - t_j) g(t_j) dt`` for ``i = 0..N``.

    ``values`` holds the grid process on the ``N`` cells (a trailing node
    value, if present, is ignored).
    """
    g = np.asarray(values, dtype=float)
    N = S.steps
    if g.shape[0] not in (N, N + 1) or g.shape[1] != S.dim:
        raise ValueError(f"process of shape {g.shape} does not live on the semigroup grid (N={N})")
    out = np.zeros((N + 1, S.dim))
    for i in range(1, N + 1):
        for j in range(i):
            out[i] += S(i - j) @ g[j]
    return out * S.dt


def convolve_kernel(S: SemigroupOperator, k: KernelGammaElement) -> np.ndarray:
    """``sigma_j -> sum_{i>j} S(t_i - sigma_j) k(t_i, sigma_j) dt`` over the cells."""
    v = k.values
    N = S.steps
    if v.shape[0] != N or v.shape[2] != S.dim:
        raise ValueError(f"kernel of shape {v.shape} does not live on the semigroup grid (N={N})")
    if k.support_mask and support_violation(v) > 0.0:
        raise ValueError("kernel support violation")
    out = np.zeros((N, S.dim))
    for j in range(N):
        for i in range(j + 1, N):
            out[j] += S(i - j) @ v[i, j]
    return out * S.dt


def nest_flatten(k: KernelGammaElement, dt: float) -> FiniteRankGammaElement:
    """View the two-parameter element as one element over the product grid.

    Product cells have area ``dt^2``, so the coefficient of cell ``(i, j)``
    is ``dt * k(s_i, sigma_j)``.
    """
    n, _, d = k.values.shape
    coeffs = dt * k.values.reshape(n * n, d).T
    return FiniteRankGammaElement(coeffs, f"product grid {n}x{n}")


def nested_gamma_norm(k: KernelGammaElement, space: SpaceSpec, dt: float, samples: int = 20000,
                      seed: int = 0) -> GammaNormEstimate:
    """Norm in ``gamma(0,T; gamma(0,T; X))``: ``(E'E''||sum g'_i g''_j x_ij||^2)^(1/2)``."""
    n, _, d = k.values.shape
    x = dt * k.values
    if space.is_hilbert:
        return GammaNormEstimate(float(np.linalg.norm(x)), 0.0, 0, "hilbert_exact")
    rng = np.random.Generator(np.random.Philox(key=seed))
    draws = np.empty(samples)
    for start in range(0, samples, _BATCH):
        stop = min(samples, start + _BATCH)
        g1 = rng.standard_normal((stop - start, n))
        g2 = rng.standard_normal((stop - start, n))
        y = np.einsum("si,sj,ijd->sd", g1, g2, x)
        draws[start:stop] = space.norm(y) ** 2
    m = draws.mean()
    if m == 0.0:
        return GammaNormEstimate(0.0, 0.0, samples, "monte_carlo")
    se = draws.std(ddof=1) / math.sqrt(samples)
    value = math.sqrt(m)
    return GammaNormEstimate(value, value * se / (2 * m), samples, "monte_carlo")

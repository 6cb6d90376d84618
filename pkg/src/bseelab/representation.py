"""Discrete martingale representation and the two-parameter kernel of an
adapted process.

For a level-``b`` random vector ``xi`` the martingale ``M_i = E(xi | F_i)``
is written as ``M_i = M_a + sum_{j=a}^{i-1} V_j dW_{j+1}`` with
``V_j = E[(M_{j+1} - M_j) dW_{j+1} | F_j] / dt``. Binary increments span the
one-step martingale differences, so on the tree and the lattice the
identity holds exactly; on path ensembles ``V`` is a regression estimate and
the defect is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import SpaceSpec
from .stochastic import AdaptedKernel, AdaptedProcess, RandomVector, StochasticModel


@dataclass
class RepresentationResult:
    mean: np.ndarray
    integrand: AdaptedProcess
    residual: float
    martingale: AdaptedProcess


def _one_step_defects(model: StochasticModel, M: AdaptedProcess, V: AdaptedProcess, start: int, stop: int):
    worst = 0.0
    for j in range(start, stop):
        e = model.edges(j)
        d = M.at(j + 1)[e.child] - M.at(j)[e.parent] - V.at(j)[e.parent] * e.increment[:, None]
        if model.exact:
            worst = max(worst, float(np.max(np.abs(d))))
        else:
            worst = max(worst, float(np.sqrt(np.dot(e.weight, np.sum(d * d, axis=1)))))
    return worst


def martingale_representation(xi: RandomVector, start: int = 0) -> RepresentationResult:
    """Represent ``xi`` as ``E(xi | F_start) + sum_j V_j dW_{j+1}``.

    ``residual`` is the largest one-step defect
    ``|M_{j+1} - M_j - V_j dW_{j+1}|`` over all nodes (tree, lattice), or
    its root-mean-square per step on a path ensemble.
    """
    model = xi.model
    b = xi.level
    if not 0 <= start <= b:
        raise ValueError(f"start {start} must lie in 0..{b}")
    M_vals = [model.condition(xi.values, b, i) for i in range(start, b + 1)]
    M = AdaptedProcess(model, M_vals, start)
    if b == start:
        V = AdaptedProcess(model, [np.zeros((model.size(start), xi.dim))], start)
        return RepresentationResult(np.dot(model.probabilities(start), M_vals[0]), V, 0.0, M)
    V = AdaptedProcess(model, [model.covariation(M.at(j + 1), j, M.at(j)) for j in range(start, b)], start)
    residual = _one_step_defects(model, M, V, start, b)
    mean = np.asarray(np.dot(model.probabilities(start), M.at(start)))
    return RepresentationResult(mean, V, residual, M)


@dataclass
class KernelResult:
    kernel: AdaptedKernel
    means: np.ndarray
    conditional: dict = field(repr=False)
    residual: float = 0.0
    norm_ratio: float = float("nan")


def kernel_construction(f: AdaptedProcess, space: SpaceSpec | None = None, start: int = 0,
                        stop: int | None = None) -> KernelResult:
    """Kernel ``k(s_l, sigma_j)``, ``start <= j < l < stop``, of the process ``f``.

    Each slice ``f(s_l)`` is represented relative to ``F_start``:
    ``f(s_l) = E(f(s_l) | F_start) + sum_{j<l} k(s_l, sigma_j) dW_{j+1}``.
    ``conditional[l]`` holds ``E(f(s_l) | F_start)``. When ``space`` is the
    Euclidean space with ``p = 2`` the ratio ``||k|| / ||f||`` of the
    discretised nested and single gamma-norms is also reported.
    """
    model = f.model
    stop = min(f.stop, model.steps) if stop is None else stop
    if start < f.start or stop > f.stop:
        raise ValueError("kernel range is not covered by the process")
    rows, cond, residual = {}, {}, 0.0
    means = np.zeros((stop - start, f.dim))
    for l in range(start, stop):
        rep = martingale_representation(RandomVector(model, l, f.at(l)), start)
        rows[l] = [rep.integrand.at(j) for j in range(start, l)]
        cond[l] = rep.martingale.at(start)
        means[l - start] = np.dot(model.probabilities(start), cond[l])
        residual = max(residual, rep.residual)
    k = AdaptedKernel(model, rows, start, f.dim)
    ratio = float("nan")
    if space is not None and space.is_hilbert and space.moment_exponent == 2.0 and start == 0:
        from .stochastic import gamma_norm_of_process

        fn = gamma_norm_of_process(f, space, start=start, stop=stop).value
        kn = kernel_gamma_norm(k, space)
        ratio = kn / fn if fn > 0 else 0.0
    return KernelResult(k, means, cond, residual, ratio)


def kernel_gamma_norm(k: AdaptedKernel, space: SpaceSpec, samples: int = 64, seed: int = 0) -> float:
    """``||k||_{L^p(Omega; gamma(gamma(X)))}`` with product cells of area ``dt^2``.

    Euclidean: per state the Frobenius norm of ``dt * k``; on the lattice only
    ``p = 2`` (which needs marginals alone). Otherwise a Monte-Carlo estimate
    with independent Gaussian banks on the two time axes.
    """
    model = k.model
    dt, p = model.dt, space.moment_exponent
    if not model.supports_paths:
        if not (space.is_hilbert and p == 2.0):
            raise NotImplementedError("lattice kernel norms are available for l^2 and p = 2 only")
        total = 0.0
        for l, row in k.rows.items():
            for offset, v in enumerate(row):
                total += float(np.dot(model.probabilities(k.start + offset), np.sum(v * v, axis=1)))
        return math.sqrt(total) * dt
    dense = k.terminal_view() * dt  # (omega, s, sigma, d)
    weights = model.probabilities(model.steps)
    if space.is_hilbert:
        per = np.sqrt(np.sum(dense ** 2, axis=(1, 2, 3)))
    else:
        rng = np.random.Generator(np.random.Philox(key=seed))
        n = dense.shape[1]
        g1 = rng.standard_normal((samples, n))
        g2 = rng.standard_normal((samples, n))
        sq = np.empty((dense.shape[0], samples))
        chunk = max(1, (1 << 22) // max(1, samples * n * n * k.dim))
        for a in range(0, dense.shape[0], chunk):
            y = np.einsum("si,sj,wijd->wsd", g1, g2, dense[a:a + chunk])
            sq[a:a + chunk] = space.norm(y) ** 2
        per = np.sqrt(sq.mean(axis=1))
    return float(np.dot(weights, per ** p)) ** (1 / p)

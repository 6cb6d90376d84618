"""Catalog of BSEE drivers ``f(t, omega, u, v)``.

A driver sees the state through ``W(t)`` only, which covers every builtin
(all are Markov in the Brownian motion). Evaluation is batched over the
rows of a level: ``f(t, w, u, v)`` with ``w`` of shape ``(n,)`` and ``u``,
``v`` of shape ``(n, d)`` returns an ``(n, d)`` array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import SpaceSpec
from .stochastic import AdaptedProcess, StochasticModel

DRIVER_KINDS = ("zero", "constant", "time_process", "affine", "nonlinear")
TIME_PROCESSES = ("wiener", "wiener_square")
NONLINEAR = ("sin_u", "tanh_uv")


@dataclass(frozen=True)
class DriverSpec:
    """``kind`` plus parameters.

    * ``constant``: ``f = vector``
    * ``time_process``: ``f = W(t) vector`` (``wiener``) or ``W(t)^2 vector``
      (``wiener_square``)
    * ``affine``: ``f = a u + b v + (c0 + c1 t) vector``
    * ``nonlinear``: ``scale * sin(u)`` (``sin_u``) or
      ``scale * (tanh(u) + tanh(v)) / 2`` (``tanh_uv``), componentwise
    """

    kind: str
    dim: int
    vector: tuple = ()
    name: str = ""
    a: float = 0.0
    b: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    scale: float = 0.0
    lipschitz: float = field(init=False)

    def __post_init__(self):
        if self.kind not in DRIVER_KINDS:
            raise ValueError(f"unknown driver kind {self.kind!r}; choose from {DRIVER_KINDS}")
        vec = tuple(float(x) for x in self.vector) if self.vector else (0.0,) * self.dim
        if len(vec) != self.dim:
            raise ValueError(f"driver vector has length {len(vec)}, expected {self.dim}")
        object.__setattr__(self, "vector", vec)
        if self.kind == "time_process" and self.name not in TIME_PROCESSES:
            raise ValueError(f"time_process name must be one of {TIME_PROCESSES}, got {self.name!r}")
        if self.kind == "nonlinear" and self.name not in NONLINEAR:
            raise ValueError(f"nonlinear name must be one of {NONLINEAR}, got {self.name!r}")
        if self.kind == "nonlinear" and self.scale < 0:
            raise ValueError("scale must be non-negative")
        if self.kind == "affine":
            L = max(abs(self.a), abs(self.b))
        elif self.kind == "nonlinear":
            L = self.scale if self.name == "sin_u" else self.scale / 2
        else:
            L = 0.0
        object.__setattr__(self, "lipschitz", float(L))

    @property
    def depends_on_solution(self) -> bool:
        if self.kind == "affine":
            return self.a != 0.0 or self.b != 0.0
        return self.kind == "nonlinear" and self.scale != 0.0

    def growth(self, horizon: float) -> float:
        """Constant ``C`` with ``||f|| <= C (1 + ||u|| + ||v||)`` on ``[0, horizon]``.

        Norms of ``vector`` are bounded by its ``l^1`` norm, valid in every ``l^q``.
        For the Wiener processes the bound holds on a window ``|W| <= 8 sqrt(T)``.
        """
        v1 = float(np.sum(np.abs(self.vector)))
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return v1
        if self.kind == "time_process":
            r = 8 * math.sqrt(horizon)
            return v1 * (r if self.name == "wiener" else r * r)
        if self.kind == "affine":
            c = max(abs(self.c0), abs(self.c0 + self.c1 * horizon)) * v1
            return max(abs(self.a), abs(self.b), c)
        return self.scale * self.dim

    def __call__(self, t, w, u, v) -> np.ndarray:
        """``t`` is a scalar or one time per row."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        vec = np.asarray(self.vector)
        w = np.asarray(w, dtype=float)
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(u.shape, v.shape))
        if self.kind == "constant":
            return np.broadcast_to(vec, np.broadcast_shapes(u.shape, v.shape)).copy()
        if self.kind == "time_process":
            scal = w if self.name == "wiener" else w * w
            return scal[:, None] * vec + 0.0 * u
        if self.kind == "affine":
            c = self.c0 + self.c1 * np.asarray(t, dtype=float)
            return self.a * u + self.b * v + (c[:, None] if c.ndim else c) * vec
        if self.name == "sin_u":
            return self.scale * np.sin(u) + 0.0 * v
        return 0.5 * self.scale * (np.tanh(u) + np.tanh(v))

    def as_process(self, model: StochasticModel, stop: int | None = None) -> AdaptedProcess:
        """Materialise a driver without ``(u, v)`` dependence on the cells ``0..stop-1``."""
        if self.depends_on_solution:
            raise ValueError(f"driver {self.kind}/{self.name} depends on (U, V)")
        stop = model.steps if stop is None else stop
        vals = []
        for i in range(stop):
            z = np.zeros((model.size(i), self.dim))
            vals.append(self(model.grid.t(i), model.wiener(i), z, z))
        return AdaptedProcess(model, vals)

    def describe(self) -> dict:
        return {"kind": self.kind, "name": self.name, "vector": list(self.vector), "a": self.a, "b": self.b,
                "c0": self.c0, "c1": self.c1, "scale": self.scale, "lipschitz": self.lipschitz}


@dataclass(frozen=True)
class BoundsReport:
    lipschitz_ratio: float
    growth_ratio: float
    samples: int

    @property
    def ok(self) -> bool:
        # slack for rounding in differences of nearby points
        return self.lipschitz_ratio <= 1.0 + 1e-9 and self.growth_ratio <= 1.0 + 1e-9


def check_bounds(driver: DriverSpec, space: SpaceSpec, horizon: float, samples: int = 10_000,
                 seed: int = 0) -> BoundsReport:
    """Largest observed ratios against the declared Lipschitz and growth bounds.

    Sample pairs mix unit-scale, large and nearby points so that both the
    global and the local behaviour are probed.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    d = driver.dim
    t = rng.uniform(0.0, horizon, samples)
    w = rng.standard_normal(samples) * math.sqrt(horizon)
    scales = 10.0 ** rng.uniform(-3, 2, (samples, 1))
    x, y = rng.standard_normal((2, samples, d)) * scales
    near = 10.0 ** rng.uniform(-6, 0, (samples, 1))
    x2 = x + near * rng.standard_normal((samples, d))
    y2 = y + near * rng.standard_normal((samples, d))
    fx = driver(t, w, x, y)
    fx2 = driver(t, w, x2, y2)
    num = space.norm(fx - fx2)
    den = space.norm(x - x2) + space.norm(y - y2)
    if driver.lipschitz > 0:
        lip = float(np.max(num / (driver.lipschitz * den)))
    else:
        lip = 0.0 if np.all(num <= 1e-14 * (1 + den)) else math.inf
    mask = np.abs(w) <= 8 * math.sqrt(horizon)
    gnum = space.norm(fx)[mask]
    gden = 1.0 + space.norm(x) + space.norm(y)
    C = driver.growth(horizon)
    if C > 0:
        grow = float(np.max(gnum / (C * gden[mask])))
    else:
        grow = 0.0 if np.all(gnum == 0) else math.inf
    return BoundsReport(lip, grow, samples)

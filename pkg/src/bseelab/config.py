"""Scenario configuration: strict INI parsing, builtin catalog, closed forms."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .drivers import DRIVER_KINDS, DriverSpec
from .solvers import PicardConfig
from .space import SemigroupOperator, SpaceSpec
from .stochastic import TREE_MAX_DEPTH, RandomVector, StochasticModel, TimeGrid, make_model


class ConfigError(ValueError):
    """Validation failure; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


SCHEMA = {
    "space": ("dim", "norm_exponent", "moment_exponent"),
    "time": ("horizon", "steps"),
    "model": ("kind", "path_count", "seed"),
    "generator": ("kind", "values"),
    "driver": ("kind", "name", "vector", "a", "b", "c0", "c1", "scale"),
    "terminal": ("kind", "vector", "strike"),
    "solver": ("method", "delta", "tol", "max_iter", "guard_threshold", "gamma_budget"),
}
REQUIRED = {"space": ("dim",), "time": ("horizon", "steps"), "model": ("kind",), "generator": ("kind",),
            "driver": ("kind",), "terminal": ("kind",), "solver": ("method",)}
MODEL_KINDS = ("tree", "lattice", "paths")
GENERATOR_KINDS = ("zero", "diag", "rotation", "tridiag_laplacian", "matrix")
TERMINAL_KINDS = ("constant", "wiener_linear", "wiener_square", "call_like")
METHODS = ("a0", "linear", "picard")


@dataclass(frozen=True)
class ScenarioConfig:
    space: SpaceSpec
    horizon: float
    steps: int
    model_kind: str
    generator_kind: str
    driver: DriverSpec
    terminal_kind: str
    method: str
    path_count: int = 10000
    seed: int = 0
    generator_values: tuple = ()
    terminal_vector: tuple = ()
    strike: float = 1.0
    delta: float = 0.25
    tol: float = 1e-8
    max_iter: int = 100
    guard_threshold: float = 0.5
    gamma_budget: int = 200
    name: str = ""
    source: str = field(default="", repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.space.dim

    def generator(self) -> np.ndarray:
        return build_generator(self.generator_kind, self.generator_values, self.dim)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.steps)

    def model(self) -> StochasticModel:
        return make_model(self.model_kind, self.grid(), self.path_count, self.seed)

    def semigroup(self) -> SemigroupOperator:
        return SemigroupOperator(self.generator(), self.horizon, self.steps)

    def terminal(self, model: StochasticModel) -> RandomVector:
        return build_terminal(self.terminal_kind, self.terminal_vector, self.strike, model, self.dim)

    def picard(self) -> PicardConfig:
        return PicardConfig(self.delta, self.tol, self.max_iter, self.guard_threshold, self.gamma_budget, self.seed)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        cfg = replace(self, **kw)
        validate(cfg)
        return cfg

    def canonical_text(self) -> str:
        """Normalised INI text; the config hash is taken over this."""
        d = self.driver
        sections = {
            "space": {"dim": self.dim, "norm_exponent": repr(float(self.space.norm_exponent)),
                      "moment_exponent": repr(float(self.space.moment_exponent))},
            "time": {"horizon": repr(float(self.horizon)), "steps": self.steps},
            "model": {"kind": self.model_kind, "path_count": self.path_count, "seed": self.seed},
            "generator": {"kind": self.generator_kind, "values": _fmt_list(self.generator_values)},
            "driver": {"kind": d.kind, "name": d.name, "vector": _fmt_list(d.vector), "a": repr(d.a),
                       "b": repr(d.b), "c0": repr(d.c0), "c1": repr(d.c1), "scale": repr(d.scale)},
            "terminal": {"kind": self.terminal_kind, "vector": _fmt_list(self.terminal_vector),
                         "strike": repr(float(self.strike))},
            "solver": {"method": self.method, "delta": repr(float(self.delta)), "tol": repr(float(self.tol)),
                       "max_iter": self.max_iter, "guard_threshold": repr(float(self.guard_threshold)),
                       "gamma_budget": self.gamma_budget},
        }
        lines = []
        for sec, kv in sections.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in kv.items()]
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def _fmt_list(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def build_generator(kind: str, values, dim: int) -> np.ndarray:
    values = tuple(float(v) for v in values)
    if kind == "zero":
        return np.zeros((dim, dim))
    if kind == "diag":
        if len(values) == 1:
            values = values * dim
        if len(values) != dim:
            raise ConfigError("generator.values", f"diag needs 1 or {dim} values, got {len(values)}")
        return np.diag(values)
    if kind == "rotation":
        if dim != 2 or len(values) != 1:
            raise ConfigError("generator.values", "rotation needs dim = 2 and one angular speed")
        w = values[0]
        return np.array([[0.0, w], [-w, 0.0]])
    if kind == "tridiag_laplacian":
        kappa = values[0] if values else 1.0
        if len(values) > 1 or kappa < 0:
            raise ConfigError("generator.values", "tridiag_laplacian takes one non-negative diffusivity")
        return kappa * (2 * np.eye(dim) - np.eye(dim, k=1) - np.eye(dim, k=-1))
    if kind == "matrix":
        if len(values) != dim * dim:
            raise ConfigError("generator.values", f"matrix needs {dim * dim} row-major entries, got {len(values)}")
        return np.array(values).reshape(dim, dim)
    raise ConfigError("generator.kind", f"unknown generator {kind!r}; choose from {GENERATOR_KINDS}")


def build_terminal(kind: str, vector, strike: float, model: StochasticModel, dim: int) -> RandomVector:
    x = np.asarray(vector if len(vector) else np.zeros(dim), dtype=float)
    if kind == "constant":
        return RandomVector.constant(model, x)
    if kind == "wiener_linear":
        return RandomVector.from_function(model, lambda t, w: w[:, None] * x)
    if kind == "wiener_square":
        return RandomVector.from_function(model, lambda t, w: (w * w)[:, None] * x)
    if kind == "call_like":
        # geometric Brownian motion with unit volatility, payoff (S_T - K)^+
        return RandomVector.from_function(
            model, lambda t, w: np.maximum(np.exp(w - 0.5 * t) - strike, 0.0)[:, None] * x)
    raise ConfigError("terminal.kind", f"unknown terminal {kind!r}; choose from {TERMINAL_KINDS}")


def _float(section, key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"not a number: {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{section}.{key}", f"must be finite, got {raw!r}")
    return v


def _int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"not an integer: {raw!r}") from None


def _floats(section, key, raw):
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(_float(section, key, part) for part in raw.split(","))


def parse_config(text: str, name: str = "") -> ScenarioConfig:
    """Parse and validate; raises :class:`ConfigError` before any computation."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section; allowed: {', '.join(SCHEMA)}")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", f"unknown key; allowed: {', '.join(SCHEMA[sec])}")

    def g(sec, key, default=None):
        # sections are checked lazily so that errors surface in file order
        if sec not in cp:
            raise ConfigError(sec, "missing section")
        if key not in cp[sec]:
            if key in REQUIRED[sec]:
                raise ConfigError(f"{sec}.{key}", "missing required key")
            return default
        return cp[sec][key]

    dim = _int("space", "dim", g("space", "dim"))
    if dim < 1 or dim > 64:
        raise ConfigError("space.dim", f"must lie in 1..64, got {dim}")
    q = _float("space", "norm_exponent", g("space", "norm_exponent", "2"))
    p = _float("space", "moment_exponent", g("space", "moment_exponent", "2"))
    for key, v in (("norm_exponent", q), ("moment_exponent", p)):
        if not v > 1:
            raise ConfigError(f"space.{key}", f"must lie in (1, inf), got {v:g}")
    space = SpaceSpec(dim, q, p)

    horizon = _float("time", "horizon", g("time", "horizon"))
    steps = _int("time", "steps", g("time", "steps"))

    dkind = g("driver", "kind").strip()
    if dkind not in DRIVER_KINDS:
        raise ConfigError("driver.kind", f"unknown driver {dkind!r}; choose from {DRIVER_KINDS}")
    dvec = _floats("driver", "vector", g("driver", "vector", ""))
    try:
        driver = DriverSpec(dkind, dim, dvec, g("driver", "name", "").strip(),
                            _float("driver", "a", g("driver", "a", "0")), _float("driver", "b", g("driver", "b", "0")),
                            _float("driver", "c0", g("driver", "c0", "0")), _float("driver", "c1", g("driver", "c1", "0")),
                            _float("driver", "scale", g("driver", "scale", "0")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("driver", str(exc)) from None

    cfg = ScenarioConfig(
        space=space, horizon=horizon, steps=steps,
        model_kind=g("model", "kind").strip(),
        path_count=_int("model", "path_count", g("model", "path_count", "10000")),
        seed=_int("model", "seed", g("model", "seed", "0")),
        generator_kind=g("generator", "kind").strip(),
        generator_values=_floats("generator", "values", g("generator", "values", "")),
        driver=driver,
        terminal_kind=g("terminal", "kind").strip(),
        terminal_vector=_floats("terminal", "vector", g("terminal", "vector", "")),
        strike=_float("terminal", "strike", g("terminal", "strike", "1")),
        method=g("solver", "method").strip(),
        delta=_float("solver", "delta", g("solver", "delta", "0.25")),
        tol=_float("solver", "tol", g("solver", "tol", "1e-8")),
        max_iter=_int("solver", "max_iter", g("solver", "max_iter", "100")),
        guard_threshold=_float("solver", "guard_threshold", g("solver", "guard_threshold", "0.5")),
        gamma_budget=_int("solver", "gamma_budget", g("solver", "gamma_budget", "200")),
        name=name, source=text,
    )
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    if not cfg.horizon > 0:
        raise ConfigError("time.horizon", f"must be positive, got {cfg.horizon:g}")
    if cfg.steps < 1:
        raise ConfigError("time.steps", f"must be a positive integer, got {cfg.steps}")
    if cfg.model_kind not in MODEL_KINDS:
        raise ConfigError("model.kind", f"unknown model {cfg.model_kind!r}; choose from {MODEL_KINDS}")
    if cfg.model_kind == "tree" and cfg.steps > TREE_MAX_DEPTH:
        raise ConfigError("time.steps", f"tree depth {cfg.steps} exceeds {TREE_MAX_DEPTH}; use kind = lattice or paths")
    if cfg.path_count < 2 or cfg.path_count > 10 ** 6:
        raise ConfigError("model.path_count", f"must lie in 2..1000000, got {cfg.path_count}")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("model.seed", "must be an unsigned 64-bit integer")
    build_generator(cfg.generator_kind, cfg.generator_values, cfg.dim)
    if cfg.terminal_kind not in TERMINAL_KINDS:
        raise ConfigError("terminal.kind", f"unknown terminal {cfg.terminal_kind!r}; choose from {TERMINAL_KINDS}")
    if cfg.terminal_vector and len(cfg.terminal_vector) != cfg.dim:
        raise ConfigError("terminal.vector", f"needs {cfg.dim} entries, got {len(cfg.terminal_vector)}")
    if cfg.method not in METHODS:
        raise ConfigError("solver.method", f"unknown method {cfg.method!r}; choose from {METHODS}")
    if cfg.method in ("a0", "linear") and cfg.driver.depends_on_solution:
        raise ConfigError("solver.method", f"method {cfg.method} needs a driver independent of (U, V); use picard")
    if cfg.method == "a0" and np.any(cfg.generator()):
        raise ConfigError("solver.method", "method a0 requires generator kind = zero")
    if not cfg.delta > 0 or cfg.delta > cfg.horizon:
        raise ConfigError("solver.delta", f"must lie in (0, horizon], got {cfg.delta:g}")
    if cfg.method == "picard" and cfg.delta < cfg.horizon / cfg.steps * (1 - 1e-9):
        raise ConfigError("solver.delta", f"shorter than the time step {cfg.horizon / cfg.steps:g}")
    if not cfg.tol > 0:
        raise ConfigError("solver.tol", f"must be positive, got {cfg.tol:g}")
    if cfg.max_iter < 1:
        raise ConfigError("solver.max_iter", "must be at least 1")
    if not 0 < cfg.guard_threshold <= 1:
        raise ConfigError("solver.guard_threshold", f"must lie in (0, 1], got {cfg.guard_threshold:g}")
    if cfg.gamma_budget < 1:
        raise ConfigError("solver.gamma_budget", "must be positive")


BUILTINS = {
    "a0_wiener_linear": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 8
[model]
kind = tree
[generator]
kind = zero
[driver]
kind = zero
[terminal]
kind = wiener_linear
vector = 1.0, 0.5
[solver]
method = a0
""",
    "a0_constant_drift": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 8
[model]
kind = tree
[generator]
kind = zero
[driver]
kind = constant
vector = 1.0, -1.0
[terminal]
kind = constant
vector = 0.0, 0.0
[solver]
method = a0
""",
    "linear_flow_rotation": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 8
[model]
kind = tree
[generator]
kind = rotation
values = 1.0
[driver]
kind = zero
[terminal]
kind = wiener_linear
vector = 1.0, 0.0
[solver]
method = linear
""",
    "linear_drift_scalar": """
[space]
dim = 1
[time]
horizon = 1.0
steps = 16
[model]
kind = lattice
[generator]
kind = diag
values = 1.0
[driver]
kind = time_process
name = wiener
vector = 1.0
[terminal]
kind = constant
vector = 0.0
[solver]
method = linear
""",
    "linear_wiener_square": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 8
[model]
kind = tree
[generator]
kind = diag
values = 1.0, 2.0
[driver]
kind = zero
[terminal]
kind = wiener_square
vector = 1.0, 0.0
[solver]
method = linear
""",
    "picard_decay_aU": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 16
[model]
kind = lattice
[generator]
kind = diag
values = 1.0, 2.0
[driver]
kind = affine
a = 0.5
[terminal]
kind = constant
vector = 1.0, 1.0
[solver]
method = picard
delta = 0.2
tol = 1e-8
""",
    "picard_sin_square": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 10
[model]
kind = tree
[generator]
kind = diag
values = 0.5, 1.0
[driver]
kind = nonlinear
name = sin_u
scale = 0.5
[terminal]
kind = wiener_square
vector = 1.0, 0.0
[solver]
method = picard
delta = 0.2
tol = 1e-8
""",
    "picard_tanh_l4": """
[space]
dim = 2
norm_exponent = 4
moment_exponent = 3
[time]
horizon = 1.0
steps = 8
[model]
kind = tree
[generator]
kind = diag
values = 1.0, 0.5
[driver]
kind = nonlinear
name = tanh_uv
scale = 0.4
[terminal]
kind = wiener_linear
vector = 1.0, -1.0
[solver]
method = picard
delta = 0.25
tol = 1e-8
gamma_budget = 50
""",
    "paths_demo": """
[space]
dim = 1
[time]
horizon = 1.0
steps = 8
[model]
kind = paths
path_count = 20000
seed = 7
[generator]
kind = diag
values = 1.0
[driver]
kind = time_process
name = wiener
vector = 1.0
[terminal]
kind = wiener_linear
vector = 1.0
[solver]
method = linear
tol = 0.05
""",
    "zero": """
[space]
dim = 2
[time]
horizon = 1.0
steps = 4
[model]
kind = tree
[generator]
kind = zero
[driver]
kind = zero
[terminal]
kind = constant
vector = 0.0, 0.0
[solver]
method = picard
delta = 0.25
""",
    "call_like": """
[space]
dim = 3
[time]
horizon = 1.0
steps = 10
[model]
kind = tree
[generator]
kind = tridiag_laplacian
values = 0.5
[driver]
kind = zero
[terminal]
kind = call_like
vector = 1.0, 1.0, 1.0
strike = 1.0
[solver]
method = linear
""",
}


def load_config(ref: str) -> ScenarioConfig:
    """``ref`` is a builtin scenario name or a path to an INI file."""
    if ref in BUILTINS:
        return parse_config(BUILTINS[ref], ref)
    path = Path(ref)
    if not path.is_file():
        raise ConfigError("config", f"{ref!r} is neither a builtin scenario ({', '.join(BUILTINS)}) nor a readable file")
    return parse_config(path.read_text(), path.stem)


@dataclass(frozen=True)
class ClosedForm:
    """Continuous solution: ``U(t, w)`` on nodes and ``V(sigma, w)`` on cells."""

    U: Callable
    V: Callable
    description: str


def _phi(A: np.ndarray, tau: float) -> np.ndarray:
    """``int_0^tau exp(-s A) ds`` via the augmented exponential."""
    from scipy.linalg import expm

    d = A.shape[0]
    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = -A
    big[:d, d:] = np.eye(d)
    return expm(tau * big)[:d, d:]


def closed_form(cfg: ScenarioConfig) -> Optional[ClosedForm]:
    """Continuous-time solution for the scenario, when one is known.

    Covered: zero driver with constant / linear / square Wiener terminal,
    constant driver with constant terminal, ``f = W(t) x`` with zero terminal,
    and ``f = a U`` (absorbed into the generator as ``A + a I``).
    """
    from scipy.linalg import expm

    A = cfg.generator()
    T, d = cfg.horizon, cfg.dim
    drv = cfg.driver
    x = np.asarray(cfg.terminal_vector if cfg.terminal_vector else np.zeros(d), dtype=float)
    const = np.zeros(d)
    if drv.kind == "affine" and drv.b == 0.0 and drv.c0 == 0.0 and drv.c1 == 0.0:
        A = A + drv.a * np.eye(d)
    elif drv.kind == "constant":
        const = np.asarray(drv.vector)
    elif drv.kind == "time_process" and drv.name == "wiener":
        if cfg.terminal_kind != "constant" or np.any(x):
            return None
        c = np.asarray(drv.vector)
        return ClosedForm(lambda t, w: -w[:, None] * (_phi(A, T - t) @ c),
                          lambda s, w: -np.tile(_phi(A, T - s) @ c, (len(w), 1)),
                          "U = -W(t) Phi(T-t) x, V = -Phi(T-s) x")
    elif drv.kind != "zero":
        return None
    S = lambda tau: expm(-tau * A)
    drift = lambda t: _phi(A, T - t) @ const
    if cfg.terminal_kind == "constant":
        return ClosedForm(lambda t, w: np.tile(S(T - t) @ x - drift(t), (len(w), 1)),
                          lambda s, w: np.zeros((len(w), d)), "U = S(T-t) x - Phi(T-t) c, V = 0")
    if np.any(const):
        return None
    if cfg.terminal_kind == "wiener_linear":
        return ClosedForm(lambda t, w: w[:, None] * (S(T - t) @ x),
                          lambda s, w: np.tile(S(T - s) @ x, (len(w), 1)), "U = W(t) S(T-t) x, V = S(T-s) x")
    if cfg.terminal_kind == "wiener_square":
        return ClosedForm(lambda t, w: (w * w + T - t)[:, None] * (S(T - t) @ x),
                          lambda s, w: 2 * w[:, None] * (S(T - s) @ x),
                          "U = (W(t)^2 + T - t) S(T-t) x, V = 2 W(s) S(T-s) x")
    return None

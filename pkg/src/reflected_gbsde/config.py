"""Run configuration: an INI file parsed and validated before any solve.

Grammar (every key optional unless noted; unknown sections or keys are
rejected)::

    [problem]
    terminal = put | square | cap | cosine | linear | constant
    terminal_value = 0.0          ; level for terminal = constant
    terminal_shift = 0.0          ; added to the terminal payoff
    generator = zero | put | hlog | lipschitz | constant
    generator_value = 0.0         ; f for generator = constant
    kappa = 1.0                   ; f = -kappa * y for generator = lipschitz
    beta = 3.0                    ; exponent of the hlog modulus
    rate = 0.05
    spot = 100.0
    strike = 100.0
    obstacle = none | put | cap | terminal
    obstacle_shift = 0.0          ; subtracted from the obstacle

    [band]
    sigma_low = 0.5               ; required
    sigma_high = 1.0              ; required

    [lattice]
    horizon = 1.0
    n_steps = 200
    cfl = 0.9
    coverage_factor = 6.0

    [solver]
    method = picard | penalized | lipschitz
    stop_tol = 1e-6
    max_iter = 50
    schedule = 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024
    alpha = 2.0
    uniqueness_tol = 1e-2

    [study]
    kind = penalization | picard | refinement
    steps = 50, 100, 200, 400

    [check]
    suite = all | comma-separated check names | none
    divergence_cases = hlog3:divergent, sqrt2:convergent

Terminal kinds: ``put`` is ``(strike - spot e^x)^+``, ``square`` is
``x^2``, ``cap`` is ``(1 - x^2)^+``, ``cosine`` is ``cos x``.  Obstacle
kinds: ``put`` is the put intrinsic value, ``cap`` is ``1 - x^2``,
``terminal`` repeats the terminal payoff.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .checks import DEFAULT_DIVERGENCE_CASES, suite_names
from .errors import PreconditionError
from .gexpect import Lattice, VolBand
from .moduli import GeneratorSpec, make_modulus
from .rgbsde import DEFAULT_SCHEDULE, Obstacle
from .scenarios import put_generator

__all__ = ["RunConfig", "load_config", "parse_config", "build_problem", "Problem"]

TERMINALS = ("put", "square", "cap", "cosine", "linear", "constant")
GENERATORS = ("zero", "put", "hlog", "lipschitz", "constant")
OBSTACLES = ("none", "put", "cap", "terminal")
METHODS = ("picard", "penalized", "lipschitz")
STUDIES = ("penalization", "picard", "refinement")

_SCHEMA = {
    "problem": {
        "terminal": str,
        "terminal_value": float,
        "terminal_shift": float,
        "generator": str,
        "generator_value": float,
        "kappa": float,
        "beta": float,
        "rate": float,
        "spot": float,
        "strike": float,
        "obstacle": str,
        "obstacle_shift": float,
    },
    "band": {"sigma_low": float, "sigma_high": float},
    "lattice": {"horizon": float, "n_steps": int, "cfl": float, "coverage_factor": float},
    "solver": {
        "method": str,
        "stop_tol": float,
        "max_iter": int,
        "schedule": "ints",
        "alpha": float,
        "uniqueness_tol": float,
    },
    "study": {"kind": str, "steps": "ints"},
    "check": {"suite": str, "divergence_cases": str},
}


@dataclass
class RunConfig:
    terminal: str = "square"
    terminal_value: float = 0.0
    terminal_shift: float = 0.0
    generator: str = "zero"
    generator_value: float = 0.0
    kappa: float = 1.0
    beta: float = 3.0
    rate: float = 0.05
    spot: float = 100.0
    strike: float = 100.0
    obstacle: str = "none"
    obstacle_shift: float = 0.0
    sigma_low: float | None = None
    sigma_high: float | None = None
    horizon: float = 1.0
    n_steps: int = 200
    cfl: float = 0.9
    coverage_factor: float = 6.0
    method: str = "picard"
    stop_tol: float = 1e-6
    max_iter: int = 50
    schedule: tuple = DEFAULT_SCHEDULE
    alpha: float = 2.0
    uniqueness_tol: float = 1e-2
    kind: str = "penalization"
    steps: tuple = (50, 100, 200, 400)
    suite: str = "all"
    divergence_cases: str = ",".join(f"{a}:{b}" for a, b in DEFAULT_DIVERGENCE_CASES)
    sections: set = field(default_factory=set)

    @property
    def band(self) -> VolBand:
        return VolBand(self.sigma_low, self.sigma_high)

    @property
    def lattice(self) -> Lattice:
        return Lattice.for_band(self.band, self.horizon, self.n_steps, self.cfl, self.coverage_factor)

    def lattice_for(self, n_steps: int) -> Lattice:
        return Lattice.for_band(self.band, self.horizon, n_steps, self.cfl, self.coverage_factor)

    def check_names(self):
        text = self.suite.strip()
        if text == "all":
            return suite_names()
        if text in ("", "none"):
            return []
        return [s.strip() for s in text.split(",") if s.strip()]

    def divergence_list(self):
        out = []
        for item in self.divergence_cases.split(","):
            item = item.strip()
            if not item:
                continue
            label, sep, expected = item.partition(":")
            if not sep:
                raise PreconditionError(f"divergence case {item!r} must read label:expected")
            out.append((label.strip(), expected.strip()))
        return out


def _ints(text, key):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise PreconditionError(f"{key} must be a comma-separated list of integers") from exc
    if not vals:
        raise PreconditionError(f"{key} is empty")
    return vals


def parse_config(text: str) -> RunConfig:
    """Parse and validate INI text; raises :class:`PreconditionError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise PreconditionError(f"malformed config: {exc}") from exc
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise PreconditionError(f"unknown config section [{section}]")
        cfg.sections.add(section)
        for key, raw in parser.items(section):
            kind = _SCHEMA[section].get(key)
            if kind is None:
                raise PreconditionError(f"unknown key {key!r} in [{section}]")
            raw = raw.strip()
            try:
                value = _ints(raw, key) if kind == "ints" else kind(raw)
            except ValueError as exc:
                raise PreconditionError(f"bad value for {section}.{key}: {raw!r}") from exc
            setattr(cfg, key, value)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise PreconditionError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _choice(value, allowed, key):
    if value not in allowed:
        raise PreconditionError(f"{key} must be one of {', '.join(allowed)}; got {value!r}")


def _validate(cfg: RunConfig) -> None:
    if cfg.sigma_low is None or cfg.sigma_high is None:
        raise PreconditionError("[band] needs sigma_low and sigma_high")
    cfg.band  # raises on a bad band
    _choice(cfg.terminal, TERMINALS, "terminal")
    _choice(cfg.generator, GENERATORS, "generator")
    _choice(cfg.obstacle, OBSTACLES, "obstacle")
    _choice(cfg.method, METHODS, "method")
    _choice(cfg.kind, STUDIES, "kind")
    if not cfg.horizon > 0 or cfg.n_steps < 1:
        raise PreconditionError("lattice needs horizon > 0 and n_steps >= 1")
    if not 0 < cfg.cfl <= 1 or not cfg.coverage_factor > 0:
        raise PreconditionError("lattice needs 0 < cfl <= 1 and coverage_factor > 0")
    if not cfg.stop_tol > 0 or cfg.max_iter < 1:
        raise PreconditionError("solver needs stop_tol > 0 and max_iter >= 1")
    if not cfg.uniqueness_tol > 0:
        raise PreconditionError("uniqueness_tol must be positive")
    if cfg.alpha < 2:
        raise PreconditionError("alpha must be >= 2")
    if any(r <= 0 for r in cfg.schedule) or any(b <= a for a, b in zip(cfg.schedule, cfg.schedule[1:])):
        raise PreconditionError("schedule must be positive and strictly increasing")
    if any(s < 1 for s in cfg.steps):
        raise PreconditionError("study steps must be positive")
    if cfg.rate < 0 or not cfg.spot > 0 or not cfg.strike > 0:
        raise PreconditionError("need rate >= 0, spot > 0 and strike > 0")
    if cfg.generator == "hlog" and not cfg.beta > 2:
        raise PreconditionError("hlog generator needs beta > 2")
    if cfg.generator == "lipschitz" and not cfg.kappa > 0:
        raise PreconditionError("lipschitz generator needs kappa > 0")
    unknown = [n for n in cfg.check_names() if n not in suite_names()]
    if unknown:
        raise PreconditionError(f"unknown checks in suite: {unknown}")
    for _, expected in cfg.divergence_list():
        _choice(expected, ("divergent", "convergent"), "divergence case expectation")


@dataclass(frozen=True)
class Problem:
    spec: GeneratorSpec
    xi: object
    obstacle: Obstacle
    band: VolBand

    @property
    def is_put(self):
        return self.spec.label.startswith("put")


def _terminal(cfg):
    shift = cfg.terminal_shift
    spot, strike = cfg.spot, cfg.strike
    base = {
        "put": lambda x: np.maximum(strike - spot * np.exp(x), 0.0),
        "square": lambda x: x**2,
        "cap": lambda x: np.maximum(1.0 - x**2, 0.0),
        "cosine": np.cos,
        "linear": lambda x: x,
        "constant": lambda x: np.full(np.shape(x), cfg.terminal_value),
    }[cfg.terminal]
    return lambda x: base(x) + shift


def _generator(cfg):
    if cfg.generator == "put":
        return put_generator(cfg.rate)
    if cfg.generator == "hlog":
        rho = make_modulus("hlog", beta=cfg.beta)
        return GeneratorSpec(lambda t, x, y, z: rho(np.abs(y)), rho, label=f"rho(|y|), {rho.label}")
    if cfg.generator == "lipschitz":
        k = cfg.kappa
        return GeneratorSpec(lambda t, x, y, z: -k * y, make_modulus("lipschitz", L=k), label=f"-{k:g} y")
    value = cfg.generator_value if cfg.generator == "constant" else 0.0
    return GeneratorSpec(
        lambda t, x, y, z: np.full(np.shape(x), value),
        make_modulus("lipschitz", L=1.0),
        label=f"f = {value:g}",
    )


def _obstacle(cfg, xi):
    s = cfg.obstacle_shift
    spot, strike = cfg.spot, cfg.strike
    if cfg.obstacle == "none":
        return Obstacle.inactive()
    if cfg.obstacle == "put":
        return Obstacle(lambda t, x: np.maximum(strike - spot * np.exp(x), 0.0) - s, label="put intrinsic")
    if cfg.obstacle == "cap":
        return Obstacle(lambda t, x: 1.0 - x**2 - s, label="1 - x^2")
    return Obstacle(lambda t, x: xi(x) - s, label="terminal")


def build_problem(cfg: RunConfig) -> Problem:
    xi = _terminal(cfg)
    return Problem(_generator(cfg), xi, _obstacle(cfg, xi), cfg.band)

"""Concave moduli of continuity and the inequality toolkit built on them.

A modulus ``rho`` is continuous, nondecreasing and concave on ``[0, inf)``
with ``rho(0) = 0`` and ``rho(u) > 0`` for ``u > 0``.  Generators are
checked against the growth bound

    |f(t,x,y,z) - f(t,x,y',z')| + |g(...) - g(...)| <= rho(|y-y'|) + L|z-z'|,

and the Osgood-type integral ``int_{0+} du / rho**beta(u**(1/beta))`` is
classified numerically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import BlowUpError, InternalInconsistency, PreconditionError

__all__ = [
    "MaoModulus",
    "GeneratorSpec",
    "DivergenceReport",
    "ConditionReport",
    "make_modulus",
    "concave_transform",
    "affine_envelope",
    "divergence_check",
    "bihari_majorant",
    "sample_cloud",
    "check_H1",
    "check_H1prime",
]

# Divergence classifier thresholds (increments are normalised by the first one).
INCREMENT_FLOOR = 0.25
TAIL_FACTOR = 1e-3
EPSILONS = tuple(10.0 ** (-2 * k) for k in range(1, 7))

_SAMPLE_GRID = np.geomspace(1e-8, 1e3, 1000)


def _as_array(u):
    return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class MaoModulus:
    """A concave modulus ``rho`` with the exponent ``beta`` it is declared for.

    Instances are callable and vectorised; negative arguments are clipped
    to zero.
    """

    evaluator: Callable
    label: str
    beta: float = 3.0
    params: dict = field(default_factory=dict)

    def __call__(self, u):
        u = np.maximum(_as_array(u), 0.0)
        out = np.asarray(self.evaluator(u), dtype=float)
        return out if out.ndim else float(out)

    def violations(self, concavity: bool = True, grid=_SAMPLE_GRID, rtol: float = 1e-9) -> list[str]:
        """Names of the sampled modulus properties that fail on ``grid``."""
        bad = []
        at0 = float(self(0.0))
        if abs(at0) > 1e-12:
            bad.append(f"rho(0) = {at0} != 0")
        vals = _as_array(self(grid))
        if not np.all(np.isfinite(vals)):
            bad.append("rho is not finite on the sample grid")
            return bad
        if np.any(vals <= 0):
            bad.append("rho(u) > 0 fails for some sampled u > 0")
        if np.any(np.diff(vals) < -rtol * (1.0 + np.abs(vals[1:]))):
            bad.append("rho is not nondecreasing on the sample grid")
        if concavity:
            # midpoints of neighbours, of every 7th and every 97th pair, and against 0
            for step in (1, 7, 97):
                u, v = grid[:-step], grid[step:]
                mid = _as_array(self(0.5 * (u + v)))
                chord = 0.5 * (vals[:-step] + vals[step:])
                if np.any(mid < chord - rtol * (1.0 + np.abs(chord))):
                    bad.append("midpoint concavity fails on the sample grid")
                    break
            else:
                mid0 = _as_array(self(0.5 * grid))
                if np.any(mid0 < 0.5 * vals - rtol * (1.0 + vals)):
                    bad.append("midpoint concavity fails against the origin")
        return bad

    def validate(self, concavity: bool = True) -> "MaoModulus":
        bad = self.violations(concavity)
        if bad:
            raise PreconditionError(f"modulus {self.label!r} invalid: " + "; ".join(bad))
        return self


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator pair ``(f, g)`` with its declared continuity data.

    ``f`` and ``g`` take ``(t, x, y, z)`` and must broadcast over numpy
    arrays; ``g`` multiplies ``d<B>``.
    """

    f: Callable
    modulus: MaoModulus
    z_lipschitz: float = 0.0
    g: Callable | None = None
    label: str = "generator"

    def __post_init__(self):
        if self.z_lipschitz < 0:
            raise PreconditionError("z-Lipschitz constant must be >= 0")
        if self.g is None:
            object.__setattr__(self, "g", _zero)

    @property
    def is_lipschitz(self) -> bool:
        return self.modulus.params.get("kind") == "lipschitz"


def _zero(t, x, y, z):
    return np.zeros(np.broadcast(_as_array(x), _as_array(y), _as_array(z)).shape)


def _hlog(beta: float, u0: float):
    # rho(u) = u (e + ln(1/u))**(1/beta) on (0, u0], tangent line beyond u0
    q = 1.0 / beta
    log0 = math.log(1.0 / u0)
    rho0 = u0 * (math.e + log0) ** q
    slope0 = (math.e + log0) ** (q - 1.0) * (math.e + log0 - q)

    def rho(u):
        u = _as_array(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            # -log(u), not log(1/u): 1/u overflows for subnormal u
            inner = u * (math.e - np.log(u)) ** q
        inner = np.where(u > 0, inner, 0.0)
        return np.where(u <= u0, inner, rho0 + slope0 * (u - u0))

    return rho


def make_modulus(kind: str, **params) -> MaoModulus:
    """Construct and validate a modulus.

    Parameters
    ----------
    kind : {"lipschitz", "hlog", "custom"}
        ``lipschitz(L)``: ``rho(u) = L u``.
        ``hlog(beta, u0=1)``: ``rho(u) = u (e + ln(1/u))**(1/beta)`` up to
        ``u0``, continued by its tangent.  Non-Lipschitz at 0, yet
        ``rho**beta(u**(1/beta))`` behaves like ``u ln(1/u)``, so the
        Osgood integral diverges.
        ``custom(evaluator, beta=3, label=...)``: any vectorised callable.
    """
    if kind == "lipschitz":
        L = float(params.pop("L", params.pop("constant", 1.0)))
        if not L > 0:
            raise PreconditionError("lipschitz modulus needs L > 0")
        beta = float(params.pop("beta", 3.0))
        _reject_extra(kind, params)
        mod = MaoModulus(lambda u: L * _as_array(u), f"lipschitz({L:g})", beta, {"kind": kind, "L": L})
    elif kind == "hlog":
        beta = float(params.pop("beta", 3.0))
        u0 = float(params.pop("u0", 1.0))
        _reject_extra(kind, params)
        if not beta > 2:
            raise PreconditionError(f"hlog modulus needs beta > 2, got {beta}")
        if not 0 < u0 < math.exp(math.e - 1.0 / beta):
            raise PreconditionError("hlog cap point u0 must lie where rho is increasing")
        mod = MaoModulus(_hlog(beta, u0), f"hlog({beta:g})", beta, {"kind": kind, "beta": beta, "u0": u0})
    elif kind == "custom":
        evaluator = params.pop("evaluator")
        beta = float(params.pop("beta", 3.0))
        label = str(params.pop("label", "custom"))
        mod = MaoModulus(evaluator, label, beta, {"kind": kind, **params})
    else:
        raise PreconditionError(f"unknown modulus kind {kind!r}")
    return mod.validate()


def _reject_extra(kind, params):
    if params:
        raise PreconditionError(f"unexpected parameters for {kind}: {sorted(params)}")


def concave_transform(rho: MaoModulus, r: float) -> MaoModulus:
    """The modulus ``x -> rho(x**(1/r))**r``.

    For ``r > 1`` the result is again concave and is validated as such.
    For ``0 < r < 1`` concavity may fail, so only monotonicity and
    positivity are checked; what survives is divergence of the Osgood
    integral (see :func:`divergence_check` with ``beta=1``).
    The declared exponent becomes ``rho.beta / r`` so that the Osgood
    integral of the result is the one of ``rho``.
    """
    if not r > 0:
        raise PreconditionError(f"transform exponent must be > 0, got {r}")

    def evaluator(x):
        return np.asarray(rho(_as_array(x) ** (1.0 / r)), dtype=float) ** r

    out = MaoModulus(evaluator, f"{rho.label}^[{r:g}]", rho.beta / r, {"kind": "transform", "r": r})
    return out.validate(concavity=r > 1)


def affine_envelope(rho: MaoModulus):
    """Constants ``(a, b) = (rho(1), rho(1))`` with ``rho(u) <= a + b u``.

    Concavity and ``rho(0) = 0`` make ``rho(u)/u`` nonincreasing, hence
    ``rho(u) <= rho(1)`` below 1 and ``rho(u) <= rho(1) u`` above.  The
    bound is re-verified on a log grid over ``[1e-8, 1e4]``.
    """
    a = b = float(rho(1.0))
    grid = np.geomspace(1e-8, 1e4, 2000)
    vals = _as_array(rho(grid))
    excess = vals - (a + b * grid)
    if np.any(excess > 1e-9 * (1.0 + a + b * grid)):
        worst = grid[int(np.argmax(excess))]
        raise InternalInconsistency(
            f"modulus {rho.label!r} exceeds its affine envelope at u={worst:.3g}; it is not concave"
        )
    return a, b


@dataclass(frozen=True)
class DivergenceReport:
    classification: str
    evidence: dict

    @property
    def divergent(self) -> bool:
        return self.classification == "divergent"


def divergence_check(rho: MaoModulus, beta: float) -> DivergenceReport:
    """Heuristic classification of ``int_{0+} du / rho**beta(u**(1/beta))``.

    ``I(eps) = int_eps^1`` is evaluated by adaptive quadrature in ``log u``
    for ``eps = 1e-2, 1e-4, ..., 1e-12``.  Each increment ``I(eps/100) -
    I(eps)`` is divided by the first one.  Divergent when every normalised
    increment stays above :data:`INCREMENT_FLOOR`; convergent when the last
    one falls below ``INCREMENT_FLOOR * TAIL_FACTOR`` and the increments
    shrink monotonically over the tail; inconclusive otherwise.  Only
    decay rate is used, so rescaling ``rho`` never changes the verdict.
    """
    if not beta > 0:
        raise PreconditionError("beta must be positive")

    def integrand_log(s):
        # substitution u = exp(s): du / h(u) = exp(s) ds / h(exp(s))
        u = math.exp(s)
        h = float(rho(u ** (1.0 / beta))) ** beta
        return u / h

    bounds = (1.0,) + EPSILONS
    pieces = []
    diagnostics = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for hi, lo in zip(bounds[:-1], bounds[1:]):
            try:
                val, err = integrate.quad(integrand_log, math.log(lo), math.log(hi), limit=200)
            except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError, ValueError) as exc:
                diagnostics.append(f"quadrature on [{lo:g}, {hi:g}] failed: {exc}")
                break
            if not math.isfinite(val):
                diagnostics.append(f"non-finite integral on [{lo:g}, {hi:g}]")
                break
            pieces.append(val)

    evidence = {
        "epsilons": list(EPSILONS),
        "increment_floor": INCREMENT_FLOOR,
        "tail_factor": TAIL_FACTOR,
        "beta": beta,
    }
    if diagnostics:
        evidence["diagnostic"] = "; ".join(diagnostics)
        return DivergenceReport("inconclusive", evidence)

    partial = np.cumsum(pieces)
    increments = np.asarray(pieces[1:])
    evidence["integrals"] = partial.tolist()
    evidence["increments"] = increments.tolist()
    first = increments[0]
    if not first > 0:
        evidence["diagnostic"] = "first increment is not positive"
        return DivergenceReport("inconclusive", evidence)
    normalised = increments / first
    evidence["normalised_increments"] = normalised.tolist()
    if np.all(normalised >= INCREMENT_FLOOR):
        return DivergenceReport("divergent", evidence)
    shrinking = bool(np.all(np.diff(increments[-3:]) < 0))
    if normalised[-1] < INCREMENT_FLOOR * TAIL_FACTOR and shrinking:
        return DivergenceReport("convergent", evidence)
    return DivergenceReport("inconclusive", evidence)


def bihari_majorant(h: Callable, u0: float, C: float, T: float, n_grid: int = 1000, guard: float = 1e12):
    """Grid solution of ``w(t) = u0 + C int_t^T h(w(s)) ds``.

    Integrated backward from ``t = T`` with classical RK4 on ``n_grid``
    equal steps.  Returns ``w`` sampled on ``np.linspace(0, T, n_grid+1)``.
    Any continuous ``u`` with ``u(t) <= u0 + C int_t^T h(u)`` lies below
    ``w``; with ``u0 = 0`` and ``h(0) = 0`` the majorant is identically 0.

    Raises
    ------
    BlowUpError
        If ``w`` exceeds ``guard``; the error carries the time reached.
    """
    if u0 < 0 or C < 0 or not T > 0 or n_grid < 1:
        raise PreconditionError("bihari_majorant needs u0 >= 0, C >= 0, T > 0, n_grid >= 1")
    step = T / n_grid
    w = np.empty(n_grid + 1)
    w[-1] = u0

    def rate(v):
        return C * float(h(v))

    for i in range(n_grid, 0, -1):
        v = w[i]
        k1 = rate(v)
        k2 = rate(v + 0.5 * step * k1)
        k3 = rate(v + 0.5 * step * k2)
        k4 = rate(v + step * k3)
        w[i - 1] = v + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not (math.isfinite(w[i - 1]) and w[i - 1] <= guard):
            t_hit = (i - 1) * step
            raise BlowUpError(f"Bihari majorant blew up (> {guard:g}) at t={t_hit:.6g}", t_hit)
    return w


@dataclass(frozen=True)
class ConditionReport:
    max_violation: float
    passed: bool
    n_samples: int


def sample_cloud(
    n: int = 1024,
    T: float = 1.0,
    x_range: float = 5.0,
    y_range: float = 10.0,
    z_range: float = 10.0,
    seed: int = 7,
) -> dict:
    """Scrambled-Sobol cloud of ``(t, x, y, z, y', z')`` tuples (deterministic)."""
    pts = qmc.Sobol(d=6, scramble=True, seed=seed).random(n)
    lo = np.array([0.0, -x_range, -y_range, -z_range, -y_range, -z_range])
    hi = np.array([T, x_range, y_range, z_range, y_range, z_range])
    pts = qmc.scale(pts, lo, hi)
    # half the pairs are pulled close together to probe behaviour near 0
    close = np.arange(n) % 2 == 1
    gap = 10.0 ** (-8.0 * pts[close, 0] / T)
    pts[close, 4] = pts[close, 2] + gap * np.sign(pts[close, 4])
    pts[close, 5] = pts[close, 3] + gap * np.sign(pts[close, 5])
    return dict(zip(("t", "x", "y", "z", "y2", "z2"), pts.T))


def _differences(spec: GeneratorSpec, cloud: dict):
    t, x, y, z, y2, z2 = (cloud[k] for k in ("t", "x", "y", "z", "y2", "z2"))
    df = np.abs(_as_array(spec.f(t, x, y, z)) - _as_array(spec.f(t, x, y2, z2)))
    dg = np.abs(_as_array(spec.g(t, x, y, z)) - _as_array(spec.g(t, x, y2, z2)))
    return df, dg, np.abs(y - y2), np.abs(z - z2)


def check_H1(spec: GeneratorSpec, cloud: dict | None = None, tol: float = 1e-9) -> ConditionReport:
    """Sampled check of ``|df| + |dg| <= rho(|dy|) + L |dz|``."""
    cloud = sample_cloud() if cloud is None else cloud
    df, dg, dy, dz = _differences(spec, cloud)
    excess = df + dg - (_as_array(spec.modulus(dy)) + spec.z_lipschitz * dz)
    worst = float(np.max(excess))
    return ConditionReport(worst, worst <= tol, int(excess.size))


def check_H1prime(
    spec: GeneratorSpec, mu: MaoModulus, beta: float, cloud: dict | None = None, tol: float = 1e-9
) -> ConditionReport:
    """Sampled check of ``|df|**b + |dg|**b <= mu(|dy|**b) + L |dz|**b``."""
    cloud = sample_cloud() if cloud is None else cloud
    df, dg, dy, dz = _differences(spec, cloud)
    excess = df**beta + dg**beta - (_as_array(mu(dy**beta)) + spec.z_lipschitz * dz**beta)
    worst = float(np.max(excess))
    return ConditionReport(worst, worst <= tol, int(excess.size))

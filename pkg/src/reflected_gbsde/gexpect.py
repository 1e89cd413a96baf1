"""Sublinear (G-)expectations of Markovian functionals on a space-time lattice.

The conditional G-expectation of ``phi(B_T)`` is the solution of the
G-heat equation ``u_t + G(u_xx) = 0`` with ``u(T, .) = phi``, where

    G(a) = 0.5 * (sigma_high**2 * max(a, 0) - sigma_low**2 * max(-a, 0)).

It is approximated here by an explicit monotone trinomial scheme.  A single
backward step is the supremum over the two band endpoints of a linear
trinomial average, because the one-step value is affine in the variance.
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalFailure, PreconditionError, RefusalError

__all__ = [
    "VolBand",
    "Lattice",
    "InequalityReport",
    "BDGReport",
    "g_value",
    "step_backward",
    "solve_g_heat",
    "g_expectation",
    "brute_force_expectation",
    "running_functional_expectation",
    "doob_series_constant",
    "is_midpoint_concave",
    "jensen_check",
    "doob_check",
    "bdg_check",
]

# Relative slack on the CFL inequality so that dx = sigma * sqrt(dt) passes.
_CFL_SLACK = 1e-12


@dataclass(frozen=True)
class VolBand:
    """Volatility uncertainty interval ``[sigma_low, sigma_high]``."""

    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        lo, hi = float(self.sigma_low), float(self.sigma_high)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise PreconditionError("volatility band must be finite")
        if not 0.0 < lo <= hi:
            raise PreconditionError(
                f"volatility band needs 0 < sigma_low <= sigma_high, got ({lo}, {hi})"
            )
        object.__setattr__(self, "sigma_low", lo)
        object.__setattr__(self, "sigma_high", hi)

    @property
    def var_low(self) -> float:
        return self.sigma_low**2

    @property
    def var_high(self) -> float:
        return self.sigma_high**2

    @property
    def collapsed(self) -> bool:
        return self.sigma_low == self.sigma_high


@dataclass(frozen=True)
class Lattice:
    """Uniform grid on ``[0, T] x [-half_width*dx, half_width*dx]``.

    Parameters
    ----------
    horizon : float
        Terminal time ``T``.
    n_steps : int
        Number of time steps; ``dt = T / n_steps``.
    dx : float
        Space step.
    half_width : int
        Nodes on each side of the origin; the grid has ``2*half_width + 1``
        nodes.
    sigma_max : float
        Largest volatility the grid is built for.  The CFL inequality
        ``sigma_max**2 * dt <= dx**2`` is checked here, once.
    coverage_factor : float
        Domain truncation rule ``half_width*dx >= coverage_factor*sigma_max*sqrt(T)``.
        Pass 0 to disable (tiny hand-built grids).
    """

    horizon: float
    n_steps: int
    dx: float
    half_width: int
    sigma_max: float
    coverage_factor: float = 6.0

    def __post_init__(self):
        if self.n_steps < 1 or not self.horizon > 0:
            raise PreconditionError("lattice needs horizon > 0 and n_steps >= 1")
        if self.half_width < 1 or not self.dx > 0:
            raise PreconditionError("lattice needs dx > 0 and half_width >= 1")
        if self.sigma_max**2 * self.dt > self.dx**2 * (1.0 + _CFL_SLACK):
            raise NumericalFailure(
                "CFL violated: sigma_high**2 * dt <= dx**2 fails "
                f"({self.sigma_max**2 * self.dt:.6g} > {self.dx**2:.6g})"
            )
        reach = self.coverage_factor * self.sigma_max * math.sqrt(self.horizon)
        if self.half_width * self.dx < reach * (1.0 - 1e-12):
            raise PreconditionError(
                "domain too narrow: half_width * dx >= coverage_factor * sigma_high * sqrt(T) "
                f"fails ({self.half_width * self.dx:.6g} < {reach:.6g})"
            )

    @classmethod
    def for_band(
        cls,
        band: VolBand,
        horizon: float,
        n_steps: int,
        cfl: float = 0.9,
        coverage_factor: float = 6.0,
        min_half_width: int = 1,
    ) -> "Lattice":
        """Build the grid with ``sigma_high**2 dt / dx**2 = cfl``.

        ``cfl`` below one keeps a strictly positive centre weight, which
        leaves room for zeroth-order generator terms without losing
        monotonicity.
        """
        if not 0 < cfl <= 1:
            raise PreconditionError(f"cfl ratio must lie in (0, 1], got {cfl}")
        dt = horizon / n_steps
        dx = band.sigma_high * math.sqrt(dt / cfl)
        half_width = math.ceil(coverage_factor * band.sigma_high * math.sqrt(horizon) / dx - 1e-9)
        return cls(
            horizon=float(horizon),
            n_steps=int(n_steps),
            dx=dx,
            half_width=max(int(half_width), int(min_half_width)),
            sigma_max=band.sigma_high,
            coverage_factor=coverage_factor,
        )

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_nodes(self) -> int:
        return 2 * self.half_width + 1

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(-self.half_width, self.half_width + 1, dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1, dtype=float)

    @property
    def origin(self) -> int:
        return self.half_width

    def check_band(self, band: VolBand) -> None:
        """Raise :class:`NumericalFailure` if ``band`` breaks the CFL bound."""
        if band.var_high * self.dt > self.dx**2 * (1.0 + _CFL_SLACK):
            raise NumericalFailure(
                "CFL violated: sigma_high**2 * dt <= dx**2 fails for band "
                f"({band.sigma_low}, {band.sigma_high}) on dx={self.dx:.6g}, dt={self.dt:.6g}"
            )

    def same_grid(self, other: "Lattice") -> bool:
        return (
            self.n_steps == other.n_steps
            and self.half_width == other.half_width
            and self.dx == other.dx
            and self.horizon == other.horizon
        )


@dataclass(frozen=True)
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BDGReport:
    value: float
    lower: float
    upper: float
    passed: bool


def g_value(a, band: VolBand):
    """``G(a) = 0.5*(sigma_high**2 a^+ - sigma_low**2 a^-)``; works on arrays."""
    a = np.asarray(a, dtype=float)
    out = 0.5 * (band.var_high * np.maximum(a, 0.0) - band.var_low * np.maximum(-a, 0.0))
    return out if out.ndim else float(out)


def maximizing_variance(a, band: VolBand) -> np.ndarray:
    """Variance attaining ``sup_v v*a`` over the band; ties go to ``sigma_high**2``."""
    return np.where(np.asarray(a) >= 0.0, band.var_high, band.var_low)


def second_difference(u: np.ndarray, dx: float) -> np.ndarray:
    """Central second difference on interior nodes, scaled by ``1/dx**2``."""
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)


def extrapolate_edges(v: np.ndarray) -> None:
    """Overwrite both end nodes by linear extrapolation of their neighbours."""
    v[0] = 2.0 * v[1] - v[2]
    v[-1] = 2.0 * v[-2] - v[-3]


def _check_slice(values, lattice: Lattice, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (lattice.n_nodes,):
        raise PreconditionError(
            f"{what} has shape {values.shape}, lattice expects ({lattice.n_nodes},)"
        )
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalFailure(f"{what} is not finite at space index {int(bad[0])}")
    return values


def step_backward(next_values, band: VolBand, lattice: Lattice):
    """One explicit step of the G-heat equation.

    Returns
    -------
    values : ndarray
        ``next + dt * G(second difference of next)`` on interior nodes,
        linearly extrapolated at the two end nodes.
    policy : ndarray
        Maximizing variance per node (``sigma_high**2`` where the second
        difference vanishes, including the end nodes).
    """
    lattice.check_band(band)
    nxt = _check_slice(next_values, lattice, "slice")
    out = np.empty_like(nxt)
    d2 = second_difference(nxt, lattice.dx)
    out[1:-1] = nxt[1:-1] + lattice.dt * g_value(d2, band)
    extrapolate_edges(out)
    policy = np.full(nxt.shape, band.var_high)
    policy[1:-1] = maximizing_variance(d2, band)
    return out, policy


def solve_g_heat(terminal_values, band: VolBand, lattice: Lattice):
    """Backward induction from ``terminal_values`` over the whole lattice.

    Returns ``(surface, policy)`` with shapes ``(n_steps+1, n_nodes)`` and
    ``(n_steps, n_nodes)``; ``surface[k]`` is the conditional G-expectation
    at time ``t_k``.
    """
    lattice.check_band(band)
    term = _check_slice(terminal_values, lattice, "terminal payoff")
    n = lattice.n_steps
    surface = np.empty((n + 1, lattice.n_nodes))
    policy = np.empty((n, lattice.n_nodes))
    surface[n] = term
    for k in range(n - 1, -1, -1):
        surface[k], policy[k] = step_backward(surface[k + 1], band, lattice)
    return surface, policy


def _terminal(payoff: Callable, lattice: Lattice) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(payoff(lattice.x), dtype=float), (lattice.n_nodes,))
    return _check_slice(vals.copy(), lattice, "terminal payoff")


def g_expectation(payoff: Callable, band: VolBand, lattice: Lattice) -> float:
    """``E^G[payoff(B_T)]`` read off the origin of the lattice solution."""
    surface, _ = solve_g_heat(_terminal(payoff, lattice), band, lattice)
    return float(surface[0, lattice.origin])


def brute_force_expectation(payoff: Callable, band: VolBand, lattice: Lattice) -> float:
    """Exhaustive supremum over per-node volatility choices on the trinomial tree.

    Plain recursion with no memo and no array code.  Because choices at
    different nodes are independent, maximising locally at each node gives
    the supremum over every assignment.  Matches :func:`g_expectation` when
    ``lattice.half_width >= lattice.n_steps`` (the end nodes never reach the
    origin).
    """
    n = lattice.n_steps
    if n > 5:
        raise RefusalError(f"brute force enumerates at most 5 steps, got {n}")
    dt, dx = lattice.dt, lattice.dx
    variances = (band.sigma_low**2, band.sigma_high**2)

    def value(k, j):
        if k == n:
            return float(payoff(j * dx))
        up, mid, down = value(k + 1, j + 1), value(k + 1, j), value(k + 1, j - 1)
        best = -math.inf
        for var in variances:
            p = var * dt / (2.0 * dx * dx)
            best = max(best, p * up + (1.0 - 2.0 * p) * mid + p * down)
        return best

    return value(0, 0)


def running_functional_expectation(
    increments: np.ndarray,
    lattice: Lattice,
    mode: str = "max",
    terminal_fn: Callable | None = None,
    band: VolBand | None = None,
    policy: np.ndarray | None = None,
    levels: int = 257,
) -> float:
    """Expectation of a path functional by augmenting the state with an accumulator.

    The accumulator ``s`` starts at 0 and is updated at each visited node
    ``(k, X_k)`` by ``s <- max(s, a_k(X_k))`` (``mode="max"``) or
    ``s <- s + a_k(X_k)`` (``mode="sum"``) for ``k = 0..n``.  The functional
    is ``terminal_fn(s_n)``.

    With ``band`` the one-step supremum over the two variances is taken at
    every augmented node (a sublinear expectation); with ``policy`` the
    node-wise variances of a single scenario are used instead.  The
    accumulator lives on a uniform level grid with linear interpolation,
    so the result is a proxy whose accuracy grows with ``levels``.
    """
    if (band is None) == (policy is None):
        raise PreconditionError("give exactly one of band or policy")
    if mode not in ("max", "sum"):
        raise PreconditionError(f"mode must be 'max' or 'sum', got {mode!r}")
    a = np.asarray(increments, dtype=float)
    n, m = lattice.n_steps, lattice.n_nodes
    if a.shape != (n + 1, m):
        raise PreconditionError(f"increments must have shape {(n + 1, m)}, got {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise PreconditionError("increments must be finite and nonnegative")
    phi = terminal_fn or (lambda s: s)

    top = float(a.max()) if mode == "max" else float(a.max(axis=1).sum())
    if top == 0.0:
        return float(phi(np.zeros(1))[0])
    grid = np.linspace(0.0, top, levels)
    scale = (levels - 1) / top
    ratio = lattice.dt / (2.0 * lattice.dx**2)
    if band is not None:
        lattice.check_band(band)
    up_idx = np.minimum(np.arange(m) + 1, m - 1)
    down_idx = np.maximum(np.arange(m) - 1, 0)

    def advance(k):
        s = grid[None, :]
        ak = a[k][:, None]
        return np.maximum(s, ak) if mode == "max" else s + ak

    def locate(s_new):
        # past the top level the last segment is extended linearly; those
        # states are unreachable but feed interpolation near the top
        pos = np.maximum(s_new * scale, 0.0)
        i0 = np.minimum(np.floor(pos).astype(int), levels - 2)
        return i0, pos - i0

    def interp(values, i0, w):
        lo = np.take_along_axis(values, i0, axis=1)
        hi = np.take_along_axis(values, i0 + 1, axis=1)
        return lo + w * (hi - lo)

    value = phi(advance(n))
    for k in range(n - 1, -1, -1):
        i0, w = locate(advance(k))
        # interpolation is linear in the values, so the stencil can go first
        mid = interp(value, i0, w)
        spread = interp(value[up_idx] + value[down_idx] - 2.0 * value, i0, w)
        if band is not None:
            value = mid + np.maximum(band.var_low * ratio * spread, band.var_high * ratio * spread)
        else:
            value = mid + (policy[k] * ratio)[:, None] * spread
    # s_0 = 0 before the update at the origin
    return float(value[lattice.origin, 0])


def doob_series_constant(s: float, tail_tol: float = 1e-10) -> float:
    """``sum_{i>=1} i**(-s)`` from a partial sum plus an Euler-Maclaurin tail.

    The cut-off ``N`` is doubled until the first omitted Euler-Maclaurin
    term drops below ``tail_tol``.
    """
    if not s > 1.0:
        raise PreconditionError(f"series sum i**(-s) diverges for s={s} <= 1")
    n_cut = 16
    while True:
        bound = s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * (s + 5) * (s + 6) * n_cut ** (-s - 7) / 1209600.0
        if bound < tail_tol or n_cut > 2**24:
            break
        n_cut *= 2
    if bound >= tail_tol:
        raise PreconditionError(f"series tail cannot reach tolerance {tail_tol} for s={s}")
    head = math.fsum(i ** (-s) for i in range(1, n_cut))
    tail = (
        n_cut ** (1.0 - s) / (s - 1.0)
        + 0.5 * n_cut ** (-s)
        + s * n_cut ** (-s - 1.0) / 12.0
        - s * (s + 1) * (s + 2) * n_cut ** (-s - 3.0) / 720.0
        + s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * n_cut ** (-s - 5.0) / 30240.0
    )
    return head + tail


def is_midpoint_concave(h: Callable, lo: float, hi: float, n: int = 201, rtol: float = 1e-9) -> bool:
    """Sampled check of ``h((u+v)/2) >= (h(u)+h(v))/2`` on ``[lo, hi]``."""
    if hi <= lo:
        hi = lo + 1.0
    pts = np.linspace(lo, hi, n)
    u, v = np.meshgrid(pts, pts, indexing="ij")
    hu = np.asarray(h(u), dtype=float)
    hv = np.asarray(h(v), dtype=float)
    hm = np.asarray(h(0.5 * (u + v)), dtype=float)
    slack = rtol * (1.0 + np.abs(hu) + np.abs(hv))
    return bool(np.all(hm >= 0.5 * (hu + hv) - slack))


def jensen_check(h: Callable, payoff: Callable, band: VolBand, lattice: Lattice, tol: float = 1e-9):
    """Compare ``E^G[h(X)]`` with ``h(E^G[X])`` for ``X = payoff(B_T)``.

    ``h`` must be concave on the range of ``X`` (checked by midpoint
    sampling).  The inequality is guaranteed for nondecreasing concave
    ``h``; the report records whether ``h`` was also nondecreasing there.
    """
    xt = _terminal(payoff, lattice)
    lo, hi = float(xt.min()), float(xt.max())
    if not is_midpoint_concave(h, lo, hi):
        raise PreconditionError("h fails midpoint-concavity sampling on the payoff range")
    pts = np.linspace(lo, hi, 201)
    nondecreasing = bool(np.all(np.diff(np.asarray(h(pts), dtype=float)) >= -1e-12))
    mean = g_expectation(payoff, band, lattice)
    lhs = g_expectation(lambda x: h(payoff(x)), band, lattice)
    rhs = float(h(mean))
    return InequalityReport(
        "jensen", lhs, rhs, lhs <= rhs + tol, {"expectation": mean, "h_nondecreasing": nondecreasing}
    )


def doob_check(
    payoff: Callable,
    alpha: float,
    delta: float,
    gamma: float,
    band: VolBand,
    lattice: Lattice,
    tail_tol: float = 1e-10,
    levels: int = 257,
):
    """Doob-type maximal inequality under G-expectation.

    ``lhs = E^G[sup_t E^G_t[|xi|^alpha]]`` (the G-evaluation of
    ``|xi|^alpha``) is computed by backward induction on the running maximum.
    ``rhs = g* (||xi||^alpha + 14**(1/gamma) C ||xi||^((alpha+delta)/gamma))``
    with ``||xi||`` the ``L^(alpha+delta)`` norm under G-expectation,
    ``g* = gamma/(gamma-1)`` and ``C = sum i**(-(alpha+delta)/(alpha*gamma))``.

    The weaker quantity ``E^G[sup_t |E^G_t[xi]|^alpha]`` is reported in
    ``details["conditional_power"]``; it never exceeds ``lhs``.
    """
    if alpha < 1 or not delta > 0:
        raise PreconditionError("doob_check needs alpha >= 1 and delta > 0")
    ratio = (alpha + delta) / alpha
    if not (1.0 < gamma < ratio and gamma <= 2.0):
        raise PreconditionError(
            f"gamma must satisfy 1 < gamma < (alpha+delta)/alpha = {ratio:.6g} and gamma <= 2"
        )
    xt = _terminal(payoff, lattice)
    cond_pow, _ = solve_g_heat(np.abs(xt) ** alpha, band, lattice)
    lhs = running_functional_expectation(np.maximum(cond_pow, 0.0), lattice, "max", band=band, levels=levels)
    cond, _ = solve_g_heat(xt, band, lattice)
    weak = running_functional_expectation(np.abs(cond) ** alpha, lattice, "max", band=band, levels=levels)

    p = alpha + delta
    norm = g_expectation(lambda x: np.abs(payoff(x)) ** p, band, lattice) ** (1.0 / p)
    series = doob_series_constant(ratio / gamma, tail_tol)
    g_star = gamma / (gamma - 1.0)
    rhs = g_star * (norm**alpha + 14.0 ** (1.0 / gamma) * series * norm ** (p / gamma))
    details = {"norm": norm, "series_constant": series, "gamma_star": g_star, "conditional_power": weak}
    return InequalityReport("doob", lhs, rhs, lhs <= rhs, details)


def _integrand_values(integrand, lattice: Lattice) -> np.ndarray:
    if callable(integrand):
        params = [
            p
            for p in inspect.signature(integrand).parameters.values()
            if p.default is p.empty and p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)
        ]
        if len(params) != 1:
            raise PreconditionError(
                "integrand must be deterministic: a function of time only, eta(t)"
            )
        eta = np.array([float(integrand(t)) for t in lattice.times[:-1]])
    else:
        eta = np.asarray(integrand, dtype=float)
        if eta.shape != (lattice.n_steps,):
            raise PreconditionError(
                f"integrand array must hold one value per step ({lattice.n_steps}), got {eta.shape}"
            )
    if not np.all(np.isfinite(eta)):
        raise PreconditionError("integrand must be finite")
    return eta


def bdg_check(integrand, band: VolBand, lattice: Lattice, rtol: float = 1e-9) -> BDGReport:
    """Second-moment BDG sandwich for a deterministic step integrand.

    ``E^G[(int eta dB)^2]`` is computed on the lattice by running the G-heat
    step for ``y**2`` on the clock ``eta(t)**2 dt`` (the quadratic-variation
    increments of ``int eta dB``), sub-stepping where ``eta**2 > 1`` to keep
    the CFL bound.  The result must lie in
    ``[sigma_low**2, sigma_high**2] * int eta**2 dt``.
    """
    eta = _integrand_values(integrand, lattice)
    lattice.check_band(band)
    u = lattice.x**2
    ratio = lattice.dt / lattice.dx**2
    for e2 in (eta**2)[::-1]:
        if e2 == 0.0:
            continue
        sub = max(1, math.ceil(e2 - 1e-12))
        clock = e2 / sub
        for _ in range(sub):
            d2 = u[2:] - 2.0 * u[1:-1] + u[:-2]
            nxt = u.copy()
            nxt[1:-1] = u[1:-1] + 0.5 * ratio * clock * np.where(
                d2 >= 0, band.var_high * d2, band.var_low * d2
            )
            extrapolate_edges(nxt)
            u = nxt
    value = float(u[lattice.origin])
    qv = float(np.sum(eta**2) * lattice.dt)
    lower, upper = band.var_low * qv, band.var_high * qv
    slack = rtol * (1.0 + upper)
    return BDGReport(value, lower, upper, lower - slack <= value <= upper + slack)

"""Reflected G-BSDEs with a lower obstacle ``psi(t, B_t)``.

Two constructions are offered:

* Picard iteration.  Starting from ``Y^0 = 0``, each iterate solves a
  reflected problem whose generator has ``y`` frozen at the previous
  iterate, so only the Lipschitz ``z``-dependence stays live.
* Penalization.  Unreflected problems with the extra generator term
  ``n (y - psi)^-``, for an increasing schedule of rates ``n``.

Reflection at a node takes ``Y = max(psi, v)`` over the one-step value
``v`` and records ``lift = Y - v``, so ``lift * (Y - psi) = 0`` holds
exactly.  Complementarity is the discrete witness of the martingale
condition on ``-int (Y - S) dA``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceFailure, InternalInconsistency, NumericalFailure, PreconditionError
from .gbsde import (
    SolutionSurface,
    ComparisonReport,
    backward_sweep,
    continuation,
    scenario_expectation_of_sum,
    terminal_values,
    verify_generator,
)
from .gexpect import Lattice, VolBand, running_functional_expectation
from .moduli import GeneratorSpec

__all__ = [
    "Obstacle",
    "ReflectedSurface",
    "NormReport",
    "PenalizationRun",
    "PicardRun",
    "ComplementarityReport",
    "UniquenessReport",
    "StabilityReport",
    "DEFAULT_SCHEDULE",
    "obstacle_values",
    "solve_reflected_lipschitz",
    "solve_picard",
    "solve_penalized",
    "martingale_condition_check",
    "apriori_norms",
    "uniqueness_crosscheck",
    "stability_check",
    "comparison_reflected",
]

DEFAULT_SCHEDULE = tuple(2**k for k in range(11))
INACTIVE_LEVEL = -1e6


@dataclass(frozen=True)
class Obstacle:
    """Lower barrier ``psi(t, x)``; ``psi`` must broadcast over arrays of ``x``."""

    psi: Callable
    terminal_compat_tol: float = 1e-12
    label: str = "obstacle"

    @classmethod
    def inactive(cls) -> "Obstacle":
        return cls(lambda t, x: np.full(np.shape(x), INACTIVE_LEVEL), label="inactive")


def obstacle_values(obstacle: Obstacle, lattice: Lattice) -> np.ndarray:
    """``psi`` on every node, shape ``(n_steps + 1, n_nodes)``."""
    x = lattice.x
    out = np.empty((lattice.n_steps + 1, lattice.n_nodes))
    for k, t in enumerate(lattice.times):
        out[k] = np.broadcast_to(np.asarray(obstacle.psi(t, x), dtype=float), x.shape)
    bad = np.argwhere(~np.isfinite(out))
    if bad.size:
        k, j = bad[0]
        raise PreconditionError(f"obstacle is not finite at time index {k}, space index {j}")
    return out


def _checked_terminal(xi, psi_values, obstacle, lattice):
    terminal = terminal_values(xi, lattice)
    excess = psi_values[-1] - terminal
    if np.any(excess > obstacle.terminal_compat_tol):
        j = int(np.argmax(excess))
        raise PreconditionError(
            f"obstacle exceeds the terminal value at space index {j} "
            f"(psi - xi = {excess[j]:.3g})"
        )
    return terminal


@dataclass(frozen=True, eq=False)
class ReflectedSurface:
    """A solution surface whose ``lift`` is the reflection increment ``dA``."""

    base: SolutionSurface
    obstacle: Obstacle
    psi_values: np.ndarray = field(repr=False)

    @property
    def Y(self):
        return self.base.Y

    @property
    def Z(self):
        return self.base.Z

    @property
    def lift(self):
        return self.base.lift

    @property
    def policy(self):
        return self.base.policy

    @property
    def lattice(self):
        return self.base.lattice

    @property
    def y0(self) -> float:
        return self.base.y0

    def validate(self, tol: float = 1e-12) -> "ReflectedSurface":
        """Check obstacle dominance, ``lift >= 0`` and complementarity."""
        Y, psi, lift = self.Y, self.psi_values, self.lift
        if np.any(Y < psi - tol):
            raise InternalInconsistency(f"Y falls below the obstacle by {float(np.max(psi - Y)):.3g}")
        if np.any(lift < 0):
            raise InternalInconsistency(f"negative lift {float(lift.min()):.3g}")
        slack = lift[Y > psi + tol]
        if slack.size and slack.max() > 0:
            raise InternalInconsistency("lift is positive off the obstacle")
        return self


@dataclass(frozen=True)
class NormReport:
    """G-expectation proxies under the surface's optimizer policy."""

    Y_sup_norm: float
    Z_l2_norm: float
    A_terminal_norm: float
    alpha: float

    def as_tuple(self):
        return (self.Y_sup_norm, self.Z_l2_norm, self.A_terminal_norm)


@dataclass
class PenalizationRun:
    schedule: tuple
    surfaces: list
    gaps: list
    norms: list
    penalty_totals: list
    complementarity: list
    monotonicity_violation: float


@dataclass
class PicardRun:
    iterates: list
    deltas: list
    norm_trace: list
    converged: bool = True


@dataclass(frozen=True)
class ComplementarityReport:
    max_complementarity_violation: float
    total_violation: float
    passed: bool


@dataclass(frozen=True)
class UniquenessReport:
    sup_Y_diff: float
    Z_l2_diff: float
    tol: float
    passed: bool
    picard_y0: float
    penalized_y0: float


@dataclass(frozen=True)
class StabilityReport:
    eps: tuple
    sup_diffs: tuple
    ratios: tuple
    bound: float
    passed: bool


# ---------------------------------------------------------------- sweeps


def _reflect(psi_values):
    def post(k, v):
        y = np.maximum(psi_values[k], v)
        return y, y - v

    return post


def _penalize(psi_values, rate, dt):
    # Node-wise implicit penalty: u = v + n dt (psi - u)^+ solved exactly.
    # Monotone in v and in n for every rate, unlike the explicit form.
    w = rate * dt / (1.0 + rate * dt)

    def post(k, v):
        short = np.maximum(psi_values[k] - v, 0.0)
        y = v + w * short
        return y, y - v

    return post


def _reflected_sweep(spec, terminal, psi_values, obstacle, band, lattice, y_frozen=None):
    base = backward_sweep(spec, terminal, band, lattice, post=_reflect(psi_values), y_frozen=y_frozen)
    return ReflectedSurface(base, obstacle, psi_values)


def solve_reflected_lipschitz(
    spec: GeneratorSpec,
    obstacle: Obstacle,
    xi: Callable,
    band: VolBand,
    lattice: Lattice,
    verify: bool = True,
) -> ReflectedSurface:
    """Reflected solve for a generator that is Lipschitz in ``(y, z)``.

    Each level applies the G-BSDE step and then ``Y = max(psi, v)``.
    """
    if not spec.is_lipschitz:
        raise PreconditionError(f"generator {spec.label!r} does not carry a Lipschitz modulus")
    if verify:
        verify_generator(spec, lattice)
    psi = obstacle_values(obstacle, lattice)
    terminal = _checked_terminal(xi, psi, obstacle, lattice)
    return _reflected_sweep(spec, terminal, psi, obstacle, band, lattice).validate()


def solve_picard(
    spec: GeneratorSpec,
    obstacle: Obstacle,
    xi: Callable,
    band: VolBand,
    lattice: Lattice,
    stop_tol: float = 1e-6,
    max_iter: int = 50,
    alpha: float = 2.0,
    track_norms: bool = True,
    verify: bool = True,
):
    """Picard iteration over reflected problems with ``y`` frozen.

    Iterate ``n`` evaluates the generator at ``y = Y^{n-1}`` on level
    ``k+1`` when stepping to level ``k`` (the same level the direct scheme
    uses, so the fixed point is the direct reflected solve).  ``deltas[i]``
    is ``max |Y^{i+2} - Y^{i+1}|``: a ``y``-free generator gives the single
    delta ``0``.

    Returns
    -------
    (ReflectedSurface, PicardRun)

    Raises
    ------
    ConvergenceFailure
        If ``max_iter`` iterates pass without a delta at or below ``stop_tol``.
    """
    if verify:
        verify_generator(spec, lattice)
    psi = obstacle_values(obstacle, lattice)
    terminal = _checked_terminal(xi, psi, obstacle, lattice)
    previous = np.zeros((lattice.n_steps + 1, lattice.n_nodes))
    iterates, deltas, norms = [], [], []
    for n in range(1, max_iter + 1):
        surface = _reflected_sweep(spec, terminal, psi, obstacle, band, lattice, y_frozen=previous)
        iterates.append(surface)
        if track_norms:
            norms.append(apriori_norms(surface, alpha))
        if n > 1:
            deltas.append(float(np.max(np.abs(surface.Y - previous))))
            if deltas[-1] <= stop_tol:
                return surface.validate(), PicardRun(iterates, deltas, norms)
        previous = surface.Y
    raise ConvergenceFailure(
        f"Picard iteration did not reach {stop_tol:g} in {max_iter} iterates "
        f"(last delta {deltas[-1] if deltas else float('nan'):.3g})",
        deltas,
    )


def _penalized_surface(spec, terminal, psi, band, lattice, rate):
    return backward_sweep(
        spec, terminal, band, lattice, post=_penalize(psi, rate, lattice.dt), penalty_rate=float(rate)
    )


def solve_penalized(
    spec: GeneratorSpec,
    obstacle: Obstacle,
    xi: Callable,
    band: VolBand,
    lattice: Lattice,
    schedule=DEFAULT_SCHEDULE,
    alpha: float = 2.0,
    max_workers: int | None = None,
    verify: bool = True,
    gap_factor: float = 1e-2,
    track_norms: bool = True,
):
    """Penalized approximation along an increasing schedule of rates.

    Rate ``n`` adds ``n (y - psi)^-`` to the generator.  The penalty is
    applied implicitly per node, so ``lift = n dt (Y^n - psi)^-`` exactly
    and every rate keeps the scheme monotone.  The returned reflected
    surface comes from one reflected step off the last penalized surface:
    ``Y_k = max(psi_k, v(Y^n_{k+1}))``.

    Raises
    ------
    NumericalFailure
        If the gap ``max (Y^n - psi)^-`` grows along the schedule, or the
        final gap exceeds ``gap_factor * (1 + max|psi|)``.
    """
    schedule = tuple(schedule)
    if not schedule:
        raise PreconditionError("penalty schedule is empty")
    if any(r <= 0 for r in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise PreconditionError("penalty schedule must be positive and strictly increasing")
    if verify:
        verify_generator(spec, lattice)
    psi = obstacle_values(obstacle, lattice)
    terminal = _checked_terminal(xi, psi, obstacle, lattice)

    def run(rate):
        return _penalized_surface(spec, terminal, psi, band, lattice, rate)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            surfaces = list(pool.map(run, schedule))
    else:
        surfaces = [run(r) for r in schedule]

    psi_scale = 1.0 + float(np.max(np.abs(psi)))
    gaps = [float(np.max(np.maximum(psi - s.Y, 0.0))) for s in surfaces]
    for i in range(1, len(gaps)):
        if gaps[i] > gaps[i - 1] + 1e-12 * psi_scale:
            raise NumericalFailure(
                f"penalization gap grew from {gaps[i - 1]:.3g} to {gaps[i]:.3g} "
                f"at rate {schedule[i]}"
            )
    if gaps[-1] > gap_factor * psi_scale:
        raise NumericalFailure(
            f"final penalization gap {gaps[-1]:.3g} exceeds {gap_factor * psi_scale:.3g}"
        )
    monotone = 0.0
    for a, b in zip(surfaces, surfaces[1:]):
        monotone = max(monotone, float(np.max(a.Y - b.Y)))
    norms = [apriori_norms(s, alpha) for s in surfaces] if track_norms else []
    totals = [
        running_functional_expectation(s.lift, lattice, "sum", policy=s.policy) for s in surfaces
    ]
    comp = [martingale_condition_check(s, obstacle) for s in surfaces]

    last = surfaces[-1]
    n, m = lattice.n_steps, lattice.n_nodes
    Y = np.empty((n + 1, m))
    lift = np.zeros((n + 1, m))
    policy = np.empty((n, m))
    Y[n] = terminal
    for k in range(n - 1, -1, -1):
        v, policy[k] = continuation(last.Y[k + 1], k, spec, band, lattice)
        Y[k] = np.maximum(psi[k], v)
        lift[k] = Y[k] - v
    Z = np.gradient(Y, lattice.dx, axis=1)
    base = SolutionSurface(lattice, band, Y, Z, policy, lift, None, spec)
    final = ReflectedSurface(base, obstacle, psi).validate()
    return final, PenalizationRun(schedule, surfaces, gaps, norms, totals, comp, monotone)


# ---------------------------------------------------------------- checks


def _psi_for(surface, obstacle):
    if isinstance(surface, ReflectedSurface):
        return surface.base, surface.psi_values
    if obstacle is None:
        raise PreconditionError("an obstacle is needed for a plain solution surface")
    return surface, obstacle_values(obstacle, surface.lattice)


def martingale_condition_check(surface, obstacle: Obstacle | None = None, tol: float = 1e-12):
    """Discrete Skorohod complementarity ``lift * (Y - psi) = 0``.

    ``total_violation`` is the policy-scenario expectation of
    ``sum |lift * (Y - psi)|``; for a penalized surface at rate ``n`` it
    equals ``n dt sum ((Y - psi)^-)**2``.
    """
    base, psi = _psi_for(surface, obstacle)
    residual = np.abs(base.lift * (base.Y - psi))
    worst = float(residual.max())
    total = scenario_expectation_of_sum(residual, base.policy, base.lattice)
    return ComplementarityReport(worst, total, worst <= tol)


def apriori_norms(surface, alpha: float = 2.0, levels: int = 257) -> NormReport:
    """Proxies for ``E[sup |Y|^a]``, ``E[(sum |Z|^2 dt)^(a/2)]`` and ``E[|A_T|^a]``.

    Each expectation runs under the surface's optimizer policy (a single
    scenario), with the path functional tracked by an augmented state.
    """
    if alpha < 2:
        raise PreconditionError(f"alpha must be >= 2, got {alpha}")
    base = surface.base if isinstance(surface, ReflectedSurface) else surface
    lat, policy = base.lattice, base.policy
    y_norm = running_functional_expectation(
        np.abs(base.Y) ** alpha, lat, "max", policy=policy, levels=levels
    )
    z_inc = base.Z**2 * lat.dt
    z_inc[-1] = 0.0
    z_norm = running_functional_expectation(
        z_inc, lat, "sum", lambda s: s ** (alpha / 2), policy=policy, levels=levels
    )
    a_norm = running_functional_expectation(
        np.maximum(base.lift, 0.0), lat, "sum", lambda s: s**alpha, policy=policy, levels=levels
    )
    return NormReport(y_norm, z_norm, a_norm, alpha)


def uniqueness_crosscheck(
    spec: GeneratorSpec,
    obstacle: Obstacle,
    xi: Callable,
    band: VolBand,
    lattice: Lattice,
    tol: float = 1e-2,
    stop_tol: float = 1e-6,
    max_iter: int = 50,
    schedule=DEFAULT_SCHEDULE,
    max_workers: int | None = None,
) -> UniquenessReport:
    """Run both constructions on the same data and compare the surfaces.

    ``Z_l2_diff`` is ``sqrt(E[sum (Z1 - Z2)^2 dt])`` under the Picard
    surface's policy.
    """
    pic, _ = solve_picard(spec, obstacle, xi, band, lattice, stop_tol, max_iter, track_norms=False)
    pen, _ = solve_penalized(
        spec, obstacle, xi, band, lattice, schedule, max_workers=max_workers, verify=False, track_norms=False
    )
    sup_diff = float(np.max(np.abs(pic.Y - pen.Y)))
    inc = (pic.Z - pen.Z) ** 2 * lattice.dt
    inc[-1] = 0.0
    z_diff = math.sqrt(max(scenario_expectation_of_sum(inc, pic.policy, lattice), 0.0))
    return UniquenessReport(sup_diff, z_diff, tol, sup_diff <= tol, pic.y0, pen.y0)


def _default_solver(spec, obstacle, band, lattice):
    if spec.is_lipschitz:
        return lambda xi: solve_reflected_lipschitz(spec, obstacle, xi, band, lattice, verify=False)
    return lambda xi: solve_picard(spec, obstacle, xi, band, lattice, stop_tol=1e-12, track_norms=False, verify=False)[0]


def stability_check(
    spec: GeneratorSpec,
    obstacle: Obstacle,
    xi: Callable,
    band: VolBand,
    lattice: Lattice,
    eps_list=(1e-1, 1e-2, 1e-3),
    bound: float = 10.0,
) -> StabilityReport:
    """Perturb ``xi`` by ``eps`` and report ``max |Y(xi + eps) - Y(xi)| / eps``.

    Passes when every ratio is at most ``bound`` and the differences
    shrink with ``eps``.
    """
    verify_generator(spec, lattice)
    solve = _default_solver(spec, obstacle, band, lattice)
    ref = solve(xi).Y
    diffs, ratios = [], []
    for eps in eps_list:
        if eps < 0:
            raise PreconditionError("perturbation sizes must be >= 0")
        if eps == 0:
            diffs.append(0.0)
            ratios.append(0.0)
            continue
        shifted = solve(lambda x, e=eps: xi(x) + e).Y
        d = float(np.max(np.abs(shifted - ref)))
        diffs.append(d)
        ratios.append(d / eps)
    order = np.argsort(eps_list)
    shrinking = all(diffs[order[i]] <= diffs[order[i + 1]] + 1e-15 for i in range(len(order) - 1))
    passed = shrinking and all(r <= bound for r in ratios)
    return StabilityReport(tuple(eps_list), tuple(diffs), tuple(ratios), bound, passed)


def comparison_reflected(run1, run2, tol: float = 1e-10) -> ComparisonReport:
    """``max(Y1 - Y2)`` over all nodes for two reflected surfaces."""
    if not run1.lattice.same_grid(run2.lattice):
        raise PreconditionError("surfaces live on different lattices")
    excess = float(np.max(run1.Y - run2.Y))
    return ComparisonReport(excess, excess <= tol)

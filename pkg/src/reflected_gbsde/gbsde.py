"""Backward lattice solver for G-BSDEs

    Y_t = xi + int_t^T f(s, Y, Z) ds + int_t^T g(s, Y, Z) d<B>_s - int_t^T Z dB - (K_T - K_t)

with Markovian terminal value ``xi = phi(B_T)``.  The value function solves
``u_t + G(u_xx + 2 g) + f = 0``; one explicit step reads

    u_k = u_{k+1} + dt f(t_k, x, u_{k+1}, z) + 2 dt G(0.5 * d2 u_{k+1} + g(t_k, x, u_{k+1}, z))

with ``z`` the central difference of ``u_{k+1}`` (one-sided at the two
end nodes, where only ``dt f`` is applied).  The ``d<B>`` generator sits
inside ``G`` because the density of ``<B>`` ranges over the band.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalFailure, PreconditionError
from .gexpect import (
    Lattice,
    VolBand,
    g_value,
    maximizing_variance,
    second_difference,
)
from .moduli import GeneratorSpec, check_H1, sample_cloud

__all__ = [
    "SolutionSurface",
    "ComparisonReport",
    "KReport",
    "terminal_values",
    "continuation",
    "backward_sweep",
    "verify_generator",
    "solve_gbsde",
    "comparison_gbsde",
    "k_stats",
    "scenario_expectation_of_sum",
    "edge_update",
]


@dataclass(frozen=True, eq=False)
class SolutionSurface:
    """Lattice solution: arrays indexed ``[time_index, space_index]``.

    ``policy[k]`` holds the variance chosen for the step from ``t_k`` to
    ``t_{k+1}``.  ``lift[k]`` is the nonnegative increment added on top of
    the G-BSDE step at ``t_k``: zero for plain solves, the reflection
    increment for reflected solves and ``n dt (Y - psi)^-`` for penalised
    ones.
    """

    lattice: Lattice
    band: VolBand
    Y: np.ndarray
    Z: np.ndarray
    policy: np.ndarray
    lift: np.ndarray
    penalty_rate: float | None = None
    spec: GeneratorSpec | None = field(default=None, repr=False)

    @property
    def y0(self) -> float:
        return float(self.Y[0, self.lattice.origin])


@dataclass(frozen=True)
class ComparisonReport:
    max_excess: float
    passed: bool


@dataclass(frozen=True)
class KReport:
    K_terminal_mean: float
    K_monotone_pass: bool
    max_increment: float


def terminal_values(xi: Callable, lattice: Lattice) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(xi(lattice.x), dtype=float), (lattice.n_nodes,)).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise NumericalFailure(f"terminal value is not finite at space index {int(bad[0])}")
    return vals


def edge_update(out, next_y, f, dt) -> None:
    """Fill both end nodes with the first-order part of the step only.

    The second difference is taken as zero there, so the end nodes move
    by ``dt * f``.  Unlike linear extrapolation this keeps the whole step
    monotone (needed by the comparison and penalty-monotonicity
    guarantees on every node) and it still leaves affine data untouched
    when the generator vanishes.
    """
    out[0] = next_y[0] + dt * f[0]
    out[-1] = next_y[-1] + dt * f[-1]


def _generator_terms(spec, k, next_y, lattice, y_arg):
    t = k * lattice.dt
    x = lattice.x
    y = next_y if y_arg is None else y_arg
    z = np.gradient(next_y, lattice.dx)
    shape = next_y.shape
    f = np.broadcast_to(np.asarray(spec.f(t, x, y, z), dtype=float), shape)
    g = np.broadcast_to(np.asarray(spec.g(t, x, y, z), dtype=float), shape)
    return f, g


def continuation(next_y, k, spec: GeneratorSpec, band: VolBand, lattice: Lattice, y_arg=None):
    """One G-BSDE step from level ``k+1`` to level ``k``.

    ``y_arg`` replaces ``u_{k+1}`` as the ``y`` argument of the generator
    (Picard iteration freezes it at the previous iterate).

    Returns ``(values, policy)``.
    """
    f, g = _generator_terms(spec, k, next_y, lattice, y_arg)
    drive = 0.5 * second_difference(next_y, lattice.dx) + g[1:-1]
    out = np.empty_like(next_y)
    out[1:-1] = next_y[1:-1] + lattice.dt * f[1:-1] + 2.0 * lattice.dt * g_value(drive, band)
    edge_update(out, next_y, f, lattice.dt)
    policy = np.full(next_y.shape, band.var_high)
    policy[1:-1] = maximizing_variance(drive, band)
    return out, policy


def backward_sweep(
    spec: GeneratorSpec,
    terminal: np.ndarray,
    band: VolBand,
    lattice: Lattice,
    post: Callable | None = None,
    y_frozen: np.ndarray | None = None,
    penalty_rate: float | None = None,
) -> SolutionSurface:
    """Run the backward recursion over the whole lattice.

    ``post(k, v)`` maps the continuation ``v`` at level ``k`` to
    ``(Y_k, lift_k)``; the default keeps ``v`` with zero lift.
    ``y_frozen`` is a full ``Y`` surface whose level ``k+1`` feeds the
    generator's ``y`` argument at level ``k``.
    """
    lattice.check_band(band)
    n, m = lattice.n_steps, lattice.n_nodes
    Y = np.empty((n + 1, m))
    lift = np.zeros((n + 1, m))
    policy = np.empty((n, m))
    Y[n] = terminal
    for k in range(n - 1, -1, -1):
        y_arg = None if y_frozen is None else y_frozen[k + 1]
        v, policy[k] = continuation(Y[k + 1], k, spec, band, lattice, y_arg)
        if post is None:
            Y[k] = v
        else:
            Y[k], lift[k] = post(k, v)
        bad = np.flatnonzero(~np.isfinite(Y[k]))
        if bad.size:
            raise NumericalFailure(
                f"non-finite value at time index {k}, space index {int(bad[0])}"
            )
    Z = np.gradient(Y, lattice.dx, axis=1)
    return SolutionSurface(lattice, band, Y, Z, policy, lift, penalty_rate, spec)


def verify_generator(spec: GeneratorSpec, lattice: Lattice) -> None:
    report = check_H1(spec, sample_cloud(T=lattice.horizon))
    if not report.passed:
        raise PreconditionError(
            f"generator {spec.label!r} violates its declared modulus "
            f"(max violation {report.max_violation:.3g} on the sample cloud)"
        )


def solve_gbsde(spec: GeneratorSpec, xi: Callable, band: VolBand, lattice: Lattice, verify: bool = True):
    """Solve the G-BSDE with terminal value ``xi(B_T)`` on ``lattice``.

    ``Y`` is the value surface, ``Z`` its discrete space derivative
    (one-sided at the end nodes) and ``policy`` the maximizing variance.
    With ``verify`` the generator is first checked against its declared
    modulus on a quasi-random sample cloud.
    """
    if verify:
        verify_generator(spec, lattice)
    return backward_sweep(spec, terminal_values(xi, lattice), band, lattice)


def comparison_gbsde(s1: SolutionSurface, s2: SolutionSurface, tol: float = 1e-10) -> ComparisonReport:
    """``max(Y1 - Y2)`` over all nodes; passes when it is at most ``tol``."""
    if not s1.lattice.same_grid(s2.lattice):
        raise PreconditionError("surfaces live on different lattices")
    excess = float(np.max(s1.Y - s2.Y))
    return ComparisonReport(excess, excess <= tol)


def _linear_step(values, variances, lattice):
    ratio = lattice.dt / (2.0 * lattice.dx**2)
    out = np.empty_like(values)
    spread = values[2:] - 2.0 * values[1:-1] + values[:-2]
    out[1:-1] = values[1:-1] + variances[1:-1] * ratio * spread
    out[0], out[-1] = values[0], values[-1]
    return out


def _scenario_variances(surface: SolutionSurface, scenario) -> np.ndarray:
    if isinstance(scenario, str):
        if scenario != "optimizer":
            raise PreconditionError(f"unknown scenario {scenario!r}")
        return surface.policy
    var = float(scenario) ** 2
    band = surface.band
    if not band.var_low * (1 - 1e-12) <= var <= band.var_high * (1 + 1e-12):
        raise PreconditionError(f"scenario volatility {scenario} lies outside the band")
    return np.full(surface.policy.shape, var)


def scenario_expectation_of_sum(increments: np.ndarray, variances: np.ndarray, lattice: Lattice) -> float:
    """``E[sum_k a_k(X_k)]`` under the single scenario with node variances ``variances``."""
    acc = np.array(increments[-1], dtype=float)
    for k in range(lattice.n_steps - 1, -1, -1):
        acc = _linear_step(acc, variances[k], lattice) + increments[k]
    return float(acc[lattice.origin])


def k_stats(surface: SolutionSurface, scenario="optimizer", spec: GeneratorSpec | None = None, tol: float = 1e-12):
    """Scenario-relative statistics of the decreasing G-martingale ``K``.

    Under one scenario (the optimizer policy, or a constant volatility in
    the band) the Y-recursion leaves a residual at every interior node:
    the G-step used the maximizing variance, the scenario a different one.
    That residual, ``dt * (v - v*) * drive <= 0``, is the scenario's
    ``K`` increment.  End nodes carry no increment.
    """
    spec = spec or surface.spec
    if spec is None:
        raise PreconditionError("k_stats needs the generator that produced the surface")
    lattice = surface.lattice
    variances = _scenario_variances(surface, scenario)
    n = lattice.n_steps
    dK = np.zeros((n + 1, lattice.n_nodes))
    for k in range(n):
        _, g = _generator_terms(spec, k, surface.Y[k + 1], lattice, None)
        drive = 0.5 * second_difference(surface.Y[k + 1], lattice.dx) + g[1:-1]
        dK[k, 1:-1] = lattice.dt * (variances[k, 1:-1] - surface.policy[k, 1:-1]) * drive
    worst = float(dK.max())
    mean = scenario_expectation_of_sum(dK, variances, lattice)
    return KReport(mean, worst <= tol, worst)

"""Ready-made problems shared by the tests, the demos and the CLI."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gexpect import Lattice, VolBand
from .moduli import GeneratorSpec, make_modulus
from .rgbsde import Obstacle

__all__ = [
    "Scenario",
    "american_put",
    "hlog_square",
    "yfree_cap",
    "smooth",
    "put_generator",
    "SCENARIOS",
]


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: GeneratorSpec
    xi: Callable
    obstacle: Obstacle
    band: VolBand
    horizon: float = 1.0

    def lattice(self, n_steps: int, cfl: float = 0.9, coverage_factor: float = 6.0) -> Lattice:
        return Lattice.for_band(self.band, self.horizon, n_steps, cfl, coverage_factor)


def put_generator(rate: float) -> GeneratorSpec:
    """Discounting and drift for a put written on ``S = S0 exp(B)``.

    With ``u(t, x) = P(t, S0 e^x)`` the pricing equation becomes
    ``u_t + G(u_xx - u_x) + r u_x - r u = 0``, i.e. ``f = r z - r y`` and
    ``g = -z / 2``.
    """
    return GeneratorSpec(
        f=lambda t, x, y, z: rate * z - rate * y,
        g=lambda t, x, y, z: -0.5 * z,
        modulus=make_modulus("lipschitz", L=rate + 0.5),
        z_lipschitz=rate + 0.5,
        label=f"put(r={rate:g})",
    )


def american_put(
    spot: float = 100.0,
    strike: float = 100.0,
    rate: float = 0.05,
    band: VolBand = VolBand(0.1, 0.3),
    horizon: float = 1.0,
) -> Scenario:
    def payoff(x):
        return np.maximum(strike - spot * np.exp(x), 0.0)

    return Scenario(
        "american_put",
        put_generator(rate),
        payoff,
        Obstacle(lambda t, x: payoff(x), label="put intrinsic"),
        band,
        horizon,
    )


def hlog_square(beta: float = 3.0, band: VolBand = VolBand(0.5, 1.0)) -> Scenario:
    """``f(y) = rho(|y|)`` for the non-Lipschitz ``hlog`` modulus, ``xi = x^2``, ``psi = x^2 - 1``."""
    rho = make_modulus("hlog", beta=beta)
    spec = GeneratorSpec(lambda t, x, y, z: rho(np.abs(y)), rho, label=f"rho(|y|), {rho.label}")
    return Scenario(
        "hlog_square",
        spec,
        lambda x: x**2,
        Obstacle(lambda t, x: x**2 - 1.0, label="x^2 - 1"),
        band,
    )


def yfree_cap(band: VolBand = VolBand(0.5, 1.0)) -> Scenario:
    """``f = -1`` with the active obstacle ``1 - x^2`` and ``xi = (1 - x^2)^+``."""
    spec = GeneratorSpec(
        lambda t, x, y, z: np.full(np.shape(x), -1.0),
        make_modulus("lipschitz", L=1.0),
        label="f = -1",
    )
    return Scenario(
        "yfree_cap",
        spec,
        lambda x: np.maximum(1.0 - x**2, 0.0),
        Obstacle(lambda t, x: 1.0 - x**2, label="1 - x^2"),
        band,
    )


def smooth(band: VolBand = VolBand(0.5, 1.0)) -> Scenario:
    """``f = -y/2``, ``xi = cos x`` and no active obstacle."""
    spec = GeneratorSpec(
        lambda t, x, y, z: -0.5 * y,
        make_modulus("lipschitz", L=0.5),
        label="f = -y/2",
    )
    return Scenario("smooth", spec, np.cos, Obstacle.inactive(), band)


SCENARIOS = {
    "american_put": american_put,
    "hlog_square": hlog_square,
    "yfree_cap": yfree_cap,
    "smooth": smooth,
}

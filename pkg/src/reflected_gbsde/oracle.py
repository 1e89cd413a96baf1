"""Independent reference implementations.

Nothing here imports the lattice engine.  The code is deliberately plain
Python (loops over nodes, ``math`` only) so that agreement with the
vectorised engine is evidence, not tautology.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["AmericanPutSpec", "crr_price", "tiny_tree_eval", "MAX_TINY_STEPS", "OracleRefusal"]

MAX_TINY_STEPS = 4


class OracleRefusal(ValueError):
    """Raised when the tiny-tree evaluator is asked for too many steps."""


@dataclass(frozen=True)
class AmericanPutSpec:
    spot: float
    strike: float
    rate: float
    vol: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.spot > 0 and self.strike > 0 and self.vol > 0 and self.T > 0):
            raise ValueError("spot, strike, vol and T must be positive")
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")


def crr_price(spec: AmericanPutSpec) -> float:
    """Cox-Ross-Rubinstein price of an American put with early exercise."""
    n = int(spec.n_steps)
    dt = spec.T / n
    up = math.exp(spec.vol * math.sqrt(dt))
    down = 1.0 / up
    disc = math.exp(-spec.rate * dt)
    p = (math.exp(spec.rate * dt) - down) / (up - down)
    p = min(max(p, 0.0), 1.0)
    values = [max(spec.strike - spec.spot * up ** (n - 2 * i), 0.0) for i in range(n + 1)]
    for k in range(n - 1, -1, -1):
        for i in range(k + 1):
            cont = disc * (p * values[i] + (1.0 - p) * values[i + 1])
            exercise = spec.strike - spec.spot * up ** (k - 2 * i)
            values[i] = max(cont, exercise)
    return values[0]


def _half_g(a, var_low, var_high):
    # sup over the two variances of 0.5 * v * a
    return max(0.5 * var_low * a, 0.5 * var_high * a)


def tiny_tree_eval(recursion: str, inputs: dict, n_steps: int):
    """Re-derive a lattice recursion node by node.

    Parameters
    ----------
    recursion : {"expectation", "gbsde", "reflected"}
    inputs : dict
        ``sigma_low``, ``sigma_high``, ``horizon``, ``dx``, ``half_width``
        and ``payoff`` (a function of ``x``) always; ``f`` and ``g``
        (functions of ``t, x, y, z``, default zero) for the BSDE kinds;
        ``psi`` (function of ``t, x``) for ``reflected``.
    n_steps : int
        At most ``MAX_TINY_STEPS``.

    Returns
    -------
    list of list of float
        ``surface[k][j]`` for time index ``k`` and space index ``j``.

    Notes
    -----
    The expectation kind fills the end nodes by linear extrapolation.  The
    BSDE kinds move them by ``dt * f`` alone, with a one-sided ``z``.
    Inside, ``z`` is the central difference.
    """
    if recursion not in ("expectation", "gbsde", "reflected"):
        raise ValueError(f"unknown recursion {recursion!r}")
    if not 1 <= n_steps <= MAX_TINY_STEPS:
        raise OracleRefusal(f"tiny-tree evaluation is limited to {MAX_TINY_STEPS} steps")
    vl = inputs["sigma_low"] ** 2
    vh = inputs["sigma_high"] ** 2
    T = inputs["horizon"]
    dx = inputs["dx"]
    h = inputs["half_width"]
    dt = T / n_steps
    xs = [dx * (j - h) for j in range(2 * h + 1)]
    m = len(xs)
    zero = lambda t, x, y, z: 0.0  # noqa: E731
    f = inputs.get("f", zero)
    g = inputs.get("g", zero)
    psi = inputs.get("psi")
    if recursion == "reflected" and psi is None:
        raise ValueError("reflected evaluation needs psi")

    surface = [None] * (n_steps + 1)
    surface[n_steps] = [float(inputs["payoff"](x)) for x in xs]
    for k in range(n_steps - 1, -1, -1):
        nxt = surface[k + 1]
        t = k * dt
        cur = [0.0] * m
        for j in range(1, m - 1):
            d2 = (nxt[j + 1] - 2.0 * nxt[j] + nxt[j - 1]) / (dx * dx)
            if recursion == "expectation":
                cur[j] = nxt[j] + dt * _half_g(d2, vl, vh)
                continue
            z = (nxt[j + 1] - nxt[j - 1]) / (2.0 * dx)
            y = nxt[j]
            drive = 0.5 * d2 + float(g(t, xs[j], y, z))
            cur[j] = nxt[j] + dt * float(f(t, xs[j], y, z)) + 2.0 * dt * _half_g(drive, vl, vh)
        if recursion == "expectation":
            cur[0] = 2.0 * cur[1] - cur[2]
            cur[-1] = 2.0 * cur[-2] - cur[-3]
        else:
            # end nodes: zero second difference, one-sided z
            z0 = (nxt[1] - nxt[0]) / dx
            z1 = (nxt[-1] - nxt[-2]) / dx
            cur[0] = nxt[0] + dt * float(f(t, xs[0], nxt[0], z0))
            cur[-1] = nxt[-1] + dt * float(f(t, xs[-1], nxt[-1], z1))
        if recursion == "reflected":
            cur = [max(float(psi(t, x)), v) for x, v in zip(xs, cur)]
        surface[k] = cur
    return surface

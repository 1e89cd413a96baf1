"""The inequality and property suite behind ``reflected-gbsde check``.

Each named check returns a :class:`CheckRow`.  Negative controls pass
when the guarded routine refuses its input, so a silent acceptance of a
bad input shows up as a failed row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GBSDEError, PreconditionError
from .gbsde import comparison_gbsde, solve_gbsde
from .gexpect import Lattice, VolBand, bdg_check, doob_check, jensen_check
from .moduli import (
    GeneratorSpec,
    affine_envelope,
    bihari_majorant,
    divergence_check,
    make_modulus,
    concave_transform,
)
from .rgbsde import Obstacle, comparison_reflected, martingale_condition_check, solve_reflected_lipschitz

__all__ = ["CheckRow", "DEFAULT_DIVERGENCE_CASES", "CHECKS", "named_modulus", "run_suite", "suite_names"]

DEFAULT_DIVERGENCE_CASES = (
    ("hlog3", "divergent"),
    ("hlog2.5", "divergent"),
    ("lipschitz1", "divergent"),
    ("sqrt2", "convergent"),
)

DOOB_TRIPLES = ((2.0, 1.0, 1.25), (2.0, 2.0, 1.5), (3.0, 1.5, 1.2))


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    detail: str = ""


def _band():
    return VolBand(0.5, 1.0)


def _lattice(n_steps=100):
    return Lattice.for_band(_band(), 1.0, n_steps)


def named_modulus(label: str):
    """Parse labels like ``hlog3``, ``hlog2.5``, ``lipschitz1`` or ``sqrt2``.

    Returns ``(modulus, beta)``.  ``sqrtB`` is ``rho(u) = sqrt(u)`` tested
    with exponent ``B``.
    """
    for prefix in ("hlog", "lipschitz", "sqrt"):
        if label.startswith(prefix):
            try:
                number = float(label[len(prefix):])
            except ValueError:
                break
            if prefix == "hlog":
                rho = make_modulus("hlog", beta=number)
                return rho, number
            if prefix == "lipschitz":
                return make_modulus("lipschitz", L=number), 3.0
            rho = make_modulus("custom", evaluator=lambda u: np.sqrt(np.maximum(u, 0.0)), beta=number, label="sqrt")
            return rho, number
    raise PreconditionError(f"unknown modulus label {label!r}")


def check_jensen():
    r = jensen_check(lambda u: 1.0 - np.exp(-u), lambda x: x**2, _band(), _lattice())
    return CheckRow("jensen", r.passed, r.lhs, r.rhs)


def check_jensen_negative():
    try:
        jensen_check(lambda u: u**2, lambda x: x, _band(), _lattice())
    except PreconditionError as exc:
        return CheckRow("jensen_negative_control", True, detail=f"refused: {exc}")
    return CheckRow("jensen_negative_control", False, detail="non-concave h was accepted")


def _doob(alpha, delta, gamma):
    def run():
        r = doob_check(lambda x: x, alpha, delta, gamma, _band(), _lattice(60))
        return CheckRow("doob", r.passed, r.lhs, r.rhs, f"alpha={alpha:g} delta={delta:g} gamma={gamma:g}")

    return run


def _bdg(name, integrand):
    def run():
        r = bdg_check(integrand, _band(), _lattice())
        return CheckRow(f"bdg_{name}", r.passed, r.value, r.upper, f"lower={r.lower:.12g}")

    return run


def check_affine_envelope():
    worst = []
    for label in ("hlog3", "lipschitz2"):
        rho, _ = named_modulus(label)
        a, b = affine_envelope(rho)
        worst.append(f"{label}:a={a:.6g},b={b:.6g}")
    return CheckRow("affine_envelope", True, detail="; ".join(worst))


def check_transform():
    rho = make_modulus("hlog", beta=3.0)
    out = concave_transform(rho, 2.0)
    return CheckRow("transform_concave", True, detail=f"{out.label}, beta={out.beta:g}")


def check_bihari_gronwall():
    w = bihari_majorant(lambda u: u, 1.0, 1.0, 1.0)
    err = abs(w[0] - math.e)
    return CheckRow("bihari_gronwall", err <= 1e-6, float(w[0]), math.e, f"error={err:.3g}")


def check_bihari_zero():
    rho = make_modulus("hlog", beta=3.0)
    w = bihari_majorant(rho, 0.0, 2.0, 1.0)
    top = float(np.max(np.abs(w)))
    return CheckRow("bihari_zero_start", top == 0.0, top, 0.0)


def check_comparison_gbsde():
    lat = _lattice()
    spec = GeneratorSpec(lambda t, x, y, z: -0.5 * y, make_modulus("lipschitz", L=0.5))
    s1 = solve_gbsde(spec, lambda x: x**2 - 1.0, _band(), lat)
    s2 = solve_gbsde(spec, lambda x: x**2, _band(), lat)
    r = comparison_gbsde(s1, s2, 1e-10)
    return CheckRow("comparison_gbsde", r.passed, r.max_excess, 1e-10)


def check_comparison_reflected():
    lat = _lattice()
    spec = GeneratorSpec(lambda t, x, y, z: np.full(np.shape(x), -1.0), make_modulus("lipschitz", L=1.0))
    xi = lambda x: np.maximum(1.0 - x**2, 0.0)  # noqa: E731
    lo = solve_reflected_lipschitz(spec, Obstacle(lambda t, x: 1.0 - x**2 - 0.5), xi, _band(), lat)
    hi = solve_reflected_lipschitz(spec, Obstacle(lambda t, x: 1.0 - x**2), xi, _band(), lat)
    r = comparison_reflected(lo, hi, 1e-6)
    return CheckRow("comparison_reflected", r.passed, r.max_excess, 1e-6)


def check_martingale_condition():
    lat = _lattice()
    spec = GeneratorSpec(lambda t, x, y, z: np.full(np.shape(x), -1.0), make_modulus("lipschitz", L=1.0))
    s = solve_reflected_lipschitz(
        spec, Obstacle(lambda t, x: 1.0 - x**2), lambda x: np.maximum(1.0 - x**2, 0.0), _band(), lat
    )
    r = martingale_condition_check(s)
    return CheckRow("martingale_condition", r.passed, r.max_complementarity_violation, 0.0)


CHECKS = {
    "jensen": check_jensen,
    "jensen_negative_control": check_jensen_negative,
    **{f"doob_{i + 1}": _doob(*t) for i, t in enumerate(DOOB_TRIPLES)},
    "bdg_constant": _bdg("constant", lambda t: 1.0),
    "bdg_front_loaded": _bdg("front_loaded", lambda t: 2.0 if t < 0.5 else 0.0),
    "bdg_ramp": _bdg("ramp", lambda t: 1.0 + t),
    "affine_envelope": check_affine_envelope,
    "transform_concave": check_transform,
    "bihari_gronwall": check_bihari_gronwall,
    "bihari_zero_start": check_bihari_zero,
    "comparison_gbsde": check_comparison_gbsde,
    "comparison_reflected": check_comparison_reflected,
    "martingale_condition": check_martingale_condition,
}


def check_divergence(label: str, expected: str) -> CheckRow:
    if expected not in ("divergent", "convergent"):
        raise PreconditionError(f"expected classification must be divergent or convergent, got {expected!r}")
    rho, beta = named_modulus(label)
    report = divergence_check(rho, beta)
    return CheckRow(
        f"divergence_{label}",
        report.classification == expected,
        detail=f"expected={expected} observed={report.classification}",
    )


def suite_names():
    return list(CHECKS)


def run_suite(names=None, divergence_cases=DEFAULT_DIVERGENCE_CASES):
    """Run the named checks (all by default) plus the divergence cases.

    An empty selection is a configuration error.
    """
    names = suite_names() if names is None else list(names)
    cases = list(divergence_cases)
    if not names and not cases:
        raise PreconditionError("empty check suite")
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise PreconditionError(f"unknown checks: {unknown}")
    rows = []
    for name in names:
        try:
            row = CHECKS[name]()
            rows.append(replace(row, name=name, passed=bool(row.passed)))
        except GBSDEError as exc:
            rows.append(CheckRow(name, False, detail=f"{type(exc).__name__}: {exc}"))
    for label, expected in cases:
        rows.append(check_divergence(label, expected))
    return rows

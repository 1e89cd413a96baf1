import math

import numpy as np
import pytest

from reflected_gbsde.errors import BlowUpError, InternalInconsistency, PreconditionError
from reflected_gbsde.moduli import (
    GeneratorSpec,
    MaoModulus,
    affine_envelope,
    bihari_majorant,
    check_H1,
    check_H1prime,
    divergence_check,
    make_modulus,
    sample_cloud,
    concave_transform,
)


def sqrt_modulus(beta=2.0):
    return make_modulus("custom", evaluator=lambda u: np.sqrt(np.maximum(u, 0.0)), beta=beta, label="sqrt")


def test_lipschitz_value():
    assert make_modulus("lipschitz", L=2.0)(1.0) == 2.0


def test_hlog_is_not_lipschitz_at_zero():
    rho = make_modulus("hlog", beta=3.0)
    u = 10.0 ** -np.arange(1, 12)
    ratios = rho(u) / u
    assert np.all(np.diff(ratios) > 0)
    assert ratios[-1] > 3.0


def test_hlog_is_continuous_at_cap():
    rho = make_modulus("hlog", beta=3.0)
    below, above = rho(1.0 - 1e-9), rho(1.0 + 1e-9)
    assert abs(above - below) < 1e-8


@pytest.mark.parametrize(
    "kind, params",
    [("lipschitz", {"L": 0.0}), ("hlog", {"beta": 2.0}), ("hlog", {"u0": 100.0}), ("nope", {}), ("lipschitz", {"L": 1, "x": 2})],
)
def test_make_modulus_rejects(kind, params):
    with pytest.raises(PreconditionError):
        make_modulus(kind, **params)


def test_custom_modulus_must_be_concave():
    with pytest.raises(PreconditionError, match="concav"):
        make_modulus("custom", evaluator=lambda u: np.asarray(u) ** 2)


def test_modulus_clips_negative_arguments():
    rho = make_modulus("lipschitz", L=3.0)
    assert rho(-1.0) == 0.0


@pytest.mark.parametrize("label, rho, beta", [
    ("identity", make_modulus("lipschitz", L=1.0), 3.0),
    ("hlog3", make_modulus("hlog", beta=3.0), 3.0),
    ("hlog2.01", make_modulus("hlog", beta=2.01), 2.01),
])
def test_divergent_moduli(label, rho, beta):
    report = divergence_check(rho, beta)
    assert report.classification == "divergent", report.evidence


def test_sqrt_is_convergent():
    report = divergence_check(sqrt_modulus(), 2.0)
    assert report.classification == "convergent"
    assert report.evidence["increment_floor"] == 0.25


@pytest.mark.parametrize("L", [0.01, 1.0, 10.0, 1e4])
@pytest.mark.parametrize("beta", [1.5, 3.0, 8.0])
def test_lipschitz_always_divergent(L, beta):
    assert divergence_check(make_modulus("lipschitz", L=L), beta).divergent


def test_classifier_is_scale_free():
    rho = make_modulus("hlog", beta=3.0)
    scaled = make_modulus("custom", evaluator=lambda u: 50.0 * rho(u), beta=3.0)
    assert divergence_check(scaled, 3.0).classification == divergence_check(rho, 3.0).classification


def test_transform_identity():
    out = concave_transform(make_modulus("lipschitz", L=1.0), 2.0)
    u = np.geomspace(1e-6, 1e3, 50)
    np.testing.assert_allclose(out(u), u, rtol=1e-12)


@pytest.mark.parametrize("r", [1.5, 2.0, 3.0, 7.0])
def test_transform_keeps_concavity(r):
    out = concave_transform(make_modulus("hlog", beta=3.0), r)
    assert out.violations(concavity=True) == []


def test_transform_below_one_keeps_divergence():
    out = concave_transform(make_modulus("lipschitz", L=1.0), 0.5)
    assert divergence_check(out, 1.0).divergent


@pytest.mark.parametrize("rho, expected", [
    (make_modulus("lipschitz", L=1.0), (1.0, 1.0)),
    (make_modulus("lipschitz", L=5.0), (5.0, 5.0)),
])
def test_affine_envelope_linear(rho, expected):
    assert affine_envelope(rho) == expected


def test_affine_envelope_hlog():
    rho = make_modulus("hlog", beta=3.0)
    a, b = affine_envelope(rho)
    assert a == b == pytest.approx(float(rho(1.0)))
    u = np.geomspace(1e-8, 1e4, 500)
    assert np.all(rho(u) <= a + b * u + 1e-12)


def test_affine_envelope_detects_non_concave():
    fake = MaoModulus(lambda u: np.asarray(u, float) ** 2, "square")
    with pytest.raises(InternalInconsistency):
        affine_envelope(fake)


def test_bihari_gronwall():
    w = bihari_majorant(lambda u: u, 1.0, 1.0, 1.0)
    assert abs(w[0] - math.e) <= 1e-6
    assert w[-1] == 1.0 and len(w) == 1001


def test_bihari_trivial_cases():
    assert np.all(bihari_majorant(lambda u: u, 2.5, 0.0, 1.0) == 2.5)
    assert np.all(bihari_majorant(lambda u: u, 0.0, 3.0, 1.0) == 0.0)


def test_bihari_blow_up():
    with pytest.raises(BlowUpError) as info:
        bihari_majorant(lambda u: u * u, 1.0, 1.0, 2.0)
    assert 0.0 < info.value.time < 2.0


def test_cloud_is_deterministic():
    a, b = sample_cloud(n=64), sample_cloud(n=64)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key])


def test_H1_sine():
    spec = GeneratorSpec(lambda t, x, y, z: np.sin(y), make_modulus("lipschitz", L=1.0))
    assert check_H1(spec, sample_cloud()).passed


def test_H1_hlog_generator():
    rho = make_modulus("hlog", beta=3.0)
    spec = GeneratorSpec(lambda t, x, y, z: rho(np.abs(y)), rho)
    assert check_H1(spec, sample_cloud()).passed


def test_H1_quadratic_fails():
    spec = GeneratorSpec(lambda t, x, y, z: y**2, make_modulus("lipschitz", L=1.0))
    report = check_H1(spec, sample_cloud())
    assert not report.passed and report.max_violation > 1.0


def test_H1_z_part():
    spec = GeneratorSpec(lambda t, x, y, z: 2.0 * z, make_modulus("lipschitz", L=1.0), z_lipschitz=2.0)
    assert check_H1(spec, sample_cloud()).passed
    tight = GeneratorSpec(lambda t, x, y, z: 2.0 * z, make_modulus("lipschitz", L=1.0), z_lipschitz=1.0)
    assert not check_H1(tight, sample_cloud()).passed


def test_H1prime_lipschitz():
    spec = GeneratorSpec(lambda t, x, y, z: 0.5 * y, make_modulus("lipschitz", L=0.5))
    mu = make_modulus("lipschitz", L=2.0 ** 2)
    assert check_H1prime(spec, mu, 2.0, sample_cloud()).passed


def test_hlog_finite_at_subnormal_arguments():
    rho = make_modulus("hlog", beta=3.0)
    vals = rho(np.array([5e-324, 1e-310, 1e-300]))
    assert np.all(np.isfinite(vals)) and np.all(vals < 1e-290)

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotund.domains import DomainSpec, smat, svec
from rotund.exceptions import DimensionError, DomainError, NoConjugateError, UnknownNameError
from rotund.integrands import (CATALOG_NAMES, affine, catalog_get, classify, numeric_conjugate,
                               quartic_root_product)

# independent mpmath definitions of the scalar integrands and their derivatives
MP_PHI = {
    "boltzmann_shannon": (lambda x: x * mp.log(x) - x, lambda x: mp.log(x)),
    "fermi_dirac": (lambda x: x * mp.log(x) + (1 - x) * mp.log(1 - x), lambda x: mp.log(x) - mp.log(1 - x)),
    "burg": (lambda x: -mp.log(x), lambda x: -1 / x),
    "neg_log_cos": (lambda x: -mp.log(mp.cos(x)), lambda x: mp.tan(x)),
    "cosh_sum": (mp.cosh, mp.sinh),
    "atanh_entropy": (lambda x: x * mp.atanh(x) + mp.log(1 - x * x) / 2, mp.atanh),
    "burg_plus_linear": (lambda x: x - mp.log(x), lambda x: 1 - 1 / x),
}
Y_SAMPLES = {
    "boltzmann_shannon": [-3.0, -0.5, 0.0, 0.7, 2.5],
    "fermi_dirac": [-6.0, -1.0, 0.0, 1.5, 8.0],
    "burg": [-20.0, -2.0, -1.0, -0.3, -0.01],
    "neg_log_cos": [-10.0, -1.0, 0.0, 0.5, 30.0],
    "cosh_sum": [-40.0, -1.0, 0.0, 0.3, 7.0],
    "atanh_entropy": [-9.0, -0.5, 0.0, 1.0, 4.0],
    "burg_plus_linear": [-30.0, -1.0, 0.0, 0.5, 0.99],
}


def mp_conjugate(name, y):
    """sup_z zy - phi(z) at the stationary point phi'(z) = y, in 40-digit arithmetic."""
    f, df = MP_PHI[name]
    with mp.workdps(40):
        return _mp_conjugate(f, df, name, mp.mpf(y))


def _mp_conjugate(f, df, name, y):
    inverse = {  # inverses of phi', checked against phi' below
        "boltzmann_shannon": lambda: mp.exp(y),
        "fermi_dirac": lambda: 1 / (1 + mp.exp(-y)),
        "burg": lambda: -1 / y,
        "neg_log_cos": lambda: mp.atan(y),
        "cosh_sum": lambda: mp.asinh(y),
        "atanh_entropy": lambda: mp.tanh(y),
        "burg_plus_linear": lambda: 1 / (1 - y),
    }
    z = inverse[name]()
    assert abs(df(z) - y) <= mp.mpf(10) ** -30 * (1 + abs(y))
    return z * y - f(z), z


@pytest.mark.parametrize("name", sorted(MP_PHI))
def test_scalar_values_match_mpmath(name):
    phi = catalog_get(name)
    f, df = MP_PHI[name]
    lo, hi = phi.domain.sampling_box()
    for z in np.linspace(lo[0], hi[0], 13)[1:-1]:
        with mp.workdps(40):
            fz, dfz = float(f(mp.mpf(z))), float(df(mp.mpf(z)))
        assert phi.value(z) == pytest.approx(fz, rel=1e-13, abs=1e-13)
        assert phi.grad(z) == pytest.approx(dfz, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("name", sorted(MP_PHI))
def test_scalar_conjugates_match_mpmath(name):
    phi = catalog_get(name)
    for y in Y_SAMPLES[name]:
        val, z = mp_conjugate(name, y)
        assert phi.conj_value(y) == pytest.approx(float(val), rel=1e-13, abs=1e-13)
        assert phi.conj_grad(y) == pytest.approx(float(z), rel=1e-12, abs=1e-13)


# hand-derived reference values
@pytest.mark.parametrize("name,y,expected", [
    ("boltzmann_shannon", 0.0, 1.0),
    ("fermi_dirac", 0.0, math.log(2.0)),
    ("burg", -1.0, -1.0),
    ("cosh_sum", 0.0, -1.0),
    ("neg_log_cos", 1.0, math.pi / 4 - math.log(2.0) / 2),
    ("atanh_entropy", 0.0, 0.0),
    ("burg_plus_linear", 0.0, -1.0),
])
def test_conjugate_reference_values(name, y, expected):
    assert catalog_get(name).conj_value(y) == pytest.approx(expected, abs=1e-15)


def test_closed_domain_endpoints_are_finite():
    fd = catalog_get("fermi_dirac")
    assert fd.value(0.0) == 0.0 and fd.value(1.0) == 0.0
    at = catalog_get("atanh_entropy")
    assert at.value(1.0) == pytest.approx(math.log(2.0), abs=1e-15)
    assert catalog_get("boltzmann_shannon").value(0.0) == 0.0
    assert catalog_get("burg").value(0.0) == math.inf
    assert catalog_get("burg").value(-1.0) == math.inf


def test_conjugate_outside_domain_is_inf():
    assert catalog_get("burg").conj_value(0.5) == math.inf
    assert catalog_get("burg_plus_linear").conj_value(1.0) == math.inf
    with pytest.raises(DomainError):
        catalog_get("burg").conj_grad(1.0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_inverse_gap_conjugate_against_scalar_maximisation(d):
    from scipy.optimize import minimize_scalar
    phi = catalog_get("inverse_gap", d)
    rng = np.random.default_rng(d)
    for _ in range(5):
        y = rng.normal(size=d) * 3
        s = np.linalg.norm(y)
        res = minimize_scalar(lambda r: -(r * s - 1 / (1 - r * r)), bounds=(0, 1 - 1e-12), method="bounded",
                              options={"xatol": 1e-14})
        assert phi.conj_value(y) == pytest.approx(-res.fun, rel=1e-10, abs=1e-10)
    assert phi.conj_value(np.zeros(d)) == -1.0


def test_norm_power_conjugate():
    for p in (1.5, 2.0, 3.0):
        phi = catalog_get("norm_power", 2, p=p)
        q = p / (p - 1)
        y = np.array([0.3, -1.2])
        # (|.|^p / p)^* = |.|^q / q
        assert phi.conj_value(y) == pytest.approx(np.linalg.norm(y) ** q / q, rel=1e-14)


def test_log_det_conjugate_pair():
    phi = catalog_get("log_det", 3)
    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    z = svec(m)
    assert phi.value(z) == pytest.approx(-math.log(np.linalg.det(m)), rel=1e-14)
    y = phi.grad(z)
    np.testing.assert_allclose(smat(y), -np.linalg.inv(m), rtol=1e-13)
    # Fenchel-Young equality at a gradient pair: phi + phi* = <z, y> = -k
    assert phi.value(z) + phi.conj_value(y) == pytest.approx(np.dot(z, y), abs=1e-13)
    assert np.dot(z, y) == pytest.approx(-2.0, abs=1e-13)
    with pytest.raises(DimensionError):
        catalog_get("log_det", 4)


def test_conj_hess_matches_fd_of_conj_grad():
    for name, d in [("fermi_dirac", 2), ("inverse_gap", 2), ("log_det", 3), ("norm_power", 3)]:
        phi = catalog_get(name, d)
        y = phi.grad(phi.domain.sample(np.random.default_rng(3), 1)[0] * 0.5
                     if name != "log_det" else svec(np.array([[1.5, 0.2], [0.2, 0.8]])))
        h = phi.conj_hess(y)
        fd = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1e-6
            fd[:, j] = (phi.conj_grad(y + e) - phi.conj_grad(y - e)) / 2e-6
        np.testing.assert_allclose(h, fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("name", [n for n in CATALOG_NAMES if n != "clipped_norm"])
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fenchel_young_inequality(name, seed):
    d = 3 if name == "log_det" else 2
    phi = catalog_get(name, d)
    rng = np.random.default_rng(seed)
    z = phi.domain.sample(rng, 1)[0]
    y = phi.conj_domain.sample(rng, 1)[0]
    lhs = phi.value(z) + phi.conj_value(y)
    assert lhs >= np.dot(z, y) - 1e-9 * (1 + abs(lhs))


@pytest.mark.parametrize("name", [n for n in CATALOG_NAMES if n != "clipped_norm"])
def test_biconjugate_view(name):
    d = 3 if name == "log_det" else 1
    phi = catalog_get(name, d)
    psi = phi.conjugate()
    y = phi.conj_domain.sample(np.random.default_rng(0), 3)
    np.testing.assert_allclose(psi.value(y), phi.conj_value(y))
    z = psi.conj_grad(psi.grad(y[0])) if psi.has_conjugate else None
    if z is not None:
        np.testing.assert_allclose(z, y[0], rtol=1e-8, atol=1e-10)


def test_numeric_conjugate_oracle():
    phi = catalog_get("boltzmann_shannon")
    box = DomainSpec.closed_box([0.0], [5.0])
    assert numeric_conjugate(phi, np.array([0.5]), box, 20001) == pytest.approx(math.exp(0.5), abs=1e-6)


CLASSES = {
    "boltzmann_shannon": True, "fermi_dirac": True, "burg": False, "norm_power": True,
    "neg_log_cos": True, "cosh_sum": True, "atanh_entropy": True, "inverse_gap": True,
    "burg_plus_linear": False, "clipped_norm": False, "log_det": False,
}


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_classifier_table(name):
    d = 3 if name == "log_det" else 1
    cls = classify(catalog_get(name, d))
    assert cls.strongly_rotund is CLASSES[name]
    assert bool(cls.reasons) is cls.strongly_rotund


def test_classifier_warns_on_restricted_conjugate_domain():
    assert classify(catalog_get("burg")).warnings
    assert not classify(catalog_get("boltzmann_shannon")).warnings


def test_clipped_norm_has_no_conjugate():
    phi = catalog_get("clipped_norm", 2)
    assert phi.value(np.array([3.0, 4.0])) == 1.0
    assert phi.value(np.array([0.3, 0.4])) == pytest.approx(0.5)
    assert (phi.value_bound, phi.bound_scope, phi.clarke_bound) == (1.0, "space", 1.0)
    with pytest.raises(NoConjugateError):
        phi.conj_value(np.zeros(2))


def test_auxiliary_integrands():
    q = quartic_root_product()
    assert q.value(np.array([0.0, 0.7])) == 0.0
    assert q.value(np.array([0.5, 0.5])) == pytest.approx(-math.sqrt(0.5))
    a = affine([2.0])
    assert a.value(3.0) == 6.0 and a.grad(1.0) == 2.0


def test_catalog_errors():
    with pytest.raises(UnknownNameError):
        catalog_get("not_an_integrand")
    with pytest.raises(DimensionError):
        catalog_get("burg", 0)


def test_integrands_are_immutable():
    phi = catalog_get("burg")
    with pytest.raises(AttributeError):
        phi.name = "other"


def test_vectorised_shapes():
    phi = catalog_get("cosh_sum", 2)
    z = np.zeros((4, 5, 2))
    assert phi.value(z).shape == (4, 5)
    assert phi.grad(z).shape == (4, 5, 2)
    assert phi.conj_hess(z).shape == (4, 5, 2, 2)

import numpy as np
import pytest

from app.errors import ConeBreach, DomainError
from app.grid import (
    PotentialField,
    TorusGeometry,
    TrigPolynomial,
    geometry_from_dict,
    hessian_field,
    real_hessian,
    relative_eigensystem,
    require_positive_definite,
)
from utils.helpers import chunked_map


def _geometry(shape=(16, 16), scheme="spectral", X=None, W0=None):
    n = len(shape)
    return TorusGeometry(n, shape, np.eye(n) if X is None else X,
                         np.eye(n) if W0 is None else W0, scheme)


def test_geometry_validation():
    with pytest.raises(DomainError):
        _geometry((15, 16))
    with pytest.raises(DomainError):
        _geometry((4, 4))
    with pytest.raises(DomainError):
        _geometry(X=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        _geometry(scheme="fd4")
    with pytest.raises(DomainError):
        TorusGeometry(2, (16,), np.eye(2), np.eye(2))


def test_geometry_from_dict_round_trips_to_dict():
    spec = {"n": 2, "gridShape": [16, 8], "X": [[2.0, 0.0], [0.0, 1.0]],
            "W0": [[1.0, 0.0], [0.0, 1.0]], "scheme": "fd2"}
    assert geometry_from_dict(spec).to_dict() == spec


def test_potential_field_is_mean_zero():
    phi = PotentialField(np.arange(16.0).reshape(4, 4))
    assert phi.values.mean() == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        PotentialField(np.array([0.0, np.nan]))


def test_spectral_hessian_is_exact_on_trig_polynomials():
    geom = _geometry((16, 16))
    trig = TrigPolynomial.from_dict(
        {"terms": [{"amplitude": 0.3, "wavevector": [1, 1]},
                   {"amplitude": -0.2, "wavevector": [2, 0], "kind": "sin"}]}, 2)
    np.testing.assert_allclose(real_hessian(geom, trig.sample(geom)), trig.hessian(geom), atol=1e-10)


def test_fd2_hessian_converges_at_second_order():
    trig = TrigPolynomial.from_dict({"terms": [{"amplitude": 1.0, "wavevector": [1, 0]}]}, 2)
    errors = []
    for size in (16, 32):
        geom = _geometry((size, size), scheme="fd2")
        diff = real_hessian(geom, trig.sample(geom)) - trig.hessian(geom)
        errors.append(np.max(np.abs(diff)))
    assert 3.8 < errors[0] / errors[1] < 4.2


def test_trig_polynomial_rejects_wrong_wavevector_length():
    with pytest.raises(DomainError):
        TrigPolynomial.from_dict({"terms": [{"amplitude": 1.0, "wavevector": [1]}]}, 2)


def test_relative_eigensystem_against_generalized_problem():
    X = np.array([[2.0, 0.5], [0.5, 1.0]])
    B = np.array([[[1.0, 0.2], [0.2, 3.0]], [[2.0, 0.0], [0.0, 2.0]]])
    lam, _ = relative_eigensystem(B, X)
    for i in range(2):
        expected = np.sort(np.linalg.eigvals(np.linalg.solve(X, B[i])).real)
        np.testing.assert_allclose(lam[i], expected)


def test_hessian_field_of_zero_potential_is_background():
    W0 = np.diag([1.0, 2.0])
    geom = _geometry(W0=W0)
    lam = hessian_field(geom, PotentialField.zeros(geom)).eigenvalues()
    np.testing.assert_allclose(lam[..., 0], 1.0)
    np.testing.assert_allclose(lam[..., 1], 2.0)


def test_require_positive_definite_reports_worst_point():
    geom = _geometry((8, 8))
    lam = np.ones((8, 8, 2))
    lam[3, 5, 0] = -0.5
    with pytest.raises(ConeBreach) as info:
        require_positive_definite(geom, lam)
    assert info.value.details["point"] == [3 / 8, 5 / 8]
    assert info.value.details["minEigenvalue"] == -0.5


def test_threaded_eigensystem_matches_serial():
    geom = _geometry((16, 16))
    trig = TrigPolynomial.from_dict({"terms": [{"amplitude": 0.05, "wavevector": [1, 2]}]}, 2)
    field = hessian_field(geom, trig.sample(geom))
    serial = relative_eigensystem(field.B, geom.X, threads=1)[0]
    threaded = relative_eigensystem(field.B, geom.X, threads=4)[0]
    np.testing.assert_allclose(serial, threaded, rtol=0, atol=1e-14)


def test_chunked_map_concatenates_tuples():
    values = np.arange(10.0)
    out = chunked_map(lambda a: (a * 2, a + 1), values, threads=3)
    np.testing.assert_array_equal(out[0], values * 2)
    np.testing.assert_array_equal(out[1], values + 1)


def test_hessian_field_is_read_relative_to_the_reference_form():
    X = np.array([[2.0, 0.5], [0.5, 1.0]])
    geom = _geometry((8, 8), X=X, W0=np.diag([3.0, 2.0]))
    field = hessian_field(geom, PotentialField.zeros(geom))
    assert not hasattr(field, "A")
    expected = np.sort(np.linalg.eigvals(np.linalg.solve(X, np.diag([3.0, 2.0]))).real)
    lam = field.eigenvalues()
    np.testing.assert_allclose(lam.reshape(-1, 2), np.tile(expected, (64, 1)), rtol=1e-12)

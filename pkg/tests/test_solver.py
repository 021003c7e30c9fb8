import numpy as np
import pytest

from app.errors import CompatibilityDefect, ConeBreach, DomainError
from app.grid import PotentialField, TorusGeometry, TrigPolynomial
from app.kernel import CoefficientSet
from app.solver import (
    SolverOptions,
    class_path_probe,
    cohomology_integrals,
    cone_margin_field,
    continuity_solve,
    linearize,
    manufacture,
    newton_solve,
    path_regime_check,
    residual,
)

SURFACE = CoefficientSet(2, (1.0,))


def _flat(size=16, W0=None):
    return TorusGeometry(2, (size, size), np.eye(2), np.eye(2) if W0 is None else W0)


def _bump(amplitude=0.04):
    return TrigPolynomial.from_dict(
        {"terms": [{"amplitude": amplitude, "wavevector": [1, 0]},
                   {"amplitude": amplitude, "wavevector": [0, 1]}]}, 2)


def test_cohomology_integrals_of_diagonal_background():
    integrals = cohomology_integrals(_flat(W0=np.diag([1.0, 2.0])))
    assert integrals.values == pytest.approx((1.5, 2.0))
    assert integrals.c0 == pytest.approx(2.0)
    assert integrals.defect is None


def test_compatibility_defect_of_constant_solution_is_zero():
    assert cohomology_integrals(_flat(), SURFACE).defect == pytest.approx(0.0, abs=1e-15)


def test_solver_options_from_config_keys():
    options = SolverOptions.from_dict({"tol": 1e-8, "maxIter": 5, "enforceRegime": True}, threads=2)
    assert options.tol == 1e-8
    assert options.max_iter == 5
    assert options.enforce_regime
    assert options.threads == 2


def test_residual_vanishes_at_constant_solution():
    geom = _flat()
    values = residual(geom, SURFACE, 0.0, 1.0, PotentialField.zeros(geom))
    assert np.max(np.abs(values)) == pytest.approx(0.0, abs=1e-14)


def test_linearization_at_identity_is_scaled_laplacian():
    geom = _flat()
    operator = linearize(geom, SURFACE, 0.0, 1.0, PotentialField.zeros(geom))
    psi = TrigPolynomial.from_dict({"terms": [{"amplitude": 1.0, "wavevector": [1, 0]}]}, 2)
    # dG/dlam_i = lam_j - 1/2 = 1/2 at the identity
    expected = 0.125 * np.trace(psi.hessian(geom), axis1=-2, axis2=-1)
    np.testing.assert_allclose(operator.apply(psi.sample(geom)), expected, atol=1e-10)


def test_continuity_solve_keeps_constant_solution():
    geom = _flat()
    state = continuity_solve(geom, SURFACE, np.zeros(geom.grid_shape))
    assert state.t == 1.0
    assert state.residual_sup <= 1e-10
    assert state.phi.sup() == pytest.approx(0.0, abs=1e-12)
    assert state.min_cone_margin == pytest.approx(0.5)
    assert state.c0 == pytest.approx(1.0)
    assert [stage["t"] for stage in state.stages][0] == 0.0
    assert all(stage["minConeMargin"] > 0 for stage in state.stages)


def test_continuity_solve_rejects_incompatible_source():
    geom = _flat()
    with pytest.raises(CompatibilityDefect):
        continuity_solve(geom, SURFACE, np.full(geom.grid_shape, 0.5))


def test_manufactured_source_has_zero_residual_at_phi_star():
    geom = _flat()
    case = manufacture(geom, SURFACE, _bump())
    assert case.min_cone_margin == pytest.approx(1.0 - 0.5 / (1.0 - 0.01 * np.pi ** 2 * 4.0), rel=1e-6)
    assert abs(float(np.mean(case.f_grid))) < 1e-12
    values = residual(geom, SURFACE, case.f_grid, 1.0, case.phi_star)
    assert np.max(np.abs(values)) < 1e-10


def test_manufacture_rejects_potential_outside_the_cone():
    with pytest.raises(ConeBreach):
        manufacture(_flat(), SURFACE, _bump(0.2))


@pytest.mark.slow
def test_continuity_solve_recovers_manufactured_potential():
    geom = _flat()
    case = manufacture(geom, SURFACE, _bump())
    state = continuity_solve(geom, SURFACE, case.f_grid)
    assert state.residual_sup <= 1e-10
    assert np.max(np.abs(state.phi.values - case.phi_star.values)) < 1e-7
    assert abs(state.slack) < 1e-9
    assert state.min_cone_margin > 0.17


def test_newton_solve_from_zero_at_final_stage():
    geom = _flat()
    case = manufacture(geom, SURFACE, _bump(0.02))
    state = newton_solve(geom, SURFACE, case.f_grid, 1.0, PotentialField.zeros(geom))
    assert state.residual_sup <= 1e-10
    trace = state.trace_frame()
    assert list(trace.columns) == ["iteration", "residual", "damping", "krylovIterations"]
    assert trace["residual"].iloc[-1] < trace["residual"].iloc[0]


def test_cone_margin_field_finds_worst_point():
    geom = _flat()
    margin, point = cone_margin_field(geom, SURFACE, 1.0, _bump().sample(geom))
    assert margin == pytest.approx(1.0 - 0.5 / (1.0 - 0.04 * np.pi ** 2), rel=1e-6)
    assert 0.0 in point


def _bump_margin(size, scheme):
    geom = TorusGeometry(2, (size, size), np.eye(2), np.eye(2), scheme)
    margin, _ = cone_margin_field(geom, SURFACE, 1.0, _bump().sample(geom))
    return margin


def test_cone_margin_is_stable_under_grid_refinement():
    exact = 1.0 - 0.5 / (1.0 - 0.04 * np.pi ** 2)
    assert _bump_margin(64, "spectral") == pytest.approx(_bump_margin(32, "spectral"), abs=1e-10)
    assert _bump_margin(64, "spectral") == pytest.approx(exact, rel=1e-6)
    coarse, fine = (abs(_bump_margin(size, "fd2") - exact) for size in (32, 64))
    assert fine < coarse < 1e-2


def test_path_regime_check_flags_low_source():
    check = path_regime_check(SURFACE, 1.0, np.full((4, 4), -1.0), 1.0)
    assert not check["regimeOk"]
    assert check["fm"] == pytest.approx(-1.0 / 512.0)
    assert path_regime_check(SURFACE, 0.0, np.zeros((4, 4)), 1.0)["regimeOk"]


def test_class_path_probe_is_monotone():
    geom = _flat()
    report = class_path_probe(geom, SURFACE, np.zeros(geom.grid_shape), [1.0, 0.5, 0.0])
    assert report.monotone()
    assert report.smallest_solvable() == 0.0
    frame = report.to_frame()
    assert frame["solvable"].all()
    assert frame.loc[frame["s"] == 1.0, "slackConstant"].iloc[0] == pytest.approx(2.0)


def test_class_path_probe_requires_decreasing_values():
    geom = _flat()
    with pytest.raises(DomainError):
        class_path_probe(geom, SURFACE, np.zeros(geom.grid_shape), [0.0, 1.0])


def test_manufacture_of_zero_potential_gives_zero_source():
    case = manufacture(_flat(), SURFACE, TrigPolynomial())
    np.testing.assert_allclose(case.f_grid, 0.0, atol=1e-15)
    assert case.min_cone_margin == pytest.approx(0.5)


def test_cone_margin_field_without_coefficients_is_one():
    geom = _flat()
    margin, _ = cone_margin_field(geom, CoefficientSet(2, (0.0,)), 1.0, _bump().sample(geom))
    assert margin == 1.0


def test_residual_is_gauge_invariant():
    geom = _flat()
    case = manufacture(geom, SURFACE, _bump())
    base = residual(geom, SURFACE, case.f_grid, 0.7, case.phi_star.values)
    shifted = residual(geom, SURFACE, case.f_grid, 0.7, case.phi_star.values + 3.25)
    np.testing.assert_allclose(shifted, base, rtol=0, atol=1e-12)


def test_linearization_matches_finite_differences():
    geom = _flat()
    phi = _bump().sample(geom)
    f_grid = manufacture(geom, SURFACE, _bump()).f_grid
    operator = linearize(geom, SURFACE, f_grid, 0.8, phi)
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(5):
        terms = [{"amplitude": float(rng.normal()), "wavevector": [int(k) for k in rng.integers(-2, 3, 2)],
                  "kind": str(rng.choice(["cos", "sin"]))} for _ in range(3)]
        psi = TrigPolynomial.from_dict({"terms": terms}, 2).sample(geom) * 0.01
        up = residual(geom, SURFACE, f_grid, 0.8, phi + h * psi)
        down = residual(geom, SURFACE, f_grid, 0.8, phi - h * psi)
        applied = operator.apply(psi)
        scale = max(np.max(np.abs(applied)), 1e-12)
        assert np.max(np.abs((up - down) / (2 * h) - applied)) / scale < 1e-6
    np.testing.assert_allclose(operator.apply(np.ones(geom.grid_shape)), 0.0, atol=1e-12)


def test_one_dimensional_closed_form():
    geom = TorusGeometry(1, (32,), np.eye(1), np.eye(1))
    source = TrigPolynomial.from_dict({"constant": 1.0,
                                       "terms": [{"amplitude": 0.3, "wavevector": [1]}]}, 1)
    state = continuity_solve(geom, CoefficientSet(1, ()), source.sample(geom))
    x = geom.coordinates()[0]
    expected = -(0.3 / np.pi ** 2) * np.cos(2 * np.pi * x)
    assert np.max(np.abs(state.phi.values - expected)) < 1e-9
    assert state.min_cone_margin == 1.0


def test_first_stage_solves_the_monge_ampere_endpoint():
    geom = _flat()
    case = manufacture(geom, SURFACE, _bump(0.02))
    state = newton_solve(geom, SURFACE, case.f_grid, 0.0, PotentialField.zeros(geom))
    # at t = 0 the equation reduces to e_n(lambda) = c0, solved by the background
    assert state.residual_sup <= 1e-10
    assert state.phi.sup() < 1e-10
    assert state.slack == pytest.approx(0.0, abs=1e-10)


@pytest.mark.slow
def test_finite_difference_scheme_converges_at_second_order():
    errors = []
    for size in (16, 32, 64):
        geom = TorusGeometry(2, (size, size), np.eye(2), np.eye(2), scheme="fd2")
        spectral = geom.with_scheme("spectral")
        case = manufacture(spectral, SURFACE, _bump())
        state = continuity_solve(geom, SURFACE, case.f_grid)
        errors.append(np.max(np.abs(state.phi.values - case.phi_star.values)))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    assert all(3.5 <= r <= 4.5 for r in ratios)


@pytest.mark.slow
def test_spectral_scheme_recovers_manufactured_potential_on_64_grid():
    geom = _flat(64)
    case = manufacture(geom, SURFACE, _bump())
    state = continuity_solve(geom, SURFACE, case.f_grid)
    assert np.max(np.abs(state.phi.values - case.phi_star.values)) <= 1e-8
    assert abs(state.slack) <= 1e-8

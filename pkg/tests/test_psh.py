from math import log, pi

import numpy as np
import pytest

from app.errors import DomainError, StateError
from app.grid import TorusGeometry, TrigPolynomial
from app.kernel import CoefficientSet
from app.psh import (
    RadialMollifier,
    SampledPotential,
    SingularPotential,
    box_points,
    check_degenerate_cone,
    check_uniform_cone,
    compute_cn,
    glue_potentials,
    gluing_threshold,
    lelong_level,
    lelong_number_of_sum,
    marginal_kernel,
    mollify,
    quadratic_smooth,
    regmax_constant,
    regularized_max,
    sphere_nodes,
)

SURFACE = CoefficientSet(2, (1.0,))


# --- mollifiers and c_n ---


def test_poly_mollifier_is_normalized_with_closed_form_log_moment():
    mollifier = RadialMollifier(1)
    assert mollifier.normalization_defect < 1e-10
    assert mollifier.scale == pytest.approx(4.0 / pi)
    assert mollifier.log_moment == pytest.approx(25.0 / 24.0, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mollifiers_are_normalized(n):
    for kind in ("poly", "constant"):
        assert RadialMollifier(n, kind).normalization_defect < 1e-8


def test_compute_cn_for_constant_kernel():
    assert compute_cn(RadialMollifier(1, "constant")) == pytest.approx(4.0 / 13.0, abs=1e-10)


def test_compute_cn_for_poly_kernel():
    assert compute_cn(RadialMollifier(1)) == pytest.approx(48.0 / 169.0, rel=1e-10)


def test_compute_cn_rejects_unnormalized_kernel():
    raw = RadialMollifier(1, "sampled", np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(StateError):
        compute_cn(raw)
    with pytest.raises(DomainError):
        compute_cn(RadialMollifier(1), n=2)


def test_gluing_threshold():
    assert gluing_threshold(0.5, 0.02, 0.1) == pytest.approx(1e-4)


def test_sphere_nodes_are_unit_vectors_with_unit_mass():
    for n in (1, 2, 3):
        nodes, weights = sphere_nodes(n, 8, 6)
        np.testing.assert_allclose(np.linalg.norm(nodes, axis=1), 1.0)
        assert weights.sum() == pytest.approx(1.0)


# --- mollification ---


def test_mollify_constant_echoes_constant():
    mollifier = RadialMollifier(1, "constant")
    potential = SingularPotential(1, smooth=quadratic_smooth(constant=3.0))
    for x in ([0.0, 0.0], [0.5, -0.25]):
        assert mollify(potential, mollifier, 0.1, x) == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize("kind", ["poly", "constant"])
def test_mollify_linear_potential_is_exact(kind):
    mollifier = RadialMollifier(2, kind)
    potential = SingularPotential(2, smooth=quadratic_smooth(constant=0.7, linear=[1.5, -2.0, 0.25, 3.0]))
    for x in ([0.0, 0.0, 0.0, 0.0], [0.3, -0.1, 0.2, 0.4]):
        expected = 0.7 + np.dot([1.5, -2.0, 0.25, 3.0], x)
        assert mollify(potential, mollifier, 0.15, x) == pytest.approx(expected, abs=1e-12)


def test_mollify_quadratic_adds_second_moment():
    mollifier = RadialMollifier(1, "constant")
    potential = SingularPotential(1, smooth=quadratic_smooth(quadratic=1.0))
    # E|y|^2 = 1/2 for the normalized constant kernel on the unit disc
    assert mollify(potential, mollifier, 0.2, [0.3, 0.4]) == pytest.approx(0.25 + 0.02, rel=1e-12)


def test_mollify_log_at_the_pole():
    mollifier = RadialMollifier(1, "constant")
    potential = SingularPotential(1, gamma=1.0)
    value = mollify(potential, mollifier, 0.1, [0.0, 0.0])
    assert value == pytest.approx(log(0.01) - 2.0 * mollifier.log_moment, rel=1e-12)


def test_mollify_log_away_from_the_pole_is_harmonic():
    potential = SingularPotential(1, gamma=2.0)
    value = mollify(potential, RadialMollifier(1), 0.1, [0.3, 0.4])
    assert value == pytest.approx(2.0 * log(0.25), rel=1e-12)


def test_mollified_log_is_monotone_in_delta_and_above_the_potential():
    potential = SingularPotential(2, gamma=1.0)
    mollifier = RadialMollifier(2)
    x = np.array([0.3, 0.0, 0.0, 0.0])
    values = [mollify(potential, mollifier, delta, x) for delta in (0.05, 0.1, 0.2, 0.4)]
    assert values[0] >= float(potential(x)) - 1e-10
    assert np.all(np.diff(values) >= -1e-10)


def test_mollify_checks_arguments():
    mollifier = RadialMollifier(1)
    with pytest.raises(DomainError):
        mollify(1.0, mollifier, 0.0, [0.0, 0.0])
    with pytest.raises(DomainError):
        mollify(1.0, mollifier, 0.1, [0.0, 0.0, 0.0])


def test_sampled_potential_ball_must_stay_inside_domain():
    axes = [np.linspace(-1.0, 1.0, 11)] * 2
    X, Y = np.meshgrid(*axes, indexing="ij")
    potential = SingularPotential.from_samples(1, axes, X * X + Y * Y)
    assert mollify(potential, RadialMollifier(1), 0.1, [0.0, 0.0]) > 0
    with pytest.raises(DomainError):
        mollify(potential, RadialMollifier(1), 0.5, [0.8, 0.0])


# --- cone checks on mollified fields ---


def _flat(size=16):
    return TorusGeometry(2, (size, size), np.eye(2), np.eye(2))


def test_marginal_kernel_is_a_probability_vector():
    kernel = marginal_kernel(_flat(), RadialMollifier(2), 0.3)
    assert kernel.sum() == pytest.approx(1.0)
    assert np.all(kernel >= 0)
    assert kernel[0, 0] == kernel.max()


def test_uniform_cone_on_constant_background():
    geom = _flat()
    report = check_uniform_cone(geom, None, SURFACE, 0.4, [0.1, 0.25])
    assert report.passed
    assert report.pointwise_margin == pytest.approx(0.5)
    assert report.worst_margin == pytest.approx(0.5)
    assert len(report.rows) == 8
    failing = check_uniform_cone(geom, None, SURFACE, 0.6, [0.1], chi0_scalings=(1.0,))
    assert not failing.passed
    assert failing.to_dict()["verdict"] == "violation found"


def test_mollification_keeps_the_pointwise_margin():
    geom = _flat(32)
    bump = TrigPolynomial.from_dict(
        {"terms": [{"amplitude": 0.04, "wavevector": [1, 0]},
                   {"amplitude": 0.04, "wavevector": [0, 1]}]}, 2)
    report = check_uniform_cone(geom, bump, SURFACE, 0.17, [0.05, 0.1, 0.2])
    assert report.pointwise_margin > 0.17
    assert report.passed
    assert report.worst_margin >= report.pointwise_margin - 1e-12
    assert report.verdict == "no violation found in checked range"


def test_degenerate_cone_sequence():
    result = check_degenerate_cone(_flat(), None, SURFACE, [(0.5, 0.1), (0.55, 0.5)], [0.1])
    assert result["passed"]
    with pytest.raises(DomainError):
        check_degenerate_cone(_flat(), None, SURFACE, [(0.5, 0.0)], [0.1])


def test_uniform_cone_validates_inputs():
    with pytest.raises(DomainError):
        check_uniform_cone(_flat(), None, SURFACE, 0.1, [])
    with pytest.raises(DomainError):
        check_uniform_cone(_flat(), None, SURFACE, 0.1, [0.1], chi0_scalings=(1.5,))


# --- Lelong numbers ---


def test_lelong_of_log_pole_is_twice_gamma():
    result = lelong_level(SingularPotential(1, gamma=1.0), None, [0.1, 0.05, 0.025], 0.8)
    np.testing.assert_allclose(result.nu_at_delta, 2.0, rtol=1e-12)
    assert result.extrapolated == pytest.approx(2.0)
    assert result.monotone()


def test_lelong_in_two_variables():
    result = lelong_level(SingularPotential(2, gamma=0.5), None, [0.05, 0.02], 1.0)
    np.testing.assert_allclose(result.nu_at_delta, 1.0, rtol=1e-12)


def test_lelong_of_smooth_potential_vanishes_as_delta_shrinks():
    potential = SingularPotential(1, smooth=quadratic_smooth(quadratic=1.0))
    result = lelong_level(potential, [0.0, 0.0], [0.02, 0.002, 0.0002], 0.1)
    assert result.monotone()
    assert result.extrapolated < 1e-3


def test_lelong_rejects_large_delta():
    with pytest.raises(DomainError):
        lelong_level(SingularPotential(1, gamma=1.0), None, [0.3], 1.0)


def test_lelong_of_sum_lower_bound():
    singular = SingularPotential(1, gamma=1.0)
    frame = lelong_number_of_sum(singular, quadratic_smooth(linear=[1.0, 0.0]), None,
                                 [0.1, 0.05], 0.8)
    assert list(frame.columns) == ["delta", "nuSum", "nuFirst", "nuSecond", "correction", "lowerBound"]
    assert np.all(frame["nuSum"] >= frame["lowerBound"] - 1e-12)
    np.testing.assert_allclose(frame["nuFirst"], 2.0, rtol=1e-12)


# --- regularized maximum and gluing ---


def test_regularized_max_equals_max_outside_the_band():
    assert regularized_max([1.0, 3.0], 0.5) == 3.0
    assert regularized_max([3.0, 1.0], 2.0) == 3.0


def test_regularized_max_inside_the_band():
    kappa = regmax_constant()
    assert kappa > 0
    assert regularized_max([1.0, 1.0], 0.2) == pytest.approx(1.0 + 0.2 * kappa)
    a, b = 1.0, 1.05
    value = regularized_max([a, b], 0.1)
    assert value == pytest.approx(regularized_max([b, a], 0.1))
    assert max(a, b) <= value <= max(a, b) + 0.1 * kappa
    grid = [regularized_max([a, t], 0.1) for t in np.linspace(0.8, 1.2, 41)]
    assert np.all(np.diff(grid) >= -1e-14)
    with pytest.raises(DomainError):
        regularized_max([1.0, 2.0], 0.0)


def _glue_inputs(count=41):
    points = box_points([[-1.0, -1.0], [1.0, 1.0]], count)
    local = SampledPotential.quadratic(points, -8.0 / 7.0 * np.eye(2))
    global_ = SampledPotential.quadratic(points, -2.0 / 3.0 * np.eye(2))
    return local, global_


def test_glue_keeps_the_smaller_margin():
    local, global_ = _glue_inputs()
    report = glue_potentials(local, global_, 0.05, 0.1, SURFACE, np.eye(2), np.eye(2),
                             collar=([0.0, 0.0], 0.4, 0.85))
    assert report.conflicts == []
    assert report.local_margin == pytest.approx(0.3)
    assert report.global_margin == pytest.approx(0.4)
    assert report.glued_margin >= 0.3 - 1e-8
    assert report.blend_points > 0
    center = report.values[20, 20]
    assert center == pytest.approx(0.1)
    assert report.values[0, 0] == pytest.approx(-2.0 / 3.0)


def test_glue_reports_dominance_conflict():
    local, global_ = _glue_inputs()
    report = glue_potentials(local, global_, 0.05, 0.1, SURFACE, np.eye(2), np.eye(2),
                             collar=([0.0, 0.0], 0.7, 0.85))
    assert [c["kind"] for c in report.conflicts] == ["localNotDominant"]

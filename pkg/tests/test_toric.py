import json
import os
from fractions import Fraction

import pytest

from app.errors import DomainError, FanMismatch
from app.toric import (
    ClassPolytopePair,
    RationalCoefficients,
    check_criterion,
    coefficients_from_dict,
    intersection_number,
    jequation_constant,
    pair_from_dict,
    restricted_b,
    uniform_epsilon,
)
from utils.data_loader import DATA_DIR
from utils.helpers import make_rng

P2_OMEGA = [(0, 0), (2, 0), (0, 2)]
P2_CHI = [(0, 0), (1, 0), (0, 1)]


def _load(name):
    with open(os.path.join(DATA_DIR, name), encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="module")
def blowup():
    spec = _load("toric_blowup.json")
    pair = pair_from_dict(spec)
    return pair, coefficients_from_dict(spec["equation"], pair)


def test_intersection_numbers_on_projective_plane():
    pair = ClassPolytopePair(P2_OMEGA, P2_CHI)
    assert intersection_number(pair, frozenset(), 2, 0) == 4
    assert intersection_number(pair, frozenset(), 1, 1) == 2
    assert intersection_number(pair, frozenset(), 0, 2) == 1
    for key in pair.face_keys():
        assert intersection_number(pair, key, 1, 0) == 2
        assert intersection_number(pair, key, 0, 1) == 1
    with pytest.raises(DomainError):
        intersection_number(pair, frozenset(), 1, 0)


def test_projective_plane_jequation_passes_with_half():
    pair = ClassPolytopePair(P2_OMEGA, P2_CHI)
    assert jequation_constant(pair, 1) == 2
    report = check_criterion(pair, RationalCoefficients(2, (2,)))
    assert report.passed
    assert report.epsilon_uniform == Fraction(1, 2)
    assert uniform_epsilon(report) == Fraction(1, 2)
    assert [row["lhs"] for row in report.rows] == [2, 2, 2]
    assert report.compatibility["wholeSpaceValue"] == 0


def test_blowup_fails_exactly_on_exceptional_curve(blowup):
    pair, coeffs = blowup
    assert coeffs.c == (Fraction(30, 11),)
    report = check_criterion(pair, coeffs)
    assert not report.passed
    assert report.worst_face == "E"
    rows = {row["face"]: row for row in report.rows}
    assert rows["E"]["lhs"] == Fraction(-5, 11)
    assert all(row["lhs"] > 0 for face, row in rows.items() if face != "E")
    out = report.to_dict()
    assert out["pass"] is False
    entry = next(e for e in out["perFace"] if e["face"] == "E")
    assert entry["lhs"] == {"exact": "-5/11", "float": -5 / 11}


def test_blowup_volumes(blowup):
    pair, _ = blowup
    assert intersection_number(pair, frozenset(), 2, 0) == 3
    assert intersection_number(pair, frozenset(), 1, 1) == Fraction(11, 10)
    assert intersection_number(pair, pair.key_of("E"), 1, 0) == 1


def test_unconditioned_faces_have_ratio_one():
    # c_1 = 0 leaves no correction term on curves
    pair = ClassPolytopePair(P2_OMEGA, P2_CHI)
    report = check_criterion(pair, RationalCoefficients(2, (0,)))
    assert report.conditioned_faces() == []
    assert report.epsilon_uniform == 1


def test_fan_mismatch_is_detected():
    with pytest.raises(FanMismatch):
        ClassPolytopePair(P2_OMEGA, [(0, 0), (1, 0), (0, 1), (1, 1)])
    with pytest.raises(FanMismatch):
        ClassPolytopePair(P2_OMEGA, P2_CHI, labels={"E": (-1, -1)})


def test_face_ids_use_labels():
    pair = ClassPolytopePair(P2_OMEGA, P2_CHI, labels={"H": (1, 1)})
    assert "H" in [pair.face_id(key) for key in pair.face_keys()]
    assert pair.key_of("H") == frozenset({(1, 1)})
    assert pair.face_id(frozenset()) == "M"
    with pytest.raises(DomainError):
        pair.key_of("nowhere")


def test_coefficients_validation():
    with pytest.raises(DomainError):
        RationalCoefficients(3, (1,))
    with pytest.raises(DomainError):
        RationalCoefficients(2, ("-1/2",))
    assert RationalCoefficients(3, ("1/2", 0)).zeta == 1


def test_restricted_b():
    coeffs = RationalCoefficients(3, ("1/2", 3))
    assert restricted_b(coeffs, 2) == (Fraction(1, 6), Fraction(2))
    assert restricted_b(coeffs, 1) == (Fraction(1),)


def _cube_pair():
    cube = [(x, y, z) for x in (0, 2) for y in (0, 2) for z in (0, 2)]
    small = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    return ClassPolytopePair(cube, small, labels={"D": (1, 0, 0)})


def test_threefold_criterion_runs_on_all_proper_faces():
    pair = _cube_pair()
    report = check_criterion(pair, RationalCoefficients(3, ("1/2", "1/2")))
    codims = sorted(row["codim"] for row in report.rows)
    assert codims == [1] * 6 + [2] * 12
    assert report.passed


def test_restricted_criterion_rescales_the_full_one():
    pair = _cube_pair()
    coeffs = RationalCoefficients(3, ("1/2", "1/2"))
    full = {row["face"]: row["lhs"] for row in check_criterion(pair, coeffs).rows}
    restricted = check_criterion(pair, coeffs, restrict_to="D")
    assert restricted.restricted_to == "D"
    assert len(restricted.rows) == 4
    # q = 1 curves inside the surface D: ratio C(m,q)/C(n,p) with m=2, p=2
    for row in restricted.rows:
        assert row["lhs"] == Fraction(2, 3) * full[row["face"]]


def test_restriction_to_whole_space_is_rejected():
    with pytest.raises(DomainError):
        check_criterion(_cube_pair(), RationalCoefficients(3, (1, 1)), restrict_to="M")


def test_compatibility_defect_reported():
    pair = ClassPolytopePair(P2_OMEGA, P2_CHI)
    coeffs = coefficients_from_dict({"n": 2, "c": ["1"], "fIntegral": "1"}, pair)
    report = check_criterion(pair, coeffs)
    assert report.compatibility["wholeSpaceValue"] == 2
    assert report.compatibility["compatibilityDefect"] == 1


def _random_box_pairs(seed, count):
    rng = make_rng(seed)
    pairs = []
    for _ in range(count):
        big, small = rng.integers(1, 6, 3).tolist(), rng.integers(1, 6, 3).tolist()
        corners = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        pairs.append(ClassPolytopePair([tuple(a * b for a, b in zip(c, big)) for c in corners],
                                       [tuple(a * b for a, b in zip(c, small)) for c in corners]))
    return pairs


def test_criterion_ratios_are_invariant_under_common_scaling(blowup):
    rng = make_rng(29)
    pair, coeffs = blowup
    cases = [(pair, coeffs)] + [(p, RationalCoefficients(3, ("1/3", "1/4")))
                                for p in _random_box_pairs(31, 4)]
    for base, c in cases:
        k = int(rng.integers(2, 5))
        scaled = ClassPolytopePair(base.omega.scaled(k), base.chi.scaled(k),
                                   {name: normal for normal, name in base.labels.items()})
        before, after = check_criterion(base, c), check_criterion(scaled, c)
        for row, again in zip(before.rows, after.rows):
            assert again["face"] == row["face"]
            assert again["ratio"] == row["ratio"]
            assert again["lhs"] == row["lhs"] * k ** (base.n - row["codim"])
        assert after.epsilon_uniform == before.epsilon_uniform


@pytest.mark.parametrize("c", [("1", "0"), ("0", "1"), ("1/2", "2"), ("0", "0")])
def test_threefold_conditioned_faces_follow_the_nonzero_coefficients(c):
    coeffs = RationalCoefficients(3, c)
    for pair in _random_box_pairs(37, 3):
        for row in check_criterion(pair, coeffs).rows:
            expected = any(coeffs.ck(k) for k in range(row["codim"], 3))
            assert row["conditioned"] == expected
            if not expected:
                assert row["ratio"] == 1

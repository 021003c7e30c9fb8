"""Numerical criterion on projective toric surfaces and 3-folds.

A torus-invariant subvariety V of codimension p is a face of dimension n - p
of the moment polytopes, and intersection numbers over V are mixed volumes of
the corresponding faces measured in the face's own lattice.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

import pandas as pd

from app.errors import DomainError, FanMismatch
from app.kernel import CoefficientSet
from app.polytope import RationalPolytope, lattice_coordinates, mixed_volume_of_points
from utils.helpers import format_rational, parse_rational, rational_entry

logger = logging.getLogger(__name__)

WHOLE_SPACE = "M"
TORUS_INVARIANT_NOTE = "verdict covers torus-invariant subvarieties only"


@dataclass(frozen=True)
class RationalCoefficients:
    """Exact coefficients c_1..c_{n-1}; ``f_integral`` is the value of the integral of f chi^n."""

    n: int
    c: tuple
    f_integral: Fraction = None

    def __post_init__(self):
        c = tuple(parse_rational(v) for v in self.c)
        if len(c) != self.n - 1:
            raise DomainError(f"expected {self.n - 1} coefficients, got {len(c)}", n=self.n)
        if any(v < 0 for v in c):
            raise DomainError("coefficients c_k must be non-negative")
        object.__setattr__(self, "c", c)
        if self.f_integral is not None:
            object.__setattr__(self, "f_integral", parse_rational(self.f_integral))

    @classmethod
    def from_coefficient_set(cls, coeffs):
        f_integral = coeffs.f_integral if coeffs.f_integral else None
        return cls(coeffs.n, coeffs.c, f_integral)

    def ck(self, k):
        return self.c[k - 1] if 1 <= k <= self.n - 1 else Fraction(0)

    @property
    def zeta(self):
        nonzero = [k for k in range(1, self.n) if self.ck(k)]
        return max(nonzero) if nonzero else None


def _exact(coeffs):
    if isinstance(coeffs, RationalCoefficients):
        return coeffs
    if isinstance(coeffs, CoefficientSet):
        return RationalCoefficients.from_coefficient_set(coeffs)
    raise DomainError(f"unsupported coefficient type {type(coeffs).__name__}")


def restricted_b(coeffs, m):
    """Exact b_j = c_{j+n-m} C(j+n-m, n-m) / C(n, m) for j = 0..m-1."""
    n = coeffs.n
    if not 1 <= m < n:
        raise DomainError(f"subvariety dimension m={m} outside 1..{n - 1}", m=m, n=n)
    return tuple(Fraction(comb(j + n - m, n - m), comb(n, m)) * coeffs.ck(j + n - m)
                 for j in range(m))


class ClassPolytopePair:
    """Moment polytopes of [Omega_0] and [chi] with one shared normal fan.

    ``labels`` names facets by their primitive outer normal, e.g. {"E": (-1, -1)}.
    """

    def __init__(self, omega, chi, labels=None):
        self.omega = omega if isinstance(omega, RationalPolytope) else RationalPolytope(omega)
        self.chi = chi if isinstance(chi, RationalPolytope) else RationalPolytope(chi)
        self.n = self.omega.dim
        if self.chi.dim != self.n:
            raise FanMismatch("polytopes have different dimensions",
                              omegaDim=self.omega.dim, chiDim=self.chi.dim)
        self.labels = {tuple(v): name for name, v in (labels or {}).items()}
        self._check_fan()

    def _check_fan(self):
        if self.omega.normals != self.chi.normals:
            missing = sorted(self.omega.normals ^ self.chi.normals)
            raise FanMismatch("facet normals differ between the two polytopes",
                              normals=[list(v) for v in missing])
        omega_dims = {key: dim for key, (dim, _) in self.omega.faces.items()}
        chi_dims = {key: dim for key, (dim, _) in self.chi.faces.items()}
        if omega_dims != chi_dims:
            raise FanMismatch("face incidences differ between the two polytopes")
        unknown = [name for normal, name in self.labels.items() if normal not in self.omega.normals]
        if unknown:
            raise FanMismatch("labels name normals that are not facets", labels=unknown)

    @property
    def shared_fan(self):
        return sorted(self.omega.normals)

    def face_keys(self):
        """Proper faces of positive dimension, sorted by codimension then normals."""
        keys = [key for key, (dim, _) in self.omega.faces.items() if 0 < dim < self.n]
        return sorted(keys, key=lambda k: (len(k), sorted(k)))

    def codim(self, key):
        return self.n - self.omega.faces[key][0]

    def face_id(self, key):
        if not key:
            return WHOLE_SPACE
        names = [self.labels.get(normal, "(" + ",".join(map(str, normal)) + ")")
                 for normal in sorted(key)]
        return "&".join(names)

    def key_of(self, face_id):
        if face_id == WHOLE_SPACE:
            return frozenset()
        for key in self.omega.faces:
            if self.face_id(key) == face_id:
                return key
        raise DomainError(f"unknown face '{face_id}'", face=face_id)

    def subfaces(self, key):
        """Faces strictly contained in ``key`` with positive dimension."""
        return [k for k in self.face_keys() if k > key]

    def to_dict(self):
        return {"omega": self.omega.to_dict(), "chi": self.chi.to_dict(),
                "sharedFan": [list(v) for v in self.shared_fan]}


def _face_points(pair, key):
    _, omega_vertices = pair.omega.face(key)
    _, chi_vertices = pair.chi.face(key)
    omega_coords, d = lattice_coordinates(omega_vertices, key, pair.n)
    chi_coords, _ = lattice_coordinates(chi_vertices, key, pair.n)
    return omega_coords, chi_coords, d


def intersection_number(pair, face, a, b):
    """Integral over V(face) of Omega^a chi^b = (dim V)! MV(Omega_F x a, chi_F x b)."""
    key = face if isinstance(face, frozenset) else pair.key_of(face)
    omega_coords, chi_coords, d = _face_points(pair, key)
    if a < 0 or b < 0 or a + b != d:
        raise DomainError(f"exponents must be non-negative with a + b = {d}", a=a, b=b, dim=d)
    return factorial(d) * mixed_volume_of_points([omega_coords] * a + [chi_coords] * b, d)


def jequation_constant(pair, k):
    """c = integral of Omega^n / integral of Omega^{n-k} chi^k."""
    n = pair.n
    if not 1 <= k <= n - 1:
        raise DomainError(f"k={k} outside 1..{n - 1}", k=k, n=n)
    denominator = intersection_number(pair, frozenset(), n - k, k)
    if denominator <= 0:
        raise DomainError("mixed intersection number must be positive for a Kahler pair")
    return intersection_number(pair, frozenset(), n, 0) / denominator


@dataclass
class CriterionReport:
    rows: list
    compatibility: dict = field(default_factory=dict)
    restricted_to: str = None

    @property
    def passed(self):
        return all(row["lhs"] > 0 for row in self.rows)

    @property
    def epsilon_uniform(self):
        return min((row["ratio"] for row in self.rows), default=Fraction(1))

    @property
    def worst_face(self):
        if not self.rows:
            return None
        return min(self.rows, key=lambda row: row["ratio"])["face"]

    def conditioned_faces(self):
        return [row["face"] for row in self.rows if row["conditioned"]]

    def to_frame(self):
        frame = pd.DataFrame(self.rows)
        if frame.empty:
            return frame
        for column in ("lhs", "rhsScale", "ratio"):
            frame[column] = frame[column].map(format_rational)
        return frame

    def to_dict(self):
        return {
            "restrictedTo": self.restricted_to,
            "pass": self.passed,
            "epsilonUniform": rational_entry(self.epsilon_uniform),
            "worstFace": self.worst_face,
            "perFace": [
                {"face": row["face"], "codim": row["codim"], "conditioned": row["conditioned"],
                 "lhs": rational_entry(row["lhs"]), "rhsScale": rational_entry(row["rhsScale"]),
                 "ratio": rational_entry(row["ratio"])}
                for row in self.rows
            ],
            "compatibility": {k: rational_entry(v) if isinstance(v, Fraction) else v
                              for k, v in self.compatibility.items()},
            "note": TORUS_INVARIANT_NOTE,
        }


def _criterion_row(pair, key, dim_v, codim, coefficient, top, label):
    """lhs = C(top,codim) int_V Omega^{dim V} - sum_k coefficient(k) C(k,codim) int_V chi^{top-k} Omega^{k-codim}.

    The face is conditioned iff some coefficient(k) with k >= codim is nonzero.
    """
    omega_term = intersection_number(pair, key, dim_v, 0)
    rhs_scale = comb(top, codim) * omega_term
    correction = Fraction(0)
    conditioned = False
    for k in range(codim, top):
        ck = coefficient(k)
        if ck:
            conditioned = True
            correction += ck * comb(k, codim) * intersection_number(pair, key, k - codim, top - k)
    lhs = rhs_scale - correction
    return {"face": label, "codim": codim, "conditioned": conditioned,
            "lhs": lhs, "rhsScale": rhs_scale, "ratio": lhs / rhs_scale}


def check_criterion(pair, coeffs, restrict_to=None):
    """Per-face criterion values for all proper faces of codimension 1..n-1.

    With ``restrict_to`` the restricted equation with coefficients b_j is
    checked on the proper faces of that face instead.
    """
    coeffs = _exact(coeffs)
    n = pair.n
    if coeffs.n != n:
        raise DomainError("equation dimension does not match the polytopes", n=coeffs.n, dim=n)
    rows = []
    compatibility = {}
    if restrict_to is None:
        for key in pair.face_keys():
            codim = pair.codim(key)
            rows.append(_criterion_row(pair, key, n - codim, codim, coeffs.ck, n, pair.face_id(key)))
        whole = intersection_number(pair, frozenset(), n, 0) - sum(
            (coeffs.ck(k) * intersection_number(pair, frozenset(), k, n - k) for k in range(1, n)),
            Fraction(0))
        compatibility["wholeSpaceValue"] = whole
        if coeffs.f_integral is not None:
            compatibility["fIntegral"] = coeffs.f_integral
            compatibility["compatibilityDefect"] = whole - coeffs.f_integral
    else:
        base = pair.key_of(restrict_to)
        if not base:
            raise DomainError("restriction needs a proper face", face=restrict_to)
        m = n - pair.codim(base)
        b = restricted_b(coeffs, m)

        def restricted(j):
            return b[j] if 0 <= j < m else Fraction(0)

        for key in pair.subfaces(base):
            q = m - (n - pair.codim(key))
            rows.append(_criterion_row(pair, key, m - q, q, restricted, m, pair.face_id(key)))
    report = CriterionReport(rows, compatibility, restrict_to)
    logger.info("criterion %s: epsilon %s, worst face %s",
                "passed" if report.passed else "failed",
                format_rational(report.epsilon_uniform), report.worst_face)
    return report


def uniform_epsilon(report):
    return report.epsilon_uniform


def pair_from_dict(spec):
    labels = {name: tuple(normal) for name, normal in spec["omega"].get("labels", {}).items()}
    labels.update({name: tuple(normal) for name, normal in spec["chi"].get("labels", {}).items()})
    return ClassPolytopePair(spec["omega"]["vertices"], spec["chi"]["vertices"], labels)


def coefficients_from_dict(spec, pair):
    """Exact coefficients; ``jEquation: k`` sets c_{n-k} to the J-equation constant."""
    n = int(spec["n"])
    if "jEquation" in spec:
        k = int(spec["jEquation"])
        c = [Fraction(0)] * (n - 1)
        c[n - k - 1] = jequation_constant(pair, k)
    else:
        c = [parse_rational(v) for v in spec.get("c", [])]
    f_integral = spec.get("fIntegral")
    return RationalCoefficients(n, tuple(c), None if f_integral is None else parse_rational(f_integral))

"""Exact rational polytopes in dimension 2 and 3.

Coordinates are Fractions throughout. scipy's hull is only used for the
combinatorics of 3-d hulls; every plane, incidence and volume is recomputed
exactly from the input points.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import factorial, gcd

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from app.errors import DomainError
from utils.constants import MAX_TORIC_DIM
from utils.helpers import parse_rational

logger = logging.getLogger(__name__)


def _vec(point):
    return tuple(parse_rational(v) for v in point)


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _turn(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def primitive(vector):
    """The primitive integer vector on the ray through a rational vector."""
    vector = [Fraction(v) for v in vector]
    scale = reduce(lambda a, b: a * b // gcd(a, b), (v.denominator for v in vector), 1)
    ints = [int(v * scale) for v in vector]
    g = reduce(gcd, (abs(v) for v in ints), 0)
    if g == 0:
        raise DomainError("zero vector has no primitive direction")
    return tuple(v // g for v in ints)


def rank(rows):
    """Rank of a small rational matrix by exact elimination."""
    rows = [list(map(Fraction, r)) for r in rows]
    if not rows:
        return 0
    r = 0
    for c in range(len(rows[0])):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        for i in range(r + 1, len(rows)):
            factor = rows[i][c] / rows[r][c]
            rows[i] = [x - factor * y for x, y in zip(rows[i], rows[r])]
        r += 1
    return r


def affine_dim(points):
    points = list(points)
    if not points:
        return -1
    return rank([_sub(p, points[0]) for p in points[1:]])


def hull_2d(points):
    """Counter-clockwise hull vertices (monotone chain, collinear points dropped)."""
    points = sorted(set(points))
    if len(points) <= 2:
        return points
    lower, upper = [], []
    for p in points:
        while len(lower) > 1 and _turn(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(points):
        while len(upper) > 1 and _turn(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _polygon_area(ordered):
    twice = sum(_turn((0, 0), a, b) for a, b in zip(ordered, ordered[1:] + ordered[:1]))
    return abs(twice) / 2


@dataclass(frozen=True)
class Facet:
    normal: tuple
    offset: Fraction


def _facets_2d(ordered):
    facets = []
    for a, b in zip(ordered, ordered[1:] + ordered[:1]):
        d = _sub(b, a)
        normal = primitive((d[1], -d[0]))
        facets.append(Facet(normal, _dot(normal, a)))
    return facets


def _facets_3d(points):
    try:
        hull = ConvexHull(np.array([[float(v) for v in p] for p in points]))
    except QhullError as e:
        raise DomainError("points do not span a 3-dimensional polytope", reason=str(e).splitlines()[0])
    facets = {}
    for simplex in hull.simplices:
        a, b, c = (points[i] for i in simplex)
        normal = _cross(_sub(b, a), _sub(c, a))
        if not any(normal):
            continue
        normal = primitive(normal)
        offset = _dot(normal, a)
        if any(_dot(normal, p) > offset for p in points):
            normal = tuple(-v for v in normal)
            offset = -offset
            if any(_dot(normal, p) > offset for p in points):
                raise DomainError("hull facet is not supporting in exact arithmetic")
        facets[normal] = Facet(normal, offset)
    return list(facets.values())


class RationalPolytope:
    """Convex hull of rational points, full-dimensional in Q^2 or Q^3."""

    def __init__(self, points):
        points = [_vec(p) for p in points]
        if not points:
            raise DomainError("a polytope needs at least one point")
        self.dim = len(points[0])
        if not 2 <= self.dim <= MAX_TORIC_DIM or any(len(p) != self.dim for p in points):
            raise DomainError(f"points must all have dimension 2..{MAX_TORIC_DIM}")
        points = sorted(set(points))
        if affine_dim(points) != self.dim:
            raise DomainError("polytope is not full-dimensional", dim=self.dim)
        if self.dim == 2:
            ordered = hull_2d(points)
            self.facets = _facets_2d(ordered)
        else:
            self.facets = _facets_3d(points)
        incident = {p: [f for f in self.facets if _dot(f.normal, p) == f.offset] for p in points}
        self.vertices = tuple(p for p in points
                              if rank([f.normal for f in incident[p]]) == self.dim)
        self.facets.sort(key=lambda f: f.normal)
        self._faces = None

    def __repr__(self):
        return f"RationalPolytope(dim={self.dim}, vertices={len(self.vertices)})"

    @property
    def normals(self):
        return frozenset(f.normal for f in self.facets)

    def contains(self, point):
        point = _vec(point)
        return all(_dot(f.normal, point) <= f.offset for f in self.facets)

    def _on(self, normal, point):
        facet = next(f for f in self.facets if f.normal == normal)
        return _dot(normal, point) == facet.offset

    @property
    def faces(self):
        """Non-empty faces keyed by the frozenset of normals of facets containing them.

        The whole polytope has the empty key. Values are (dimension, vertices).
        """
        if self._faces is None:
            sets = {frozenset(v for v in self.vertices if self._on(f.normal, v)) for f in self.facets}
            frontier = set(sets)
            while frontier:
                new = {a & b for a, b in itertools.combinations(sets, 2)} - sets - {frozenset()}
                frontier = new
                sets |= new
            faces = {frozenset(): (self.dim, self.vertices)}
            for vertex_set in sets:
                key = frozenset(f.normal for f in self.facets
                                if all(self._on(f.normal, v) for v in vertex_set))
                faces[key] = (affine_dim(vertex_set), tuple(sorted(vertex_set)))
            self._faces = faces
        return self._faces

    def face(self, key):
        if key not in self.faces:
            raise DomainError("no face with these facet normals", normals=sorted(key))
        return self.faces[key]

    def volume(self):
        return volume(self)

    def __add__(self, other):
        return minkowski_sum(self, other)

    def scaled(self, s):
        s = parse_rational(s)
        if s <= 0:
            raise DomainError("scaling factor must be positive", s=str(s))
        return RationalPolytope([tuple(s * v for v in p) for p in self.vertices])

    def to_dict(self):
        return {
            "dim": self.dim,
            "vertices": [[str(v) for v in p] for p in self.vertices],
            "facets": [{"normal": list(f.normal), "offset": str(f.offset)} for f in self.facets],
        }


def _volume_3d(points):
    polytope = points if isinstance(points, RationalPolytope) else RationalPolytope(points)
    apex = polytope.vertices[0]
    total = Fraction(0)
    for facet in polytope.facets:
        on_facet = [v for v in polytope.vertices if _dot(facet.normal, v) == facet.offset]
        if apex in on_facet:
            continue
        # order the facet cyclically in a coordinate plane it projects onto bijectively
        drop = max(range(3), key=lambda i: abs(facet.normal[i]))
        keep = [i for i in range(3) if i != drop]
        lift = {(v[keep[0]], v[keep[1]]): v for v in on_facet}
        ring = [lift[q] for q in hull_2d(list(lift))]
        for b, c in zip(ring[1:], ring[2:]):
            a = ring[0]
            det = _dot(_sub(a, apex), _cross(_sub(b, apex), _sub(c, apex)))
            total += abs(det)
    return total / 6


def volume_of_points(points, d):
    """Exact d-volume of conv(points) in Q^d, zero when it is not full-dimensional."""
    points = [tuple(Fraction(v) for v in p) for p in points]
    if d == 0:
        return Fraction(1)
    if affine_dim(points) < d:
        return Fraction(0)
    if d == 1:
        values = [p[0] for p in points]
        return max(values) - min(values)
    if d == 2:
        return _polygon_area(hull_2d(points))
    if d == 3:
        return _volume_3d(points)
    raise DomainError(f"volumes are limited to dimension <= {MAX_TORIC_DIM}", d=d)


def volume(polytope):
    """Exact Euclidean volume, equal to the lattice volume for Z^n."""
    if polytope.dim == 2:
        return _polygon_area(hull_2d(list(polytope.vertices)))
    return _volume_3d(polytope)


def _minkowski_points(point_sets):
    sums = [()]
    for points in point_sets:
        sums = [_add(s, p) if s else p for s in sums for p in points]
    return sums


def minkowski_sum(first, second):
    if first.dim != second.dim:
        raise DomainError("Minkowski sum of polytopes of different dimension")
    return RationalPolytope(_minkowski_points([first.vertices, second.vertices]))


def mixed_volume_of_points(point_sets, d):
    """Mixed volume of d point configurations in Q^d, normalized so MV(P,..,P) = Vol(P).

    Inclusion-exclusion over subsets: d! MV = sum_S (-1)^{d-|S|} Vol(sum_{i in S} P_i).
    """
    if len(point_sets) != d:
        raise DomainError(f"mixed volume in dimension {d} needs {d} polytopes, got {len(point_sets)}")
    if d == 0:
        return Fraction(1)
    total = Fraction(0)
    for size in range(1, d + 1):
        sign = -1 if (d - size) % 2 else 1
        for subset in itertools.combinations(range(d), size):
            total += sign * volume_of_points(_minkowski_points([point_sets[i] for i in subset]), d)
    return total / factorial(d)


def mixed_volume(polytopes):
    polytopes = list(polytopes)
    if not polytopes:
        raise DomainError("mixed volume of an empty list")
    d = polytopes[0].dim
    if any(p.dim != d for p in polytopes):
        raise DomainError("mixed volume needs polytopes of equal dimension")
    return mixed_volume_of_points([p.vertices for p in polytopes], d)


def integer_kernel(rows, n):
    """Basis of {x in Z^n : rows . x = 0} from a unimodular column reduction.

    Returns (basis as columns, inverse transform) so that lattice coordinates
    of a direction v are the trailing entries of inverse @ v.
    """
    M = [list(r) for r in rows]
    U = [[int(i == j) for j in range(n)] for i in range(n)]

    def column_op(target, source, factor):
        for row in M:
            row[target] -= factor * row[source]
        for row in U:
            row[target] -= factor * row[source]

    def swap(a, b):
        for row in M + U:
            row[a], row[b] = row[b], row[a]

    pivot = 0
    for row in M:
        for c in range(pivot + 1, n):
            while row[c] != 0:
                if row[pivot] == 0 or abs(row[c]) < abs(row[pivot]):
                    swap(pivot, c)
                    continue
                column_op(c, pivot, row[c] // row[pivot])
        if row[pivot] != 0:
            pivot += 1
        if pivot == n:
            break
    basis = [tuple(U[i][j] for i in range(n)) for j in range(pivot, n)]
    return basis, _inverse(U), pivot


def _inverse(matrix):
    n = len(matrix)
    aug = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(matrix)]
    for c in range(n):
        p = next(i for i in range(c, n) if aug[i][c] != 0)
        aug[c], aug[p] = aug[p], aug[c]
        lead = aug[c][c]
        aug[c] = [v / lead for v in aug[c]]
        for i in range(n):
            if i != c and aug[i][c] != 0:
                factor = aug[i][c]
                aug[i] = [x - factor * y for x, y in zip(aug[i], aug[c])]
    return [row[n:] for row in aug]


def lattice_coordinates(points, normals, n):
    """Coordinates of points in the lattice of the affine hull cut out by ``normals``.

    The lattice is Z^n intersected with the common kernel of the normals, so
    d-volumes in these coordinates are lattice-normalized.
    """
    points = list(points)
    if not normals:
        return points, n
    _, inverse, r = integer_kernel(sorted(normals), n)
    origin = points[0]
    coords = []
    for p in points:
        diff = _sub(p, origin)
        full = [_dot(row, diff) for row in inverse]
        if any(v != 0 for v in full[:r]):
            raise DomainError("point leaves the affine hull of its face")
        coords.append(tuple(full[r:]))
    return coords, n - r

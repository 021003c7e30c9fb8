"""Pointwise algebra of the generalised Monge-Ampère operator.

Everything here works on eigenvalue vectors ``lam`` of Omega relative to chi.
Functions accept a single profile (shape ``(n,)``) and most accept a batch
(shape ``(..., n)``) so grid code can call them directly.

Notation: ``S_k`` is the k-th elementary symmetric polynomial, ``S_{k;i}``
deletes entry i, and ``sigma_k = S_k(1/lam)``.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import comb, factorial, isfinite

import numpy as np
from scipy.linalg import eigvalsh

from app.errors import DomainError, StateError
from utils.constants import K_SAFETY

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    ALL_ZERO_POSITIVE_F = "AllZeroPositiveF"
    POSITIVE_SUM = "PositiveSum"


@dataclass(frozen=True)
class CoefficientSet:
    """One equation instance: Omega^n = sum c_k chi^{n-k} Omega^k + f chi^n."""

    n: int
    c: tuple
    c0: float = 1.0
    f_integral: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("complex dimension must be >= 1", n=self.n)
        c = tuple(float(v) for v in self.c)
        if len(c) != self.n - 1:
            raise DomainError(
                f"expected {self.n - 1} coefficients c_1..c_{self.n - 1}, got {len(c)}",
                n=self.n, c=list(c))
        if any(v < 0 or not isfinite(v) for v in c):
            raise DomainError("coefficients c_k must be finite and non-negative", c=list(c))
        object.__setattr__(self, "c", c)

    @property
    def regime(self):
        return Regime.POSITIVE_SUM if sum(self.c) > 0 else Regime.ALL_ZERO_POSITIVE_F

    @property
    def zeta(self):
        """Largest k with c_k != 0, or None when every c_k vanishes."""
        nonzero = [k for k in range(1, self.n) if self.c[k - 1] != 0]
        return max(nonzero) if nonzero else None

    def ck(self, k):
        return self.c[k - 1] if 1 <= k <= self.n - 1 else 0.0

    def weights(self):
        """c_k / C(n,k) for k = 1..n-1, the density weights of chi^{n-k} Omega^k."""
        return np.array([self.c[k - 1] / comb(self.n, k) for k in range(1, self.n)])

    def scaled(self, t):
        return CoefficientSet(self.n, tuple(t * v for v in self.c), self.c0, self.f_integral)


@dataclass(frozen=True)
class EigenProfile:
    lam: np.ndarray

    def __post_init__(self):
        lam = np.sort(np.asarray(self.lam, dtype=float))
        _require_positive(lam)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self):
        return self.lam.shape[-1]


@dataclass
class ConeReport:
    per_index_load: np.ndarray
    margin: float
    satisfied: bool

    def to_dict(self):
        return {
            "perIndexLoad": [float(v) for v in self.per_index_load],
            "margin": float(self.margin),
            "satisfied": bool(self.satisfied),
        }


@dataclass
class FmBudget:
    term_garding: float
    term_quadratic: float
    term_power: float
    term_class_ratio: float
    term_k: float
    K: float
    min_eig_ei: float
    fm: float = field(init=False)

    def __post_init__(self):
        self.fm = -min(self.terms())

    def terms(self):
        return [self.term_garding, self.term_quadratic, self.term_power,
                self.term_class_ratio, self.term_k]

    def to_dict(self):
        return {
            "termGarding": self.term_garding,
            "termQuadratic": self.term_quadratic,
            "termPower": self.term_power,
            "termClassRatio": self.term_class_ratio,
            "termK": self.term_k,
            "K": self.K,
            "minEigEI": self.min_eig_ei,
            "fm": self.fm,
        }


@dataclass
class RestrictedCoefficients:
    m: int
    b: tuple


def _as_lambda(lam):
    if isinstance(lam, EigenProfile):
        return lam.lam
    return np.asarray(lam, dtype=float)


def _require_positive(lam):
    if lam.ndim == 0 or lam.shape[-1] == 0:
        raise DomainError("eigenvalue vector must be non-empty")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise DomainError("eigenvalues must be finite and strictly positive")


# --- Elementary symmetric polynomials ---


def elem_sym_all(lam):
    """All S_0..S_n along the last axis; shape (..., n+1)."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    # Multiply out prod(1 + t lam_i) one factor at a time
    for i in range(n):
        li = lam[..., i]
        for k in range(i + 1, 0, -1):
            out[..., k] = out[..., k] + li * out[..., k - 1]
    return out


def elem_sym(lam, k):
    """S_k(lam); S_0 = 1 and S_n = prod(lam)."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}", k=k, n=n)
    return elem_sym_all(lam)[..., k]


def elem_sym_deleted(lam, k, i, j=None):
    """S_{k;i}(lam), or S_{k;i,j} when ``j`` is given (zero when i == j)."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    for idx in (i, j):
        if idx is not None and not 0 <= idx < n:
            raise DomainError(f"index {idx} outside 0..{n - 1}", index=idx, n=n)
    if j is not None and i == j:
        return np.zeros(lam.shape[:-1]) if lam.ndim > 1 else 0.0
    removed = {i} if j is None else {i, j}
    arity = n - len(removed)
    if not 0 <= k <= arity:
        raise DomainError(f"k={k} exceeds remaining arity {arity}", k=k, arity=arity)
    keep = [p for p in range(n) if p not in removed]
    rest = lam[..., keep]
    if arity == 0:
        return np.ones(lam.shape[:-1]) if lam.ndim > 1 else 1.0
    return elem_sym_all(rest)[..., k]


def deleted_sym_table(x):
    """S_{m;i}(x) for every i and m = 0..n-1; shape (..., n, n)."""
    n = x.shape[-1]
    table = np.zeros(x.shape[:-1] + (n, n))
    for i in range(n):
        keep = [p for p in range(n) if p != i]
        if keep:
            table[..., i, :] = elem_sym_all(x[..., keep])
        else:
            table[..., i, 0] = 1.0
    return table


# --- Cone condition and the operator F ---


def cone_loads(coeffs, t, lam):
    """Per-index loads sum_k t c_k / C(n,k) * S_{n-k;i}(1/lam); shape (..., n)."""
    lam = _as_lambda(lam)
    _require_positive(lam)
    n = coeffs.n
    if lam.shape[-1] != n:
        raise DomainError(f"eigenvalue vector has length {lam.shape[-1]}, expected {n}")
    if n == 1 or not any(coeffs.c):
        return np.zeros(lam.shape)
    deleted = deleted_sym_table(1.0 / lam)
    loads = np.zeros(lam.shape)
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            loads = loads + t * ck / comb(n, k) * deleted[..., :, n - k]
    return loads


def cone_margin(coeffs, t, lam):
    """ConeReport with margin = 1 - max_i load_i."""
    loads = cone_loads(coeffs, t, lam)
    margin = 1.0 - float(np.max(loads))
    return ConeReport(per_index_load=loads, margin=margin, satisfied=margin > 0)


def cone_margin_batch(coeffs, t, lam):
    """Margins for a batch of profiles; shape (...)."""
    return 1.0 - np.max(cone_loads(coeffs, t, lam), axis=-1)


def _zeroth_order(coeffs, t, f_at_p):
    return t * f_at_p + (1.0 - t) * coeffs.c0


def eval_F(coeffs, t, f_at_p, lam):
    """F_{t,p} = sum t c_k/C(n,k) sigma_{n-k} + (t f + (1-t) c0) sigma_n."""
    lam = _as_lambda(lam)
    _require_positive(lam)
    n = coeffs.n
    sigma = elem_sym_all(1.0 / lam)
    value = _zeroth_order(coeffs, t, f_at_p) * sigma[..., n]
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            value = value + t * ck / comb(n, k) * sigma[..., n - k]
    return value


def grad_F(coeffs, t, f_at_p, lam):
    """Analytic partial derivatives dF/dlam_i."""
    lam = _as_lambda(lam)
    _require_positive(lam)
    n = coeffs.n
    inv = 1.0 / lam
    deleted = deleted_sym_table(inv)
    sigma_n = np.prod(inv, axis=-1)
    # -dF/dlam_i = (1/lam_i) (sum t c_k/C (1/lam_i) sigma_{n-k-1;i} + a sigma_n)
    inner = _zeroth_order(coeffs, t, f_at_p) * sigma_n[..., None] * np.ones_like(lam)
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            inner = inner + t * ck / comb(n, k) * inv * deleted[..., :, n - k - 1]
    return -inv * inner


def euler_weighted_sum(coeffs, t, f_at_p, lam):
    """Closed form of sum_i -lam_i dF/dlam_i."""
    lam = _as_lambda(lam)
    _require_positive(lam)
    n = coeffs.n
    sigma = elem_sym_all(1.0 / lam)
    value = n * _zeroth_order(coeffs, t, f_at_p) * sigma[..., n]
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            value = value + t * (n - k) * ck / comb(n, k) * sigma[..., n - k]
    return value


# --- Constants ---


def ei_matrix(n, zeta):
    """sum over zeta-subsets I of E_I, with (E_I)_ij = 1 iff i, j not in I."""
    if not 1 <= zeta <= n - 1:
        raise DomainError(f"zeta={zeta} outside 1..{n - 1}", n=n, zeta=zeta)
    total = np.zeros((n, n))
    for subset in itertools.combinations(range(n), zeta):
        outside = np.array([i not in subset for i in range(n)], dtype=float)
        total += np.outer(outside, outside)
    return total


def min_eig_EI(n, zeta):
    """Smallest eigenvalue of sum_{|I|=zeta} E_I by enumeration and a dense eigensolve."""
    return float(eigvalsh(ei_matrix(n, zeta))[0])


def compute_fm(coeffs, class_ratio):
    """Evaluate the five terms bounding f from below and return the FmBudget."""
    if coeffs.regime is not Regime.POSITIVE_SUM:
        raise StateError("f_m is undefined when every c_k vanishes; f must be positive",
                         regime=coeffs.regime.value)
    if not class_ratio > 0:
        raise DomainError("class ratio must be positive", classRatio=class_ratio)
    n, z = coeffs.n, coeffs.zeta
    cz = coeffs.ck(z)
    lam_min = min_eig_EI(n, z)
    # K must lie in (0, 1) and below the smallest eigenvalue
    K = K_SAFETY * min(1.0, lam_min)
    budget = FmBudget(
        term_garding=(1.0 / (16 * n)) * (z * cz / (2 * n)) ** (z / (n - z)) * cz * (n - z) / (2 * n),
        term_quadratic=z * cz ** 2 / (4 * n),
        term_power=cz ** (n / (n - z)) / (4 * n),
        term_class_ratio=class_ratio / 4.0,
        term_k=K / (2 * n) * (cz / (2 * comb(n, z))) ** (n / (n - z)),
        K=K,
        min_eig_ei=lam_min,
    )
    logger.debug("f_m budget for n=%d zeta=%d: %s", n, z, budget.to_dict())
    return budget


def restricted_coefficients(coeffs, m):
    """b_j = c_{j+n-m} C(j+n-m, n-m) / C(n, m) for j = 0..m-1."""
    n = coeffs.n
    if not 1 <= m < n:
        raise DomainError(f"subvariety dimension m={m} outside 1..{n - 1}", m=m, n=n)
    b = tuple(coeffs.ck(j + n - m) * comb(j + n - m, n - m) / comb(n, m) for j in range(m))
    return RestrictedCoefficients(m=m, b=b)


def restricted_cone_margin(coeffs, m, lam_tangent):
    """Cone margin of omega^m = sum_j b_j chi^{m-j} omega^j on an m-dimensional submanifold.

    The j = 0 term plays the role of f; the load at index i is
    sum_{j>=1} b_j / C(m,j) * S_{m-j;i}(1/lam).
    """
    restricted = restricted_coefficients(coeffs, m)
    inner = CoefficientSet(m, restricted.b[1:], c0=1.0) if m > 1 else CoefficientSet(1, ())
    return cone_margin(inner, 1.0, lam_tangent)


def shift_epsilon(coeffs, lam, beta, c_chi):
    """Uniform-cone epsilon for Omega + 2 beta alpha when alpha >= chi / c_chi.

    With gamma = beta / c_chi and lam~ = lam + gamma the loads of lam + 2 gamma
    drop by at least sum_k c_k/C(n,k) (gamma/2)^{n-k} S_{n-k;j}(1/lam~^2);
    the minimum over j of that drop is returned.
    """
    lam = _as_lambda(lam)
    _require_positive(lam)
    if beta <= 0 or c_chi <= 0:
        raise DomainError("beta and c_chi must be positive", beta=beta, c_chi=c_chi)
    n = coeffs.n
    gamma = beta / c_chi
    shifted = lam + gamma
    deleted = deleted_sym_table(1.0 / shifted ** 2)
    drop = np.zeros(lam.shape)
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            drop = drop + ck / comb(n, k) * (gamma / 2) ** (n - k) * deleted[..., :, n - k]
    return float(np.min(drop))


# --- Oracles ---


def wedge_density_oracle(A, X, k):
    """Density Omega^k chi^{n-k} / chi^n by permutation expansion of the mixed discriminant."""
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    n = A.shape[0]
    if n > 4:
        raise DomainError("permutation oracle is limited to n <= 4", n=n)
    if A.shape != (n, n) or X.shape != (n, n):
        raise DomainError("A and X must be square matrices of the same size")
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}", k=k, n=n)
    mats = [A] * k + [X] * (n - k)
    perms = list(itertools.permutations(range(n)))
    total = 0.0
    for sigma in perms:
        sign = _perm_sign(sigma)
        for tau in perms:
            prod = 1.0
            for row in range(n):
                prod *= mats[tau[row]][row, sigma[row]]
            total += sign * prod
    mixed = total / factorial(n)
    return mixed / np.linalg.det(X)


def _perm_sign(perm):
    sign, seen = 1, [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length, j = 0, start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def maclaurin_chain(lam):
    """(S_k / C(n,k))^(1/k) for k = 1..n; non-increasing by the Maclaurin inequality."""
    lam = _as_lambda(lam)
    _require_positive(lam)
    n = lam.shape[-1]
    s = elem_sym_all(lam)
    return np.array([(s[..., k] / comb(n, k)) ** (1.0 / k)
                     for k in range(1, n + 1)])


def product_identity_holds(n, l, p, q):
    """C(n,q) C(l,p) C(l-p,l-q) == C(n,p) C(n-p,n-q) C(l,q) in exact integers."""
    if not 0 <= p <= q <= l <= n:
        raise DomainError("need 0 <= p <= q <= l <= n", n=n, l=l, p=p, q=q)
    return comb(n, q) * comb(l, p) * comb(l - p, l - q) == comb(n, p) * comb(n - p, n - q) * comb(l, q)


def restriction_chain_holds(n, m, p, j):
    """b_j C(j,p)/C(m,p) equals c_k C(k, p+n-m)/C(n, p+n-m) with k = j+n-m (c_k factored out)."""
    if not (1 <= m < n and 0 <= p <= j <= m - 1):
        raise DomainError("need 1 <= m < n and 0 <= p <= j <= m-1", n=n, m=m, p=p, j=j)
    k = j + n - m
    lhs = Fraction(comb(k, n - m), comb(n, m)) * Fraction(comb(j, p), comb(m, p))
    rhs = Fraction(comb(k, p + n - m), comb(n, p + n - m))
    return lhs == rhs


def binomial_restriction_identities(n, m, p, q):
    """Check both binomial identities wherever their index ranges apply."""
    checks = []
    if 0 <= p <= q <= m <= n:
        checks.append(product_identity_holds(n, m, p, q))
    if 1 <= m < n and 0 <= p <= q <= m - 1:
        checks.append(restriction_chain_holds(n, m, p, q))
    if not checks:
        raise DomainError("no identity applies to these indices", n=n, m=m, p=p, q=q)
    return all(checks)

"""Periodic grids on the real torus [0,1)^n and their Hessians.

Potentials depend only on the real parts of the complex coordinates, so the
complex Hessian of a potential is a quarter of its real Hessian.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from app.errors import ConeBreach, DomainError
from utils.constants import HESSIAN_SCHEMES, MAX_TORUS_DIM, MIN_GRID_POINTS
from utils.helpers import chunked_map

logger = logging.getLogger(__name__)


def _spd(matrix, name, n):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (n, n):
        raise DomainError(f"{name} must be {n}x{n}, got shape {matrix.shape}", name=name)
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-14 * max(1.0, np.abs(matrix).max())):
        raise DomainError(f"{name} must be symmetric", name=name)
    if np.linalg.eigvalsh(matrix)[0] <= 0:
        raise DomainError(f"{name} must be positive definite", name=name)
    return 0.5 * (matrix + matrix.T)


@dataclass(frozen=True, eq=False)
class TorusGeometry:
    n: int
    grid_shape: tuple
    X: np.ndarray
    W0: np.ndarray
    scheme: str = "spectral"
    _symbols: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_TORUS_DIM:
            raise DomainError(f"torus dimension must be 1..{MAX_TORUS_DIM}", n=self.n)
        shape = tuple(int(s) for s in self.grid_shape)
        if len(shape) != self.n:
            raise DomainError("grid shape must have one entry per direction",
                              n=self.n, gridShape=list(shape))
        if any(s < MIN_GRID_POINTS or s % 2 for s in shape):
            raise DomainError(f"grid sizes must be even and >= {MIN_GRID_POINTS}",
                              gridShape=list(shape))
        if self.scheme not in HESSIAN_SCHEMES:
            raise DomainError(f"unknown Hessian scheme '{self.scheme}'", scheme=self.scheme)
        object.__setattr__(self, "grid_shape", shape)
        object.__setattr__(self, "X", _spd(self.X, "X", self.n))
        object.__setattr__(self, "W0", _spd(self.W0, "W0", self.n))
        object.__setattr__(self, "_symbols", _hessian_symbols(shape, self.scheme))

    @property
    def chol(self):
        """Lower Cholesky factor L of X = L L^T."""
        return cholesky(self.X, lower=True)

    @property
    def spacing(self):
        return tuple(1.0 / s for s in self.grid_shape)

    @property
    def size(self):
        return int(np.prod(self.grid_shape))

    def coordinates(self):
        axes = [np.arange(s) / s for s in self.grid_shape]
        return np.meshgrid(*axes, indexing="ij")

    def point(self, index):
        return tuple(float(i) / s for i, s in zip(index, self.grid_shape))

    def symbol(self, i, j):
        return self._symbols[(min(i, j), max(i, j))]

    def with_background(self, W0):
        return replace(self, W0=W0)

    def with_scheme(self, scheme):
        return replace(self, scheme=scheme)

    def to_dict(self):
        return {
            "n": self.n,
            "gridShape": list(self.grid_shape),
            "X": self.X.tolist(),
            "W0": self.W0.tolist(),
            "scheme": self.scheme,
        }


def _hessian_symbols(shape, scheme):
    """Fourier multipliers of d_i d_j on the grid, keyed by (i, j) with i <= j."""
    n = len(shape)
    modes = np.meshgrid(*[np.fft.fftfreq(s, d=1.0 / s) for s in shape], indexing="ij")
    nyquist = [np.abs(modes[i]) == shape[i] // 2 for i in range(n)]
    waves = [2.0 * np.pi * m for m in modes]
    h = [1.0 / s for s in shape]
    symbols = {}
    for i in range(n):
        for j in range(i, n):
            ki, kj = waves[i], waves[j]
            if scheme == "spectral":
                if i == j:
                    sym = -ki * ki
                else:
                    # The odd derivative of a Nyquist mode is not real
                    sym = np.where(nyquist[i] | nyquist[j], 0.0, -ki * kj)
            else:
                if i == j:
                    sym = -(2.0 - 2.0 * np.cos(ki * h[i])) / h[i] ** 2
                else:
                    sym = -np.sin(ki * h[i]) * np.sin(kj * h[j]) / (h[i] * h[j])
            symbols[(i, j)] = sym
    return symbols


@dataclass
class PotentialField:
    """Scalar samples of a periodic potential, kept with zero mean."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError("potential samples must be finite")
        self.values = values - values.mean()

    @classmethod
    def zeros(cls, geom):
        return cls(np.zeros(geom.grid_shape))

    def shifted(self, direction, step):
        return PotentialField(self.values + step * direction)

    def sup(self):
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class TrigTerm:
    amplitude: float
    wavevector: tuple
    kind: str = "cos"


@dataclass(frozen=True)
class TrigPolynomial:
    """constant + sum a cos(2 pi k.x) / a sin(2 pi k.x), with an exact Hessian."""

    constant: float = 0.0
    terms: tuple = ()

    @classmethod
    def from_dict(cls, spec, n):
        terms = []
        for term in spec.get("terms", []):
            k = tuple(int(v) for v in term["wavevector"])
            if len(k) != n:
                raise DomainError("wavevector length must match the torus dimension",
                                  wavevector=list(k), n=n)
            terms.append(TrigTerm(float(term["amplitude"]), k, term.get("kind", "cos")))
        return cls(float(spec.get("constant", 0.0)), tuple(terms))

    def _phase(self, coords, k):
        return 2.0 * np.pi * sum(ki * x for ki, x in zip(k, coords))

    def sample(self, geom):
        coords = geom.coordinates()
        values = np.full(geom.grid_shape, self.constant)
        for term in self.terms:
            trig = np.cos if term.kind == "cos" else np.sin
            values = values + term.amplitude * trig(self._phase(coords, term.wavevector))
        return values

    def hessian(self, geom):
        coords = geom.coordinates()
        n = geom.n
        out = np.zeros(geom.grid_shape + (n, n))
        for term in self.terms:
            trig = np.cos if term.kind == "cos" else np.sin
            wave = trig(self._phase(coords, term.wavevector))
            k = 2.0 * np.pi * np.asarray(term.wavevector, dtype=float)
            out = out - term.amplitude * wave[..., None, None] * np.outer(k, k)
        return out

    def to_dict(self):
        return {
            "constant": self.constant,
            "terms": [{"amplitude": t.amplitude, "wavevector": list(t.wavevector), "kind": t.kind}
                      for t in self.terms],
        }


def real_hessian(geom, values):
    """Real Hessian of grid samples by the geometry's Fourier multipliers."""
    values = np.asarray(values, dtype=float)
    if values.shape != geom.grid_shape:
        raise DomainError("samples do not match the grid", shape=list(values.shape),
                          gridShape=list(geom.grid_shape))
    n = geom.n
    spectrum = np.fft.fftn(values)
    out = np.empty(geom.grid_shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            block = np.fft.ifftn(geom.symbol(i, j) * spectrum).real
            out[..., i, j] = block
            out[..., j, i] = block
    return out


def contract_hessian(geom, coefficients, values):
    """sum_ij C_ij(x) d_i d_j v(x) with the grid's multipliers."""
    n = geom.n
    spectrum = np.fft.fftn(values)
    total = np.zeros(geom.grid_shape)
    for i in range(n):
        for j in range(i, n):
            block = np.fft.ifftn(geom.symbol(i, j) * spectrum).real
            weight = 1.0 if i == j else 2.0
            total += weight * coefficients[..., i, j] * block
    return total


def relative_eigensystem(B, X, threads=1):
    """Ascending eigenvalues and eigenvectors of L^{-1} B L^{-T} with X = L L^T.

    These are the eigenvalues of X^{-1} B; B may carry any leading batch shape.
    """
    B = np.asarray(B, dtype=float)
    n = X.shape[0]
    Linv = solve_triangular(cholesky(X, lower=True), np.eye(n), lower=True)
    M = Linv @ B @ Linv.T
    batch = M.shape[:-2]
    lam, Q = chunked_map(np.linalg.eigh, M.reshape(-1, n, n), threads)
    return lam.reshape(batch + (n,)), Q.reshape(batch + (n, n))


@dataclass
class HessianField:
    """Omega_phi at every grid point; ``B`` holds W0 + (1/4) Hess(phi), read relative to X."""

    geom: TorusGeometry
    B: np.ndarray
    threads: int = 1

    def eigensystem(self):
        """Ascending eigenvalues (grid + (n,)) and eigenvectors (grid + (n, n))."""
        return relative_eigensystem(self.B, self.geom.X, self.threads)

    def eigenvalues(self):
        return self.eigensystem()[0]


def hessian_field(geom, phi, exact_hessian=None, threads=1):
    """HessianField of W0 + (1/4) Hess(phi); ``exact_hessian`` bypasses differentiation."""
    values = phi.values if isinstance(phi, PotentialField) else np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("potential samples must be finite")
    hess = real_hessian(geom, values) if exact_hessian is None else exact_hessian
    return HessianField(geom, geom.W0 + 0.25 * hess, threads=threads)


def require_positive_definite(geom, lam):
    """Raises ConeBreach at the worst point when Omega_phi is not positive definite."""
    smallest = lam[..., 0]
    if np.all(smallest > 0):
        return
    index = np.unravel_index(int(np.argmin(smallest)), smallest.shape)
    raise ConeBreach("Omega_phi is not positive definite",
                     point=list(geom.point(index)), minEigenvalue=float(smallest[index]))


def geometry_from_dict(spec):
    return TorusGeometry(
        n=int(spec["n"]),
        grid_shape=tuple(spec["gridShape"]),
        X=np.asarray(spec["X"], dtype=float),
        W0=np.asarray(spec["W0"], dtype=float),
        scheme=spec.get("scheme", "spectral"),
    )

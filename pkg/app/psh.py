"""Plurisubharmonic potentials at desk scale.

Points of C^n are real vectors of length 2n, z_j = x_{2j} + i x_{2j+1}.
Radial mollification, cone checks on mollified Hessian fields, level-delta
Lelong numbers, the constant c_n, and regularized-maximum gluing.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from math import gamma as gamma_fn
from math import log, pi, sqrt

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator
from scipy.special import roots_legendre

from app.errors import DomainError, StateError
from app.grid import PotentialField, TrigPolynomial, real_hessian, relative_eigensystem
from app.kernel import cone_margin_batch
from utils.constants import LELONG_DEFAULTS, MOLLIFIER_DEFAULTS, REGMAX_KERNEL_SCALE

logger = logging.getLogger(__name__)

NO_VIOLATION = "no violation found in checked range"
VIOLATION = "violation found"


def sphere_area(n):
    """|S^{2n-1}| = 2 pi^n / Gamma(n)."""
    return 2.0 * pi ** n / gamma_fn(n)


def _gauss(order, lo=0.0, hi=1.0):
    x, w = roots_legendre(order)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


# --- Mollifiers ---


@dataclass
class RadialMollifier:
    """rho on [0,1] scaled so that |S^{2n-1}| int rho(t) t^{2n-1} dt = 1.

    ``kind`` is "poly" for c (1-t^2)^3, "constant" for 2n/|S^{2n-1}|, or
    "sampled" with ``t_samples`` / ``rho_samples`` interpolated linearly.
    """

    n: int
    kind: str = "poly"
    t_samples: np.ndarray = None
    rho_samples: np.ndarray = None
    scale: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("mollifier dimension must be >= 1", n=self.n)
        if self.kind not in ("poly", "constant", "sampled"):
            raise DomainError(f"unknown mollifier kind '{self.kind}'", kind=self.kind)
        if self.kind == "sampled" and (self.t_samples is None or self.rho_samples is None):
            raise DomainError("sampled mollifier needs t and rho samples")
        self.scale = 1.0
        if self.kind == "constant":
            self.scale = 2 * self.n / sphere_area(self.n)
        elif self.kind == "poly":
            raw, _ = quad(lambda t: self.profile(t) * t ** (2 * self.n - 1), 0.0, 1.0)
            self.scale = 1.0 / (sphere_area(self.n) * raw)

    @property
    def dimension(self):
        return 2 * self.n

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "poly":
            return np.where(t <= 1.0, (1.0 - t * t) ** 3, 0.0)
        if self.kind == "constant":
            return np.where(t <= 1.0, 1.0, 0.0)
        return np.interp(t, self.t_samples, self.rho_samples, right=0.0)

    def rho(self, t):
        return self.scale * self.profile(t)

    def _moment(self, weight):
        value, _ = quad(lambda t: float(self.rho(t)) * t ** (2 * self.n - 1) * weight(t),
                        0.0, 1.0, limit=200)
        return sphere_area(self.n) * value

    @property
    def mass(self):
        return self._moment(lambda t: 1.0)

    @property
    def normalization_defect(self):
        return abs(self.mass - 1.0)

    @property
    def log_moment(self):
        """|S^{2n-1}| int log(1/t) rho(t) t^{2n-1} dt."""
        return self._moment(lambda t: -log(t) if t > 0 else 0.0)


@lru_cache(maxsize=16)
def sphere_nodes(n, angular, simplex):
    """Nodes and weights (summing to 1) for the uniform measure on S^{2n-1}.

    |z_j|^2 is uniform on the simplex; the phases are independent and uniform.
    """
    angles = 2.0 * pi * np.arange(angular) / angular
    if n == 1:
        u = np.ones((1, 1))
        u_weights = np.ones(1)
    elif n == 2:
        s, ws = _gauss(simplex)
        u = np.stack([s, 1.0 - s], axis=1)
        u_weights = ws
    else:
        s, ws = _gauss(simplex)
        w, ww = _gauss(simplex)
        S, W = np.meshgrid(s, w, indexing="ij")
        u1, u2 = S.ravel(), ((1.0 - S) * W).ravel()
        u = np.stack([u1, u2, 1.0 - u1 - u2], axis=1)
        u_weights = (2.0 * np.outer(ws, ww) * (1.0 - S)).ravel()
    phases = np.stack(np.meshgrid(*([angles] * n), indexing="ij"), axis=-1).reshape(-1, n)
    radius = np.sqrt(np.clip(u, 0.0, None))
    nodes = np.empty((u.shape[0], phases.shape[0], 2 * n))
    nodes[..., 0::2] = radius[:, None, :] * np.cos(phases)[None, :, :]
    nodes[..., 1::2] = radius[:, None, :] * np.sin(phases)[None, :, :]
    weights = np.outer(u_weights / u_weights.sum(), np.full(phases.shape[0], 1.0 / phases.shape[0]))
    return nodes.reshape(-1, 2 * n), weights.ravel()


def quadratic_smooth(constant=0.0, linear=None, quadratic=0.0):
    """Callable x -> constant + linear . x + quadratic |x|^2 on (..., 2n) arrays."""
    linear = None if linear is None else np.asarray(linear, dtype=float)

    def smooth(points):
        points = np.asarray(points, dtype=float)
        value = constant + quadratic * np.sum(points * points, axis=-1)
        if linear is not None:
            value = value + points @ linear
        return value

    return smooth


@dataclass
class SingularPotential:
    """gamma log|x - center|^2 + smooth(x)."""

    n: int
    gamma: float = 0.0
    center: np.ndarray = None
    smooth: object = None
    box: tuple = None

    def __post_init__(self):
        if self.gamma < 0:
            raise DomainError("log coefficient gamma must be non-negative", gamma=self.gamma)
        self.center = (np.zeros(2 * self.n) if self.center is None
                       else np.asarray(self.center, dtype=float))
        if self.center.shape != (2 * self.n,):
            raise DomainError(f"center must have {2 * self.n} real coordinates")

    @classmethod
    def from_samples(cls, n, axes, values, gamma=0.0, center=None):
        # quadrature nodes on the box faces may overshoot by roundoff
        interpolator = RegularGridInterpolator(tuple(np.asarray(a) for a in axes),
                                               np.asarray(values, dtype=float),
                                               bounds_error=False, fill_value=None)
        if not np.all(np.isfinite(values)):
            raise DomainError("smooth part samples must be finite")
        box = (np.array([a[0] for a in axes]), np.array([a[-1] for a in axes]))
        return cls(n, gamma, center, interpolator, box)

    def with_smooth(self, smooth):
        return SingularPotential(self.n, self.gamma, self.center, smooth, self.box)

    def log_part(self, points):
        d = np.asarray(points, dtype=float) - self.center
        with np.errstate(divide="ignore"):
            return self.gamma * np.log(np.sum(d * d, axis=-1))

    def smooth_part(self, points):
        points = np.asarray(points, dtype=float)
        if self.smooth is None:
            return np.zeros(points.shape[:-1])
        return self.smooth(points)

    def __call__(self, points):
        value = self.smooth_part(points)
        return value + self.log_part(points) if self.gamma else value

    def require_ball(self, x, radius):
        if self.box is None:
            return
        lower, upper = self.box
        if np.any(x - radius < lower) or np.any(x + radius > upper):
            raise DomainError("ball escapes the sampled domain", point=list(map(float, x)),
                              radius=radius)


def _as_singular(potential, n):
    if isinstance(potential, SingularPotential):
        return potential
    if callable(potential):
        return SingularPotential(n, smooth=potential)
    value = float(potential)
    return SingularPotential(n, smooth=lambda points: np.full(np.shape(points)[:-1], value))


def _log_sphere_mean(d, r, n):
    """Mean of log|d + r w|^2 over w in S^{2n-1}, for |d| = d."""
    if d == 0:
        return log(r * r)
    if r == 0:
        return log(d * d)
    if n == 1:
        # Jensen: log|z|^2 is harmonic in one complex variable
        return log(max(d, r) ** 2)
    a, b = d * d + r * r, 2.0 * d * r
    power = 2 * n - 2
    norm = sqrt(pi) * gamma_fn(n - 0.5) / gamma_fn(n)
    value, _ = quad(lambda th: log(a + b * np.cos(th)) * np.sin(th) ** power, 0.0, pi, limit=200)
    return value / norm


def _mollify_log(mollifier, delta, offset):
    n = mollifier.n
    d = float(np.linalg.norm(offset))
    mass = mollifier.mass
    if d == 0:
        return (log(delta * delta) * mass - 2.0 * mollifier.log_moment) / mass
    if n == 1 and d >= delta:
        return log(d * d)
    breaks = [d / delta] if d < delta else None
    value, _ = quad(lambda t: float(mollifier.rho(t)) * t ** (2 * n - 1)
                    * _log_sphere_mean(d, delta * t, n),
                    0.0, 1.0, points=breaks, limit=200)
    return sphere_area(n) * value / mass


def _mollify_smooth(smooth, mollifier, delta, x):
    n = mollifier.n
    nodes, weights = sphere_nodes(n, MOLLIFIER_DEFAULTS["angular_order"][n],
                                  MOLLIFIER_DEFAULTS["simplex_order"])
    t, wt = _gauss(MOLLIFIER_DEFAULTS["radial_order"])
    radial = wt * mollifier.rho(t) * t ** (2 * n - 1)
    points = x + delta * t[:, None, None] * nodes[None, :, :]
    means = smooth(points) @ weights
    return float(radial @ means / radial.sum())


def mollify(potential, mollifier, delta, x):
    """phi_delta(x) = delta^{-2n} int phi(x - y) rho(|y|/delta) dy."""
    if not delta > 0:
        raise DomainError("delta must be positive", delta=delta)
    potential = _as_singular(potential, mollifier.n)
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * mollifier.n,):
        raise DomainError(f"point must have {2 * mollifier.n} real coordinates")
    potential.require_ball(x, delta)
    value = 0.0
    if potential.smooth is not None:
        value += _mollify_smooth(potential.smooth, mollifier, delta, x)
    if potential.gamma:
        value += potential.gamma * _mollify_log(mollifier, delta, x - potential.center)
    return value


# --- Cone conditions on mollified fields ---


def _background_field(geom, phi):
    if phi is None:
        hess = np.zeros(geom.grid_shape + (geom.n, geom.n))
    elif isinstance(phi, TrigPolynomial):
        hess = phi.hessian(geom)
    else:
        values = phi.values if isinstance(phi, PotentialField) else phi
        hess = real_hessian(geom, values)
    return geom.W0 + 0.25 * hess


def marginal_kernel(geom, mollifier, delta):
    """Grid weights of the radial kernel integrated over the imaginary directions.

    A potential of the real parts only sees the marginal of rho on R^n; the
    weights are normalized on the grid so mollification is a convex combination.
    """
    n = geom.n
    offsets = np.meshgrid(*[np.fft.fftfreq(s) for s in geom.grid_shape], indexing="ij")
    a = np.sqrt(sum(u * u for u in offsets)) / delta
    kernel = np.zeros(geom.grid_shape)
    inside = a < 1.0
    if np.any(inside):
        nodes, weights = _gauss(MOLLIFIER_DEFAULTS["radial_order"])
        ai = a[inside][:, None]
        height = np.sqrt(1.0 - ai * ai)
        w = height * nodes[None, :]
        rho = mollifier.rho(np.sqrt(ai * ai + w * w))
        kernel[inside] = np.sum(height * weights[None, :] * rho * w ** (n - 1), axis=1)
    if kernel.sum() <= 0:
        kernel[(0,) * n] = 1.0
    return kernel / kernel.sum()


def mollify_field(geom, B, mollifier, delta):
    """Circular convolution of each matrix entry with the marginal kernel."""
    spectrum = np.fft.fftn(marginal_kernel(geom, mollifier, delta))
    out = np.empty_like(B)
    for i in range(geom.n):
        for j in range(i, geom.n):
            block = np.fft.ifftn(np.fft.fftn(B[..., i, j]) * spectrum).real
            out[..., i, j] = block
            out[..., j, i] = block
    return out


def _field_margins(B, X, coeffs):
    """Cone margins of B relative to X; -inf where B is not positive definite."""
    lam, _ = relative_eigensystem(B, X)
    positive = lam[..., 0] > 0
    margins = cone_margin_batch(coeffs, 1.0, np.where(positive[..., None], lam, 1.0))
    return np.where(positive, margins, -np.inf)


@dataclass
class UniformConeReport:
    epsilon: float
    rows: list
    pointwise_margin: float

    @property
    def passed(self):
        return all(row["passed"] for row in self.rows)

    @property
    def worst_margin(self):
        return min(row["worstMargin"] for row in self.rows)

    @property
    def verdict(self):
        return NO_VIOLATION if self.passed else VIOLATION

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "pointwiseMargin": self.pointwise_margin,
            "worstMargin": self.worst_margin,
            "passed": self.passed,
            "verdict": self.verdict,
            "rows": list(self.rows),
        }


def check_uniform_cone(geom, phi, coeffs, epsilon, deltas, mollifier=None,
                       chi0_scalings=(1.0, 0.5, 0.75, 0.875), shift=0.0):
    """epsilon-uniform cone inequality of the mollified field against chi_0 = s X.

    ``phi`` may be None (constant background W0), a TrigPolynomial or grid
    samples. ``shift`` adds shift * X before mollifying. Passing only means no
    violation was found for the listed deltas and scalings.
    """
    deltas = list(deltas)
    if not deltas:
        raise DomainError("delta list must not be empty")
    if any(d <= 0 for d in deltas):
        raise DomainError("deltas must be positive", deltas=deltas)
    if any(not 0 < s <= 1 for s in chi0_scalings):
        raise DomainError("chi_0 scalings must lie in (0, 1]", scalings=list(chi0_scalings))
    mollifier = mollifier or RadialMollifier(geom.n)
    B = _background_field(geom, phi) + shift * geom.X
    pointwise = float(np.min(_field_margins(B, geom.X, coeffs)))
    rows = []
    for delta in deltas:
        smoothed = mollify_field(geom, B, mollifier, delta)
        for s in chi0_scalings:
            margins = _field_margins(smoothed, s * geom.X, coeffs)
            index = np.unravel_index(int(np.argmin(margins)), margins.shape)
            worst = float(margins[index])
            rows.append({
                "delta": float(delta),
                "chi0Scale": float(s),
                "worstMargin": worst,
                "worstPoint": list(geom.point(index)),
                "passed": worst >= epsilon,
            })
    report = UniformConeReport(float(epsilon), rows, pointwise)
    logger.info("uniform cone check (eps=%g): %s, worst margin %.6g",
                epsilon, report.verdict, report.worst_margin)
    return report


def check_degenerate_cone(geom, phi, coeffs, sequence, deltas, mollifier=None,
                          chi0_scalings=(1.0, 0.5, 0.75, 0.875)):
    """For each (eps_i, mu_i): Omega + mu_i chi must pass the eps_i-uniform check."""
    rows = []
    for eps_i, mu_i in sequence:
        if eps_i <= 0 or mu_i <= 0:
            raise DomainError("sequence entries must be strictly positive", eps=eps_i, mu=mu_i)
        report = check_uniform_cone(geom, phi, coeffs, eps_i, deltas, mollifier,
                                    chi0_scalings, shift=mu_i)
        rows.append({"epsilon": eps_i, "mu": mu_i, "worstMargin": report.worst_margin,
                     "passed": report.passed})
    passed = all(row["passed"] for row in rows)
    return {"rows": rows, "passed": passed, "verdict": NO_VIOLATION if passed else VIOLATION}


# --- Lelong numbers ---


@dataclass
class LelongLevelResult:
    deltas: list
    nu_at_delta: list
    log_part: list
    smooth_part: list
    r: float

    @property
    def extrapolated(self):
        return self.nu_at_delta[int(np.argmin(self.deltas))]

    def monotone(self, tol=1e-12):
        order = np.argsort(self.deltas)
        values = np.asarray(self.nu_at_delta)[order]
        return bool(np.all(np.diff(values) >= -tol))

    def to_frame(self):
        return pd.DataFrame({
            "delta": self.deltas,
            "nu": self.nu_at_delta,
            "logPart": self.log_part,
            "smoothPart": self.smooth_part,
        })

    def to_dict(self):
        return {
            "r": self.r,
            "extrapolated": self.extrapolated,
            "monotone": self.monotone(),
            "table": self.to_frame().to_dict(orient="records"),
        }


def _ball_samples(n, x, radius):
    directions, _ = sphere_nodes(n, LELONG_DEFAULTS["angular_samples"][n],
                                 MOLLIFIER_DEFAULTS["simplex_order"])
    radial = LELONG_DEFAULTS["radial_samples"]
    radii = radius * np.arange(1, radial + 1) / radial
    return x + radii[:, None, None] * directions[None, :, :]


def _ball_sups(potential, x, radius):
    """(sup of the whole potential, exact sup of the log part, sup of the smooth part).

    The smooth and whole suprema are sample maxima, hence lower bounds.
    """
    samples = _ball_samples(potential.n, x, radius)
    d = x - potential.center
    norm = float(np.linalg.norm(d))
    direction = d / norm if norm > 0 else np.eye(2 * potential.n)[0]
    peak = x + radius * direction
    samples = np.concatenate([samples.reshape(-1, 2 * potential.n), peak[None, :]])
    log_sup = potential.gamma * log((norm + radius) ** 2) if potential.gamma else 0.0
    smooth_sup = float(np.max(potential.smooth_part(samples)))
    whole = float(np.max(potential(samples)))
    return whole, log_sup, smooth_sup


def lelong_level(potential, x, deltas, r):
    """nu(x, delta) = (sup_{B(x,r/4)} phi - sup_{B(x,delta)} phi) / (log(r/4) - log delta)."""
    x = np.asarray(x, dtype=float) if x is not None else potential.center
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise DomainError("delta list must not be empty")
    if any(not 0 < d < r / 4 for d in deltas):
        raise DomainError("every delta must satisfy 0 < delta < r/4", r=r, deltas=deltas)
    potential.require_ball(x, r / 4)
    outer = _ball_sups(potential, x, r / 4)
    nu, log_part, smooth_part = [], [], []
    for delta in deltas:
        inner = _ball_sups(potential, x, delta)
        scale = log(r / 4) - log(delta)
        nu.append((outer[0] - inner[0]) / scale)
        log_part.append((outer[1] - inner[1]) / scale)
        smooth_part.append((outer[2] - inner[2]) / scale)
    result = LelongLevelResult(deltas, nu, log_part, smooth_part, float(r))
    if not result.monotone():
        logger.warning("level-delta Lelong numbers are not monotone in delta; refine sampling")
    return result


def lelong_number_of_sum(singular, smooth, x, deltas, r):
    """Lower bound for nu of (log singularity + smooth part) from its pieces.

    Returns per delta the whole value, the two piece values, the outer sup
    correction and the bound nuFirst + nuSecond + correction.
    """
    first = SingularPotential(singular.n, singular.gamma, singular.center, None, singular.box)
    second = SingularPotential(singular.n, 0.0, singular.center, smooth, singular.box)
    whole = singular.with_smooth(smooth)
    x = singular.center if x is None else np.asarray(x, dtype=float)
    nu_whole = lelong_level(whole, x, deltas, r)
    nu_first = lelong_level(first, x, deltas, r)
    nu_second = lelong_level(second, x, deltas, r)
    outer = (_ball_sups(whole, x, r / 4)[0] - _ball_sups(first, x, r / 4)[0]
             - _ball_sups(second, x, r / 4)[0])
    rows = []
    for i, delta in enumerate(nu_whole.deltas):
        correction = outer / (log(r / 4) - log(delta))
        bound = nu_first.nu_at_delta[i] + nu_second.nu_at_delta[i] + correction
        rows.append({
            "delta": delta,
            "nuSum": nu_whole.nu_at_delta[i],
            "nuFirst": nu_first.nu_at_delta[i],
            "nuSecond": nu_second.nu_at_delta[i],
            "correction": correction,
            "lowerBound": bound,
        })
    return pd.DataFrame(rows)


# --- Constants ---


def compute_cn(mollifier, n=None):
    """c_n = 2 / (|S^{2n-1}| int log(1/t) rho t^{2n-1} dt + 3^{2n-1} / 2^{2n-3})."""
    n = mollifier.n if n is None else n
    if n != mollifier.n:
        raise DomainError("mollifier was built for another dimension", n=n, mollifierN=mollifier.n)
    defect = mollifier.normalization_defect
    if defect > MOLLIFIER_DEFAULTS["cn_defect_tol"]:
        raise StateError("mollifier is not normalized", normalizationDefect=defect)
    return 2.0 / (mollifier.log_moment + 3.0 ** (2 * n - 1) / 2.0 ** (2 * n - 3))


def gluing_threshold(cn, epsilon, r):
    return cn * epsilon * r * r


# --- Regularized maximum ---


def _theta(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 0.5, REGMAX_KERNEL_SCALE * (1.0 - 4.0 * s * s) ** 2, 0.0)


def _theta_cdf(x):
    x = np.clip(x, -0.5, 0.5)
    return REGMAX_KERNEL_SCALE * (x - 8.0 * x ** 3 / 3.0 + 16.0 * x ** 5 / 5.0) + 0.5


def _theta_first_moment(x):
    """int_{-1/2}^{x} t theta(t) dt."""
    x = np.clip(x, -0.5, 0.5)
    return REGMAX_KERNEL_SCALE * (x ** 2 / 2.0 - 2.0 * x ** 4 + 8.0 * x ** 6 / 3.0 - 1.0 / 24.0)


def _blend(u):
    """Psi(u) = E[(u + s - t)_+] for s, t ~ theta, with Psi' and Psi''.

    The integrand in s is piecewise polynomial with kinks at s = -1/2 - u and
    s = 1/2 - u, so Gauss-Legendre on each piece is exact.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nodes, weights = roots_legendre(8)
    cuts = np.stack([np.full_like(u, -0.5), np.clip(-0.5 - u, -0.5, 0.5),
                     np.clip(0.5 - u, -0.5, 0.5), np.full_like(u, 0.5)], axis=-1)
    psi = np.zeros_like(u)
    dpsi = np.zeros_like(u)
    ddpsi = np.zeros_like(u)
    for piece in range(3):
        lo, hi = cuts[..., piece, None], cuts[..., piece + 1, None]
        s = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * weights * _theta(s)
        x = u[..., None] + s
        psi += np.sum(w * (x * _theta_cdf(x) - _theta_first_moment(x)), axis=-1)
        dpsi += np.sum(w * _theta_cdf(x), axis=-1)
        ddpsi += np.sum(w * _theta(x), axis=-1)
    return psi, dpsi, ddpsi


def regmax_constant():
    """kappa with regularized_max(a, a, eta) = a + kappa eta."""
    return float(_blend(0.0)[0][0])


def _regmax_pair(a, b, eta):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    gap = hi - lo
    blended = lo + eta * _blend(gap / eta)[0].reshape(np.shape(gap))
    return np.where(gap >= eta, hi, blended)


def regularized_max(values, eta):
    """Smoothed maximum with blending width eta; lists are folded pairwise."""
    if not eta > 0:
        raise DomainError("eta must be positive", eta=eta)
    values = [float(v) for v in np.atleast_1d(values)]
    if not values:
        raise DomainError("regularized max of an empty list")
    return reduce(lambda a, b: float(_regmax_pair(a, b, eta)), values)


# --- Gluing ---


@dataclass
class SampledPotential:
    """Values, gradients and real Hessians of a potential on sample points of R^n."""

    points: np.ndarray
    values: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    @classmethod
    def quadratic(cls, points, Q, b=None, c=0.0):
        """x -> x^T Q x / 2 + b . x + c."""
        points = np.asarray(points, dtype=float)
        Q = np.asarray(Q, dtype=float)
        b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)
        values = 0.5 * np.einsum("...i,ij,...j->...", points, Q, points) + points @ b + c
        gradient = points @ Q.T + b
        hessian = np.broadcast_to(Q, points.shape[:-1] + Q.shape).copy()
        return cls(points, values, gradient, hessian)


def box_points(box, count):
    lower, upper = (np.asarray(v, dtype=float) for v in box)
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class GlueReport:
    values: np.ndarray
    margins: np.ndarray
    region: np.ndarray
    local_margin: float
    global_margin: float
    conflicts: list

    @property
    def glued_margin(self):
        return float(np.min(self.margins))

    @property
    def blend_points(self):
        return int(np.sum(self.region == 0))

    def to_dict(self):
        return {
            "localMargin": self.local_margin,
            "globalMargin": self.global_margin,
            "gluedMargin": self.glued_margin,
            "localPoints": int(np.sum(self.region == 1)),
            "globalPoints": int(np.sum(self.region == -1)),
            "blendPoints": self.blend_points,
            "conflicts": list(self.conflicts),
        }


def glue_potentials(local, global_, eta, offset, coeffs, W0, X, collar=None, tol=1e-8):
    """Regularized max of (local + offset) and global with its cone margins.

    ``collar`` is (center, inner radius, outer radius): the local potential must
    win strictly inside the inner radius and lose strictly outside the outer one.
    """
    if not eta > 0:
        raise DomainError("eta must be positive", eta=eta)
    W0, X = np.asarray(W0, dtype=float), np.asarray(X, dtype=float)
    gap = (local.values + offset - global_.values) / eta
    psi, p, curvature = (v.reshape(gap.shape) for v in _blend(gap.ravel()))
    g = local.gradient - global_.gradient
    hessian = (p[..., None, None] * local.hessian + (1.0 - p[..., None, None]) * global_.hessian
               + (curvature / eta)[..., None, None] * g[..., :, None] * g[..., None, :])
    values = global_.values + eta * psi

    region = np.zeros(gap.shape, dtype=int)
    region[gap >= 1.0] = 1
    region[gap <= -1.0] = -1
    values = np.where(region == 1, local.values + offset, values)
    values = np.where(region == -1, global_.values, values)
    hessian = np.where((region == 1)[..., None, None], local.hessian, hessian)
    hessian = np.where((region == -1)[..., None, None], global_.hessian, hessian)

    local_margins = _field_margins(W0 + 0.25 * local.hessian, X, coeffs)
    global_margins = _field_margins(W0 + 0.25 * global_.hessian, X, coeffs)
    margins = _field_margins(W0 + 0.25 * hessian, X, coeffs)

    conflicts = []
    floor = np.minimum(local_margins, global_margins) - tol
    dropped = margins < floor
    if np.any(dropped):
        conflicts.append({"kind": "margin", "points": int(np.sum(dropped)),
                          "first": local.points[dropped][0].tolist()})
    if collar is not None:
        center, inner, outer = collar
        dist = np.linalg.norm(local.points - np.asarray(center, dtype=float), axis=-1)
        for kind, mask in (("localNotDominant", (dist < inner) & (region != 1)),
                           ("globalNotDominant", (dist > outer) & (region != -1))):
            if np.any(mask):
                conflicts.append({"kind": kind, "points": int(np.sum(mask)),
                                  "first": local.points[mask][0].tolist()})
    for conflict in conflicts:
        logger.warning("gluing conflict %s at %d points", conflict["kind"], conflict["points"])
    return GlueReport(values, margins, region, float(np.min(local_margins)),
                      float(np.min(global_margins)), conflicts)

"""Continuity-method solver for the generalised Monge-Ampère equation on flat tori.

The unknowns are a mean-zero potential phi and a scalar slack. Each stage of
the path t in [0, 1] solves

    e_n(lam) - t sum_k c_k/C(n,k) e_k(lam) - t f - (1-t) c0 - slack = 0,  mean(phi) = 0

by damped Newton with a preconditioned GMRES inner solve, where lam are the
eigenvalues of X^{-1}(W0 + Hess(phi)/4) at each grid point.
"""

import logging
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
import pandas as pd
from scipy.linalg import eigvalsh, solve_triangular
from scipy.sparse.linalg import LinearOperator, gmres

from app.errors import (CompatibilityDefect, ConeBreach, DomainError, LineSearchFailure,
                        LinearSolveStall, MaxIterExceeded, SolverError, StepUnderflow)
from app.grid import (PotentialField, TrigPolynomial, contract_hessian, hessian_field,
                      require_positive_definite)
from app.kernel import (Regime, compute_fm, cone_margin_batch, deleted_sym_table,
                        elem_sym_all)
from utils.constants import CONTINUITY_DEFAULTS, GMRES_DEFAULTS, NEWTON_DEFAULTS

logger = logging.getLogger(__name__)

_OPTION_KEYS = {
    "tol": "tol",
    "maxIter": "max_iter",
    "dtInitial": "dt_initial",
    "dtMin": "dt_min",
    "compatibilityTol": "compatibility_tol",
    "enforceRegime": "enforce_regime",
}


@dataclass
class SolverOptions:
    tol: float = NEWTON_DEFAULTS["tol"]
    max_iter: int = NEWTON_DEFAULTS["max_iter"]
    damping_floor: float = NEWTON_DEFAULTS["damping_floor"]
    dt_initial: float = CONTINUITY_DEFAULTS["dt_initial"]
    dt_min: float = CONTINUITY_DEFAULTS["dt_min"]
    grow_after: int = CONTINUITY_DEFAULTS["grow_after"]
    compatibility_tol: float = CONTINUITY_DEFAULTS["compatibility_tol"]
    regime_band: float = CONTINUITY_DEFAULTS["regime_band"]
    enforce_regime: bool = False
    gmres: dict = field(default_factory=lambda: dict(GMRES_DEFAULTS))
    threads: int = 1

    @classmethod
    def from_dict(cls, spec, threads=1):
        kwargs = {_OPTION_KEYS[key]: value for key, value in (spec or {}).items()}
        return cls(threads=threads, **kwargs)


@dataclass
class SolveState:
    phi: PotentialField
    t: float
    slack: float
    residual_sup: float
    min_cone_margin: float
    newton_trace: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    c0: float = 1.0

    def trace_frame(self):
        return pd.DataFrame(self.newton_trace,
                            columns=["iteration", "residual", "damping", "krylovIterations"])

    def stage_frame(self):
        return pd.DataFrame(self.stages)

    def to_dict(self):
        return {
            "t": self.t,
            "slack": self.slack,
            "residualSup": self.residual_sup,
            "minConeMargin": self.min_cone_margin,
            "c0": self.c0,
            "phiSup": self.phi.sup(),
            "newtonTrace": self.trace_frame().to_dict(orient="records"),
            "stages": list(self.stages),
            "warnings": list(self.warnings),
        }


@dataclass
class ManufacturedCase:
    phi_star: PotentialField
    f_grid: np.ndarray
    coeffs: object
    min_cone_margin: float


@dataclass
class CohomologyIntegrals:
    """value_k = int Omega_0^k chi^{n-k} / int chi^n for k = 1..n."""

    values: tuple
    defect: float = None

    @property
    def n(self):
        return len(self.values)

    @property
    def c0(self):
        return self.values[-1]

    def value(self, k):
        return 1.0 if k == 0 else self.values[k - 1]

    def to_dict(self):
        return {"values": list(self.values), "c0": self.c0, "defect": self.defect}


@dataclass
class Linearization:
    """Matrix-free Frechet derivative psi -> (1/4) sum_ij C_ij d_i d_j psi of the residual."""

    geom: object
    coefficients: np.ndarray
    slack_derivative: float = -1.0

    def apply(self, psi):
        return 0.25 * contract_hessian(self.geom, self.coefficients, np.asarray(psi, dtype=float))

    def bordered_operator(self):
        geom, size = self.geom, self.geom.size

        def matvec(z):
            z = np.asarray(z, dtype=float).ravel()
            psi = z[:size].reshape(geom.grid_shape)
            out = np.empty(size + 1)
            out[:size] = (self.apply(psi) + self.slack_derivative * z[size]).ravel()
            out[size] = psi.mean()
            return out

        return LinearOperator((size + 1, size + 1), matvec=matvec, dtype=float)

    def preconditioner(self):
        """Exact inverse of the bordered operator with grid-averaged coefficients."""
        geom, size, n = self.geom, self.geom.size, self.geom.n
        mean_coeff = self.coefficients.reshape(-1, n, n).mean(axis=0)
        symbol = np.zeros(geom.grid_shape)
        for i in range(n):
            for j in range(i, n):
                weight = 1.0 if i == j else 2.0
                symbol = symbol + 0.25 * weight * mean_coeff[i, j] * geom.symbol(i, j)
        symbol[(0,) * n] = 1.0

        def matvec(z):
            z = np.asarray(z, dtype=float).ravel()
            g = z[:size].reshape(geom.grid_shape)
            g_mean = g.mean()
            psi = np.fft.ifftn(np.fft.fftn(g - g_mean) / symbol).real
            out = np.empty(size + 1)
            out[:size] = (psi - psi.mean() + z[size]).ravel()
            out[size] = g_mean / self.slack_derivative
            return out

        return LinearOperator((size + 1, size + 1), matvec=matvec, dtype=float)


@dataclass
class _Evaluation:
    lam: np.ndarray
    Q: np.ndarray
    residual: np.ndarray
    margins: np.ndarray

    @property
    def sup(self):
        return float(np.max(np.abs(self.residual)))

    @property
    def min_margin(self):
        return float(np.min(self.margins))


# --- Pointwise pieces ---


def _operator_value(coeffs, t, lam):
    n = coeffs.n
    e = elem_sym_all(lam)
    value = e[..., n].copy()
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            value -= t * ck / comb(n, k) * e[..., k]
    return value


def _operator_gradient(coeffs, t, lam):
    """d/dlam_i of e_n - t sum c_k/C(n,k) e_k, using de_k/dlam_i = S_{k-1;i}."""
    n = coeffs.n
    table = deleted_sym_table(lam)
    grad = table[..., :, n - 1].copy()
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            grad -= t * ck / comb(n, k) * table[..., :, k - 1]
    return grad


def _as_grid(geom, values):
    if values is None:
        return np.zeros(geom.grid_shape)
    if isinstance(values, TrigPolynomial):
        return values.sample(geom)
    values = np.broadcast_to(np.asarray(values, dtype=float), geom.grid_shape).copy()
    if not np.all(np.isfinite(values)):
        raise DomainError("source term must be finite")
    return values


def _as_potential(phi):
    return phi if isinstance(phi, PotentialField) else PotentialField(phi)


def _evaluate(geom, coeffs, f_grid, t, phi, slack, threads=1, exact_hessian=None):
    lam, Q = hessian_field(geom, phi, exact_hessian, threads).eigensystem()
    require_positive_definite(geom, lam)
    residual = (_operator_value(coeffs, t, lam) - t * f_grid
                - (1.0 - t) * coeffs.c0 - slack)
    return _Evaluation(lam, Q, residual, cone_margin_batch(coeffs, t, lam))


def _require_cone(geom, evaluation, t):
    if evaluation.min_margin > 0:
        return
    index = np.unravel_index(int(np.argmin(evaluation.margins)), evaluation.margins.shape)
    raise ConeBreach("cone condition fails", t=t, point=list(geom.point(index)),
                     margin=evaluation.min_margin)


def _coefficient_field(geom, coeffs, t, evaluation):
    """C = L^{-T} Q diag(dG/dlam) Q^T L^{-1} at every point."""
    g = _operator_gradient(coeffs, t, evaluation.lam)
    Q = evaluation.Q
    inner = (Q * g[..., None, :]) @ np.swapaxes(Q, -1, -2)
    Linv = solve_triangular(geom.chol, np.eye(geom.n), lower=True)
    return Linv.T @ inner @ Linv


# --- Operations ---


def residual(geom, coeffs, f_grid, t, phi, slack=0.0, threads=1):
    """Per-point residual of the stage-t equation; ConeBreach if Omega_phi is not positive definite."""
    f_grid = _as_grid(geom, f_grid)
    return _evaluate(geom, coeffs, f_grid, t, _as_potential(phi), slack, threads).residual


def linearize(geom, coeffs, f_grid, t, phi, threads=1):
    f_grid = _as_grid(geom, f_grid)
    evaluation = _evaluate(geom, coeffs, f_grid, t, _as_potential(phi), 0.0, threads)
    _require_cone(geom, evaluation, t)
    return Linearization(geom, _coefficient_field(geom, coeffs, t, evaluation))


def _solve_bordered(linearization, rhs_grid, options):
    size = linearization.geom.size
    rhs = np.concatenate([-rhs_grid.ravel(), [0.0]])
    operator = linearization.bordered_operator()
    settings = options.gmres
    iterations = [0]

    def count(_):
        iterations[0] += 1

    step, info = gmres(operator, rhs, rtol=settings["rtol"], atol=settings["atol"],
                       restart=settings["restart"], maxiter=settings["maxiter"],
                       M=linearization.preconditioner(), callback=count,
                       callback_type="pr_norm")
    if info != 0:
        achieved = np.linalg.norm(rhs - operator.matvec(step)) / np.linalg.norm(rhs)
        if info < 0 or achieved > settings["accept_rtol"]:
            raise LinearSolveStall("Krylov solve did not converge", info=int(info),
                                   relativeResidual=float(achieved), iterations=iterations[0])
        logger.warning("GMRES stopped at relative residual %.3e (target %.1e); accepting",
                       achieved, settings["rtol"])
    return step[:size].reshape(linearization.geom.grid_shape), float(step[size]), iterations[0]


def newton_solve(geom, coeffs, f_grid, t, phi, slack=0.0, options=None):
    """Damped Newton on the bordered (phi, slack) system at a fixed stage t."""
    options = options or SolverOptions()
    f_grid = _as_grid(geom, f_grid)
    phi = _as_potential(phi)
    slack = float(slack)
    current = _evaluate(geom, coeffs, f_grid, t, phi, slack, options.threads)
    _require_cone(geom, current, t)
    trace = [(0, current.sup, 1.0, 0)]

    for iteration in range(1, options.max_iter + 1):
        if current.sup <= options.tol:
            break
        linearization = Linearization(geom, _coefficient_field(geom, coeffs, t, current))
        d_phi, d_slack, krylov = _solve_bordered(linearization, current.residual, options)

        damping, accepted, admissible_seen, breach = 1.0, None, False, None
        while damping >= options.damping_floor:
            trial_phi = phi.shifted(d_phi, damping)
            trial_slack = slack + damping * d_slack
            try:
                trial = _evaluate(geom, coeffs, f_grid, t, trial_phi, trial_slack, options.threads)
                _require_cone(geom, trial, t)
            except ConeBreach as e:
                breach = e
                damping *= 0.5
                continue
            admissible_seen = True
            if trial.sup < current.sup or trial.sup <= options.tol:
                accepted = trial
                break
            damping *= 0.5

        if accepted is None:
            if not admissible_seen and breach is not None:
                raise ConeBreach("no admissible damping keeps the cone condition",
                                 iteration=iteration, **breach.details)
            raise LineSearchFailure("backtracking found no residual decrease",
                                    t=t, iteration=iteration, residualSup=current.sup)
        phi, slack, current = trial_phi, trial_slack, accepted
        trace.append((iteration, current.sup, damping, krylov))
        logger.debug("t=%.6g newton %d: residual %.3e damping %.3g gmres %d",
                     t, iteration, current.sup, damping, krylov)

    if current.sup > options.tol:
        raise MaxIterExceeded(f"Newton did not reach {options.tol:g} in {options.max_iter} iterations",
                              t=t, residualSup=current.sup)
    return SolveState(phi=phi, t=t, slack=slack, residual_sup=current.sup,
                      min_cone_margin=current.min_margin, newton_trace=trace, c0=coeffs.c0)


def cohomology_integrals(geom, coeffs=None, f_grid=None):
    """Mixed densities of the constant forms and, given coefficients, the compatibility defect."""
    n = geom.n
    lam = eigvalsh(geom.W0, geom.X)
    e = elem_sym_all(lam)
    values = tuple(float(e[k] / comb(n, k)) for k in range(1, n + 1))
    integrals = CohomologyIntegrals(values)
    if coeffs is not None:
        mean_f = 0.0 if f_grid is None else float(np.mean(_as_grid(geom, f_grid)))
        integrals.defect = (integrals.value(n)
                            - sum(coeffs.ck(k) * integrals.value(k) for k in range(1, n))
                            - mean_f)
    return integrals


def path_regime_check(coeffs, t, f_grid, class_ratio, band=CONTINUITY_DEFAULTS["regime_band"]):
    """Zeroth-order term t f + (1-t) c0 against f_m of the scaled coefficients t c."""
    zeroth = t * np.asarray(f_grid) + (1.0 - t) * coeffs.c0
    scaled = coeffs.scaled(t)
    fm = compute_fm(scaled, class_ratio).fm if scaled.regime is Regime.POSITIVE_SUM else 0.0
    min_zeroth = float(np.min(zeroth))
    return {"t": t, "fm": fm, "minZerothOrder": min_zeroth, "regimeOk": min_zeroth > fm + band}


def _source_warnings(coeffs, f_grid, class_ratio, options):
    messages = []
    check = path_regime_check(coeffs, 1.0, f_grid, class_ratio, options.regime_band)
    if not check["regimeOk"]:
        bound = "f_m" if coeffs.regime is Regime.POSITIVE_SUM else "0"
        messages.append(f"min f = {check['minZerothOrder']:.6g} does not exceed {bound} = {check['fm']:.6g}")
    if float(np.mean(f_grid)) < -options.regime_band:
        messages.append(f"mean of f is negative ({float(np.mean(f_grid)):.6g})")
    for message in messages:
        if options.enforce_regime:
            raise DomainError(message, regime=coeffs.regime.value)
        logger.warning(message)
    return messages


def _stage_record(state, dt, regime):
    return {
        "t": state.t,
        "dt": dt,
        "iterations": len(state.newton_trace) - 1,
        "residualSup": state.residual_sup,
        "minConeMargin": state.min_cone_margin,
        "slack": state.slack,
        "fm": regime["fm"],
        "regimeOk": regime["regimeOk"],
    }


def continuity_solve(geom, coeffs, f_grid, options=None):
    """March t from 0 to 1, warm-starting each stage from the last accepted one."""
    options = options or SolverOptions()
    f_grid = _as_grid(geom, f_grid)
    integrals = cohomology_integrals(geom, coeffs, f_grid)
    if abs(integrals.defect) > options.compatibility_tol:
        raise CompatibilityDefect(f"compatibility defect {integrals.defect:.3e} exceeds "
                                  f"{options.compatibility_tol:g}", defect=integrals.defect)
    coeffs = replace(coeffs, c0=integrals.c0)
    warnings = _source_warnings(coeffs, f_grid, integrals.c0, options)

    state = newton_solve(geom, coeffs, f_grid, 0.0, PotentialField.zeros(geom), 0.0, options)
    stages = [_stage_record(state, 0.0, path_regime_check(coeffs, 0.0, f_grid, integrals.c0))]
    dt, streak = options.dt_initial, 0
    while state.t < 1.0:
        t_next = min(1.0, state.t + dt)
        try:
            trial = newton_solve(geom, coeffs, f_grid, t_next, state.phi, state.slack, options)
        except (ConeBreach, MaxIterExceeded, LinearSolveStall, LineSearchFailure) as e:
            dt *= 0.5
            streak = 0
            logger.info("stage t=%.6g failed with %s; step halved to %.4g",
                        t_next, type(e).__name__, dt)
            if dt < options.dt_min:
                raise StepUnderflow("continuity step fell below the minimum", t=state.t,
                                    dt=dt, lastError=e.to_dict())
            continue
        regime = path_regime_check(coeffs, t_next, f_grid, integrals.c0, options.regime_band)
        if not regime["regimeOk"]:
            logger.warning("stage t=%.6g: zeroth-order term %.6g below f_m %.6g",
                           t_next, regime["minZerothOrder"], regime["fm"])
        stages.append(_stage_record(trial, dt, regime))
        logger.info("stage t=%.6g accepted: %d Newton steps, margin %.4g",
                    t_next, stages[-1]["iterations"], trial.min_cone_margin)
        state = trial
        streak += 1
        if streak >= options.grow_after:
            dt, streak = 2.0 * dt, 0

    state.stages = stages
    state.warnings = warnings
    state.c0 = integrals.c0
    return state


@dataclass
class ClassPathReport:
    rows: list

    def smallest_solvable(self):
        solvable = [row["s"] for row in self.rows if row["solvable"]]
        return min(solvable) if solvable else None

    def monotone(self):
        """No unsolvable s lies above a solvable one."""
        ordered = sorted(self.rows, key=lambda row: row["s"])
        seen_solvable = False
        for row in ordered:
            if row["solvable"]:
                seen_solvable = True
            elif seen_solvable:
                return False
        return True

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def to_dict(self):
        return {
            "rows": list(self.rows),
            "smallestSolvable": self.smallest_solvable(),
            "monotone": self.monotone(),
        }


def class_path_probe(geom, coeffs, f_grid, s_list, options=None):
    """Attempt the solve in the classes (1+s)[Omega_0] for each s, largest first."""
    s_list = [float(s) for s in s_list]
    if not s_list or any(a <= b for a, b in zip(s_list, s_list[1:])) or s_list[-1] < 0:
        raise DomainError("s values must be non-negative and strictly decreasing", sList=s_list)
    f_grid = _as_grid(geom, f_grid)
    rows = []
    for s in s_list:
        scaled = geom.with_background((1.0 + s) * geom.W0)
        slack_constant = cohomology_integrals(scaled, coeffs, f_grid).defect
        row = {"s": s, "slackConstant": slack_constant, "solvable": False,
               "minConeMargin": None, "residualSup": None, "error": None}
        try:
            state = continuity_solve(scaled, coeffs, f_grid + slack_constant, options)
        except SolverError as e:
            row["error"] = type(e).__name__
            logger.info("class (1+%g)[Omega_0]: %s", s, e.message)
        else:
            row.update(solvable=True, minConeMargin=state.min_cone_margin,
                       residualSup=state.residual_sup)
        rows.append(row)
    return ClassPathReport(rows)


def manufacture(geom, coeffs, phi_star):
    """Source term for which phi_star solves the t = 1 equation with zero slack.

    A TrigPolynomial is differentiated exactly; grid samples use the
    geometry's Hessian scheme.
    """
    if isinstance(phi_star, TrigPolynomial):
        potential = PotentialField(phi_star.sample(geom))
        exact = phi_star.hessian(geom)
    else:
        potential, exact = _as_potential(phi_star), None
    lam, _ = hessian_field(geom, potential, exact).eigensystem()
    require_positive_definite(geom, lam)
    margins = cone_margin_batch(coeffs, 1.0, lam)
    if np.min(margins) <= 0:
        index = np.unravel_index(int(np.argmin(margins)), margins.shape)
        raise ConeBreach("manufactured potential violates the cone condition",
                         point=list(geom.point(index)), margin=float(np.min(margins)))
    return ManufacturedCase(potential, _operator_value(coeffs, 1.0, lam), coeffs,
                            float(np.min(margins)))


def cone_margin_field(geom, coeffs, t, phi, threads=1):
    """Global minimum of the pointwise cone margin and the grid point attaining it."""
    lam = hessian_field(geom, _as_potential(phi), threads=threads).eigenvalues()
    require_positive_definite(geom, lam)
    margins = cone_margin_batch(coeffs, t, lam)
    index = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return float(margins[index]), geom.point(index)

"""Executable property suite for the pointwise kernel.

Each check samples the cone region, evaluates one identity or inequality and
returns a row for the summary table.
"""

import logging
from dataclasses import replace
from math import comb

import numpy as np
import pandas as pd

from app.kernel import (
    CoefficientSet,
    compute_fm,
    cone_margin,
    cone_margin_batch,
    elem_sym,
    elem_sym_all,
    elem_sym_deleted,
    eval_F,
    euler_weighted_sum,
    grad_F,
    maclaurin_chain,
    binomial_restriction_identities,
    wedge_density_oracle,
)
from utils.constants import KERNEL_TOLERANCES, MAX_ORACLE_DIM
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

LOG_RANGE = (-2.0, 2.0)


def _relative(a, b):
    scale = max(abs(a), abs(b), KERNEL_TOLERANCES["abs_floor"] / KERNEL_TOLERANCES["rel"])
    return abs(a - b) / scale


def random_coefficients(rng, n):
    return CoefficientSet(n, tuple(rng.uniform(0.0, 1.0, n - 1)))


def sample_cone(rng, coeffs, t=1.0, tries=200):
    """Log-uniform eigenvalues in [1e-2, 1e2] with positive cone margin, ascending."""
    for _ in range(tries):
        lam = np.sort(10.0 ** rng.uniform(*LOG_RANGE, coeffs.n))
        if cone_margin(coeffs, t, lam).margin > 0:
            return lam
    # rescaling by twice the worst load always lands inside the cone
    load = 1.0 - cone_margin(coeffs, t, lam).margin
    return lam * 2.0 * max(load, 1.0)


def _row(name, samples, worst, passed):
    return {"property": name, "samples": samples, "worst": float(worst), "passed": bool(passed)}


def check_recurrence(rng, samples, max_dim):
    """S_k = S_{k;i} + lam_i S_{k-1;i}."""
    worst = 0.0
    for _ in range(samples):
        n = int(rng.integers(2, max_dim + 1))
        lam = 10.0 ** rng.uniform(*LOG_RANGE, n)
        for k in range(1, n):
            for i in range(n):
                rhs = elem_sym_deleted(lam, k, i) + lam[i] * elem_sym_deleted(lam, k - 1, i)
                worst = max(worst, _relative(elem_sym(lam, k), rhs))
    return _row("recurrence", samples, worst, worst <= KERNEL_TOLERANCES["rel"])


def check_polynomial_oracle(rng, samples, max_dim):
    """elem_sym against the coefficients of prod(1 + t lam_i) by convolution."""
    worst = 0.0
    for _ in range(samples):
        n = int(rng.integers(1, max_dim + 1))
        lam = 10.0 ** rng.uniform(*LOG_RANGE, n)
        poly = np.array([1.0])
        for value in lam:
            poly = np.convolve(poly, [1.0, value])
        ours = elem_sym_all(lam)
        worst = max(worst, max(_relative(a, b) for a, b in zip(ours, poly)))
    return _row("polynomial_oracle", samples, worst, worst <= KERNEL_TOLERANCES["rel"])


def _random_spd(rng, n):
    G = rng.normal(size=(n, n))
    return G @ G.T + n * np.eye(n)


def check_wedge_density(rng, samples, max_dim):
    """Mixed discriminant density equals k!(n-k)!/n! S_k of the relative eigenvalues."""
    worst = 0.0
    top = min(max_dim, MAX_ORACLE_DIM)
    for _ in range(samples):
        n = int(rng.integers(2, top + 1))
        A, X = _random_spd(rng, n), _random_spd(rng, n)
        lam = np.linalg.eigvals(np.linalg.solve(X, A)).real
        for k in range(n + 1):
            expected = elem_sym(lam, k) / comb(n, k)
            worst = max(worst, _relative(wedge_density_oracle(A, X, k), expected))
    return _row("wedge_density", samples, worst, worst <= 1e-10)


def check_cone_convexity(rng, samples, max_dim):
    """Convex combinations of two cone profiles stay in the cone."""
    worst = np.inf
    for _ in range(samples):
        coeffs = random_coefficients(rng, int(rng.integers(2, max_dim + 1)))
        lam, mu = sample_cone(rng, coeffs), rng.permutation(sample_cone(rng, coeffs))
        s = rng.uniform(0.0, 1.0, 9)[:, None]
        margins = cone_margin_batch(coeffs, 1.0, s * lam + (1.0 - s) * mu)
        worst = min(worst, float(np.min(margins)))
    return _row("cone_convexity", samples, worst, worst > 0)


def _path_sample(rng, max_dim):
    coeffs = random_coefficients(rng, int(rng.integers(2, max_dim + 1)))
    t = float(rng.uniform(0.0, 1.0))
    return coeffs, t, sample_cone(rng, coeffs, t)


def check_monotone_decrease(rng, samples, max_dim):
    worst = -np.inf
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        worst = max(worst, float(np.max(grad_F(coeffs, t, float(rng.uniform(0, 1)), lam))))
    return _row("monotone_decrease", samples, worst, worst < 0)


def check_sorted_dominance(rng, samples, max_dim):
    """-lam_1 dF/dlam_1 >= -lam_i dF/dlam_i with lam ascending."""
    worst = np.inf
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        weighted = -lam * grad_F(coeffs, t, float(rng.uniform(0, 1)), lam)
        gap = weighted[0] - np.max(weighted)
        worst = min(worst, gap / max(abs(weighted[0]), 1e-300))
    return _row("sorted_dominance", samples, worst, worst >= -KERNEL_TOLERANCES["rel"])


# offsets above f_m; most samples sit right on the boundary
POSITIVITY_OFFSETS = (1e-9, 1e-9, 1e-9, 1e-8, 1e-6, 1e-3)


def check_positivity(rng, samples, max_dim):
    """F > 0 on the cone region for f = f_m + offset, with c0 the class ratio."""
    worst = np.inf
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        ratio = float(10.0 ** rng.uniform(-3.0, 1.0))
        coeffs = replace(coeffs, c0=ratio)
        f = compute_fm(coeffs, ratio).fm + float(rng.choice(POSITIVITY_OFFSETS))
        worst = min(worst, float(eval_F(coeffs, t, f, lam)))
    return _row("positivity", samples, worst, worst > 0)


def check_segment_convexity(rng, samples, max_dim):
    """Discrete second differences of F along segments inside the cone region."""
    worst = np.inf
    s = np.linspace(0.0, 1.0, 11)[:, None]
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        mu = np.sort(sample_cone(rng, coeffs, t))
        f = float(rng.uniform(0.0, 1.0))
        values = eval_F(coeffs, t, f, s * lam + (1.0 - s) * mu)
        second = values[:-2] - 2.0 * values[1:-1] + values[2:]
        worst = min(worst, float(np.min(second)) / max(float(np.max(np.abs(values))), 1.0))
    return _row("segment_convexity", samples, worst, worst >= -1e-10)


def check_euler_identity(rng, samples, max_dim):
    worst = 0.0
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        f = float(rng.uniform(0.0, 1.0))
        assembled = float(-np.sum(lam * grad_F(coeffs, t, f, lam)))
        worst = max(worst, _relative(euler_weighted_sum(coeffs, t, f, lam), assembled))
    return _row("euler_identity", samples, worst, worst <= KERNEL_TOLERANCES["rel"])


def check_gradient_fd(rng, samples, max_dim):
    """grad_F against central differences with a relative step of 1e-6."""
    worst = 0.0
    for _ in range(samples):
        coeffs, t, lam = _path_sample(rng, max_dim)
        f = float(rng.uniform(0.0, 1.0))
        grad = grad_F(coeffs, t, f, lam)
        value = float(eval_F(coeffs, t, f, lam))
        for i in range(coeffs.n):
            h = 1e-6 * lam[i]
            up, down = lam.copy(), lam.copy()
            up[i] += h
            down[i] -= h
            fd = (eval_F(coeffs, t, f, up) - eval_F(coeffs, t, f, down)) / (2 * h)
            # roundoff in F scales with |F| / lam_i
            worst = max(worst, abs(fd - grad[i]) / (abs(grad[i]) + abs(value) / lam[i]))
    return _row("gradient_fd", samples, worst, worst <= 1e-7)


def check_eigenvalue_form(rng, samples, max_dim):
    """For diagonal A and chi = I, F = 1 exactly when det A = sum c_k density_k + f."""
    worst = 0.0
    top = min(max_dim, MAX_ORACLE_DIM)
    for _ in range(samples):
        coeffs = random_coefficients(rng, int(rng.integers(2, top + 1)))
        lam = sample_cone(rng, coeffs)
        n = coeffs.n
        sigma = elem_sym_all(1.0 / lam)
        f = (1.0 - sum(coeffs.ck(k) / comb(n, k) * sigma[n - k] for k in range(1, n))) / sigma[n]
        A, X = np.diag(lam), np.eye(n)
        form = sum(coeffs.ck(k) * wedge_density_oracle(A, X, k) for k in range(1, n)) + f
        worst = max(worst,
                    abs(eval_F(coeffs, 1.0, f, lam) - 1.0),
                    _relative(wedge_density_oracle(A, X, n), form))
    return _row("eigenvalue_form", samples, worst, worst < 1e-10)


def check_maclaurin(rng, samples, max_dim):
    worst = np.inf
    for _ in range(samples):
        lam = 10.0 ** rng.uniform(*LOG_RANGE, int(rng.integers(1, max_dim + 1)))
        chain = maclaurin_chain(lam)
        steps = chain[:-1] - chain[1:]
        if steps.size:
            worst = min(worst, float(np.min(steps / chain[:-1])))
    if not np.isfinite(worst):
        worst = 0.0
    return _row("maclaurin", samples, worst, worst >= -KERNEL_TOLERANCES["rel"])


def check_binomial_sweep(max_dim):
    """Exhaustive exact sweep of both binomial identities up to max_dim."""
    count, failures = 0, 0
    for n in range(2, max_dim + 1):
        for m in range(1, n + 1):
            for q in range(0, m + 1):
                for p in range(0, q + 1):
                    try:
                        ok = binomial_restriction_identities(n, m, p, q)
                    except ValueError:
                        continue
                    count += 1
                    failures += not ok
    return _row("binomial_identities", count, failures, failures == 0)


CHECKS = (
    check_recurrence,
    check_polynomial_oracle,
    check_wedge_density,
    check_cone_convexity,
    check_monotone_decrease,
    check_sorted_dominance,
    check_positivity,
    check_segment_convexity,
    check_euler_identity,
    check_gradient_fd,
    check_eigenvalue_form,
    check_maclaurin,
)


def run_property_suite(seed=0, samples=200, max_dim=6):
    """Runs every check and returns the summary table (one row per property)."""
    rng = make_rng(seed)
    rows = [check(rng, samples, max_dim) for check in CHECKS]
    rows.append(check_binomial_sweep(max_dim))
    frame = pd.DataFrame(rows)
    failed = frame.loc[~frame["passed"], "property"].tolist()
    if failed:
        logger.warning("kernel properties failed: %s", ", ".join(failed))
    else:
        logger.info("all %d kernel properties hold", len(frame))
    return frame

"""Null-hypothesis model fits for the score tests.

Three fits, all requiring estimation only under the missing-at-random null:

* :func:`fit_propensity_null` — logistic regression of the missingness
  indicator on covariates (Newton with step halving).
* :func:`fit_outcome_parametric` — Gaussian conditional outcome model with
  linear mean and log-variance bases, fit on complete cases.
* :func:`fit_location` — least-squares mean model on complete cases.

The Gaussian family exposes closed-form conditional moments and the
moment/information gradients the plug-in variance estimators need; a
Gauss-Hermite fallback covers families without closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .basis import BasisTerm, design_matrix
from .data import Dataset
from .exceptions import (
    DegenerateVariance,
    NoConvergence,
    RankDeficientDesign,
    Separation,
    SingularMatrix,
)
from .numerics import gauss_hermite_nodes, solve_spd

_MAX_ITER = 100
_GRAD_RTOL = 1e-8
_SEPARATION_BOUND = 30.0
_VARIANCE_FLOOR = 1e-12


def _check_full_rank(design: np.ndarray, what: str) -> None:
    gram = design.T @ design / design.shape[0]
    try:
        solve_spd(gram, np.zeros(gram.shape[0]))
    except SingularMatrix as exc:
        raise RankDeficientDesign(f"{what} design is rank deficient: {exc}") from exc


def _loglik_bernoulli(eta: np.ndarray, d: np.ndarray) -> float:
    return float(d @ eta - np.logaddexp(0.0, eta).sum())


@dataclass(frozen=True)
class PropensityFit:
    """Null logistic propensity MLE with its averaged information matrix."""

    beta_hat: np.ndarray
    info_matrix: np.ndarray  # (1/n) sum pi (1-pi) x x^T at beta_hat
    loglik: float
    iterations: int
    converged: bool
    pi: np.ndarray  # fitted observation probabilities, all rows
    design: np.ndarray  # propensity design, all rows
    columns: tuple | None = None

    @property
    def n(self) -> int:
        return self.design.shape[0]

    def standard_errors(self) -> np.ndarray:
        """Conventional logistic SEs from the inverse information."""
        inv = solve_spd(self.info_matrix, np.eye(self.info_matrix.shape[0]))
        return np.sqrt(np.diag(inv) / self.n)


def fit_propensity_null(data: Dataset, columns=None) -> PropensityFit:
    """Maximize the null propensity likelihood over beta.

    Parameters
    ----------
    data : Dataset
    columns : optional sequence of covariate-matrix column indices forming
        the propensity design; defaults to all columns of ``data.x``.

    Raises
    ------
    Separation
        If either missingness pattern is absent or a coefficient exceeds
        magnitude 30 during iteration (the MLE does not exist).
    RankDeficientDesign, NoConvergence
    """
    if columns is None:
        design = data.x
        columns_out = None
    else:
        columns_out = tuple(int(c) for c in columns)
        design = np.ascontiguousarray(data.x[:, columns_out])
    d = data.d.astype(float)
    n, p = design.shape
    n1 = data.n_complete
    if n1 == 0 or n1 == n:
        raise Separation(
            "all outcomes are "
            + ("observed" if n1 == n else "missing")
            + "; the null propensity MLE does not exist"
        )
    _check_full_rank(design, "propensity")

    beta = np.zeros(p)
    eta = design @ beta
    pi = expit(eta)
    loglik = _loglik_bernoulli(eta, d)
    tol = _GRAD_RTOL * n
    iterations = 0
    for iterations in range(1, _MAX_ITER + 1):
        grad = design.T @ (d - pi)
        if np.max(np.abs(grad)) <= tol:
            iterations -= 1
            break
        weights = pi * (1.0 - pi)
        hessian = design.T @ (design * weights[:, None])
        step = solve_spd(hessian, grad)
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            eta_cand = design @ cand
            loglik_cand = _loglik_bernoulli(eta_cand, d)
            # non-strict: near the optimum the Newton gain is below float
            # resolution while the gradient still collapses
            if loglik_cand >= loglik:
                break
            scale *= 0.5
        else:
            raise NoConvergence(
                "propensity line search stalled before reaching gradient tolerance"
            )
        beta, eta, loglik = cand, eta_cand, loglik_cand
        pi = expit(eta)
        if np.max(np.abs(beta)) > _SEPARATION_BOUND:
            raise Separation(
                "a propensity coefficient exceeded magnitude 30; "
                "complete or quasi-complete separation"
            )
    else:
        raise NoConvergence(f"propensity fit did not converge in {_MAX_ITER} iterations")

    observed = data.d == 1
    if np.all(pi[observed] >= 1.0 - 1e-6) and np.all(pi[~observed] <= 1e-6):
        # the gradient tolerance can be met while beta still diverges
        raise Separation(
            "fitted probabilities perfectly classify the missingness indicator; "
            "the null propensity MLE does not exist"
        )

    weights = pi * (1.0 - pi)
    info = design.T @ (design * weights[:, None]) / n
    return PropensityFit(
        beta_hat=beta,
        info_matrix=info,
        loglik=loglik,
        iterations=iterations,
        converged=True,
        pi=pi,
        design=design,
        columns=columns_out,
    )


@dataclass(frozen=True)
class GaussianOutcomeFamily:
    """Conditional Gaussian outcome model.

    Mean is ``mean_basis(x) @ xi_mean`` and variance is
    ``exp(logvar_basis(x) @ xi_logvar)``; the parameter vector stacks the
    mean coefficients first.
    """

    mean_basis: tuple[BasisTerm, ...]
    logvar_basis: tuple[BasisTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean_basis", tuple(self.mean_basis))
        object.__setattr__(self, "logvar_basis", tuple(self.logvar_basis))
        if not self.mean_basis or not self.logvar_basis:
            raise ValueError("mean and log-variance bases must be nonempty")

    @property
    def dim_mean(self) -> int:
        return len(self.mean_basis)

    @property
    def dim_logvar(self) -> int:
        return len(self.logvar_basis)

    @property
    def dim_xi(self) -> int:
        return self.dim_mean + self.dim_logvar

    def split(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim_xi,):
            raise ValueError(f"xi must have length {self.dim_xi}, got {xi.shape}")
        return xi[: self.dim_mean], xi[self.dim_mean :]

    def mean_design(self, x: np.ndarray) -> np.ndarray:
        return design_matrix(self.mean_basis, x)

    def logvar_design(self, x: np.ndarray) -> np.ndarray:
        return design_matrix(self.logvar_basis, x)

    def density(self, y, x_row: np.ndarray, xi: np.ndarray):
        """Conditional density f(y | x_row) at the given parameter."""
        xi_m, xi_v = self.split(xi)
        row = np.atleast_2d(np.asarray(x_row, dtype=float))
        m = float(self.mean_design(row)[0] @ xi_m)
        v = float(np.exp(self.logvar_design(row)[0] @ xi_v))
        y = np.asarray(y, dtype=float)
        out = np.exp(-((y - m) ** 2) / (2.0 * v)) / np.sqrt(2.0 * np.pi * v)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ParametricOutcomeFit:
    """Gaussian outcome MLE plus per-row moment caches over the full dataset."""

    family: GaussianOutcomeFamily
    xi_hat: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    mean_design_all: np.ndarray = field(repr=False)
    logvar_design_all: np.ndarray = field(repr=False)
    m1: np.ndarray = field(repr=False)  # conditional mean, all rows
    var: np.ndarray = field(repr=False)  # conditional variance, all rows

    @property
    def n(self) -> int:
        return self.m1.shape[0]

    @property
    def mean_coef(self) -> np.ndarray:
        return self.xi_hat[: self.family.dim_mean]

    @property
    def logvar_coef(self) -> np.ndarray:
        return self.xi_hat[self.family.dim_mean :]

    @property
    def m2(self) -> np.ndarray:
        """Conditional second moment per row."""
        return self.m1**2 + self.var


def _gaussian_loglik(s, r2_over_v, n_complete) -> float:
    return float(-0.5 * (n_complete * np.log(2.0 * np.pi) + s.sum() + r2_over_v.sum()))


def outcome_fit_at(data: Dataset, family: GaussianOutcomeFamily, xi) -> ParametricOutcomeFit:
    """Evaluate the family at a given parameter without optimizing.

    Useful for oracles and for plugging known truths into the score
    machinery; the returned fit is marked converged.
    """
    xi = np.asarray(xi, dtype=float)
    xi_m, xi_v = family.split(xi)
    bm_all = family.mean_design(data.x)
    bv_all = family.logvar_design(data.x)
    m1 = bm_all @ xi_m
    var = np.exp(bv_all @ xi_v)
    complete = data.complete_idx
    r = data.y_complete - m1[complete]
    s_c = np.log(var[complete])
    loglik = _gaussian_loglik(s_c, r * r / var[complete], complete.size)
    return ParametricOutcomeFit(
        family=family,
        xi_hat=xi,
        loglik=loglik,
        converged=True,
        iterations=0,
        mean_design_all=bm_all,
        logvar_design_all=bv_all,
        m1=m1,
        var=var,
    )


def fit_outcome_parametric(data: Dataset, family: GaussianOutcomeFamily) -> ParametricOutcomeFit:
    """Maximize the complete-case Gaussian likelihood over xi.

    Alternates exact weighted least squares for the mean coefficients with
    damped Newton steps for the log-variance coefficients until the joint
    gradient meets tolerance.
    """
    complete = data.complete_idx
    nc = complete.size
    if nc < family.dim_xi + 1:
        raise RankDeficientDesign(
            f"need at least dim_xi + 1 = {family.dim_xi + 1} complete cases, have {nc}"
        )
    xc = data.x[complete]
    yc = data.y_complete
    bm = family.mean_design(xc)
    bv = family.logvar_design(xc)
    bm_all = family.mean_design(data.x)
    bv_all = family.logvar_design(data.x)
    _check_full_rank(bm, "outcome mean")
    _check_full_rank(bv, "outcome log-variance")

    n = data.n
    tol = _GRAD_RTOL * n

    xi_m = solve_spd(bm.T @ bm, bm.T @ yc)
    r = yc - bm @ xi_m
    s2 = float(np.mean(r * r))
    # project log residual variance onto the log-variance basis as a start
    target = np.log(max(s2, 1e-300))
    xi_v = solve_spd(bv.T @ bv, bv.T @ np.full(nc, target))

    def _floor_check(xi_v_cand):
        s_all = bv_all @ xi_v_cand
        if np.min(s_all) < np.log(_VARIANCE_FLOOR):
            raise DegenerateVariance(
                "fitted conditional variance fell below 1e-12",
                mean_coef=xi_m.copy(),
                row=int(np.argmin(s_all)),
            )

    _floor_check(xi_v)
    s_c = bv @ xi_v
    iterations = 0
    for iterations in range(1, _MAX_ITER + 1):
        # mean step: exact weighted least squares given the variances
        w = np.exp(-s_c)
        xi_m = solve_spd(bm.T @ (bm * w[:, None]), bm.T @ (w * yc))
        r = yc - bm @ xi_m

        # variance step: damped Newton on the (concave) profile in xi_v
        u = r * r * np.exp(-s_c)
        grad_v = 0.5 * bv.T @ (u - 1.0)
        hess_v = 0.5 * bv.T @ (bv * u[:, None])
        step = solve_spd(hess_v, grad_v)
        loglik = _gaussian_loglik(s_c, u, nc)
        scale = 1.0
        for _ in range(30):
            cand_v = xi_v + scale * step
            s_cand = bv @ cand_v
            u_cand = r * r * np.exp(-s_cand)
            loglik_cand = _gaussian_loglik(s_cand, u_cand, nc)
            if loglik_cand >= loglik:
                break
            scale *= 0.5
        xi_v, s_c, u = cand_v, s_cand, u_cand
        _floor_check(xi_v)

        grad_m = bm.T @ (r * np.exp(-s_c))
        grad_v = 0.5 * bv.T @ (u - 1.0)
        if max(np.max(np.abs(grad_m)), np.max(np.abs(grad_v))) <= tol:
            break
    else:
        raise NoConvergence(f"outcome fit did not converge in {_MAX_ITER} iterations")

    xi = np.concatenate([xi_m, xi_v])
    m1 = bm_all @ xi[: family.dim_mean]
    var = np.exp(bv_all @ xi[family.dim_mean :])
    loglik = _gaussian_loglik(s_c, u, nc)
    return ParametricOutcomeFit(
        family=family,
        xi_hat=xi,
        loglik=loglik,
        converged=True,
        iterations=iterations,
        mean_design_all=bm_all,
        logvar_design_all=bv_all,
        m1=m1,
        var=var,
    )


@dataclass(frozen=True)
class LocationFit:
    """Complete-case least-squares mean model y = mu(x, theta) + eps."""

    theta_hat: np.ndarray
    mean_basis: tuple[BasisTerm, ...]
    design_all: np.ndarray = field(repr=False)  # gradient of mu per row
    mu: np.ndarray = field(repr=False)  # fitted mean, all rows
    residuals: np.ndarray = field(repr=False)  # complete-case residuals
    complete_idx: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def residual_pairs(self) -> list[tuple[int, float]]:
        """Residuals as (row index, value) pairs over complete cases."""
        return [(int(i), float(r)) for i, r in zip(self.complete_idx, self.residuals)]

    def residual_second_moment(self) -> float:
        """Mean squared complete-case residual (estimates Var(eps | D=1))."""
        return float(np.mean(self.residuals**2))


def fit_location(data: Dataset, mean_basis) -> LocationFit:
    """Least-squares fit of the location model on complete cases."""
    mean_basis = tuple(mean_basis)
    complete = data.complete_idx
    if complete.size < len(mean_basis) + 1:
        raise RankDeficientDesign(
            f"need at least {len(mean_basis) + 1} complete cases, have {complete.size}"
        )
    g = design_matrix(mean_basis, data.x[complete])
    _check_full_rank(g, "location")
    theta = solve_spd(g.T @ g, g.T @ data.y_complete)
    g_all = design_matrix(mean_basis, data.x)
    mu = g_all @ theta
    return LocationFit(
        theta_hat=theta,
        mean_basis=mean_basis,
        design_all=g_all,
        mu=mu,
        residuals=data.y_complete - mu[complete],
        complete_idx=complete,
    )


def location_fit_at(data: Dataset, mean_basis, theta) -> LocationFit:
    """Evaluate the location model at a given theta without fitting."""
    mean_basis = tuple(mean_basis)
    theta = np.asarray(theta, dtype=float)
    g_all = design_matrix(mean_basis, data.x)
    mu = g_all @ theta
    complete = data.complete_idx
    return LocationFit(
        theta_hat=theta,
        mean_basis=mean_basis,
        design_all=g_all,
        mu=mu,
        residuals=data.y_complete - mu[complete],
        complete_idx=complete,
    )


def outcome_moments(fit: ParametricOutcomeFit, x, method: str = "closed", order: int = 30):
    """First and second conditional moments of the outcome at covariate ``x``.

    ``method="closed"`` uses the Gaussian closed forms; ``"quadrature"``
    integrates the family density by Gauss-Hermite (the path a registered
    non-Gaussian family would take).
    """
    row = np.atleast_2d(np.asarray(x, dtype=float))
    xi_m, xi_v = fit.family.split(fit.xi_hat)
    m = float(fit.family.mean_design(row)[0] @ xi_m)
    v = float(np.exp(fit.family.logvar_design(row)[0] @ xi_v))
    if method == "closed":
        return m, m * m + v
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    nodes, weights = gauss_hermite_nodes(order)
    sigma = np.sqrt(v)
    y = m + np.sqrt(2.0) * sigma * nodes
    dens = fit.family.density(y, row[0], fit.xi_hat)
    total_w = weights * np.exp(nodes * nodes) * np.sqrt(2.0) * sigma
    m1 = float(np.sum(total_w * y * dens))
    m2 = float(np.sum(total_w * y * y * dens))
    return m1, m2


def outcome_moment_gradients(fit: ParametricOutcomeFit, x):
    """Gradient of the conditional mean in xi, and the model-integrated
    Hessian of the log density, at covariate ``x``.

    For the Gaussian family the mean gradient is the mean-basis vector padded
    with zeros for the log-variance coefficients, and the integrated Hessian
    is the negative Fisher information at ``(x, xi_hat)``.
    """
    row = np.atleast_2d(np.asarray(x, dtype=float))
    family = fit.family
    b = family.mean_design(row)[0]
    c = family.logvar_design(row)[0]
    _, xi_v = family.split(fit.xi_hat)
    v = float(np.exp(c @ xi_v))
    qm, qv = family.dim_mean, family.dim_logvar
    grad_m1 = np.concatenate([b, np.zeros(qv)])
    hess = np.zeros((qm + qv, qm + qv))
    hess[:qm, :qm] = -np.outer(b, b) / v
    hess[qm:, qm:] = -0.5 * np.outer(c, c)
    return grad_m1, hess

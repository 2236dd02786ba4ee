"""The linear critical problem: Q_lambda, the curve lambda -> S(lambda), solutions.

S(lambda) is the infimum of Q_lambda(u) = rho(u)^2 - lambda ||u||_2^2 over
||u||_{2*} = 1. It stays at the Sobolev level up to some lambda*, decreases
afterwards, vanishes at the first mixed eigenvalue lambda_1 and is negative
beyond. A minimizer w with S(lambda) > 0 yields the positive solution
u = S(lambda)^((n-2)/4) w of  L u = u^(2*-1) + lambda u.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain_grid import GridFunction, lq_norm
from .flow import normalized_flow
from .forms import MixedForms, rho_squared
from .sobolev import talenti_constant
from .spectral import EigenResult, first_eigen_mixed


class ExtractionError(ValueError):
    """Raised when a quotient value cannot produce a positive solution."""


def q_lambda(forms: MixedForms, u, lam: float) -> float:
    v = forms._values(u)
    return rho_squared(forms, v) - lam * float(v @ v) * forms.node_weight


@dataclass
class SLambdaResult:
    lam: float
    value: float
    minimizer: GridFunction
    iterations: int
    grad_norm: float
    converged: bool
    start: str


def minimize_s_lambda(
    forms: MixedForms,
    lam: float,
    start=None,
    eigen: EigenResult | None = None,
    max_iter: int = 3000,
    gtol: float = 1e-9,
) -> SLambdaResult:
    """Normalized gradient flow for S(lambda).

    Runs from the mixed eigenfunction and, if given, from ``start``; the lower
    value wins. The returned minimizer is nonnegative.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    q = 2.0 * forms.n / (forms.n - 2)
    eigen = eigen or first_eigen_mixed(forms)
    candidates = [("eigen", eigen.eigenfunction.values)]
    if start is not None:
        candidates.insert(0, ("warm", forms._values(start)))
    dmax = float(forms.diagonal().max())
    best = None
    for label, u0 in candidates:
        res = normalized_flow(
            forms.mixed_matvec, forms.node_weight, q, u0, lam=lam, max_iter=max_iter, gtol=gtol, diag_max=dmax
        )
        if best is None or res.value < best[1].value:
            best = (label, res)
    label, res = best
    return SLambdaResult(lam, res.value, GridFunction(forms.mask, res.u), res.iterations, res.grad_norm, res.converged, label)


@dataclass
class QuotientCurve:
    lambdas: list
    values: list
    grad_norms: list
    iterations: list
    converged: list
    regimes: list
    lambda_1: float
    lambda_1s: float
    plateau_reference: float
    plateau_tol: float
    lambda_star: float | None
    lambda_1_crossing: float | None
    minimizers: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "values": self.values,
            "grad_norms": self.grad_norms,
            "iterations": self.iterations,
            "converged": self.converged,
            "regimes": self.regimes,
            "lambda_1": self.lambda_1,
            "lambda_1s": self.lambda_1s,
            "plateau_reference": self.plateau_reference,
            "plateau_tol": self.plateau_tol,
            "lambda_star": self.lambda_star,
            "lambda_1_crossing": self.lambda_1_crossing,
        }

    def max_increase(self) -> float:
        v = np.asarray(self.values)
        return float(np.max(np.diff(v), initial=0.0))


def trace_curve(
    forms: MixedForms,
    lambdas,
    lambda_1: float | None = None,
    lambda_1s: float | None = None,
    plateau_reference: float | None = None,
    plateau_tol: float | None = None,
    eigen: EigenResult | None = None,
    warm_start: bool = True,
    keep_minimizers: bool = False,
    max_iter: int = 3000,
) -> QuotientCurve:
    """Sample S(lambda) on an ascending grid with warm starts.

    lambda* is the largest sampled lambda whose value stays within
    ``plateau_tol`` (default 2% of the Talenti constant) of the plateau
    reference (default: the value at the smallest lambda).
    """
    from .spectral import first_eigen_fractional

    lams = [float(x) for x in lambdas]
    if len(lams) < 5:
        raise ValueError("a curve needs at least 5 lambda samples")
    if any(b <= a for a, b in zip(lams[:-1], lams[1:])) or lams[0] <= 0:
        raise ValueError("lambda grid must be positive and strictly ascending")
    eigen = eigen or first_eigen_mixed(forms)
    lambda_1 = eigen.eigenvalue if lambda_1 is None else lambda_1
    lambda_1s = first_eigen_fractional(forms).eigenvalue if lambda_1s is None else lambda_1s
    tol = 0.02 * talenti_constant(forms.n) if plateau_tol is None else plateau_tol

    vals, gn, its, conv, mins = [], [], [], [], []
    prev = None
    for lam in lams:
        r = minimize_s_lambda(forms, lam, start=prev if warm_start else None, eigen=eigen, max_iter=max_iter)
        vals.append(r.value)
        gn.append(r.grad_norm)
        its.append(r.iterations)
        conv.append(r.converged)
        mins.append(r.minimizer)
        prev = r.minimizer
    ref = vals[0] if plateau_reference is None else plateau_reference
    star = None
    for lam, v in zip(lams, vals):
        if v >= ref - tol:
            star = lam
        else:
            break
    crossing = None
    for i in range(len(vals) - 1):
        if vals[i] > 0 >= vals[i + 1]:
            a, b = vals[i], vals[i + 1]
            crossing = lams[i] + (lams[i + 1] - lams[i]) * a / (a - b)
            break
    regimes = []
    for lam in lams:
        if star is not None and lam <= star:
            regimes.append("plateau")
        elif lam < lambda_1:
            regimes.append("window")
        else:
            regimes.append("supercritical")
    return QuotientCurve(
        lams, vals, gn, its, conv, regimes, lambda_1, lambda_1s, ref, tol, star, crossing, mins if keep_minimizers else []
    )


@dataclass
class BNSolution:
    u: GridFunction
    lam: float
    p: float
    weak_residual: float  # max relative mismatch over positive random test vectors
    strong_residual: float  # ||L u - f(u)||_2 / ||f(u)||_2
    identity_error: float  # |rho^2 - lambda||u||^2 - ||u||^{2*}_{2*}| relative
    min_value: float
    max_value: float
    positive_fraction: float

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "p": self.p,
            "weak_residual": self.weak_residual,
            "strong_residual": self.strong_residual,
            "identity_error": self.identity_error,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "positive_fraction": self.positive_fraction,
        }


def residual_stats(forms: MixedForms, u: np.ndarray, rhs: np.ndarray, n_test: int = 20, seed: int = 0):
    """Weak and strong residuals of L u = rhs (rhs nodewise, strong form)."""
    w = forms.node_weight
    Au = forms.mixed_matvec(u) / w
    r = Au - rhs
    rng = np.random.default_rng(seed)
    weak = 0.0
    for _ in range(n_test):
        v = rng.random(u.size)
        a = float(Au @ v) * w
        b = float(rhs @ v) * w
        weak = max(weak, abs(a - b) / max(abs(a), abs(b), 1e-300))
    strong = float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))
    return weak, strong


def extract_solution(
    value: float,
    minimizer,
    forms: MixedForms,
    lam: float,
    lambda_1: float | None = None,
    n_test: int = 20,
    seed: int = 0,
) -> BNSolution:
    """u = value^((n-2)/4) w for a normalized minimizer w at level ``value``."""
    n = forms.n
    if lambda_1 is not None and lam >= lambda_1:
        raise ExtractionError(f"lambda = {lam} is not below lambda_1 = {lambda_1}; no positive solution exists")
    if not value > 0:
        raise ExtractionError(f"quotient level {value} is not positive; extraction needs lambda < lambda_1")
    w = np.abs(forms._values(minimizer))
    u = value ** ((n - 2) / 4.0) * w
    crit = 2.0 * n / (n - 2)
    rhs = u ** (crit - 1.0) + lam * u
    weak, strong = residual_stats(forms, u, rhs, n_test, seed)
    lhs = q_lambda(forms, u, lam)
    rhs_id = float(np.sum(u ** crit)) * forms.node_weight
    return BNSolution(
        u=GridFunction(forms.mask, u),
        lam=lam,
        p=1.0,
        weak_residual=weak,
        strong_residual=strong,
        identity_error=abs(lhs - rhs_id) / rhs_id,
        min_value=float(u.min()),
        max_value=float(u.max()),
        positive_fraction=float(np.mean(u > 0)),
    )


def small_ball_check(u: GridFunction) -> bool:
    """True iff ||u||_{2*} lies in the closed ball of radius S^((n-2)/4)."""
    n = u.mask.n
    return lq_norm(u, 2.0 * n / (n - 2)) <= talenti_constant(n) ** ((n - 2) / 4.0)

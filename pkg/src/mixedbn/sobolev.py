"""Sharp Sobolev constants, Aubin-Talenti profiles and concentration scans.

The mixed quotient rho(u)^2 / ||u||_{2*}^2 has the classical Talenti constant
as its infimum on every domain, and the infimum is not attained: minimizing
sequences concentrate. This module evaluates the constant in closed form and
by radial quadrature, measures how quotients approach it along concentrating
families, and runs the discrete minimization flow with a participation-ratio
diagnostic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .domain_grid import GridFunction
from .fitting import PowerFit, loglog_fit
from .flow import normalized_flow
from .forms import MixedForms
from .radial import (
    DivergentIntegralError,
    RadialProfile,
    aubin_talenti_shape,
    bump_profile,
    radial_gagliardo,
    radial_grad_sq,
    radial_lq,
)

__all__ = [
    "ConcentrationReport",
    "DivergentIntegralError",
    "RadialProfile",
    "SharpConstantEstimate",
    "aubin_talenti",
    "aubin_talenti_normalization",
    "concentration_scan",
    "estimate_sharp_constant",
    "gagliardo_finite",
    "paper_formula",
    "radial_gagliardo",
    "radial_gradient_energy",
    "radial_lq_norm",
    "talenti_constant",
]


def talenti_constant(n: int) -> float:
    """Best constant S in S ||u||_{2*}^2 <= ||grad u||_2^2 on R^n."""
    if n < 3:
        raise ValueError("n must be >= 3")
    with mpmath.workdps(40):
        val = mpmath.pi * n * (n - 2) * (mpmath.gamma(mpmath.mpf(n) / 2) / mpmath.gamma(n)) ** (mpmath.mpf(2) / n)
        return float(val)


def paper_formula(n: int) -> float:
    """1/(n(n-2) pi) (Gamma(n)/Gamma(n/2))^(2/n), the reciprocal of talenti_constant(n)."""
    if n < 3:
        raise ValueError("n must be >= 3")
    with mpmath.workdps(40):
        val = (mpmath.gamma(n) / mpmath.gamma(mpmath.mpf(n) / 2)) ** (mpmath.mpf(2) / n) / (n * (n - 2) * mpmath.pi)
        return float(val)


def radial_lq_norm(profile: RadialProfile, q: float) -> float:
    return radial_lq(profile, q).value


def radial_gradient_energy(profile: RadialProfile) -> float:
    return radial_grad_sq(profile).value


@lru_cache(maxsize=16)
def aubin_talenti_normalization(n: int) -> float:
    """c with ||c (1 + |z|^2)^((2-n)/2)||_{2*} = 1, by quadrature."""
    q = 2.0 * n / (n - 2)
    return 1.0 / radial_lq(aubin_talenti_shape(n), q).value


def aubin_talenti(n: int, t: float = 1.0, x0=None) -> RadialProfile:
    """U_{t,x0}(x) = t^((2-n)/2) U((x - x0)/t) with U normalized in L^{2*}."""
    if not t > 0:
        raise ValueError("t must be positive")
    return aubin_talenti_shape(n, aubin_talenti_normalization(n), t, x0)


def gagliardo_finite(profile: RadialProfile, s: float) -> bool:
    """Whether [f]_s is finite, from the profile's decay rate."""
    if math.isfinite(profile.support) or profile.decay is None:
        return True
    return 2.0 * profile.decay > profile.n - 2.0 * s


# ---------------------------------------------------------------------------
# concentration scans


@dataclass
class ConcentrationReport:
    mode: str
    n: int
    s: float
    parameters: list
    quotients: list
    excess: list
    reference: float  # value the quotients approach
    limit_estimate: float
    fit: PowerFit
    gagliardo_terms: list = field(default_factory=list)
    monotone: bool = True
    strictly_above_talenti: bool = True

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "s": self.s,
            "parameters": self.parameters,
            "quotients": self.quotients,
            "excess": self.excess,
            "reference": self.reference,
            "limit_estimate": self.limit_estimate,
            "fit": self.fit.to_dict(),
            "gagliardo_terms": self.gagliardo_terms,
            "monotone": self.monotone,
            "strictly_above_talenti": self.strictly_above_talenti,
        }


def concentration_scan(mode: str, params: dict) -> ConcentrationReport:
    """Quotients rho^2/||.||_{2*}^2 along a concentrating family.

    ``shrink_k``: u_k = k^((n-2)/2) u(k x) for a compactly supported base
    profile (default: smooth bump of radius 1); params ``n, s, k`` and optional
    ``profile``. The quotient tends to ||grad u||^2/||u||^2 as k grows, with
    excess proportional to k^(2s-2).

    ``spread_t``: the Aubin-Talenti family concentrated at rate t,
    t^((n-2)/2) U(t x); params ``n, s, t``. The quotient tends to the Talenti
    constant with excess t^(2s-2) [U]_s^2, provided [U]_s is finite.
    """
    n = int(params["n"])
    s = float(params["s"])
    q = 2.0 * n / (n - 2)
    if mode == "shrink_k":
        ks = [float(k) for k in params["k"]]
        base = params.get("profile") or bump_profile(n, 1.0)
        norm2 = radial_lq(base, q).value ** 2
        grad = radial_grad_sq(base).value
        reference = grad / norm2
        samples = ks
        family = [base.concentrate(k) for k in ks]
    elif mode == "spread_t":
        ts = [float(t) for t in params["t"]]
        base = aubin_talenti(n)
        if not gagliardo_finite(base, s):
            radial_gagliardo(base, s)  # raises with the divergence analysis
        norm2 = 1.0
        grad = radial_grad_sq(base).value
        reference = talenti_constant(n)
        samples = ts
        family = [base.concentrate(t) for t in ts]
    else:
        raise ValueError(f"unknown scan mode {mode!r}")
    if len(samples) < 4:
        raise ValueError("a concentration scan needs at least 4 samples for the decay fit")
    gag = [radial_gagliardo(u, s).value for u in family]
    # the Dirichlet and L^{2*} parts are invariant under the rescaling
    quot = [(grad + g) / norm2 for g in gag]
    exc = [qv - reference for qv in quot]
    fit = loglog_fit(samples, np.maximum(exc, 1e-300))
    order = np.argsort(samples)
    qs = np.asarray(quot)[order]
    return ConcentrationReport(
        mode=mode,
        n=n,
        s=s,
        parameters=samples,
        quotients=quot,
        excess=exc,
        reference=reference,
        limit_estimate=float(qs[-1] - exc[order[-1]]),
        fit=fit,
        gagliardo_terms=gag,
        monotone=bool(np.all(np.diff(qs) < 0)),
        strictly_above_talenti=bool(min(quot) > talenti_constant(n)),
    )


# ---------------------------------------------------------------------------
# discrete minimization


@dataclass
class SharpConstantEstimate:
    value: float
    minimizer: GridFunction
    iterations: int
    converged: bool
    grad_norm: float
    participation_initial: float
    participation_final: float
    participation_history: list
    value_history: list
    first_step_decrease: float

    @property
    def participation_drop(self) -> float:
        return 1.0 - self.participation_final / self.participation_initial

    def to_dict(self) -> dict:
        g = self.minimizer.mask.grid
        return {
            "value": self.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "participation_initial": self.participation_initial,
            "participation_final": self.participation_final,
            "participation_drop": self.participation_drop,
            "first_step_decrease": self.first_step_decrease,
            "grid": g.to_dict(),
        }


def estimate_sharp_constant(
    forms: MixedForms,
    start: np.ndarray | None = None,
    max_iter: int = 4000,
    gtol: float = 1e-9,
) -> SharpConstantEstimate:
    """Minimize rho^2 on ||u||_{2*} = 1 by the normalized gradient flow.

    Starts from the constant function on the mask unless ``start`` is given.
    The participation ratio of the iterates tracks concentration.
    """
    n = forms.n
    q = 2.0 * n / (n - 2)
    u0 = np.ones(forms.size) if start is None else np.asarray(start, dtype=float)
    res = normalized_flow(
        forms.mixed_matvec,
        forms.node_weight,
        q,
        u0,
        max_iter=max_iter,
        gtol=gtol,
        record=True,
        diag_max=float(forms.diagonal().max()),
    )
    return SharpConstantEstimate(
        value=res.value,
        minimizer=GridFunction(forms.mask, res.u),
        iterations=res.iterations,
        converged=res.converged,
        grad_norm=res.grad_norm,
        participation_initial=res.participation[0],
        participation_final=res.participation[-1],
        participation_history=res.participation,
        value_history=res.values,
        first_step_decrease=res.first_step_decrease,
    )

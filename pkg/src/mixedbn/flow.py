"""Normalized gradient flow on the unit L^q sphere.

Minimizes F(u) = a(u, u) - lam * ||u||_2^2 subject to ||u||_q = 1, where a is a
symmetric energy given by its matrix action in energy scaling. Each step moves
along the projected L^2 gradient and renormalizes. Steps are Barzilai-Borwein
estimates, halved whenever the value fails to decrease.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class FlowDivergence(RuntimeError):
    pass


@dataclass
class FlowResult:
    u: np.ndarray
    value: float
    iterations: int
    grad_norm: float  # relative projected gradient at the returned iterate
    converged: bool
    values: list = field(default_factory=list)
    participation: list = field(default_factory=list)
    first_step_decrease: float = 0.0


def lq(v: np.ndarray, q: float, weight: float) -> float:
    a = np.abs(v)
    top = a.max(initial=0.0)
    if top == 0.0:
        return 0.0
    return float(top * (np.sum((a / top) ** q) * weight) ** (1.0 / q))


def participation_ratio(v: np.ndarray) -> float:
    """(sum v^2)^2 / sum v^4: the effective number of nodes carrying the mass."""
    v2 = v * v
    den = np.sum(v2 * v2)
    return float(np.sum(v2) ** 2 / den) if den > 0 else 0.0


def normalized_flow(
    matvec: Callable[[np.ndarray], np.ndarray],
    weight: float,
    q: float,
    u0: np.ndarray,
    lam: float = 0.0,
    max_iter: int = 3000,
    gtol: float = 1e-9,
    tau_floor: float = 1e-12,
    record: bool = False,
    diag_max: float | None = None,
    stall_tol: float = 1e-7,
) -> FlowResult:
    """Projected gradient descent for a(u,u) - lam ||u||_2^2 on ||u||_q = 1.

    ``matvec`` returns the energy-scaled action (u^T matvec(u) = a(u, u));
    ``weight`` is the quadrature weight h^n. The returned iterate is replaced
    by its absolute value, which never increases the value for the forms used
    here.
    """
    u = np.abs(np.asarray(u0, dtype=float))
    nrm = lq(u, q, weight)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise FlowDivergence("initial iterate must be nonzero and finite")
    u = u / nrm

    def evaluate(v):
        Kv = matvec(v) / weight
        Av = Kv - lam * v
        F = float(v @ Av) * weight
        g = 2.0 * (Av - F * np.abs(v) ** (q - 2.0) * v)
        scale = 2.0 * np.sqrt(float(Kv @ Kv) * weight) + 2.0 * abs(lam) * np.sqrt(float(v @ v) * weight) + 1e-300
        return F, g, float(np.sqrt(g @ g * weight)) / scale

    F, g, rel = evaluate(u)
    if diag_max is None:
        e = np.zeros(u.size)
        e[int(np.argmax(u))] = 1.0
        diag_max = float(e @ matvec(e))
    # Jacobi-sized first step; later steps come from the secant (BB) estimate
    tau = weight / (2.0 * (abs(diag_max) + abs(lam) * weight) + 1e-300)
    tau0 = tau
    values, prs = ([F], [participation_ratio(u)]) if record else ([], [])
    first = 0.0
    it = 0
    converged = rel <= gtol
    while not converged and it < max_iter:
        it += 1
        step = tau
        while True:
            trial = u - step * g
            nt = lq(trial, q, weight)
            if not np.isfinite(nt) or nt == 0.0:
                raise FlowDivergence("iterate left the admissible set")
            trial /= nt
            Ft, gt, relt = evaluate(trial)
            if Ft < F or (Ft <= F and relt < rel):
                break
            step *= 0.5
            if step < tau_floor * tau0:
                break
        if step < tau_floor * tau0:
            # no representable decrease left; accept if the gradient is small
            converged = rel <= stall_tol
            break
        if it == 1:
            first = F - Ft
        du, dg = trial - u, gt - g
        u, F, g, rel = trial, Ft, gt, relt
        if record:
            values.append(F)
            prs.append(participation_ratio(u))
        denom = float(du @ dg)
        tau = float(du @ du) / denom if denom > 0 else 2.0 * step
        converged = rel <= gtol
    if not np.isfinite(F):
        raise FlowDivergence("flow produced a non-finite value")
    ua = np.abs(u)
    Fa, _, rela = evaluate(ua)
    if Fa <= F:
        u, F, rel = ua, Fa, rela
    return FlowResult(u, F, it, rel, converged, values, prs, first)

"""First Dirichlet eigenpairs of the fractional, local and mixed forms.

Inverse power iteration with preconditioned conjugate-gradient inner solves on
the matrix-free operator. The start vector is the all-ones vector on the mask,
so runs are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .domain_grid import GridFunction
from .forms import MixedForms


class EigenConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenResult:
    eigenvalue: float
    eigenfunction: GridFunction  # L^2-normalized, nonnegative mean
    residual: float  # ||A phi - lambda M phi||_2 with M = h^n I
    iterations: int
    which: str
    degenerate: bool = False

    def to_dict(self) -> dict:
        g = self.eigenfunction.mask.grid
        return {
            "which": self.which,
            "lambda": self.eigenvalue,
            "residual": self.residual,
            "iters": self.iterations,
            "degenerate": self.degenerate,
            "grid": {**g.to_dict(), "h": g.h, "nodes": self.eigenfunction.mask.num_interior},
            "domain": self.eigenfunction.mask.descriptor,
        }


def _normalize(x: np.ndarray, w: float) -> np.ndarray:
    x = x / np.sqrt(float(x @ x) * w)
    return x if x.sum() >= 0 else -x


def inverse_iteration(
    forms: MixedForms,
    which: str,
    tol: float = 1e-10,
    res_tol: float = 1e-8,
    max_iter: int = 500,
    start: np.ndarray | None = None,
) -> EigenResult:
    matvec = {"local": forms.local_matvec, "fractional": forms.fractional_matvec, "mixed": forms.mixed_matvec}[which]
    w = forms.node_weight
    N = forms.size
    diag = forms.diagonal(which)
    if N == 1:
        phi = np.array([1.0 / np.sqrt(w)])
        return EigenResult(float(diag[0] / w), GridFunction(forms.mask, phi), 0.0, 0, which, True)

    op = LinearOperator((N, N), matvec=lambda v: matvec(v) / w, dtype=float)
    jac = LinearOperator((N, N), matvec=lambda v: v * (w / diag), dtype=float)
    x = np.ones(N) if start is None else np.asarray(start, dtype=float).copy()
    x = _normalize(x, w)
    Bx = op.matvec(x)
    theta = float(x @ Bx) / float(x @ x)
    rel_res = 1.0
    for it in range(1, max_iter + 1):
        inner = max(1e-14, min(1e-4, 1e-2 * rel_res))
        y, info = cg(op, x, x0=x / theta, rtol=inner, atol=0.0, maxiter=20 * N, M=jac)
        if info < 0 or not np.all(np.isfinite(y)):
            raise EigenConvergenceError(f"inner solve failed ({which}, info={info})")
        x = _normalize(y, w)
        Bx = op.matvec(x)
        theta_new = float(x @ Bx) / float(x @ x)
        r = Bx - theta_new * x
        rel_res = float(np.linalg.norm(r) / np.linalg.norm(Bx))
        residual = w * float(np.linalg.norm(r))
        change = abs(theta_new - theta) / abs(theta_new)
        theta = theta_new
        if change < tol and residual < res_tol:
            return EigenResult(theta, GridFunction(forms.mask, x), residual, it, which)
    raise EigenConvergenceError(
        f"{which} eigenproblem did not converge in {max_iter} iterations "
        f"(last change {change:.2e}, residual {residual:.2e})"
    )


def first_eigen_fractional(forms: MixedForms, **kw) -> EigenResult:
    """lambda_{1,s}: minimum of [u]^2 over ||u||_2 = 1."""
    return inverse_iteration(forms, "fractional", **kw)


def first_eigen_local(forms: MixedForms, **kw) -> EigenResult:
    """First Dirichlet eigenvalue of the finite-difference Laplacian."""
    return inverse_iteration(forms, "local", **kw)


def first_eigen_mixed(forms: MixedForms, **kw) -> EigenResult:
    """lambda_1: minimum of rho^2 over ||u||_2 = 1."""
    return inverse_iteration(forms, "mixed", **kw)

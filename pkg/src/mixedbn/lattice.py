"""Lattice sums and sphere constants used by the nonlocal assembly."""
from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@lru_cache(maxsize=64)
def shell_counts(n: int, kmax: int) -> np.ndarray:
    """counts[q] = #{z in Z^n : |z|^2 = q} for q <= kmax^2 (exact integers)."""
    qmax = kmax * kmax
    one = np.zeros(qmax + 1, dtype=np.int64)
    for j in range(-kmax, kmax + 1):
        one[j * j] += 1
    out = one.copy()
    for _ in range(n - 1):
        out = np.convolve(out, one)[: qmax + 1]
    out.setflags(write=False)
    return out


def lattice_power_sum(n: int, radius_idx: float, exponent: float) -> float:
    """sum over z in Z^n with 0 < |z| < radius_idx of |z|^(-exponent)."""
    kmax = int(math.ceil(radius_idx))
    counts = shell_counts(n, kmax)
    r2 = radius_idx * radius_idx
    q = np.arange(1, counts.size)
    sel = q < r2
    terms = counts[1:][sel] * q[sel].astype(float) ** (-exponent / 2.0)
    return float(np.sum(terms[::-1]))


@lru_cache(maxsize=128)
def epstein_zeta(n: int, sigma: float, dps: int = 30) -> float:
    """Analytically continued Epstein zeta of Z^n: sum_{z != 0} |z|^(-sigma).

    Uses the theta-function splitting at t = 1, valid for every sigma except
    the pole at sigma = n.
    """
    if abs(sigma - n) < 1e-12:
        raise ValueError("Epstein zeta has a pole at sigma = n")
    with mpmath.workdps(dps):
        a = mpmath.mpf(sigma) / 2
        b = (mpmath.mpf(n) - sigma) / 2

        def theta_minus_one(t):
            return mpmath.jtheta(3, 0, mpmath.exp(-mpmath.pi * t)) ** n - 1

        tail = mpmath.quad(lambda t: (t ** (a - 1) + t ** (b - 1)) * theta_minus_one(t), [1, mpmath.inf])
        val = (-1 / a - 1 / b + tail) * mpmath.pi ** a / mpmath.gamma(a)
        return float(val)


def self_cell_coefficient(n: int, s: float) -> float:
    """Dimensionless coefficient D with missing self-cell energy D/n * h^(2-2s) * |grad u|^2.

    The node-value quadrature of the Gagliardo double integral drops the
    i = j cell; expanding u to first order there and resumming the lattice
    gives -Z_n(n + 2s - 2), the continued Epstein zeta.
    """
    return -epstein_zeta(n, n + 2.0 * s - 2.0)

"""Radial profiles and high-precision radial quadrature.

Integrals over R^n of radial functions reduce to one-dimensional integrals in
r, evaluated on Gauss-Legendre panels in log r. Infinite ranges use the tail
map r = r_hi * x^(-1/p), which turns an integrand decaying like r^(-1-p) into a
smooth function of x on (0, 1].

For the Gagliardo seminorm the angular integrals are folded into a kernel
k(w), w = rho/r in (0, 1):

    [f]^2 = 2 int_0^inf r^(n-1-2s) int_0^1 (f(r) - f(r w))^2 k(w) w^(n-1) dw dr,

    k(w) = |S^(n-1)| |S^(n-2)| int_{-1}^{1} (1 + w^2 - 2 w t)^(-(n+2s)/2) (1 - t^2)^((n-3)/2) dt.

k(w) blows up like (1 - w)^(-1-2s); the smooth factor k(w)(1-w)^(1+2s) is what
gets tabulated, and the singular end is integrated with Gauss-Jacobi weights.
For n = 3 the t-integral is elementary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .lattice import sphere_area


class QuadratureError(RuntimeError):
    pass


class DivergentIntegralError(QuadratureError):
    """The requested integral is infinite for this profile."""


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A radial function f(|x|) on R^n.

    ``decay`` is the algebraic decay rate a in f(r) ~ r^(-a) (None when the
    profile has compact support or decays faster than any power). ``scales``
    are characteristic radii used to place quadrature panels.
    """

    n: int
    kind: str
    params: dict
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    df: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    scales: tuple
    support: float = math.inf
    decay: float | None = None
    center: tuple | None = None

    def value(self, r) -> np.ndarray:
        return self.f(np.asarray(r, dtype=float))

    def derivative(self, r) -> np.ndarray:
        return self.df(np.asarray(r, dtype=float))

    __call__ = value

    def at_points(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        c = np.zeros(x.shape[1]) if self.center is None else np.asarray(self.center)
        return self.value(np.linalg.norm(x - c, axis=1))

    def scaled(self, amplitude: float = 1.0, rate: float = 1.0) -> "RadialProfile":
        """amplitude * f(rate * r)."""
        a, k, f, df = float(amplitude), float(rate), self.f, self.df
        return RadialProfile(
            self.n,
            self.kind,
            {**self.params, "amplitude": a * self.params.get("amplitude", 1.0), "rate": k * self.params.get("rate", 1.0)},
            lambda r: a * f(k * r),
            lambda r: a * k * df(k * r),
            tuple(sc / k for sc in self.scales),
            self.support / k,
            self.decay,
            self.center,
        )

    def concentrate(self, k: float) -> "RadialProfile":
        """k^((n-2)/2) f(k r): the L^(2*)- and Dirichlet-invariant rescaling."""
        return self.scaled(k ** ((self.n - 2) / 2.0), k)


def gaussian_profile(n: int, sigma: float) -> RadialProfile:
    return RadialProfile(
        n,
        "gaussian",
        {"sigma": sigma},
        lambda r: np.exp(-(r / sigma) ** 2),
        lambda r: -2.0 * r / sigma ** 2 * np.exp(-(r / sigma) ** 2),
        (sigma,),
    )


def cutoff(t) -> np.ndarray:
    """Smooth nonincreasing cutoff: 1 on [0, 1/2], 0 on [1, inf)."""
    t = np.asarray(t, dtype=float)
    x = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = 1.0 / x - 1.0 / (1.0 - x)
        out = special.expit(z)
    out = np.where(x <= 0.0, 1.0, np.where(x >= 1.0, 0.0, out))
    return out


def cutoff_derivative(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    x = 2.0 * t - 1.0
    inside = (x > 0.0) & (x < 1.0)
    xs = np.where(inside, x, 0.5)
    S = special.expit(1.0 / xs - 1.0 / (1.0 - xs))
    d = -2.0 * S * (1.0 - S) * (1.0 / xs ** 2 + 1.0 / (1.0 - xs) ** 2)
    return np.where(inside, d, 0.0)


def bump_profile(n: int, radius: float) -> RadialProfile:
    """Compactly supported smooth bump cutoff(r / radius)."""
    return RadialProfile(
        n,
        "bump",
        {"radius": radius},
        lambda r: cutoff(r / radius),
        lambda r: cutoff_derivative(r / radius) / radius,
        (radius / 2.0, radius),
        support=radius,
    )


def aubin_talenti_shape(n: int, c: float = 1.0, t: float = 1.0, center=None) -> RadialProfile:
    """c t^((2-n)/2) (1 + (r/t)^2)^((2-n)/2)."""
    e = (2.0 - n) / 2.0
    amp = c * t ** e
    return RadialProfile(
        n,
        "aubin_talenti",
        {"t": t, "c": c},
        lambda r: amp * (1.0 + (r / t) ** 2) ** e,
        lambda r: amp * (2.0 - n) * (r / t ** 2) * (1.0 + (r / t) ** 2) ** (e - 1.0),
        (t,),
        decay=float(n - 2),
        center=None if center is None else tuple(center),
    )


def u_eps_profile(n: int, eps: float) -> RadialProfile:
    """eps^((n-2)/2) / (r^2 + eps^2)^((n-2)/2)."""
    a = (n - 2) / 2.0
    return RadialProfile(
        n,
        "u_eps",
        {"eps": eps},
        lambda r: eps ** a * (r * r + eps * eps) ** (-a),
        lambda r: -(n - 2) * eps ** a * r * (r * r + eps * eps) ** (-a - 1.0),
        (eps,),
        decay=float(n - 2),
    )


def truncated_u_eps(n: int, eps: float, r: float, scale: float = 1.0) -> RadialProfile:
    """scale * cutoff(|x|/r) * U_eps(x)."""
    U = u_eps_profile(n, eps)

    def f(x):
        return scale * cutoff(x / r) * U.f(x)

    def df(x):
        return scale * (cutoff_derivative(x / r) / r * U.f(x) + cutoff(x / r) * U.df(x))

    return RadialProfile(n, "eta_eps", {"eps": eps, "r": r, "scale": scale}, f, df, (eps, r / 2.0, r), support=r)


def sampled_profile(n: int, radii: Sequence[float], values: Sequence[float], support: float | None = None) -> RadialProfile:
    """Cubic-spline profile through samples; zero beyond the last radius."""
    from scipy.interpolate import CubicSpline

    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    sp = CubicSpline(r, v, bc_type=((1, 0.0), "not-a-knot"))
    dsp = sp.derivative()
    rmax = float(r[-1]) if support is None else float(support)

    def f(x):
        return np.where(x <= rmax, sp(np.minimum(x, rmax)), 0.0)

    def df(x):
        return np.where(x <= rmax, dsp(np.minimum(x, rmax)), 0.0)

    return RadialProfile(n, "sampled", {"samples": len(r)}, f, df, (float(r[1]), rmax), support=rmax)


# ---------------------------------------------------------------------------
# panel rules


@lru_cache(maxsize=32)
def _gl(order: int):
    x, w = special.roots_legendre(order)
    return x, w


@lru_cache(maxsize=64)
def _gj(order: int, alpha: float, beta: float):
    x, w = special.roots_jacobi(order, alpha, beta)
    return x, w


def log_panels(lo: float, hi: float, width: float, order: int, breaks: Sequence[float] = ()):
    """Nodes/weights for int_lo^hi g(r) dr on Gauss-Legendre panels in log r."""
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    xg, wg = _gl(order)
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        la, lb = math.log(a), math.log(b)
        k = max(1, int(math.ceil((lb - la) / width)))
        edges = np.linspace(la, lb, k + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        y = mid + half * xg[None, :]
        r = np.exp(y)
        nodes.append(r.ravel())
        weights.append((half * wg[None, :] * r).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def tail_panels(r_hi: float, p: float, order: int, pieces: int = 4):
    """Nodes/weights for int_{r_hi}^inf g(r) dr with g ~ r^(-1-p), via r = r_hi x^(-1/p)."""
    xg, wg = _gl(order)
    edges = np.linspace(0.0, 1.0, pieces + 1)
    x = (0.5 * (edges[1:] + edges[:-1])[:, None] + 0.5 * (edges[1:] - edges[:-1])[:, None] * xg).ravel()
    wx = (0.5 * (edges[1:] - edges[:-1])[:, None] * wg).ravel()
    r = r_hi * x ** (-1.0 / p)
    w = wx * r_hi / p * x ** (-1.0 / p - 1.0)
    return r, w


# ---------------------------------------------------------------------------
# one-dimensional radial integrals


def _range(profile: RadialProfile, lo_factor: float, hi_factor: float):
    lo = min(profile.scales) * lo_factor
    if math.isfinite(profile.support):
        return lo, profile.support, False
    return lo, max(profile.scales) * hi_factor, True


def _integrate(profile, g, tail_p, width, order, lo_factor=1e-8, hi_factor=1e4) -> float:
    lo, hi, infinite = _range(profile, lo_factor, hi_factor)
    breaks = list(profile.scales)
    r, w = log_panels(lo, hi, width, order, breaks)
    total = float(np.sum(g(r) * w))
    if infinite:
        rt, wt = tail_panels(hi, tail_p, order)
        total += float(np.sum(g(rt) * wt))
    return total


def _two_level(fn) -> QuadResult:
    coarse = fn(0.5, 12)
    fine = fn(0.25, 16)
    return QuadResult(fine, abs(fine - coarse))


def _check_decay(profile: RadialProfile, p: float, what: str) -> None:
    if p <= 0:
        raise DivergentIntegralError(
            f"{what} diverges for {profile.kind} in n={profile.n}: the profile decays like r^-{profile.decay}, "
            f"so the integrand decays like r^(-1-{p:g}) at infinity"
        )


def radial_lq(profile: RadialProfile, q: float) -> QuadResult:
    """||f||_q over R^n."""
    n = profile.n
    S = sphere_area(n)
    p = q * profile.decay - n if profile.decay is not None else 1.0
    _check_decay(profile, p, f"L^{q} norm")

    def fn(width, order):
        return _integrate(profile, lambda r: S * np.abs(profile.f(r)) ** q * r ** (n - 1), p, width, order)

    res = _two_level(fn)
    val = res.value ** (1.0 / q)
    return QuadResult(val, val * res.error / (q * res.value) if res.value > 0 else res.error)


def radial_grad_sq(profile: RadialProfile) -> QuadResult:
    """||grad f||_2^2 over R^n."""
    n = profile.n
    S = sphere_area(n)
    p = 2.0 * (profile.decay + 1.0) - n if profile.decay is not None else 1.0
    _check_decay(profile, p, "Dirichlet energy")

    def fn(width, order):
        return _integrate(profile, lambda r: S * profile.df(r) ** 2 * r ** (n - 1), p, width, order)

    return _two_level(fn)


def radial_integral(profile: RadialProfile, g: Callable, tail_p: float = 1.0) -> QuadResult:
    """int_0^inf g(r) dr using the profile's panel layout (g includes any r^(n-1) factor)."""
    return _two_level(lambda width, order: _integrate(profile, g, tail_p, width, order))


# ---------------------------------------------------------------------------
# angular kernel


class _PanelInterpolant:
    """Piecewise Chebyshev interpolation on fixed panels."""

    def __init__(self, fn: Callable[[float], float], breaks: np.ndarray, order: int = 16):
        self.breaks = np.asarray(breaks, dtype=float)
        j = np.arange(order + 1)
        self.t = np.cos(np.pi * j / order)[::-1]
        bw = (-1.0) ** j
        bw[0] *= 0.5
        bw[-1] *= 0.5
        self.bw = bw[::-1] * (-1) ** order
        a, b = self.breaks[:-1, None], self.breaks[1:, None]
        xs = 0.5 * (a + b) + 0.5 * (b - a) * self.t[None, :]
        self.vals = np.vectorize(fn)(xs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.breaks[0], self.breaks[-1])
        k = np.clip(np.searchsorted(self.breaks, xc, side="right") - 1, 0, len(self.breaks) - 2)
        a, b = self.breaks[k], self.breaks[k + 1]
        t = (2.0 * xc - a - b) / (b - a)
        diff = t[..., None] - self.t
        hit = diff == 0.0
        diff = np.where(hit, 1.0, diff)
        c = self.bw / diff
        v = self.vals[k]
        out = np.sum(c * v, axis=-1) / np.sum(c, axis=-1)
        if hit.any():
            rows = hit.any(axis=-1)
            out = np.where(rows, np.sum(np.where(hit, v, 0.0), axis=-1), out)
        return out


def _smooth_kernel_n3(s: float):
    c = 8.0 * math.pi ** 2 / (1.0 + 2.0 * s)
    e = 1.0 + 2.0 * s

    def kt(w):
        w = np.asarray(w, dtype=float)
        ws = np.where(w > 0, w, 1.0)
        with np.errstate(divide="ignore"):
            val = -np.expm1(e * (np.log1p(-ws) - np.log1p(ws))) / ws
        return c * np.where(w > 0, val, 2.0 * e)

    return kt


def _kernel_numeric_point(n: int, s: float, w: float) -> float:
    """k(w) (1-w)^(1+2s) by direct angular quadrature."""
    A = sphere_area(n) * sphere_area(n - 1)
    alpha = (n + 2.0 * s) / 2.0
    beta = (n - 3) / 2.0
    if w <= 0.5:
        x, wt = _gj(48, beta, beta)
        val = np.sum(wt * (1.0 + w * w - 2.0 * w * x) ** (-alpha))
        return float(A * val * (1.0 - w) ** (1.0 + 2.0 * s))
    # substitute 1 - t = (1-w)^2 v / (2w), which resolves the peak at t = 1
    d = (1.0 - w) ** 2 / (2.0 * w)
    V = 2.0 / d

    def g(v):
        return (1.0 + v) ** (-alpha) * v ** beta * (2.0 - d * v) ** beta

    pts = [0.0, 1.0] + [10.0 ** k for k in range(1, 30) if 10.0 ** k < V] + [V]
    tot = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        tot += integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    # k(w) = A (1-w)^(-1-2s) (2w)^(-(n-1)/2) * int_0^V g(v) dv
    return float(A * (2.0 * w) ** (-(n - 1) / 2.0) * tot)


@lru_cache(maxsize=32)
def smooth_kernel(n: int, s: float, numeric: bool = False):
    """Vectorized w -> k(w)(1-w)^(1+2s) on [0, 1]."""
    if n == 3 and not numeric:
        return _smooth_kernel_n3(s)
    breaks = [0.0, 0.25, 0.5] + [1.0 - 2.0 ** (-j) for j in range(2, 48)] + [1.0]
    return _PanelInterpolant(lambda w: _kernel_numeric_point(n, s, min(w, 1.0 - 2.0 ** -52)), np.array(breaks))


# ---------------------------------------------------------------------------
# Gagliardo seminorm


_JACOBI_SPAN = 0.25


def _inner_integral(profile, s, kt, r, w_lo, width, order):
    """I(r) = int_0^1 (f(r) - f(r w))^2 k(w) w^(n-1) dw for a chunk of radii."""
    n = profile.n
    f = profile.f
    fr = f(r)[:, None]
    # singular end: (1-w)^(1-2s) times a smooth factor
    xj, wj = _gj(order + 8, 1.0 - 2.0 * s, 0.0)
    one_minus = _JACOBI_SPAN * (1.0 - xj) / 2.0
    wv = 1.0 - one_minus
    G = ((fr - f(r[:, None] * wv[None, :])) / one_minus) ** 2 * (kt(wv) * wv ** (n - 1))[None, :]
    total = (_JACOBI_SPAN / 2.0) ** (2.0 - 2.0 * s) * (G @ wj)
    # regular part on log panels in w
    wn, ww = log_panels(w_lo, 1.0 - _JACOBI_SPAN, width, order)
    k = kt(wn) * (1.0 - wn) ** (-1.0 - 2.0 * s) * wn ** (n - 1)
    total += ((fr - f(r[:, None] * wn[None, :])) ** 2) @ (k * ww)
    # below w_lo the profile is flat at f(0)
    total += (fr[:, 0] - f(np.zeros(1))[0]) ** 2 * kt(np.zeros(1))[0] * w_lo ** n / n
    return total


def _kappa_ball(profile, s, kt, rho, width, order):
    """Exterior potential int_{|y| > R} |x - y|^-(n+2s) dy at |x| = rho < R."""
    n, R = profile.n, profile.support
    S = sphere_area(n)
    a = rho / R
    out = np.empty_like(a)
    xj, wj = _gj(order + 8, 0.0, 2.0 * s - 1.0)
    x01 = (1.0 + xj) / 2.0

    def k_full(w):
        return kt(w) * (1.0 - w) ** (-1.0 - 2.0 * s)

    small = a <= 0.5
    if small.any():
        aa = a[small][:, None]
        # int_0^1 x^(2s-1) k(a x) dx
        out[small] = 2.0 ** (-2.0 * s) * (k_full(aa * x01[None, :]) @ wj)
    if (~small).any():
        head = 0.5 ** (2.0 * s) * 2.0 ** (-2.0 * s) * float(k_full(0.5 * x01) @ wj)  # int_0^(1/2) w^(2s-1) k dw
        xg, wg = _gl(order)
        for i in np.flatnonzero(~small):
            y0, y1 = math.log(2.0), -math.log1p(-a[i])
            m = max(1, int(math.ceil((y1 - y0) / width)))
            edges = np.linspace(y0, y1, m + 1)
            y = (0.5 * (edges[1:] + edges[:-1])[:, None] + 0.5 * (edges[1:] - edges[:-1])[:, None] * xg).ravel()
            wy = (0.5 * (edges[1:] - edges[:-1])[:, None] * wg).ravel()
            w = -np.expm1(-y)
            body = float(np.sum(w ** (2.0 * s - 1.0) * kt(w) * np.exp(2.0 * s * y) * wy))
            out[i] = a[i] ** (-2.0 * s) * (head + body)
    return R ** (-2.0 * s) / S * out


def _gagliardo_once(profile, s, kt, width, order, tail_p, chunk=64):
    n = profile.n
    lo, hi, infinite = _range(profile, 1e-7, 1e4)
    r, wr = log_panels(lo, hi, width, order, profile.scales)
    if infinite:
        rt, wt = tail_panels(hi, tail_p, order, pieces=8)
        r, wr = np.concatenate([r, rt]), np.concatenate([wr, wt])
    smin = min(profile.scales)
    total = 0.0
    for i0 in range(0, r.size, chunk):
        rc = r[i0 : i0 + chunk]
        w_lo = min(0.5, 1e-4 * smin / rc.max())
        I = _inner_integral(profile, s, kt, rc, w_lo, width, order)
        total += 2.0 * float(np.sum(rc ** (n - 1 - 2.0 * s) * I * wr[i0 : i0 + chunk]))
    if not infinite:
        rho = r
        f2 = profile.f(rho) ** 2
        kap = _kappa_ball(profile, s, kt, rho, width, order)
        total += 2.0 * sphere_area(n) * float(np.sum(f2 * rho ** (n - 1) * kap * wr))
    return total


def radial_gagliardo(profile: RadialProfile, s: float, numeric_kernel: bool = False) -> QuadResult:
    """[f]_s^2 over R^n for a radial profile, with the raw kernel |x-y|^-(n+2s).

    Raises DivergentIntegralError when the profile's algebraic decay makes the
    seminorm infinite; this happens for decay rate a <= (n - 2s)/2.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    n = profile.n
    if math.isfinite(profile.support) or profile.decay is None:
        p = 2.0 * s
    else:
        p = min(2.0 * s, 2.0 * profile.decay + 2.0 * s - n)
        if p <= 0:
            raise DivergentIntegralError(
                f"Gagliardo seminorm of order s={s} diverges for {profile.kind} in n={n}: decay r^-{profile.decay} "
                f"needs rate > (n-2s)/2 = {(n - 2 * s) / 2:g}; the pair integral behaves like "
                + ("log R" if p == 0 else f"R^{-p:g}")
                + " over |x|,|y| < R"
            )
    kt = smooth_kernel(n, s, numeric_kernel)
    coarse = _gagliardo_once(profile, s, kt, 0.5, 12, p)
    fine = _gagliardo_once(profile, s, kt, 0.25, 16, p)
    return QuadResult(fine, abs(fine - coarse))

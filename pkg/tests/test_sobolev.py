import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixedbn.domain_grid import build_grid, mask_ball
from mixedbn.fitting import FitError, loglog_fit
from mixedbn.forms import assemble, gagliardo_energy
from mixedbn.radial import bump_profile, gaussian_profile, truncated_u_eps, u_eps_profile
from mixedbn.sobolev import (
    DivergentIntegralError,
    aubin_talenti,
    aubin_talenti_normalization,
    concentration_scan,
    estimate_sharp_constant,
    gagliardo_finite,
    paper_formula,
    radial_gagliardo,
    radial_gradient_energy,
    radial_lq_norm,
    talenti_constant,
)


def talenti_oracle(n):
    return math.pi * n * (n - 2) * (math.gamma(n / 2) / math.gamma(n)) ** (2 / n)


def test_talenti_values():
    assert talenti_constant(3) == pytest.approx(3 * (math.pi / 2) ** (4 / 3), rel=1e-14)
    assert talenti_constant(3) == pytest.approx(5.4779, abs=1e-4)
    assert talenti_constant(4) == pytest.approx(8 * math.pi / math.sqrt(6), rel=1e-14)
    for n in range(3, 9):
        assert talenti_constant(n) == pytest.approx(talenti_oracle(n), rel=1e-13)


def test_closed_form_is_reciprocal():
    assert paper_formula(3) == pytest.approx(0.18255, abs=1e-5)
    for n in range(3, 8):
        assert paper_formula(n) * talenti_constant(n) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("bad", [1, 2])
def test_dimension_errors(bad):
    with pytest.raises(ValueError):
        talenti_constant(bad)
    with pytest.raises(ValueError):
        paper_formula(bad)


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_aubin_talenti_normalized_and_extremal(n, t):
    U = aubin_talenti(n, t)
    q = 2 * n / (n - 2)
    assert radial_lq_norm(U, q) == pytest.approx(1.0, rel=1e-10)
    assert radial_gradient_energy(U) == pytest.approx(talenti_constant(n), rel=1e-9)


def test_aubin_talenti_peak_and_decay():
    n = 3
    c = aubin_talenti_normalization(n)
    for t in (0.5, 1.0, 2.0):
        U = aubin_talenti(n, t)
        assert U(0.0) == pytest.approx(c * t ** ((2 - n) / 2), rel=1e-14)
        r = np.logspace(-2, 4, 200)
        assert np.all(U(r) <= c * t ** ((n - 2) / 2) * r ** (2 - n) * (1 + 1e-12))
    with pytest.raises(ValueError):
        aubin_talenti(3, 0.0)


@pytest.mark.parametrize(
    "profile",
    [gaussian_profile(3, 0.7), bump_profile(3, 1.0), aubin_talenti(3, 1.3), u_eps_profile(3, 0.1), truncated_u_eps(3, 0.1, 0.5)],
    ids=["gauss", "bump", "talenti", "u_eps", "trunc"],
)
def test_profile_derivative_finite_difference(profile):
    r = np.linspace(0.05, 0.9, 17)
    h = 1e-6
    fd = (profile(r + h) - profile(r - h)) / (2 * h)
    np.testing.assert_allclose(profile.derivative(r), fd, rtol=1e-5, atol=1e-7)


def test_gagliardo_finiteness_rule():
    U = aubin_talenti(3)
    assert not gagliardo_finite(U, 0.25)
    assert not gagliardo_finite(U, 0.5)
    assert gagliardo_finite(U, 0.75)
    assert gagliardo_finite(bump_profile(3, 1.0), 0.25)
    with pytest.raises(DivergentIntegralError):
        radial_gagliardo(U, 0.5)


def test_gagliardo_scaling_law_radial():
    prof = gaussian_profile(3, 0.6)
    for s in (0.25, 0.75):
        base = radial_gagliardo(prof, s).value
        for k in (2.0, 4.0):
            # amplitude k^((n-2)/2) and rate k multiply [.]_s^2 by k^(2s-2)
            scaled = radial_gagliardo(prof.concentrate(k), s).value
            assert scaled / base == pytest.approx(k ** (2 * s - 2), rel=1e-8)


def test_gaussian_gagliardo_closed_form():
    # Fourier side: the raw-kernel seminorm equals (2 / C(n,s)) int |2 pi xi|^(2s) |f^|^2
    from scipy import integrate, special

    n, s, sig = 3, 0.5, 0.7
    cns = 4 ** s * special.gamma(n / 2 + s) / (math.pi ** (n / 2) * abs(special.gamma(-s)))
    # f^(xi) = (pi sigma^2)^(n/2) exp(-pi^2 sigma^2 |xi|^2) with the 2 pi convention
    def integrand(rho):
        return (2 * math.pi * rho) ** (2 * s) * (math.pi * sig * sig) ** n * np.exp(-2 * math.pi ** 2 * sig ** 2 * rho * rho) * 4 * math.pi * rho * rho

    fourier, _ = integrate.quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-13)
    exact = 2 * fourier / cns
    assert radial_gagliardo(gaussian_profile(n, sig), s).value == pytest.approx(exact, rel=1e-8)


def test_bump_matches_grid():
    prof = bump_profile(3, 0.8)
    mask = mask_ball(build_grid(3, 1.5, 25), None, 1.0)
    f = assemble(mask, 0.5)
    discrete = gagliardo_energy(f, prof.at_points(mask.points()))
    assert abs(discrete / radial_gagliardo(prof, 0.5).value - 1) < 0.03


def test_spread_scan_fit_for_finite_seminorm():
    rep = concentration_scan("spread_t", {"n": 3, "s": 0.75, "t": [2, 4, 8, 16, 32]})
    assert rep.fit.exponent == pytest.approx(-0.5, abs=1e-6)
    assert rep.monotone
    assert rep.strictly_above_talenti
    assert rep.reference == talenti_constant(3)


@pytest.mark.parametrize("s", [0.25, 0.5])
def test_spread_scan_diverges_for_small_order(s):
    with pytest.raises(DivergentIntegralError):
        concentration_scan("spread_t", {"n": 3, "s": s, "t": [2, 4, 8, 16]})


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_shrink_scan_excess_rate(s):
    rep = concentration_scan("shrink_k", {"n": 3, "s": s, "k": [2, 4, 8, 16, 32]})
    assert rep.fit.exponent == pytest.approx(2 * s - 2, abs=1e-6)
    assert rep.fit.r_squared > 0.999999
    assert rep.monotone
    assert rep.strictly_above_talenti
    assert min(rep.quotients) > rep.reference > talenti_constant(3)


def test_scan_requires_four_samples():
    with pytest.raises(ValueError):
        concentration_scan("shrink_k", {"n": 3, "s": 0.5, "k": [2, 4, 8]})
    with pytest.raises(ValueError):
        concentration_scan("nope", {"n": 3, "s": 0.5, "k": [2, 4, 8, 16]})


def test_loglog_fit_exact_power():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = loglog_fit(x, 3.0 * x ** -1.25)
    assert fit.exponent == pytest.approx(-1.25, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(FitError):
        loglog_fit(x[:3], x[:3])
    with pytest.raises(FitError):
        loglog_fit(x, -x)


@given(st.floats(0.2, 5.0), st.floats(0.5, 3.0))
def test_lq_norm_homogeneity_property(a, sigma):
    prof = gaussian_profile(3, sigma)
    assert radial_lq_norm(prof.scaled(a), 6.0) == pytest.approx(a * radial_lq_norm(prof, 6.0), rel=1e-9)


def test_discrete_minimization_concentrates(ball13, forms13):
    est = estimate_sharp_constant(forms13, max_iter=400)
    assert est.first_step_decrease > 0
    assert est.participation_final < est.participation_initial
    assert np.all(np.diff(est.value_history) <= 1e-12 * est.value_history[0])
    assert est.minimizer.mask.same_as(ball13)

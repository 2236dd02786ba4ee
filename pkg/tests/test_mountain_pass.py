import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixedbn.domain_grid import GridFunction, build_grid, mask_ball, mask_box
from mixedbn.forms import assemble
from mixedbn.mountain_pass import (
    ExponentError,
    GeometryError,
    competitor,
    dichotomy_scan,
    dyadic_eps,
    exponents,
    f_energy,
    j_energy,
    mp_geometry_probe,
    path_report,
    path_value,
    rim_bound,
    solve_superlinear,
    sup_over_path,
    threshold,
)
from mixedbn.sobolev import talenti_constant


@pytest.mark.parametrize(
    "s,n,p,kappa,beta,case",
    [
        (0.25, 3, 4.0, 1.0, 0.5, 1),
        (0.5, 3, 2.0, 1.0, 1.5, 2),
        (0.5, 4, 2.0, 1.0, 1.0, 2),
        (0.75, 3, 3.0, 0.5, 1.0, 2),
        (0.1, 5, 1.5, 1.8, 1.25, 1),
    ],
)
def test_exponents_examples(s, n, p, kappa, beta, case):
    ex = exponents(s, n, p)
    assert ex.kappa == pytest.approx(kappa, abs=1e-15)
    assert ex.beta == pytest.approx(beta, abs=1e-15)
    assert ex.case == case
    assert ex.N == pytest.approx(n - (n - 2) * (p + 1), abs=1e-15)


@pytest.mark.parametrize("s,n,p", [(0.5, 3, 1.0), (0.5, 3, 5.0), (0.5, 4, 3.0), (0.0, 3, 2.0), (1.0, 3, 2.0), (0.5, 2, 2.0)])
def test_exponent_errors(s, n, p):
    with pytest.raises(ExponentError):
        exponents(s, n, p)


def test_threshold_values():
    assert threshold(3) == pytest.approx(4.2737, abs=1e-4)
    assert threshold(3) == pytest.approx(talenti_constant(3) ** 1.5 / 3, rel=1e-15)
    vals = [threshold(n) for n in range(3, 9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@given(st.floats(0.1, 20.0), st.sampled_from([3, 4, 5]))
def test_lambda_zero_closed_form(A, n):
    t, sup = sup_over_path(A, 1.0, 0.0, 1.5, n)
    q = 2 * n / (n - 2)
    assert t == pytest.approx(A ** (1 / (q - 2)), rel=1e-9)
    assert sup == pytest.approx(A ** (n / 2) / n, rel=1e-12)


@given(st.floats(0.5, 10.0), st.floats(0.01, 5.0), st.floats(0.0, 50.0), st.floats(1.1, 4.9))
def test_sup_properties(A, C, lam, p):
    n = 3
    t, sup = sup_over_path(A, C, lam, p, n)
    assert 0 <= t <= A ** 0.25 * (1 + 1e-12)
    # monotone: more lambda lowers the sup, more A raises it
    assert sup_over_path(A, C, lam + 1.0, p, n)[1] <= sup + 1e-12
    assert sup_over_path(A * 1.1, C, lam, p, n)[1] >= sup - 1e-12
    grid = np.linspace(0.0, A ** 0.25, 1001)
    assert sup >= float(np.max(path_value(grid, A, C, lam, p, n))) - 1e-12 * max(1.0, abs(sup))


def test_sup_large_lambda_pushes_maximizer_to_zero():
    ts = [sup_over_path(5.5, 0.3, lam, 2.0, 3)[0] for lam in (1e1, 1e3, 1e5, 1e7)]
    assert all(b < a for a, b in zip(ts, ts[1:]))
    assert ts[-1] < 1e-5


def test_sup_argument_errors():
    with pytest.raises(ValueError):
        sup_over_path(0.0, 1.0, 1.0, 2.0, 3)
    with pytest.raises(ValueError):
        sup_over_path(1.0, -1.0, 1.0, 2.0, 3)


def test_dyadic_eps():
    e = dyadic_eps(0.5, 3, 9, 2)
    assert e == [0.5 / 8, 0.5 / 32, 0.5 / 128, 0.5 / 512]


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_competitor_normalization_and_excess(s):
    r = 0.5
    comps = [competitor(r * 2.0 ** -k, r, s, 3) for k in (4, 6, 8, 10)]
    for c in comps:
        assert abs(c.B - 1.0) < 1e-8
        assert c.excess > 0
        assert c.A == pytest.approx(talenti_constant(3) + c.excess, rel=1e-15)
    ex = [c.excess for c in comps]
    assert all(b < a for a, b in zip(ex, ex[1:]))


def test_competitor_warns_outside_regime():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        competitor(0.2, 0.5, 0.5, 3)
    assert any("r/4" in str(w.message) for w in rec)
    with pytest.raises(ValueError):
        competitor(-1.0, 0.5, 0.5, 3)


def test_competitor_profile_is_normalized():
    from mixedbn.radial import radial_lq

    c = competitor(0.5 / 64, 0.5, 0.5, 3)
    assert radial_lq(c.profile(), 6.0).value == pytest.approx(1.0, rel=1e-9)


def test_path_report_verdict():
    rep = path_report(0.5 / 2 ** 9, 0.5, 0.25, 3, 4.0, 1.0)
    assert rep.verdict == (rep.sup < rep.threshold)
    assert rep.to_dict()["threshold"] == threshold(3)


@pytest.fixture(scope="module")
def case2_scan():
    return dichotomy_scan(0.5, 3, 2.0)


@pytest.fixture(scope="module")
def case1_scan():
    return dichotomy_scan(0.25, 3, 4.0)


def test_dichotomy_case1_witness(case1_scan):
    rep = case1_scan
    assert rep.exponents.case == 1
    assert rep.witness_found
    assert all(r.verdict for r in rep.reports if r.eps == rep.witness_eps)


def test_dichotomy_case2_lambda_zero(case2_scan):
    rep = case2_scan
    assert rep.exponents.case == 2 and rep.witness_found
    lo, hi = rep.lambda0_bracket
    assert hi - lo <= 1e-3 * hi
    e = rep.witness_eps
    assert path_report(e, rep.r, 0.5, 3, 2.0, hi).verdict
    assert not path_report(e, rep.r, 0.5, 3, 2.0, lo).verdict


def test_dichotomy_exponent_fits(case1_scan, case2_scan):
    assert case1_scan.kappa_fit.exponent == pytest.approx(1.0, abs=0.01)
    assert case1_scan.beta_fit.exponent == pytest.approx(0.5, abs=0.01)
    # s = 1/2 and p = 2 sit on the borderline where both expansions pick up a log factor
    assert case2_scan.kappa_fit.exponent == pytest.approx(1.0, abs=0.1)
    assert case2_scan.beta_fit.exponent == pytest.approx(1.5, abs=0.1)


# --- discrete energies ------------------------------------------------------


def test_energies_agree_on_nonnegative(forms13, ball13, rng):
    u = np.abs(rng.standard_normal(forms13.size))
    assert j_energy(forms13, u, 3.0, 2.0) == f_energy(forms13, u, 3.0, 2.0)
    v = -u
    assert j_energy(forms13, v, 3.0, 2.0) > f_energy(forms13, v, 3.0, 2.0)


def test_energy_vanishes_along_small_multiples(forms13, rng):
    u = np.abs(rng.standard_normal(forms13.size))
    vals = [abs(j_energy(forms13, t * u, 1.0, 2.0)) for t in 2.0 ** -np.arange(4, 20, 3)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-8


def test_energy_mask_mismatch(forms13, ball9):
    with pytest.raises(ValueError):
        j_energy(forms13, GridFunction(ball9, np.ones(ball9.num_interior)), 1.0, 2.0)


def test_geometry_probe(forms13):
    probe = mp_geometry_probe(forms13, 1.0, 2.0, battery_size=50)
    assert probe.beta_level > 0
    assert probe.rim_minimum >= probe.beta_level
    assert probe.j_e < 0 and probe.rho_e > probe.alpha
    assert rim_bound(probe.alpha, 1.0, 2.0, 3, forms13.mask.measure, talenti_constant(3)) == probe.beta_level


def test_geometry_probe_rejects_false_sobolev_constant(forms13):
    # with an inflated constant the claimed rim level exceeds what the battery finds
    with pytest.raises(GeometryError) as info:
        mp_geometry_probe(forms13, 1.0, 2.0, sobolev=1e4, battery_size=50)
    assert info.value.witness is not None


@pytest.fixture(scope="module")
def unit_ball17():
    return assemble(mask_ball(build_grid(3, 1.5, 17), None, 1.0), 0.25)


def test_superlinear_solution_large_lambda(unit_ball17):
    res = solve_superlinear(unit_ball17, 200.0, 2.0)
    assert res.converged
    sol = res.solution
    assert sol.weak_residual < 1e-4
    assert sol.min_value >= -1e-8
    assert 0 < res.energy < threshold(3)
    assert sol.identity_error < 1e-4


def test_superlinear_lambda_zero_concentrates():
    forms = assemble(mask_box(build_grid(3, 1.5, 13), [1.0, 1.0, 1.0]), 0.25)
    res = solve_superlinear(forms, 0.0, 2.0, max_iter=300)
    assert res.participation_final < 0.1 * res.participation_initial


def test_superlinear_rejects_negative_lambda(forms9):
    with pytest.raises(ValueError):
        solve_superlinear(forms9, -1.0, 2.0)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixedbn.domain_grid import DomainError, GridFunction, build_grid, mask_ball, sample
from mixedbn.forms import (
    FormsError,
    apply_operator,
    assemble,
    dirichlet_energy,
    embedding_constant_probe,
    gagliardo_energy,
    gagliardo_parts,
    rho_squared,
)
from mixedbn.lattice import epstein_zeta, lattice_power_sum, shell_counts, sphere_area
from mixedbn.radial import gaussian_profile, radial_gagliardo
from mixedbn.sobolev import talenti_constant


def gaussian(mask, sigma=0.4):
    return sample(mask, lambda x: np.exp(-np.sum(x * x, axis=1) / (2 * sigma * sigma)))


# --- lattice sums ----------------------------------------------------------


def test_shell_counts_small_radii():
    c = shell_counts(3, 4)
    assert list(c[:5]) == [1, 6, 12, 8, 6]


def test_lattice_power_sum_brute_force():
    k = np.arange(-6, 7)
    X, Y, Z = np.meshgrid(k, k, k, indexing="ij")
    q = (X * X + Y * Y + Z * Z).ravel()
    q = q[(q > 0) & (q < 25)]
    assert lattice_power_sum(3, 5.0, 3.5) == pytest.approx(np.sum(q ** -1.75), rel=1e-13)


def test_epstein_zeta_reference_values():
    # classical simple-cubic lattice sums
    assert epstein_zeta(3, 4.0) == pytest.approx(16.5323, abs=1e-4)
    assert epstein_zeta(3, 6.0) == pytest.approx(8.4019, abs=1e-4)


def test_sphere_area():
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi ** 2)


# --- assembly --------------------------------------------------------------


def test_kappa_center_matches_exterior_integral():
    mask = mask_ball(build_grid(3, 1.5, 25), None, 1.0)
    f = assemble(mask, 0.5, tail_radius=1.0)
    c = np.argmin(np.linalg.norm(mask.points(), axis=1))
    assert f.kappa[c] == pytest.approx(4 * math.pi, rel=0.01)


def test_kappa_nonnegative_and_weights_symmetric(forms13):
    assert np.all(forms13.kappa >= 0)
    W = forms13.weights
    assert np.max(np.abs(W - W.T)) == 0.0
    assert np.all(np.diag(W) == 0.0)
    assert np.all(W >= 0)


def test_constant_function_pairs(ball13):
    f = assemble(ball13, 0.5, self_cell=False)
    one = np.ones(f.size)
    parts = gagliardo_parts(f, one)
    assert parts.interaction == 0.0
    assert parts.self_cell == 0.0
    assert gagliardo_energy(f, one) == pytest.approx(2 * f.node_weight * f.kappa.sum(), rel=1e-14)


def test_self_cell_term_is_proportional_to_dirichlet(forms13, ball13):
    u = gaussian(ball13)
    parts = gagliardo_parts(forms13, u)
    assert parts.self_cell == pytest.approx(forms13.self_cell * dirichlet_energy(forms13, u), rel=1e-14)
    assert forms13.self_cell > 0


@pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5])
def test_assemble_rejects_order(ball9, s):
    with pytest.raises(FormsError):
        assemble(ball9, s)


def test_forms_positive_definite():
    mask = mask_ball(build_grid(3, 1.5, 9), None, 1.0)
    f = assemble(mask, 0.3)
    for which in ("local", "fractional", "mixed"):
        M = f.energy_matrix(which)
        assert np.allclose(M, M.T, rtol=0, atol=1e-12 * np.abs(M).max())
        assert np.linalg.eigvalsh(M).min() > 0


def test_matvec_matches_dense(forms9, rng):
    v = rng.standard_normal(forms9.size)
    for which, mv in (("local", forms9.local_matvec), ("fractional", forms9.fractional_matvec), ("mixed", forms9.mixed_matvec)):
        np.testing.assert_allclose(mv(v), forms9.energy_matrix(which) @ v, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(forms9.diagonal(which), np.diag(forms9.energy_matrix(which)), rtol=1e-14)


def test_weight_cache_round_trip(tmp_path, ball13):
    a = assemble(ball13, 0.5, cache_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    N = ball13.num_interior
    raw = np.fromfile(files[0], dtype="<f8")
    assert raw.size == N * (N - 1) // 2
    assert np.array_equal(raw, a.weights[np.triu_indices(N, 1)])
    b = assemble(ball13, 0.5, cache_dir=tmp_path)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.kappa, b.kappa)
    c = assemble(ball13, 0.5)
    assert np.array_equal(a.weights, c.weights)


# --- energies --------------------------------------------------------------


def test_zero_function_energies(forms13):
    z = np.zeros(forms13.size)
    assert dirichlet_energy(forms13, z) == 0.0
    assert gagliardo_energy(forms13, z) == 0.0
    assert rho_squared(forms13, z) == 0.0


def test_mask_mismatch(forms13, ball9):
    with pytest.raises(DomainError):
        dirichlet_energy(forms13, GridFunction(ball9, np.ones(ball9.num_interior)))


@given(st.floats(-50, 50, allow_nan=False))
def test_energy_homogeneity(c):
    mask = mask_ball(build_grid(3, 1.5, 9), None, 1.0)
    f = _forms9_cached(mask)
    u = gaussian(mask).values
    assert dirichlet_energy(f, c * u) == pytest.approx(c * c * dirichlet_energy(f, u), rel=1e-12, abs=1e-300)
    assert gagliardo_energy(f, c * u) == pytest.approx(c * c * gagliardo_energy(f, u), rel=1e-12, abs=1e-300)


_cache = {}


def _forms9_cached(mask, s=0.5):
    key = (mask.key(), s)
    if key not in _cache:
        _cache[key] = assemble(mask, s)
    return _cache[key]


def test_sin_profile_rayleigh_quotient_richardson():
    """sin(pi r)/r has Dirichlet quotient pi^2 on the unit ball.

    The staircase boundary makes the lattice error first order in h; a single
    Richardson step over h and h/2 lands within 2%.
    """
    q = {}
    for m in (17, 33):
        mask = mask_ball(build_grid(3, 1.5, m), None, 1.0)
        r = np.linalg.norm(mask.points(), axis=1)
        v = np.where(r > 0, np.sin(np.pi * r) / np.where(r > 0, r, 1.0), np.pi)
        f = assemble(mask, 0.5) if m == 17 else None
        d = dirichlet_energy(f, v) if f is not None else _dirichlet_only(mask, v)
        q[m] = d / (np.sum(v * v) * mask.node_weight)
    rich = 2 * q[33] - q[17]
    assert abs(rich - math.pi ** 2) / math.pi ** 2 < 0.02
    assert abs(q[33] - math.pi ** 2) < abs(q[17] - math.pi ** 2)


def _dirichlet_only(mask, v):
    full = np.zeros(mask.grid.num_nodes)
    full[mask.flat_index] = v
    full = full.reshape(mask.grid.shape)
    return sum(np.sum(np.diff(full, axis=k) ** 2) for k in range(mask.n)) * mask.h ** (mask.n - 2)


@pytest.mark.parametrize("s,tol", [(0.25, 0.03), (0.5, 0.03), (0.75, 0.03)])
def test_gagliardo_matches_radial_oracle(s, tol):
    mask = mask_ball(build_grid(3, 1.5, 25), None, 1.0)
    f = assemble(mask, s)
    prof = gaussian_profile(3, 0.35)
    u = prof.at_points(mask.points())
    exact = radial_gagliardo(prof, s).value
    # the profile is ~3e-4 at the boundary; compare with the whole-space value
    assert abs(gagliardo_energy(f, u) - exact) / exact < tol


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("k", [2, 4])
def test_exact_scaling_law(s, k):
    base = mask_ball(build_grid(3, 1.5, 13), None, 1.0)
    small = mask_ball(build_grid(3, 1.5 / k, 13), None, 1.0 / k)
    assert np.array_equal(base.flat_index, small.flat_index)
    u = gaussian(base).values
    f1, fk = assemble(base, s), assemble(small, s)
    uk = u * k ** 0.5
    assert gagliardo_energy(fk, uk) / gagliardo_energy(f1, u) / k ** (2 * s - 2) == pytest.approx(1.0, abs=1e-10)
    assert dirichlet_energy(fk, uk) / dirichlet_energy(f1, u) == pytest.approx(1.0, abs=1e-10)


def test_rho_squared_decomposition(forms13, ball13, rng):
    for _ in range(5):
        u = rng.standard_normal(forms13.size)
        d, g = dirichlet_energy(forms13, u), gagliardo_energy(forms13, u)
        assert rho_squared(forms13, u) - d == pytest.approx(g, rel=1e-13)
        assert rho_squared(forms13, u) >= d


def test_discrete_sobolev_quotient_above_talenti(rng):
    mask = mask_ball(build_grid(3, 1.5, 25), None, 1.0)
    f = assemble(mask, 0.5)
    pts = mask.points()
    S = talenti_constant(3)
    for _ in range(20):
        c = pts[rng.integers(len(pts))]
        w = mask.h * (0.5 + 4 * rng.random())
        u = np.exp(-np.sum((pts - c) ** 2, axis=1) / (2 * w * w))
        q = rho_squared(f, u) / (np.sum(u ** 6) * f.node_weight) ** (1 / 3)
        assert q >= 0.9 * S


def test_apply_operator_linear_and_symmetric(forms13, rng):
    w = forms13.node_weight
    for _ in range(5):
        u, v = rng.standard_normal((2, forms13.size))
        Au, Av = apply_operator(forms13, u).values, apply_operator(forms13, v).values
        Auv = apply_operator(forms13, u + v).values
        np.testing.assert_allclose(Auv, Au + Av, rtol=1e-12, atol=1e-12 * np.abs(Au).max())
        assert (Au @ v) * w == pytest.approx((Av @ u) * w, rel=1e-10)
        assert (Au @ u) * w == pytest.approx(rho_squared(forms13, u), rel=1e-10)


@given(st.integers(0, 10_000))
def test_pairing_consistency_property(seed):
    mask = mask_ball(build_grid(3, 1.5, 9), None, 1.0)
    f = _forms9_cached(mask, 0.4)
    u = np.random.default_rng(seed).standard_normal(f.size)
    Au = apply_operator(f, u).values
    assert (Au @ u) * f.node_weight == pytest.approx(rho_squared(f, u), rel=1e-10)


def test_bump_has_positive_diagonal_pairing(forms13, ball13):
    u = gaussian(ball13, 0.2).values
    Au = apply_operator(forms13, u).values
    assert Au @ u > 0
    assert np.all(forms13.diagonal() > 0)


def test_embedding_probe_bounded_across_resolutions():
    worst = {}
    rng = np.random.default_rng(7)
    for m in (17, 25, 33):
        mask = mask_ball(build_grid(3, 1.5, m), None, 1.0)
        f = assemble(mask, 0.5)
        pts = mask.points()
        ratios = []
        for _ in range(50):
            c = rng.uniform(-0.5, 0.5, 3)
            w = rng.uniform(0.15, 0.6)
            u = np.exp(-np.sum((pts - c) ** 2, axis=1) / (2 * w * w))
            ratios.append(embedding_constant_probe(f, u))
        worst[m] = max(ratios)
    assert all(np.isfinite(v) and v < 50 for v in worst.values())
    assert max(worst.values()) / min(worst.values()) < 1.5


def test_embedding_probe_degree_zero_and_s_sweep(ball13):
    u = gaussian(ball13).values
    for s in (0.25, 0.5, 0.75):
        f = assemble(ball13, s)
        p = embedding_constant_probe(f, u)
        assert np.isfinite(p) and p > 0
        assert embedding_constant_probe(f, -3.5 * u) == pytest.approx(p, rel=1e-12)
    with pytest.raises(FormsError):
        embedding_constant_probe(f, np.zeros_like(u))

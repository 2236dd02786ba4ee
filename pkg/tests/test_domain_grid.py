import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixedbn.domain_grid import (
    DomainError,
    GridFunction,
    build_grid,
    from_json,
    is_star_shaped,
    lq_norm,
    mask_ball,
    mask_box,
    mask_predicate,
    sample,
    to_json,
    two_star,
)
from mixedbn.sobolev import aubin_talenti


def test_grid_spacing_examples():
    g = build_grid(3, 1.0, 3)
    assert g.h == 1.0 and g.num_nodes == 27
    assert build_grid(3, 2.0, 17).h == 0.25
    g4 = build_grid(4, 1.0, 9)
    assert g4.h == 0.25 and g4.num_nodes == 6561


def test_origin_is_a_node():
    g = build_grid(3, 1.5, 25)
    assert g.axis[(g.m - 1) // 2] == 0.0


@pytest.mark.parametrize("args", [(3, 1.0, 4), (2, 1.0, 5), (3, 0.0, 5), (3, -1.0, 5), (3, 1.0, 1)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(DomainError):
        build_grid(*args)


def test_ball_volume_close_to_exact():
    # m=25 gives 6.5%; the 5% band is met from m=33 on
    mask33 = mask_ball(build_grid(3, 1.5, 33), None, 1.0)
    assert abs(mask33.measure - 4 * math.pi / 3) / (4 * math.pi / 3) < 0.05
    mask25 = mask_ball(build_grid(3, 1.5, 25), None, 1.0)
    assert mask25.measure < mask33.measure < 4 * math.pi / 3


def test_ball_membership_is_strict(ball13):
    pts = ball13.grid.coords()
    inside = np.linalg.norm(pts, axis=1) < 1.0
    assert np.array_equal(inside.reshape(ball13.grid.shape), ball13.interior)


def test_ball_below_spacing_rejected():
    g = build_grid(3, 1.5, 9)
    with pytest.raises(DomainError):
        mask_ball(g, None, 0.5 * g.h)


def test_ball_touching_margin_rejected():
    with pytest.raises(DomainError):
        mask_ball(build_grid(3, 1.5, 13), None, 1.4)


def test_ball_translation_is_a_shift():
    g = build_grid(3, 1.5, 17)
    a = mask_ball(g, None, 0.8)
    b = mask_ball(g, [g.h, 0.0, 0.0], 0.8)
    assert np.array_equal(np.roll(a.interior, 1, axis=0), b.interior)


def test_box_volume_and_star_shape(box13):
    box33 = mask_box(build_grid(3, 1.5, 33), [1.0, 1.0, 1.0])
    assert abs(box33.measure - 8.0) / 8.0 < 0.05
    assert is_star_shaped(box13) and is_star_shaped(box33)
    with pytest.raises(DomainError):
        mask_box(build_grid(3, 1.5, 13), [1.4, 1.0, 1.0])


def test_annulus_not_star_shaped():
    g = build_grid(3, 1.5, 17)
    ring = mask_predicate(g, lambda x: (np.linalg.norm(x, axis=1) < 1.0) & (np.linalg.norm(x, axis=1) > 0.4), "shell")
    assert not is_star_shaped(ring, [0.0, 0.0, 0.0])


def test_sample_constant_and_exterior_zero(ball13, rng):
    u = sample(ball13, lambda x: np.ones(len(x)))
    assert np.all(u.values == 1.0)
    full = u.full()
    outside = ~ball13.interior
    assert np.all(full[outside] == 0.0)
    idx = np.argwhere(outside)
    for k in rng.choice(len(idx), 20, replace=False):
        assert u.at_node(idx[k]) == 0.0
    assert u.at_node([-1, 0, 0]) == 0.0


def test_sample_odd_function_sums_to_zero(ball13):
    u = sample(ball13, lambda x: x[:, 0])
    assert abs(u.values.sum()) < 1e-12


def test_sample_matches_radial_profile(ball13):
    U = aubin_talenti(3)
    u = sample(ball13, U.at_points)
    r = np.linalg.norm(ball13.points(), axis=1)
    np.testing.assert_allclose(u.values, U.value(r), rtol=1e-12, atol=0)


def test_sample_rejects_nonfinite(ball9):
    with np.errstate(divide="ignore"), pytest.raises(DomainError):
        sample(ball9, lambda x: 1.0 / np.linalg.norm(x, axis=1))


def test_lq_norm_constant(ball13):
    u = sample(ball13, lambda x: np.ones(len(x)))
    assert lq_norm(u, 2) == pytest.approx(math.sqrt(ball13.measure), rel=1e-14)
    with pytest.raises(DomainError):
        lq_norm(u, 0.5)


def test_lq_norm_matches_radial_quadrature():
    mask = mask_ball(build_grid(3, 4.0, 33), None, 3.7)
    U = aubin_talenti(3)
    u = sample(mask, U.at_points)
    # the L^6 mass outside radius 3.7 is about 1e-3
    assert abs(lq_norm(u, 6.0) - 1.0) < 0.02


@given(st.floats(-1e3, 1e3, allow_nan=False), st.floats(1.0, 8.0))
def test_lq_norm_homogeneous(c, q):
    mask = mask_ball(build_grid(3, 1.5, 9), None, 1.0)
    u = sample(mask, lambda x: np.cos(x[:, 0]) + x[:, 1])
    assert lq_norm(u * c, q) == pytest.approx(abs(c) * lq_norm(u, q), rel=1e-12, abs=1e-300)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=1), st.floats(1.0, 7.0))
def test_lq_norm_monotone_in_absolute_value(shift, q):
    mask = mask_ball(build_grid(3, 1.5, 9), None, 1.0)
    base = np.abs(np.sin(3 * mask.points()[:, 0] + shift[0]))
    u = GridFunction(mask, base)
    v = GridFunction(mask, base * 1.5 + 0.1)
    assert lq_norm(u, q) <= lq_norm(v, q)


def test_two_star():
    assert two_star(3) == 6 and two_star(4) == 4 and two_star(6) == 3
    assert isinstance(two_star(5), Fraction) and two_star(5) == Fraction(10, 3)
    with pytest.raises(DomainError):
        two_star(2)


def test_grid_function_validation(ball9):
    with pytest.raises(DomainError):
        GridFunction(ball9, np.zeros(ball9.num_interior + 1))
    with pytest.raises(DomainError):
        GridFunction(ball9, np.full(ball9.num_interior, np.nan))
    u = GridFunction(ball9, np.ones(ball9.num_interior))
    with pytest.raises(ValueError):
        u.values[0] = 2.0


@pytest.mark.parametrize("which", ["grid", "ball", "box", "predicate", "function"])
def test_json_round_trip_is_bit_exact(which, ball13, box13):
    g = build_grid(3, 1.5, 13)
    obj = {
        "grid": g,
        "ball": ball13,
        "box": box13,
        "predicate": mask_predicate(g, lambda x: np.abs(x).sum(axis=1) < 1.0, "octahedron"),
        "function": sample(ball13, lambda x: np.exp(-np.sum(x * x, axis=1)) / 3.0),
    }[which]
    text = to_json(obj)
    back = from_json(text)
    assert to_json(back) == text
    if which == "function":
        assert np.array_equal(back.values, obj.values)
        d = json.loads(text)
        assert len(d["values"]) == g.num_nodes
    elif which != "grid":
        assert back.same_as(obj)

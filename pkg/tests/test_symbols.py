"""Symbol models: evaluation, derivatives, boxes, critical points."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weyllab.symbols import (
    MODEL_REGISTRY,
    GridCoefficient,
    PolynomialCoefficient,
    check_theorem_hypotheses,
    find_critical_points,
    make_model,
    smooth_cutoff,
)


def test_registry_models_build():
    assert {"harmonic", "separable_harmonic_2d", "double_well_2d"} <= set(
        MODEL_REGISTRY
    )
    for name in MODEL_REGISTRY:
        model = make_model(name)
        assert model.dimension in (1, 2)
        assert model.order == 1


def test_harmonic_values_and_derivatives():
    m = make_model("harmonic")
    pts = np.array([[0.5, -0.25], [1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(
        m.value(pts), pts[:, 0] ** 2 + pts[:, 1] ** 2, atol=1e-12
    )
    np.testing.assert_allclose(m.gradient(pts), 2.0 * pts, atol=1e-12)
    np.testing.assert_allclose(
        m.hessian(pts), np.broadcast_to(2 * np.eye(2), (3, 2, 2)), atol=1e-12
    )


def test_double_well_value():
    m = make_model("double_well_2d")
    v = np.array([[0.5, 0.2, -0.3, 0.1]])
    x1, x2, xi1, xi2 = v[0]
    expect = (x1**2 - 1.0) ** 2 + x2**2 + xi1**2 + xi2**2
    np.testing.assert_allclose(m.value(v), [expect], atol=1e-12)


def test_gradient_matches_finite_differences():
    m = make_model("double_well_2d")
    rng = np.random.default_rng(0)
    pts = m.sample_box(20, rng)
    g = m.gradient(pts)
    eps = 1e-6
    for j in range(4):
        hi = pts.copy()
        lo = pts.copy()
        hi[:, j] += eps
        lo[:, j] -= eps
        fd = (m.value(hi) - m.value(lo)) / (2 * eps)
        np.testing.assert_allclose(g[:, j], fd, rtol=1e-6, atol=1e-6)


def test_single_point_auto_unwrap():
    m = make_model("harmonic")
    assert float(m.value(np.array([1.0, 1.0]))) == pytest.approx(2.0)
    assert m.value(np.array([[1.0, 1.0]])).shape == (1,)
    assert m.gradient(np.array([[1.0, 1.0]])).shape == (1, 2)


def test_sample_box_inside():
    m = make_model("double_well_2d")
    pts = m.sample_box(500, np.random.default_rng(1))
    assert pts.shape == (500, 4)
    assert np.all(np.abs(pts[:, :2]) <= m.box_x)
    assert np.all(np.abs(pts[:, 2:]) <= m.box_xi)
    assert m.box_volume() == pytest.approx((2 * m.box_x) ** 2 * (2 * m.box_xi) ** 2)


def test_double_well_critical_point():
    m = make_model("double_well_2d")
    crits = find_critical_points(m, 1.0, window=0.25)
    assert len(crits) == 1
    rep = crits[0]
    np.testing.assert_allclose(rep.location, np.zeros(4), atol=1e-7)
    assert rep.energy == pytest.approx(1.0, abs=1e-8)
    assert rep.hessian_rank == 4
    eigs = np.sort(rep.hessian_eigenvalues)
    assert eigs[0] < 0 < eigs[1]  # saddle


def test_minima_excluded_by_energy_window():
    m = make_model("double_well_2d")
    # the two well bottoms sit at energy 0, outside the window around E=1
    crits = find_critical_points(m, 1.0, window=0.25)
    assert all(abs(r.energy - 1.0) < 0.5 for r in crits)


def test_harmonic_has_no_critical_point_near_one():
    m = make_model("harmonic")
    assert find_critical_points(m, 1.0, window=0.25) == []


def test_hypothesis_report():
    rep = check_theorem_hypotheses(make_model("double_well_2d"), 1.0, 0.25)
    assert rep.all_ok
    assert rep.verdict == "all hypotheses pass"
    rep1 = check_theorem_hypotheses(make_model("harmonic"), 1.0, 0.25)
    assert not rep1.dimension_ok


def test_confinement_rejects_high_energy():
    m = make_model("harmonic")
    assert m.check_confinement(1.0)
    assert not m.check_confinement(100.0)


def test_smooth_cutoff_shape():
    x = np.linspace(-3, 3, 301)
    y = smooth_cutoff(x, 1.0, 2.0)
    assert np.all((0.0 <= y) & (y <= 1.0))
    assert np.all(y[np.abs(x) <= 1.0] == 1.0)
    assert np.all(y[np.abs(x) >= 2.0] == 0.0)
    # symmetric and monotone on the transition
    np.testing.assert_allclose(y, y[::-1], atol=1e-14)
    right = y[x >= 0]
    assert np.all(np.diff(right) <= 1e-14)


def test_polynomial_coefficient_derivatives():
    c = PolynomialCoefficient({(2, 0): 3.0, (1, 1): -1.0, (0, 0): 2.0}, 2)
    x = np.array([[1.0, 2.0]])
    assert c.value(x)[0] == pytest.approx(3.0 - 2.0 + 2.0)
    np.testing.assert_allclose(c.grad(x), [[6.0 - 2.0, -1.0]], atol=1e-12)
    np.testing.assert_allclose(
        c.hess(x), [[[6.0, -1.0], [-1.0, 0.0]]], atol=1e-12
    )


def test_grid_coefficient_interpolates():
    xs = np.linspace(-2, 2, 401)
    c = GridCoefficient([xs], np.sin(xs))
    q = np.array([[0.3], [-1.1]])
    np.testing.assert_allclose(c.value(q), np.sin(q[:, 0]), atol=1e-6)
    np.testing.assert_allclose(c.grad(q)[:, 0], np.cos(q[:, 0]), atol=1e-4)


@settings(max_examples=25, deadline=None)
@given(
    x=st.floats(-1.5, 1.5),
    y=st.floats(-1.5, 1.5),
    xi1=st.floats(-1.5, 1.5),
    xi2=st.floats(-1.5, 1.5),
)
def test_symbol_even_in_momentum(x, y, xi1, xi2):
    m = make_model("double_well_2d")
    a = m.value(np.array([[x, y, xi1, xi2]]))[0]
    b = m.value(np.array([[x, y, -xi1, -xi2]]))[0]
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

"""Hamiltonian flow invariants and oscillatory-integral diagnostics."""

import numpy as np
import pytest
from scipy.integrate import quad

from weyllab.dynamics import (
    bump_amplitude,
    check_displacement_bounds,
    integrate_flow,
    nonstationary_decay_check,
    oscillatory_integral,
    regularized_model,
    ring_amplitude,
)
from weyllab.mollify import build_mollifier
from weyllab.symbols import make_model


@pytest.fixture(scope="module")
def harmonic():
    return make_model("harmonic")


@pytest.fixture(scope="module")
def double_well():
    return make_model("double_well_2d")


def test_harmonic_rotation(harmonic):
    # x^2 + xi^2 rotates phase space at angular speed 2
    traj = integrate_flow(harmonic, [1.0, 0.0], np.pi / 2,
                          times=[0.0, np.pi / 2])
    np.testing.assert_allclose(traj.state_at(np.pi / 2), [-1.0, 0.0],
                               atol=1e-8)
    np.testing.assert_array_equal(traj.state_at(0.0), [1.0, 0.0])


def test_energy_conservation(double_well):
    traj = integrate_flow(double_well, [0.8, 0.2, 0.3, -0.1], 2.0,
                          times=np.linspace(0, 2, 21))
    assert traj.energy_drift <= 1e-8


def test_group_law(harmonic):
    v0 = np.array([0.7, -0.4])
    t1, t2 = 0.3, 0.45
    direct = integrate_flow(harmonic, v0, t1 + t2,
                            times=[t1 + t2]).state_at(t1 + t2)
    mid = integrate_flow(harmonic, v0, t1, times=[t1]).state_at(t1)
    chained = integrate_flow(harmonic, mid, t2, times=[t2]).state_at(t2)
    np.testing.assert_allclose(direct, chained, atol=1e-7)


def test_reversibility(double_well):
    v0 = np.array([0.6, 0.1, -0.2, 0.4])
    fwd = integrate_flow(double_well, v0, 0.8, times=[0.8]).state_at(0.8)
    back = integrate_flow(double_well, fwd, -0.8, times=[-0.8]).state_at(-0.8)
    np.testing.assert_allclose(back, v0, atol=1e-7)


def test_symplectic_volume(harmonic):
    # determinant of the flow Jacobian is 1 (finite-difference Jacobian)
    t, eps = 0.5, 1e-6
    v0 = np.array([0.6, 0.3])

    def flow(v):
        return integrate_flow(harmonic, v, t, times=[t]).state_at(t)

    jac = np.array(
        [(flow(v0 + eps * e) - flow(v0 - eps * e)) / (2 * eps)
         for e in np.eye(2)]
    ).T
    assert np.linalg.det(jac) == pytest.approx(1.0, abs=1e-4)


def test_displacement_bounds_clean(harmonic):
    rep = check_displacement_bounds(
        harmonic, n_samples=25, t_grid=[-0.1, -0.05, 0.05, 0.1],
        cbar=0.5, delta0=0.41, h=0.05, seed=2,
    )
    assert rep.ok
    assert rep.empirical_t0 == pytest.approx(0.1)
    # rotation chord: |flow_t(v) - v| = |t grad| sin(t)/t <= |t grad|
    assert 0.9 <= rep.c1 <= 1.0 + 1e-9
    assert 0.9 <= rep.c2 <= 1.0 + 1e-9


def test_displacement_with_regularized_flow(double_well):
    kernel = build_mollifier(2, 1.0)
    reg = regularized_model(double_well, kernel, 0.05, 0.41)
    rep = check_displacement_bounds(
        double_well, n_samples=8, t_grid=[-0.1, 0.1], cbar=0.5,
        delta0=0.41, h=0.05, flow_model=reg, seed=1,
    )
    assert rep.ok
    assert rep.gradient_discrepancy < 1e-3


def test_oscillatory_t_zero_radial_oracle(harmonic):
    amp = ring_amplitude([0.0, 0.0], 0.5, 1.5)
    h = 0.01
    res = oscillatory_integral(harmonic, amp, 0.0, h,
                               support_box=[(-1.6, 1.6)] * 2, min_panels=16)
    ref = 2 * np.pi * quad(
        lambda r: amp(np.array([[r, 0.0]]))[0] * r, 0.4, 1.6, limit=200
    )[0] / (2 * np.pi * h)
    assert res.value.imag == pytest.approx(0.0, abs=1e-10)
    assert res.value.real == pytest.approx(ref, rel=1e-6)


def test_oscillatory_conjugation(harmonic):
    amp = ring_amplitude([0.0, 0.0], 0.5, 1.5)
    box = [(-1.6, 1.6)] * 2
    plus = oscillatory_integral(harmonic, amp, 0.3, 0.01, support_box=box)
    minus = oscillatory_integral(harmonic, amp, -0.3, 0.01, support_box=box)
    assert plus.value == pytest.approx(np.conj(minus.value), abs=1e-8)
    assert plus.reliable
    assert plus.quadrature_error < 1e-6 * max(abs(plus.value), 1.0)


def test_oscillatory_triangle_bound(harmonic):
    # |J| <= (2 pi h)^(-d) * integral of |b|, the t = 0 value
    amp = bump_amplitude([0.0, 0.0], 0.8)
    box = [(-0.9, 0.9)] * 2
    at0 = oscillatory_integral(harmonic, amp, 0.0, 0.02, support_box=box,
                               min_panels=16)
    osc = oscillatory_integral(harmonic, amp, 0.5, 0.02, support_box=box)
    assert abs(osc.value) <= at0.value.real * (1 + 1e-9)


def test_decay_requires_admissible_mu(harmonic):
    with pytest.raises(ValueError):
        nonstationary_decay_check(
            harmonic, lambda h: bump_amplitude([0, 0], 0.5), mu=0.6,
            n_max=2, h_grid=[0.01] * 4, delta0=0.25,
        )

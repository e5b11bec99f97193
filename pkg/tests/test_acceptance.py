"""End-to-end acceptance criteria.

Each test prints one PASS/FAIL line with its measured quantities.  The
asymptotic counting statements concern the h -> 0 limit; the finite-h
surrogates here are fitted exponents and bounded ratios over the sampled
h range, with tolerances stated inline.
"""

import math

import numpy as np
import pytest

from weyllab.cli import _edge_zone_halfwidth
from weyllab.dynamics import (
    bump_amplitude,
    check_displacement_bounds,
    integrate_flow,
    nonstationary_decay_check,
    ring_amplitude,
)
from weyllab.harness import (
    bracketing_check,
    fit_exponent,
    log_corrected_ratio_fit,
    run_h_sweep,
    sweep_csv_text,
)
from weyllab.mollify import (
    EXACT_ANNIHILATION,
    build_mollifier,
    fit_smoothing_exponents,
    holder_test_field,
)
from weyllab.operators import (
    GridSpec,
    assemble,
    build_mollified_counter,
    eigenvalues_below,
    smoothed_count,
)
from weyllab.phasevol import near_critical_volume, verify_sublevel_lemma
from weyllab.symbols import make_model

# five geometric points with ratio sqrt(2): 0.1, 0.0707, 0.05, 0.0354, 0.025
# (the exact sequence, not its 2-significant-figure rounding: the lattice
# remainder of the separable model is a sawtooth in 1/(2h), and rounding
# 0.0354 -> 0.035 lands in a sawtooth dip that corrupts the exponent fit)
H_GRID = list(np.geomspace(0.1, 0.025, 5))


def _report(criterion: str, ok: bool, detail: str) -> bool:
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} — {detail}")
    return ok


@pytest.fixture(scope="module")
def kernel2():
    return build_mollifier(2, 1.0)


@pytest.fixture(scope="module")
def baseline_sweep():
    model = make_model("separable_harmonic_2d")
    return run_h_sweep(
        model, 1.0, H_GRID, delta0=0.41, max_grid_points=640,
        volume_budget=2**20, seed=0,
    )


@pytest.fixture(scope="module")
def critical_sweep(kernel2):
    # the minus-shifted regularized operator: its count deviation is
    # sign-definite at the h^(1-d) scale the sharp bound controls, so the
    # ratio is flat; the raw operator satisfies the bound with extra room
    # (its deviation is an O(1) oscillation) but its ratio then decays
    model = make_model("double_well_2d")
    return run_h_sweep(
        model, 1.0, H_GRID, delta0=0.41, variant="minus", kernel=kernel2,
        max_grid_points=300, volume_budget=2**20, seed=0,
    )


def test_criterion_1_noncritical_weyl_law(baseline_sweep):
    res = baseline_sweep
    assert res.complete, res.gaps
    fit = fit_exponent(res.records, "remainder")
    c_exact = math.pi**2 / 2
    vol_ok = abs(res.volume.value - c_exact) <= 3 * res.volume.std_error
    slope_ok = abs(fit.slope - (-1.0)) <= 0.2
    ok = _report(
        "1 (non-critical Weyl law)",
        slope_ok and vol_ok,
        f"|N - Weyl| slope {fit.slope:.3f} vs -1 +- 0.2; "
        f"c_E {res.volume.value:.5f} vs pi^2/2 = {c_exact:.5f} "
        f"within 3 se = {3 * res.volume.std_error:.1e}",
    )
    assert ok


def test_criterion_2_critical_sharp_remainder(critical_sweep):
    res = critical_sweep
    assert res.complete, res.gaps
    fit = fit_exponent(res.records, "ratio")
    alt = log_corrected_ratio_fit(res.records)
    ok = _report(
        "2 (critical-energy sharp remainder)",
        abs(fit.slope) <= 0.25,
        f"ratio |N - Weyl| h^2 / R bounded by {res.max_ratio:.4f}, "
        f"slope {fit.slope:.3f} within 0 +- 0.25 "
        f"(log-corrected alternative {alt.slope:.3f})",
    )
    assert ok


def test_criterion_3_bracketing(kernel2):
    rows = []
    rows += bracketing_check(
        make_model("separable_harmonic_2d"), 1.0, H_GRID,
        delta0=0.41, kernel=kernel2, max_grid_points=640,
    )
    rows += bracketing_check(
        make_model("double_well_2d"), 1.0, H_GRID,
        delta0=0.41, kernel=kernel2, max_grid_points=300,
    )
    bad = [r for r in rows if not r.ok]
    ok = _report(
        "3 (bracketing)",
        not bad,
        f"count(M+) <= count(raw) <= count(M-) at {len(rows)} (model, h) "
        f"pairs, {len(bad)} violations",
    )
    assert ok


def test_criterion_4_mollifier_rates():
    r0, delta0 = 0.5, 0.41
    a = holder_test_field(r0)
    kernel = build_mollifier(1, 1.0)
    defects = max(abs(v) for v in kernel.moment_defects.values())
    h_grid = np.geomspace(0.1, 0.01, 6)
    slopes, targets = [], []
    for order in range(4):
        got = fit_smoothing_exponents(a, order, h_grid, delta0,
                                      kernel=kernel, r0=r0)
        assert got != EXACT_ANNIHILATION
        slopes.append(got[0].slope)
        targets.append((2.0 + r0 - order) * delta0)
    errs = [abs(s - t) for s, t in zip(slopes, targets)]
    ok = _report(
        "4 (mollifier rates)",
        max(errs) <= 0.2 and defects <= 1e-10,
        f"slopes {[f'{s:.3f}' for s in slopes]} vs "
        f"{[f'{t:.3f}' for t in targets]} +- 0.2; "
        f"moment defects {defects:.1e} <= 1e-10",
    )
    assert ok


def test_criterion_5_near_critical_volume():
    model = make_model("double_well_2d")
    delta0 = 0.4
    hs = np.geomspace(0.1, 0.02, 6)
    vols = [near_critical_volume(model, h, delta0, cbar=1.5,
                                 energy=1.0).value for h in hs]
    from weyllab._fitting import fit_loglog

    fit = fit_loglog(hs, vols)
    ok = _report(
        "5 (near-critical volume)",
        fit.slope >= 3 * delta0 - 0.15,
        f"volume exponent {fit.slope:.3f} >= 3 delta0 - 0.15 = "
        f"{3 * delta0 - 0.15:.2f} (so the tube is o(h))",
    )
    assert ok


def test_criterion_6_polynomial_sublevel():
    rep = verify_sublevel_lemma(
        random_seed=0, trials=200, m_max=5,
        h_grid=(1e-1, 1e-2, 1e-3, 1e-4), delta0=0.4,
    )
    ok = _report(
        "6 (polynomial sublevel bound)",
        rep.ok and rep.trials == 200,
        f"{rep.trials} polynomials, degrees 1-5, "
        f"{len(rep.violations)} violations of measure <= C_m h^(delta0/m) "
        f"with C_m calibrated at h = 0.1 (max ratio {rep.max_ratio:.3f})",
    )
    assert ok


def test_criterion_7_flow_bounds():
    model = make_model("double_well_2d")
    rep = check_displacement_bounds(
        model, n_samples=100, t_grid=[-0.1, -0.05, 0.05, 0.1],
        cbar=0.5, delta0=0.41, h=0.05, seed=0,
    )
    # group law and symplectic volume at stated tolerances
    v0 = np.array([0.7, 0.1, -0.3, 0.2])
    direct = integrate_flow(model, v0, 0.1, times=[0.1]).state_at(0.1)
    mid = integrate_flow(model, v0, 0.04, times=[0.04]).state_at(0.04)
    chained = integrate_flow(model, mid, 0.06, times=[0.06]).state_at(0.06)
    group_err = float(np.abs(direct - chained).max())
    eps = 1e-6
    jac = np.array(
        [(integrate_flow(model, v0 + eps * e, 0.1,
                         times=[0.1]).state_at(0.1)
          - integrate_flow(model, v0 - eps * e, 0.1,
                           times=[0.1]).state_at(0.1)) / (2 * eps)
         for e in np.eye(4)]
    ).T
    det_err = abs(np.linalg.det(jac) - 1.0)
    ok = _report(
        "7 (flow displacement bounds)",
        rep.ok and rep.n_samples == 100 and group_err <= 1e-7
        and det_err <= 1e-4,
        f"{len(rep.violations)} violations of the lower displacement bound "
        f"on 100 samples at t0 = 0.1; fitted C1 = {rep.c1:.3f}, "
        f"C2 = {rep.c2:.3f}; group law {group_err:.1e} <= 1e-7, "
        f"|det - 1| {det_err:.1e} <= 1e-4",
    )
    assert ok


def test_criterion_8_oscillatory_decay():
    model = make_model("harmonic")
    hs = np.geomspace(1e-2, 1e-3, 6)
    decay = nonstationary_decay_check(
        model, lambda h: ring_amplitude([0.0, 0.0], 0.5, 1.5),
        mu=0.8, n_max=3, h_grid=hs, delta0=0.25,
        support_box=[(-1.6, 1.6)] * 2,
    )
    control = nonstationary_decay_check(
        model, lambda h: bump_amplitude([0.0, 0.0], 0.8),
        mu=0.8, n_max=3, h_grid=hs, delta0=0.25,
        support_box=[(-0.9, 0.9)] * 2,
    )
    ok = _report(
        "8 (oscillatory decay)",
        decay.all_orders_ok and not control.satisfied[1],
        f"off-critical slope {decay.fit.slope:.3f} >= n kappa for "
        f"n <= 3 (kappa = {decay.kappa:.3f}); amplitude across the "
        f"critical point slope {control.fit.slope:.3f} shows no decay",
    )
    assert ok


def test_criterion_9_smoothed_counting():
    model = make_model("harmonic")
    window = (0.2, 0.8)
    rows, all_ok = [], True
    for h in (0.05, 0.035, 0.025):
        counter = build_mollified_counter(1.0, h, window)
        lam_probe = np.linspace(-1.5, 1.5, 20001)
        positive = bool(np.all(counter.gamma_tilde(lam_probe) >= 0))
        mass_ok = counter.mass_defect <= 1e-8
        op = assemble(model, None, h, 0.41, GridSpec(2.0, 1200),
                      strict_resolution=False)
        slc = eigenvalues_below(op, counter.coverage_level(), 0.0)
        lam = slc.eigenvalues
        sharp = int(np.sum((lam >= window[0]) & (lam <= window[1])))
        smooth = smoothed_count(slc, counter)
        zone = _edge_zone_halfwidth(counter)
        in_zone = int(np.sum((np.abs(lam - window[0]) <= zone)
                             | (np.abs(lam - window[1]) <= zone)))
        gap_ok = abs(smooth - sharp) <= in_zone
        all_ok = all_ok and positive and mass_ok and gap_ok
        rows.append(f"h={h}: |{smooth:.2f} - {sharp}| <= {in_zone}")
    ok = _report(
        "9 (smoothed counting)",
        all_ok,
        "gamma_tilde >= 0, mass defect <= 1e-8; gap within the "
        "calibrated O(h) edge zones: " + "; ".join(rows),
    )
    assert ok


def test_criterion_10_determinism(baseline_sweep, critical_sweep, kernel2):
    base2 = run_h_sweep(
        make_model("separable_harmonic_2d"), 1.0, H_GRID, delta0=0.41,
        max_grid_points=640, volume_budget=2**20, seed=0,
    )
    crit2 = run_h_sweep(
        make_model("double_well_2d"), 1.0, H_GRID, delta0=0.41,
        variant="minus", kernel=kernel2, max_grid_points=300,
        volume_budget=2**20, seed=0,
    )
    def sublevel_bytes():
        rep = verify_sublevel_lemma(random_seed=0, trials=200, delta0=0.4)
        lines = ["degree,calibrated_constant"]
        lines += [f"{d},{rep.constants[d]!r}" for d in sorted(rep.constants)]
        return ("\n".join(lines) + "\n").encode()

    same1 = sweep_csv_text(base2) == sweep_csv_text(baseline_sweep)
    same2 = sweep_csv_text(crit2) == sweep_csv_text(critical_sweep)
    same6 = sublevel_bytes() == sublevel_bytes()
    ok = _report(
        "10 (determinism)",
        same1 and same2 and same6,
        f"re-running criteria 1, 2, 6 with fixed seeds reproduces "
        f"identical bytes: {same1}, {same2}, {same6}",
    )
    assert ok

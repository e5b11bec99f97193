"""Sweep orchestration, exponent fits, and verdict reports."""

import numpy as np
import pytest

from weyllab._fitting import fit_loglog
from weyllab.harness import (
    SweepRecord,
    acceptance_report,
    check_hypotheses,
    fit_exponent,
    log_corrected_ratio_fit,
    run_h_sweep,
    sweep_csv_text,
)
from weyllab.symbols import make_model


def _record(h, count, weyl, r_value, **kw):
    rem = count - weyl
    return SweepRecord(
        h=h, energy=1.0, count=count, weyl=weyl, weyl_std_error=0.0,
        remainder=rem, r_value=r_value, ratio=abs(rem) * h**2 / r_value,
        grid_points=100, seed=0, **kw,
    )


def test_record_invariants():
    with pytest.raises(ValueError):
        _record(0.1, 10, 9.0, 0.01)  # r_value below its h floor


def test_fit_loglog_exact_power():
    hs = [0.1, 0.05, 0.025, 0.0125]
    ys = [3.0 * h**1.7 for h in hs]
    fit = fit_loglog(hs, ys)
    assert fit.slope == pytest.approx(1.7, abs=1e-12)
    assert fit.n_points == 4
    assert np.isfinite(fit.ci_halfwidth)


def test_fit_loglog_excludes_nonpositive():
    fit = fit_loglog([0.1, 0.05, 0.025, 0.0125, 0.00625],
                     [0.1, 0.05, 0.0, 0.0125, 0.00625])
    assert fit.excluded == 1
    assert fit.n_points == 4


def test_fit_loglog_deterministic_permutation():
    hs = [0.1, 0.07, 0.05, 0.035, 0.025]
    ys = [1.1, 0.8, 0.53, 0.36, 0.27]
    a = fit_loglog(hs, ys)
    b = fit_loglog(hs[::-1], ys[::-1])
    assert a.slope == b.slope  # exact rational normal equations


def test_fit_exponent_selectors():
    recs = [_record(h, int(1 / h**2), 1 / h**2 + 1 / h, 10 * h)
            for h in (0.1, 0.07, 0.05, 0.035, 0.025)]
    assert fit_exponent(recs, "r_value").slope == pytest.approx(1.0, abs=1e-9)
    assert fit_exponent(recs, "remainder").slope == pytest.approx(-1.0,
                                                                  abs=0.1)
    log_corrected_ratio_fit(recs)  # smoke: defined and finite


def test_empty_h_grid():
    m = make_model("separable_harmonic_2d")
    res = run_h_sweep(m, 1.0, [], delta0=0.41, volume_budget=2**16)
    assert res.records == ()
    assert res.complete


def test_sweep_counts_match_tensor_oracle():
    m = make_model("separable_harmonic_2d")
    res = run_h_sweep(m, 1.0, [0.1, 0.071], delta0=0.41,
                      max_grid_points=400, volume_budget=2**18)
    for rec in res.records:
        # levels 2h(i+j+1); ties at exactly 1 count (finite differences
        # shift every level down by O(dx^2))
        levels = [2 * rec.h * (i + j + 1)
                  for i in range(60) for j in range(60)]
        oracle = sum(1 for lam in levels if lam <= 1.0 + 1e-12)
        assert abs(rec.count - oracle) <= 2


def test_sweep_gap_on_fault():
    # an h far below grid resolution still counts, but an impossible energy
    # aborts only its own sample
    m = make_model("separable_harmonic_2d")
    res = run_h_sweep(m, 1.0, [0.1, float("nan")], delta0=0.41,
                      max_grid_points=200, volume_budget=2**16)
    assert len(res.records) == 1
    assert len(res.gaps) == 1


def test_check_hypotheses_flags_d1():
    assert check_hypotheses(make_model("harmonic"), 1.0) != []
    assert check_hypotheses(make_model("double_well_2d"), 1.0) == []


def test_out_of_scope_requires_flag():
    m = make_model("harmonic")
    with pytest.raises(ValueError):
        run_h_sweep(m, 1.0, [0.1], delta0=0.41)
    res = run_h_sweep(m, 1.0, [0.1], delta0=0.41, out_of_scope_ok=True,
                      volume_budget=2**16)
    assert len(res.records) == 1


def test_csv_deterministic():
    m = make_model("separable_harmonic_2d")
    kw = dict(delta0=0.41, max_grid_points=200, volume_budget=2**16, seed=3)
    a = sweep_csv_text(run_h_sweep(m, 1.0, [0.1, 0.08], **kw))
    b = sweep_csv_text(run_h_sweep(m, 1.0, [0.1, 0.08], **kw))
    assert a == b
    assert a.startswith("h,energy,count,")


def test_acceptance_report_verdicts():
    rep = acceptance_report([{"name": "a", "status": "pass"}])
    assert rep["verdict"] == "PASS"
    assert rep["schema_version"] == 1
    rep = acceptance_report([{"name": "a", "status": "pass"},
                             {"name": "b", "status": "partial"}])
    assert rep["verdict"] == "PARTIAL"
    rep = acceptance_report([{"name": "a", "status": "fail"},
                             {"name": "b", "status": "partial"}])
    assert rep["verdict"] == "FAIL"
    with pytest.raises(ValueError):
        acceptance_report([{"name": "a", "status": "maybe"}])

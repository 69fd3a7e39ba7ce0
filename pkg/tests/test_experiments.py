import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npeg.dynamics import p_max
from npeg.effective import EffectiveModel, build_effective_model, j_eff_closed_form
from npeg.experiments import (
    ScanRecord,
    SweepSpec,
    compare_full_vs_effective,
    compensation_scan,
    default_delta_tbm,
    fisher_map,
    resolvability_study,
    robustness_traces,
    run_sweep,
    scaling_study,
    time_cost_breakdown,
    time_cost_ratio,
    time_cost_record,
    width_at_fraction,
)
from npeg.fisher import cfi_gamma_optimal_params, precision_report, qfi_effective
from npeg.fock import ModelParams
from oracles import time_cost_by_root

BASE = ModelParams.from_ratio(4, 1.0, 20.0)


def test_compensation_zero_total_detuning_row():
    for n in (1, 2, 4):
        params = ModelParams.from_ratio(n, 1.0, 20.0)
        tbm = default_delta_tbm(params)
        scan = compensation_scan(params, tbm, [-2 * tbm, -tbm, 0.0])
        assert scan.column("delta0")[1] == 0.0
        assert scan.column("p_max")[1] == 0.5
        assert scan.column("gamma")[2] == pytest.approx(0.5, rel=1e-12)


def test_compensation_scan_rejects_non_monotone_values():
    with pytest.raises(ValueError, match="monotone"):
        compensation_scan(BASE, 1e-7, [0.0, 1.0, 0.5])


def test_compensation_sign_convention():
    tbm = default_delta_tbm(BASE)
    plus = compensation_scan(BASE, tbm, [tbm], cmp_sign=1.0)
    minus = compensation_scan(BASE, tbm, [tbm], cmp_sign=-1.0)
    assert plus.column("delta0")[0] == pytest.approx(2 * tbm)
    assert minus.column("delta0")[0] == 0.0


def test_resolvability_gap_grows_with_probe_number():
    rec = resolvability_study()
    gaps = [rec.summary["max_gap"][str(n)] for n in (2, 3, 4)]
    at_zero = [rec.summary["gap_at_gamma0"][str(n)] for n in (2, 3, 4)]
    assert gaps[0] < gaps[1] < gaps[2]
    assert at_zero[0] < at_zero[1] < at_zero[2]
    assert gaps[2] > 100 * gaps[0]


def test_gap_slope_at_zero_detuning():
    # the gap at Gamma = 0 is first order in the shift: slope of P_max there is 1/2
    tbm = 1e-9
    rec = resolvability_study((2,), gamma_values=np.array([-0.1, 0.0, 0.1]), delta_tbm=tbm)
    j = j_eff_closed_form(ModelParams.from_ratio(2, 1.0, 20.0))
    shift = 2 * 1e-4 * tbm / j
    assert rec.summary["gap_at_gamma0"]["2"] == pytest.approx(0.5 * shift, rel=1e-4)


@pytest.fixture(scope="module")
def plus_map():
    model = build_effective_model(BASE)
    return model, fisher_map(model, np.linspace(-4, 4, 81), np.linspace(0.05, 2 * math.pi - 0.05, 81))


def test_fisher_map_peak(plus_map):
    model, rec = plus_map
    assert rec.summary["argmax_gamma"] == 0.0
    assert rec.summary["argmax_omega_t"] == pytest.approx(math.pi, abs=1e-12)
    assert rec.summary["max_f_c_scaled"] == pytest.approx(1.0, rel=1e-12)
    assert len(rec) == 81 * 81


def test_fisher_map_is_even_in_gamma(plus_map):
    model, _ = plus_map
    gammas = np.arange(-40, 41) / 10.0  # exact sign mirror, unlike linspace
    rec = fisher_map(model, gammas, np.linspace(0.05, 2 * math.pi - 0.05, 81))
    grid = rec.column("f_c").reshape(81, 81)
    np.testing.assert_array_equal(grid, grid[::-1])


def test_fisher_map_value_at_full_transfer_neighbourhood():
    model = EffectiveModel.from_gamma(1e-3, 0.0)
    rec = fisher_map(model, [2.0 - 1e-3, 2.0 + 1e-3], [math.pi])
    for g, val in zip(rec.column("gamma"), rec.column("f_c_scaled")):
        expected = cfi_gamma_optimal_params(model.with_gamma(g)) * model.j_eff**2
        assert val == pytest.approx(expected, rel=1e-6)
        assert val == pytest.approx(0.25, rel=1e-2)


def test_robustness_traces():
    model = EffectiveModel.from_gamma(0.01, 0.0)
    thetas = [0.1 * math.pi, 0.2 * math.pi, 0.3 * math.pi, 0.5 * math.pi]
    rec = robustness_traces(model, thetas, np.linspace(0.05, 2 * math.pi - 0.05, 201))
    widths = [rec.summary["width_90"][repr(t)] for t in thetas]
    assert all(a < b for a, b in zip(widths, widths[1:]))
    assert max(widths) == widths[-1]
    for t in thetas:
        assert rec.summary["peak_scaled"][repr(t)] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.isfinite(rec.column("f_c")))


def test_width_vanishes_toward_the_pole():
    model = EffectiveModel.from_gamma(1.0, 0.0)
    widths = [width_at_fraction(model, t) for t in (1e-1, 1e-2, 1e-3)]
    assert widths[0] > widths[1] > widths[2]
    assert widths[2] < 1e-2


def test_robustness_rejects_poles_and_detuning():
    model = EffectiveModel.from_gamma(1.0, 0.0)
    with pytest.raises(ValueError):
        robustness_traces(model, [0.0], [1.0])
    with pytest.raises(ValueError):
        robustness_traces(model, [math.pi], [1.0])
    with pytest.raises(ValueError):
        robustness_traces(model.with_gamma(0.5), [1.0], [1.0])


def test_compare_single_boson_is_exact():
    rec = compare_full_vs_effective(ModelParams.from_ratio(1, 1.0, 20.0))
    assert rec.summary["max_f_c_rel_dev"] < 1e-8
    assert rec.summary["max_f_q_rel_dev"] < 1e-8


def test_compare_four_bosons_at_zero_detuning():
    rec = compare_full_vs_effective(BASE, [0.0])
    assert rec.column("f_c_rel_dev")[0] < 0.05
    assert rec.column("f_q_rel_dev")[0] < 0.05


def test_compare_deviation_grows_as_d_decreases():
    devs = []
    for d in (20.0, 10.0, 5.0):
        rec = compare_full_vs_effective(ModelParams.from_ratio(4, 1.0, d), [0.0])
        devs.append(max(rec.column("f_c_rel_dev")[0], rec.column("f_q_rel_dev")[0]))
    assert devs[0] < devs[1] < devs[2]


def test_compare_parallel_matches_serial():
    params = ModelParams.from_ratio(3, 1.0, 20.0)
    gammas = [-1.0, 0.0, 0.5, 3.0]
    serial = compare_full_vs_effective(params, gammas)
    threaded = compare_full_vs_effective(params, gammas, max_workers=3)
    assert serial.rows == threaded.rows


def test_scaling_study():
    rec = scaling_study(1.0, 20.0, range(1, 9))
    prec = rec.column("delta_delta0")
    assert prec[0] == pytest.approx(1 / 20.0, rel=1e-15)
    assert prec[3] == pytest.approx(1.0417e-6, rel=1e-4)
    ratios = prec[:-1] / prec[1:]
    np.testing.assert_allclose(ratios, 20.0 * np.arange(1, 8), rtol=1e-9)
    assert rec.summary["fit_slope"] == pytest.approx(rec.summary["expected_slope"], rel=1e-9)
    assert rec.summary["fit_intercept"] == pytest.approx(rec.summary["expected_intercept"], abs=1e-9)
    for n, j_eff, f_opt, p in rec.rows:
        assert p == precision_report(f_opt, int(n)).delta0_uncertainty
    with pytest.raises(ValueError):
        scaling_study(1.0, 20.0, [13])


@pytest.mark.parametrize("n, d, expected", [(1, 20.0, 1.0), (2, 10.0, 0.1), (4, 20.0, 1 / 48000)])
def test_time_cost_examples(n, d, expected):
    assert time_cost_ratio(n, d) == pytest.approx(expected, rel=1e-15)
    ref, _ = time_cost_by_root(n, d)
    assert time_cost_ratio(n, d) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(2, 100), st.floats(0.1, 100))
def test_time_cost_identity_and_breakdown(n, d, m1):
    r = time_cost_ratio(n, d)
    assert r * math.factorial(n - 1) * d ** (n - 1) == pytest.approx(1.0, rel=1e-12)
    b = time_cost_breakdown(n, d, m1)
    assert b.delta1 == pytest.approx(b.delta2, rel=1e-12)
    assert b.ratio == pytest.approx(r, rel=1e-12)


def test_time_cost_rejects_bad_input():
    with pytest.raises(ValueError):
        time_cost_ratio(0, 10.0)
    with pytest.raises(ValueError):
        time_cost_ratio(2, -1.0)


def test_time_cost_record():
    rec = time_cost_record(4, 20.0)
    assert rec.columns[:3] == ("N", "D", "ratio")
    assert rec.column("ratio")[0] == pytest.approx(2.0833e-5, rel=1e-4)


def test_sweep_over_total_detuning():
    values = np.linspace(-4, 4, 9) * j_eff_closed_form(BASE)
    rec = run_sweep(SweepSpec(BASE, "delta_big", values, ("p_max", "f_c", "f_q")))
    assert rec.columns == ("delta_big", "p_max", "f_c", "f_q")
    mid = rec.rows[4]
    assert mid[1] == 0.5
    model = build_effective_model(BASE)
    assert mid[2] == pytest.approx(1 / model.j_eff**2, rel=1e-12)
    for row in rec.rows:
        m = build_effective_model(BASE.replace(delta0=row[0] / 4))
        assert row[1] == pytest.approx(p_max(m))
        assert row[3] == pytest.approx(qfi_effective(m), rel=1e-10)


def test_sweep_over_probe_number_and_precision():
    rec = run_sweep(SweepSpec(ModelParams.from_ratio(1, 1.0, 20.0), "n_bosons", [1, 2, 3],
                              ("precision", "time_ratio")))
    np.testing.assert_allclose(rec.column("precision"), [1 / 20, 1 / 400, 1 / 16000], rtol=1e-12)
    np.testing.assert_allclose(rec.column("time_ratio"), [1.0, 1 / 20, 1 / 800], rtol=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(swept_quantity="hbar", sweep_values=[1.0]),
    dict(swept_quantity="theta", sweep_values=[]),
    dict(swept_quantity="theta", sweep_values=[1.0, 0.5, 2.0]),
    dict(swept_quantity="theta", sweep_values=[1.0], outputs_requested=("entropy",)),
])
def test_sweep_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SweepSpec(BASE, **kwargs)


def test_scan_records_are_reproducible():
    spec = SweepSpec(BASE, "omega_t", np.linspace(0.1, 6.0, 13), ("f_c", "f_q"))
    assert run_sweep(spec).rows == run_sweep(spec).rows
    assert resolvability_study().rows == resolvability_study().rows


def test_scan_record_shape_check():
    with pytest.raises(ValueError):
        ScanRecord("x", ("a", "b"), [(1.0,)])

import csv
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfsmooth.analysis import (
    MethodSummary,
    VarianceReport,
    autocovariance,
    efficiency,
    efficiency_ratio_summary,
    estimator_variance,
    j_opt,
    recommend_j,
    tavc,
    variance_report,
    within_cloud_variance,
    write_report_csv,
)

positive = st.floats(1e-3, 1e3, allow_nan=False)


def _ar1(phi, R, rng, reps=None):
    shape = (R,) if reps is None else (reps, R)
    e = rng.standard_normal(shape)
    x = np.empty(shape)
    x[..., 0] = e[..., 0] / np.sqrt(1 - phi**2)
    for t in range(1, R):
        x[..., t] = phi * x[..., t - 1] + e[..., t]
    return x


# --------------------------------------------------------------------------
# within-cloud variance


def test_identical_trajectories_have_zero_variance():
    values = np.tile(np.arange(4.0), (10, 3, 1))
    np.testing.assert_array_equal(within_cloud_variance(values), 0.0)


def test_two_values_hand_case():
    values = np.zeros((5, 2, 3))
    values[:, 1, :] = 2.0
    assert within_cloud_variance(values, k=1) == 2.0


def test_within_variance_recovers_known_conditional_variance():
    rng = np.random.default_rng(0)
    R, J, v = 10_000, 5, 2.0
    centres = rng.standard_normal((R, 1, 1))
    values = centres + np.sqrt(v) * rng.standard_normal((R, J, 1))
    per_sweep = values.var(axis=1, ddof=1)[:, 0]
    se = per_sweep.std(ddof=1) / np.sqrt(R)
    assert abs(within_cloud_variance(values, k=0) - v) < 3 * se


def test_within_variance_needs_two_trajectories():
    with pytest.raises(ValueError):
        within_cloud_variance(np.zeros((4, 1, 3)))
    with pytest.raises(ValueError):
        within_cloud_variance(np.zeros((4, 3)))


# --------------------------------------------------------------------------
# TAVC


def test_autocovariance_uses_divisor_r():
    x = np.array([1.0, 2.0, 3.0, 6.0])
    d = x - x.mean()
    expected = [np.sum(d[: 4 - l] * d[l:]) / 4 for l in range(4)]
    np.testing.assert_allclose(autocovariance(x, 3), expected)


def test_tavc_of_constant_series_is_zero():
    assert tavc(np.full(500, 3.2)) == 0.0


def test_tavc_hand_case():
    # R = 4: lags below 2, i.e. lag 1 only
    x = np.array([1.0, 2.0, 3.0, 6.0])
    g = autocovariance(x, 1)
    assert tavc(x) == pytest.approx(g[0] + 2 * (1 - 1 / 4) * g[1])


def test_tavc_iid_normal():
    x = np.random.default_rng(1).standard_normal(100_000)
    assert tavc(x) == pytest.approx(1.0, rel=0.10)


def test_tavc_ar1():
    x = _ar1(0.5, 100_000, np.random.default_rng(2))
    assert tavc(x) == pytest.approx(4.0, rel=0.15)


def test_tavc_negative_estimate_is_floored(caplog):
    x = np.tile([1.0, -1.0], 50)
    with caplog.at_level(logging.WARNING, logger="pfsmooth.analysis"):
        assert tavc(x) == 0.0
    assert "floored" in caplog.text


def test_tavc_flags_a_linear_trend(caplog):
    with caplog.at_level(logging.WARNING, logger="pfsmooth.analysis"):
        tavc(np.arange(1000.0))
    assert "nonstationary" in caplog.text
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="pfsmooth.analysis"):
        tavc(np.random.default_rng(3).standard_normal(1000))
    assert caplog.text == ""


def test_tavc_needs_four_values():
    with pytest.raises(ValueError):
        tavc([1.0, 2.0, 3.0])


# --------------------------------------------------------------------------
# variance formula, optimal J, efficiency


def test_estimator_variance_hand_cases():
    assert estimator_variance(2.0, 1.0, 4, 100) == pytest.approx(0.015, abs=1e-17)
    assert estimator_variance(0.0, 1.0, 7, 100) == 0.01
    assert estimator_variance(3.0, 1.0, 1e12, 100) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        estimator_variance(1.0, 1.0, 0, 10)


def test_j_opt_hand_cases():
    assert j_opt(1.3, 1.3, 0.2, 0.2) == 1.0
    assert j_opt(4.0, 1.0, 1.0, 4.0) == 4.0
    np.testing.assert_allclose(j_opt([4.0, 1.0], [1.0, 1.0], 1.0, [4.0, 1.0]), [4.0, 1.0])
    for bad in [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, np.nan)]:
        with pytest.raises(ValueError):
            j_opt(*bad)


def test_recommended_j_from_geometric_mean():
    # 50 time points spanning 0.74 to 18.9 with geometric mean 6.98
    c = np.exp((50 * np.log(6.98) - np.log(0.74) - np.log(18.9)) / 48)
    j = np.concatenate([[0.74, 18.9], np.full(48, c)])
    assert np.exp(np.log(j).mean()) == pytest.approx(6.98)
    assert recommend_j(j) == 7
    assert recommend_j([0.2, 0.3]) == 1
    with pytest.raises(ValueError):
        recommend_j([np.nan, 0.0])


def test_efficiency_hand_cases():
    assert efficiency(0.01, 10.0) == pytest.approx(10.0)
    assert efficiency(0.005, 10.0) == pytest.approx(2 * efficiency(0.01, 10.0))
    with pytest.raises(ValueError):
        efficiency(0.0, 1.0)


@given(positive, positive, positive, positive, positive, positive)
def test_j_opt_scale_invariance(s2, s2inf, tbs, tpf, a, b):
    base = j_opt(s2, s2inf, tbs, tpf)
    assert j_opt(a * s2, a * s2inf, tbs, tpf) == pytest.approx(base, rel=1e-9)
    assert j_opt(s2, s2inf, b * tbs, b * tpf) == pytest.approx(base, rel=1e-9)


@given(st.floats(1e-3, 1e3), positive, st.integers(1, 1000), st.integers(1, 1000))
def test_estimator_variance_is_monotone(s2, s2inf, J, R):
    v = estimator_variance(s2, s2inf, J, R)
    assert estimator_variance(s2, s2inf, J + 1, R) < v
    assert estimator_variance(s2, s2inf, J, R + 1) < v


def test_variance_decomposition_on_synthetic_streams():
    rng = np.random.default_rng(4)
    reps, R, J, s2 = 400, 2000, 5, 3.0
    centre = _ar1(0.6, R, rng, reps)  # the Rao-Blackwellised stream
    draws = centre[..., None] + np.sqrt(s2) * rng.standard_normal((reps, R, J))
    bs = draws.mean(axis=2)
    empirical = bs.mean(axis=1).var(ddof=1) * R
    s2_hat = within_cloud_variance(draws[0][:, :, None], k=0)
    tavc_hat = tavc(centre[0])
    assert empirical == pytest.approx(s2_hat / J + tavc_hat, rel=0.25)


# --------------------------------------------------------------------------
# reports


def _synthetic_run(R=400, n1=3, seed=0):
    rng = np.random.default_rng(seed)
    bsm = _ar1(0.5, R, rng, n1).T
    wv = np.full((R, n1), 2.0) + 0.1 * rng.standard_normal((R, n1))
    series = {
        "gt": bsm + rng.standard_normal((R, n1)),
        "bs4": bsm + 0.5 * rng.standard_normal((R, n1)),
        "bsm": bsm,
    }
    tau = {"gt": np.full(R, 1e-4), "bs4": np.full(R, 4e-3), "bsm": np.full(R, 2e-2)}
    return series, {"bs4": wv}, np.full(R, 1e-2), tau


def test_variance_report_components():
    series, wv, tau_pf, tau = _synthetic_run()
    rep = variance_report(series, wv, tau_pf, tau)
    R = 400
    gt = rep.methods["gt"]
    np.testing.assert_allclose(gt.variance, [tavc(c) / R for c in series["gt"].T])
    assert gt.total_time == pytest.approx(400 * (1e-2 + 1e-4))
    bs = rep.methods["bs4"]
    t_bsm = np.array([tavc(c) for c in series["bsm"].T])
    np.testing.assert_allclose(bs.sigma_sq, wv["bs4"].mean(axis=0))
    np.testing.assert_allclose(bs.variance, (bs.sigma_sq / 4 + t_bsm) / R)
    assert rep.tau_bs["bs4"] == pytest.approx(1e-3)
    np.testing.assert_allclose(bs.j_opt, j_opt(bs.sigma_sq, t_bsm, 1e-3, 1e-2))
    assert rep.geometric_j("bs4") == recommend_j(bs.j_opt)
    assert rep.geometric_j("gt") is None
    np.testing.assert_allclose(bs.std_err, np.sqrt(bs.variance))


def test_variance_report_without_bsm_uses_own_tavc():
    series, wv, tau_pf, tau = _synthetic_run()
    del series["bsm"]
    rep = variance_report(series, wv, tau_pf, tau)
    np.testing.assert_allclose(rep.methods["bs4"].variance,
                               [tavc(c) / 400 for c in series["bs4"].T])


def test_efficiency_ratio_summary_hand_case():
    def method(label, var, t):
        return MethodSummary(label, np.zeros(3), np.zeros(3), np.asarray(var), t)

    rep = VarianceReport(R=10, tau_pf=1.0, methods={
        "a": method("a", [1.0, 1.0, 4.0], 1.0), "b": method("b", [2.0, 0.5, 4.0], 1.0)})
    s = efficiency_ratio_summary(rep, "a", "b")
    assert (s["min"], s["max"], s["n_gt_1"], s["n"]) == (0.5, 2.0, 1, 3)
    assert s["geomean"] == pytest.approx(1.0)


def test_report_csv_round_trip(tmp_path):
    rep = variance_report(*_synthetic_run())
    path = tmp_path / "report.csv"
    write_report_csv(rep, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    row = next(r for r in rows if r["method"] == "bs4" and r["k"] == "2")
    m = rep.methods["bs4"]
    assert float(row["std_err"]) == m.std_err[2]
    assert float(row["j_opt"]) == m.j_opt[2]
    assert float(row["efficiency"]) == m.efficiency[2]
    assert next(r for r in rows if r["method"] == "gt")["sigma_sq"] == ""

"""Variance, cost and efficiency analysis of Metropolised smoother output."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "within_cloud_variance",
    "autocovariance",
    "tavc",
    "estimator_variance",
    "j_opt",
    "recommend_j",
    "efficiency",
    "MethodSummary",
    "VarianceReport",
    "variance_report",
    "efficiency_ratio_summary",
    "write_report_csv",
]

logger = logging.getLogger(__name__)


def within_cloud_variance(values, k=None):
    """Mean over sweeps of the per-sweep unbiased sample variance.

    Parameters
    ----------
    values : array_like, shape (R, J, n + 1)
        ``h`` evaluated on ``J`` backward-sampled trajectories per sweep.
    k : int, optional
        Restrict to one time index; otherwise a vector over ``k``.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise ValueError("expected an (R, J, n + 1) array")
    if values.shape[1] < 2:
        raise ValueError("need at least two trajectories per sweep")
    per_sweep = values.var(axis=1, ddof=1).mean(axis=0)
    return float(per_sweep[k]) if k is not None else per_sweep


def autocovariance(x, max_lag):
    """Sample autocovariances ``gamma(0..max_lag)`` with divisor ``R``."""
    x = np.asarray(x, dtype=float)
    R = len(x)
    d = x - x.mean()
    nfft = 1 << (2 * R - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / R
    return acov


def _tavc_raw(x):
    R = len(x)
    m = math.ceil(math.sqrt(R)) - 1
    g = autocovariance(x, m)
    lags = np.arange(1, m + 1)
    return float(g[0] + 2.0 * np.sum((1.0 - lags / R) * g[1:]))


def tavc(series, check_stationarity: bool = True) -> float:
    """Time-average variance constant of a chain output series.

    Sums sample autocovariances over lags ``|l| < sqrt(R)`` with weights
    ``1 - |l| / R``.  Negative estimates are floored at zero with a
    warning.  When ``check_stationarity`` is set, a warning is logged if
    the means of the first and last quarters differ by more than five
    standard errors.
    """
    x = np.asarray(series, dtype=float)
    R = len(x)
    if R < 4:
        raise ValueError("need at least 4 values")
    value = _tavc_raw(x)
    if value < 0:
        logger.warning("negative TAVC estimate %.3g floored at zero", value)
        value = 0.0
    if check_stationarity and R >= 16:
        _check_trend(x)
    return value


def _check_trend(x) -> bool:
    q = len(x) // 4
    first, last = x[:q], x[-q:]
    se = math.sqrt(max(_tavc_raw(first), 0.0) / q + max(_tavc_raw(last), 0.0) / q)
    diff = abs(last.mean() - first.mean())
    if diff > 5.0 * se and diff > 0:
        logger.warning(
            "series looks nonstationary: quarter means differ by %.3g (%.1f s.e.)",
            diff, diff / se if se > 0 else np.inf)
        return True
    return False


def estimator_variance(sigma_sq, tavc_bsm, J, R):
    """Approximate variance ``(sigma^2 / J + sigma_inf^2) / R`` of a BS mean."""
    J = np.asarray(J, dtype=float)
    if np.any(J < 1) or np.any(np.asarray(R) < 1):
        raise ValueError("need J >= 1 and R >= 1")
    return (np.asarray(sigma_sq) / J + np.asarray(tavc_bsm)) / np.asarray(R, dtype=float)


def j_opt(sigma_sq, tavc_bsm, tau_bs, tau_pf):
    """Trajectory count minimising variance for a fixed computing budget."""
    args = [np.asarray(a, dtype=float) for a in (sigma_sq, tavc_bsm, tau_bs, tau_pf)]
    if any(np.any(~(a > 0)) for a in args):
        raise ValueError("j_opt needs strictly positive inputs")
    s2, s2inf, tbs, tpf = args
    out = np.sqrt((s2 / tbs) / (s2inf / tpf))
    return float(out) if out.ndim == 0 else out


def recommend_j(j_values) -> int:
    """Round the geometric mean of per-time optimal counts (at least 1)."""
    j = np.asarray(j_values, dtype=float)
    j = j[np.isfinite(j) & (j > 0)]
    if len(j) == 0:
        raise ValueError("no usable J values")
    return max(1, int(round(float(np.exp(np.mean(np.log(j)))))))


def efficiency(variance, total_time_s):
    """Inverse variance per second of computation."""
    v = np.asarray(variance, dtype=float)
    t = np.asarray(total_time_s, dtype=float)
    if np.any(~(v > 0)) or np.any(~(t > 0)):
        raise ValueError("efficiency needs positive variance and time")
    out = 1.0 / (v * t)
    return float(out) if out.ndim == 0 else out


@dataclass
class MethodSummary:
    method: str
    mean: np.ndarray
    tavc: np.ndarray
    variance: np.ndarray
    total_time: float
    sigma_sq: np.ndarray | None = None
    J: int | None = None
    j_opt: np.ndarray | None = None

    @property
    def std_err(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def efficiency(self) -> np.ndarray:
        if not self.total_time > 0:
            return np.full_like(self.variance, np.nan)
        with np.errstate(divide="ignore"):
            return 1.0 / (self.variance * self.total_time)


@dataclass
class VarianceReport:
    R: int
    tau_pf: float
    methods: dict = field(default_factory=dict)
    tau_bs: dict = field(default_factory=dict)

    def geometric_j(self, method) -> int | None:
        j = self.methods[method].j_opt
        if j is None or not np.any(np.isfinite(j) & (j > 0)):
            return None
        return recommend_j(j)


def _mode_J(label):
    return int(label[2:]) if label.startswith("bs") and label != "bsm" else None


def variance_report(series: dict, within_var: dict, tau_pf, tau: dict) -> VarianceReport:
    """Standard errors, efficiencies and trajectory-count recommendations.

    Parameters
    ----------
    series : dict
        Mode label -> ``(R, n + 1)`` per-sweep estimates.
    within_var : dict
        Backward-sampling label -> ``(R, n + 1)`` per-sweep sample variances.
    tau_pf : array_like
        Per-sweep filter times in seconds.
    tau : dict
        Mode label -> per-sweep extraction times in seconds.

    Backward-sampling variances use the backward-smoothing TAVC when a
    ``bsm`` series is present, and the TAVC of the ``J``-averaged series
    otherwise.  Total time of a method is the filter time plus its own
    extraction time, summed over sweeps.
    """
    tau_pf = np.asarray(tau_pf, dtype=float)
    R = len(tau_pf)
    report = VarianceReport(R=R, tau_pf=float(tau_pf.mean()) if R else np.nan)
    tavcs = {label: np.array([tavc(col) for col in np.asarray(s).T])
             for label, s in series.items()}
    for label, s in series.items():
        s = np.asarray(s, dtype=float)
        total = float(tau_pf.sum() + np.sum(tau[label]))
        J = _mode_J(label)
        if J is None:
            report.methods[label] = MethodSummary(label, s.mean(axis=0), tavcs[label],
                                                  tavcs[label] / R, total)
            continue
        wv = np.asarray(within_var.get(label), dtype=float) if label in within_var else None
        sigma_sq = wv.mean(axis=0) if wv is not None and J >= 2 else None
        if "bsm" in series and sigma_sq is not None:
            t_inf = tavcs["bsm"]
            var = estimator_variance(sigma_sq, t_inf, J, R)
        else:
            t_inf = tavcs[label]
            var = t_inf / R
        tau_traj = float(np.mean(tau[label])) / J
        report.tau_bs[label] = tau_traj
        jo = None
        if sigma_sq is not None and tau_traj > 0 and report.tau_pf > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                jo = np.sqrt((sigma_sq / tau_traj) / (t_inf / report.tau_pf))
        report.methods[label] = MethodSummary(label, s.mean(axis=0), t_inf, var, total,
                                              sigma_sq, J, jo)
    return report


def efficiency_ratio_summary(report: VarianceReport, a: str, b: str) -> dict:
    """Per-time efficiency of ``a`` over ``b``: min, max, geometric mean, count > 1."""
    ea, eb = report.methods[a].efficiency, report.methods[b].efficiency
    with np.errstate(divide="ignore", invalid="ignore"):
        r = ea / eb
    r = r[np.isfinite(r) & (r > 0)]
    if len(r) == 0:
        return {"min": np.nan, "max": np.nan, "geomean": np.nan, "n_gt_1": 0, "n": 0}
    return {
        "min": float(r.min()),
        "max": float(r.max()),
        "geomean": float(np.exp(np.mean(np.log(r)))),
        "n_gt_1": int(np.sum(r > 1)),
        "n": int(len(r)),
    }


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return repr(x) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def write_report_csv(report: VarianceReport, path) -> None:
    """Rows ``k,method,sigma_sq,tavc,std_err,efficiency,j_opt``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "method", "sigma_sq", "tavc", "std_err", "efficiency", "j_opt"])
        for label, m in report.methods.items():
            eff = m.efficiency
            for k in range(len(m.mean)):
                writer.writerow([
                    k,
                    label,
                    _fmt(m.sigma_sq[k]) if m.sigma_sq is not None else "",
                    _fmt(m.tavc[k]),
                    _fmt(m.std_err[k]),
                    _fmt(eff[k]),
                    _fmt(m.j_opt[k]) if m.j_opt is not None else "",
                ])

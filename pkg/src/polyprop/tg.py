"""Glass-transition temperature from stepwise-cooling density data.

Pipeline: group thermo rows by temperature set-point (keeping the tail of
each bin), flag bins whose density is still drifting, search every admissible
two-segment split of the remaining (T, rho) bin means for the largest
nested-model F statistic subject to the glassy slope being shallower than the
rubbery one, and grade the fit.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .core import LineFit, TemperatureBin, TgFit, ThermoTable
from .exceptions import InvalidSpec, NoPhysicalSplit, TooFewBins
from .lammps import parse_thermo_log

EXCELLENT, GOOD, ACCEPTABLE, POOR = "EXCELLENT", "GOOD", "ACCEPTABLE", "POOR"
MEDIAN_WINDOW = 50
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class TgConfig:
    retention_fraction: float = 0.5
    min_bins_per_side: int = 3
    plateau_drift_threshold: float = 0.005
    r2_excellent: float = 0.995
    f_excellent: float = 50.0
    r2_good: float = 0.98
    f_good: float = 20.0
    r2_acceptable: float = 0.95
    f_acceptable: float = 10.0
    setpoint_schedule: tuple | None = None

    def __post_init__(self):
        if not 0 < self.retention_fraction <= 1:
            raise InvalidSpec("retention_fraction must be in (0, 1]")
        if self.min_bins_per_side < 2:
            raise InvalidSpec("min_bins_per_side must be at least 2")
        if not (self.r2_excellent > self.r2_good > self.r2_acceptable
                and self.f_excellent > self.f_good > self.f_acceptable):
            raise InvalidSpec("quality thresholds must be strictly ordered")
        if self.setpoint_schedule is not None:
            object.__setattr__(self, "setpoint_schedule", tuple(float(t) for t in self.setpoint_schedule))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown Tg config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["setpoint_schedule"] is not None:
            d["setpoint_schedule"] = list(d["setpoint_schedule"])
        return d


def schedule_from_range(start, stop, step) -> tuple:
    """Set-points from ``start`` to ``stop`` inclusive, e.g. (500, 80, 30) -> 15 values."""
    span = abs(start - stop)
    n = int(round(span / abs(step)))
    if n == 0 or abs(n * abs(step) - span) > 1e-9 * max(1.0, span):
        raise InvalidSpec(f"step {step} does not divide the range {start}..{stop}")
    sign = -1.0 if stop < start else 1.0
    return tuple(float(start + sign * k * abs(step)) for k in range(n + 1))


# ---------------------------------------------------------------------------
# binning


def _rolling_median(x, window):
    """Centered rolling median; windows shrink at the ends of the series."""
    x = np.asarray(x, dtype=float)
    half = window // 2
    padded = np.concatenate([np.full(half, np.nan), x, np.full(window - half - 1, np.nan)])
    return np.nanmedian(sliding_window_view(padded, window), axis=1)


def _infer_levels(temps):
    """Set-point levels (K) present in a temperature series.

    A centered 50-row median is rounded to 1 K; rounded values held by enough
    rows are level candidates, and candidates closer than the median's noise
    scale are merged.
    """
    med = _rolling_median(temps, MEDIAN_WINDOW)
    rounded = np.round(med)
    values, counts = np.unique(rounded, return_counts=True)
    d = np.diff(np.asarray(temps, dtype=float))
    noise = 1.4826 * np.median(np.abs(d - np.median(d))) / np.sqrt(2) if len(d) else 0.0
    merge_tol = max(2.0, 6.0 * noise / np.sqrt(MEDIAN_WINDOW))
    min_rows = max(3, min(MEDIAN_WINDOW // 5, len(temps) // 20))
    levels, group = [], []
    for v, c in zip(values, counts):
        if group and v - group[-1][0] > merge_tol:
            levels.append(group)
            group = []
        group.append((v, c))
    if group:
        levels.append(group)
    centers = []
    for g in levels:
        vs = np.array([v for v, _ in g])
        cs = np.array([c for _, c in g])
        if cs.sum() >= min_rows:
            centers.append(float(np.round(np.sum(vs * cs) / cs.sum())))
    return np.array(sorted(set(centers))), med


def bin_by_setpoint(table: ThermoTable, cfg: TgConfig = TgConfig()) -> list:
    """Group thermo rows into temperature bins, keeping the tail of each bin.

    With ``cfg.setpoint_schedule`` every row joins its nearest scheduled
    set-point; otherwise set-points are inferred from the temperature series.
    Bins come back sorted by increasing set-point.
    """
    temps = table.column("Temp")
    rho = table.column("Density")
    steps = table.step.astype(float)
    if cfg.setpoint_schedule:
        levels = np.array(sorted(set(cfg.setpoint_schedule)))
    else:
        levels, _ = _infer_levels(temps)
    if len(levels) == 0:
        raise TooFewBins("no temperature set-points found")
    nearest = np.argmin(np.abs(temps[:, None] - levels[None, :]), axis=1)
    bins = []
    for k, sp in enumerate(levels):
        idx = np.flatnonzero(nearest == k)
        if len(idx) == 0:
            continue
        keep = max(1, int(np.floor(len(idx) * cfg.retention_fraction)))
        tail = idx[len(idx) - keep:]
        bins.append(TemperatureBin(float(sp), steps[tail], temps[tail], rho[tail], n_raw=len(idx)))
    need = 2 * cfg.min_bins_per_side + 1
    if len(bins) < need:
        raise TooFewBins(f"{len(bins)} temperature bins; at least {need} are needed")
    return bins


def flag_plateau_violations(bins: Sequence[TemperatureBin], cfg: TgConfig = TgConfig()) -> list:
    """Mark bins whose retained density still drifts by more than the threshold.

    drift_rel = |slope(rho vs step) * step span| / mean(rho).
    """
    out = []
    for b in bins:
        drift = 0.0
        if b.n_samples >= 2:
            span = b.steps[-1] - b.steps[0]
            x = b.steps if span > 0 else np.arange(b.n_samples, dtype=float)
            span = x[-1] - x[0]
            xc = x - x.mean()
            sxx = float(np.dot(xc, xc))
            if sxx > 0:
                slope = float(np.dot(xc, b.density_gcm3 - b.mean_rho_gcm3)) / sxx
                drift = abs(slope * span) / b.mean_rho_gcm3
        out.append(dataclasses.replace(b, drift_rel=float(drift), skipped=bool(drift > cfg.plateau_drift_threshold)))
    return out


# ---------------------------------------------------------------------------
# bilinear split


def fit_line(x, y) -> LineFit:
    """Ordinary least-squares line y = a + b x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    xc, yc = x - xm, y - ym
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, yc)) / sxx if sxx > 0 else 0.0
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    rss = float(np.dot(resid, resid))
    tss = float(np.dot(yc, yc))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return LineFit(slope, intercept, rss, r2, len(x))


def f_statistic(rss_one, rss_two, n):
    """Nested-model F for two lines (4 parameters) against one line (2)."""
    num = (rss_one - rss_two) / 2.0
    if rss_two <= 0.0:
        return float("inf") if num > 0 else 0.0
    return num / (rss_two / (n - 4))


def admissible_splits(n, min_per_side=3):
    """Split indices k (first bin of the high-T segment) leaving >= min_per_side bins each side."""
    return range(min_per_side, n - min_per_side + 1)


def bins_from_arrays(T, rho, setpoints=None) -> list:
    """One single-sample bin per (T, rho) pair; handy for fitting pre-averaged curves."""
    T = np.asarray(T, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sp = T if setpoints is None else np.asarray(setpoints, dtype=float)
    return [TemperatureBin(float(s), [float(i)], [t], [r], n_raw=1) for i, (s, t, r) in enumerate(zip(sp, T, rho))]


def _better(cand, best):
    f, r2, k = cand[0], cand[1], cand[2]
    bf, br2, bk = best[0], best[1], best[2]
    if f == bf or (np.isfinite(f) and np.isfinite(bf) and abs(f - bf) <= _TIE_RTOL * max(abs(f), abs(bf))):
        if r2 != br2:
            return r2 > br2
        return k < bk
    return f > bf


def fit_bilinear(bins: Sequence[TemperatureBin], cfg: TgConfig = TgConfig()) -> TgFit:
    """Best physically admissible two-line split of the usable bins."""
    usable = sorted((b for b in bins if not b.skipped), key=lambda b: b.mean_T_K)
    n_skip = sum(1 for b in bins if b.skipped)
    m = cfg.min_bins_per_side
    n = len(usable)
    if n < 2 * m:
        raise TooFewBins(f"{n} usable bins after plateau screening; at least {2 * m} are needed")
    T = np.array([b.mean_T_K for b in usable])
    rho = np.array([b.mean_rho_gcm3 for b in usable])
    single = fit_line(T, rho)
    tss = float(np.dot(rho - rho.mean(), rho - rho.mean()))

    best = None
    for k in admissible_splits(n, m):
        low = fit_line(T[:k], rho[:k])
        high = fit_line(T[k:], rho[k:])
        if not abs(low.slope) < abs(high.slope):
            continue
        rss2 = low.rss + high.rss
        f = f_statistic(single.rss, rss2, n)
        r2 = 1.0 - rss2 / tss if tss > 0 else 1.0
        cand = (f, r2, k, low, high)
        if best is None or _better(cand, best):
            best = cand
    if best is None:
        raise NoPhysicalSplit("no split has a glassy slope shallower than the rubbery slope")

    f, r2, k, low, high = best
    t_lo, t_hi = T[k - 1], T[k]
    if low.slope != high.slope:
        tg = (high.intercept - low.intercept) / (low.slope - high.slope)
    else:
        tg = 0.5 * (t_lo + t_hi)
    tg = float(min(max(tg, t_lo), t_hi))
    fit = TgFit(
        tg_K=tg,
        split_index=k,
        low_fit=low,
        high_fit=high,
        f_stat=float(f),
        r2_combined=float(r2),
        n_bins=n,
        n_skip=n_skip,
        quality=POOR,
        split_T_K=(float(t_lo), float(t_hi)),
        bins=tuple(sorted(bins, key=lambda b: b.setpoint_K)),
        config=cfg.to_dict(),
    )
    return dataclasses.replace(fit, quality=classify_quality(fit, cfg))


def classify_quality(fit, cfg: TgConfig = TgConfig()) -> str:
    """Grade a fit from its (r2, F) pair, first matching rule wins."""
    r2, f = fit.r2_combined, fit.f_stat
    if r2 >= cfg.r2_excellent and f > cfg.f_excellent:
        return EXCELLENT
    if r2 >= cfg.r2_good or f > cfg.f_good:
        return GOOD
    if r2 >= cfg.r2_acceptable or f > cfg.f_acceptable:
        return ACCEPTABLE
    return POOR


def extract_tg_table(table: ThermoTable, cfg: TgConfig = TgConfig()) -> TgFit:
    table = table.without_minimize()
    bins = bin_by_setpoint(table, cfg)
    bins = flag_plateau_violations(bins, cfg)
    return fit_bilinear(bins, cfg)


def extract_tg(log_text: str, cfg: TgConfig = TgConfig()) -> TgFit:
    """Tg from the text of a stepwise-cooling LAMMPS log."""
    return extract_tg_table(parse_thermo_log(log_text), cfg)


# ---------------------------------------------------------------------------
# estimator interface


class BilinearTgRegressor(RegressorMixin, BaseEstimator):
    """Bilinear density-temperature model located by the maximum-F split.

    ``fit(X, y)`` takes bin temperatures ``X`` (n_samples, 1) and mean
    densities ``y``; ``predict`` evaluates the glassy line below ``tg_`` and
    the rubbery line above it.
    """

    def __init__(self, min_bins_per_side=3, r2_excellent=0.995, f_excellent=50.0, r2_good=0.98,
                 f_good=20.0, r2_acceptable=0.95, f_acceptable=10.0):
        self.min_bins_per_side = min_bins_per_side
        self.r2_excellent = r2_excellent
        self.f_excellent = f_excellent
        self.r2_good = r2_good
        self.f_good = f_good
        self.r2_acceptable = r2_acceptable
        self.f_acceptable = f_acceptable

    def _config(self):
        return TgConfig(**self.get_params())

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=2 * self.min_bins_per_side)
        if X.shape[1] != 1:
            raise ValueError("X must hold a single temperature column")
        self.result_ = fit_bilinear(bins_from_arrays(X[:, 0], y), self._config())
        self.tg_ = self.result_.tg_K
        self.f_stat_ = self.result_.f_stat
        self.r2_ = self.result_.r2_combined
        self.quality_ = self.result_.quality
        self.split_index_ = self.result_.split_index
        self.low_fit_ = self.result_.low_fit
        self.high_fit_ = self.result_.high_fit
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        T = X[:, 0]
        return np.where(T < self.tg_, self.low_fit_(T), self.high_fit_(T))

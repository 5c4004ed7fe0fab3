"""Equilibrated density, fluctuation bulk modulus and convergence metrics from
NPT production thermo output.

Every analysis uses the last half of the selected section (``n // 2`` rows are
discarded as burn-in, so an odd row count keeps the extra row).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import ThermoTable, unit_bulk_modulus_GPa
from .exceptions import DegenerateFluctuation, InsufficientData

N_BLOCKS = 5
ENERGY_DRIFT_LIMIT_PCT = 0.5
DENSITY_CV_LIMIT_PCT = 2.0
MIN_BULK_FRAMES = 10


def analysis_window(n_rows):
    """(start, end) rows of the production window."""
    return n_rows // 2, n_rows


def block_slices(n, n_blocks=N_BLOCKS):
    """Contiguous equal blocks; the ``n % n_blocks`` leftover rows are dropped
    from the tail of the first block."""
    size = n // n_blocks
    if size < 1:
        raise InsufficientData(f"{n} rows cannot be split into {n_blocks} blocks")
    rem = n - size * n_blocks
    out = [slice(0, size)]
    for k in range(1, n_blocks):
        start = size + rem + (k - 1) * size
        out.append(slice(start, start + size))
    return out


def block_sem(x, n_blocks=N_BLOCKS):
    means = np.array([np.mean(x[s]) for s in block_slices(len(x), n_blocks)])
    return float(np.std(means, ddof=1) / np.sqrt(n_blocks))


def _window(table, selector, name):
    sec = table.select(selector)
    values = sec.column(name)
    start, end = analysis_window(len(sec))
    return sec, values[start:end], sec.step[start:end], (start, end)


def relative_drift_pct(steps, values):
    """|least-squares slope * window span| / mean, in percent."""
    x = np.asarray(steps, dtype=float)
    if x[-1] == x[0]:
        x = np.arange(len(values), dtype=float)
    xc = x - x.mean()
    slope = float(np.dot(xc, values - values.mean()) / np.dot(xc, xc))
    return abs(slope * (x[-1] - x[0])) / abs(float(np.mean(values))) * 100.0


@dataclass(frozen=True)
class DensityResult:
    mean_rho_gcm3: float
    sem_rho_gcm3: float
    window: tuple
    n_frames: int

    def to_dict(self):
        return {"mean_rho_gcm3": self.mean_rho_gcm3, "sem_rho_gcm3": self.sem_rho_gcm3,
                "window": list(self.window), "n_frames": self.n_frames}


def equilibrated_density(table: ThermoTable, section=None) -> DensityResult:
    """Time-averaged density over the last half of a production section."""
    _, rho, _, window = _window(table, section, "Density")
    if len(rho) < N_BLOCKS:
        raise InsufficientData(f"only {len(rho)} density frames in the production window")
    return DensityResult(float(np.mean(rho)), block_sem(rho), window, len(rho))


@dataclass(frozen=True)
class BulkModulusResult:
    K_GPa: float
    K_sem_GPa: float
    mean_V_A3: float
    sigma_V_A3: float
    T_K: float
    n_frames: int
    block_K_GPa: tuple = ()
    window: tuple = ()

    def to_dict(self):
        return {"K_GPa": self.K_GPa, "K_sem_GPa": self.K_sem_GPa, "mean_V_A3": self.mean_V_A3,
                "sigma_V_A3": self.sigma_V_A3, "T_K": self.T_K, "n_frames": self.n_frames,
                "block_K_GPa": list(self.block_K_GPa), "window": list(self.window)}

    def blocks_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "K_GPa"])
        for i, k in enumerate(self.block_K_GPa):
            w.writerow([i, repr(k)])
        return buf.getvalue()


def bulk_modulus_from_volumes(V, T_K) -> tuple:
    """(K, <V>, sigma_V) from a volume series using the population variance."""
    V = np.asarray(V, dtype=float)
    mean_V = float(np.mean(V))
    var_V = float(np.var(V))
    if var_V <= 0.0:
        raise DegenerateFluctuation("volume does not fluctuate over the window")
    return unit_bulk_modulus_GPa(mean_V, var_V, T_K), mean_V, float(np.sqrt(var_V))


def bulk_modulus(table: ThermoTable, section=None, T_K=300.0) -> BulkModulusResult:
    """Isothermal bulk modulus from NPT volume fluctuations with a 5-block SEM."""
    _, V, _, window = _window(table, section, "Volume")
    if len(V) < MIN_BULK_FRAMES:
        raise InsufficientData(f"{len(V)} volume frames; need at least {MIN_BULK_FRAMES}")
    K, mean_V, sigma_V = bulk_modulus_from_volumes(V, T_K)
    blocks = []
    for s in block_slices(len(V)):
        try:
            blocks.append(bulk_modulus_from_volumes(V[s], T_K)[0])
        except DegenerateFluctuation:
            blocks.append(float("inf"))
    blocks = np.array(blocks)
    sem = float(np.std(blocks, ddof=1) / np.sqrt(N_BLOCKS)) if np.all(np.isfinite(blocks)) else float("inf")
    return BulkModulusResult(K, sem, mean_V, sigma_V, float(T_K), len(V), tuple(blocks.tolist()), window)


@dataclass(frozen=True)
class ConvergenceReport:
    n_prod: int
    mean_rho_gcm3: float
    rho_drift_pct: float
    rho_sem_pct: float
    mean_E_kcal: float
    e_drift_pct: float
    e_sem_pct: float
    rho_cv_pct: float
    passed: bool

    @property
    def status(self):
        return "Pass" if self.passed else "Fail"

    def to_dict(self):
        return {"N_prod": self.n_prod, "mean_rho_gcm3": self.mean_rho_gcm3, "rho_drift_pct": self.rho_drift_pct,
                "rho_sem_pct": self.rho_sem_pct, "mean_E_kcal_mol": self.mean_E_kcal,
                "e_drift_pct": self.e_drift_pct, "e_sem_pct": self.e_sem_pct, "rho_cv_pct": self.rho_cv_pct,
                "pass": self.passed, "status": self.status}


def convergence_metrics(table: ThermoTable, section=None) -> ConvergenceReport:
    """Drift, block SEM and CV diagnostics of density and total energy.

    Passes when the energy drift is below 0.5 % and the density coefficient
    of variation is below 2 %.
    """
    sec = table.select(section)
    rho_all = sec.column("Density")
    e_all = sec.column("TotEng")
    start, end = analysis_window(len(sec))
    rho, E, steps = rho_all[start:end], e_all[start:end], sec.step[start:end]
    if len(rho) < N_BLOCKS:
        raise InsufficientData(f"only {len(rho)} frames in the production window")
    mean_rho, mean_E = float(np.mean(rho)), float(np.mean(E))
    rho_drift = relative_drift_pct(steps, rho)
    e_drift = relative_drift_pct(steps, E)
    rho_cv = float(np.std(rho) / mean_rho * 100.0)
    return ConvergenceReport(
        n_prod=len(rho),
        mean_rho_gcm3=mean_rho,
        rho_drift_pct=rho_drift,
        rho_sem_pct=block_sem(rho) / mean_rho * 100.0,
        mean_E_kcal=mean_E,
        e_drift_pct=e_drift,
        e_sem_pct=block_sem(E) / abs(mean_E) * 100.0,
        rho_cv_pct=rho_cv,
        passed=bool(e_drift < ENERGY_DRIFT_LIMIT_PCT and rho_cv < DENSITY_CV_LIMIT_PCT),
    )

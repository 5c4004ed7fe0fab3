"""Synthetic LAMMPS outputs with analytically known ground truth.

Random numbers come from numpy's ``PCG64`` bit generator seeded through
``numpy.random.default_rng(seed)``; with a fixed seed and numpy >= 1.17 every
generator here is byte-reproducible. Each generator returns its data together
with a ground-truth record.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, SystemTopology, Trajectory
from .exceptions import InvalidSpec

_THERMO_COLS = ("Step", "Temp", "Press", "Density", "Volume", "TotEng", "PotEng")
_MASS_GMOL = 6.022e4  # arbitrary system mass so Volume is consistent with Density


def _rng(seed):
    return np.random.default_rng(seed)


def _fmt_row(values):
    step = str(int(values[0]))
    return " ".join([f"{step:>10}"] + [f"{v:.10g}" for v in values[1:]])


def _volume_from_density(rho):
    # V[A^3] = m[g/mol] / (N_A * rho[g/cm^3]) * 1e24
    return _MASS_GMOL / (6.02214076e23 * rho) * 1e24


@dataclass(frozen=True)
class BilinearModel:
    """Density-temperature curve with a kink at ``tg_K``.

    ``drift`` maps a set-point to the relative density change injected as a
    linear ramp across that bin's full raw window.
    """

    tg_K: float
    slope_glassy: float
    slope_rubbery: float
    rho_at_tg: float
    noise_sigma: float
    schedule: tuple
    rows_per_bin: int = 40
    drift: dict = field(default_factory=dict)
    temp_noise_K: float = 1.0
    steps_per_row: int = 1000

    def __post_init__(self):
        if not (self.slope_glassy < 0 and self.slope_rubbery < 0):
            raise InvalidSpec("both slopes must be negative")
        if not abs(self.slope_glassy) < abs(self.slope_rubbery):
            raise InvalidSpec("glassy slope must be shallower than rubbery slope")
        if self.rows_per_bin < 2:
            raise InvalidSpec("rows_per_bin must be >= 2")
        object.__setattr__(self, "schedule", tuple(float(t) for t in self.schedule))
        object.__setattr__(self, "drift", {float(k): float(v) for k, v in self.drift.items()})

    def density(self, T):
        T = np.asarray(T, dtype=float)
        slope = np.where(T < self.tg_K, self.slope_glassy, self.slope_rubbery)
        return self.rho_at_tg + slope * (T - self.tg_K)


def gen_bilinear_log(model: BilinearModel, seed: int = 0):
    """Stepwise-cooling log, one ``run`` block per set-point.

    Returns ``(text, truth)``; ``truth`` carries tg_K, the schedule and the
    set-points whose bins were given a drift ramp.
    """
    rng = _rng(seed)
    n = model.rows_per_bin
    lines = ["LAMMPS (synthetic)", "units real", "# STAGE: tg-sweep"]
    step = 0
    for sp in model.schedule:
        lines.append(f"fix 1 all npt temp {sp:g} {sp:g} 100.0 iso 1.0 1.0 1000.0")
        lines.append(f"run {n * model.steps_per_row}")
        lines.append("Per MPI rank memory allocation (min/avg/max) = 10 | 10 | 10 Mbytes")
        lines.append("   " + " ".join(f"{c:>12}" for c in _THERMO_COLS))
        T = sp + model.temp_noise_K * rng.standard_normal(n)
        rho = model.density(sp) + model.noise_sigma * rng.standard_normal(n)
        d = model.drift.get(float(sp), 0.0)
        if d:
            ramp = np.linspace(-0.5, 0.5, n) * d * model.density(sp)
            rho = rho + ramp
        press = rng.standard_normal(n) * 50.0
        vol = _volume_from_density(rho)
        pe = -1000.0 + 0.5 * T + rng.standard_normal(n)
        etot = pe + 1.5 * T
        for i in range(n):
            lines.append(_fmt_row((step, T[i], press[i], rho[i], vol[i], etot[i], pe[i])))
            step += model.steps_per_row
        lines.append(f"Loop time of 1.0 on 1 procs for {n * model.steps_per_row} steps with 1000 atoms")
        lines.append("")
    truth = {
        "tg_K": model.tg_K,
        "schedule": list(model.schedule),
        "drifting_setpoints": sorted(k for k, v in model.drift.items() if v),
        "n_bins": len(model.schedule),
        "n_skip": sum(1 for v in model.drift.values() if v),
    }
    return "\n".join(lines) + "\n", truth


def pe_like_model(tg_K=281.0, t_start=500.0, t_end=80.0, step=30.0, noise_sigma=0.002,
                  rows_per_bin=40, drift=None) -> BilinearModel:
    """Sweep shaped like a polyethylene Tg run (rho ~ 0.9-1.0 g/cm^3)."""
    n = int(round(abs(t_start - t_end) / step))
    schedule = [t_start - k * step for k in range(n + 1)]
    return BilinearModel(tg_K, -2.5e-4, -7.0e-4, 0.98, noise_sigma, tuple(schedule), rows_per_bin,
                         drift or {})


def gen_npt_log(mean_V, sigma_V, mean_rho, mean_E, n_rows=1001, drift=None, seed=0, phi=0.0,
                sigma_rho=None, sigma_E=None, T_K=300.0, steps_per_row=500, stage="npt-production"):
    """Stationary NPT production log with Gaussian Volume, Density and TotEng.

    ``drift`` maps a column name to the relative change injected as a linear
    ramp across the analysis window (the last half of the rows); the ramp
    has the same slope over the whole series. ``phi`` sets AR(1) correlation.
    Returns ``(text, truth)``.
    """
    if not (mean_V > 0 and mean_rho > 0):
        raise InvalidSpec("means must be positive")
    rng = _rng(seed)
    drift = dict(drift or {})
    sigma_rho = 0.001 * mean_rho if sigma_rho is None else sigma_rho
    sigma_E = 1e-4 * abs(mean_E) if sigma_E is None else sigma_E

    def series(mean, sigma):
        z = rng.standard_normal(n_rows)
        if phi:
            out = np.empty(n_rows)
            out[0] = z[0]
            scale = np.sqrt(1.0 - phi * phi)
            for i in range(1, n_rows):
                out[i] = phi * out[i - 1] + scale * z[i]
            z = out
        return mean + sigma * z

    V = series(mean_V, sigma_V)
    rho = series(mean_rho, sigma_rho)
    E = series(mean_E, sigma_E)
    T = series(T_K, 2.0)
    steps = np.arange(n_rows) * steps_per_row
    window_start = n_rows // 2
    span = steps[-1] - steps[window_start]
    cols = {"Volume": V, "Density": rho, "TotEng": E}
    means = {"Volume": mean_V, "Density": mean_rho, "TotEng": mean_E}
    for name, rel in drift.items():
        slope = rel * means[name] / span
        cols[name] = cols[name] + slope * (steps - steps[window_start] - span / 2)
    lines = ["LAMMPS (synthetic)", "units real", f"# STAGE: {stage}",
             f"fix 1 all npt temp {T_K:g} {T_K:g} 100.0 iso 1.0 1.0 1000.0",
             f"run {steps[-1]}",
             "   " + " ".join(f"{c:>12}" for c in ("Step", "Temp", "Press", "Density", "Volume", "TotEng"))]
    press = rng.standard_normal(n_rows) * 100.0
    for i in range(n_rows):
        lines.append(_fmt_row((steps[i], T[i], press[i], cols["Density"][i], cols["Volume"][i], cols["TotEng"][i])))
    lines.append(f"Loop time of 1.0 on 1 procs for {steps[-1]} steps with 1000 atoms")
    truth = {"mean_V": mean_V, "sigma_V": sigma_V, "mean_rho": mean_rho, "mean_E": mean_E,
             "T_K": T_K, "drift": drift, "n_rows": n_rows}
    return "\n".join(lines) + "\n", truth


# ---------------------------------------------------------------------------
# trajectories


def _single_atoms_topology(n, label="c3"):
    ids = np.arange(1, n + 1)
    return SystemTopology.build(ids, ids, np.ones(n, dtype=int), np.full(n, 12.011), type_labels={1: label})


def _linear_chains_topology(chain_lengths, label="c3"):
    ids, mols, bonds = [], [], []
    aid, bid = 1, 1
    for m, n in enumerate(chain_lengths, start=1):
        for k in range(n):
            ids.append(aid)
            mols.append(m)
            if k:
                bonds.append((bid, 1, aid - 1, aid))
                bid += 1
            aid += 1
    n_atoms = len(ids)
    return SystemTopology.build(ids, mols, np.ones(n_atoms, dtype=int), np.full(n_atoms, 12.011), bonds,
                                type_labels={1: label})


def gen_trajectory(kind, params=None, seed=0):
    """Synthetic trajectory with known structure.

    kinds and their params:
      ideal_gas: n_atoms, box, n_frames        -> g(r) == 1
      lattice: n_cells, spacing, n_frames      -> simple-cubic neighbor shells
      rods: lengths, n_frames, box, spacing    -> straight chains, R = length
      wrapped_chain: n_bonds, bond_length, box, start, images
                                               -> straight chain across the boundary

    Returns ``(trajectory, topology, truth)``.
    """
    p = dict(params or {})
    rng = _rng(seed)
    if kind == "ideal_gas":
        n, box, n_frames = p.get("n_atoms", 2000), float(p.get("box", 40.0)), p.get("n_frames", 20)
        lo, hi = np.zeros(3), np.full(3, box)
        frames = [Frame(k, lo, hi, rng.uniform(0.0, box, size=(n, 3))) for k in range(n_frames)]
        topo = _single_atoms_topology(n)
        return Trajectory(topo.atom_ids, frames, wrapped=True), topo, {"g": 1.0, "density": n / box**3}

    if kind == "lattice":
        m, a, n_frames = p.get("n_cells", 8), float(p.get("spacing", 4.0)), p.get("n_frames", 1)
        g = np.arange(m) * a + 0.5 * a
        xyz = np.array(np.meshgrid(g, g, g, indexing="ij")).reshape(3, -1).T
        box = m * a
        frames = [Frame(k, np.zeros(3), np.full(3, box), xyz) for k in range(n_frames)]
        topo = _single_atoms_topology(len(xyz))
        # neighbor shells of a simple cubic lattice: distance and multiplicity
        shells = [(a, 6), (a * np.sqrt(2), 12), (a * np.sqrt(3), 8), (2 * a, 6)]
        return Trajectory(topo.atom_ids, frames, wrapped=True), topo, {"shells": shells, "box": box}

    if kind == "rods":
        lengths = [float(v) for v in p.get("lengths", [40.0])]
        n_frames = p.get("n_frames", 3)
        spacing = float(p.get("spacing", 1.0))
        n_per = [max(2, int(round(L / spacing)) + 1) for L in lengths]
        topo = _linear_chains_topology(n_per)
        frames = []
        for k in range(n_frames):
            coords = []
            for L, n in zip(lengths, n_per):
                u = rng.standard_normal(3)
                u /= np.linalg.norm(u)
                origin = rng.uniform(-50.0, 50.0, size=3)
                t = np.linspace(0.0, L, n)
                coords.append(origin + t[:, None] * u)
            xyz = np.vstack(coords)
            span = np.abs(xyz).max() + 1.0
            frames.append(Frame(k, np.full(3, -span), np.full(3, span), xyz))
        truth = {"mean_R": float(np.mean(lengths)), "mean_R2": float(np.mean(np.square(lengths)))}
        return Trajectory(topo.atom_ids, frames, wrapped=False), topo, truth

    if kind == "wrapped_chain":
        nb = p.get("n_bonds", 10)
        b = float(p.get("bond_length", 1.5))
        box = float(p.get("box", 8.0))
        start = float(p.get("start", 3.0))
        with_images = p.get("images", True)
        topo = _linear_chains_topology([nb + 1])
        x = start + b * np.arange(nb + 1)
        img = np.floor(x / box).astype(np.int64)
        xw = x - img * box
        coords = np.column_stack([xw, np.full(nb + 1, box / 2), np.full(nb + 1, box / 2)])
        images = np.column_stack([img, np.zeros_like(img), np.zeros_like(img)]) if with_images else None
        frame = Frame(0, np.zeros(3), np.full(3, box), coords, images)
        truth = {"R": nb * b, "unwrapped_x": x}
        return Trajectory(topo.atom_ids, [frame], wrapped=True), topo, truth

    raise InvalidSpec(f"unknown trajectory kind {kind!r}")


def gen_polyethylene_topology(n_chains=10, n_monomers=150):
    """United-chain PE topology with explicit hydrogens: 6n+2 atoms per chain.

    Carbons are type 1 (``c3``), hydrogens type 2 (``hc``). Coordinates are
    a zig-zag along x per chain; returns ``(topology, box_lo, box_hi, coords)``.
    """
    ids, mols, types, masses, charges, coords, bonds = [], [], [], [], [], [], []
    aid, bid = 1, 1
    n_c = 2 * n_monomers
    for m in range(1, n_chains + 1):
        carbon_ids = []
        y0, z0 = 5.0 * m, 0.0
        for k in range(n_c):
            ids.append(aid); mols.append(m); types.append(1); masses.append(12.011); charges.append(-0.12)
            coords.append((1.26 * k, y0 + 0.4 * (k % 2), z0))
            carbon_ids.append(aid)
            if k:
                bonds.append((bid, 1, aid - 1, aid)); bid += 1
            aid += 1
        for k, c in enumerate(carbon_ids):
            n_h = 3 if k in (0, n_c - 1) else 2
            for h in range(n_h):
                ids.append(aid); mols.append(m); types.append(2); masses.append(1.008); charges.append(0.06)
                coords.append((1.26 * k, y0 + 0.4 * (k % 2) + (0.6 if h % 2 else -0.6), z0 + 0.9 * (h - 1)))
                bonds.append((bid, 2, c, aid)); bid += 1
                aid += 1
    topo = SystemTopology.build(ids, mols, types, masses, bonds, charges, {1: "c3", 2: "hc"})
    xyz = np.array(coords)
    lo = xyz.min(axis=0) - 5.0
    hi = xyz.max(axis=0) + 5.0
    return topo, lo, hi, xyz

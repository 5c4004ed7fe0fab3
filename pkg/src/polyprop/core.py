"""Domain types, physical constants and unit conventions.

All quantities use LAMMPS ``real`` units: temperature in K, volume in A^3,
density in g/cm^3, energy in kcal/mol, pressure in atm, time in fs.
Every container here is immutable after construction; numpy arrays are
flagged read-only.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegenerateFluctuation, MissingColumn, NoSuchStage

BOLTZMANN_J_PER_K = 1.380649e-23
A3_TO_M3 = 1e-30
PA_PER_GPA = 1e9
HYDROGEN_MASS_CUTOFF = 1.5  # u; lighter atoms are hydrogens
UNITS_STYLE = "real"
MINIMIZE_LABEL = "minimize"


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def unit_bulk_modulus_GPa(mean_V_A3, var_V_A6, T_K):
    """Isothermal bulk modulus from volume fluctuations, in GPa.

    ``K = k_B T <V> / <dV^2>`` with the volume moments given in A^3 and A^6.
    The A^3/A^6 ratio leaves a factor 1e30 m^-3, so K[GPa] = 1.380649e-2 T <V>/var.
    """
    if not T_K > 0:
        raise DegenerateFluctuation(f"temperature must be positive, got {T_K}")
    if not mean_V_A3 > 0:
        raise DegenerateFluctuation(f"mean volume must be positive, got {mean_V_A3}")
    if not var_V_A6 > 0:
        raise DegenerateFluctuation("volume variance is zero: frozen or constant volume")
    k_pa = BOLTZMANN_J_PER_K * T_K * (mean_V_A3 * A3_TO_M3) / (var_V_A6 * A3_TO_M3**2)
    return k_pa / PA_PER_GPA


# ---------------------------------------------------------------------------
# JSON helpers shared by the CLI, the tool server and the library to_dict()s


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(payload) -> str:
    """Canonical JSON text for a result payload (non-finite floats become null)."""
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# thermo tables


@dataclass(frozen=True)
class Section:
    start: int  # first row, inclusive
    end: int  # last row, exclusive
    label: str
    columns: tuple  # header names printed for this run block

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class ThermoTable:
    """Thermo time series of a (possibly multi-stage) LAMMPS log.

    Columns are aligned by row; a column absent from a given run block is NaN
    on that block's rows.
    """

    step: np.ndarray
    columns: dict
    sections: tuple
    units: str = UNITS_STYLE

    def __post_init__(self):
        object.__setattr__(self, "step", _frozen(self.step, np.int64))
        cols = {name: _frozen(v) for name, v in self.columns.items()}
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "sections", tuple(self.sections))
        n = len(self.step)
        for name, v in cols.items():
            if len(v) != n:
                raise ValueError(f"column {name!r} has {len(v)} values, expected {n}")
        for s in self.sections:
            if np.any(np.diff(self.step[s.start:s.end]) < 0):
                raise ValueError(f"step decreases inside section {s.label!r}")

    def __len__(self):
        return len(self.step)

    @property
    def names(self):
        return list(self.columns)

    @property
    def labels(self):
        return [s.label for s in self.sections]

    def has(self, name):
        return name in self.columns and not np.all(np.isnan(self.columns[name]))

    def column(self, name):
        if not self.has(name):
            raise MissingColumn(f"thermo column {name!r} not found (have {self.names})")
        return self.columns[name]

    def _take(self, sections):
        idx = np.concatenate([np.arange(s.start, s.end) for s in sections]) if sections else np.arange(0)
        new_sections, row = [], 0
        for s in sections:
            new_sections.append(Section(row, row + len(s), s.label, s.columns))
            row += len(s)
        return ThermoTable(self.step[idx], {k: v[idx] for k, v in self.columns.items()}, new_sections)

    def select(self, selector=None) -> "ThermoTable":
        """Sub-table for a stage.

        ``None`` picks the last non-minimization section; an ``int`` indexes
        sections (negative allowed); a string matches every section carrying
        that label, or ``run-<k>`` for the k-th section (1-based).
        """
        secs = self.sections
        if selector is None:
            chosen = [s for s in secs if s.label != MINIMIZE_LABEL][-1:]
        elif isinstance(selector, (int, np.integer)):
            try:
                chosen = [secs[selector]]
            except IndexError:
                raise NoSuchStage(f"section index {selector} out of range ({len(secs)} sections)") from None
        else:
            chosen = [s for s in secs if s.label == selector]
            if not chosen and str(selector).startswith("run-"):
                try:
                    chosen = [secs[int(str(selector)[4:]) - 1]]
                except (ValueError, IndexError):
                    chosen = []
        if not chosen:
            raise NoSuchStage(f"no section matches {selector!r} (labels: {self.labels})")
        return self._take(chosen)

    def without_minimize(self) -> "ThermoTable":
        return self._take([s for s in self.sections if s.label != MINIMIZE_LABEL])

    def to_text(self) -> str:
        """Serialize back to LAMMPS log text that parses to an identical table."""
        out = [f"units {self.units}"]
        for s in self.sections:
            out.append(f"# STAGE: {s.label}")
            if s.label == MINIMIZE_LABEL:
                out.append("minimize 1.0e-4 1.0e-6 1000 10000")
            out.append(" ".join(s.columns))
            for i in range(s.start, s.end):
                vals = []
                for name in s.columns:
                    if name == "Step":
                        vals.append(str(int(self.step[i])))
                    else:
                        vals.append(repr(float(self.columns[name][i])))
                out.append(" ".join(vals))
            out.append("Loop time of 0 on 1 procs")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Tg fitting records


@dataclass(frozen=True)
class TemperatureBin:
    setpoint_K: float
    steps: np.ndarray
    temperature_K: np.ndarray
    density_gcm3: np.ndarray
    n_raw: int
    drift_rel: float = 0.0
    skipped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "steps", _frozen(self.steps))
        object.__setattr__(self, "temperature_K", _frozen(self.temperature_K))
        object.__setattr__(self, "density_gcm3", _frozen(self.density_gcm3))

    @property
    def mean_T_K(self):
        return float(np.mean(self.temperature_K))

    @property
    def mean_rho_gcm3(self):
        return float(np.mean(self.density_gcm3))

    @property
    def n_samples(self):
        return len(self.steps)

    def to_dict(self):
        return {
            "setpoint_K": self.setpoint_K,
            "mean_T_K": self.mean_T_K,
            "mean_rho_gcm3": self.mean_rho_gcm3,
            "n_raw": self.n_raw,
            "n_samples": self.n_samples,
            "drift_rel": self.drift_rel,
            "skipped": self.skipped,
        }


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    rss: float
    r2: float
    n: int

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "rss": self.rss, "r2": self.r2, "n": self.n}


@dataclass(frozen=True)
class TgFit:
    tg_K: float
    split_index: int
    low_fit: LineFit
    high_fit: LineFit
    f_stat: float
    r2_combined: float
    n_bins: int
    n_skip: int
    quality: str
    split_T_K: tuple = ()  # mean T of the bins either side of the split
    bins: tuple = ()
    config: dict = field(default_factory=dict)

    @property
    def r2(self):
        return self.r2_combined

    def to_dict(self):
        return {
            "tg_K": self.tg_K,
            "r2": self.r2_combined,
            "f_stat": self.f_stat,
            "n_bins": self.n_bins,
            "n_skip": self.n_skip,
            "quality": self.quality,
            "split_index": self.split_index,
            "split_T_K": list(self.split_T_K),
            "low_fit": self.low_fit.to_dict(),
            "high_fit": self.high_fit.to_dict(),
            "bins": [b.to_dict() for b in self.bins],
            "config": dict(self.config),
        }


# ---------------------------------------------------------------------------
# topology and trajectories


@dataclass(frozen=True)
class SystemTopology:
    """Atoms, bonds and chains of a molecular system (atom_style full).

    ``chains`` maps molecule id to its pair of terminal atom ids.
    """

    atom_ids: np.ndarray
    molecule_ids: np.ndarray
    type_ids: np.ndarray
    charges: np.ndarray
    masses: np.ndarray
    bonds: np.ndarray  # rows of (bond id, bond type, atom i, atom j)
    type_labels: dict
    chains: dict

    @classmethod
    def build(cls, atom_ids, molecule_ids, type_ids, masses, bonds=(), charges=None, type_labels=None):
        atom_ids = np.asarray(atom_ids, dtype=np.int64)
        order = np.argsort(atom_ids, kind="stable")
        atom_ids = atom_ids[order]
        molecule_ids = np.asarray(molecule_ids, dtype=np.int64)[order]
        type_ids = np.asarray(type_ids, dtype=np.int64)[order]
        masses = np.asarray(masses, dtype=float)[order]
        charges = np.zeros(len(atom_ids)) if charges is None else np.asarray(charges, dtype=float)[order]
        bonds = np.asarray(bonds, dtype=np.int64).reshape(-1, 4)
        chains = find_chain_terminals(atom_ids, molecule_ids, masses, bonds[:, 2:4])
        return cls(
            _frozen(atom_ids, np.int64),
            _frozen(molecule_ids, np.int64),
            _frozen(type_ids, np.int64),
            _frozen(charges),
            _frozen(masses),
            _frozen(bonds, np.int64),
            dict(type_labels or {}),
            chains,
        )

    @property
    def n_atoms(self):
        return len(self.atom_ids)

    @property
    def n_molecules(self):
        return len(self.chains)

    def label_of(self, type_id):
        return self.type_labels.get(int(type_id), str(int(type_id)))

    def labels(self):
        """Per-atom type label array (falls back to the numeric type id)."""
        return np.array([self.label_of(t) for t in self.type_ids], dtype=object)

    def atoms_in_molecule(self, mol):
        return self.atom_ids[self.molecule_ids == mol]


def _bfs_far(start, adj, allowed):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v in allowed and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    far = max(dist.items(), key=lambda kv: (kv[1], -kv[0]))
    return far[0], dist


def find_chain_terminals(atom_ids, molecule_ids, masses, bond_pairs) -> dict:
    """Two terminal backbone atoms per molecule.

    The backbone is the largest connected component of the molecule's heavy
    atoms (mass >= 1.5 u); its terminals are the endpoints of a longest
    shortest-path found by double breadth-first search. For an unbranched
    backbone these are exactly the two atoms with a single backbone neighbor.
    Ties break toward the lower atom id.
    """
    atom_ids = np.asarray(atom_ids, dtype=np.int64)
    molecule_ids = np.asarray(molecule_ids, dtype=np.int64)
    adj: dict = {}
    for i, j in np.asarray(bond_pairs, dtype=np.int64).reshape(-1, 2):
        adj.setdefault(int(i), []).append(int(j))
        adj.setdefault(int(j), []).append(int(i))
    for v in adj.values():
        v.sort()
    mass_of = dict(zip(atom_ids.tolist(), np.asarray(masses).tolist()))
    chains = {}
    for mol in np.unique(molecule_ids).tolist():
        members = atom_ids[molecule_ids == mol].tolist()
        heavy = {a for a in members if mass_of[a] >= HYDROGEN_MASS_CUTOFF} or set(members)
        # largest heavy component, lowest-id component on ties
        seen, best = set(), None
        for a in sorted(heavy):
            if a in seen:
                continue
            _, dist = _bfs_far(a, adj, heavy)
            seen.update(dist)
            if best is None or len(dist) > len(best):
                best = dist
        backbone = set(best)
        end1, _ = _bfs_far(min(backbone), adj, backbone)
        end2, _ = _bfs_far(end1, adj, backbone)
        chains[int(mol)] = tuple(sorted((end1, end2)))
    return chains


@dataclass(frozen=True)
class Frame:
    step: int
    box_lo: np.ndarray
    box_hi: np.ndarray
    coords: np.ndarray  # (n_atoms, 3), rows ordered like Trajectory.atom_ids
    images: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "box_lo", _frozen(self.box_lo))
        object.__setattr__(self, "box_hi", _frozen(self.box_hi))
        object.__setattr__(self, "coords", _frozen(self.coords))
        if self.images is not None:
            object.__setattr__(self, "images", _frozen(self.images, np.int64))
        if np.any(self.box_hi - self.box_lo <= 0):
            raise ValueError("box lengths must be positive")

    @property
    def box_length(self):
        return self.box_hi - self.box_lo

    @property
    def volume(self):
        return float(np.prod(self.box_length))


@dataclass(frozen=True)
class Trajectory:
    atom_ids: np.ndarray
    frames: tuple
    wrapped: bool = True

    def __post_init__(self):
        object.__setattr__(self, "atom_ids", _frozen(self.atom_ids, np.int64))
        object.__setattr__(self, "frames", tuple(self.frames))
        for f in self.frames:
            if f.coords.shape != (len(self.atom_ids), 3):
                raise ValueError("every frame must hold coordinates for the same atoms")

    def __len__(self):
        return len(self.frames)

    @property
    def has_images(self):
        return bool(self.frames) and all(f.images is not None for f in self.frames)

    def index_of(self, ids: Iterable[int]) -> np.ndarray:
        pos = np.searchsorted(self.atom_ids, np.asarray(list(ids), dtype=np.int64))
        return pos

    def translated(self, shift: Sequence[float]) -> "Trajectory":
        """Rigid translation; wrapped trajectories are re-wrapped into the box."""
        shift = np.asarray(shift, dtype=float)
        frames = []
        for f in self.frames:
            x = f.coords + shift
            if self.wrapped:
                x = f.box_lo + np.mod(x - f.box_lo, f.box_length)
                frames.append(Frame(f.step, f.box_lo, f.box_hi, x, None))
            else:
                frames.append(Frame(f.step, f.box_lo, f.box_hi, x, f.images))
        return Trajectory(self.atom_ids, frames, self.wrapped)

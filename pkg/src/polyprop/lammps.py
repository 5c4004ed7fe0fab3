"""Parsers for LAMMPS thermo logs, data files (atom_style full) and custom dumps,
plus a signature-based classifier for known failure modes in logs and scripts.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core import MINIMIZE_LABEL, UNITS_STYLE, Frame, Section, SystemTopology, ThermoTable, Trajectory
from .exceptions import (
    DanglingBond,
    HeaderMismatch,
    InconsistentAtomSet,
    MalformedRow,
    MissingIdColumn,
    NotAThermoLog,
    ParseError,
    UnsupportedUnits,
)

_STAGE_RE = re.compile(r"^\s*#\s*STAGE:\s*(\S.*?)\s*$")
_UNITS_RE = re.compile(r"^\s*units\s+(\S+)")
_MINIMIZE_RE = re.compile(r"^\s*minimize\s")
_HEADER_TOKEN_RE = re.compile(r"^[A-Za-z_][\w\[\]/.:-]*$")
_NONFINITE_RE = re.compile(r"^[+-]?(nan|inf|infinity)$", re.IGNORECASE)


def _is_header(tokens):
    return len(tokens) >= 1 and tokens[0] == "Step" and all(_HEADER_TOKEN_RE.match(t) for t in tokens)


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_thermo_log(text: str) -> ThermoTable:
    """Parse every ``run``/``minimize`` thermo block of a log into one table.

    Sections are labelled by the latest ``# STAGE: <name>`` marker, by
    ``minimize`` when the block follows a minimize command, and ``run-<k>``
    otherwise.
    """
    sections = []  # (label, header, rows, first line number)
    stage_label = None
    saw_minimize = False
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _STAGE_RE.match(line)
        if m:
            stage_label = m.group(1)
            current = None
            continue
        tokens = line.split()
        if current is not None:
            if _is_number(tokens[0]) or _NONFINITE_RE.match(tokens[0]):
                if len(tokens) != len(current["header"]):
                    raise MalformedRow(line_no, f"expected {len(current['header'])} values, got {len(tokens)}")
                if any(_NONFINITE_RE.match(t) for t in tokens):
                    raise MalformedRow(line_no, "non-finite thermo value (simulation blew up)")
                try:
                    current["rows"].append([float(t) for t in tokens])
                except ValueError:
                    raise MalformedRow(line_no, "non-numeric value in thermo row") from None
                continue
            if line.startswith("Loop time"):
                current = None
                continue
            if not _is_header(tokens):
                continue  # warnings and other interleaved text
        if _is_header(tokens):
            if saw_minimize:
                label = MINIMIZE_LABEL
            elif stage_label is not None:
                label = stage_label
            else:
                label = f"run-{len(sections) + 1}"
            current = {"label": label, "header": tokens, "rows": [], "line": line_no}
            sections.append(current)
            saw_minimize = False
            continue
        m = _UNITS_RE.match(line)
        if m and m.group(1) != UNITS_STYLE:
            raise UnsupportedUnits(f"line {line_no}: units {m.group(1)!r}; only 'real' is supported")
        if _MINIMIZE_RE.match(line):
            saw_minimize = True

    sections = [s for s in sections if s["rows"]]
    if not sections:
        raise NotAThermoLog("no thermo header ('Step ...') followed by numeric rows")

    names = []
    for s in sections:
        for h in s["header"]:
            if h not in names:
                names.append(h)
    n_total = sum(len(s["rows"]) for s in sections)
    cols = {name: np.full(n_total, np.nan) for name in names}
    out_sections, row = [], 0
    for s in sections:
        block = np.array(s["rows"], dtype=float)
        for j, name in enumerate(s["header"]):
            cols[name][row:row + len(block)] = block[:, j]
        out_sections.append(Section(row, row + len(block), s["label"], tuple(s["header"])))
        row += len(block)
    step = cols["Step"].astype(np.int64)
    for name in ("Density", "Volume"):
        if name in cols:
            v = cols[name]
            if np.any(v[~np.isnan(v)] <= 0):
                raise ParseError(f"non-positive {name} in thermo output")
    return ThermoTable(step, cols, out_sections)


# ---------------------------------------------------------------------------
# data files

_COUNT_RE = re.compile(r"^\s*(\d+)\s+(atoms|bonds|angles|dihedrals|impropers|atom types|bond types)\s*$")
_BOX_RE = re.compile(r"^\s*(\S+)\s+(\S+)\s+([xyz])lo\s+[xyz]hi")
_SECTION_NAMES = {
    "Atoms", "Velocities", "Masses", "Bonds", "Angles", "Dihedrals", "Impropers",
    "Pair Coeffs", "PairIJ Coeffs", "Bond Coeffs", "Angle Coeffs", "Dihedral Coeffs", "Improper Coeffs",
    "BondBond Coeffs", "BondAngle Coeffs", "MiddleBondTorsion Coeffs", "EndBondTorsion Coeffs",
    "AngleTorsion Coeffs", "AngleAngleTorsion Coeffs", "BondBond13 Coeffs", "AngleAngle Coeffs",
}


@dataclass(frozen=True)
class DataFile:
    """Parsed data file: topology plus box and coordinates from the Atoms section."""

    topology: SystemTopology
    box_lo: np.ndarray
    box_hi: np.ndarray
    coords: np.ndarray
    images: np.ndarray | None


def read_data_file(text: str) -> DataFile:
    counts, box_lo, box_hi = {}, [0.0] * 3, [0.0] * 3
    sections: dict = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body, _, comment = raw.partition("#")
        stripped = body.strip()
        if current is None and line_no == 1:
            continue  # title line
        if not stripped:
            continue
        if stripped in _SECTION_NAMES:
            current = stripped
            sections[current] = []
            continue
        if current is None:
            m = _COUNT_RE.match(stripped)
            if m:
                counts[m.group(2)] = int(m.group(1))
                continue
            m = _BOX_RE.match(stripped)
            if m:
                axis = "xyz".index(m.group(3))
                box_lo[axis], box_hi[axis] = float(m.group(1)), float(m.group(2))
            continue
        sections[current].append((stripped.split(), comment.strip(), line_no))

    for key in ("atoms", "atom types"):
        if key not in counts:
            raise HeaderMismatch(f"header lacks '{key}' count")
    atom_rows = sections.get("Atoms", [])
    if len(atom_rows) != counts["atoms"]:
        raise HeaderMismatch(f"header declares {counts['atoms']} atoms, Atoms section has {len(atom_rows)}")
    bond_rows = sections.get("Bonds", [])
    if len(bond_rows) != counts.get("bonds", 0):
        raise HeaderMismatch(f"header declares {counts.get('bonds', 0)} bonds, Bonds section has {len(bond_rows)}")

    type_mass, type_labels = {}, {}
    for toks, comment, _ in sections.get("Masses", []):
        type_mass[int(toks[0])] = float(toks[1])
        if comment:
            type_labels[int(toks[0])] = comment.split()[0]
    if len(type_mass) not in (0, counts["atom types"]):
        raise HeaderMismatch(f"header declares {counts['atom types']} atom types, Masses has {len(type_mass)}")

    ids, mols, types, charges, xyz, img = [], [], [], [], [], []
    for toks, _, line_no in atom_rows:
        if len(toks) not in (7, 10):
            raise HeaderMismatch(f"line {line_no}: atom_style full expects 7 or 10 columns, got {len(toks)}")
        ids.append(int(toks[0]))
        mols.append(int(toks[1]))
        types.append(int(toks[2]))
        charges.append(float(toks[3]))
        xyz.append([float(t) for t in toks[4:7]])
        img.append([int(t) for t in toks[7:10]] if len(toks) == 10 else None)
    if len(set(ids)) != len(ids):
        raise HeaderMismatch("duplicate atom ids in Atoms section")
    if any(t not in type_mass for t in types):
        if type_mass:
            raise HeaderMismatch("atom type without a Masses entry")
    masses = [type_mass.get(t, 12.011) for t in types]

    id_set = set(ids)
    bonds = []
    for toks, _, line_no in bond_rows:
        b = [int(t) for t in toks[:4]]
        if b[2] not in id_set or b[3] not in id_set:
            raise DanglingBond(f"line {line_no}: bond {b[0]} references a missing atom")
        bonds.append(b)

    topo = SystemTopology.build(ids, mols, types, masses, bonds, charges, type_labels)
    order = np.argsort(np.asarray(ids), kind="stable")
    coords = np.asarray(xyz, dtype=float).reshape(-1, 3)[order]
    images = None
    if img and all(r is not None for r in img):
        images = np.asarray(img, dtype=np.int64)[order]
    return DataFile(topo, np.array(box_lo), np.array(box_hi), coords, images)


def parse_data_file(text: str) -> SystemTopology:
    """Topology (molecules, bonds, type labels, chain terminals) of a data file."""
    return read_data_file(text).topology


def write_data_file(topo: SystemTopology, box_lo, box_hi, coords, images=None, title="polyprop data file") -> str:
    lines = [title, ""]
    n_types = int(max(topo.type_ids)) if topo.n_atoms else 0
    n_bond_types = int(max(topo.bonds[:, 1])) if len(topo.bonds) else 0
    lines += [f"{topo.n_atoms} atoms", f"{len(topo.bonds)} bonds", f"{n_types} atom types"]
    if len(topo.bonds):
        lines.append(f"{n_bond_types} bond types")
    lines.append("")
    for ax, lo, hi in zip("xyz", np.asarray(box_lo, float).tolist(), np.asarray(box_hi, float).tolist()):
        lines.append(f"{lo!r} {hi!r} {ax}lo {ax}hi")
    lines += ["", "Masses", ""]
    type_mass = {}
    for t, m in zip(topo.type_ids.tolist(), topo.masses.tolist()):
        type_mass.setdefault(t, m)
    for t in range(1, n_types + 1):
        label = topo.type_labels.get(t)
        suffix = f" # {label}" if label else ""
        lines.append(f"{t} {type_mass.get(t, 1.008)!r}{suffix}")
    lines += ["", "Atoms # full", ""]
    for k, aid in enumerate(topo.atom_ids.tolist()):
        x, y, z = (repr(float(c)) for c in coords[k])
        row = f"{aid} {topo.molecule_ids[k]} {topo.type_ids[k]} {float(topo.charges[k])!r} {x} {y} {z}"
        if images is not None:
            row += " {} {} {}".format(*images[k])
        lines.append(row)
    if len(topo.bonds):
        lines += ["", "Bonds", ""]
        for b in topo.bonds.tolist():
            lines.append(" ".join(str(v) for v in b))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# dumps

_COORD_SETS = (("xu", "yu", "zu"), ("x", "y", "z"), ("xs", "ys", "zs"))


def parse_dump(text: str) -> Trajectory:
    """Read a text dump (``dump custom``) into a trajectory ordered by timestep."""
    lines = text.splitlines()
    frames, ids_ref, kind_ref = [], None, None
    i, n = 0, len(lines)
    while i < n:
        if not lines[i].startswith("ITEM: TIMESTEP"):
            i += 1
            continue
        step = int(lines[i + 1].split()[0])
        if not lines[i + 2].startswith("ITEM: NUMBER OF ATOMS"):
            raise ParseError(f"line {i + 3}: expected 'ITEM: NUMBER OF ATOMS'")
        n_atoms = int(lines[i + 3])
        if not lines[i + 4].startswith("ITEM: BOX BOUNDS"):
            raise ParseError(f"line {i + 5}: expected 'ITEM: BOX BOUNDS'")
        if "xy" in lines[i + 4].split():
            raise ParseError("triclinic boxes are not supported")
        bounds = np.array([[float(v) for v in lines[i + 5 + k].split()[:2]] for k in range(3)])
        header = lines[i + 8]
        if not header.startswith("ITEM: ATOMS"):
            raise ParseError(f"line {i + 9}: expected 'ITEM: ATOMS'")
        cols = header.split()[2:]
        if "id" not in cols:
            raise MissingIdColumn("dump has no 'id' column")
        block = lines[i + 9:i + 9 + n_atoms]
        if len(block) != n_atoms:
            raise ParseError(f"frame at step {step} is truncated")
        data = np.array(" ".join(block).split(), dtype=float).reshape(n_atoms, len(cols))
        for names in _COORD_SETS:
            if all(c in cols for c in names):
                kind = names[0]
                xyz = data[:, [cols.index(c) for c in names]]
                break
        else:
            raise ParseError("dump lacks x/y/z, xu/yu/zu or xs/ys/zs columns")
        lo, hi = bounds[:, 0], bounds[:, 1]
        if kind == "xs":
            xyz = lo + xyz * (hi - lo)
        images = None
        if all(c in cols for c in ("ix", "iy", "iz")):
            images = data[:, [cols.index(c) for c in ("ix", "iy", "iz")]].astype(np.int64)
        ids = data[:, cols.index("id")].astype(np.int64)
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        if ids_ref is None:
            ids_ref, kind_ref = ids, kind
        elif len(ids) != len(ids_ref) or not np.array_equal(ids, ids_ref):
            raise InconsistentAtomSet(f"frame at step {step} has a different atom set")
        frames.append(Frame(step, lo, hi, xyz[order], None if images is None else images[order]))
        i += 9 + n_atoms
    if not frames:
        raise ParseError("no 'ITEM: TIMESTEP' frames found")
    frames.sort(key=lambda f: f.step)
    if kind_ref == "xu":
        wrapped = False
    elif any(f.images is not None for f in frames):
        wrapped = True
    else:
        wrapped = all(np.all((f.coords >= f.box_lo) & (f.coords <= f.box_hi)) for f in frames)
    return Trajectory(ids_ref, frames, wrapped)


def write_dump(traj: Trajectory, types=None, unwrapped=None) -> str:
    """Render a trajectory as ``dump custom`` text (x/y/z or xu/yu/zu)."""
    unwrapped = (not traj.wrapped) if unwrapped is None else unwrapped
    coord_cols = "xu yu zu" if unwrapped else "x y z"
    out = []
    for f in traj.frames:
        img_cols = " ix iy iz" if f.images is not None else ""
        type_col = " type" if types is not None else ""
        out += ["ITEM: TIMESTEP", str(f.step), "ITEM: NUMBER OF ATOMS", str(len(traj.atom_ids)),
                "ITEM: BOX BOUNDS pp pp pp"]
        out += [f"{lo!r} {hi!r}" for lo, hi in zip(f.box_lo.tolist(), f.box_hi.tolist())]
        out.append(f"ITEM: ATOMS id{type_col} {coord_cols}{img_cols}")
        for k, aid in enumerate(traj.atom_ids.tolist()):
            row = [str(aid)]
            if types is not None:
                row.append(str(int(types[k])))
            row += [repr(float(c)) for c in f.coords[k]]
            if f.images is not None:
                row += [str(int(v)) for v in f.images[k]]
            out.append(" ".join(row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# error triage

PPPM_OUT_OF_RANGE = "PPPM_OUT_OF_RANGE"
PAIR_STYLE_MISMATCH = "PAIR_STYLE_MISMATCH"
VELOCITY_REINIT = "VELOCITY_REINIT"
POOR_TG_FIT = "POOR_TG_FIT"
UNKNOWN = "UNKNOWN"

REMEDIATIONS = {
    PPPM_OUT_OF_RANGE: "Switch to cutoff Coulomb or fix deform",
    PAIR_STYLE_MISMATCH: "Regenerate scripts with correct coefficients",
    VELOCITY_REINIT: "Remove velocity create from non-first scripts",
    POOR_TG_FIT: "Adjust bin width; rerun with plateau detection",
    UNKNOWN: "Inspect the log manually",
}

SIGNATURES = (
    (PPPM_OUT_OF_RANGE, re.compile(r"Out of range atoms - cannot compute PPPM", re.IGNORECASE)),
    (PAIR_STYLE_MISMATCH, re.compile(
        r"All pair coeffs are not set"
        r"|Incorrect args for pair coefficients"
        r"|Unrecognized pair style"
        r"|Pair style .* (?:is not compatible|does not support|requires)"
        r"|Must use a pair style with kspace"
        r"|Pair coeff for hybrid has invalid style",
        re.IGNORECASE)),
    (POOR_TG_FIT, re.compile(r"\bquality\b[\"']?\s*[:=]\s*[\"']?POOR\b", re.IGNORECASE)),
)
_VELOCITY_CREATE_RE = re.compile(r"^\s*velocity\s+\S+\s+create\b")
_RUN_RE = re.compile(r"^\s*run\s+\d")
_ERROR_RE = re.compile(r"^\s*ERROR\b")


@dataclass(frozen=True)
class ErrorEvent:
    category: str
    line_no: int
    excerpt: str
    remediation: str

    def to_dict(self):
        return {"category": self.category, "line_no": self.line_no, "excerpt": self.excerpt,
                "remediation": self.remediation}


def detect_errors(text: str) -> list:
    """Classify known failure signatures in a log or (concatenated) input script.

    A ``velocity ... create`` command counts as a re-initialization when it
    appears after the first stage: stages are delimited by ``# STAGE:``
    markers and by ``run`` commands.
    """
    events = []
    stage = 0
    seen_stage_marker = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if _STAGE_RE.match(line):
            if seen_stage_marker:
                stage += 1
            seen_stage_marker = True
            continue
        if _VELOCITY_CREATE_RE.match(line):
            if stage > 0:
                events.append(ErrorEvent(VELOCITY_REINIT, line_no, line.strip(), REMEDIATIONS[VELOCITY_REINIT]))
            continue
        if _RUN_RE.match(line):
            stage += 1
            # the next stage marker after a run opens that same next stage
            seen_stage_marker = False
            continue
        for category, pattern in SIGNATURES:
            if pattern.search(line):
                events.append(ErrorEvent(category, line_no, line.strip(), REMEDIATIONS[category]))
                break
        else:
            if _ERROR_RE.match(line):
                events.append(ErrorEvent(UNKNOWN, line_no, line.strip(), REMEDIATIONS[UNKNOWN]))
    return events

"""Radial distribution functions and chain end-to-end statistics."""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import Frame, SystemTopology, Trajectory
from .exceptions import InsufficientData, RMaxExceedsHalfBox, UnwrapFailure


def label_selector(spec):
    """Build an atom-label predicate from a label, a collection of labels or a callable."""
    if callable(spec):
        return spec
    if spec is None or spec == "all" or spec == "*":
        return lambda label: True
    if isinstance(spec, str):
        wanted = {s.strip() for s in spec.split(",")}
    else:
        wanted = {str(s) for s in spec}
    return lambda label: label in wanted


@dataclass(frozen=True)
class RdfResult:
    r_centers: np.ndarray
    g: np.ndarray
    n_frames: int
    selection: tuple
    counts: np.ndarray

    def to_dict(self):
        return {"r_A": self.r_centers.tolist(), "g": self.g.tolist(), "n_frames": self.n_frames,
                "selection": list(self.selection)}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_A", "g"])
        for r, g in zip(self.r_centers, self.g):
            w.writerow([repr(float(r)), repr(float(g))])
        return buf.getvalue()


def _wrap(coords, lo, length):
    return np.mod(coords - lo, length)


def compute_rdf(traj: Trajectory, topo: SystemTopology, sel_a="all", sel_b="all",
                r_max=15.0, n_bins=150) -> RdfResult:
    """Minimum-image g(r) between two atom-label selections, averaged over frames.

    Each frame's pair histogram is normalized by the shell volume and by the
    ideal pair density (N_A*N_B minus shared atoms) / V. Bonded pairs count.
    """
    if not len(traj):
        raise InsufficientData("trajectory has no frames")
    labels = topo.labels()
    pos_topo = np.searchsorted(topo.atom_ids, traj.atom_ids)
    traj_labels = labels[pos_topo]
    pa, pb = label_selector(sel_a), label_selector(sel_b)
    idx_a = np.flatnonzero([pa(lab) for lab in traj_labels])
    idx_b = np.flatnonzero([pb(lab) for lab in traj_labels])
    if len(idx_a) == 0 or len(idx_b) == 0:
        raise InsufficientData("an RDF selection matched no atoms")
    shared = len(np.intersect1d(idx_a, idx_b))
    n_pairs = len(idx_a) * len(idx_b) - shared

    edges = np.linspace(0.0, r_max, n_bins + 1)
    shell = 4.0 / 3.0 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
    g_sum = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    for f in traj.frames:
        L = f.box_length
        if r_max > 0.5 * L.min():
            raise RMaxExceedsHalfBox(f"r_max {r_max} exceeds half the smallest box edge {0.5 * L.min()}")
        x = _wrap(f.coords, f.box_lo, L)
        # cKDTree needs coordinates strictly below boxsize
        x = np.where(x >= L, x - L, x)
        tree_a = cKDTree(x[idx_a], boxsize=L)
        tree_b = cKDTree(x[idx_b], boxsize=L)
        pairs = tree_a.sparse_distance_matrix(tree_b, r_max, output_type="ndarray")
        i, j, d = pairs["i"], pairs["j"], pairs["v"]
        keep = idx_a[i] != idx_b[j]
        h, _ = np.histogram(d[keep], bins=edges)
        counts += h
        ideal = n_pairs / f.volume * shell
        g_sum += h / ideal
    centers = 0.5 * (edges[1:] + edges[:-1])
    return RdfResult(centers, g_sum / len(traj), len(traj), (str(sel_a), str(sel_b)), counts)


# ---------------------------------------------------------------------------
# unwrapping


def _adjacency(topo):
    adj = {}
    for _, _, i, j in topo.bonds.tolist():
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    for v in adj.values():
        v.sort()
    return adj


def _bfs_unwrap(frame, traj, topo, adj):
    L = frame.box_length
    x = np.array(frame.coords, dtype=float)
    pos = {int(a): k for k, a in enumerate(traj.atom_ids.tolist())}
    done = np.zeros(len(x), dtype=bool)
    roots = []
    for mol, ends in sorted(topo.chains.items()):
        roots.append(ends[0])
    roots += sorted(pos)
    for root in roots:
        if root not in pos or done[pos[root]]:
            continue
        done[pos[root]] = True
        queue = deque([root])
        while queue:
            u = queue.popleft()
            pu = pos[u]
            for v in adj.get(u, ()):
                pv = pos.get(v)
                if pv is None or done[pv]:
                    continue
                d = x[pv] - x[pu]
                d = d - L * np.round(d / L)
                if np.any(np.abs(d) >= 0.5 * L):
                    raise UnwrapFailure(f"bond {u}-{v} cannot be made shorter than half the box")
                x[pv] = x[pu] + d
                done[pv] = True
                queue.append(v)
    return x


def unwrap(traj: Trajectory, topo: SystemTopology) -> Trajectory:
    """Remove periodic wrapping, from image flags when present, otherwise by
    walking bonds outward from each chain terminal."""
    if not traj.wrapped:
        return traj
    frames = []
    if traj.has_images:
        for f in traj.frames:
            frames.append(Frame(f.step, f.box_lo, f.box_hi, f.coords + f.images * f.box_length, None))
    else:
        adj = _adjacency(topo)
        for f in traj.frames:
            frames.append(Frame(f.step, f.box_lo, f.box_hi, _bfs_unwrap(f, traj, topo, adj), None))
    return Trajectory(traj.atom_ids, frames, wrapped=False)


# ---------------------------------------------------------------------------
# end-to-end


@dataclass(frozen=True)
class E2EResult:
    mean_R_A: float
    mean_R2_A2: float
    R_A: np.ndarray  # (n_frames, n_chains)
    molecule_ids: tuple
    n_frames: int
    n_chains: int

    def to_dict(self):
        return {"mean_R_A": self.mean_R_A, "mean_R2_A2": self.mean_R2_A2, "n_frames": self.n_frames,
                "n_chains": self.n_chains, "molecule_ids": list(self.molecule_ids),
                "per_chain_mean_R_A": self.R_A.mean(axis=0).tolist()}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "molecule_id", "R_A"])
        for k in range(self.n_frames):
            for c, mol in enumerate(self.molecule_ids):
                w.writerow([k, mol, repr(float(self.R_A[k, c]))])
        return buf.getvalue()


def end_to_end(traj: Trajectory, topo: SystemTopology) -> E2EResult:
    """Terminal-to-terminal distance of every chain in every frame."""
    if not len(traj):
        raise InsufficientData("trajectory has no frames")
    if not topo.chains:
        raise InsufficientData("topology has no chains")
    traj = unwrap(traj, topo)
    mols = tuple(sorted(topo.chains))
    t1 = traj.index_of(topo.chains[m][0] for m in mols)
    t2 = traj.index_of(topo.chains[m][1] for m in mols)
    R = np.array([np.linalg.norm(f.coords[t1] - f.coords[t2], axis=1) for f in traj.frames])
    return E2EResult(float(R.mean(axis=1).mean()), float((R ** 2).mean(axis=1).mean()), R, mols,
                     len(traj), len(mols))

"""LAMMPS input generation for staged equilibration and stepwise-cooling Tg sweeps.

Scripts are assembled from a closed command vocabulary (see ``VOCABULARY``).
Stages are chained through ``write_data``/``read_data`` so velocities carry
over; only the very first script may create velocities.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .exceptions import InvalidSpec, InvalidSweep

MINIMIZE = "MINIMIZE"
NVT = "NVT"
NPT_COMPRESS = "NPT_COMPRESS"
NPT_DECOMPRESS = "NPT_DECOMPRESS"
NPT_COOL = "NPT_COOL"
NVT_PRODUCTION = "NVT_PRODUCTION"
NPT_PRODUCTION = "NPT_PRODUCTION"
DEFORM_COMPRESS = "DEFORM_COMPRESS"
STAGE_KINDS = (MINIMIZE, NVT, NPT_COMPRESS, NPT_DECOMPRESS, NPT_COOL, NVT_PRODUCTION, NPT_PRODUCTION,
               DEFORM_COMPRESS)

CUTOFF_LJ = "cutoff-LJ"
CUTOFF_COULOMB = "cutoff-Coulomb"
PPPM = "PPPM"
ELECTROSTATICS = (CUTOFF_LJ, CUTOFF_COULOMB, PPPM)

THERMOSTAT_DAMP_STEPS = 100
BAROSTAT_DAMP_STEPS = 1000
PPPM_ACCURACY = "1.0e-6"
DEFAULT_COMPRESS_ATM = 1000.0
THERMO_COLUMNS = ("Step", "Temp", "Press", "Density", "Volume", "TotEng", "PotEng", "KinEng")
_THERMO_KEYWORDS = "step temp press density vol etotal pe ke"

VOCABULARY = frozenset({
    "units", "atom_style", "boundary", "bond_style", "angle_style", "dihedral_style", "improper_style",
    "pair_style", "pair_modify", "kspace_style", "special_bonds", "read_data", "write_data", "neighbor",
    "neigh_modify", "timestep", "run_style", "velocity", "fix", "unfix", "thermo", "thermo_style",
    "thermo_modify", "minimize", "min_style", "run", "variable", "reset_timestep", "dump", "undump",
})

_DEFAULT_LABELS = {
    MINIMIZE: "minimize", NVT: "nvt-heat", NPT_COMPRESS: "npt-compress", NPT_DECOMPRESS: "npt-decompress",
    NPT_COOL: "npt-cool", NVT_PRODUCTION: "nvt-production", NPT_PRODUCTION: "npt-production",
    DEFORM_COMPRESS: "deform-compress",
}


@dataclass(frozen=True)
class StageSpec:
    kind: str
    T_K: float | None = None
    T_end_K: float | None = None
    P_atm: float | None = None
    duration_steps: int = 100000
    electrostatics: str | None = None
    target_density: float | None = None
    label: str | None = None

    @property
    def thermostat_damp_steps(self):
        return THERMOSTAT_DAMP_STEPS

    @property
    def barostat_damp_steps(self):
        return BAROSTAT_DAMP_STEPS

    def validate(self):
        if self.kind not in STAGE_KINDS:
            raise InvalidSpec(f"unknown stage kind {self.kind!r}")
        if self.electrostatics is not None and self.electrostatics not in ELECTROSTATICS:
            raise InvalidSpec(f"unknown electrostatics mode {self.electrostatics!r}")
        if self.kind != MINIMIZE and (self.T_K is None or self.T_K <= 0):
            raise InvalidSpec(f"{self.kind} stage needs a positive T_K")
        if self.kind.startswith("NPT") and (self.P_atm is None or self.P_atm <= 0):
            raise InvalidSpec(f"{self.kind} stage needs a positive P_atm")
        if self.kind == DEFORM_COMPRESS and not (self.target_density and self.target_density > 0):
            raise InvalidSpec("DEFORM_COMPRESS requires a positive target_density")
        if self.duration_steps <= 0:
            raise InvalidSpec("duration_steps must be positive")


@dataclass(frozen=True)
class TgSweep:
    T_start_K: float
    T_end_K: float
    step_K: float
    ns_per_step: float = 1.0
    P_atm: float = 1.0
    thermo_every: int = 1000


@dataclass(frozen=True)
class WorkflowSpec:
    polymer: str = "polymer"
    force_field: str = "GAFF2"
    charge_method: str = "Gasteiger"
    electrostatics: str = PPPM
    timestep_fs: float = 1.0
    shake: bool = False
    stages: tuple = ()
    tg_sweep: TgSweep | None = None
    data_file: str = "system.data"
    target_T_K: float = 300.0
    anneal_T_K: float = 600.0
    compress_P_atm: float = DEFAULT_COMPRESS_ATM
    cutoff_A: float = 12.0
    seed: int = 12345
    thermo_every: int = 1000
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        stages = tuple(StageSpec(**s) if isinstance(s, dict) else s for s in d.pop("stages", ()) or ())
        sweep = d.pop("tg_sweep", None)
        if isinstance(sweep, dict):
            sweep = TgSweep(**sweep)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown workflow keys: {sorted(unknown)}")
        return cls(stages=stages, tg_sweep=sweep, **d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        if self.force_field not in ("GAFF2", "GAFF2_mod"):
            raise InvalidSpec(f"force field must be GAFF2 or GAFF2_mod, got {self.force_field!r}")
        if self.charge_method not in ("Gasteiger", "RESP"):
            raise InvalidSpec(f"charge method must be Gasteiger or RESP, got {self.charge_method!r}")
        if self.electrostatics not in ELECTROSTATICS:
            raise InvalidSpec(f"unknown electrostatics mode {self.electrostatics!r}")
        if self.timestep_fs not in (1.0, 2.0):
            raise InvalidSpec("timestep must be 1.0 fs, or 2.0 fs with SHAKE")
        if self.timestep_fs == 2.0 and not self.shake:
            raise InvalidSpec("a 2.0 fs timestep requires SHAKE constraints (shake=true)")
        for s in self.stages:
            s.validate()
        if self.tg_sweep is not None:
            _validate_sweep(self.tg_sweep)

    def resolved_stages(self):
        if self.stages:
            return list(self.stages)
        return [
            StageSpec(MINIMIZE, electrostatics=CUTOFF_LJ if self.electrostatics == CUTOFF_LJ else CUTOFF_COULOMB),
            StageSpec(NVT, T_K=self.anneal_T_K, duration_steps=100000,
                      electrostatics=CUTOFF_LJ if self.electrostatics == CUTOFF_LJ else CUTOFF_COULOMB),
            StageSpec(NPT_COMPRESS, T_K=self.anneal_T_K, P_atm=self.compress_P_atm, duration_steps=200000,
                      electrostatics=CUTOFF_LJ if self.electrostatics == CUTOFF_LJ else CUTOFF_COULOMB),
            StageSpec(NPT_DECOMPRESS, T_K=self.anneal_T_K, P_atm=1.0, duration_steps=200000,
                      electrostatics=self.electrostatics),
            StageSpec(NPT_COOL, T_K=self.anneal_T_K, T_end_K=self.target_T_K, P_atm=1.0,
                      duration_steps=500000, electrostatics=self.electrostatics),
            StageSpec(NVT_PRODUCTION, T_K=self.target_T_K, duration_steps=500000,
                      electrostatics=self.electrostatics),
        ]


def _validate_sweep(sw):
    span = sw.T_start_K - sw.T_end_K
    if span <= 0:
        raise InvalidSweep("Tg sweep must cool: T_start_K must exceed T_end_K")
    if sw.step_K <= 0:
        raise InvalidSweep("step_K must be positive")
    n = round(span / sw.step_K)
    if abs(n * sw.step_K - span) > 1e-9 * span:
        raise InvalidSweep(f"step {sw.step_K} K does not divide the range {sw.T_start_K}->{sw.T_end_K} K")
    if sw.ns_per_step <= 0:
        raise InvalidSweep("ns_per_step must be positive")


def _num(v):
    return f"{float(v):g}"


def _header(spec, label, stage=None):
    lines = [f"# STAGE: {label}",
             f"# polymer: {spec.polymer}; force field: {spec.force_field}; charges: {spec.charge_method}",
             f"# timestep: {_num(spec.timestep_fs)} fs; shake: {'yes' if spec.shake else 'no'}"]
    if stage is not None and stage.kind in (NPT_COMPRESS,):
        lines.append(f"# compression pressure: {_num(stage.P_atm)} atm")
    lines.append("")
    return lines


def _force_field_block(spec, electrostatics, data_in):
    cut = _num(spec.cutoff_A)
    if electrostatics == CUTOFF_LJ:
        pair = [f"pair_style lj/cut {cut}"]
    elif electrostatics == CUTOFF_COULOMB:
        inner = _num(spec.cutoff_A - 2.0)
        pair = [f"pair_style lj/charmm/coul/charmm {inner} {cut}"]
    else:
        pair = [f"pair_style lj/cut/coul/long {cut}", f"kspace_style pppm {PPPM_ACCURACY}"]
    return [
        "units real",
        "atom_style full",
        "boundary p p p",
        "bond_style harmonic",
        "angle_style harmonic",
        "dihedral_style fourier",
        "improper_style cvff",
        *pair,
        "pair_modify mix arithmetic",
        "special_bonds amber",
        f"read_data {data_in}",
        "neighbor 2.0 bin",
        "neigh_modify delay 0 every 1 check yes",
        f"timestep {_num(spec.timestep_fs)}",
        f"thermo_style custom {_THERMO_KEYWORDS}",
        f"thermo {spec.thermo_every}",
    ]


def _shake(spec):
    return ["fix shk all shake 1.0e-4 20 0 m 1.008"] if spec.shake else []


def _damps(spec):
    return _num(THERMOSTAT_DAMP_STEPS * spec.timestep_fs), _num(BAROSTAT_DAMP_STEPS * spec.timestep_fs)


def _stage_body(spec, stage, first, next_T):
    tdamp, pdamp = _damps(spec)
    T = _num(stage.T_K) if stage.T_K is not None else None
    T_end = _num(stage.T_end_K if stage.T_end_K is not None else stage.T_K) if stage.T_K is not None else None
    lines = []
    if stage.kind == MINIMIZE:
        lines += ["min_style cg", "minimize 1.0e-4 1.0e-6 10000 100000"]
        if first:
            lines.append(f"velocity all create {_num(next_T)} {spec.seed} dist gaussian mom yes rot yes")
        return lines
    if first:
        lines.append(f"velocity all create {T} {spec.seed} dist gaussian mom yes rot yes")
    lines += _shake(spec)
    n = stage.duration_steps
    if stage.kind in (NVT, NVT_PRODUCTION):
        lines += [f"fix int all nvt temp {T} {T_end} {tdamp}", f"run {n}", "unfix int"]
    elif stage.kind in (NPT_COMPRESS, NPT_DECOMPRESS, NPT_COOL, NPT_PRODUCTION):
        P = _num(stage.P_atm)
        lines += [f"fix int all npt temp {T} {T_end} {tdamp} iso {P} {P} {pdamp}", f"run {n}", "unfix int"]
    elif stage.kind == DEFORM_COMPRESS:
        rho = _num(stage.target_density)
        lines += [
            "run 0",
            f"variable scale equal (density/{rho})^(1.0/3.0)",
            f"fix def all deform 100 x scale ${{scale}} y scale ${{scale}} z scale ${{scale}} remap x",
            f"fix int all nvt temp {T} {T_end} {tdamp}",
            f"run {n}",
            "unfix def",
            "unfix int",
        ]
    if spec.shake:
        lines.append("unfix shk")
    return lines


def generate_equilibration_workflow(spec: WorkflowSpec) -> list:
    """One ``(label, script)`` per stage; default sequence is minimize, NVT heating,
    NPT compression, NPT decompression with full electrostatics, NPT cooling and
    NVT production."""
    spec.validate()
    stages = spec.resolved_stages()
    out, data_in, used = [], spec.data_file, {}
    for k, stage in enumerate(stages):
        base = stage.label or _DEFAULT_LABELS[stage.kind]
        used[base] = used.get(base, 0) + 1
        label = base if used[base] == 1 else f"{base}-{used[base]}"
        electro = stage.electrostatics or spec.electrostatics
        next_T = next((s.T_K for s in stages[k + 1:] if s.T_K), spec.anneal_T_K)
        data_out = f"{label}.data"
        lines = _header(spec, label, stage)
        lines += _force_field_block(spec, electro, data_in)
        lines += _stage_body(spec, stage, k == 0, next_T)
        lines.append(f"write_data {data_out} pair ii")
        out.append((label, "\n".join(lines) + "\n"))
        data_in = data_out
    return out


def generate_tg_sweep(spec: WorkflowSpec, data_in=None) -> str:
    """Stepwise-cooling script: one NPT segment per set-point, momenta inherited."""
    if spec.tg_sweep is None:
        raise InvalidSweep("workflow spec has no tg_sweep")
    _validate_sweep(spec.tg_sweep)
    spec.validate()
    sw = spec.tg_sweep
    n = int(round((sw.T_start_K - sw.T_end_K) / sw.step_K))
    setpoints = [sw.T_start_K - k * sw.step_K for k in range(n + 1)]
    steps = int(round(sw.ns_per_step * 1e6 / spec.timestep_fs))
    tdamp, pdamp = _damps(spec)
    P = _num(sw.P_atm)
    lines = _header(spec, "tg-sweep")
    lines.insert(3, f"# sweep: {_num(sw.T_start_K)} -> {_num(sw.T_end_K)} K, step {_num(sw.step_K)} K, "
                    f"{_num(sw.ns_per_step)} ns per set-point")
    lines += _force_field_block(dataclasses.replace(spec, thermo_every=sw.thermo_every), spec.electrostatics,
                                data_in or spec.data_file)
    lines += _shake(spec)
    for k, T in enumerate(setpoints):
        t = _num(T)
        lines += [f"fix cool{k} all npt temp {t} {t} {tdamp} iso {P} {P} {pdamp}", f"run {steps}",
                  f"unfix cool{k}"]
    if spec.shake:
        lines.append("unfix shk")
    lines.append("write_data tg-sweep.data pair ii")
    return "\n".join(lines) + "\n"


def tg_setpoints(spec: WorkflowSpec) -> list:
    sw = spec.tg_sweep
    n = int(round((sw.T_start_K - sw.T_end_K) / sw.step_K))
    return [sw.T_start_K - k * sw.step_K for k in range(n + 1)]


def workflow_manifest(spec: WorkflowSpec, scripts) -> dict:
    """Stage order, per-run parameters and expected thermo columns."""
    stages = spec.resolved_stages()
    manifest = {
        "polymer": spec.polymer,
        "force_field": spec.force_field,
        "charges": spec.charge_method,
        "timestep_fs": spec.timestep_fs,
        "shake": spec.shake,
        "electrostatics": spec.electrostatics,
        "pppm_accuracy": PPPM_ACCURACY,
        "thermostat_damp_steps": THERMOSTAT_DAMP_STEPS,
        "barostat_damp_steps": BAROSTAT_DAMP_STEPS,
        "eq_stages": len(scripts),
        "stages": [
            {"label": label, "file": f"{i:02d}_{label}.in", "kind": st.kind, "T_K": st.T_K,
             "T_end_K": st.T_end_K, "P_atm": st.P_atm, "duration_steps": st.duration_steps,
             "electrostatics": st.electrostatics or spec.electrostatics}
            for i, ((label, _), st) in enumerate(zip(scripts, stages))
        ],
        "thermo_columns": list(THERMO_COLUMNS),
    }
    if spec.tg_sweep is not None:
        sw = spec.tg_sweep
        manifest["tg_sweep"] = {"range_K": [sw.T_start_K, sw.T_end_K], "step_K": sw.step_K,
                                "ns_per_step": sw.ns_per_step, "setpoints_K": tg_setpoints(spec)}
    return manifest


def check_vocabulary(script: str) -> list:
    """Commands in a script that fall outside the closed vocabulary."""
    bad = []
    for line in script.splitlines():
        s = line.split("#", 1)[0].strip()
        if s and s.split()[0] not in VOCABULARY:
            bad.append(s.split()[0])
    return bad


def write_workflow(spec: WorkflowSpec, directory) -> dict:
    """Write stage scripts, the optional Tg sweep and manifest.json into ``directory``."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scripts = generate_equilibration_workflow(spec)
    manifest = workflow_manifest(spec, scripts)
    for entry, (_, text) in zip(manifest["stages"], scripts):
        (d / entry["file"]).write_text(text)
    if spec.tg_sweep is not None:
        (d / "tg_sweep.in").write_text(generate_tg_sweep(spec, data_in=f"{scripts[-1][0]}.data"))
        manifest["tg_sweep"]["file"] = "tg_sweep.in"
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest

"""Task functions shared by the CLI and the tool server.

Each task takes plain (JSON-compatible) arguments, runs the library call and
returns the result payload; ``core.to_json`` of that payload is what both
front ends emit, so their outputs are byte-identical.
"""
from __future__ import annotations

from pathlib import Path

from . import protocol, report, structure, thermo
from .lammps import detect_errors, parse_dump, parse_thermo_log, read_data_file
from .tg import TgConfig, extract_tg, schedule_from_range


def _read(path):
    return Path(path).read_text()


def parse_schedule(schedule):
    """``"500:80:30"`` or a list of set-points -> tuple of floats (or None)."""
    if schedule is None or schedule == "":
        return None
    if isinstance(schedule, str):
        parts = [float(p) for p in schedule.split(":")]
        if len(parts) != 3:
            raise ValueError("schedule must be START:STOP:STEP")
        return schedule_from_range(*parts)
    return tuple(float(t) for t in schedule)


def parse_stage(stage):
    if isinstance(stage, str) and stage.lstrip("-").isdigit():
        return int(stage)
    return stage


def tg_config(schedule=None, config=None) -> TgConfig:
    cfg = dict(config or {})
    sched = parse_schedule(schedule)
    if sched is not None:
        cfg["setpoint_schedule"] = sched
    return TgConfig.from_dict(cfg)


def task_extract_tg(log_path, schedule=None, config=None):
    cfg = tg_config(schedule, config)
    return extract_tg(_read(log_path), cfg).to_dict()


def task_density(log_path, stage=None):
    res = thermo.equilibrated_density(parse_thermo_log(_read(log_path)), parse_stage(stage))
    return {**res.to_dict(), "config": {"stage": stage}}


def task_bulk_modulus(log_path, temperature_K=300.0, stage=None):
    res = thermo.bulk_modulus(parse_thermo_log(_read(log_path)), parse_stage(stage), float(temperature_K))
    return {**res.to_dict(), "config": {"stage": stage, "temperature_K": float(temperature_K)}}


def task_check_equilibration(log_path, stage=None):
    res = thermo.convergence_metrics(parse_thermo_log(_read(log_path)), parse_stage(stage))
    return {**res.to_dict(), "config": {"stage": stage}}


def _traj_and_topo(dump_path, data_path):
    return parse_dump(_read(dump_path)), read_data_file(_read(data_path)).topology


def task_rdf(dump_path, data_path, type_a="all", type_b="all", r_max=15.0, n_bins=150):
    traj, topo = _traj_and_topo(dump_path, data_path)
    res = structure.compute_rdf(traj, topo, type_a, type_b, float(r_max), int(n_bins))
    return {**res.to_dict(), "config": {"type_a": type_a, "type_b": type_b, "r_max": float(r_max),
                                        "n_bins": int(n_bins)}}


def task_end_to_end(dump_path, data_path):
    traj, topo = _traj_and_topo(dump_path, data_path)
    return {**structure.end_to_end(traj, topo).to_dict(), "config": {}}


def task_detect_errors(log_path=None, text=None):
    if text is None:
        text = _read(log_path)
    events = detect_errors(text)
    return {"events": [e.to_dict() for e in events], "n_events": len(events)}


def task_generate_workflow(spec):
    wf = protocol.WorkflowSpec.from_dict(spec or {})
    scripts = protocol.generate_equilibration_workflow(wf)
    return {"scripts": [{"label": label, "script": text} for label, text in scripts],
            "manifest": protocol.workflow_manifest(wf, scripts)}


def task_generate_script(spec, kind="tg_sweep"):
    """A single script: the Tg sweep, or one stage of the equilibration workflow by label or kind."""
    wf = protocol.WorkflowSpec.from_dict(spec or {})
    if kind in ("tg_sweep", "tg-sweep", "TG_SWEEP"):
        return {"label": "tg-sweep", "script": protocol.generate_tg_sweep(wf)}
    for (label, text), st in zip(protocol.generate_equilibration_workflow(wf), wf.resolved_stages()):
        if kind in (label, st.kind):
            return {"label": label, "script": text}
    raise protocol.InvalidSpec(f"no stage {kind!r} in the workflow")


def task_validate(predictions, references_path=None):
    refs = report.load_references(references_path)
    return report.summary_dict(report.validate(predictions, refs))

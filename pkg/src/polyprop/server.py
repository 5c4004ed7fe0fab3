"""MCP-style tool server: newline-delimited JSON-RPC 2.0 over stdio (or TCP).

Analyses run as background jobs on a bounded thread pool and are polled with
``get_job_status`` / ``get_job_output``; generators and error triage answer
inline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import secrets
import socketserver
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, api
from .core import to_json
from .exceptions import JobNotFound, JobNotReady, PolyPropError

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "2024-11-05"
DEFAULT_WORKERS = 4
WORKSPACE_ENV = "POLYPROP_WORKSPACE"
WORKERS_ENV = "POLYPROP_WORKERS"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

QUEUED, RUNNING, DONE, FAILED = "QUEUED", "RUNNING", "DONE", "FAILED"

# Tools listed by the original platform that are backed by out-of-scope
# machinery (molecule construction, remote LAMMPS execution).
UNIMPLEMENTED_TOOLS = (
    "classify_polymer", "build_molecule_from_smiles", "assign_forcefield", "submit_conformer_search_job",
    "submit_assign_charges_job", "submit_polymerize_job", "submit_generate_cell_job", "save_lammps_data",
    "run_lammps_chain", "get_run_status", "get_run_output",
)


# ---------------------------------------------------------------------------
# jobs


@dataclass
class JobRecord:
    job_id: str
    tool: str
    params_digest: str
    state: str = QUEUED
    submitted_at: float = field(default_factory=time.time)
    started_at: float | None = None
    completed_at: float | None = None
    result: object = None
    error: dict | None = None

    def status(self):
        out = {"job_id": self.job_id, "tool": self.tool, "state": self.state,
               "params_digest": self.params_digest, "submitted_at": self.submitted_at,
               "started_at": self.started_at, "completed_at": self.completed_at}
        if self.error is not None:
            out["error"] = self.error
        return out


def params_digest(params):
    return hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode()).hexdigest()


class JobRegistry:
    """Background jobs on a bounded pool; results live until the process exits."""

    def __init__(self, max_workers=DEFAULT_WORKERS):
        self.max_workers = max_workers
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="polyprop-job")
        self._jobs: dict = {}
        self._lock = threading.Lock()

    def submit(self, tool, fn, params) -> str:
        job_id = secrets.token_hex(16)
        rec = JobRecord(job_id, tool, params_digest(params))
        with self._lock:
            self._jobs[job_id] = rec
        self._pool.submit(self._run, rec, fn, params)
        return job_id

    def _run(self, rec, fn, params):
        with self._lock:
            rec.state = RUNNING
            rec.started_at = time.time()
        try:
            result = fn(**params)
        except PolyPropError as exc:
            err = exc.to_dict()
        except Exception as exc:  # job isolation: never let a worker die silently
            log.exception("job %s (%s) crashed", rec.job_id, rec.tool)
            err = {"error": type(exc).__name__, "message": str(exc)}
        else:
            with self._lock:
                rec.result = result
                rec.state = DONE
                rec.completed_at = time.time()
            return
        with self._lock:
            rec.error = err
            rec.state = FAILED
            rec.completed_at = time.time()

    def get(self, job_id) -> JobRecord:
        with self._lock:
            rec = self._jobs.get(job_id)
        if rec is None:
            raise JobNotFound(f"unknown job_id {job_id!r}")
        return rec

    def status(self, job_id) -> dict:
        rec = self.get(job_id)
        with self._lock:
            return rec.status()

    def output(self, job_id):
        rec = self.get(job_id)
        with self._lock:
            state, result, error = rec.state, rec.result, rec.error
        if state == DONE:
            return result
        if state == FAILED:
            raise JobFailed(error)
        raise JobNotReady(f"job {job_id} is {state}")

    def wait(self, job_id, timeout=None):
        """Block until the job finishes (testing and scripting helper)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            state = self.status(job_id)["state"]
            if state in (DONE, FAILED):
                return state
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError(f"job {job_id} still {state}")
            time.sleep(0.005)

    def shutdown(self, wait=True):
        self._pool.shutdown(wait=wait)


class JobFailed(PolyPropError):
    def __init__(self, error):
        super().__init__(error.get("message", "job failed"))
        self.error = error

    def to_dict(self):
        return {"error": "JobFailed", "message": str(self), "cause": self.error}


# ---------------------------------------------------------------------------
# tool table


def _s(type_, desc, **extra):
    return {"type": type_, "description": desc, **extra}


_LOG = _s("string", "Path to a LAMMPS log file, relative to the workspace root")
_STAGE = {"type": ["string", "integer"], "description": "Section label (e.g. 'npt-production'), 'run-<k>' or "
                                                         "section index; default is the last non-minimize section"}
_DUMP = _s("string", "Path to a LAMMPS custom dump (id plus x/y/z or xu/yu/zu columns)")
_DATA = _s("string", "Path to a LAMMPS data file (atom_style full)")
_SPEC = _s("object", "Workflow spec: polymer, force_field, charge_method, electrostatics, timestep_fs, shake, "
                     "stages, tg_sweep {T_start_K, T_end_K, step_K, ns_per_step}, ...")

TOOLS = {
    "extract_tg": {
        "mode": "async", "fn": api.task_extract_tg, "paths": ("log_path",),
        "description": "Glass-transition temperature from a stepwise-cooling log via the maximum-F bilinear split.",
        "properties": {"log_path": _LOG,
                       "schedule": {"type": ["string", "array"], "description": "Set-points 'START:STOP:STEP' "
                                    "or a list in K; inferred from the temperature trace when omitted"},
                       "config": _s("object", "Overrides: retention_fraction, min_bins_per_side, "
                                              "plateau_drift_threshold, quality thresholds")},
        "required": ["log_path"],
    },
    "extract_equilibrated_density": {
        "mode": "async", "fn": api.task_density, "paths": ("log_path",),
        "description": "Mean density and 5-block SEM over the last 50% of an NPT production section.",
        "properties": {"log_path": _LOG, "stage": _STAGE}, "required": ["log_path"],
    },
    "extract_bulk_modulus": {
        "mode": "async", "fn": api.task_bulk_modulus, "paths": ("log_path",),
        "description": "Isothermal bulk modulus from NPT volume fluctuations (last 50%, 5-block SEM).",
        "properties": {"log_path": _LOG, "stage": _STAGE,
                       "temperature_K": _s("number", "Production temperature in K", default=300.0)},
        "required": ["log_path"],
    },
    "check_equilibration": {
        "mode": "async", "fn": api.task_check_equilibration, "paths": ("log_path",),
        "description": "Density/energy drift, block SEM and density CV; passes when energy drift < 0.5% and "
                       "density CV < 2%.",
        "properties": {"log_path": _LOG, "stage": _STAGE}, "required": ["log_path"],
    },
    "calculate_rdf": {
        "mode": "async", "fn": api.task_rdf, "paths": ("dump_path", "data_path"),
        "description": "Minimum-image radial distribution function between two atom-type selections.",
        "properties": {"dump_path": _DUMP, "data_path": _DATA,
                       "type_a": _s("string", "Type label(s), comma separated, or 'all'", default="all"),
                       "type_b": _s("string", "Type label(s), comma separated, or 'all'", default="all"),
                       "r_max": _s("number", "Cutoff radius in Angstrom", default=15.0),
                       "n_bins": _s("integer", "Histogram bins", default=150)},
        "required": ["dump_path", "data_path"],
    },
    "extract_end_to_end_vectors": {
        "mode": "async", "fn": api.task_end_to_end, "paths": ("dump_path", "data_path"),
        "description": "Per-chain end-to-end distances after unwrapping, with <R> and <R^2>.",
        "properties": {"dump_path": _DUMP, "data_path": _DATA}, "required": ["dump_path", "data_path"],
    },
    "generate_script": {
        "mode": "sync", "fn": api.task_generate_script, "paths": (),
        "description": "One LAMMPS input script: the Tg sweep ('tg_sweep') or a single workflow stage.",
        "properties": {"spec": _SPEC, "kind": _s("string", "'tg_sweep', a stage label or a stage kind",
                                                 default="tg_sweep")},
        "required": ["spec"],
    },
    "generate_equilibration_workflow": {
        "mode": "sync", "fn": api.task_generate_workflow, "paths": (),
        "description": "Staged equilibration scripts plus a manifest of stage order and parameters.",
        "properties": {"spec": _SPEC}, "required": [],
    },
    "detect_errors": {
        "mode": "sync", "fn": api.task_detect_errors, "paths": ("log_path",),
        "description": "Classify known failure signatures (PPPM range, pair style, velocity re-init, poor Tg fit).",
        "properties": {"log_path": _LOG, "text": _s("string", "Raw log or script text instead of a path")},
        "required": [],
    },
    "get_job_status": {
        "mode": "sync", "fn": None, "paths": (),
        "description": "State of a background job (QUEUED, RUNNING, DONE, FAILED).",
        "properties": {"job_id": _s("string", "Identifier returned by an async tool")}, "required": ["job_id"],
    },
    "get_job_output": {
        "mode": "sync", "fn": None, "paths": (),
        "description": "Result payload of a finished background job.",
        "properties": {"job_id": _s("string", "Identifier returned by an async tool")}, "required": ["job_id"],
    },
}


def tool_descriptors():
    out = []
    for name, t in TOOLS.items():
        out.append({
            "name": name,
            "description": f"[{t['mode']}] {t['description']}",
            "inputSchema": {"type": "object", "properties": t["properties"], "required": t["required"],
                            "additionalProperties": False},
        })
    return out


# ---------------------------------------------------------------------------
# dispatcher


class ToolError(PolyPropError):
    pass


class RpcError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class ToolServer:
    def __init__(self, workspace=None, max_workers=None):
        root = workspace or os.environ.get(WORKSPACE_ENV) or os.getcwd()
        self.workspace = Path(root).resolve()
        if max_workers is None:
            max_workers = int(os.environ.get(WORKERS_ENV, DEFAULT_WORKERS))
        self.jobs = JobRegistry(max_workers)

    def resolve(self, path):
        p = Path(path)
        full = (p if p.is_absolute() else self.workspace / p).resolve()
        try:
            full.relative_to(self.workspace)
        except ValueError:
            raise ToolError(f"path {path!r} is outside the workspace root") from None
        return str(full)

    def _prepare(self, name, args):
        t = TOOLS[name]
        allowed = set(t["properties"])
        unknown = set(args) - allowed
        if unknown:
            raise RpcError(INVALID_PARAMS, f"unknown arguments for {name}: {sorted(unknown)}")
        missing = [r for r in t["required"] if r not in args]
        if missing:
            raise RpcError(INVALID_PARAMS, f"missing arguments for {name}: {missing}")
        args = dict(args)
        for key in t["paths"]:
            if args.get(key) is not None:
                args[key] = self.resolve(args[key])
        return args

    def call_tool(self, name, args):
        """Payload of a tool call (raises PolyPropError for tool-level failures)."""
        if name not in TOOLS:
            raise RpcError(METHOD_NOT_FOUND, f"unknown tool {name!r}")
        if not isinstance(args, dict):
            raise RpcError(INVALID_PARAMS, "arguments must be an object")
        args = self._prepare(name, args)
        if name == "get_job_status":
            return self.jobs.status(args["job_id"])
        if name == "get_job_output":
            return self.jobs.output(args["job_id"])
        t = TOOLS[name]
        if t["mode"] == "async":
            return {"job_id": self.jobs.submit(name, t["fn"], args), "state": QUEUED}
        return t["fn"](**args)

    def handle(self, msg):
        """Response object for one decoded message, or None for notifications."""
        if not isinstance(msg, dict) or msg.get("jsonrpc") != "2.0" or "method" not in msg:
            return _error(msg.get("id") if isinstance(msg, dict) else None, INVALID_REQUEST, "invalid request")
        msg_id = msg.get("id")
        is_notification = "id" not in msg
        method = msg["method"]
        params = msg.get("params") or {}
        try:
            if method == "initialize":
                result = {"protocolVersion": PROTOCOL_VERSION,
                          "capabilities": {"tools": {"listChanged": False}},
                          "serverInfo": {"name": "polyprop", "version": __version__}}
            elif method == "notifications/initialized" or method.startswith("notifications/"):
                return None
            elif method == "ping":
                result = {}
            elif method == "tools/list":
                result = {"tools": tool_descriptors()}
            elif method == "tools/call":
                name = params.get("name")
                try:
                    payload = self.call_tool(name, params.get("arguments") or {})
                except PolyPropError as exc:
                    result = {"content": [{"type": "text", "text": to_json(exc.to_dict())}], "isError": True}
                except (TypeError, ValueError) as exc:
                    err = {"error": type(exc).__name__, "message": str(exc)}
                    result = {"content": [{"type": "text", "text": to_json(err)}], "isError": True}
                else:
                    result = {"content": [{"type": "text", "text": to_json(payload)}], "isError": False}
            else:
                raise RpcError(METHOD_NOT_FOUND, f"method not found: {method}")
        except RpcError as exc:
            return None if is_notification else _error(msg_id, exc.code, str(exc))
        except Exception as exc:
            log.exception("internal error handling %s", method)
            return None if is_notification else _error(msg_id, INTERNAL_ERROR, str(exc))
        if is_notification:
            return None
        return {"jsonrpc": "2.0", "id": msg_id, "result": result}

    def handle_line(self, line):
        """Response text (no trailing newline) for one input line, or None."""
        line = line.strip()
        if not line:
            return None
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps(_error(None, PARSE_ERROR, f"parse error: {exc}"))
        if isinstance(msg, list):
            replies = [r for r in (self.handle(m) for m in msg) if r is not None]
            return json.dumps(replies) if replies else None
        resp = self.handle(msg)
        return None if resp is None else json.dumps(resp)

    def close(self):
        self.jobs.shutdown(wait=True)


def _error(msg_id, code, message):
    return {"jsonrpc": "2.0", "id": msg_id, "error": {"code": code, "message": message}}


def serve(stdin=None, stdout=None, workspace=None, max_workers=None):
    """Run the request loop until EOF on ``stdin``."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = ToolServer(workspace, max_workers)
    try:
        for line in stdin:
            reply = server.handle_line(line)
            if reply is not None:
                stdout.write(reply + "\n")
                stdout.flush()
    finally:
        server.close()
    return 0


def serve_tcp(host="127.0.0.1", port=8765, workspace=None, max_workers=None):
    """Same framing over TCP; one request loop per connection, shared job registry."""
    server = ToolServer(workspace, max_workers)

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                reply = server.handle_line(raw.decode("utf-8"))
                if reply is not None:
                    self.wfile.write((reply + "\n").encode("utf-8"))
                    self.wfile.flush()

    with socketserver.ThreadingTCPServer((host, port), Handler) as tcp:
        tcp.daemon_threads = True
        try:
            tcp.serve_forever()
        finally:
            server.close()

"""``polyprop`` command line.

Results go to stdout as JSON (default) or CSV. Exit status: 0 success,
1 analysis/parse failure, 2 usage error; failures also print an error
object on stderr. Settings resolve as flag > ``--config`` file > default.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__, api, protocol, synth
from .core import to_json
from .exceptions import InvalidSpec, PolyPropError
from .lammps import write_data_file, write_dump

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_config(path):
    if not path:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise UsageError(f"config file {path} is not valid: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold an object")
    return data


def _pick(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


# ---------------------------------------------------------------------------
# csv renderers


def _kv_csv(payload):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k in sorted(payload):
        v = payload[k]
        if isinstance(v, (dict, list)):
            continue
        w.writerow([k, v])
    return buf.getvalue()


def _rows_csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _csv_tg(p):
    return _rows_csv(p["bins"], ["setpoint_K", "mean_T_K", "mean_rho_gcm3", "n_raw", "n_samples", "drift_rel",
                                 "skipped"])


def _csv_rdf(p):
    return _rows_csv([{"r_A": r, "g": g} for r, g in zip(p["r_A"], p["g"])], ["r_A", "g"])


def _csv_e2e(p):
    rows = [{"molecule_id": m, "mean_R_A": r} for m, r in zip(p["molecule_ids"], p["per_chain_mean_R_A"])]
    return _rows_csv(rows, ["molecule_id", "mean_R_A"])


def _csv_validate(p):
    return _rows_csv(p["verdicts"], ["polymer", "property", "predicted", "delta", "delta_unit", "verdict",
                                     "best_replicate"])


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract_tg(args, cfg):
    tg_cfg = dict(cfg.get("tg", {}))
    for key in ("retention_fraction", "min_bins_per_side", "plateau_drift_threshold"):
        v = getattr(args, key)
        if v is not None:
            tg_cfg[key] = v
    return api.task_extract_tg(args.log, _pick(args, cfg, "schedule"), tg_cfg), _csv_tg


def cmd_density(args, cfg):
    return api.task_density(args.log, _pick(args, cfg, "stage")), _kv_csv


def cmd_bulkmod(args, cfg):
    return api.task_bulk_modulus(args.log, _pick(args, cfg, "temp", 300.0), _pick(args, cfg, "stage")), _kv_csv


def cmd_check_eq(args, cfg):
    return api.task_check_equilibration(args.log, _pick(args, cfg, "stage")), _kv_csv


def cmd_rdf(args, cfg):
    payload = api.task_rdf(args.dump, args.data, _pick(args, cfg, "type_a", "all"),
                           _pick(args, cfg, "type_b", "all"), _pick(args, cfg, "r_max", 15.0),
                           _pick(args, cfg, "n_bins", 150))
    return payload, _csv_rdf


def cmd_e2e(args, cfg):
    return api.task_end_to_end(args.dump, args.data), _csv_e2e


def _spec_dict(args, cfg):
    spec = dict(cfg.get("spec", {}))
    if args.spec:
        try:
            spec.update(json.loads(Path(args.spec).read_text()))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read spec {args.spec}: {exc}") from None
    return spec


def cmd_gen_protocol(args, cfg):
    spec = _spec_dict(args, cfg)
    if args.out:
        wf = protocol.WorkflowSpec.from_dict(spec)
        manifest = protocol.write_workflow(wf, args.out)
        return {"manifest": manifest, "directory": str(args.out)}, _kv_csv
    return api.task_generate_workflow(spec), _kv_csv


def cmd_gen_tg_sweep(args, cfg):
    spec = _spec_dict(args, cfg)
    sweep = dict(spec.get("tg_sweep") or {})
    for flag, key in (("t_start", "T_start_K"), ("t_end", "T_end_K"), ("step", "step_K"),
                      ("ns_per_step", "ns_per_step")):
        v = getattr(args, flag)
        if v is not None:
            sweep[key] = v
    spec["tg_sweep"] = sweep
    try:
        payload = api.task_generate_script(spec, "tg_sweep")
    except TypeError as exc:
        raise InvalidSpec(f"incomplete tg_sweep: {exc}") from None
    if args.out:
        Path(args.out).write_text(payload["script"])
    return payload, _kv_csv


def cmd_synth(args, cfg):
    out = Path(args.out)
    seed = _pick(args, cfg, "seed", 0)
    if args.kind == "tg-log":
        model = synth.pe_like_model(tg_K=_pick(args, cfg, "tg", 281.0),
                                    noise_sigma=_pick(args, cfg, "noise", 0.002))
        text, truth = synth.gen_bilinear_log(model, seed)
        out.write_text(text)
    elif args.kind == "npt-log":
        text, truth = synth.gen_npt_log(85000.0, 380.0, 0.95, -5000.0, seed=seed,
                                        T_K=_pick(args, cfg, "temp", 300.0))
        out.write_text(text)
    else:
        traj, topo, truth = synth.gen_trajectory(args.kind.replace("-", "_"), cfg.get("params"), seed)
        f0 = traj.frames[0]
        out.mkdir(parents=True, exist_ok=True)
        (out / "system.data").write_text(write_data_file(topo, f0.box_lo, f0.box_hi, f0.coords, f0.images))
        (out / "traj.dump").write_text(write_dump(traj, topo.type_ids))
    return {"kind": args.kind, "seed": seed, "out": str(out), "truth": truth}, _kv_csv


def cmd_validate(args, cfg):
    try:
        predictions = json.loads(Path(args.predictions).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read predictions: {exc}") from None
    payload = api.task_validate(predictions, _pick(args, cfg, "references"))
    if args.markdown:
        return payload, None
    return payload, _csv_validate


def cmd_serve(args, cfg):
    from . import server

    workspace = _pick(args, cfg, "workspace")
    workers = _pick(args, cfg, "workers")
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        server.serve_tcp(host or "127.0.0.1", int(port), workspace, workers)
    else:
        server.serve(sys.stdin, sys.stdout, workspace, workers)
    return None, None


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="polyprop", description="Property extraction for polymer MD outputs.")
    p.add_argument("--version", action="version", version=f"polyprop {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp, fmt=True):
        sp.add_argument("--config", help="JSON file with default settings")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("extract-tg", help="Tg from a stepwise-cooling thermo log")
    sp.add_argument("log")
    sp.add_argument("--schedule", help="set-points as START:STOP:STEP in K (inferred if omitted)")
    sp.add_argument("--retention-fraction", type=float, dest="retention_fraction")
    sp.add_argument("--min-bins-per-side", type=int, dest="min_bins_per_side")
    sp.add_argument("--plateau-threshold", type=float, dest="plateau_drift_threshold")
    common(sp)
    sp.set_defaults(func=cmd_extract_tg)

    for name, func, hlp in (("density", cmd_density, "equilibrated density"),
                            ("bulkmod", cmd_bulkmod, "bulk modulus from volume fluctuations"),
                            ("check-eq", cmd_check_eq, "convergence metrics")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("log")
        sp.add_argument("--stage", help="section label, run-<k> or index (default: last non-minimize)")
        if name == "bulkmod":
            sp.add_argument("--temp", type=float, help="temperature in K (default 300)")
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("rdf", help="radial distribution function")
    sp.add_argument("dump")
    sp.add_argument("data")
    sp.add_argument("--type-a", dest="type_a")
    sp.add_argument("--type-b", dest="type_b")
    sp.add_argument("--r-max", type=float, dest="r_max")
    sp.add_argument("--bins", type=int, dest="n_bins")
    common(sp)
    sp.set_defaults(func=cmd_rdf)

    sp = sub.add_parser("e2e", help="chain end-to-end distances")
    sp.add_argument("dump")
    sp.add_argument("data")
    common(sp)
    sp.set_defaults(func=cmd_e2e)

    sp = sub.add_parser("gen-protocol", help="staged equilibration scripts")
    sp.add_argument("--spec", help="workflow spec JSON")
    sp.add_argument("--out", help="write scripts and manifest.json into this directory")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_gen_protocol, format="json")

    sp = sub.add_parser("gen-tg-sweep", help="stepwise-cooling Tg script")
    sp.add_argument("--spec", help="workflow spec JSON")
    sp.add_argument("--t-start", type=float, dest="t_start")
    sp.add_argument("--t-end", type=float, dest="t_end")
    sp.add_argument("--step", type=float)
    sp.add_argument("--ns-per-step", type=float, dest="ns_per_step")
    sp.add_argument("--out", help="write the script here")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_gen_tg_sweep, format="json")

    sp = sub.add_parser("synth", help="synthetic logs and trajectories with known answers")
    sp.add_argument("kind", choices=("tg-log", "npt-log", "ideal-gas", "lattice", "rods", "wrapped-chain"))
    sp.add_argument("out", help="output file (logs) or directory (trajectories)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--tg", type=float, help="kink temperature for tg-log")
    sp.add_argument("--noise", type=float, help="density noise for tg-log")
    sp.add_argument("--temp", type=float, help="temperature for npt-log")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_synth, format="json")

    sp = sub.add_parser("validate", help="verdicts against the reference table")
    sp.add_argument("predictions", help="JSON: polymer -> property -> replicate values")
    sp.add_argument("--references", help="alternative references JSON")
    sp.add_argument("--markdown", action="store_true", help="print the markdown table instead")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("serve", help="JSON-RPC tool server on stdio")
    sp.add_argument("--workspace", help="root directory for file arguments (default: $POLYPROP_WORKSPACE or cwd)")
    sp.add_argument("--workers", type=int, help="job pool size (default: $POLYPROP_WORKERS or 4)")
    sp.add_argument("--tcp", metavar="HOST:PORT", help="listen on TCP instead of stdio")
    sp.add_argument("--config", help="JSON file with default settings")
    sp.set_defaults(func=cmd_serve, format="json")
    return p


def _fail(code, exc_dict, stderr):
    stderr.write(json.dumps(exc_dict, sort_keys=True) + "\n")
    return code


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        stderr.write(parser.format_usage())
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        cfg = _load_config(getattr(args, "config", None))
        payload, csv_fn = args.func(args, cfg)
    except UsageError as exc:
        stderr.write(parser.format_usage())
        return _fail(EXIT_USAGE, {"error": "UsageError", "message": str(exc)}, stderr)
    except InvalidSpec as exc:
        return _fail(EXIT_USAGE, exc.to_dict(), stderr)
    except PolyPropError as exc:
        return _fail(EXIT_ANALYSIS, exc.to_dict(), stderr)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_ANALYSIS, {"error": type(exc).__name__, "message": str(exc)}, stderr)
    if payload is None:
        return EXIT_OK
    if getattr(args, "markdown", False):
        stdout.write(payload["markdown"])
    elif args.format == "csv" and csv_fn is not None:
        stdout.write(csv_fn(payload))
    else:
        stdout.write(to_json(payload) + "\n")
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

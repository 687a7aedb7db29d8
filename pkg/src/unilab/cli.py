"""Command-line front end.

Subcommands::

    unilab run <config>                   run one protocol, write CSV/SVG/manifest
    unilab validate <config>              parse and print a resource estimate
    unilab converge <config>              convergence report (JSON)
    unilab accept                         acceptance battery
    unilab resume <checkpoint> <config>   continue a checkpointed run

Exit codes: 0 success, 1 usage, 2 configuration, 3 numerical breakdown,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, parse_config
from .errors import ConfigurationError, NumericalBreakdown, UnilabError
from .experiments import ExperimentRecord, classicality_criteria, run_protocol, wells_for
from .outputs import (
    checkpoint_read,
    checkpoint_write,
    emit_distribution_csv,
    emit_timeseries_csv,
    read_csv,
    write_manifest,
    write_timeseries_rows,
)
from .svg import emit_svg_plot

logger = logging.getLogger("unilab")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPT = 0, 1, 2, 3, 4

TIMESERIES_CSV = "timeseries.csv"
DISTRIBUTION_CSV = "distribution.csv"
TIMESERIES_SVG = "timeseries.svg"
DISTRIBUTION_SVG = "distribution.svg"
CHECKPOINT_FILE = "checkpoint.bin"
PARTIAL_CSV = "timeseries.partial.csv"
MANIFEST = "manifest.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unilab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"unilab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p):
        p.add_argument("--output-dir", help="overrides output_dir from the config")
        p.add_argument("--seed", type=int, help="overrides the environment seed")
        p.add_argument("--no-svg", action="store_true", help="skip SVG plots")
        p.add_argument("--checkpoint-every", type=int, metavar="N",
                       help="write a checkpoint every N snapshots")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("run", help="execute a protocol")
    p.add_argument("config")
    run_flags(p)
    p = sub.add_parser("validate", help="parse config and estimate resources")
    p.add_argument("config")
    p = sub.add_parser("converge", help="run the convergence suite")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--no-grid", action="store_true", help="skip the N_x = 256 refinement run")
    p = sub.add_parser("accept", help="run the acceptance battery")
    p.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    p = sub.add_parser("resume", help="resume from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    run_flags(p)
    return parser


@contextlib.contextmanager
def _thread_cap():
    n = int(os.environ.get("UNILAB_THREADS", "0") or 0)
    if n > 0:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=n):
            yield
    else:
        yield


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_svg", False):
        cfg.emit_svg = False
    if getattr(args, "checkpoint_every", None) is not None:
        cfg.checkpoint_interval = args.checkpoint_every
    return cfg


def _say(args, *msg):
    if not getattr(args, "quiet", False):
        print(*msg)


def _execute(cfg: RunConfig, args, checkpoint=None) -> int:
    protocol = cfg.to_protocol()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()

    initial, start_step, prefix = None, 0, []
    if checkpoint is not None:
        initial, meta = checkpoint_read(checkpoint, protocol.params.layout())
        start_step = int(meta["snapshot"])
        partial = Path(checkpoint).with_name(PARTIAL_CSV)
        if partial.exists():
            _, rows = read_csv(partial)
            prefix = [tuple(r) for r in rows if r[0] < meta["time"] - 1e-12]
        _say(args, f"resuming at step {start_step} (t = {meta['time']:g})")

    rows_so_far: list = list(prefix)
    snapshots_seen = [0]

    def on_snapshot(step, t, psi, values):
        snap = values[0]
        rows_so_far.append((t, snap["qubit_purity"], snap["observer_purity"], snap["mean_x"]))
        snapshots_seen[0] += 1
        if snapshots_seen[0] % cfg.checkpoint_interval == 0:
            checkpoint_write(psi, {"snapshot": step, "time": t}, out / CHECKPOINT_FILE)
            # the series up to here lets a resumed run reproduce the full CSV
            write_timeseries_rows(rows_so_far, out / PARTIAL_CSV)

    record = run_protocol(protocol, initial_state=initial, start_step=start_step,
                          on_snapshot=on_snapshot if cfg.checkpoint_interval else None)

    files = [emit_timeseries_csv(record, out / TIMESERIES_CSV, prefix_rows=prefix),
             emit_distribution_csv(record, out / DISTRIBUTION_CSV)]
    if cfg.emit_svg:
        files += emit_svg_plot(record, out / TIMESERIES_SVG, out / DISTRIBUTION_SVG)

    manifest = _manifest_payload(cfg, record, started)
    write_manifest(out / MANIFEST, manifest, files)
    rep = record.final_report
    _say(args, f"{protocol.name}: t = {record.times[-1]:g}, <x> = {rep.mean_x:.4f}, "
               f"qubit purity = {rep.qubit_purity:.4f}, observer purity = {rep.observer_purity:.4f}")
    for c in manifest.get("criteria", []):
        _say(args, ("  [PASS] " if c["passed"] else "  [FAIL] ") + f"{c['name']} = {c['value']:.6g} ({c['threshold']})")
    _say(args, f"wrote {len(files)} files + {MANIFEST} to {out}")
    return EXIT_OK


def _manifest_payload(cfg: RunConfig, record: ExperimentRecord, started: str) -> dict:
    rep = record.final_report
    payload = {
        "config": cfg.echo(),
        "protocol": record.protocol.to_dict(),
        "code_version": __version__,
        "start_time": started,
        "end_time": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "provenance": record.provenance,
        "diagnostics": record.diagnostics,
        "final_report": rep.as_dict(),
        "conservation": {
            "norm_drift": record.drift("norm_series"),
            "energy_drift": record.drift("energy_series"),
            "sigma_z_drift": record.drift("sigma_z_series"),
        },
    }
    if record.redundancy is not None:
        r = record.redundancy
        payload["redundancy"] = {"fragment_sizes": r.fragment_sizes, "mean": r.mean_information,
                                 "std": r.std_information, "qubit_entropy": r.qubit_entropy,
                                 "single_spin_fraction": r.single_spin_fraction}
    if record.protocol.name in ("full_model", "redundancy"):
        crits = classicality_criteria(record)
        payload["criteria"] = [{"name": c.name, "value": c.value, "threshold": c.threshold,
                                "passed": c.passed} for c in crits]
        if not all(c.passed for c in crits):
            payload["discrepancy_note"] = DISCREPANCY_NOTE
    return payload


DISCREPANCY_NOTE = (
    "Not all classicality thresholds are met. Under the closed dynamics the qubit's sz is "
    "conserved, so rho_O = |alpha|^2 rho_O(+) + |beta|^2 rho_O(-) with the two branches tilted "
    "in opposite directions. Each branch starts from the barrier-top ready state, and its "
    "population in the left/right doublet states is bounded by the spectral overlap of that state "
    "with the well states (below 0.1 for the shipped well). A winning-well population >= 0.95 is "
    "therefore out of reach for any coupling values in the documented ranges. The shipped parameters "
    "are the closest-achieving set found by search; achieved values are listed under 'criteria'."
)


def cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    protocol = cfg.to_protocol()
    layout = protocol.params.layout()
    n_env, n_x = protocol.params.n_env, protocol.params.grid_points
    dim = layout.total_dim
    vec_bytes = 16 * dim
    # state, Krylov basis, matvec scratch, fused diagonal
    est = vec_bytes * (protocol.prop.krylov_dim + 4) + 8 * dim
    wells_for(protocol.params)  # exercises the observer model without touching the full space
    print(f"protocol = {protocol.name}")
    print(f"dim = 2 × 2^{n_env} × {n_x} = {dim}")
    print(f"state vector = {vec_bytes / 2**20:.2f} MiB; estimated peak = {est / 2**20:.1f} MiB")
    print(f"steps = {protocol.prop.n_steps} (dt = {protocol.prop.dt:g}, t_final = {protocol.prop.t_final:g})")
    return EXIT_OK


def cmd_converge(args) -> int:
    from .experiments import convergence_suite

    cfg = parse_config(args.config)
    report = convergence_suite(include_grid=not args.no_grid, seed=cfg.seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import run_battery

    results = run_battery(args.only)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_ACCEPT if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_cap():
            if args.command == "run":
                return _execute(_apply_overrides(parse_config(args.config), args), args)
            if args.command == "resume":
                return _execute(_apply_overrides(parse_config(args.config), args), args, args.checkpoint)
            if args.command == "validate":
                return cmd_validate(args)
            if args.command == "converge":
                return cmd_converge(args)
            if args.command == "accept":
                return cmd_accept(args)
    except NumericalBreakdown as exc:
        print(f"numerical breakdown: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnilabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_USAGE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

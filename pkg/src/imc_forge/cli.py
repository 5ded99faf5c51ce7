"""Command-line front end.

Subcommands: eval-peak, fit-tech, validate, map, report.  Exit codes:
0 success, 1 model/infeasibility error, 2 I/O or parse error.  Every error
path prints a machine-parsable ``error: ...`` first line on stderr.
Verbosity is controlled only by the IMC_FORGE_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import dse, fitting, mapping, units
from .cost_model import load_arch, peak_performance
from .errors import InputError, InsufficientDataError, ModelError
from .tech import TechConfig, load_datapoints, load_tech_config, save_tech_config
from .workload import load_network

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MODEL = 1
EXIT_INPUT = 2


def _configure_logging() -> None:
    level_name = os.environ.get("IMC_FORGE_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _default_tech_path() -> Path:
    return Path(str(resources.files("imc_forge").joinpath("data/tech_default.toml")))


def _default_datapoints_path() -> Path:
    return Path(str(resources.files("imc_forge").joinpath("data/datapoints.json")))


def _load_tech(args) -> TechConfig:
    path = Path(args.tech) if args.tech else _default_tech_path()
    return load_tech_config(path)


def _hierarchy(args):
    if getattr(args, "hierarchy", None):
        return dse.load_hierarchy(args.hierarchy)
    return dse.DEFAULT_HIERARCHY


def _threads(args) -> int:
    if getattr(args, "single_thread", False):
        return 1
    return max(1, getattr(args, "threads", 1))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_eval_peak(args) -> int:
    spec, node = load_arch(args.arch)
    tech_cfg = _load_tech(args)
    profile = tech_cfg.profile_for_node(node)
    peak = peak_performance(spec, profile, tech_cfg.constants)
    bd = peak.breakdown
    header = (f"{spec.paradigm} {spec.rows}x{spec.cols} x{spec.macros} macro(s), "
              f"{node:g} nm, {spec.vdd:g} V, {spec.input_bits}b/{spec.weight_bits}b")
    print(header)
    print(f"  TOP/s      : {peak.tops / 1e12:.4f}")
    print(f"  TOP/s/W    : {peak.topsw / 1e12:.4f}")
    print(f"  MACs/cycle : {peak.macs_per_cycle:.1f}")
    print("  peak-tile energy breakdown:")
    for name in bd.FIELDS:
        print(f"    {name:<14}: {units.format_energy(getattr(bd, name))}")
    return EXIT_OK


def cmd_fit_tech(args) -> int:
    path = Path(args.datapoints) if args.datapoints else _default_datapoints_path()
    points = load_datapoints(path)
    tech_cfg = _load_tech(args) if args.tech else None
    constants = tech_cfg.constants if tech_cfg else fitting.ModelConstants()

    cinv_fit = fitting.fit_cinv(points, constants)
    print(f"c_inv(node) = {cinv_fit.slope:.6e} F/nm * node + {cinv_fit.intercept:.6e} F")
    print(f"  fitted on  : {', '.join(cinv_fit.point_names)}")
    print(f"  node range : [{cinv_fit.node_min:g}, {cinv_fit.node_max:g}] nm")
    print(f"  mean |mismatch| (digital corpus): {cinv_fit.mean_abs_mismatch:.4f}")

    try:
        k3, dac_mismatch = fitting.fit_dac_constant(points, constants, cinv_fit)
        constants = replace(constants, k3=k3)
        print(f"k3 = {units.format_energy(k3)} per DAC conversion step")
        print(f"  mean |mismatch| (analog corpus): {dac_mismatch:.4f}")
    except InsufficientDataError:
        logger.warning("no AIMC datapoints with DAC_res > 0; keeping default k3")

    out = Path(args.out) if args.out else Path("tech.toml")
    save_tech_config(out, constants, cinv_fit,
                     header=f"fitted from {path.name} ({len(points)} datapoints)")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.datapoints) if args.datapoints else _default_datapoints_path()
    points = load_datapoints(path)
    tech_cfg = _load_tech(args)
    if tech_cfg.cinv_fit is None:
        raise InputError("validate requires a tech file with a [cinv_fit] section")
    report = dse.validate_against(points, tech_cfg.cinv_fit, tech_cfg.constants)
    print(f"{'design':<26} {'par.':<5} {'node':>5} {'V':>5} "
          f"{'model T/s/W':>12} {'reported':>10} {'mismatch':>9}")
    for row in report.rows:
        flag = " *extrapolated" if row.extrapolated else ""
        print(f"{row.name:<26} {row.paradigm:<5} {row.node:>5g} {row.v:>5g} "
              f"{row.modeled_topsw:>12.2f} {row.reported_topsw:>10.2f} "
              f"{row.mismatch:>+9.1%}{flag}")
    print(f"mean |mismatch| = {report.mean_abs_mismatch:.1%}, "
          f"max |mismatch| = {report.max_abs_mismatch:.1%}")
    if args.out:
        payload = [
            {"name": r.name, "paradigm": r.paradigm, "node": r.node, "V": r.v,
             "modeled_topsw": r.modeled_topsw, "reported_topsw": r.reported_topsw,
             "mismatch": r.mismatch, "extrapolated": r.extrapolated}
            for r in report.rows
        ]
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_map(args) -> int:
    spec, node = load_arch(args.arch)
    tech_cfg = _load_tech(args)
    profile = tech_cfg.profile_for_node(node)
    network = load_network(args.workload)
    hierarchy = _hierarchy(args)
    threads = _threads(args)

    if args.dump_mappings:
        dump = []
        for layer in network.compute_layers():
            candidates = mapping.enumerate_spatial(layer, spec)
            dump.append({
                "layer": layer.name,
                "candidates": [smap.as_dict() for smap in candidates],
            })
        Path(args.dump_mappings).write_text(json.dumps(dump, indent=2) + "\n")
        print(f"wrote {args.dump_mappings}")

    result = dse.evaluate_network(network, spec, profile, tech_cfg.constants, hierarchy,
                                  threads=threads)
    print(f"network {result.network_name}: {result.total_macs} MACs")
    print(f"  total energy : {units.format_energy(result.total_energy)} "
          f"(macro {units.format_energy(result.total_macro_energy)}, "
          f"traffic {units.format_energy(result.total_traffic_energy)})")
    print(f"  total latency: {result.total_latency * 1e6:.3f} us")
    print(f"  energy/MAC   : {units.format_energy(result.total_energy / result.total_macs)}")

    out = Path(args.out) if args.out else Path(f"report.{args.format}")
    arch_label = f"{spec.paradigm}-{spec.rows}x{spec.cols}-m{spec.macros}@{node:g}nm"
    dse.write_report(out, [result], args.format, arch_label=arch_label)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise InputError(f"report file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if payload.get("format") != "imc-forge-report":
        raise InputError(f"{path}: not an imc-forge report file")
    rows = [row for network in payload.get("networks", []) for row in network.get("layers", [])]
    if args.format == "csv":
        import csv as _csv
        import io as _io
        buf = _io.StringIO()
        writer = _csv.DictWriter(buf, fieldnames=dse.REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in dse.REPORT_COLUMNS})
        text = buf.getvalue()
    else:
        text = json.dumps(rows, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imc-forge",
        description="Energy/throughput modeling and mapping exploration for "
                    "SRAM in-memory-computing accelerators.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_output(p):
        p.add_argument("--out", help="output file path")
        p.add_argument("--format", choices=("json", "csv"), default="json",
                       help="output format (default json)")

    p = sub.add_parser("eval-peak", help="macro-level peak TOP/s and TOP/s/W")
    p.add_argument("--arch", required=True, help="arch.toml describing the macro")
    p.add_argument("--tech", help="tech.toml (default: bundled fitted profile)")
    p.set_defaults(func=cmd_eval_peak)

    p = sub.add_parser("fit-tech", help="fit technology constants from datapoints")
    p.add_argument("--datapoints", help="datapoints.json (default: bundled corpus)")
    p.add_argument("--tech", help="tech.toml with starting constants")
    p.add_argument("--out", help="output tech.toml path (default tech.toml)")
    p.set_defaults(func=cmd_fit_tech)

    p = sub.add_parser("validate", help="modeled vs reported efficiency per datapoint")
    p.add_argument("--datapoints", help="datapoints.json (default: bundled corpus)")
    p.add_argument("--tech", help="tech.toml (default: bundled fitted profile)")
    p.add_argument("--out", help="optional JSON output of the validation rows")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("map", help="map a network onto an architecture and report costs")
    p.add_argument("--arch", required=True)
    p.add_argument("--tech", help="tech.toml (default: bundled fitted profile)")
    p.add_argument("--workload", required=True, help="network.json")
    p.add_argument("--hierarchy", help="hierarchy.json (default: one on-chip SRAM)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for candidate evaluation (outputs are "
                        "identical for any value)")
    p.add_argument("--single-thread", action="store_true",
                   help="force single-threaded evaluation")
    p.add_argument("--dump-mappings", metavar="PATH",
                   help="dump enumerated spatial candidates as JSON")
    add_common_output(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("report", help="re-render a report.json as csv/json rows")
    p.add_argument("input", help="report.json produced by the map command")
    add_common_output(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

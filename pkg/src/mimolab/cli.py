"""Command-line front end.

Exit status: 0 on success, 1 when checks fail or training diverges,
2 for usage, scenario or file-format errors.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate, frequency_grid, taps_to_frequency_response
from .channel import PROBE_NAMES
from .equalizer import KINDS, EqualizerTaps, EqualizerTopology, TrainingDivergedError
from .pipeline import GRID_POINTS, in_band, run_scenario_equalization, run_scenario_simulation
from .scenario import ScenarioError, load_scenario
from .signals import LANES
from .verify import SUITES, format_table, run_suite

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
TAPS_HEADER = ("output", "branch", "tap", "real", "imag")


class FileFormatError(ValueError):
    pass


# -- file helpers ----------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """Make ``obj`` strict-JSON safe: non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def quad_csv(x: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, x, fmt="%.17g", delimiter=",", header=",".join(LANES), comments="")
    return buf.getvalue()


def taps_csv(taps: EqualizerTaps) -> str:
    w = np.asarray(taps.weights, dtype=complex)
    o, b, k = np.meshgrid(*(np.arange(n) for n in w.shape), indexing="ij")
    table = np.column_stack((o.ravel(), b.ravel(), k.ravel(), w.real.ravel(), w.imag.ravel()))
    buf = io.StringIO()
    np.savetxt(buf, table, fmt=["%d", "%d", "%d", "%.17g", "%.17g"], delimiter=",",
               header=",".join(TAPS_HEADER), comments="")
    return buf.getvalue()


def taps_metadata(taps: EqualizerTaps) -> dict:
    top = taps.topology
    return {
        "schema_version": 1,
        "kind": top.kind,
        "taps_per_branch": top.taps_per_branch,
        "center_index": top.center_index,
        "n_outputs": top.n_outputs,
        "n_branches": top.n_branches,
        "class": taps.label,
    }


def read_taps(path: Path) -> EqualizerTaps:
    """Load ``taps.csv`` together with its ``.json`` topology sidecar."""
    meta_path = path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"cannot read taps from {path} / {meta_path}: {e}") from None
    if meta.get("kind") not in KINDS:
        raise FileFormatError(f"{meta_path}: unknown topology {meta.get('kind')!r}")
    top = EqualizerTopology(meta["kind"], int(meta["taps_per_branch"]))
    if table.shape[1] != len(TAPS_HEADER):
        raise FileFormatError(f"{path}: expected columns {','.join(TAPS_HEADER)}")
    idx = table[:, :3].astype(int)
    n_branches = int(idx[:, 1].max()) + 1 if idx.size else 0
    if n_branches != top.n_branches or table.shape[0] != np.prod(top.weight_shape):
        raise FileFormatError(
            f"{path}: topology mismatch, {top.kind} needs {top.n_branches} branches per output "
            f"and {np.prod(top.weight_shape)} rows; file has {n_branches} branches in {table.shape[0]} rows"
        )
    w = np.zeros(top.weight_shape, dtype=complex)
    w[idx[:, 0], idx[:, 1], idx[:, 2]] = table[:, 3] + 1j * table[:, 4]
    if top.real:
        w = w.real
    return EqualizerTaps(top, w, meta.get("class"))


def _out_dir(args, scenario) -> Path:
    out = args.out or scenario.output_dir
    if out is None:
        raise ScenarioError("no output directory: pass --out or set output_dir in the scenario")
    return Path(out)


# -- commands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario, args.seed)
    out = _out_dir(args, scenario)
    sim = run_scenario_simulation(scenario)
    atomic_write(out / "input.csv", quad_csv(sim.x))
    for name in PROBE_NAMES:
        atomic_write(out / f"{name}.csv", quad_csv(sim.probes[name]))
    meta = {
        "schema_version": 1,
        "seed": scenario.seed,
        "samples": int(sim.x.shape[0]),
        "samples_per_symbol": sim.sps,
        "group_delay_samples": sim.probes.group_delay,
        "valid": [sim.probes.valid.start, sim.probes.valid.stop],
        "config": scenario.resolved(),
    }
    atomic_write(out / "metadata.json", dump_json(meta))
    print(f"wrote {len(PROBE_NAMES) + 2} files to {out}")
    return EXIT_OK


def cmd_equalize(args) -> int:
    scenario = load_scenario(args.scenario, args.seed)
    out = _out_dir(args, scenario)
    try:
        sim, run, report = run_scenario_equalization(scenario)
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    atomic_write(out / "taps.csv", taps_csv(run.taps))
    atomic_write(out / "taps.json", dump_json(taps_metadata(run.taps)))
    atomic_write(out / "report.json", dump_json(report))
    print(f"class {scenario.equalizer.class_label}: residual {run.residual_db:.2f} dB; wrote {out}")
    for c in report["checks"]:
        print(f"  {c['name']}: {c['value']} (threshold {c['threshold']}) {'PASS' if c['passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    taps = read_taps(Path(args.taps))
    if taps.topology.kind not in ("real_4x4", "complex_2x4"):
        raise FileFormatError(f"calibration needs real_4x4 or complex_2x4 taps, got {taps.topology.kind}")
    scenario = load_scenario(args.scenario, args.seed) if args.scenario else None
    sps = scenario.samples_per_symbol if scenario else 1
    fr = taps_to_frequency_response(taps, frequency_grid(GRID_POINTS))
    try:
        cal = calibrate(fr, in_band(sps))
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    result = {
        "schema_version": 1,
        "kind": "calibration_report",
        "topology": taps.topology.kind,
        "class": taps.label,
        "rx_skews_samples": cal.rx_skews.tolist(),
        "pol_estimate": None if cal.pol_estimate is None else cal.pol_estimate.as_array().tolist(),
        "pol_fit_residual": cal.residual,
        "sign_convention": cal.sign_convention,
        "ground_truth": None,
    }
    if scenario is not None:
        cfg = scenario.channel_config()
        truth = np.array([lane.skew for lane in cfg.rx_lanes])
        truth -= truth[0]
        gt = {
            "rx_skews_samples": truth.tolist(),
            "rx_skews_delta_samples": (cal.rx_skews - truth).tolist(),
        }
        if cal.pol_estimate is not None:
            gt["pol"] = cfg.pol.as_array().tolist()
            gt["pol_overlap"] = float(abs(cal.pol_estimate.as_array() @ cfg.pol.as_array()))
        result["ground_truth"] = gt
    text = dump_json(result)
    if args.out:
        atomic_write(Path(args.out) / "calibration.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write input, probe and received waveforms as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equalize", help="simulate, train the configured class, write taps and report")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("calibrate", help="estimate Rx skews and polarization from a taps file")
    p.add_argument("--taps", required=True)
    p.add_argument("--scenario", help="scenario holding the ground truth")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="run an invariant suite and print a pass/fail table")
    p.add_argument("--suite", required=True, choices=list(SUITES))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

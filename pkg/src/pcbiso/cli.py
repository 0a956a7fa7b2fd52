"""Command-line front end.

Subcommands print one JSON document (schema_version 1) and optionally
write CSV data. Exit codes: 0 all checks pass, 1 a check failed, 2 usage or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .analysis import isolator_steady_state, oscillator_metrics, run_transmitter
from .config import ConfigError, RunConfig
from .engine import CircuitError, MeasurementError, SimOptions, SimulationError, Stimulus, transient
from .halfbridge import PROBES, BridgeStimulus, bridge_metrics, transient_bridge
from .link import BitPattern, LinkError, eye_diagram, link_metrics, prbs7, propagation_delay, simulate_link
from .magnetics import GeometryError, breakdown_voltage, extraction_report, outer_side
from .topologies import build_transmitter

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# pass/fail bounds for the report command
MIN_ISOLATION = 1e3
MAX_AREA = 3.4e-4
MAX_TX_POWER = 25e-3
MAX_RX_POWER = 5e-3
DELAY_BAND = (100e-9, 400e-9)
MIN_BIT_RATE = 1e6
FREQ_BAND = (10e6, 22e6)

STIMULI = {
    "tx": ("high", "low"),
    "isolator": ("prbs7", "high", "low"),
    "halfbridge": ("square", "ab00", "ab01", "ab10", "ab11"),
}


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _result(command: str, metrics: dict, checks: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "metrics": metrics,
        "checks": {k: bool(v) for k, v in checks.items()},
        "pass": all(checks.values()),
    }


def _dt_max(cfg: RunConfig):
    v = cfg.si("sim", "dt_max_ns")
    return v if v > 0 else None


def _pattern(cfg: RunConfig) -> BitPattern:
    bits = cfg.get("link", "bits")
    if bits < 1:
        raise ConfigError("[link] bits must be >= 1")
    return BitPattern(
        tuple(prbs7(cfg.get("link", "seed"), bits)),
        bit_rate=cfg.si("link", "bit_rate_mbps"),
        rise_fall=cfg.si("link", "rise_fall_ns"),
    )


# commands ---------------------------------------------------------------


def cmd_extract(cfg: RunConfig, args: dict) -> dict:
    rep = extraction_report(cfg.coil(), cfg.board(), cfg.si("coil", "extraction_frequency_mhz"))
    checks = {"coupling_below_one": 0 < rep["coupling_k"] < 1}
    return _result("extract", rep, checks)


def _simulate_tx(cfg, stim, csv_path):
    iso = cfg.isolator()
    t_stop = cfg.si("sim", "t_stop_us")
    if stim == "high":
        tr = run_transmitter(iso, t_stop, _dt_max(cfg))
        m = oscillator_metrics(tr).as_dict()
        lo, hi = FREQ_BAND
        checks = {"frequency_in_band": lo <= m["frequency"] <= hi, "sustained": m["sustained"],
                  "tx_power": m["tx_power"] <= MAX_TX_POWER}
    else:
        tr = transient(build_transmitter(iso, Stimulus.constant(0.0)),
                       SimOptions(t_stop=t_stop, dt_max=_dt_max(cfg) or 1.25e-9, probes=("D5", "D6")))
        tr = tr.with_channel("VP", tr["D5"] - tr["D6"])
        swing = float(np.ptp(tr["VP"]))
        m = {"vp_peak_to_peak": swing}
        checks = {"no_oscillation": swing < 0.1}
    if csv_path:
        tr.to_csv(csv_path)
    return m, checks


def _simulate_isolator(cfg, stim, csv_path):
    iso = cfg.isolator()
    if stim == "prbs7":
        pat = _pattern(cfg)
        tr = simulate_link(iso, pat, _dt_max(cfg), cfg.get("sim", "output_decimation"),
                           cfg.si("sim", "f_osc_mhz"))
        lm = link_metrics(tr, pat, cfg.si("link", "v_threshold_v"))
        m = lm.as_dict()
        checks = {"bit_errors_zero": lm.bit_errors == 0, "no_lost_edges": lm.lost_edges == 0}
        if csv_path:
            tr.to_csv(csv_path, ["DX", "DY"])
        return m, checks
    hold = cfg.si("sim", "t_stop_us")
    ss = isolator_steady_state(iso, stim == "high", hold, _dt_max(cfg))
    m = ss.as_dict()
    if stim == "high":
        checks = {"dy_low": ss.dy_max < 0.8, "tx_power": ss.tx_power <= MAX_TX_POWER,
                  "rx_power": ss.rx_power <= MAX_RX_POWER}
    else:
        checks = {"dy_high": ss.dy_min > 0.8 * iso.supply}
    return m, checks


def _simulate_halfbridge(cfg, stim, csv_path):
    hb = cfg.halfbridge()
    high = cfg.si("halfbridge", "supply_pos_v")
    if stim == "square":
        bs = BridgeStimulus.square(cfg.si("halfbridge", "frequency_khz"), cfg.get("halfbridge", "cycles"), high)
    else:
        bs = BridgeStimulus.constant(int(stim[2]), int(stim[3]), high, hold=cfg.si("sim", "t_stop_us"))
    t_stop = bs.duration
    opts = SimOptions(t_stop=t_stop, dt_max=_dt_max(cfg) or 1.25e-9, probes=PROBES)
    tr = transient_bridge(hb, bs, opts)
    v_active = cfg.get("halfbridge", "v_active_v")
    if stim == "square":
        bm = bridge_metrics(tr, v_active)
        m = bm.as_dict()
        checks = {"lockout": bm.lockout_ok}
    else:
        a, b = int(stim[2]), int(stim[3])
        w = tr.time >= 0.6 * t_stop
        dls, dhs = tr["DLS"][w], tr["DHS"][w]
        low_on, high_on = b - a > 0, b - a < 0
        m = {"dls_max": float(dls.max()), "dls_min": float(dls.min()), "dhs_max": float(dhs.max()),
             "dhs_min": float(dhs.min()), "vtx": float(tr["VTX"][w].mean())}
        checks = {
            "dls": dls.max() < v_active if low_on else dls.min() > 0.8 * hb.rx_supply,
            "dhs": dhs.max() < v_active if high_on else dhs.min() > 0.8 * hb.rx_supply,
        }
    if csv_path:
        tr.to_csv(csv_path, ["DLS", "DHS", "VTX"])
    return m, checks


def cmd_simulate(cfg: RunConfig, args: dict) -> dict:
    circuit, stim = args["circuit"], args["stimulus"]
    run = {"tx": _simulate_tx, "isolator": _simulate_isolator, "halfbridge": _simulate_halfbridge}[circuit]
    m, checks = run(cfg, stim, args.get("csv"))
    res = _result("simulate", m, checks)
    res["circuit"], res["stimulus"] = circuit, stim
    return res


def cmd_eye(cfg: RunConfig, args: dict) -> dict:
    pat = _pattern(cfg)
    tr = simulate_link(cfg.isolator(), pat, _dt_max(cfg), cfg.get("sim", "output_decimation"),
                       cfg.si("sim", "f_osc_mhz"))
    vt = cfg.si("link", "v_threshold_v")
    T = pat.bit_period
    w = tr.time >= 2 * T
    delay = propagation_delay(tr.time[w], tr["DX"][w], tr["DY"][w], vt, output_inverted=True)
    offset = delay.mean if math.isfinite(delay.mean) else 0.0
    eye = eye_diagram(tr.time[w], tr["DY"][w], T, offset, vt)
    if args.get("csv"):
        eye.to_csv(args["csv"])
    m = {"eye_height": eye.height, "eye_width": eye.width, "bit_period": T, "alignment_offset": offset,
         "unit_intervals": int(eye.folded.shape[0])}
    checks = {"eye_height": eye.height >= vt, "eye_width": eye.width >= 0.5 * T}
    return _result("eye", m, checks)


def cmd_report(cfg: RunConfig, args: dict) -> dict:
    """Summary of isolation, coil area, power, delay and verified bit rate."""
    board, coil = cfg.board(), cfg.coil()
    iso = cfg.isolator()
    vbd = breakdown_voltage(board)
    area = outer_side(coil) ** 2
    on = isolator_steady_state(iso, True, dt_max=_dt_max(cfg))
    pat = _pattern(cfg)
    tr = simulate_link(iso, pat, _dt_max(cfg), cfg.get("sim", "output_decimation"), cfg.si("sim", "f_osc_mhz"))
    lm = link_metrics(tr, pat, cfg.si("link", "v_threshold_v"))
    verified = pat.bit_rate if lm.bit_errors == 0 and lm.lost_edges == 0 else 0.0
    m = {
        "breakdown_voltage": vbd,
        "coil_area_m2": area,
        "coil_area_note": "coil footprint only (outer side squared); the board figure includes circuit margin",
        "tx_power": on.tx_power,
        "rx_power": on.rx_power,
        "prop_delay_mean": lm.prop_delay_mean,
        "prop_delay_rise_mean": lm.prop_delay_rise_mean,
        "prop_delay_fall_mean": lm.prop_delay_fall_mean,
        "max_verified_bit_rate": verified,
        "bits_checked": lm.bits_checked,
    }
    checks = {
        "isolation": vbd > MIN_ISOLATION,
        "area": area <= MAX_AREA,
        "tx_power": on.tx_power <= MAX_TX_POWER,
        "rx_power": on.rx_power <= MAX_RX_POWER,
        "prop_delay": DELAY_BAND[0] <= lm.prop_delay_mean <= DELAY_BAND[1],
        "bit_rate": verified >= MIN_BIT_RATE,
    }
    return _result("report", m, checks)


COMMANDS = {"extract": cmd_extract, "simulate": cmd_simulate, "eye": cmd_eye, "report": cmd_report}
USAGE_ERRORS = (ConfigError, GeometryError, CircuitError, LinkError, UsageError, ValueError)
NUMERIC_ERRORS = (SimulationError, MeasurementError, FloatingPointError)


def execute(command: str, cfg_values: dict, args: dict) -> tuple[dict, int]:
    """Run one command; returns the JSON document and the exit code."""
    cfg = RunConfig(cfg_values)
    try:
        res = COMMANDS[command](cfg, args)
    except NUMERIC_ERRORS as exc:
        return {"schema_version": SCHEMA_VERSION, "command": command, "error": str(exc),
                "kind": "numeric", "pass": False}, EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        return {"schema_version": SCHEMA_VERSION, "command": command, "error": str(exc),
                "kind": "usage", "pass": False}, EXIT_USAGE
    return res, EXIT_OK if res["pass"] else EXIT_CHECK


def _execute_star(job):
    return execute(*job)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcbiso", description="PCB transformer isolator design and simulation")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="TOML run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
        sp.add_argument("--sweep", metavar="SECTION.KEY=A,B,...",
                        help="run once per value, in parallel; results kept in input order")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes for --sweep")
        sp.add_argument("--json", action="store_true", help="write JSON to stdout (default when --out is absent)")
        sp.add_argument("--out", help="write JSON to this file")

    common(sub.add_parser("extract", help="coil geometry to transformer model"))
    s = sub.add_parser("simulate", help="transient of a circuit")
    common(s)
    s.add_argument("--circuit", choices=sorted(STIMULI), required=True)
    s.add_argument("--stimulus", required=True)
    s.add_argument("--bits", type=int, help="number of PRBS7 bits (prbs7 stimulus only)")
    s.add_argument("--seed", type=int, help="PRBS7 seed (prbs7 stimulus only)")
    s.add_argument("--csv", help="write the trace as CSV")
    e = sub.add_parser("eye", help="eye diagram of the isolator output")
    common(e)
    e.add_argument("--bits", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--bit-rate", type=float, help="bit rate in bit/s")
    e.add_argument("--csv", help="write folded eye samples as CSV")
    common(sub.add_parser("report", help="summary of isolator characteristics"))
    return p


def _apply_flags(parser, ns, cfg: RunConfig) -> tuple[RunConfig, dict]:
    for a in ns.set:
        cfg = cfg.override(a)
    args = {}
    if ns.command == "simulate":
        if ns.stimulus not in STIMULI[ns.circuit]:
            parser.error(f"--stimulus {ns.stimulus} not valid for --circuit {ns.circuit} "
                         f"(choose from {', '.join(STIMULI[ns.circuit])})")
        if ns.stimulus != "prbs7" and (ns.bits is not None or ns.seed is not None):
            parser.error("--bits/--seed only apply to --stimulus prbs7")
        args.update(circuit=ns.circuit, stimulus=ns.stimulus, csv=ns.csv)
    if ns.command == "eye":
        if ns.bit_rate is not None:
            if not ns.bit_rate > 0:
                parser.error("--bit-rate must be > 0")
            cfg = cfg.override(f"link.bit_rate_mbps={ns.bit_rate / 1e6!r}")
        args["csv"] = ns.csv
    if getattr(ns, "bits", None) is not None:
        if ns.bits < 1:
            parser.error("--bits must be >= 1")
        cfg = cfg.override(f"link.bits={ns.bits}")
    if getattr(ns, "seed", None) is not None:
        cfg = cfg.override(f"link.seed={ns.seed}")
    return cfg, args


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg, args = _apply_flags(parser, ns, RunConfig.load(ns.config))
        jobs = [(ns.command, cfg.values, args)]
        sweep = None
        if ns.sweep:
            key, _, vals = ns.sweep.partition("=")
            values = [v.strip() for v in vals.split(",") if v.strip()]
            if not key or not values:
                raise ConfigError("--sweep expects section.key=a,b,...")
            jobs = [(ns.command, cfg.override(f"{key}={v}").values, args) for v in values]
            sweep = {"key": key.strip(), "values": values}
    except ConfigError as exc:
        print(f"pcbiso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if sweep is None:
        doc, code = execute(*jobs[0])
    else:
        if len(jobs) == 1 or ns.jobs == 1:
            results = [execute(*j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
                results = list(pool.map(_execute_star, jobs))
        codes = [c for _, c in results]
        code = max(codes)
        doc = {"schema_version": SCHEMA_VERSION, "command": ns.command, "sweep": sweep,
               "runs": [r for r, _ in results], "pass": all(c == EXIT_OK for c in codes)}

    text = dumps(doc)
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    if ns.json or not ns.out:
        sys.stdout.write(text)
    if "error" in doc:
        print(f"pcbiso: error: {doc['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line surface: reproducible scans, fits, maps and balance profiles.

Every command reads one flat config file (``--config``, or the
``NLISIM_CONFIG`` environment variable, or the built-in defaults) and writes
data files plus a run manifest. Identical arguments, config, and seed give
byte-identical data files; only the manifest timestamp differs.

Exit codes: 0 success, 2 input/config error, 3 physics/fit error. A golden
comparison mismatch exits 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import fit_fringe, write_fit_json
from .bench import (
    BenchConfig,
    config_hash,
    config_to_text,
    default_config,
    load_config,
    rate_to_power,
)
from .errors import ConfigError, NliError
from .scan import (
    ScanPlan,
    read_trace_csv,
    run_scan,
    scan_range_for_periods,
    write_scan_csv,
    write_scan_json,
)
from .sweep import (
    GridSpec,
    compare_map_to_golden,
    compute_map,
    rdp_profile,
    write_map_csv,
    write_map_json,
)

MANIFEST_SCHEMA = "run-manifest/1"

_LENGTH_UNITS = {
    "m": 1.0,
    "mm": 1e-3,
    "um": 1e-6,
    "µm": 1e-6,
    "nm": 1e-9,
    "pm": 1e-12,
}
_POWER_UNITS = {
    "w": 1.0,
    "mw": 1e-3,
    "uw": 1e-6,
    "µw": 1e-6,
    "nw": 1e-9,
    "pw": 1e-12,
    "fw": 1e-15,
    "aw": 1e-18,
}


def _parse_with_units(text: str, units: dict[str, float], kind: str) -> float:
    """Parse '3390nm' style quantities; a bare number means the base unit."""
    cleaned = text.strip().replace(" ", "")
    lowered = cleaned.lower()
    for suffix in sorted(units, key=len, reverse=True):
        if lowered.endswith(suffix):
            head = cleaned[: len(cleaned) - len(suffix)]
            if head and not head[-1].isalpha():
                try:
                    return float(head) * units[suffix]
                except ValueError:
                    break
    try:
        return float(cleaned)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {kind} quantity {text!r}") from None


def length_m(text: str) -> float:
    """Length flag: meters, with nm/um/mm/pm suffixes accepted."""
    return _parse_with_units(text, _LENGTH_UNITS, "length")


def power_w(text: str) -> float:
    """Power flag: watts, with aW..mW suffixes accepted."""
    return _parse_with_units(text, _POWER_UNITS, "power")


def angle_deg(text: str) -> float:
    """Angle flag: degrees; an optional 'deg' suffix is allowed."""
    cleaned = text.strip().lower().removesuffix("deg")
    try:
        return float(cleaned)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r} (degrees)") from None


def length_mm(text: str) -> float:
    """Blade-position flag: millimeters by default, unit suffixes accepted."""
    cleaned = text.strip().lower()
    if any(cleaned.endswith(sfx) for sfx in _LENGTH_UNITS):
        return _parse_with_units(text, _LENGTH_UNITS, "length") * 1e3
    try:
        return float(cleaned)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse blade position {text!r} (mm)") from None


def _resolve_config(path: str | None) -> BenchConfig:
    if path is None:
        path = os.environ.get("NLISIM_CONFIG") or None
    if path is None:
        return default_config()
    return load_config(path)


def _write_manifest(
    out_base: Path, command: str, argv: list[str], config: BenchConfig, seed, outputs: list[Path]
) -> Path:
    manifest_path = out_base.with_suffix(out_base.suffix + ".manifest.json")
    payload = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "argv": argv,
        "config_hash": config_hash(config),
        "seed": seed,
        "version": __version__,
        "outputs": [str(p) for p in outputs],
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    return manifest_path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_fringe(args, argv) -> int:
    config = _resolve_config(args.config)
    overrides = {}
    if args.p_total is not None:
        overrides["p_total"] = args.p_total
    if args.dwell is not None:
        overrides["dwell"] = args.dwell
    if overrides:
        config = replace(config, **overrides)

    start, stop = scan_range_for_periods(args.axis, args.periods, config.wavelengths)
    plan = ScanPlan(
        axis=args.axis,
        start_m=start,
        stop_m=stop,
        steps=args.steps,
        seed=args.seed,
        theta_deg=args.theta,
        knife_signal_mm=args.knife_signal,
        knife_idler_mm=args.knife_idler,
    )
    record = run_scan(plan, config, noiseless=args.noiseless)

    out = Path(args.out)
    csv_path = out.with_suffix(".csv")
    json_path = out.with_suffix(".json")
    write_scan_csv(record, csv_path)
    write_scan_json(record, json_path)
    manifest = _write_manifest(out, "fringe", argv, config, args.seed, [csv_path, json_path])
    print(f"wrote {csv_path}, {json_path}, {manifest}")
    return 0


def _cmd_fit(args, argv) -> int:
    path = Path(args.input)
    if path.suffix == ".json":
        from .scan import read_scan_json

        payload = read_scan_json(path)
        positions = payload["position_m"]
        counts = payload["counts"]
        meta = {"axis": payload.get("plan", {}).get("axis", "")}
    else:
        positions, counts, meta = read_trace_csv(path)

    period_hint = args.period_hint
    if period_hint is None:
        axis = meta.get("axis", "")
        if args.config is None and os.environ.get("NLISIM_CONFIG") is None and not axis:
            raise ConfigError(
                "no --period-hint given and the trace does not name a scan axis; "
                "pass --period-hint or --config"
            )
        if not axis:
            raise ConfigError("no --period-hint given and the trace does not name a scan axis")
        config = _resolve_config(args.config)
        period_hint = config.wavelengths.for_axis(axis)

    fit = fit_fringe(
        positions,
        period_hint,
        fit_period=args.fit_period,
        counts=counts,
        weights="poisson" if args.poisson_weights else None,
    )
    text = json.dumps(fit.to_dict(), indent=1)
    print(text)
    if args.out:
        write_fit_json(fit, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


_X_FLAG_NAMES = {"rp": "r_p", "r_p": "r_p", "theta": "hwp_theta_deg", "hwp_theta_deg": "hwp_theta_deg"}
_Y_FLAG_NAMES = {
    "ts": "t_s",
    "t_s": "t_s",
    "ti": "t_i",
    "t_i": "t_i",
    "knife-signal": "knife_signal_mm",
    "knife_signal_mm": "knife_signal_mm",
    "knife-idler": "knife_idler_mm",
    "knife_idler_mm": "knife_idler_mm",
}


def _axis_defaults(name: str, config: BenchConfig) -> tuple[float, float]:
    if name == "r_p":
        return 0.0, 1.0
    if name == "hwp_theta_deg":
        return config.hwp_offset_deg, config.hwp_offset_deg + 45.0
    if name in ("t_s", "t_i"):
        return 1.0, 0.0
    edge = config.knife_signal if name == "knife_signal_mm" else config.knife_idler
    return edge.center_mm - 2.0 * edge.waist_mm, edge.center_mm + 1.5 * edge.waist_mm


def _cmd_map(args, argv) -> int:
    config = _resolve_config(args.config)
    if args.p_total is not None:
        config = replace(config, p_total=args.p_total)
    x_name = _X_FLAG_NAMES[args.x]
    y_name = _Y_FLAG_NAMES[args.y]
    x_default = _axis_defaults(x_name, config)
    y_default = _axis_defaults(y_name, config)

    grid = GridSpec(
        x_name=x_name,
        x_start=x_default[0] if args.x_start is None else args.x_start,
        x_stop=x_default[1] if args.x_stop is None else args.x_stop,
        x_points=args.x_points,
        y_name=y_name,
        y_start=y_default[0] if args.y_start is None else args.y_start,
        y_stop=y_default[1] if args.y_stop is None else args.y_stop,
        y_points=args.y_points,
        mode=args.mode,
        config=config,
        seed=args.seed,
        scan_steps=args.scan_steps,
        scan_periods=args.scan_periods,
        noiseless=args.noiseless,
    )
    pmap = compute_map(grid, workers=args.workers)

    outputs = []
    if args.out:
        out = Path(args.out)
        csv_path = out.with_suffix(".csv")
        json_path = out.with_suffix(".json")
        write_map_csv(pmap, csv_path)
        write_map_json(pmap, json_path)
        outputs = [csv_path, json_path]
        manifest = _write_manifest(out, "map", argv, config, args.seed, outputs)
        print(f"wrote {csv_path}, {json_path}, {manifest}")

    if args.golden:
        mismatches = compare_map_to_golden(pmap, args.golden, rtol=args.golden_rtol)
        if mismatches:
            for line in mismatches[:20]:
                print(f"golden mismatch: {line}", file=sys.stderr)
            return 1
        print(f"map matches golden {args.golden}")
    return 0


def _cmd_rdp(args, argv) -> int:
    config = _resolve_config(args.config)
    rows = rdp_profile(
        config,
        theta_start_deg=args.theta_start,
        theta_stop_deg=args.theta_stop,
        points=args.theta_points,
        detected_cps_ref=args.detected_cps,
    )
    out = Path(args.out)
    lines = [
        "# rdp-profile/1",
        f"# config_hash = {config_hash(config)}",
        f"# detected_cps_ref = {args.detected_cps!r}",
        f"# detected_w_ref = {rate_to_power(args.detected_cps, config.wavelengths.lambda_s)!r}",
        "theta_deg,r_p,visibility,r_dp,sample_pw_per_nw_detected,sample_w_at_ref",
    ]
    for row in rows:
        lines.append(
            f"{row.theta_deg!r},{row.r_p!r},{row.visibility!r},{row.r_dp!r},"
            f"{row.sample_pw_per_nw!r},{row.sample_w_at_ref!r}"
        )
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = _write_manifest(out, "rdp", argv, config, None, [out])
    print(f"wrote {out}, {manifest}")
    return 0


def _cmd_config(args, argv) -> int:
    if args.action == "write":
        config = _resolve_config(args.config)
        path = Path(args.path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(config_to_text(config))
        print(f"wrote {path}")
        return 0
    config = _resolve_config(args.config)
    sys.stdout.write(config_to_text(config))
    print(f"# config_hash = {config_hash(config)}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlisim",
        description=(
            "Folded nonlinear interferometer simulator: synthesize fringe scans, "
            "fit visibility, and map balance/loss parameter space."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        help="bench config file (default: $NLISIM_CONFIG, else built-in defaults)",
    )

    p = sub.add_parser(
        "fringe",
        parents=[common],
        help="simulate one piezo fringe scan and write it as CSV + JSON",
    )
    p.add_argument("--axis", choices=("pump", "signal", "idler"), default="idler",
                   help="which piezo mirror is scanned (default idler)")
    p.add_argument("--periods", type=float, default=3.0,
                   help="scan span in fringe periods of the scanned wavelength (default 3)")
    p.add_argument("--steps", type=int, default=200, help="samples per scan (default 200)")
    p.add_argument("--seed", type=int, default=0, help="base seed for the per-step counts")
    p.add_argument("--theta", type=angle_deg, default=45.0,
                   help="balance wave-plate angle in degrees, e.g. 45 or 45deg (default 45)")
    p.add_argument("--knife-signal", type=length_mm, default=None,
                   help="signal blade position in mm (default: config rest position)")
    p.add_argument("--knife-idler", type=length_mm, default=None,
                   help="idler blade position in mm (default: config rest position)")
    p.add_argument("--p-total", type=power_w, default=None,
                   help="override total pump power in watts (suffixes mW..aW accepted)")
    p.add_argument("--dwell", type=float, default=None, help="override counting bin in seconds")
    p.add_argument("--noiseless", action="store_true",
                   help="record rounded mean counts instead of Poisson draws")
    p.add_argument("--out", default="fringe", help="output basename (default 'fringe')")
    p.set_defaults(func=_cmd_fringe)

    p = sub.add_parser(
        "fit",
        parents=[common],
        help="fit a sinusoid to a scan file (native CSV/JSON or bare 2-column CSV)",
    )
    p.add_argument("input", help="trace file: scan CSV/JSON, or position_m,counts CSV")
    p.add_argument("--period-hint", type=length_m, default=None,
                   help="expected fringe period, e.g. 3.39um or 3390nm")
    p.add_argument("--fit-period", action="store_true",
                   help="refine the period within +-10%% of the hint")
    p.add_argument("--poisson-weights", action="store_true",
                   help="weight bins by 1/counts instead of plain least squares")
    p.add_argument("--out", default=None, help="also write the fit as JSON to this path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser(
        "map",
        parents=[common],
        help="compute a 2-D visibility/amplitude/ratio map over balance and loss",
    )
    p.add_argument("--mode", choices=("theory", "experiment"), required=True,
                   help="closed-form map or full simulated scan-and-fit per cell")
    p.add_argument("--x", choices=sorted(_X_FLAG_NAMES), default="rp",
                   help="x axis: power fraction (rp, 0..1) or wave-plate angle (theta, deg)")
    p.add_argument("--y", choices=sorted(_Y_FLAG_NAMES), default="ts",
                   help="y axis: transmissivity (ts/ti, 0..1) or blade position (knife-*, mm)")
    p.add_argument("--x-start", type=float, default=None, help="x range start (axis units)")
    p.add_argument("--x-stop", type=float, default=None, help="x range stop (axis units)")
    p.add_argument("--x-points", type=int, default=100, help="x samples (default 100)")
    p.add_argument("--y-start", type=float, default=None, help="y range start (axis units)")
    p.add_argument("--y-stop", type=float, default=None, help="y range stop (axis units)")
    p.add_argument("--y-points", type=int, default=50, help="y samples (default 50)")
    p.add_argument("--scan-steps", type=int, default=120,
                   help="experiment mode: samples per per-cell scan (default 120)")
    p.add_argument("--scan-periods", type=float, default=2.0,
                   help="experiment mode: idler periods per per-cell scan (default 2)")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes; changes wall time, never content")
    p.add_argument("--seed", type=int, default=0, help="master seed for cell-derived seeds")
    p.add_argument("--p-total", type=power_w, default=None,
                   help="override total pump power in watts")
    p.add_argument("--noiseless", action="store_true",
                   help="experiment mode without shot noise (rounded means)")
    p.add_argument("--golden", default=None,
                   help="compare the computed map against this stored CSV; exit 1 on mismatch")
    p.add_argument("--golden-rtol", type=float, default=0.0,
                   help="per-cell relative tolerance for --golden (default 0 = exact)")
    p.add_argument("--out", default=None, help="output basename")
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser(
        "rdp",
        parents=[common],
        help="tabulate visibility and detection-to-probe power ratio vs wave-plate angle",
    )
    p.add_argument("--theta-start", type=angle_deg, default=None,
                   help="start angle in degrees (default: config extinction axis)")
    p.add_argument("--theta-stop", type=angle_deg, default=None,
                   help="stop angle in degrees (default: extinction axis + 45)")
    p.add_argument("--theta-points", type=int, default=1801,
                   help="rows in the profile (default 1801)")
    p.add_argument("--detected-cps", type=float, default=3.0e4,
                   help="reference detected count rate for the sample-power column (default 3e4)")
    p.add_argument("--out", default="rdp.csv", help="output CSV path (default rdp.csv)")
    p.set_defaults(func=_cmd_rdp)

    p = sub.add_parser("config", parents=[common], help="write or show a bench config file")
    p.add_argument("action", choices=("write", "show"))
    p.add_argument("path", nargs="?", default="bench.cfg",
                   help="output path for 'write' (default bench.cfg)")
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "rdp":
        config_for_defaults = None
        if args.theta_start is None or args.theta_stop is None:
            try:
                config_for_defaults = _resolve_config(args.config)
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
        if args.theta_start is None:
            args.theta_start = config_for_defaults.hwp_offset_deg
        if args.theta_stop is None:
            args.theta_stop = config_for_defaults.hwp_offset_deg + 45.0
    try:
        return args.func(args, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

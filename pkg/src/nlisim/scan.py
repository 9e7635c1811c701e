"""Fringe-scan synthesis: sweep one piezo axis and record shot-noisy counts.

A scan is a pure function of its plan and the bench config: per-step seeds
derive from the plan seed and the step index, so steps can be recomputed or
evaluated concurrently and still agree bit for bit. Only the in-memory
creation timestamp differs between identical runs; it is deliberately left
out of the serialized forms so data files are byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .bench import BenchConfig, assemble_state, config_hash, detect, mean_detected_photons
from .errors import ConfigError, PhysicsError
from .model import WavelengthTriple

__all__ = [
    "ScanPlan",
    "ScanRecord",
    "run_scan",
    "scan_range_for_periods",
    "write_scan_csv",
    "write_scan_json",
    "read_trace_csv",
    "read_scan_json",
]

SCAN_SCHEMA = "scan-record/1"


@dataclass(frozen=True, slots=True)
class ScanPlan:
    """Recipe for one piezo sweep with the rest of the bench frozen.

    axis: which piezo is scanned ('pump' | 'signal' | 'idler').
    start_m, stop_m: first and last mirror positions (inclusive).
    steps: number of samples, >= 2, uniformly spaced.
    seed: base seed; step i draws with seed XOR i.
    theta_deg: wave-plate angle during the scan.
    knife_signal_mm, knife_idler_mm: blade positions (None = config rest).
    pump_offset_m, signal_offset_m, idler_offset_m: static piezo offsets;
        the scanned axis offset adds to the scan position.
    dwell_s: counting bin, None = config value.
    """

    axis: str
    start_m: float
    stop_m: float
    steps: int
    seed: int
    theta_deg: float
    knife_signal_mm: float | None = None
    knife_idler_mm: float | None = None
    pump_offset_m: float = 0.0
    signal_offset_m: float = 0.0
    idler_offset_m: float = 0.0
    dwell_s: float | None = None

    def __post_init__(self):
        if self.axis not in ("pump", "signal", "idler"):
            raise PhysicsError(f"unknown scan axis {self.axis!r}")
        if self.steps < 2:
            raise PhysicsError(f"a scan needs >= 2 steps, got {self.steps}")
        if not self.stop_m > self.start_m:
            raise PhysicsError(f"stop must exceed start, got [{self.start_m}, {self.stop_m}]")


@dataclass(frozen=True, slots=True)
class ScanRecord:
    """One completed scan: plan echo, per-step data, and provenance."""

    plan: ScanPlan
    positions_m: np.ndarray
    expected_rate_hz: np.ndarray
    counts: np.ndarray
    config_hash: str
    created: str = field(default="", compare=False)


def scan_range_for_periods(axis: str, n_periods: float, wl: WavelengthTriple) -> tuple[float, float]:
    """(start, stop) in meters spanning ``n_periods`` fringes on ``axis``."""
    if not n_periods > 0.0:
        raise PhysicsError(f"n_periods must be > 0, got {n_periods}")
    return 0.0, n_periods * wl.for_axis(axis)


def run_scan(plan: ScanPlan, config: BenchConfig, noiseless: bool = False) -> ScanRecord:
    """Execute a scan plan against a bench config.

    Per step: assemble the state at the commanded mirror position, convert
    the mean photon number to a rate through the mode flux, and draw counts
    with the step-derived seed. ``noiseless`` replaces the Poisson draw by
    the rounded mean (background still included), for pipeline checks.
    """
    if plan.dwell_s is not None and plan.dwell_s != config.dwell:
        config = replace(config, dwell=plan.dwell_s)

    positions = np.linspace(plan.start_m, plan.stop_m, plan.steps)
    expected = np.empty(plan.steps)
    counts = np.empty(plan.steps, dtype=np.int64)

    shifts = {
        "pump": plan.pump_offset_m,
        "signal": plan.signal_offset_m,
        "idler": plan.idler_offset_m,
    }
    for i, pos in enumerate(positions):
        step_shifts = dict(shifts)
        step_shifts[plan.axis] = shifts[plan.axis] + pos
        state = assemble_state(
            config,
            plan.theta_deg,
            knife_signal_mm=plan.knife_signal_mm,
            knife_idler_mm=plan.knife_idler_mm,
            pump_shift_m=step_shifts["pump"],
            signal_shift_m=step_shifts["signal"],
            idler_shift_m=step_shifts["idler"],
        )
        rate = config.mode_flux * mean_detected_photons(state)
        expected[i] = rate
        if noiseless:
            counts[i] = round(config.dwell * (config.eta_detect * rate + config.background_rate))
        else:
            counts[i] = detect(rate, config, plan.seed ^ i)

    return ScanRecord(
        plan=plan,
        positions_m=positions,
        expected_rate_hz=expected,
        counts=counts,
        config_hash=config_hash(config),
        created=datetime.now(timezone.utc).isoformat(),
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _plan_header_items(record: ScanRecord) -> list[tuple[str, object]]:
    plan = record.plan
    return [
        ("config_hash", record.config_hash),
        ("axis", plan.axis),
        ("start_m", repr(plan.start_m)),
        ("stop_m", repr(plan.stop_m)),
        ("steps", plan.steps),
        ("seed", plan.seed),
        ("theta_deg", repr(plan.theta_deg)),
        ("knife_signal_mm", "" if plan.knife_signal_mm is None else repr(plan.knife_signal_mm)),
        ("knife_idler_mm", "" if plan.knife_idler_mm is None else repr(plan.knife_idler_mm)),
        ("pump_offset_m", repr(plan.pump_offset_m)),
        ("signal_offset_m", repr(plan.signal_offset_m)),
        ("idler_offset_m", repr(plan.idler_offset_m)),
        ("dwell_s", "" if plan.dwell_s is None else repr(plan.dwell_s)),
    ]


def write_scan_csv(record: ScanRecord, path) -> None:
    """CSV with a '#'-prefixed header carrying the plan and config hash."""
    lines = [f"# {SCAN_SCHEMA}"]
    lines += [f"# {key} = {value}" for key, value in _plan_header_items(record)]
    lines.append("position_m,expected_rate_hz,counts")
    for pos, rate, count in zip(record.positions_m, record.expected_rate_hz, record.counts):
        lines.append(f"{float(pos)!r},{float(rate)!r},{int(count)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_scan_json(record: ScanRecord, path) -> None:
    payload = {
        "schema": SCAN_SCHEMA,
        "plan": asdict(record.plan),
        "config_hash": record.config_hash,
        "position_m": [float(v) for v in record.positions_m],
        "expected_rate_hz": [float(v) for v in record.expected_rate_hz],
        "counts": [int(v) for v in record.counts],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_scan_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scan JSON {path}: {exc}") from exc
    if payload.get("schema") != SCAN_SCHEMA:
        raise ConfigError(f"{path}: not a {SCAN_SCHEMA} file")
    return payload


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read a scan CSV, tolerant of real lab traces.

    Accepts the native format, a headed two-column (position_m, counts)
    file, or a bare numeric two/three-column CSV. Returns positions, counts
    and whatever header metadata was present.
    """
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    n_columns = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc

    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            elif body:
                meta.setdefault("schema", body)
            continue
        cells = [cell.strip() for cell in line.split(",")]
        try:
            values = [float(cell) for cell in cells]
        except ValueError:
            # a column-name row; remember the layout and move on
            meta["columns"] = ",".join(cells)
            continue
        if n_columns is None:
            n_columns = len(values)
        if len(values) != n_columns:
            raise ConfigError(f"{path}: ragged row {line!r}")
        rows.append(values)

    if not rows or n_columns is None or n_columns < 2:
        raise ConfigError(f"{path}: no (position, counts) data rows found")

    data = np.asarray(rows)
    positions = data[:, 0]
    columns = meta.get("columns", "")
    if n_columns >= 3 and "counts" in columns.split(","):
        counts = data[:, columns.split(",").index("counts")]
    elif n_columns >= 3:
        counts = data[:, 2]  # native layout: position, expected rate, counts
    else:
        counts = data[:, 1]
    if np.any(counts < 0):
        raise ConfigError(f"{path}: negative counts")
    return positions, counts, meta

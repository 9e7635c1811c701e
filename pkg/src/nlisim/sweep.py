"""2-D parameter maps over balance and loss axes.

Two map modes:

``theory``
    Per cell, evaluate the closed-form model directly (no noise, no
    fitting). Abstract axes (``r_p``, ``t_s``, ``t_i``) describe the
    textbook interferometer: pure power split, unvaried transmissivity 1.
    Physical axes (``hwp_theta_deg``, ``knife_*_mm``) go through the bench
    transfer functions, including fixed losses.

``experiment``
    Per cell, run a full simulated idler-axis fringe scan, fit it, and
    apply the SNR clamp, exactly as the instrument pipeline would. Cell
    seeds derive from the master seed and the cell indices, so any
    sub-rectangle recomputes identically and worker count never changes
    results.

Per-cell failures (blocked arm, unfittable trace) are data, not exceptions:
the cell is recorded with an error note and the map completes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from .analysis import FringeFit, fit_fringe
from .bench import (
    BenchConfig,
    assemble_state,
    config_hash,
    hwp_split,
    knife_position_for_transmission,
    knife_transmission,
    mean_detected_photons,
    rate_to_power,
)
from .errors import ConfigError, FitError, NliError, PhysicsError
from .model import (
    InterferometerState,
    PowerBalance,
    detection_probe_ratio,
    fringe_amplitude,
    gain_from_power,
    split_power,
    visibility,
)
from .scan import ScanPlan, run_scan, scan_range_for_periods

__all__ = [
    "GridSpec",
    "CellResult",
    "ParamMap",
    "RdpRow",
    "theory_map",
    "experiment_map",
    "compute_map",
    "rdp_profile",
    "map_to_csv",
    "write_map_csv",
    "write_map_json",
    "compare_map_to_golden",
]

MAP_SCHEMA = "param-map/1"

_X_AXES = ("r_p", "hwp_theta_deg")
_Y_AXES = ("t_s", "t_i", "knife_signal_mm", "knife_idler_mm")


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Definition of one map: axes, mode, bench config and master seed."""

    x_name: str
    x_start: float
    x_stop: float
    x_points: int
    y_name: str
    y_start: float
    y_stop: float
    y_points: int
    mode: str
    config: BenchConfig
    seed: int = 0
    scan_steps: int = 120  # experiment mode: samples per per-cell scan
    scan_periods: float = 2.0  # experiment mode: idler periods per scan
    noiseless: bool = False  # experiment mode: rounded means instead of draws

    def __post_init__(self):
        if self.x_name not in _X_AXES:
            raise ConfigError(f"x axis must be one of {_X_AXES}, got {self.x_name!r}")
        if self.y_name not in _Y_AXES:
            raise ConfigError(f"y axis must be one of {_Y_AXES}, got {self.y_name!r}")
        if self.mode not in ("theory", "experiment"):
            raise ConfigError(f"mode must be 'theory' or 'experiment', got {self.mode!r}")
        if self.x_points < 2 or self.y_points < 2:
            raise ConfigError("grids need at least 2 points per axis")
        for name, start, stop in (
            (self.x_name, self.x_start, self.x_stop),
            (self.y_name, self.y_start, self.y_stop),
        ):
            if name in ("r_p", "t_s", "t_i"):
                lo, hi = min(start, stop), max(start, stop)
                if lo < 0.0 or hi > 1.0:
                    raise ConfigError(f"{name} range [{start}, {stop}] leaves [0, 1]")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.scan_steps < 6:
            raise ConfigError(f"scan_steps must be >= 6 to fit, got {self.scan_steps}")
        if not self.scan_periods >= 1.0:
            raise ConfigError(f"scans must span >= 1 period, got {self.scan_periods}")

    def x_values(self) -> np.ndarray:
        return np.linspace(self.x_start, self.x_stop, self.x_points)

    def y_values(self) -> np.ndarray:
        return np.linspace(self.y_start, self.y_stop, self.y_points)


@dataclass(frozen=True, slots=True)
class CellResult:
    visibility: float
    amplitude: float
    r_dp: float
    snr: float
    error: str = ""
    fit: FringeFit | None = None


@dataclass(frozen=True, slots=True)
class ParamMap:
    """Grid echo plus per-cell results as (y_points, x_points) arrays."""

    grid: GridSpec
    x_values: np.ndarray
    y_values: np.ndarray
    visibility: np.ndarray
    amplitude: np.ndarray
    r_dp: np.ndarray
    snr: np.ndarray
    errors: tuple
    fits: dict = field(default_factory=dict)
    config_hash: str = ""


def cell_seed(master_seed: int, ix: int, iy: int) -> int:
    """Per-cell seed: a hash of the master seed and the cell indices."""
    return int(np.random.SeedSequence([master_seed, ix, iy]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# per-cell evaluation
# ---------------------------------------------------------------------------

def _theta_for_x(grid: GridSpec, x: float) -> float:
    if grid.x_name == "hwp_theta_deg":
        return x
    # invert r_p = sin^2(2 (theta - theta0)) on the principal branch
    return grid.config.hwp_offset_deg + 0.5 * math.degrees(math.asin(math.sqrt(x)))


def _theory_state(grid: GridSpec, x: float, y: float) -> InterferometerState:
    cfg = grid.config
    r_p = hwp_split(x, cfg.hwp_offset_deg) if grid.x_name == "hwp_theta_deg" else x
    p_a, p_b = split_power(PowerBalance(r_p, cfg.p_total))
    g_a = gain_from_power(p_a, cfg.gain_law)
    g_b = gain_from_power(p_b, cfg.gain_law)

    if grid.y_name == "t_s":
        t_s, t_i = y, 1.0
    elif grid.y_name == "t_i":
        t_s, t_i = 1.0, y
    elif grid.y_name == "knife_signal_mm":
        t_s = cfg.fixed_loss_signal * knife_transmission(replace(cfg.knife_signal, position_mm=y))
        t_i = cfg.fixed_loss_idler * knife_transmission(cfg.knife_idler)
    else:
        t_s = cfg.fixed_loss_signal * knife_transmission(cfg.knife_signal)
        t_i = cfg.fixed_loss_idler * knife_transmission(replace(cfg.knife_idler, position_mm=y))
    return InterferometerState(t_s, t_i, g_a, g_b, 0.0)


def _theory_cell(grid: GridSpec, ix: int, iy: int) -> CellResult:
    x = float(grid.x_values()[ix])
    y = float(grid.y_values()[iy])
    notes = []
    vis = amp = r_dp = math.nan
    try:
        state = _theory_state(grid, x, y)
    except PhysicsError as exc:
        return CellResult(vis, amp, r_dp, math.nan, error=str(exc))
    try:
        vis = visibility(state)
    except PhysicsError as exc:
        notes.append(str(exc))
    if grid.config.p_total > 0.0:
        amp = fringe_amplitude(state) / grid.config.p_total
    else:
        notes.append("amplitude undefined at zero total power")
    try:
        r_dp = detection_probe_ratio(state, grid.config.wavelengths, grid.config.rate_model)
    except PhysicsError as exc:
        notes.append(str(exc))
    return CellResult(vis, amp, r_dp, math.nan, error="; ".join(notes))


def _blades_for_y(grid: GridSpec, y: float) -> tuple[float | None, float | None]:
    cfg = grid.config
    if grid.y_name == "knife_signal_mm":
        return y, None
    if grid.y_name == "knife_idler_mm":
        return None, y
    if grid.y_name == "t_s":
        if y > cfg.fixed_loss_signal:
            raise PhysicsError(
                f"t_s={y} exceeds the fixed signal transmissivity {cfg.fixed_loss_signal}"
            )
        return knife_position_for_transmission(y / cfg.fixed_loss_signal, cfg.knife_signal), None
    if y > cfg.fixed_loss_idler:
        raise PhysicsError(f"t_i={y} exceeds the fixed idler transmissivity {cfg.fixed_loss_idler}")
    return None, knife_position_for_transmission(y / cfg.fixed_loss_idler, cfg.knife_idler)


def _experiment_cell(grid: GridSpec, ix: int, iy: int) -> CellResult:
    x = float(grid.x_values()[ix])
    y = float(grid.y_values()[iy])
    cfg = grid.config
    notes = []
    try:
        theta = _theta_for_x(grid, x)
        knife_signal_mm, knife_idler_mm = _blades_for_y(grid, y)
    except PhysicsError as exc:
        return CellResult(0.0, math.nan, math.nan, math.nan, error=str(exc))

    state = assemble_state(cfg, theta, knife_signal_mm, knife_idler_mm)
    try:
        r_dp = detection_probe_ratio(state, cfg.wavelengths, cfg.rate_model)
    except PhysicsError as exc:
        r_dp = math.nan
        notes.append(str(exc))

    start, stop = scan_range_for_periods("idler", grid.scan_periods, cfg.wavelengths)
    plan = ScanPlan(
        axis="idler",
        start_m=start,
        stop_m=stop,
        steps=grid.scan_steps,
        seed=cell_seed(grid.seed, ix, iy),
        theta_deg=theta,
        knife_signal_mm=knife_signal_mm,
        knife_idler_mm=knife_idler_mm,
    )
    try:
        record = run_scan(plan, cfg, noiseless=grid.noiseless)
        fit = fit_fringe(record, cfg.wavelengths.lambda_i)
    except NliError as exc:
        # unfittable cell: clamped to zero, flagged, map goes on
        notes.append(str(exc))
        return CellResult(0.0, math.nan, r_dp, math.nan, error="; ".join(notes))
    return CellResult(
        visibility=fit.visibility_clamped,
        amplitude=fit.amplitude_pp,
        r_dp=r_dp,
        snr=fit.snr,
        error="; ".join(notes),
        fit=fit,
    )


# worker-side state for the process pool; set once per worker by _init_worker
_WORKER_GRID: GridSpec | None = None


def _init_worker(grid: GridSpec) -> None:
    global _WORKER_GRID
    _WORKER_GRID = grid


def _worker_cell(index: tuple[int, int]) -> tuple[int, int, CellResult]:
    ix, iy = index
    assert _WORKER_GRID is not None
    if _WORKER_GRID.mode == "theory":
        return ix, iy, _theory_cell(_WORKER_GRID, ix, iy)
    return ix, iy, _experiment_cell(_WORKER_GRID, ix, iy)


def _assemble(grid: GridSpec, results) -> ParamMap:
    shape = (grid.y_points, grid.x_points)
    arrays = {name: np.full(shape, math.nan) for name in ("visibility", "amplitude", "r_dp", "snr")}
    errors = []
    fits = {}
    for ix, iy, cell in results:
        arrays["visibility"][iy, ix] = cell.visibility
        arrays["amplitude"][iy, ix] = cell.amplitude
        arrays["r_dp"][iy, ix] = cell.r_dp
        arrays["snr"][iy, ix] = cell.snr
        if cell.error:
            errors.append((ix, iy, cell.error))
        if cell.fit is not None:
            fits[(ix, iy)] = cell.fit
    return ParamMap(
        grid=grid,
        x_values=grid.x_values(),
        y_values=grid.y_values(),
        visibility=arrays["visibility"],
        amplitude=arrays["amplitude"],
        r_dp=arrays["r_dp"],
        snr=arrays["snr"],
        errors=tuple(sorted(errors)),
        fits=fits,
        config_hash=config_hash(grid.config),
    )


def compute_map(grid: GridSpec, workers: int = 1) -> ParamMap:
    """Evaluate every cell of the grid, optionally on a process pool.

    Cells are independent work items addressed by index; assembly is
    order-independent, so maps computed with 1 and N workers are identical.
    """
    indices = [(ix, iy) for iy in range(grid.y_points) for ix in range(grid.x_points)]
    if workers <= 1:
        _init_worker(grid)
        results = [_worker_cell(index) for index in indices]
    else:
        chunk = max(1, len(indices) // (workers * 8))
        with Pool(processes=workers, initializer=_init_worker, initargs=(grid,)) as pool:
            results = pool.map(_worker_cell, indices, chunksize=chunk)
    return _assemble(grid, results)


def theory_map(grid: GridSpec, workers: int = 1) -> ParamMap:
    if grid.mode != "theory":
        raise ConfigError(f"theory_map needs a theory-mode grid, got {grid.mode!r}")
    return compute_map(grid, workers)


def experiment_map(grid: GridSpec, workers: int = 1) -> ParamMap:
    if grid.mode != "experiment":
        raise ConfigError(f"experiment_map needs an experiment-mode grid, got {grid.mode!r}")
    return compute_map(grid, workers)


# ---------------------------------------------------------------------------
# balance profile: visibility and detection-to-probe ratio vs HWP angle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RdpRow:
    theta_deg: float
    r_p: float
    visibility: float
    r_dp: float
    sample_pw_per_nw: float
    sample_w_at_ref: float
    flag: str = ""


def rdp_profile(
    config: BenchConfig,
    theta_start_deg: float,
    theta_stop_deg: float,
    points: int,
    detected_cps_ref: float = 3.0e4,
) -> list[RdpRow]:
    """Visibility and detection-to-probe power ratio versus wave-plate angle.

    The visibility column is what this bench would show with both blades at
    their rest positions (fixed losses included). The ratio column is the
    loss-free design figure: an exact power split feeding the gain law with
    unit transmissivities, so it measures what the balance alone buys. The
    configured fixed losses are calibration devices for the contrast and do
    not sit on a metered power path, which is also why the quoted
    sample-power columns derive from the detected rate through this design
    ratio.

    sample_pw_per_nw: sample-illumination power (pW) per nW of detected
        power. sample_w_at_ref: sample power (W) when the detected rate is
        ``detected_cps_ref`` counts/s at the signal wavelength.
    """
    if points < 2:
        raise ConfigError(f"profile needs >= 2 points, got {points}")
    wl = config.wavelengths
    rates = config.rate_model
    rows = []
    for theta in np.linspace(theta_start_deg, theta_stop_deg, points):
        theta = float(theta)
        r_p = hwp_split(theta, config.hwp_offset_deg)
        bench_state = assemble_state(config, theta)
        n_top = mean_detected_photons(replace(bench_state, phi=math.pi))
        n_bot = mean_detected_photons(replace(bench_state, phi=0.0))
        vis = (n_top - n_bot) / (n_top + n_bot) if n_top + n_bot > 0.0 else 0.0

        p_a, p_b = split_power(PowerBalance(r_p, config.p_total))
        design = InterferometerState(
            1.0,
            1.0,
            gain_from_power(p_a, config.gain_law),
            gain_from_power(p_b, config.gain_law),
            0.0,
        )
        flag = ""
        try:
            r_dp = detection_probe_ratio(design, wl, rates)
            per_nw = 1000.0 / r_dp
            at_ref = rate_to_power(detected_cps_ref, wl.lambda_s) / r_dp
        except PhysicsError as exc:
            r_dp, per_nw, at_ref = math.inf, 0.0, 0.0
            flag = str(exc)
        rows.append(RdpRow(theta, r_p, vis, r_dp, per_nw, at_ref, flag))
    return rows


# ---------------------------------------------------------------------------
# serialization and golden comparison
# ---------------------------------------------------------------------------

def _map_header(pmap: ParamMap) -> list[str]:
    grid = pmap.grid
    return [
        f"# {MAP_SCHEMA}",
        f"# mode = {grid.mode}",
        f"# x_axis = {grid.x_name}",
        f"# x_start = {grid.x_start!r}",
        f"# x_stop = {grid.x_stop!r}",
        f"# x_points = {grid.x_points}",
        f"# y_axis = {grid.y_name}",
        f"# y_start = {grid.y_start!r}",
        f"# y_stop = {grid.y_stop!r}",
        f"# y_points = {grid.y_points}",
        f"# scan_steps = {grid.scan_steps}",
        f"# scan_periods = {grid.scan_periods!r}",
        f"# noiseless = {grid.noiseless}",
        f"# config_hash = {pmap.config_hash}",
        f"# seed = {grid.seed}",
    ]


def map_to_csv(pmap: ParamMap) -> str:
    """Long-form CSV; float cells use shortest round-trip representation."""
    lines = _map_header(pmap)
    lines.append("x,y,visibility,amplitude,r_dp,snr")
    for iy, y in enumerate(pmap.y_values):
        for ix, x in enumerate(pmap.x_values):
            lines.append(
                f"{float(x)!r},{float(y)!r},"
                f"{float(pmap.visibility[iy, ix])!r},{float(pmap.amplitude[iy, ix])!r},"
                f"{float(pmap.r_dp[iy, ix])!r},{float(pmap.snr[iy, ix])!r}"
            )
    return "\n".join(lines) + "\n"


def write_map_csv(pmap: ParamMap, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(map_to_csv(pmap))


def write_map_json(pmap: ParamMap, path) -> None:
    grid = pmap.grid
    payload = {
        "schema": MAP_SCHEMA,
        "mode": grid.mode,
        "x_axis": grid.x_name,
        "y_axis": grid.y_name,
        "x_values": [float(v) for v in pmap.x_values],
        "y_values": [float(v) for v in pmap.y_values],
        "scan_steps": grid.scan_steps,
        "scan_periods": grid.scan_periods,
        "noiseless": grid.noiseless,
        "config_hash": pmap.config_hash,
        "seed": grid.seed,
        "visibility": [[float(v) for v in row] for row in pmap.visibility],
        "amplitude": [[float(v) for v in row] for row in pmap.amplitude],
        "r_dp": [[float(v) for v in row] for row in pmap.r_dp],
        "snr": [[float(v) for v in row] for row in pmap.snr],
        "errors": [{"ix": ix, "iy": iy, "error": msg} for ix, iy, msg in pmap.errors],
        "fits": [
            {"ix": ix, "iy": iy, **fit.to_dict()} for (ix, iy), fit in sorted(pmap.fits.items())
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, allow_nan=True)
        fh.write("\n")


def _values_match(a: float, b: float, rtol: float) -> bool:
    if math.isnan(a) and math.isnan(b):
        return True
    if math.isinf(a) or math.isinf(b):
        return a == b
    if rtol == 0.0:
        return a == b
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def compare_map_to_golden(pmap: ParamMap, golden_path, rtol: float = 0.0) -> list[str]:
    """Compare a freshly computed map against a stored CSV.

    Returns a list of human-readable mismatches (empty = match). With
    rtol = 0 the comparison is exact on the parsed values; NaN matches NaN.
    """
    try:
        with open(golden_path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read golden map {golden_path}: {exc}") from exc

    golden_meta = {}
    golden_rows = []
    for line in lines:
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                golden_meta[key.strip()] = value.strip()
            continue
        if not line or line.startswith("x,"):
            continue
        golden_rows.append([float(cell) for cell in line.split(",")])

    mismatches = []
    expected_rows = pmap.grid.x_points * pmap.grid.y_points
    if len(golden_rows) != expected_rows:
        return [f"golden has {len(golden_rows)} cells, map has {expected_rows}"]
    if golden_meta.get("config_hash") not in ("", None, pmap.config_hash):
        mismatches.append(
            f"config hash differs: golden {golden_meta['config_hash']}, map {pmap.config_hash}"
        )
    columns = ("x", "y", "visibility", "amplitude", "r_dp", "snr")
    row_iter = iter(golden_rows)
    for iy in range(pmap.grid.y_points):
        for ix in range(pmap.grid.x_points):
            row = next(row_iter)
            ours = (
                float(pmap.x_values[ix]),
                float(pmap.y_values[iy]),
                float(pmap.visibility[iy, ix]),
                float(pmap.amplitude[iy, ix]),
                float(pmap.r_dp[iy, ix]),
                float(pmap.snr[iy, ix]),
            )
            for name, got, want in zip(columns, ours, row):
                if not _values_match(got, want, rtol):
                    mismatches.append(f"cell ({ix}, {iy}) {name}: map {got!r} != golden {want!r}")
                    if len(mismatches) >= 50:
                        mismatches.append("... (further mismatches suppressed)")
                        return mismatches
    return mismatches

"""Virtual optical bench.

Deterministic transfer functions for the hardware around the crystal (wave
plate power split, knife-edge loss, piezo path-length scanning, photon-rate
to optical-power conversion) plus a seeded Poisson photon counter. The bench
composes these into the :class:`~nlisim.model.InterferometerState` tuple the
closed-form model consumes.

All transfer functions are pure; :func:`detect` takes an explicit seed per
call, so concurrent use never shares generator state.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np

from .errors import ConfigError, PhysicsError
from .model import (
    GainLaw,
    InterferometerState,
    PowerBalance,
    RateModel,
    WavelengthTriple,
    gain_from_power,
    idler_wavelength,
    split_power,
)

__all__ = [
    "KnifeEdge",
    "PiezoAxis",
    "BenchConfig",
    "default_config",
    "hwp_split",
    "knife_transmission",
    "knife_position_for_transmission",
    "piezo_phase",
    "rate_to_power",
    "power_to_rate",
    "assemble_state",
    "mean_detected_photons",
    "detect",
    "load_config",
    "save_config",
    "config_hash",
]

# Exact SI defining constants (2019 redefinition).
PLANCK_H = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m/s

# Optical path change per meter of mirror travel. The piezo mirrors here add
# one fringe per wavelength of travel; set to 2.0 for a double-pass geometry.
PATH_PER_DISPLACEMENT = 1.0

_AXES = ("pump", "signal", "idler")

CONFIG_SCHEMA = "bench-config/1"


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class KnifeEdge:
    """Straight blade cutting a Gaussian beam; all lengths in millimeters.

    position_mm: blade edge coordinate (advancing = more blocking).
    center_mm: beam center coordinate at the blade plane.
    waist_mm: 1/e^2 intensity radius at the blade plane.
    """

    position_mm: float
    center_mm: float = 0.0
    waist_mm: float = 0.12

    def __post_init__(self):
        if not self.waist_mm > 0.0:
            raise PhysicsError(f"knife waist must be > 0, got {self.waist_mm}")


@dataclass(frozen=True, slots=True)
class PiezoAxis:
    """A piezo mirror displacement on one of the three beam paths.

    which: 'pump', 'signal' or 'idler'.
    delta_l: mirror displacement in meters.
    """

    which: str
    delta_l: float = 0.0

    def __post_init__(self):
        if self.which not in _AXES:
            raise PhysicsError(f"piezo axis must be one of {_AXES}, got {self.which!r}")


@dataclass(frozen=True, slots=True)
class BenchConfig:
    """Calibrated description of the whole bench.

    The defaults describe a 1064 nm pumped periodically poled crystal
    producing 1550 nm signal (detected on an SNSPD behind fiber) and a
    3.39 um idler that probes the sample. Count-rate calibration: with the
    default mode flux and gain coefficient the detected rate is about
    3e4 cps at strong unbalance, nearly independent of the split because
    the second pass dominates the detected flux.
    """

    wavelengths: WavelengthTriple
    gain_law: GainLaw
    p_total: float = 1.0e-3  # W
    hwp_offset_deg: float = 22.5  # angle at which all power goes to one pass
    knife_signal: KnifeEdge = field(default_factory=lambda: KnifeEdge(-1.2))
    knife_idler: KnifeEdge = field(default_factory=lambda: KnifeEdge(-1.2))
    fixed_loss_signal: float = 0.95  # alignment/coating transmissivity
    fixed_loss_idler: float = 0.4  # opaque extra idler loss, hard to itemize
    pbs_extinction: float = 1.0e-3  # power leakage fraction between pump arms
    background_rate: float = 0.01  # Hz
    eta_detect: float = 0.8
    eta_probe: float = 0.8
    mode_flux: float = 3.75e9  # photons/s per unit gain
    dwell: float = 0.05  # s

    def __post_init__(self):
        for name in ("fixed_loss_signal", "fixed_loss_idler", "eta_detect", "eta_probe"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.pbs_extinction < 1.0:
            raise ConfigError(f"pbs_extinction must be in [0, 1), got {self.pbs_extinction}")
        if self.p_total < 0.0:
            raise ConfigError(f"p_total must be >= 0, got {self.p_total}")
        if not self.dwell > 0.0:
            raise ConfigError(f"dwell must be > 0, got {self.dwell}")
        if self.background_rate < 0.0:
            raise ConfigError(f"background_rate must be >= 0, got {self.background_rate}")
        if self.mode_flux < 0.0:
            raise ConfigError(f"mode_flux must be >= 0, got {self.mode_flux}")

    @property
    def rate_model(self) -> RateModel:
        return RateModel(self.mode_flux, self.eta_detect, self.eta_probe)


def default_config() -> BenchConfig:
    """Bench with the default calibration (see :class:`BenchConfig`)."""
    lambda_p, lambda_s = 1.064e-6, 1.550e-6
    wl = WavelengthTriple(lambda_p, lambda_s, idler_wavelength(lambda_p, lambda_s))
    return BenchConfig(wavelengths=wl, gain_law=GainLaw(kappa=0.01))


# ---------------------------------------------------------------------------
# transfer functions
# ---------------------------------------------------------------------------

def hwp_split(theta_deg: float, theta0_deg: float) -> float:
    """Fraction of pump power sent to the first pass for HWP angle theta.

    Malus-law split r_p = sin^2(2 (theta - theta0)); theta0 is the
    extinction axis where all power goes to the second pass. Total power is
    conserved by construction, and angles wrap naturally.
    """
    return math.sin(2.0 * math.radians(theta_deg - theta0_deg)) ** 2


def knife_transmission(k: KnifeEdge) -> float:
    """Power fraction of a Gaussian beam passing the blade, in [0, 1].

    t = erfc(sqrt(2) (position - center) / waist) / 2: far below the center
    the beam passes untouched, at the center exactly half the power passes,
    far above it is blocked. Monotone non-increasing as the blade advances.
    """
    return 0.5 * math.erfc(math.sqrt(2.0) * (k.position_mm - k.center_mm) / k.waist_mm)


def knife_position_for_transmission(t: float, k: KnifeEdge) -> float:
    """Blade position (mm) at which the edge transmits the fraction ``t``.

    Inverse of :func:`knife_transmission` for the same beam geometry;
    t <= 0 and t >= 1 saturate at +-9 waists where the erf profile is flat
    to double precision.
    """
    if t <= 0.0:
        return k.center_mm + 9.0 * k.waist_mm
    if t >= 1.0:
        return k.center_mm - 9.0 * k.waist_mm
    return k.center_mm + 0.5 * k.waist_mm * NormalDist().inv_cdf(1.0 - t)


def piezo_phase(axis: PiezoAxis, wl: WavelengthTriple) -> float:
    """Signed phase contribution (radians) of one piezo displacement.

    The total phase is phi_pump - phi_idler - phi_signal, so the pump axis
    contributes positively and the signal/idler axes negatively. A
    displacement of one wavelength on any axis moves the fringe by exactly
    one period.
    """
    lam = wl.for_axis(axis.which)
    magnitude = 2.0 * math.pi * PATH_PER_DISPLACEMENT * axis.delta_l / lam
    return magnitude if axis.which == "pump" else -magnitude


def rate_to_power(rate: float, lam: float) -> float:
    """Optical power in watts for a photon rate (1/s) at wavelength ``lam``."""
    if rate < 0.0:
        raise PhysicsError(f"rate must be >= 0, got {rate}")
    if lam <= 0.0:
        raise PhysicsError(f"wavelength must be > 0, got {lam}")
    return rate * PLANCK_H * SPEED_OF_LIGHT / lam


def power_to_rate(power: float, lam: float) -> float:
    """Photon rate (1/s) carried by an optical power in watts."""
    if power < 0.0:
        raise PhysicsError(f"power must be >= 0, got {power}")
    if lam <= 0.0:
        raise PhysicsError(f"wavelength must be > 0, got {lam}")
    return power * lam / (PLANCK_H * SPEED_OF_LIGHT)


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def assemble_state(
    config: BenchConfig,
    theta_deg: float,
    knife_signal_mm: float | None = None,
    knife_idler_mm: float | None = None,
    pump_shift_m: float = 0.0,
    signal_shift_m: float = 0.0,
    idler_shift_m: float = 0.0,
) -> InterferometerState:
    """Compose the optical train into an interferometer state.

    Blade positions default to the calibrated rest positions in the config;
    piezo displacements default to zero. The polarizing splitter leaks a
    ``pbs_extinction`` fraction of each pump arm into the other before the
    gains are evaluated.
    """
    r_p = hwp_split(theta_deg, config.hwp_offset_deg)
    p_a, p_b = split_power(PowerBalance(r_p, config.p_total))
    eps = config.pbs_extinction
    p_a, p_b = (1.0 - eps) * p_a + eps * p_b, eps * p_a + (1.0 - eps) * p_b

    edge_s = config.knife_signal
    if knife_signal_mm is not None:
        edge_s = replace(edge_s, position_mm=knife_signal_mm)
    edge_i = config.knife_idler
    if knife_idler_mm is not None:
        edge_i = replace(edge_i, position_mm=knife_idler_mm)

    phi = (
        piezo_phase(PiezoAxis("pump", pump_shift_m), config.wavelengths)
        + piezo_phase(PiezoAxis("signal", signal_shift_m), config.wavelengths)
        + piezo_phase(PiezoAxis("idler", idler_shift_m), config.wavelengths)
    )
    return InterferometerState(
        t_s=config.fixed_loss_signal * knife_transmission(edge_s),
        t_i=config.fixed_loss_idler * knife_transmission(edge_i),
        g_a=gain_from_power(p_a, config.gain_law),
        g_b=gain_from_power(p_b, config.gain_law),
        phi=phi,
    )


def mean_detected_photons(state: InterferometerState) -> float:
    """Mean signal photon number reaching the detection path.

    Beamsplitter loss model of the two-pass cascade: the first-pass signal
    arrives attenuated by t_s, the second-pass signal arrives regardless of
    idler loss, and idler loss enters only through the coherence it removes
    from the seeding. Evaluates

        N = t_s g_a (1+g_b) + g_b (1 + t_i g_a)
            - 2 sqrt(t_s t_i g_a g_b (1+g_a)(1+g_b)) cos(phi).

    This differs from :func:`nlisim.model.photon_number`, which attenuates
    the second-pass term by t_i and therefore lets pump unbalancing restore
    full contrast under idler loss; here idler loss caps the contrast at
    sqrt(t_i)-ish no matter the balance, which is what the instrument shows.
    The two expressions coincide whenever t_i = 1 (so for an all-ideal
    bench the composition reproduces the bare model exactly).
    """
    x = state.t_s * state.g_a * (1.0 + state.g_b)
    y = state.g_b * (1.0 + state.t_i * state.g_a)
    cross = (
        (state.t_s * state.t_i)
        * (state.g_a * state.g_b)
        * ((1.0 + state.g_a) * (1.0 + state.g_b))
    )
    return x + y - 2.0 * math.sqrt(cross) * math.cos(state.phi)


def detect(mean_rate: float, config: BenchConfig, seed: int) -> int:
    """One photon-counting acquisition: Poisson counts over one dwell bin.

    The Poisson mean is dwell * (eta_detect * mean_rate + background_rate).
    The generator is constructed from ``seed`` on every call, so identical
    inputs and seed give identical counts, on any schedule of calls.
    """
    if mean_rate < 0.0:
        raise PhysicsError(f"mean rate must be >= 0, got {mean_rate}")
    mean = config.dwell * (config.eta_detect * mean_rate + config.background_rate)
    rng = np.random.default_rng(seed)
    return int(rng.poisson(mean))


# ---------------------------------------------------------------------------
# config file I/O: flat "key = value" text, SI units, '#' comments
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = (
    # (file key, doc comment)
    ("lambda_pump_m", "pump wavelength"),
    ("lambda_signal_m", "signal (detected) wavelength"),
    ("lambda_idler_m", "idler (probe) wavelength"),
    ("kappa_per_w", "parametric gain coefficient"),
    ("p_total_w", "total pump power"),
    ("hwp_offset_deg", "wave-plate extinction axis"),
    ("knife_signal_position_m", "signal blade edge"),
    ("knife_signal_center_m", "signal beam center at the blade"),
    ("knife_signal_waist_m", "signal beam 1/e^2 radius at the blade"),
    ("knife_idler_position_m", "idler blade edge"),
    ("knife_idler_center_m", "idler beam center at the blade"),
    ("knife_idler_waist_m", "idler beam 1/e^2 radius at the blade"),
    ("fixed_loss_signal", "fixed signal-path transmissivity"),
    ("fixed_loss_idler", "fixed idler-path transmissivity"),
    ("pbs_extinction", "pump-arm leakage fraction"),
    ("background_rate_hz", "dark/background count rate"),
    ("eta_detect", "detection-path efficiency"),
    ("eta_probe", "crystal-to-sample transmission"),
    ("mode_flux_hz", "photon rate per unit gain"),
    ("dwell_s", "counting bin length"),
)


def _config_to_mapping(config: BenchConfig) -> dict[str, float]:
    wl = config.wavelengths
    return {
        "lambda_pump_m": wl.lambda_p,
        "lambda_signal_m": wl.lambda_s,
        "lambda_idler_m": wl.lambda_i,
        "kappa_per_w": config.gain_law.kappa,
        "p_total_w": config.p_total,
        "hwp_offset_deg": config.hwp_offset_deg,
        "knife_signal_position_m": config.knife_signal.position_mm * 1e-3,
        "knife_signal_center_m": config.knife_signal.center_mm * 1e-3,
        "knife_signal_waist_m": config.knife_signal.waist_mm * 1e-3,
        "knife_idler_position_m": config.knife_idler.position_mm * 1e-3,
        "knife_idler_center_m": config.knife_idler.center_mm * 1e-3,
        "knife_idler_waist_m": config.knife_idler.waist_mm * 1e-3,
        "fixed_loss_signal": config.fixed_loss_signal,
        "fixed_loss_idler": config.fixed_loss_idler,
        "pbs_extinction": config.pbs_extinction,
        "background_rate_hz": config.background_rate,
        "eta_detect": config.eta_detect,
        "eta_probe": config.eta_probe,
        "mode_flux_hz": config.mode_flux,
        "dwell_s": config.dwell,
    }


def config_to_text(config: BenchConfig) -> str:
    """Canonical text form of a config; also the hashing preimage."""
    mapping = _config_to_mapping(config)
    lines = [f"# {CONFIG_SCHEMA}", "# all lengths/powers/times/rates in SI units; angles in degrees"]
    for key, comment in _CONFIG_FIELDS:
        lines.append(f"{key} = {mapping[key]!r}  # {comment}")
    return "\n".join(lines) + "\n"


def config_from_mapping(values: dict[str, float]) -> BenchConfig:
    required = {key for key, _ in _CONFIG_FIELDS} - {"lambda_idler_m"}
    missing = sorted(required - values.keys())
    if missing:
        raise ConfigError(f"config is missing keys: {', '.join(missing)}")
    unknown = sorted(values.keys() - {key for key, _ in _CONFIG_FIELDS})
    if unknown:
        raise ConfigError(f"config has unknown keys: {', '.join(unknown)}")

    lambda_p = values["lambda_pump_m"]
    lambda_s = values["lambda_signal_m"]
    lambda_i = values.get("lambda_idler_m", idler_wavelength(lambda_p, lambda_s))
    try:
        return BenchConfig(
            wavelengths=WavelengthTriple(lambda_p, lambda_s, lambda_i),
            gain_law=GainLaw(values["kappa_per_w"]),
            p_total=values["p_total_w"],
            hwp_offset_deg=values["hwp_offset_deg"],
            knife_signal=KnifeEdge(
                values["knife_signal_position_m"] * 1e3,
                values["knife_signal_center_m"] * 1e3,
                values["knife_signal_waist_m"] * 1e3,
            ),
            knife_idler=KnifeEdge(
                values["knife_idler_position_m"] * 1e3,
                values["knife_idler_center_m"] * 1e3,
                values["knife_idler_waist_m"] * 1e3,
            ),
            fixed_loss_signal=values["fixed_loss_signal"],
            fixed_loss_idler=values["fixed_loss_idler"],
            pbs_extinction=values["pbs_extinction"],
            background_rate=values["background_rate_hz"],
            eta_detect=values["eta_detect"],
            eta_probe=values["eta_probe"],
            mode_flux=values["mode_flux_hz"],
            dwell=values["dwell_s"],
        )
    except PhysicsError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> BenchConfig:
    lines = text.splitlines()
    header = [ln for ln in lines[:5] if ln.strip().startswith("#")]
    if not any(CONFIG_SCHEMA in ln for ln in header):
        raise ConfigError(f"config header does not declare schema {CONFIG_SCHEMA!r}")
    values: dict[str, float] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            values[key] = float(value.strip())
        except ValueError:
            raise ConfigError(f"line {number}: value for {key!r} is not a number") from None
    return config_from_mapping(values)


def load_config(path) -> BenchConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def save_config(config: BenchConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(config))


def config_hash(config: BenchConfig) -> str:
    """Stable hash of the canonical config text, for provenance trails."""
    digest = hashlib.sha256(config_to_text(config).encode("utf-8")).hexdigest()
    return f"sha256:{digest[:16]}"

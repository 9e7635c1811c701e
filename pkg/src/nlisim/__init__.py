"""Folded nonlinear interferometer simulator.

Simulates sensing with undetected photons: a pump passes one crystal twice,
the idler from the first pass probes a sample, and interference of the two
signal contributions carries the information to the detector. The package
evaluates the closed-form interference model, emulates the bench (wave-plate
power split, knife-edge loss, piezo scans, Poisson counting), fits fringes,
and maps visibility/amplitude/power-ratio over balance and loss.
"""

__version__ = "0.1.0"

from .analysis import FringeFit, clamp_visibility, fit_fringe, snr_from_r2
from .bench import (
    BenchConfig,
    KnifeEdge,
    PiezoAxis,
    assemble_state,
    config_hash,
    default_config,
    detect,
    hwp_split,
    knife_transmission,
    load_config,
    mean_detected_photons,
    piezo_phase,
    power_to_rate,
    rate_to_power,
    save_config,
)
from .errors import (
    ConfigError,
    FitError,
    InfiniteRatioError,
    NliError,
    NoOptimumError,
    PhysicsError,
    UndefinedVisibilityError,
)
from .model import (
    GainLaw,
    InterferometerState,
    PowerBalance,
    RateModel,
    WavelengthTriple,
    detection_probe_ratio,
    fringe_amplitude,
    gain_from_power,
    idler_wavelength,
    optimal_balance,
    phase_averaged_photon_number,
    photon_number,
    split_power,
    visibility,
)
from .scan import ScanPlan, ScanRecord, run_scan, scan_range_for_periods
from .sweep import (
    GridSpec,
    ParamMap,
    compare_map_to_golden,
    compute_map,
    experiment_map,
    rdp_profile,
    theory_map,
)

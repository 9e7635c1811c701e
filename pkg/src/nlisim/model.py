"""Closed-form interference model for a folded nonlinear interferometer.

A pump passes a nonlinear crystal twice. The first pass (gain ``g_a``) emits
a signal/idler pair; both fields are reflected back through the crystal where
a second pass (gain ``g_b``) emits again into the same modes. Interference of
the two signal contributions is visible on a signal detector even though the
idler, which may have probed a sample, is never detected.

Everything in this module is a pure function of its inputs. Mean photon
numbers are per-mode and dimensionless; conversion to count rates is a bench
concern (see :mod:`nlisim.bench`).

Conventions:
    - The interference term enters with a minus cosine, so the fringe peak
      sits at ``phi = pi``.
    - ``phi`` is the accumulated phase of the second pump relative to the
      returning signal and idler: ``phi = phi_pump - phi_idler - phi_signal``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfiniteRatioError, NoOptimumError, PhysicsError, UndefinedVisibilityError

__all__ = [
    "InterferometerState",
    "GainLaw",
    "PowerBalance",
    "WavelengthTriple",
    "RateModel",
    "gain_from_power",
    "split_power",
    "photon_number",
    "phase_averaged_photon_number",
    "fringe_amplitude",
    "visibility",
    "optimal_balance",
    "detection_probe_ratio",
    "idler_wavelength",
]

# Relative tolerance for the pump/signal/idler energy-conservation check.
ENERGY_CONSERVATION_RTOL = 1e-3


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class InterferometerState:
    """Physics tuple consumed by the photon-number formulas.

    t_s, t_i: internal transmissivities of the first-pass signal and idler
        paths back to the crystal, in [0, 1].
    g_a, g_b: dimensionless parametric gains of the first and second pass.
    phi: total accumulated phase (radians), pump minus idler minus signal.
    """

    t_s: float
    t_i: float
    g_a: float
    g_b: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.t_s <= 1.0:
            raise PhysicsError(f"t_s must be in [0, 1], got {self.t_s}")
        if not 0.0 <= self.t_i <= 1.0:
            raise PhysicsError(f"t_i must be in [0, 1], got {self.t_i}")
        if self.g_a < 0.0 or self.g_b < 0.0:
            raise PhysicsError(f"gains must be >= 0, got g_a={self.g_a}, g_b={self.g_b}")
        if not math.isfinite(self.phi):
            raise PhysicsError(f"phi must be finite, got {self.phi}")

    def swapped(self) -> "InterferometerState":
        """State with signal and idler roles exchanged: (t_s,g_a) <-> (t_i,g_b)."""
        return InterferometerState(self.t_i, self.t_s, self.g_b, self.g_a, self.phi)


@dataclass(frozen=True, slots=True)
class GainLaw:
    """Pump-power to parametric-gain conversion, g = sinh^2(sqrt(kappa * P)).

    kappa: gain coefficient per watt of pump power (> 0). The proportionality
        constant is a calibration parameter of a given crystal and focusing
        geometry.
    """

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise PhysicsError(f"kappa must be > 0, got {self.kappa}")


@dataclass(frozen=True, slots=True)
class PowerBalance:
    """Division of the total pump power between the two crystal passes.

    r_p: fraction of total power sent to the first pass, in [0, 1].
    p_total: total pump power in watts.
    """

    r_p: float
    p_total: float

    def __post_init__(self):
        if not 0.0 <= self.r_p <= 1.0:
            raise PhysicsError(f"r_p must be in [0, 1], got {self.r_p}")
        if self.p_total < 0.0:
            raise PhysicsError(f"p_total must be >= 0, got {self.p_total}")


@dataclass(frozen=True, slots=True)
class WavelengthTriple:
    """Pump, signal and idler wavelengths in meters.

    Down-conversion requires 1/lambda_p = 1/lambda_s + 1/lambda_i; the check
    allows a relative slack of ``ENERGY_CONSERVATION_RTOL`` so rounded
    nominal values (e.g. data-sheet wavelengths) pass.
    """

    lambda_p: float
    lambda_s: float
    lambda_i: float

    def __post_init__(self):
        if min(self.lambda_p, self.lambda_s, self.lambda_i) <= 0.0:
            raise PhysicsError("wavelengths must be > 0")
        lhs = 1.0 / self.lambda_p
        rhs = 1.0 / self.lambda_s + 1.0 / self.lambda_i
        if abs(lhs - rhs) > ENERGY_CONSERVATION_RTOL * lhs:
            raise PhysicsError(
                "wavelengths violate energy conservation: "
                f"1/{self.lambda_p} != 1/{self.lambda_s} + 1/{self.lambda_i}"
            )

    def for_axis(self, which: str) -> float:
        """Wavelength of one of the three fields ('pump' | 'signal' | 'idler')."""
        try:
            return {"pump": self.lambda_p, "signal": self.lambda_s, "idler": self.lambda_i}[which]
        except KeyError:
            raise PhysicsError(f"unknown axis {which!r}") from None


@dataclass(frozen=True, slots=True)
class RateModel:
    """Conversion between dimensionless per-mode photon numbers and rates.

    mode_flux: photons per second per unit gain; folds the source bandwidth
        and mode count into one calibration constant.
    eta_detect: end-to-end efficiency of the detection path, in [0, 1].
    eta_probe: optics transmission from the crystal to the sample, in [0, 1].
    """

    mode_flux: float
    eta_detect: float = 1.0
    eta_probe: float = 1.0

    def __post_init__(self):
        if self.mode_flux < 0.0:
            raise PhysicsError(f"mode_flux must be >= 0, got {self.mode_flux}")
        for name in ("eta_detect", "eta_probe"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise PhysicsError(f"{name} must be in [0, 1], got {value}")


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def gain_from_power(p: float, law: GainLaw) -> float:
    """Parametric gain sinh^2(sqrt(kappa * p)) for pump power ``p`` in watts.

    Monotone increasing in ``p``; zero at zero power; ~kappa*p in the
    low-gain limit.
    """
    if p < 0.0:
        raise PhysicsError(f"pump power must be >= 0, got {p}")
    return math.sinh(math.sqrt(law.kappa * p)) ** 2


def split_power(balance: PowerBalance) -> tuple[float, float]:
    """Split the total power into first- and second-pass powers (watts).

    The second pass receives all remaining power; ``p_a + p_b == p_total``
    holds exactly, which is why the remainder is computed by subtraction
    rather than as (1 - r_p) * p_total.
    """
    p_a = balance.r_p * balance.p_total
    return p_a, balance.p_total - p_a


def _interference_product(state: InterferometerState) -> float:
    # Grouped into factor pairs that swap among themselves so that the
    # (t_s,g_a) <-> (t_i,g_b) exchange is bit-exact in floating point.
    return (
        (state.t_s * state.t_i)
        * (state.g_a * state.g_b)
        * ((1.0 + state.g_a) * (1.0 + state.g_b))
    )


def _offset_terms(state: InterferometerState) -> tuple[float, float]:
    # x + y is the phase-averaged photon number; x*y equals the squared
    # half-amplitude of the interference term (AM-GM keeps N >= 0).
    x = state.t_s * state.g_a * (1.0 + state.g_b)
    y = state.t_i * state.g_b * (1.0 + state.g_a)
    return x, y


def photon_number(state: InterferometerState) -> float:
    """Mean signal photon number at the detector as a function of phase.

    Evaluates
        N = t_s g_a + t_i g_b + (t_s + t_i) g_a g_b
            - 2 sqrt(t_s t_i g_a g_b (1+g_a)(1+g_b)) cos(phi).

    Non-negative for every phase, with the fringe peak at phi = pi.
    """
    x, y = _offset_terms(state)
    return x + y - 2.0 * math.sqrt(_interference_product(state)) * math.cos(state.phi)


def phase_averaged_photon_number(state: InterferometerState) -> float:
    """Mean photon number averaged over a uniform phase; the cosine drops out."""
    x, y = _offset_terms(state)
    return x + y


def fringe_amplitude(state: InterferometerState) -> float:
    """Peak-to-trough photon-number difference of the fringe.

    Equals N(pi) - N(0) = 4 sqrt(t_s t_i g_a g_b (1+g_a)(1+g_b)); the phase
    field of ``state`` is ignored.
    """
    return 4.0 * math.sqrt(_interference_product(state))


def visibility(state: InterferometerState) -> float:
    """Fringe contrast (N_max - N_min) / (N_max + N_min), in [0, 1].

    Exactly 1 when t_s g_a (1+g_b) == t_i g_b (1+g_a). The phase field of
    ``state`` is ignored. Raises :class:`UndefinedVisibilityError` when both
    gains are zero (0/0 would otherwise leak silent zeros into maps).
    """
    x, y = _offset_terms(state)
    denom = x + y
    if denom == 0.0:
        raise UndefinedVisibilityError(
            "visibility undefined: no photons in either arm (all gains zero)"
        )
    v = 2.0 * math.sqrt(_interference_product(state)) / denom
    # sqrt rounding can overshoot 1 by an ulp at the balance point
    return min(v, 1.0)


def optimal_balance(t_s: float, t_i: float, p_total: float, law: GainLaw) -> float:
    """Power fraction r_p in (0, 1) that maximizes visibility.

    Solves t_s g_a(r)(1+g_b(r)) = t_i g_b(r)(1+g_a(r)) by bisection; the
    residual is continuous, strictly increasing in r_p, negative at 0 and
    positive at 1 whenever both transmissivities are nonzero. At the
    returned point the visibility equals 1 up to solver tolerance.

    Lossier signal paths push the optimum above 0.5 (more power to the
    first pass); the gain in visibility costs fringe amplitude.
    """
    if t_s <= 0.0 or t_i <= 0.0:
        raise NoOptimumError(
            f"no interior optimum: both transmissivities must be > 0, got t_s={t_s}, t_i={t_i}"
        )
    if p_total <= 0.0:
        raise PhysicsError(f"p_total must be > 0, got {p_total}")

    def residual(r: float) -> float:
        g_a = gain_from_power(r * p_total, law)
        g_b = gain_from_power(p_total - r * p_total, law)
        return t_s * g_a * (1.0 + g_b) - t_i * g_b * (1.0 + g_a)

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        if f_mid == 0.0:
            return mid
        if f_mid < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


def detection_probe_ratio(
    state: InterferometerState,
    wl: WavelengthTriple,
    rates: RateModel,
    at_fringe_peak: bool = False,
) -> float:
    """Optical power at the detector divided by optical power on the sample.

    The detected photon number is the phase average of :func:`photon_number`
    (or the fringe-peak value with ``at_fringe_peak=True``) times
    ``eta_detect``; the sample sees ``eta_probe * g_a`` photons, all idlers
    from the first pass. The shared mode-flux constant cancels, so the ratio
    is (N_d * lambda_i) / (N_s * lambda_s) with a pure wavelength weighting.
    """
    if state.g_a * rates.eta_probe == 0.0:
        raise InfiniteRatioError(
            "detection-to-probe ratio diverges: no photons reach the sample "
            f"(g_a={state.g_a}, eta_probe={rates.eta_probe})"
        )
    if at_fringe_peak:
        n_detector = photon_number(
            InterferometerState(state.t_s, state.t_i, state.g_a, state.g_b, math.pi)
        )
    else:
        n_detector = phase_averaged_photon_number(state)
    n_sample = rates.eta_probe * state.g_a
    return (rates.eta_detect * n_detector * wl.lambda_i) / (n_sample * wl.lambda_s)


def idler_wavelength(lambda_p: float, lambda_s: float) -> float:
    """Idler wavelength from energy conservation, 1/l_i = 1/l_p - 1/l_s."""
    if lambda_p <= 0.0:
        raise PhysicsError(f"pump wavelength must be > 0, got {lambda_p}")
    if lambda_s <= lambda_p:
        raise PhysicsError(
            f"signal wavelength must exceed the pump wavelength, got {lambda_s} <= {lambda_p}"
        )
    return 1.0 / (1.0 / lambda_p - 1.0 / lambda_s)

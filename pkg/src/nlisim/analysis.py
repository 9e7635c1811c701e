"""Visibility and amplitude extraction from fringe scans.

The fitted model is y(x) = O + C cos(2 pi x / L) + S sin(2 pi x / L). For a
fixed period L this is linear least squares with a closed-form solution; the
optional period refinement is a one-dimensional golden-section search on the
residual sum of squares, so the whole fit is deterministic and needs no
starting guess.

Low-count traces systematically overestimate contrast (the fitted amplitude
is non-negative by construction), so fits carry a goodness-of-fit SNR and a
clamped visibility that is exactly zero below SNR = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import FitError, PhysicsError, UndefinedVisibilityError
from .scan import ScanRecord

__all__ = [
    "FringeFit",
    "fit_fringe",
    "snr_from_r2",
    "clamp_visibility",
    "write_fit_json",
]

FIT_SCHEMA = "fringe-fit/1"

_GOLDEN_RATIO_CONJ = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, slots=True)
class FringeFit:
    """Sinusoid-fit result for one fringe trace.

    offset: mean level O in counts per bin.
    amplitude_fit: half peak-to-trough amplitude in counts, >= 0.
    phase0: phase at x = 0 for y = O + A cos(2 pi x / period + phase0).
    period: period used or refined, meters.
    r_squared: coefficient of determination in [0, 1].
    snr: r_squared / (1 - r_squared); inf for a perfect fit.
    visibility_raw: amplitude_fit / offset.
    visibility_clamped: visibility_raw, or exactly 0 when snr < 1.
    amplitude_pp: peak-to-trough amplitude, 2 * amplitude_fit.
    """

    offset: float
    amplitude_fit: float
    phase0: float
    period: float
    r_squared: float
    snr: float
    visibility_raw: float
    visibility_clamped: float

    @property
    def amplitude_pp(self) -> float:
        return 2.0 * self.amplitude_fit

    def to_dict(self) -> dict:
        payload = {"schema": FIT_SCHEMA}
        payload.update(asdict(self))
        payload["amplitude_pp"] = self.amplitude_pp
        return payload


def snr_from_r2(r_squared: float) -> float:
    """Goodness-of-fit signal-to-noise ratio r^2 / (1 - r^2).

    Monotone increasing on [0, 1]; r^2 = 1 maps to the +inf sentinel.
    """
    if not 0.0 <= r_squared <= 1.0:
        raise PhysicsError(f"r_squared must be in [0, 1], got {r_squared}")
    if r_squared == 1.0:
        return math.inf
    return r_squared / (1.0 - r_squared)


def clamp_visibility(fit: FringeFit) -> float:
    """Visibility with the low-SNR guard: 0 when snr < 1, else the raw value.

    The inequality is strict, so snr exactly 1 passes through.
    """
    return 0.0 if fit.snr < 1.0 else fit.visibility_raw


def _coerce_trace(trace, counts=None) -> tuple[np.ndarray, np.ndarray]:
    if counts is not None:
        return np.asarray(trace, dtype=float), np.asarray(counts, dtype=float)
    if isinstance(trace, ScanRecord):
        return np.asarray(trace.positions_m, dtype=float), np.asarray(trace.counts, dtype=float)
    arr = np.asarray(trace, dtype=float)
    if arr.ndim == 2 and arr.shape[1] >= 2:
        return arr[:, 0], arr[:, 1]
    raise FitError("trace must be a ScanRecord, a (positions, counts) pair, or a 2-column array")


def _linear_fit(x: np.ndarray, y: np.ndarray, period: float, weights: np.ndarray | None):
    """Least-squares (O, C, S) for one period; returns params and RSS."""
    arg = 2.0 * math.pi * x / period
    design = np.column_stack([np.ones_like(x), np.cos(arg), np.sin(arg)])
    if weights is None:
        params, *_ = np.linalg.lstsq(design, y, rcond=None)
    else:
        w = np.sqrt(weights)
        params, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    residuals = y - design @ params
    return params, float(residuals @ residuals)


def fit_fringe(
    trace,
    period_hint: float,
    fit_period: bool = False,
    counts=None,
    weights: str | None = None,
) -> FringeFit:
    """Fit a sinusoid to a fringe trace and derive visibility and SNR.

    trace: a :class:`~nlisim.scan.ScanRecord`, a 2-column array, or a
        positions array together with ``counts``.
    period_hint: expected fringe period in meters; with ``fit_period`` the
        period is refined within +-10 % of the hint by golden-section search
        on the residual sum of squares (the refined fit is never worse than
        the fixed-period one).
    weights: None for plain least squares, or 'poisson' to weight each bin
        by 1/max(counts, 1). R^2 is always computed unweighted.
    """
    x, y = _coerce_trace(trace, counts)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError(f"positions and counts must be 1-d and equal length, got {x.shape}, {y.shape}")
    if len(x) < 6:
        raise FitError(f"need at least 6 points to fit a fringe, got {len(x)}")
    if not period_hint > 0.0:
        raise FitError(f"period hint must be > 0, got {period_hint}")
    span = float(np.max(x) - np.min(x))
    if span < period_hint * (1.0 - 1e-9):
        raise FitError(
            f"trace spans {span:.3g} m which is less than one period hint ({period_hint:.3g} m)"
        )
    if weights is None:
        w = None
    elif weights == "poisson":
        w = 1.0 / np.maximum(y, 1.0)
    else:
        raise FitError(f"unknown weighting scheme {weights!r}")

    params, rss = _linear_fit(x, y, period_hint, w)
    period = period_hint

    if fit_period:
        lo, hi = 0.9 * period_hint, 1.1 * period_hint

        def rss_at(lam: float) -> float:
            return _linear_fit(x, y, lam, w)[1]

        a, b = lo, hi
        c = b - _GOLDEN_RATIO_CONJ * (b - a)
        d = a + _GOLDEN_RATIO_CONJ * (b - a)
        f_c, f_d = rss_at(c), rss_at(d)
        for _ in range(200):
            if b - a <= 1e-10 * period_hint:
                break
            if f_c < f_d:
                b, d, f_d = d, c, f_c
                c = b - _GOLDEN_RATIO_CONJ * (b - a)
                f_c = rss_at(c)
            else:
                a, c, f_c = c, d, f_d
                d = a + _GOLDEN_RATIO_CONJ * (b - a)
                f_d = rss_at(d)
        refined = 0.5 * (a + b)
        refined_params, refined_rss = _linear_fit(x, y, refined, w)
        # keep whichever is better so refinement can never lose to the hint
        if refined_rss <= rss:
            params, rss, period = refined_params, refined_rss, refined

    offset, c_coef, s_coef = (float(v) for v in params)
    amplitude = math.hypot(c_coef, s_coef)
    phase0 = math.atan2(-s_coef, c_coef)

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        # exactly constant counts: nothing to explain, zero-SNR fit
        r_squared = 0.0
    else:
        r_squared = max(0.0, min(1.0, 1.0 - rss / ss_tot))
    snr = snr_from_r2(r_squared)

    if offset <= 0.0:
        raise UndefinedVisibilityError(
            f"visibility undefined: fitted offset is {offset} counts"
        )
    visibility_raw = amplitude / offset

    return FringeFit(
        offset=offset,
        amplitude_fit=amplitude,
        phase0=phase0,
        period=period,
        r_squared=r_squared,
        snr=snr,
        visibility_raw=visibility_raw,
        visibility_clamped=0.0 if snr < 1.0 else visibility_raw,
    )


def write_fit_json(fit: FringeFit, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(fit.to_dict(), fh, indent=1, allow_nan=True)
        fh.write("\n")

"""
End-to-end sensitivity measurement against any sweep provider.

Procedure: set the bias field, take a fine three-tone lock-in sweep around
the sensing resonance and fit the zero-crossing slope; then record lock-in
output noise with the carrier parked on resonance (for the spectrum plot),
off resonance (magnetically insensitive, for the noise figure) and with the
laser off (electronic floor).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ProviderError
from .fitting import SlopeFit, fit_zero_crossing, slope_to_field_response
from .physics import BiasField, Sweep
from .providers import SweepRequest
from .sensitivity import (NoiseSpectrum, SensitivityReport, amplitude_spectral_density,
                          averaged_spectral_density, band_average)

logger = logging.getLogger(__name__)

__all__ = ["SensitivityRun", "measure_sensitivity"]


@dataclass
class SensitivityRun:
    report: SensitivityReport
    slope_fit: SlopeFit
    lockin_sweep: Sweep
    sensitive_spectrum: NoiseSpectrum
    insensitive_spectrum: NoiseSpectrum
    floor_spectrum: NoiseSpectrum | None


def measure_sensitivity(provider, field: BiasField, center_hint: float, linewidth: float,
                        mode: str, fs: float = 53.57e3, duration: float = 1.0,
                        band: tuple[float, float] = (1.0, 77.92), n_records: int = 1,
                        sweep_half_span: float = 1e6, sweep_points: int = 401,
                        off_resonance_offset: float = 8e6, enbw: float = 77.92,
                        band_method: str = "rms") -> SensitivityRun:
    """Measure slope, noise and sensitivity for one operating point.

    Parameters
    ----------
    provider
        Object with ``set_field``, ``acquire`` and ``acquire_trace``.
    center_hint : float
        Expected zero crossing in Hz.
    linewidth : float
        Expected resonance FWHM; sets the linear-fit window to +-linewidth/6.
    mode : {"separated", "overlapped"}
        Overlapped mode applies the projection penalty to the response.
    n_records : int
        Insensitive-noise records averaged into the noise figure.
    """
    overlapped = mode == "overlapped"
    provider.set_field(field)
    req = SweepRequest(center_hint - sweep_half_span, center_hint + sweep_half_span,
                       sweep_points, mode="lockin", three_tone=True)
    sweep = provider.acquire(req)
    slope_fit = fit_zero_crossing(sweep, center_hint, linewidth / 6.0)
    slope = abs(slope_fit.slope)
    response = slope_to_field_response(slope, overlapped=overlapped)

    n = int(round(fs * duration))
    carrier = slope_fit.zero_crossing
    sensitive = amplitude_spectral_density(provider.acquire_trace(fs, n, carrier), fs, enbw)
    off = carrier + off_resonance_offset
    traces = [provider.acquire_trace(fs, n, off, record=k) for k in range(n_records)]
    insensitive = averaged_spectral_density(traces, fs, enbw)
    noise = band_average(insensitive, *band, method=band_method)

    try:
        floor_spec = amplitude_spectral_density(provider.acquire_trace(fs, n, off, laser=False),
                                                fs, enbw)
        floor = band_average(floor_spec, *band, method=band_method)
    except ProviderError as exc:
        if exc.kind != "range":
            raise
        logger.warning("electronic floor not measurable on this provider: %s", exc.message)
        floor_spec, floor = None, float("nan")

    report = SensitivityReport.build(slope, response, noise, floor, band, mode,
                                     slope_fit.zero_crossing)
    logger.info("%s: slope %.4g V/Hz, noise %.4g V/rtHz, sensitivity %.4g T/rtHz",
                mode, slope, noise, report.field_sensitivity)
    return SensitivityRun(report, slope_fit, sweep, sensitive, insensitive, floor_spec)

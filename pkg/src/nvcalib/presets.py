"""
Reference configurations for the separated and overlapped operating points.

* ``lab_axes`` - crystal orientation for which the overlap field is
  (2.12, -0.016, -0.070) mT rather than the ideal (2.12, 0, 0) mT.
* ``calibration_simulator`` - sweep source for the swarm search
  (516 kHz linewidth, 2.22 % total contrast when overlapped).
* ``sensitivity_simulator`` - lock-in and noise sources for the separated
  and overlapped sensing modes, with the lock-in gain set so the noiseless
  zero-crossing slope equals the target value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import fit_zero_crossing
from .physics import (BiasField, NoiseModel, NVAxes, SpectrumModel,
                      lockin_spectrum, resonance_centers)
from .providers import SimulatorProvider

__all__ = [
    "OVERLAPPED_FIELD",
    "SEPARATED_FIELD",
    "lab_axes",
    "calibration_simulator",
    "SensingPreset",
    "SENSING_PRESETS",
    "sensitivity_simulator",
    "sensing_center",
    "slope_window",
    "calibrated_gain",
]

OVERLAPPED_FIELD = BiasField.from_mt(2.12, -0.016, -0.070)
SEPARATED_FIELD = BiasField.from_mt(2.12, -0.586, 1.01)

# lock-in output sample rate and sensing band
TRACE_FS = 53.57e3
BAND = (1.0, 77.92)


def lab_axes() -> NVAxes:
    return NVAxes.aligned_to(OVERLAPPED_FIELD.b)


def calibration_simulator(seed: int = 0, noise_density: float = 6.58e-6) -> SimulatorProvider:
    model = SpectrumModel(f0=1.0, contrast=0.0222 / 4, linewidth=516e3)
    return SimulatorProvider(model=model, axes=lab_axes(), noise=NoiseModel(noise_density),
                             seed=seed)


@dataclass(frozen=True)
class SensingPreset:
    mode: str
    field: BiasField
    contrast: float
    linewidth: float
    slope: float
    noise_total: float
    electronic_floor: float
    target_hz: float
    mains: tuple[tuple[float, float], ...] = ((50.0, 30e-6), (100.0, 10e-6), (150.0, 15e-6))

    @property
    def overlapped(self) -> bool:
        return self.mode == "overlapped"

    def noise_model(self) -> NoiseModel:
        # optical part chosen so optical and electronic noise add to the total
        white = math.sqrt(self.noise_total ** 2 - self.electronic_floor ** 2)
        return NoiseModel(white, self.mains, self.electronic_floor)

    def model(self) -> SpectrumModel:
        return SpectrumModel(f0=1.0, contrast=self.contrast, linewidth=self.linewidth)


SENSING_PRESETS = {
    "separated": SensingPreset("separated", SEPARATED_FIELD, 0.0051, 574e3, 0.148e-6,
                               5.50e-6, 254e-9, 2897e6),
    # 2.04 % overlapped contrast shared by four orientations
    "overlapped": SensingPreset("overlapped", OVERLAPPED_FIELD, 0.0204 / 4, 550e3, 0.476e-6,
                                6.58e-6, 265e-9, 2904e6),
}


def sensing_center(model: SpectrumModel, b: BiasField, axes: NVAxes, target_hz: float) -> float:
    """Resonance center (Hz) closest to ``target_hz``."""
    centers = resonance_centers(b, model.constants, axes)
    if np.ptp(centers) < model.linewidth:
        return float(np.mean(centers))
    return float(centers[np.argmin(np.abs(centers - target_hz))])


def slope_window(linewidth: float) -> float:
    """Half-width of the linear zero-crossing fit window."""
    return linewidth / 6.0


def calibrated_gain(preset: SensingPreset, axes: NVAxes, n_points: int = 401,
                    half_span: float = 1e6) -> float:
    """Lock-in gain making the noiseless fitted slope equal ``preset.slope``."""
    model = preset.model()
    center = sensing_center(model, preset.field, axes, preset.target_hz)
    freqs = np.linspace(center - half_span, center + half_span, n_points)
    sweep = lockin_spectrum(model, preset.field, freqs, three_tone=True, axes=axes)
    fit = fit_zero_crossing(sweep, center, slope_window(preset.linewidth))
    return preset.slope / fit.slope


def sensitivity_simulator(mode: str, seed: int = 0) -> SimulatorProvider:
    try:
        preset = SENSING_PRESETS[mode]
    except KeyError:
        raise ValueError(f"unknown sensing mode {mode!r}") from None
    axes = lab_axes()
    return SimulatorProvider(model=preset.model(), axes=axes, noise=preset.noise_model(),
                             seed=seed, lockin_gain=calibrated_gain(preset, axes))

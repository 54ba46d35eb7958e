"""Calibration and sensitivity analysis for ensemble NV-diamond magnetometers."""

__version__ = "0.1.0"

from .errors import (ConfigError, EmptyBand, FitDegenerate, FitError, NoCrossing,  # noqa: E402
                     NVCalibError, ProviderError)
from .physics import (BiasField, Constants, NoiseModel, NVAxes, SpectrumModel,  # noqa: E402
                      Sweep, cw_spectrum, cw_spectrum_overlapped, lockin_spectrum,
                      project_field, resonance_centers, synth_timetrace)
from .fitting import (SlopeFit, TripletFit, central_loss, fit_triplet,  # noqa: E402
                      fit_zero_crossing, slope_to_field_response)
from .providers import RemoteProvider, SimulatorProvider, SweepRequest  # noqa: E402
from .pso import CalibrationResult, PsoConfig, calibrate  # noqa: E402
from .sensitivity import (NoiseSpectrum, SensitivityReport, amplitude_spectral_density,  # noqa: E402
                          band_average, enbw_fourth_order, field_sensitivity,
                          shot_noise_sensitivity)

__all__ = [
    "ConfigError", "EmptyBand", "FitDegenerate", "FitError", "NoCrossing", "NVCalibError",
    "ProviderError", "BiasField", "Constants", "NoiseModel", "NVAxes", "SpectrumModel",
    "Sweep", "cw_spectrum", "cw_spectrum_overlapped", "lockin_spectrum", "project_field",
    "resonance_centers", "synth_timetrace", "SlopeFit", "TripletFit", "central_loss",
    "fit_triplet", "fit_zero_crossing", "slope_to_field_response", "RemoteProvider",
    "SimulatorProvider", "SweepRequest", "CalibrationResult", "PsoConfig", "calibrate",
    "NoiseSpectrum", "SensitivityReport", "amplitude_spectral_density", "band_average",
    "enbw_fourth_order", "field_sensitivity", "shot_noise_sensitivity",
]

"""
Sensitivity figures from lock-in slopes and output-noise records.

The chain is: zero-crossing slope (V/Hz) -> field response (V/T) via
``fitting.slope_to_field_response``; time trace -> one-sided amplitude
spectral density -> band-averaged voltage noise (V/sqrt(Hz)); their quotient
is the field sensitivity in T/sqrt(Hz).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

from .errors import EmptyBand
from .physics import Constants

logger = logging.getLogger(__name__)

__all__ = [
    "NoiseSpectrum",
    "SensitivityReport",
    "shot_noise_sensitivity",
    "amplitude_spectral_density",
    "averaged_spectral_density",
    "band_average",
    "field_sensitivity",
    "enbw_fourth_order",
    "ENBW_COEFF",
]

# ENBW of the 4th-order output filter times tau; 77.92 Hz at 1 ms
ENBW_COEFF = 77.92e-3


@dataclass
class NoiseSpectrum:
    freqs: np.ndarray
    asd: np.ndarray
    enbw: float
    record_length: float
    fs: float
    n_records: int = 1

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.asd = np.asarray(self.asd, dtype=float)
        if self.freqs.shape != self.asd.shape or self.freqs.ndim != 1:
            raise ValueError("freqs and asd must be 1-D arrays of equal length")
        if np.any(self.asd < 0) or not np.all(np.isfinite(self.asd)):
            raise ValueError("ASD must be finite and non-negative")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequencies must be ascending")
        if len(self.freqs) and self.freqs[-1] > self.fs / 2 * (1 + 1e-12):
            raise ValueError("frequencies must not exceed fs/2")

    @property
    def bin_width(self) -> float:
        return 1.0 / self.record_length

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["frequency_hz", "asd_v_per_rthz"])
        for f, a in zip(self.freqs, self.asd):
            wr.writerow([repr(float(f)), repr(float(a))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, fs: float, enbw: float = 0.0) -> "NoiseSpectrum":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["frequency_hz", "asd_v_per_rthz"]:
            raise ValueError("missing frequency_hz,asd_v_per_rthz header")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        df = data[1, 0] - data[0, 0] if len(data) > 1 else 1.0
        return cls(data[:, 0], data[:, 1], enbw, 1.0 / df, fs)


@dataclass
class SensitivityReport:
    slope_v_per_hz: float
    response_v_per_t: float
    voltage_noise_density: float
    field_sensitivity: float
    electronic_floor_field: float
    band: tuple[float, float]
    mode: str
    electronic_floor_density: float = 0.0
    zero_crossing_hz: float | None = None

    def __post_init__(self):
        if self.mode not in ("separated", "overlapped"):
            raise ValueError(f"mode must be separated or overlapped, got {self.mode!r}")
        self.band = tuple(float(b) for b in self.band)

    @classmethod
    def build(cls, slope_v_per_hz: float, response_v_per_t: float, noise: float,
              floor: float, band, mode: str, zero_crossing_hz=None) -> "SensitivityReport":
        return cls(slope_v_per_hz, response_v_per_t, noise,
                   field_sensitivity(noise, response_v_per_t),
                   field_sensitivity(floor, response_v_per_t), band, mode, floor,
                   zero_crossing_hz)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SensitivityReport":
        data = json.loads(text)
        data.pop("metadata", None)
        return cls(**data)


def shot_noise_sensitivity(linewidth: float, contrast: float, photon_rate: float,
                           c: Constants | None = None) -> float:
    """Shot-noise-limited sensitivity P_F * h/(g_e mu_B) * linewidth/(C sqrt(R)).

    Returns T/sqrt(Hz).  ``h/(g_e mu_B)`` is taken as ``1/gamma_e``.
    """
    c = c or Constants()
    for name, v in (("linewidth", linewidth), ("contrast", contrast), ("photon_rate", photon_rate)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return c.P_F / c.gamma_e * linewidth / (contrast * math.sqrt(photon_rate))


def _check_trace(trace) -> np.ndarray:
    x = np.asarray(trace, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise ValueError("trace must be 1-D with at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("trace contains non-finite samples")
    return x


def amplitude_spectral_density(trace, fs: float, enbw: float = 0.0) -> NoiseSpectrum:
    """One-sided ASD from a single rectangular-window periodogram.

    The record mean is removed first.  White noise of density ``d`` gives an
    ASD of ``d`` in expectation, and ``sum(asd**2) * df`` equals the trace
    variance.
    """
    if not fs > 0:
        raise ValueError("fs must be positive")
    x = _check_trace(trace)
    f, pxx = signal.periodogram(x, fs=fs, window="boxcar", detrend="constant",
                                scaling="density", return_onesided=True)
    return NoiseSpectrum(f, np.sqrt(pxx), enbw, len(x) / fs, fs)


def averaged_spectral_density(traces, fs: float, enbw: float = 0.0) -> NoiseSpectrum:
    """RMS average of single-record ASDs over equal-length records."""
    specs = [amplitude_spectral_density(t, fs, enbw) for t in traces]
    if not specs:
        raise ValueError("need at least one record")
    if len({len(s.freqs) for s in specs}) != 1:
        raise ValueError("records must have equal length")
    psd = np.mean([s.asd ** 2 for s in specs], axis=0)
    return NoiseSpectrum(specs[0].freqs, np.sqrt(psd), enbw, specs[0].record_length, fs,
                         n_records=len(specs))


def band_average(spec: NoiseSpectrum, f_lo: float, f_hi: float, method: str = "rms") -> float:
    """Average ASD over bins with ``f_lo <= f <= f_hi``.

    ``method="rms"`` (default) is ``sqrt(mean(asd**2))``, an unbiased
    estimate of the noise density.  ``method="mean"`` is the plain
    arithmetic mean of the ASD bins, which for a single Gaussian record
    reads about 11 % low (``sqrt(pi)/2``).
    """
    if not f_lo < f_hi:
        raise ValueError("f_lo must be below f_hi")
    sel = (spec.freqs >= f_lo) & (spec.freqs <= f_hi)
    if not np.any(sel):
        raise EmptyBand(f"no bins in [{f_lo}, {f_hi}] Hz")
    a = spec.asd[sel]
    if method == "rms":
        return float(np.sqrt(np.mean(a ** 2)))
    if method == "mean":
        return float(np.mean(a))
    raise ValueError(f"unknown averaging method {method!r}")


def field_sensitivity(noise_density: float, response: float) -> float:
    """Field-equivalent noise in T/sqrt(Hz)."""
    if not response > 0:
        raise ValueError(f"response must be positive, got {response}")
    return noise_density / response


def enbw_fourth_order(tau: float) -> float:
    """Noise bandwidth of the 4th-order lock-in output filter (Hz)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return ENBW_COEFF / tau

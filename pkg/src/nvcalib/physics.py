"""
Closed-form ensemble-NV cw-ODMR and lock-in signal model.

Only the upper (m_s = 0 -> +1) branch is modelled: each of the four NV
orientations contributes a 14N hyperfine triplet centred at
``D + gamma_e * |b . u_i|``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import constants as _sc

logger = logging.getLogger(__name__)

__all__ = [
    "Constants",
    "BiasField",
    "NVAxes",
    "SpectrumModel",
    "Sweep",
    "NoiseModel",
    "project_field",
    "resonance_centers",
    "cw_spectrum",
    "cw_spectrum_overlapped",
    "lockin_spectrum",
    "synth_timetrace",
    "lattice_rotations",
]

# tetrahedral angle: arccos(-1/3) = 109.4712 deg
THETA_TET = math.acos(-1.0 / 3.0)


@dataclass(frozen=True)
class Constants:
    """Physical constants of the NV ground state (SI units, frequencies in Hz)."""

    D: float = 2.870e9
    gamma_e: float = 28.0e9
    delta_hf: float = 2.16e6
    theta_tet: float = THETA_TET
    g_e: float = 2.003
    mu_B: float = _sc.physical_constants["Bohr magneton"][0]
    h: float = _sc.h
    P_F: float = 4.0 / (3.0 * math.sqrt(3.0))

    @property
    def projection_factor(self) -> float:
        """cos(theta_tet / 2), the field penalty of overlapped-mode sensing."""
        return math.cos(self.theta_tet / 2.0)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Constants":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown constants key(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class BiasField:
    """Bias flux density in the lab (coil) frame, tesla."""

    b: tuple[float, float, float]
    max_norm: float = 0.1

    def __post_init__(self):
        b = tuple(float(x) for x in self.b)
        if len(b) != 3:
            raise ValueError(f"bias field needs 3 components, got {len(b)}")
        if not all(math.isfinite(x) for x in b):
            raise ValueError(f"bias field must be finite, got {b}")
        if math.hypot(*b) >= self.max_norm:
            raise ValueError(f"|b| = {math.hypot(*b):.3g} T exceeds bound {self.max_norm} T")
        object.__setattr__(self, "b", b)

    @classmethod
    def from_mt(cls, bx: float, by: float, bz: float, **kwargs) -> "BiasField":
        return cls((bx * 1e-3, by * 1e-3, bz * 1e-3), **kwargs)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    def as_mt(self) -> tuple[float, float, float]:
        return tuple(x * 1e3 for x in self.b)


_IDEAL_AXES = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
]) / math.sqrt(3.0)


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation matrix taking unit vector ``a`` onto unit vector ``b``."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    s = np.linalg.norm(v)
    c = float(np.dot(a, b))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: half turn about any axis perpendicular to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-8:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    k = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + k + k @ k * ((1.0 - c) / s**2)


@dataclass(frozen=True)
class NVAxes:
    """The four NV symmetry axes expressed in the lab frame, shape (4, 3)."""

    vectors: np.ndarray = field(default_factory=lambda: _IDEAL_AXES.copy())

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        if vec.shape != (4, 3):
            raise ValueError(f"NV axes must have shape (4, 3), got {vec.shape}")
        if not np.allclose(np.linalg.norm(vec, axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("NV axes must be unit vectors")
        gram = vec @ vec.T
        off = gram[~np.eye(4, dtype=bool)]
        if not np.allclose(np.abs(off), 1.0 / 3.0, rtol=0, atol=1e-9):
            raise ValueError("NV axes must be pairwise tetrahedral")
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def ideal(cls) -> "NVAxes":
        return cls(_IDEAL_AXES.copy())

    @classmethod
    def aligned_to(cls, direction: Sequence[float]) -> "NVAxes":
        """Axes of a crystal whose cubic x axis points along ``direction`` in the lab.

        A field along ``direction`` then projects equally onto all four axes.
        The minimal rotation from the lab x axis is used.
        """
        rot = _rotation_between(np.array([1.0, 0.0, 0.0]), np.asarray(direction, dtype=float))
        return cls(_IDEAL_AXES @ rot.T)

    def rotated(self, rot: np.ndarray) -> "NVAxes":
        return NVAxes(self.vectors @ np.asarray(rot, dtype=float).T)


def lattice_rotations() -> list[np.ndarray]:
    """The 24 proper rotations of the cubic lattice (signed permutation matrices)."""
    import itertools

    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if np.linalg.det(m) > 0:
                mats.append(m)
    return mats


@dataclass(frozen=True)
class SpectrumModel:
    """Lineshape parameters: background level ``f0`` (V), per-transition
    contrast, FWHM ``linewidth`` (Hz)."""

    f0: float = 1.0
    contrast: float = 0.0051
    linewidth: float = 574e3
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not 0 < self.contrast < 1:
            raise ValueError(f"contrast must lie in (0, 1), got {self.contrast}")
        if not self.linewidth > 0:
            raise ValueError(f"linewidth must be positive, got {self.linewidth}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SpectrumModel":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown spectrum key(s): {', '.join(sorted(unknown))}")
        consts = Constants.from_dict(data.pop("constants", {}))
        return cls(constants=consts, **{k: float(v) for k, v in data.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpectrumModel":
        return cls.from_dict(json.loads(text))


@dataclass
class Sweep:
    """Ordered (frequency, signal) samples."""

    freqs: np.ndarray
    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.freqs.ndim != 1 or self.freqs.shape != self.values.shape:
            raise ValueError("freqs and values must be 1-D arrays of equal length")
        if len(self.freqs) < 3:
            raise ValueError(f"a sweep needs at least 3 samples, got {len(self.freqs)}")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("sweep frequencies must be strictly increasing")

    def __len__(self) -> int:
        return len(self.freqs)

    def window(self, f_lo: float, f_hi: float) -> "Sweep":
        keep = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return Sweep(self.freqs[keep], self.values[keep], dict(self.meta))

    def scaled(self, k: float) -> "Sweep":
        return Sweep(self.freqs.copy(), self.values * k, dict(self.meta))

    def to_csv(self) -> str:
        lines = ["frequency_hz,signal_v"]
        lines += [f"{float(f)!r},{float(v)!r}" for f, v in zip(self.freqs, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Sweep":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0].strip() != "frequency_hz,signal_v":
            raise ValueError("sweep CSV must start with header 'frequency_hz,signal_v'")
        data = np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]])
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError("sweep CSV rows must have exactly two columns")
        return cls(data[:, 0], data[:, 1])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), newline="\n")

    @classmethod
    def load(cls, path: str | Path) -> "Sweep":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class NoiseModel:
    """Voltage noise: white density (V/rtHz), mains tones (Hz, V amplitude)
    and an electronic floor (V/rtHz) present even without optical signal."""

    white_density: float = 0.0
    mains_lines: tuple[tuple[float, float], ...] = ((50.0, 0.0), (100.0, 0.0), (150.0, 0.0))
    electronic_floor: float = 0.0

    def __post_init__(self):
        lines = tuple((float(f), float(a)) for f, a in self.mains_lines)
        object.__setattr__(self, "mains_lines", lines)
        if self.white_density < 0 or self.electronic_floor < 0:
            raise ValueError("noise densities must be non-negative")
        if any(f < 0 or a < 0 for f, a in lines):
            raise ValueError("mains tones need non-negative frequency and amplitude")

    def without_mains(self) -> "NoiseModel":
        return NoiseModel(self.white_density, (), self.electronic_floor)

    def to_dict(self) -> dict[str, Any]:
        return {
            "white_density": self.white_density,
            "mains_lines": [list(t) for t in self.mains_lines],
            "electronic_floor": self.electronic_floor,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NoiseModel":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise key(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "mains_lines" in kwargs:
            kwargs["mains_lines"] = tuple(tuple(t) for t in kwargs["mains_lines"])
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        return cls.from_dict(json.loads(text))


def project_field(b: BiasField, axes: NVAxes | None = None) -> np.ndarray:
    """Return the four projection magnitudes |b . u_i| in tesla."""
    axes = axes or NVAxes.ideal()
    return np.abs(axes.vectors @ b.vector)


def resonance_centers(b: BiasField, c: Constants | None = None,
                      axes: NVAxes | None = None) -> np.ndarray:
    """Upper-branch resonance frequencies D + gamma_e * B_i (Hz)."""
    c = c or Constants()
    return c.D + c.gamma_e * project_field(b, axes)


def _check_grid(freqs) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or len(freqs) < 1:
        raise ValueError("frequency grid must be a non-empty 1-D array")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    return freqs


def _dip_sum(model: SpectrumModel, shifts: np.ndarray, detuning: np.ndarray,
             amplitude: float) -> np.ndarray:
    # detuning may carry extra trailing dims (modulation phase, tones)
    c = model.constants
    hw2 = (model.linewidth / 2.0) ** 2
    total = np.zeros_like(detuning)
    for shift in shifts:
        for j in (-1, 0, 1):
            total += hw2 / (hw2 + (detuning + j * c.delta_hf - shift) ** 2)
    return model.f0 * (1.0 - amplitude * total)


def _cw_values(model: SpectrumModel, b: BiasField, freqs: np.ndarray,
               axes: NVAxes | None) -> np.ndarray:
    c = model.constants
    shifts = c.gamma_e * project_field(b, axes)
    return _dip_sum(model, shifts, freqs - c.D, model.contrast)


def cw_spectrum(model: SpectrumModel, b: BiasField, freqs,
                axes: NVAxes | None = None) -> Sweep:
    """Four-orientation hyperfine Lorentzian fluorescence profile.

    Parameters
    ----------
    model : SpectrumModel
        Background, per-transition contrast and linewidth.
    b : BiasField
        Lab-frame bias field.
    freqs : array_like
        Absolute microwave frequencies in Hz, strictly increasing.
    axes : NVAxes, optional
        Crystal orientation; ideal alignment when omitted.
    """
    freqs = _check_grid(freqs)
    values = _cw_values(model, b, freqs, axes)
    return Sweep(freqs, values, {"field_t": list(b.b), "mode": "cw"})


def cw_spectrum_overlapped(model: SpectrumModel, projection: float, freqs) -> np.ndarray:
    """Single-orientation profile with amplitude 4C, valid when all
    projections equal ``projection`` (tesla)."""
    freqs = _check_grid(freqs)
    c = model.constants
    return _dip_sum(model, np.array([c.gamma_e * projection]), freqs - c.D,
                    4.0 * model.contrast)


def lockin_spectrum(model: SpectrumModel, b: BiasField, freqs,
                    mod_depth: float | None = None, three_tone: bool = False,
                    axes: NVAxes | None = None, gain: float = 1.0,
                    n_phase: int = 64) -> Sweep:
    """First-harmonic demodulated signal of a frequency-modulated sweep.

    The carrier is modulated as ``f + mod_depth * sin(phi)`` and the
    fluorescence is projected onto ``sin(phi)`` over one cycle, so for small
    depth the output approaches ``gain * mod_depth * dF/df``.  With
    ``three_tone`` the drive also carries sidebands at +-delta_hf and the
    fluorescence is the equal-weight mean over the three tones.

    Defaults to a modulation depth of half the linewidth.
    """
    freqs = _check_grid(freqs)
    if mod_depth is None:
        mod_depth = model.linewidth / 2.0
    if not mod_depth > 0:
        raise ValueError(f"mod_depth must be positive, got {mod_depth}")
    if mod_depth >= 10.0 * model.linewidth:
        raise ValueError(f"mod_depth {mod_depth:g} Hz exceeds 10x linewidth")
    if n_phase < 32:
        raise ValueError("need at least 32 phase samples per modulation cycle")

    phase = 2.0 * np.pi * np.arange(n_phase) / n_phase
    s = np.sin(phase)
    offsets = (-model.constants.delta_hf, 0.0, model.constants.delta_hf) if three_tone else (0.0,)
    # shape (n_freq, n_phase, n_tone)
    grid = freqs[:, None, None] + mod_depth * s[None, :, None] + np.asarray(offsets)[None, None, :]
    c = model.constants
    shifts = c.gamma_e * project_field(b, axes)
    fl = _dip_sum(model, shifts, grid - c.D, model.contrast).mean(axis=2)
    x = (2.0 / n_phase) * (fl @ s)
    meta = {"field_t": list(b.b), "mode": "lockin", "mod_depth_hz": mod_depth,
            "three_tone": bool(three_tone)}
    return Sweep(freqs, gain * x, meta)


def synth_timetrace(slope: float, field_signal, noise: NoiseModel, fs: float,
                    duration: float, seed=None) -> np.ndarray:
    """Synthesize a lock-in output record in volts.

    ``field_signal`` is a tesla time series of matching length, a scalar, or
    None for zero field.  ``seed`` is anything accepted by
    ``numpy.random.default_rng`` (including a Generator).
    """
    if not fs > 0 or not duration > 0:
        raise ValueError("fs and duration must be positive")
    n = int(round(fs * duration))
    if n < 8:
        raise ValueError(f"record of {n} samples is too short (need >= 8)")
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs

    if field_signal is None:
        field = np.zeros(n)
    else:
        field = np.broadcast_to(np.asarray(field_signal, dtype=float), (n,))
    v = slope * field

    scale = math.sqrt(fs / 2.0)
    white = rng.standard_normal(n)
    floor = rng.standard_normal(n)
    v = v + noise.white_density * scale * white + noise.electronic_floor * scale * floor
    for f, amp in noise.mains_lines:
        if amp:
            v = v + amp * np.sin(2.0 * np.pi * f * t)
    return v

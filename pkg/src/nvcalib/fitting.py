"""
Hyperfine-triplet Lorentzian fitting and lock-in zero-crossing slope fits.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy.optimize import least_squares

from .errors import FitDegenerate, NoCrossing
from .physics import Constants, Sweep

logger = logging.getLogger(__name__)

__all__ = [
    "TripletFit",
    "SlopeFit",
    "fit_triplet",
    "central_loss",
    "triplet_loss",
    "fit_zero_crossing",
    "slope_to_field_response",
    "estimate_noise",
]

HF_SPACING = 2.16e6
SPACING_TOLERANCE = 0.10
SPACING_BOUNDS = (HF_SPACING * (1 - SPACING_TOLERANCE), HF_SPACING * (1 + SPACING_TOLERANCE))


@dataclass
class TripletFit:
    centers: tuple[float, float, float]
    linewidths: tuple[float, float, float]
    contrasts: tuple[float, float, float]
    baseline: float
    residual_rms: float
    converged: bool
    n_evaluations: int = 0

    @property
    def central_linewidth(self) -> float:
        return self.linewidths[1]

    @property
    def central_contrast(self) -> float:
        return self.contrasts[1]

    @property
    def dip_depth(self) -> float:
        """Deepest modelled dip below baseline, volts."""
        return float(self.baseline - np.min(triplet_model(np.asarray(self.centers), self)))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("centers", "linewidths", "contrasts"):
            d[k] = [float(x) for x in d[k]]
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TripletFit":
        data = dict(data)
        for k in ("centers", "linewidths", "contrasts"):
            data[k] = tuple(float(x) for x in data[k])
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class SlopeFit:
    zero_crossing: float
    slope: float
    window: tuple[float, float]
    r_squared: float

    def to_dict(self) -> dict[str, Any]:
        return {"zero_crossing": self.zero_crossing, "slope": self.slope,
                "window": list(self.window), "r_squared": self.r_squared}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SlopeFit":
        return cls(float(data["zero_crossing"]), float(data["slope"]),
                   tuple(data["window"]), float(data["r_squared"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _lorentz(f, center, fwhm):
    hw2 = (0.5 * fwhm) ** 2
    return hw2 / (hw2 + (f - center) ** 2)


def triplet_model(freqs, fit: TripletFit) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    dips = sum(c * _lorentz(freqs, f, w)
               for f, w, c in zip(fit.centers, fit.linewidths, fit.contrasts))
    return fit.baseline * (1.0 - dips)


def estimate_noise(values) -> float:
    """Robust per-sample noise std from the MAD of first differences."""
    d = np.diff(np.asarray(values, dtype=float))
    mad = np.median(np.abs(d - np.median(d)))
    return float(mad / 0.6744897501960817 / math.sqrt(2.0))


# internal parameter vector (frequencies in MHz relative to a reference,
# values normalised by the baseline estimate):
#   [baseline, center, gap_left, gap_right, w0, w1, w2, c0, c1, c2]
# with a shared width the three w entries collapse into one.

_SHARED_IDX = np.array([0, 1, 2, 3, 4, 4, 4, 5, 6, 7])


def _expand(p, shared):
    return p[_SHARED_IDX] if shared else p


def _reduce(full, shared):
    return np.delete(full, [5, 6]) if shared else full


def _unpack(p):
    base, c, gl, gr = p[:4]
    centers = np.array([c - gl, c, c + gr])
    return base, centers, p[4:7], p[7:10]


def _residuals(p, x, y, shared):
    base, centers, widths, contrasts = _unpack(_expand(p, shared))
    hw2 = (0.5 * widths[:, None]) ** 2
    dips = (contrasts[:, None] * hw2 / (hw2 + (x[None, :] - centers[:, None]) ** 2)).sum(axis=0)
    return base * (1.0 - dips) - y


def _jacobian(p, x, y, shared):
    base, centers, widths, contrasts = _unpack(_expand(p, shared))
    hw = 0.5 * widths[:, None]
    u = x[None, :] - centers[:, None]
    lor = hw ** 2 / (hw ** 2 + u ** 2)
    d_mu = 2.0 * u * lor ** 2 / hw ** 2          # dL/dcenter
    d_w = lor * (1.0 - lor) / hw                  # dL/dwidth
    cd_mu = contrasts[:, None] * d_mu
    jac = np.empty((len(x), 10))
    jac[:, 0] = 1.0 - (contrasts[:, None] * lor).sum(axis=0)
    jac[:, 1] = -base * cd_mu.sum(axis=0)
    jac[:, 2] = base * cd_mu[0]
    jac[:, 3] = -base * cd_mu[2]
    jac[:, 4:7] = (-base * contrasts[:, None] * d_w).T
    jac[:, 7:10] = (-base * lor).T
    if shared:
        return np.column_stack([jac[:, :4], jac[:, 4:7].sum(axis=1), jac[:, 7:]])
    return jac


def fit_triplet(sweep: Sweep, init: TripletFit | None = None, max_iter: int = 200,
                noise_threshold: float = 3.0, residual_tolerance: float = 0.10,
                shared_width: bool = False, multi_start: bool = True) -> TripletFit:
    """Fit a baseline minus three Lorentzians with hyperfine-constrained spacing.

    The outer centers sit at ``center - gap_left`` and ``center + gap_right``
    with both gaps bounded to 2.16 MHz +-10 %.  Contrasts of the three peaks
    are always free; linewidths are free unless ``shared_width`` is set.

    Parameters
    ----------
    sweep : Sweep
        cw sweep covering at least three hyperfine spacings.
    init : TripletFit, optional
        Starting point; otherwise the deepest sample seeds the central
        center and the two neighbouring hyperfine positions are tried too.
    max_iter : int
        Cap on residual evaluations per start.
    noise_threshold : float
        A dip shallower than this many noise standard deviations raises
        FitDegenerate.
    residual_tolerance : float
        Fits whose residual RMS exceeds this fraction of the fitted dip depth
        are flagged ``converged=False``.
    shared_width : bool
        Tie the three hyperfine linewidths to one value.
    multi_start : bool
        Also start with the deepest sample taken as an outer line.  Starts
        are tried in order and the search stops at the first accepted fit.

    Raises
    ------
    FitDegenerate
        When there is no feature to fit.
    """
    freqs, values = sweep.freqs, sweep.values
    span = freqs[-1] - freqs[0]
    if len(freqs) < 30:
        raise ValueError(f"triplet fit needs >= 30 samples, got {len(freqs)}")
    if span < 3 * HF_SPACING:
        raise ValueError(f"sweep span {span:g} Hz is narrower than three hyperfine spacings")

    baseline0 = float(np.median(values))
    depth0 = baseline0 - float(values.min())
    sigma = estimate_noise(values)
    # judge the dip on a 5-sample running mean so single noisy samples do not count
    smooth = np.convolve(values, np.ones(5) / 5.0, mode="valid")
    smooth_depth = baseline0 - float(smooth.min())
    if (not baseline0 > 0 or smooth_depth <= noise_threshold * sigma
            or depth0 <= 1e-12 * abs(baseline0)):
        raise FitDegenerate(f"no dip above {noise_threshold:g} x noise "
                            f"(depth {depth0:.3g} V, noise {sigma:.3g} V)")

    i_min = int(np.argmin(values))
    f_ref = float(freqs[i_min])
    x = (freqs - f_ref) / 1e6
    y = values / baseline0
    x_lo, x_hi = float(x[0]), float(x[-1])
    gap_lo, gap_hi = SPACING_BOUNDS[0] / 1e6, SPACING_BOUNDS[1] / 1e6
    span_mhz = span / 1e6
    step = span_mhz / (len(x) - 1)

    # a resolvable line spans at least two grid steps
    lower = np.array([0.0, x_lo, gap_lo, gap_lo] + [2.0 * step] * 3 + [0.0] * 3)
    # lines broader than the hyperfine spacing would not form a resolved triplet
    w_max = min(span_mhz, HF_SPACING / 1e6)
    upper = np.array([np.inf, x_hi, gap_hi, gap_hi] + [w_max] * 3 + [1.0] * 3)

    if init is not None:
        starts = [np.array([
            init.baseline / baseline0,
            (init.centers[1] - f_ref) / 1e6,
            (init.centers[1] - init.centers[0]) / 1e6,
            (init.centers[2] - init.centers[1]) / 1e6,
            *(init.linewidths[1] / 1e6 if shared_width else w / 1e6 for w in init.linewidths),
            *init.contrasts,
        ])]
    else:
        c0 = min(depth0 / baseline0, 0.99)
        hf = HF_SPACING / 1e6
        w0 = min(0.5, 0.5 * w_max)
        starts = [np.array([1.0, xc, hf, hf, w0, w0, w0, c0, c0, c0])
                  for xc in (0.0, -hf, hf) if x_lo <= xc <= x_hi]

    lo, hi = _reduce(lower, shared_width), _reduce(upper, shared_width)
    if not multi_start:
        starts = starts[:1]
    best = None
    for p0 in starts:
        # trf needs a strictly feasible start
        p0 = np.clip(_reduce(p0, shared_width), np.nextafter(lo, hi), np.nextafter(hi, lo))
        res = least_squares(_residuals, p0, jac=_jacobian, bounds=(lo, hi),
                            args=(x, y, shared_width), method="trf",
                            max_nfev=max_iter, x_scale="jac")
        fit = _assess(res, shared_width, lower, upper, x_lo, x_hi, step, f_ref, baseline0,
                      residual_tolerance)
        if fit.converged:
            return fit
        if best is None or res.cost < best[0]:
            best = (res.cost, fit)
    return best[1]


def _assess(res, shared_width, lower, upper, x_lo, x_hi, step, f_ref, baseline0,
            residual_tolerance) -> TripletFit:
    p_best = _expand(res.x, shared_width)
    base, centers, widths, contrasts = _unpack(p_best)
    resid = res.fun * baseline0
    fit = TripletFit(
        centers=tuple(float(f_ref + 1e6 * c) for c in centers),
        linewidths=tuple(float(1e6 * w) for w in widths),
        contrasts=tuple(float(c) for c in contrasts),
        baseline=float(base * baseline0),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        converged=False,
        n_evaluations=int(res.nfev),
    )
    depth = fit.dip_depth
    # a line pinned to its box, or a center at the sweep edge, is not a measurement
    x_c = p_best[1]
    pinned = (np.any(widths <= lower[4:7] * 1.01) or np.any(widths >= upper[4:7] * 0.99)
              or x_c <= x_lo + step or x_c >= x_hi - step)
    fit.converged = bool(res.status > 0 and depth > 0 and not pinned
                         and fit.residual_rms <= residual_tolerance * depth)
    return fit


def central_loss(fit: TripletFit | None) -> float:
    """Loss 1 / (central linewidth); zero for missing or unconverged fits."""
    if fit is None or not fit.converged:
        return 0.0
    w = fit.linewidths[1]
    if not math.isfinite(w) or w <= 0:
        return 0.0
    return 1.0 / w


def triplet_loss(sweep: Sweep, **fit_kwargs) -> float:
    """fit_triplet followed by central_loss, with FitDegenerate mapped to 0."""
    try:
        fit = fit_triplet(sweep, **fit_kwargs)
    except FitDegenerate:
        return 0.0
    return central_loss(fit)


def fit_zero_crossing(sweep: Sweep, center_hint: float, half_window: float) -> SlopeFit:
    """Ordinary least-squares line through the samples within
    ``center_hint +- half_window``; the zero crossing is where that line
    meets zero."""
    lo, hi = center_hint - half_window, center_hint + half_window
    keep = (sweep.freqs >= lo) & (sweep.freqs <= hi)
    f = sweep.freqs[keep]
    v = sweep.values[keep]
    if len(f) < 2 or not (np.any(v < 0) and np.any(v > 0) or np.any(v == 0)):
        raise NoCrossing(f"no sign change within [{lo:.6g}, {hi:.6g}] Hz")

    x = f - center_hint
    xm, vm = x.mean(), v.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise NoCrossing("window holds a single frequency")
    slope = float(np.sum((x - xm) * (v - vm)) / sxx)
    if slope == 0:
        raise NoCrossing("fitted line is flat")
    intercept = vm - slope * xm
    zero = float(center_hint - intercept / slope)
    if not lo < zero < hi:
        raise NoCrossing(f"fitted zero crossing {zero:.6g} Hz lies outside the window")

    ss_tot = np.sum((v - vm) ** 2)
    ss_res = np.sum((v - (intercept + slope * x)) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))
    return SlopeFit(zero, slope, (float(lo), float(hi)), r2)


def slope_to_field_response(slope: float, c: Constants | None = None,
                            overlapped: bool = False) -> float:
    """Convert a zero-crossing slope (V/Hz) into a field response (V/T).

    In overlapped mode each axis sees only cos(theta_tet/2) of the field
    under test, so the response is reduced by that factor.
    """
    c = c or Constants()
    if not math.isfinite(slope):
        raise ValueError("slope must be finite")
    response = slope * c.gamma_e
    if overlapped:
        response *= c.projection_factor
    return response

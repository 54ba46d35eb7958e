import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvcalib.errors import EmptyBand
from nvcalib.physics import NoiseModel, synth_timetrace
from nvcalib.presets import BAND, SENSING_PRESETS, TRACE_FS
from nvcalib.sensitivity import (NoiseSpectrum, SensitivityReport, amplitude_spectral_density,
                                 averaged_spectral_density, band_average, enbw_fourth_order,
                                 field_sensitivity, shot_noise_sensitivity)

FS = TRACE_FS
N = int(round(FS))


def white(d, seed, n=N):
    return synth_timetrace(0.0, None, NoiseModel(d, ()), FS, n / FS, seed=seed)


# ---------------------------------------------------------------- shot noise

def test_shot_noise_oracle():
    # (4/(3 sqrt 3)) / 2.8e10 * 5.5e5 / (0.0204 sqrt(1e15))
    want = 4 / (3 * math.sqrt(3)) / 2.8e10 * 5.5e5 / (0.0204 * math.sqrt(1e15))
    got = shot_noise_sensitivity(550e3, 0.0204, 1e15)
    assert got == pytest.approx(want, rel=1e-4)
    assert got == pytest.approx(23.4e-12, rel=5e-3)


def test_shot_noise_structure():
    base = shot_noise_sensitivity(5e5, 0.01, 1e14)
    assert shot_noise_sensitivity(5e5, 0.02, 1e14) == pytest.approx(base / 2, rel=1e-12)
    assert shot_noise_sensitivity(5e5, 0.01, 4e14) == pytest.approx(base / 2, rel=1e-12)
    # linear in linewidth, so it vanishes as the line narrows
    assert shot_noise_sensitivity(5e-4, 0.01, 1e14) == pytest.approx(base * 1e-9, rel=1e-12)


@pytest.mark.parametrize("args", [(5e5, 0.0, 1e14), (5e5, 0.01, 0.0), (0.0, 0.01, 1.0)])
def test_shot_noise_rejects_non_positive(args):
    with pytest.raises(ValueError):
        shot_noise_sensitivity(*args)


@pytest.mark.property
@given(lw=st.floats(1e4, 1e7), c=st.floats(1e-4, 0.3), r=st.floats(1e8, 1e18),
       k=st.floats(0.1, 10.0))
def test_shot_noise_homogeneity(lw, c, r, k):
    base = shot_noise_sensitivity(lw, c, r)
    assert shot_noise_sensitivity(k * lw, min(k * c, 0.99), r) == pytest.approx(
        base * k * c / min(k * c, 0.99), rel=1e-12)
    assert shot_noise_sensitivity(lw, c, k * k * r) == pytest.approx(base / k, rel=1e-12)


# ---------------------------------------------------------------- ASD

def test_zero_trace_zero_asd():
    spec = amplitude_spectral_density(np.zeros(64), 100.0)
    assert np.all(spec.asd == 0) and spec.freqs[-1] == 50.0


def test_white_noise_level():
    spec = amplitude_spectral_density(white(5.50e-6, seed=0), FS)
    assert band_average(spec, *BAND) == pytest.approx(5.50e-6, rel=0.15)


def test_mains_tone_peak():
    noise = NoiseModel(1e-7, ((50.0, 20e-6),))
    x = synth_timetrace(0.0, None, noise, FS, 1.0, seed=2)
    spec = amplitude_spectral_density(x, FS)
    k = int(np.argmax(spec.asd[1:])) + 1
    assert abs(spec.freqs[k] - 50.0) <= spec.bin_width
    # A/sqrt(2) RMS within one bin of width df
    assert spec.asd[k] * math.sqrt(spec.bin_width) == pytest.approx(20e-6 / math.sqrt(2),
                                                                     rel=0.02)
    quiet = amplitude_spectral_density(synth_timetrace(0.0, None, NoiseModel(1e-7, ()), FS, 1.0,
                                                       seed=2), FS)
    assert quiet.asd[k] < 0.05 * spec.asd[k]


def test_asd_rejects_bad_input():
    with pytest.raises(ValueError):
        amplitude_spectral_density(np.zeros(7), 10.0)
    with pytest.raises(ValueError):
        amplitude_spectral_density([0.0] * 9 + [math.nan], 10.0)
    with pytest.raises(ValueError):
        amplitude_spectral_density(np.zeros(16), 0.0)


def test_noise_spectrum_invariants():
    with pytest.raises(ValueError):
        NoiseSpectrum([0.0, 1.0], [1.0, -1.0], 0.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        NoiseSpectrum([0.0, 6.0], [1.0, 1.0], 0.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        NoiseSpectrum([1.0, 0.0], [1.0, 1.0], 0.0, 1.0, 10.0)


def test_noise_spectrum_csv_round_trip():
    spec = amplitude_spectral_density(white(1e-6, 3, n=256), FS, 77.92)
    text = spec.to_csv()
    assert text.startswith("frequency_hz,asd_v_per_rthz\n")
    back = NoiseSpectrum.from_csv(text, FS, 77.92)
    assert np.array_equal(back.freqs, spec.freqs) and np.array_equal(back.asd, spec.asd)
    assert back.record_length == pytest.approx(spec.record_length, rel=1e-12)


@pytest.mark.property
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(8, 4096))
def test_parseval(seed, n):
    x = np.random.default_rng(seed).normal(size=n)
    spec = amplitude_spectral_density(x, 1000.0)
    assert np.sum(spec.asd ** 2) * spec.bin_width == pytest.approx(np.var(x), rel=1e-9)


@pytest.mark.property
@given(seed=st.integers(0, 2 ** 32 - 1), k=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6))
def test_asd_linearity(seed, k):
    x = np.random.default_rng(seed).normal(size=512)
    a = amplitude_spectral_density(x, 100.0).asd
    b = amplitude_spectral_density(k * x, 100.0).asd
    assert np.allclose(b, abs(k) * a, rtol=1e-9, atol=1e-12 * abs(k) * a.max())


# ---------------------------------------------------------------- band average

def _flat(c, n=1001, fs=2000.0):
    f = np.linspace(0, fs / 2, n)
    return NoiseSpectrum(f, np.full(n, c), 0.0, 1.0, fs)


@pytest.mark.parametrize("method", ["rms", "mean"])
def test_band_average_flat(method):
    assert band_average(_flat(3e-6), 1.0, 77.92, method) == pytest.approx(3e-6, rel=1e-12)


def test_band_average_excludes_out_of_band_tone():
    x = white(5e-6, seed=5)
    tone = 50e-6 * np.sin(2 * np.pi * 150.0 * np.arange(N) / FS)
    a = band_average(amplitude_spectral_density(x, FS), *BAND)
    b = band_average(amplitude_spectral_density(x + tone, FS), *BAND)
    # an integer-bin tone does not leak, so only round-off remains
    assert abs(a - b) <= 1e-9 * a


def test_band_average_empty_and_bad():
    spec = _flat(1.0, n=11, fs=20.0)
    with pytest.raises(EmptyBand):
        band_average(spec, 1.1, 1.9)
    with pytest.raises(ValueError):
        band_average(spec, 5.0, 1.0)
    with pytest.raises(ValueError):
        band_average(spec, 1.0, 5.0, method="median")


def test_band_average_separated_synthetic():
    preset = SENSING_PRESETS["separated"]
    x = synth_timetrace(0.0, None, preset.noise_model(), FS, 1.0, seed=11)
    assert band_average(amplitude_spectral_density(x, FS), *BAND) == pytest.approx(5.50e-6,
                                                                                   rel=0.15)


# ---------------------------------------------------------------- field sensitivity

@pytest.mark.parametrize("noise,resp,want,tol", [
    (5.50e-6, 4.144e3, 1.327e-9, 1e-3),
    (6.58e-6, 7.69e3, 8.56e-10, 1e-3),
    (254e-9, 4.144e3, 6.13e-11, 1e-3),
    (265e-9, 7.69e3, 3.45e-11, 1e-3),
])
def test_field_sensitivity_examples(noise, resp, want, tol):
    assert field_sensitivity(noise, resp) == pytest.approx(want, rel=tol)


def test_field_sensitivity_requires_positive_response():
    with pytest.raises(ValueError):
        field_sensitivity(1e-6, 0.0)


def test_report_invariant_and_json():
    r = SensitivityReport.build(0.148e-6, 4.144e3, 5.5e-6, 254e-9, (1.0, 77.92), "separated")
    assert r.field_sensitivity == r.voltage_noise_density / r.response_v_per_t
    back = SensitivityReport.from_json(r.to_json())
    assert back == r
    with pytest.raises(ValueError):
        SensitivityReport.build(1.0, 1.0, 1.0, 1.0, (1, 2), "other")


# ---------------------------------------------------------------- ENBW

@pytest.mark.parametrize("tau,want", [(1e-3, 77.92), (2e-3, 38.96), (0.5e-3, 155.84)])
def test_enbw(tau, want):
    assert enbw_fourth_order(tau) == pytest.approx(want, rel=1e-12)


def test_enbw_rejects_non_positive():
    with pytest.raises(ValueError):
        enbw_fourth_order(0.0)


@pytest.mark.property
@given(tau=st.floats(1e-6, 10.0), k=st.floats(0.01, 100.0))
def test_enbw_inverse_scaling(tau, k):
    assert enbw_fourth_order(k * tau) == pytest.approx(enbw_fourth_order(tau) / k, rel=1e-12)


# ---------------------------------------------------------------- closure

def _closure(d, slope, seeds):
    traces = [synth_timetrace(0.0, None, NoiseModel(d, ()), FS, 1.0, seed=s) for s in seeds]
    spec = averaged_spectral_density(traces, FS, 77.92)
    return field_sensitivity(band_average(spec, *BAND), slope)


@pytest.mark.property
@pytest.mark.parametrize("seed", range(5))
def test_closure_single_record(seed):
    d, s = 5.5e-6, 4.144e3
    assert _closure(d, s, [seed]) == pytest.approx(d / s, rel=0.15)


@pytest.mark.property
def test_closure_twenty_records():
    d, s = 6.58e-6, 7.69e3
    assert _closure(d, s, range(20)) == pytest.approx(d / s, rel=0.05)


def test_averaged_density_rejects_mismatch():
    with pytest.raises(ValueError):
        averaged_spectral_density([np.zeros(16), np.zeros(32)], 100.0)
    with pytest.raises(ValueError):
        averaged_spectral_density([], 100.0)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import constants as sc

from conftest import lorentzian_sum
from nvcalib.physics import (BiasField, Constants, NoiseModel, NVAxes, SpectrumModel, Sweep,
                             cw_spectrum, cw_spectrum_overlapped, lattice_rotations,
                             lockin_spectrum, project_field, resonance_centers, synth_timetrace)

C = Constants()


# ---------------------------------------------------------------- constants

def test_gyromagnetic_ratio_consistent_with_g_factor():
    # oracle: CODATA Bohr magneton and Planck constant
    gamma = 2.003 * sc.physical_constants["Bohr magneton"][0] / sc.h
    assert abs(C.gamma_e - gamma) / gamma < 5e-3


def test_half_tetrahedral_cosine():
    assert abs(math.cos(C.theta_tet / 2) - 1 / math.sqrt(3)) < 1e-6
    assert math.degrees(C.theta_tet) == pytest.approx(109.47, abs=5e-3)


def test_lineshape_coefficient():
    assert C.P_F == pytest.approx(0.7698, abs=1e-4)


def test_constants_reject_unknown_key():
    with pytest.raises(ValueError, match="bogus"):
        Constants.from_dict({"bogus": 1.0})


# ---------------------------------------------------------------- types

def test_axes_are_unit_and_tetrahedral():
    for ax in (NVAxes.ideal(), NVAxes.aligned_to((2.12e-3, -0.016e-3, -0.070e-3))):
        v = ax.vectors
        assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
        for i, j in itertools.combinations(range(4), 2):
            ang = math.acos(np.clip(v[i] @ v[j], -1, 1))
            assert abs(ang - math.acos(-1 / 3)) < 1e-9


def test_axes_reject_non_tetrahedral():
    with pytest.raises(ValueError):
        NVAxes(np.eye(4, 3))


@pytest.mark.parametrize("b", [(math.inf, 0, 0), (0.0, math.nan, 0.0), (0.1, 0, 0)])
def test_bias_field_rejects_bad_values(b):
    with pytest.raises(ValueError):
        BiasField(b)


def test_bias_field_bound_configurable():
    assert BiasField((0.2, 0, 0), max_norm=1.0).b[0] == 0.2


@pytest.mark.parametrize("kw", [dict(contrast=0.0), dict(contrast=1.0), dict(linewidth=0.0),
                                dict(f0=-1.0)])
def test_spectrum_model_invariants(kw):
    with pytest.raises(ValueError):
        SpectrumModel(**kw)


def test_noise_model_rejects_negative_density():
    with pytest.raises(ValueError):
        NoiseModel(white_density=-1e-6)


def test_model_json_round_trip():
    m = SpectrumModel(0.8, 0.01, 600e3, Constants(D=2.871e9))
    assert SpectrumModel.from_json(m.to_json()) == m
    n = NoiseModel(5.5e-6, ((50.0, 1e-5),), 2.5e-7)
    assert NoiseModel.from_json(n.to_json()) == n
    assert set(n.to_dict()) == {"white_density", "mains_lines", "electronic_floor"}


def test_sweep_csv_round_trip(tmp_path):
    s = Sweep(np.linspace(2.8e9, 2.9e9, 7), np.random.default_rng(1).normal(size=7))
    s.save(tmp_path / "s.csv")
    raw = (tmp_path / "s.csv").read_bytes()
    assert raw.startswith(b"frequency_hz,signal_v\n") and b"\r" not in raw
    back = Sweep.load(tmp_path / "s.csv")
    assert np.array_equal(back.freqs, s.freqs) and np.array_equal(back.values, s.values)


@pytest.mark.parametrize("freqs", [[1.0, 2.0], [1.0, 3.0, 2.0], [1.0, 1.0, 2.0]])
def test_sweep_invariants(freqs):
    with pytest.raises(ValueError):
        Sweep(freqs, np.zeros(len(freqs)))


# ---------------------------------------------------------------- projections

def test_projection_zero_field():
    assert np.array_equal(project_field(BiasField((0, 0, 0))), np.zeros(4))


def test_projection_x_field_equal():
    p = project_field(BiasField((2.12e-3, 0, 0)))
    assert np.allclose(p, 2.12e-3 / math.sqrt(3), rtol=1e-12)
    assert p[0] == pytest.approx(1.2240e-3, abs=1e-7)


def test_projection_along_axis():
    u1 = np.array([1, 1, 1]) / math.sqrt(3)
    p = project_field(BiasField(tuple(1e-3 * u1)))
    assert p[0] == pytest.approx(1e-3, rel=1e-12)
    assert np.allclose(p[1:], 1e-3 / 3, rtol=1e-12)


def test_resonances_zero_field():
    assert np.all(resonance_centers(BiasField((0, 0, 0))) == C.D)


def test_resonances_x_field():
    nu = resonance_centers(BiasField((2.12e-3, 0, 0)))
    assert np.allclose(nu, 2.870e9 + 28e9 * 2.12e-3 / math.sqrt(3), rtol=1e-14)
    assert nu[0] == pytest.approx(2.9043e9, abs=1e5)


def test_resonances_separated_field_spread(separated_field, axes):
    nu = np.sort(resonance_centers(separated_field, C, axes))
    assert np.ptp(nu) > 20e6
    assert np.min(np.diff(nu)) > 10e6


def test_lab_axes_overlap_at_found_field(overlapped_field, axes):
    p = project_field(overlapped_field, axes)
    assert np.ptp(p) < 1e-12 * p.max()
    assert resonance_centers(overlapped_field, C, axes)[0] == pytest.approx(2904.29e6, abs=0.01e6)


# ---------------------------------------------------------------- cw spectrum

def test_cw_matches_independent_lorentzian_sum(separated_field, axes):
    m = SpectrumModel(1.0, 0.0051, 574e3)
    freqs = np.linspace(2.79e9, 2.95e9, 2001)
    nu = resonance_centers(separated_field, C, axes)
    got = cw_spectrum(m, separated_field, freqs, axes).values
    assert np.allclose(got, lorentzian_sum(freqs, nu, 574e3, 0.0051), rtol=0, atol=1e-14)


def test_cw_far_detuned_approaches_f0():
    m = SpectrumModel(0.7, 0.01, 500e3)
    v = cw_spectrum(m, BiasField((2.12e-3, 0, 0)), [1e9, 1.1e9, 5e9]).values
    assert np.allclose(v, 0.7, rtol=1e-5)


def test_cw_isolated_dip_depth(separated_field, axes):
    m = SpectrumModel(1.0, 0.0051, 574e3)
    nu = resonance_centers(separated_field, C, axes)
    depth = 1.0 - cw_spectrum(m, separated_field, [nu[0] - 1.0, nu[0], nu[0] + 1.0], axes).values[1]
    # single-Lorentzian value plus the two hyperfine tails at 2.16 MHz
    hw2 = (574e3 / 2) ** 2
    tails = 2 * hw2 / (hw2 + 2.16e6 ** 2)
    assert depth == pytest.approx(0.0051 * (1 + tails), rel=2e-3)
    assert depth == pytest.approx(0.0051, rel=0.05)


def test_cw_positive_when_contrast_small():
    m = SpectrumModel(1.0, 1 / 12 - 1e-6, 500e3)
    f = np.linspace(2.85e9, 2.95e9, 5001)
    assert np.all(cw_spectrum(m, BiasField((2.12e-3, 0, 0)), f).values > 0)


def test_cw_rejects_non_monotonic_grid():
    with pytest.raises(ValueError):
        cw_spectrum(SpectrumModel(), BiasField((0, 0, 0)), [2.9e9, 2.8e9, 2.95e9])


@pytest.mark.property
@given(s=st.floats(-3e-3, 3e-3), lw=st.floats(100e3, 2e6), c=st.floats(1e-4, 0.08))
def test_four_orientation_sum_equals_overlapped_form(s, lw, c):
    m = SpectrumModel(1.0, c, lw)
    freqs = np.linspace(2.80e9, 2.96e9, 10_000)
    b = BiasField((s, 0.0, 0.0))
    full = cw_spectrum(m, b, freqs).values
    single = cw_spectrum_overlapped(m, abs(s) / math.sqrt(3), freqs)
    assert np.max(np.abs(full - single)) < 1e-12 * m.f0


@pytest.mark.property
@given(bx=st.floats(-3e-3, 3e-3), by=st.floats(-3e-3, 3e-3), bz=st.floats(-3e-3, 3e-3),
       k=st.integers(0, 23))
def test_lattice_rotation_symmetry(bx, by, bz, k):
    rot = lattice_rotations()[k]
    b = BiasField((bx, by, bz))
    rb = BiasField(tuple(rot @ b.vector))
    p, q = project_field(b), project_field(rb)
    assert np.allclose(np.sort(p), np.sort(q), rtol=0, atol=1e-18)
    m = SpectrumModel()
    f = np.linspace(2.78e9, 2.96e9, 301)
    assert np.allclose(cw_spectrum(m, b, f).values, cw_spectrum(m, rb, f).values,
                       rtol=0, atol=1e-14)


def test_lattice_rotations_are_the_cubic_group():
    rots = lattice_rotations()
    assert len(rots) == 24
    assert all(np.allclose(r @ r.T, np.eye(3)) and np.isclose(np.linalg.det(r), 1) for r in rots)


@pytest.mark.property
def test_depth_grows_with_number_of_overlapped_orientations():
    m = SpectrumModel(1.0, 0.005, 500e3)
    # field directions giving k equal projections (the rest far away)
    dirs = {1: (1, 1, 1), 2: (1, 1, 0), 3: (1, 1, -1), 4: (1, 0, 0)}
    depths = []
    for k, d in dirs.items():
        d = np.array(d, float) / np.linalg.norm(d)
        b = BiasField(tuple(3e-3 * d))
        p = project_field(b)
        vals, counts = np.unique(np.round(p, 12), return_counts=True)
        common = vals[np.argmax(counts)] if k > 1 else p[0]
        assert (counts.max() if k > 1 else 1) == k
        nu = C.D + C.gamma_e * common
        depths.append(1.0 - cw_spectrum(m, b, [nu - 1, nu, nu + 1]).values[1])
    assert all(a <= b for a, b in zip(depths, depths[1:]))


# ---------------------------------------------------------------- lock-in

def _analytic_derivative(freqs, centers, lw, c, hf=2.16e6):
    hw = lw / 2
    total = np.zeros_like(freqs)
    for nu in centers:
        for j in (-1, 0, 1):
            u = freqs - (nu - j * hf)
            total += -2 * u * hw ** 2 / (hw ** 2 + u ** 2) ** 2
    return -c * total


def test_lockin_zero_at_symmetric_center():
    m = SpectrumModel(1.0, 0.005, 500e3)
    b = BiasField((2.12e-3, 0, 0))
    nu = resonance_centers(b)[0]
    out = lockin_spectrum(m, b, [nu - 1e5, nu, nu + 1e5]).values
    assert abs(out[1]) < 1e-9 * abs(out[0])
    assert out[0] == pytest.approx(-out[2], rel=1e-9)


def test_lockin_small_depth_is_derivative(separated_field, axes):
    m = SpectrumModel(1.0, 0.0051, 574e3)
    nu = resonance_centers(separated_field, C, axes)
    depth = m.linewidth / 100
    # points of maximal slope of each isolated line and a few random ones nearby
    rng = np.random.default_rng(4)
    f = np.sort(np.concatenate([nu - m.linewidth / (2 * math.sqrt(3)),
                                nu[0] + rng.uniform(-4e5, 4e5, 6)]))
    x = lockin_spectrum(m, separated_field, f, mod_depth=depth, axes=axes).values
    ref = depth * _analytic_derivative(f, nu, m.linewidth, m.contrast)
    big = np.abs(ref) > 0.05 * np.abs(ref).max()
    assert np.all(np.abs(x[big] - ref[big]) / np.abs(ref[big]) < 0.01)


def test_lockin_overlapped_three_tone_zero_crossings(overlapped_field, axes):
    m = SpectrumModel(1.0, 0.0051, 550e3)
    f = np.arange(2890e6, 2920e6, 20e3)
    x = lockin_spectrum(m, overlapped_field, f, three_tone=True, axes=axes).values
    # zero crossings within the overlapped group (+-6 MHz of 2904.29 MHz)
    sel = (f > 2898e6) & (f < 2911e6)
    s = np.sign(x[sel])
    rising = np.flatnonzero((s[:-1] < 0) & (s[1:] > 0))
    assert len(rising) == 5
    fs = f[sel]
    central = fs[rising[2]]
    assert central == pytest.approx(2904e6, abs=1e6)


@pytest.mark.parametrize("depth", [0.0, -1.0, 5.74e6, 1e7])
def test_lockin_rejects_bad_depth(depth):
    with pytest.raises(ValueError):
        lockin_spectrum(SpectrumModel(), BiasField((0, 0, 0)), [2.86e9, 2.87e9, 2.88e9],
                        mod_depth=depth)


def test_lockin_default_depth_is_half_linewidth():
    s = lockin_spectrum(SpectrumModel(linewidth=600e3), BiasField((0, 0, 0)),
                        [2.86e9, 2.87e9, 2.88e9])
    assert s.meta["mod_depth_hz"] == 300e3


@pytest.mark.property
@given(x=st.floats(1e3, 2e6))
def test_lockin_antisymmetric_about_isolated_line(x):
    m = SpectrumModel(1.0, 0.004, 500e3)
    b = BiasField((2.12e-3, 0, 0))
    nu = resonance_centers(b)[0]
    out = lockin_spectrum(m, b, [nu - x, nu, nu + x]).values
    assert out[0] == pytest.approx(-out[2], rel=1e-6, abs=1e-14)


# ---------------------------------------------------------------- time traces

def test_trace_zero_noise_zero_field():
    v = synth_timetrace(1e3, None, NoiseModel(), 1000.0, 0.1, seed=1)
    assert v.shape == (100,) and np.all(v == 0)


def test_trace_includes_field_signal():
    field = np.full(50, 2e-9)
    v = synth_timetrace(4e3, field, NoiseModel(), 100.0, 0.5, seed=0)
    assert np.allclose(v, 8e-6)


def test_trace_rejects_short_record():
    with pytest.raises(ValueError):
        synth_timetrace(1.0, None, NoiseModel(), 10.0, 0.7)
    with pytest.raises(ValueError):
        synth_timetrace(1.0, None, NoiseModel(), -1.0, 1.0)


def test_trace_white_noise_std():
    d = 5.5e-6
    v = synth_timetrace(0.0, None, NoiseModel(d, ()), 53.57e3, 1.0, seed=3)
    assert np.std(v) == pytest.approx(d * math.sqrt(53.57e3 / 2), rel=0.02)


def test_trace_mains_tone_power():
    fs, n, a = 1000.0, 1000, 3e-6
    v = synth_timetrace(0.0, None, NoiseModel(0.0, ((50.0, a),)), fs, n / fs, seed=0)
    spec = np.abs(np.fft.rfft(v)) ** 2 * 2 / n ** 2
    k = int(np.argmax(spec))
    assert k == 50
    # Parseval on a pure tone: mean-square equals A^2/2, all in one bin
    assert spec[k] == pytest.approx(a ** 2 / 2, rel=1e-9)
    assert np.mean(v ** 2) == pytest.approx(a ** 2 / 2, rel=1e-9)


@pytest.mark.property
@given(seed=st.integers(0, 2 ** 63 - 1))
def test_trace_deterministic(seed):
    noise = NoiseModel(5e-6, ((50.0, 1e-6),), 2e-7)
    a = synth_timetrace(7e3, 1e-10, noise, 2000.0, 0.05, seed=seed)
    b = synth_timetrace(7e3, 1e-10, noise, 2000.0, 0.05, seed=seed)
    assert a.tobytes() == b.tobytes()

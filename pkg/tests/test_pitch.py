import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoclip.audio_io import AudioBuffer
from echoclip.errors import ConfigurationError, DomainError, InsufficientDataError, NoVoicingError
from echoclip.pitch import (
    PitchConfig,
    PitchContour,
    average_f0,
    erb_frequencies,
    erb_spectrum,
    erbs_to_hz,
    estimate_f0_contour,
    hz_to_erbs,
    pitch_range,
    pitch_strength,
)
from echoclip.synth import FS, glide, glide_frequency, sawtooth, tone, utterance, white_noise

CFG = PitchConfig()
FREQS = erb_frequencies(CFG.f_min, FS)


def contour(f0, voiced):
    f0 = np.asarray(f0, float)
    return PitchContour(np.arange(len(f0)) * 0.01, f0, np.ones(len(f0)), np.asarray(voiced, bool))


def middle_spectrum(buf, size=2048):
    x = buf.mono
    mid = len(x) // 2
    return erb_spectrum(x[mid - size // 2 : mid + size // 2], FS, FREQS)[0]


def test_erb_examples():
    assert hz_to_erbs(0) == 0
    oracle = 21.4 * math.log10(1 + 0.00437 * 1000)
    assert hz_to_erbs(1000) == pytest.approx(oracle, abs=1e-12)
    assert hz_to_erbs(1000) == pytest.approx(15.59, abs=0.05)
    grid = np.linspace(0, 22050, 1000)
    assert np.all(np.diff(hz_to_erbs(grid)) > 0)
    with pytest.raises(DomainError):
        hz_to_erbs(-5)


@given(st.floats(0, 22050))
def test_erb_inverse(f):
    assert erbs_to_hz(hz_to_erbs(f)) == pytest.approx(f, rel=1e-9, abs=1e-9)


def test_candidate_grid():
    c = CFG.candidates()
    assert c[0] == 50 and c[-1] == pytest.approx(500)
    steps = np.diff(np.log2(c))
    assert np.allclose(steps[:-1], 1 / 96)
    assert 0 < steps[-1] <= 1 / 96 + 1e-12


def test_config_invariants():
    with pytest.raises(ConfigurationError):
        PitchConfig(f_min=500, f_max=50)
    with pytest.raises(ConfigurationError):
        estimate_f0_contour(tone(200, 0.5, fs=800), PitchConfig())


def test_sawtooth_strength_peaks_at_f0():
    spec = middle_spectrum(sawtooth(200, 0.5))
    cands = CFG.candidates()
    s = np.array([pitch_strength(spec, FREQS, f) for f in cands])
    best = cands[np.argmax(s)]
    assert abs(np.log2(best / 200)) <= 1 / 96 + 1e-9
    assert pitch_strength(spec, FREQS, 400) < pitch_strength(spec, FREQS, 200)
    assert pitch_strength(spec, FREQS, 100) < pitch_strength(spec, FREQS, 200)


def test_strength_range_and_errors():
    spec = middle_spectrum(sawtooth(200, 0.5))
    assert -1 <= pitch_strength(spec, FREQS, 123.0) <= 1
    assert pitch_strength(np.zeros_like(spec), FREQS, 200) == 0
    with pytest.raises(DomainError):
        pitch_strength(spec, FREQS, 40.0)
    with pytest.raises(DomainError):
        pitch_strength(spec, FREQS, 600.0)


def test_white_noise_strength_below_threshold():
    below = []
    for seed in range(5):
        c = estimate_f0_contour(white_noise(1.0, seed=seed), PitchConfig(emit_unvoiced=True))
        below.append(c.strength < CFG.strength_threshold)
    assert np.mean(np.concatenate(below)) >= 0.95


@pytest.mark.parametrize("f", [80, 120, 220, 330, 440])
def test_tone_within_one_percent(f):
    c = estimate_f0_contour(tone(f, 1.0))
    assert c.voiced.mean() > 0.9
    assert np.max(np.abs(c.voiced_f0 / f - 1)) < 0.01


def test_silence_and_short_input():
    c = estimate_f0_contour(AudioBuffer(np.zeros(FS // 2), FS))
    assert not c.voiced.any() and np.all(np.isnan(c.f0_hz))
    with pytest.raises(InsufficientDataError):
        estimate_f0_contour(AudioBuffer(np.zeros(100), FS))


@pytest.mark.parametrize("harmonic", [False, True])
def test_glide_tracking(harmonic):
    buf = glide(100, 300, 2.0, harmonic=harmonic)
    c = estimate_f0_contour(buf)
    truth = glide_frequency(c.frame_times, 100, 300, 2.0)
    v = c.voiced
    assert v.mean() > 0.95
    assert np.max(np.abs(c.f0_hz[v] / truth[v] - 1)) < 0.03
    assert pitch_range(c) == pytest.approx(200, rel=0.05)


def test_average_and_range_examples():
    assert average_f0(contour([100, 110, 120], [1, 1, 1])) == pytest.approx(110)
    # unstable high estimates on a quiet onset are gated out before averaging
    onset = contour([480, 460, 150, 150, 150], [0, 0, 1, 1, 1])
    assert average_f0(onset) == 150
    assert pitch_range(contour([200] * 4, [1] * 4)) == 0
    assert pitch_range(contour([50, 200], [0, 1])) == 0
    with pytest.raises(NoVoicingError):
        average_f0(contour([100], [0]))
    with pytest.raises(NoVoicingError):
        pitch_range(contour([100], [0]))


def test_constant_tone_has_negligible_range():
    c = estimate_f0_contour(tone(200, 1.0))
    assert pitch_range(c) < 0.01 * 200


def test_voicing_rule_and_bounds():
    buf = utterance(130, 2.0, vibrato_hz=3, vibrato_depth=0.1)
    c = estimate_f0_contour(buf, PitchConfig(emit_unvoiced=True))
    assert np.all((c.f0_hz >= CFG.f_min) & (c.f0_hz <= CFG.f_max))
    assert np.all((c.strength >= 0) & (c.strength <= 1))
    gated = estimate_f0_contour(buf)
    np.testing.assert_array_equal(gated.voiced, c.voiced)
    assert np.all(np.isnan(gated.f0_hz[~gated.voiced]))
    assert np.all(c.voiced <= (c.strength >= CFG.strength_threshold))


@pytest.mark.parametrize("g", [0.5, 0.1, 0.9])
def test_gain_invariance(g):
    buf = utterance(170, 2.0, vibrato_hz=2, vibrato_depth=0.05)
    a = estimate_f0_contour(buf, PitchConfig(emit_unvoiced=True))
    b = estimate_f0_contour(buf.scaled(g), PitchConfig(emit_unvoiced=True))
    np.testing.assert_array_equal(a.voiced, b.voiced)
    np.testing.assert_allclose(a.f0_hz, b.f0_hz, rtol=1e-9)


def test_octave_errors_on_sawtooth_corpus():
    gross, total = 0, 0
    for f in (55, 70, 90, 110, 140, 175, 210, 260, 320, 400, 480):
        c = estimate_f0_contour(sawtooth(f, 0.6))
        gross += np.sum(np.abs(c.voiced_f0 / f - 1) > 0.2)
        total += c.voiced.sum()
    assert total > 0 and gross / total < 0.01


def test_plain_swipe_variant():
    c = estimate_f0_contour(sawtooth(150, 0.6), PitchConfig(prime_harmonics=False))
    assert np.max(np.abs(c.voiced_f0 / 150 - 1)) < 0.01


@given(st.floats(60, 450), st.floats(0, 0.1))
@settings(max_examples=8, deadline=None)
def test_voiced_f0_inside_search_range(f0, depth):
    c = estimate_f0_contour(utterance(f0, 0.8, syllables=1, vibrato_hz=4, vibrato_depth=depth))
    v = c.voiced_f0
    assert np.all((v >= CFG.f_min) & (v <= CFG.f_max))


def test_determinism():
    buf = utterance(150, 1.5, noise=0.01)
    a, b = estimate_f0_contour(buf), estimate_f0_contour(buf)
    for name in ("frame_times", "f0_hz", "strength", "voiced"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

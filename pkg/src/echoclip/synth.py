"""Synthetic test signals with known F0 trajectories."""
from __future__ import annotations

import numpy as np

from .audio_io import AudioBuffer

FS = 44100


def times(duration_s: float, fs: int = FS) -> np.ndarray:
    return np.arange(int(round(duration_s * fs))) / fs


def tone(freq_hz: float, duration_s: float, amplitude: float = 0.5, fs: int = FS) -> AudioBuffer:
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq_hz * times(duration_s, fs)), fs)


def harmonic_wave(phase: np.ndarray, n_harmonics: int) -> np.ndarray:
    """Band-limited sawtooth ``sum_k sin(k phase) / k`` on an instantaneous
    phase in radians."""
    return sum(np.sin(k * phase) / k for k in range(1, n_harmonics + 1))


def _n_below(f_top: float, f_highest: float) -> int:
    return max(1, int(f_top // f_highest))


def sawtooth(f0_hz: float, duration_s: float, amplitude: float = 0.5, fs: int = FS, f_top: float = 8000.0) -> AudioBuffer:
    phase = 2 * np.pi * f0_hz * times(duration_s, fs)
    x = harmonic_wave(phase, _n_below(f_top, f0_hz))
    return AudioBuffer(amplitude * x / np.max(np.abs(x)), fs)


def glide_frequency(t, f_start: float, f_end: float, duration_s: float):
    """Instantaneous frequency of a linear glide."""
    return f_start + (f_end - f_start) * np.asarray(t) / duration_s


def glide(
    f_start: float, f_end: float, duration_s: float, amplitude: float = 0.5, fs: int = FS, harmonic: bool = False
) -> AudioBuffer:
    t = times(duration_s, fs)
    rate = (f_end - f_start) / duration_s
    phase = 2 * np.pi * (f_start * t + 0.5 * rate * t * t)
    x = harmonic_wave(phase, _n_below(8000.0, max(f_start, f_end))) if harmonic else np.sin(phase)
    return AudioBuffer(amplitude * x / np.max(np.abs(x)), fs)


def white_noise(duration_s: float, amplitude: float = 0.1, seed: int = 0, fs: int = FS) -> AudioBuffer:
    x = np.random.default_rng(seed).standard_normal(len(times(duration_s, fs)))
    return AudioBuffer(np.clip(amplitude * x, -1, 1), fs)


def utterance(
    f0_hz: float = 150.0,
    duration_s: float = 3.0,
    amplitude: float = 0.3,
    vibrato_hz: float = 0.0,
    vibrato_depth: float = 0.0,
    syllables: int = 3,
    noise: float = 0.0,
    seed: int = 0,
    fs: int = FS,
) -> AudioBuffer:
    """Voiced syllables separated by pauses.

    Each syllable is a band-limited sawtooth under a raised-sine envelope;
    ``vibrato_depth`` is the relative F0 excursion.
    """
    t = times(duration_s, fs)
    f = f0_hz * (1 + vibrato_depth * np.sin(2 * np.pi * vibrato_hz * t))
    phase = 2 * np.pi * np.cumsum(f) / fs
    voiced = harmonic_wave(phase, _n_below(5000.0, f.max()))
    env = np.zeros_like(t)
    slot = duration_s / syllables
    for i in range(syllables):
        a, b = i * slot + 0.15 * slot, (i + 1) * slot - 0.15 * slot
        m = (t >= a) & (t < b)
        env[m] = np.sin(np.pi * (t[m] - a) / (b - a)) ** 0.5
    x = voiced * env
    x = amplitude * x / np.max(np.abs(x))
    if noise:
        x = x + noise * np.random.default_rng(seed).standard_normal(len(t))
    return AudioBuffer(np.clip(x, -1, 1), fs)

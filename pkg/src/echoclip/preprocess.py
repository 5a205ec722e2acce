"""Interruption trimming, STFT analysis/synthesis and spectral subtraction."""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter1d, uniform_filter1d
from scipy.signal import get_window, lfilter

from .audio_io import AudioBuffer
from .errors import AnnotationError, ConfigurationError, DomainError, InsufficientDataError, ShapeError


@dataclass(frozen=True)
class FramingConfig:
    frame_length_ms: float = 25.0
    hop_length_ms: float = 10.0
    window: str = "hanning"

    def __post_init__(self):
        if not 0 < self.hop_length_ms <= self.frame_length_ms:
            raise ConfigurationError("need 0 < hop_length_ms <= frame_length_ms")
        if self.window != "hanning":
            raise ConfigurationError(f"unsupported window {self.window!r}")

    def frame_length(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_length_ms * 1e-3 * sample_rate_hz))

    def hop_length(self, sample_rate_hz: int) -> int:
        return max(1, int(round(self.hop_length_ms * 1e-3 * sample_rate_hz)))

    def fft_size(self, sample_rate_hz: int) -> int:
        n = self.frame_length(sample_rate_hz)
        return 1 << max(0, (n - 1).bit_length())

    def window_array(self, sample_rate_hz: int) -> np.ndarray:
        # periodic Hann: overlap-adds smoothly at any hop
        return get_window("hann", self.frame_length(sample_rate_hz), fftbins=True)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided complex spectra, shape ``(n_frames, fft_size // 2 + 1)``."""

    frames: np.ndarray
    config: FramingConfig
    sample_rate_hz: int
    n_samples: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_length(self) -> int:
        return self.config.frame_length(self.sample_rate_hz)

    @property
    def hop_length(self) -> int:
        return self.config.hop_length(self.sample_rate_hz)

    @property
    def fft_size(self) -> int:
        return self.config.fft_size(self.sample_rate_hz)

    @property
    def window(self) -> np.ndarray:
        return self.config.window_array(self.sample_rate_hz)

    @property
    def frame_times(self) -> np.ndarray:
        """Frame centers in seconds."""
        return frame_times(self.n_frames, self.config, self.sample_rate_hz)

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, 1.0 / self.sample_rate_hz)

    def with_frames(self, frames: np.ndarray) -> "Spectrogram":
        return Spectrogram(frames, self.config, self.sample_rate_hz, self.n_samples)


def frame_times(n_frames: int, config: FramingConfig, sample_rate_hz: int) -> np.ndarray:
    hop = config.hop_length(sample_rate_hz)
    half = config.frame_length(sample_rate_hz) / 2.0
    return (np.arange(n_frames) * hop + half) / sample_rate_hz


def n_frames_for(n_samples: int, config: FramingConfig, sample_rate_hz: int) -> int:
    length = config.frame_length(sample_rate_hz)
    if n_samples < length:
        return 0
    return 1 + (n_samples - length) // config.hop_length(sample_rate_hz)


class NoiseMethod(str, enum.Enum):
    SILENCE_AVERAGE = "silence_average"
    MINIMUM_STATISTICS = "minimum_statistics"


@dataclass(frozen=True, eq=False)
class NoiseProfile:
    magnitude_spectrum: np.ndarray
    method: NoiseMethod

    def __post_init__(self):
        m = np.asarray(self.magnitude_spectrum, dtype=np.float64)
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("noise magnitudes must be finite and non-negative")
        object.__setattr__(self, "magnitude_spectrum", m)


def merge_intervals(intervals) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for start, end in sorted((float(a), float(b)) for a, b in intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(a, b) for a, b in merged]


def trim_segments(buffer: AudioBuffer, remove) -> AudioBuffer:
    """Cut the ``(start_s, end_s)`` intervals out of ``buffer``.

    Overlapping intervals are merged before cutting.
    """
    dur = buffer.duration_s
    for start, end in remove:
        if not 0.0 <= start < end <= dur + 1e-9:
            raise DomainError(f"interval ({start}, {end}) outside 0..{dur:.3f} s or empty")
    if not remove:
        return buffer
    fs = buffer.sample_rate_hz
    keep = np.ones(buffer.n_samples, dtype=bool)
    for start, end in merge_intervals(remove):
        keep[int(round(start * fs)) : int(round(end * fs))] = False
    return AudioBuffer(buffer.samples[:, keep], fs)


def remap_intervals(intervals, removed) -> list[tuple[float, float]]:
    """Express ``intervals`` (original time axis) on the time axis left
    after :func:`trim_segments` has cut ``removed``.

    Parts of an interval that fall inside a removed span disappear.
    """
    cuts = merge_intervals(removed)

    def shift(t):
        return t - sum(min(b, t) - a for a, b in cuts if a < t)

    out = []
    for a, b in merge_intervals(intervals):
        lo, hi = shift(a), shift(b)
        if hi > lo:
            out.append((lo, hi))
    return out


def text_lines(path):
    """Non-empty lines of a text file with ``#`` comments stripped, numbered from 1."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except UnicodeDecodeError:
        raise AnnotationError(f"{path}: not a text file") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_annotations(path: str | os.PathLike) -> list[tuple[float, float]]:
    """Parse ``start_s end_s`` pairs, one per line; ``#`` starts a comment."""
    out = []
    for lineno, line in text_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise AnnotationError(f"{path}:{lineno}: expected 'start_s end_s'")
        try:
            out.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    return out


def stft(buffer: AudioBuffer, config: FramingConfig = FramingConfig()) -> Spectrogram:
    """Hann-windowed, zero-padded FFT of every full frame of a mono buffer."""
    x = buffer.mono
    fs = buffer.sample_rate_hz
    length, hop, nfft = config.frame_length(fs), config.hop_length(fs), config.fft_size(fs)
    n = n_frames_for(len(x), config, fs)
    if n == 0:
        raise InsufficientDataError(f"{len(x)} samples is shorter than one {length}-sample frame")
    idx = np.arange(length)[np.newaxis, :] + hop * np.arange(n)[:, np.newaxis]
    segments = x[idx] * config.window_array(fs)
    return Spectrogram(np.fft.rfft(segments, n=nfft, axis=1), config, fs, len(x))


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add resynthesis.

    Each inverse frame is multiplied by the analysis window again and the
    sum is divided by the overlapped squared window. Where that envelope
    drops below a tenth of its peak (the outer edges of the first and last
    frame) the divisor is held at that level, so edges taper instead of
    blowing up.
    """
    length, hop = spec.frame_length, spec.hop_length
    w = spec.window
    frames = np.fft.irfft(spec.frames, n=spec.fft_size, axis=1)[:, :length] * w
    total = max(spec.n_samples, (spec.n_frames - 1) * hop + length)
    y = np.zeros(total)
    wss = np.zeros(total)
    w2 = w * w
    for i in range(spec.n_frames):
        y[i * hop : i * hop + length] += frames[i]
        wss[i * hop : i * hop + length] += w2
    if spec.n_frames:
        wss = np.maximum(wss, 0.1 * wss.max())
        y /= wss
    return AudioBuffer(np.clip(y[: spec.n_samples], -1.0, 1.0), spec.sample_rate_hz)


@dataclass(frozen=True)
class NoiseConfig:
    """Minimum-statistics tracker settings."""

    window_s: float = 0.8
    bias: float = 1.5
    smoothing: float = 0.8
    min_duration_s: float = 1.0


def estimate_noise(
    spec: Spectrogram, silence_frames=None, config: NoiseConfig = NoiseConfig()
) -> NoiseProfile:
    """Per-bin noise magnitude.

    With ``silence_frames`` the magnitudes of those frames are averaged and
    smoothed over 3 neighbouring bins. Without them the noise power is
    tracked as the running minimum of the recursively smoothed power over a
    sliding ``window_s`` window, scaled by ``bias`` and reduced to its median
    over time.
    The window is centred on each frame since the whole recording is at hand.
    """
    mag = np.abs(spec.frames)
    if silence_frames is not None:
        idx = np.asarray(list(silence_frames), dtype=int)
        if idx.size == 0:
            raise ConfigurationError("silence_average needs at least one silence frame")
        if idx.min() < 0 or idx.max() >= spec.n_frames:
            raise ConfigurationError(f"silence frame index outside 0..{spec.n_frames - 1}")
        profile = uniform_filter1d(mag[idx].mean(axis=0), size=3, mode="nearest")
        return NoiseProfile(profile, NoiseMethod.SILENCE_AVERAGE)

    if spec.n_samples / spec.sample_rate_hz < config.min_duration_s:
        raise InsufficientDataError(
            f"minimum statistics needs >= {config.min_duration_s} s of audio"
        )
    a = config.smoothing
    power = mag * mag
    # first-order recursive smoothing along time, started at the first frame
    smoothed, _ = lfilter([1 - a], [1, -a], power, axis=0, zi=a * power[:1])
    frames_per_window = max(1, int(round(config.window_s * 1e3 / spec.config.hop_length_ms)))
    tracked = minimum_filter1d(smoothed, size=frames_per_window, axis=0, mode="nearest")
    # median, not mean: windows still holding a decaying syllable are outliers
    noise_power = config.bias * np.median(tracked, axis=0)
    return NoiseProfile(np.sqrt(noise_power), NoiseMethod.MINIMUM_STATISTICS)


def silence_frames_from_intervals(spec: Spectrogram, intervals) -> list[int]:
    """Indices of frames lying entirely inside one of ``intervals``."""
    fs = spec.sample_rate_hz
    starts = np.arange(spec.n_frames) * spec.hop_length / fs
    ends = starts + spec.frame_length / fs
    hits = np.zeros(spec.n_frames, dtype=bool)
    for a, b in merge_intervals(intervals):
        hits |= (starts >= a) & (ends <= b)
    return np.flatnonzero(hits).tolist()


def spectral_subtract(
    spec: Spectrogram, noise: NoiseProfile, oversubtraction: float = 2.0, floor: float = 0.01
) -> Spectrogram:
    """Magnitude subtraction keeping the noisy phase.

    ``|Y| = max(|X| - oversubtraction * |N|, floor * |N|)``.
    """
    n = noise.magnitude_spectrum
    if n.shape != (spec.frames.shape[1],):
        raise ShapeError(f"noise profile has {n.shape} bins, spectrogram {spec.frames.shape[1]}")
    if oversubtraction < 1 or not 0 <= floor < 1:
        raise ConfigurationError("need oversubtraction >= 1 and 0 <= floor < 1")
    mag = np.abs(spec.frames)
    enhanced = np.maximum(mag - oversubtraction * n, floor * n)
    gain = np.divide(enhanced, mag, out=np.zeros_like(mag), where=mag > 0)
    out = spec.frames * gain
    # zero-magnitude bins have no phase to keep; use the floor as a real value
    dead = mag == 0
    out[dead] = enhanced[dead]
    return spec.with_frames(out)


@dataclass(frozen=True)
class DenoiseConfig:
    """Which noise estimate to use and how hard to subtract.

    ``method`` is one of ``auto``, ``silence_average``,
    ``minimum_statistics`` or ``none``. ``auto`` uses silence annotations
    when present, otherwise minimum statistics (skipped for recordings
    shorter than the tracker's minimum duration).
    """

    method: str = "auto"
    oversubtraction: float = 2.0
    floor: float = 0.01
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.method not in ("auto", "silence_average", "minimum_statistics", "none"):
            raise ConfigurationError(f"unknown denoise method {self.method!r}")


def denoise(
    buffer: AudioBuffer,
    framing: FramingConfig = FramingConfig(),
    config: DenoiseConfig = DenoiseConfig(),
    silence=None,
) -> AudioBuffer:
    """STFT, noise estimate, spectral subtraction and resynthesis in one call.

    ``silence`` is an optional list of ``(start_s, end_s)`` noise-only intervals.
    """
    method = config.method
    if method == "none":
        return buffer
    if method == "auto":
        if silence:
            method = "silence_average"
        elif buffer.duration_s >= config.noise.min_duration_s:
            method = "minimum_statistics"
        else:
            return buffer
    spec = stft(buffer, framing)
    if method == "silence_average":
        if not silence:
            raise ConfigurationError("silence_average needs silence intervals")
        profile = estimate_noise(spec, silence_frames_from_intervals(spec, silence))
    else:
        profile = estimate_noise(spec, None, config.noise)
    return istft(spectral_subtract(spec, profile, config.oversubtraction, config.floor))

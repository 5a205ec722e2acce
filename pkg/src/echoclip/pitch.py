"""Sawtooth-inspired F0 estimation on an ERB-sampled spectrum.

Pitch strength of a candidate is the normalized inner product of the
square-root magnitude spectrum (sampled uniformly on the ERB-rate scale)
with a kernel that has positive cosine lobes at the candidate's harmonics
and negative lobes half-way between them, weighted by ``1/sqrt(k)``. By
default only the first and prime harmonics are used, which suppresses
subharmonic (octave-down) errors.

Each candidate is analysed with Hann windows spanning a fixed number of its
periods. Power-of-two window sizes are used and the strength of a candidate
is interpolated between the two windows closest to its ideal size.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .audio_io import AudioBuffer
from .errors import ConfigurationError, DomainError, InsufficientDataError, NoVoicingError
from .preprocess import FramingConfig, frame_times, n_frames_for

ERB_STEP = 0.1
_BLOCK = 64


@dataclass(frozen=True)
class PitchConfig:
    f_min: float = 50.0
    f_max: float = 500.0
    candidate_resolution: float = 1.0 / 96.0
    strength_threshold: float = 0.30
    rms_floor: float = 0.01
    cycles_per_window: float = 8.0
    prime_harmonics: bool = True
    emit_unvoiced: bool = False

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ConfigurationError("need 0 < f_min < f_max")
        if self.candidate_resolution <= 0 or self.cycles_per_window <= 0:
            raise ConfigurationError("resolution and cycles must be positive")

    def candidates(self) -> np.ndarray:
        """Log-spaced candidate grid from f_min up to and including f_max."""
        n = int(np.ceil(np.log2(self.f_max / self.f_min) / self.candidate_resolution - 1e-9))
        return self.f_min * 2.0 ** (np.arange(n + 1) * self.candidate_resolution).clip(
            max=np.log2(self.f_max / self.f_min)
        )


@dataclass(frozen=True, eq=False)
class PitchContour:
    frame_times: np.ndarray
    f0_hz: np.ndarray
    strength: np.ndarray
    voiced: np.ndarray

    def __len__(self):
        return len(self.frame_times)

    @property
    def voiced_f0(self) -> np.ndarray:
        return self.f0_hz[self.voiced]


def hz_to_erbs(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("frequency must be non-negative")
    out = 21.4 * np.log10(1.0 + 0.00437 * f)
    return out if out.ndim else float(out)


def erbs_to_hz(e):
    out = (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437
    return out if out.ndim else float(out)


def erb_frequencies(f_min: float, sample_rate_hz: int) -> np.ndarray:
    """Uniform ERB-rate sampling from a quarter of ``f_min`` up to Nyquist."""
    return erbs_to_hz(np.arange(hz_to_erbs(f_min / 4.0), hz_to_erbs(sample_rate_hz / 2.0), ERB_STEP))


@lru_cache(maxsize=None)
def _primes_upto(n: int) -> tuple[int, ...]:
    if n < 2:
        return ()
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(n**0.5) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return tuple(np.flatnonzero(sieve).tolist())


def harmonic_kernel(freqs: np.ndarray, candidate_f0: float, prime_harmonics: bool = True) -> np.ndarray:
    """Unit-norm kernel for one candidate sampled at ``freqs``."""
    q = freqs / candidate_f0
    n = int(np.floor(freqs[-1] / candidate_f0 - 0.75))
    if prime_harmonics:
        harmonics = (1,) + _primes_upto(n)
    else:
        harmonics = tuple(range(1, n + 1))
    k = np.zeros_like(freqs)
    for h in harmonics:
        a = np.abs(q - h)
        weight = 1.0 / np.sqrt(h)
        peak = a < 0.25
        k[peak] = weight * np.cos(2 * np.pi * q[peak])
        valley = (a > 0.25) & (a < 0.75)
        k[valley] += weight * np.cos(2 * np.pi * q[valley]) / 2.0
    norm = np.linalg.norm(k)
    return k / norm if norm > 0 else k


def pitch_strength(spectrum_sqrt_mag, freqs, candidate_f0: float, config: PitchConfig = PitchConfig()) -> float:
    """Strength in [-1, 1] of ``candidate_f0`` for one ERB-sampled
    square-root magnitude spectrum."""
    if not config.f_min <= candidate_f0 <= config.f_max:
        raise DomainError(f"candidate {candidate_f0} Hz outside [{config.f_min}, {config.f_max}]")
    x = np.asarray(spectrum_sqrt_mag, dtype=np.float64)
    norm = np.linalg.norm(x)
    if norm == 0:
        return 0.0
    k = harmonic_kernel(np.asarray(freqs, dtype=np.float64), candidate_f0, config.prime_harmonics)
    return float(k @ x / norm)


@lru_cache(maxsize=8)
def _plan(config: PitchConfig, sample_rate_hz: int):
    cands = config.candidates()
    fs = sample_rate_hz
    ideal = config.cycles_per_window * fs
    log_ws = np.round(np.log2(ideal / np.array([config.f_min, config.f_max]))).astype(int)
    window_sizes = 2 ** np.arange(log_ws[0], log_ws[1] - 1, -1)
    # fractional window index of each candidate: 0 is the largest window
    d = np.log2(cands) - np.log2(ideal / window_sizes[0])
    weights = np.clip(1.0 - np.abs(d[np.newaxis, :] - np.arange(len(window_sizes))[:, np.newaxis]), 0.0, 1.0)
    weights[0, d <= 0] = 1.0
    weights[-1, d >= len(window_sizes) - 1] = 1.0
    freqs = erb_frequencies(config.f_min, fs)
    kernels = np.stack([harmonic_kernel(freqs, f, config.prime_harmonics) for f in cands])
    return cands, window_sizes, weights, freqs, kernels


def erb_spectrum(segments: np.ndarray, sample_rate_hz: int, freqs: np.ndarray) -> np.ndarray:
    """Square-root magnitude spectrum of Hann-windowed ``segments`` (last
    axis is time), linearly interpolated at ``freqs``."""
    segments = np.atleast_2d(segments)
    ws = segments.shape[-1]
    nfft = 4 * ws
    w = get_window("hann", ws, fftbins=False)
    fft_freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz)
    mag = np.abs(np.fft.rfft(segments * w, n=nfft, axis=-1))
    spec = np.stack([np.interp(freqs, fft_freqs, m) for m in mag])
    return np.sqrt(np.maximum(spec, 0.0))


def _window_starts(centers: np.ndarray, ws: int, n: int) -> np.ndarray:
    """Start index of the window around each centre, moved inward at the
    ends of the signal when the signal is long enough to hold it. A window
    hanging over the edge sees a truncated tone whose widened spectral
    lobe biases the estimate."""
    start = centers - ws // 2
    if n < ws:
        return start
    return np.clip(start, 0, n - ws)


def _window_strengths(x: np.ndarray, centers: np.ndarray, sample_rate_hz: int, config: PitchConfig) -> np.ndarray:
    """Strength of every candidate at every centre, separately for each
    analysis window: shape ``(n_windows, n_candidates, n_centers)``.

    Entries for candidates that do not use a window are zero.
    """
    cands, window_sizes, weights, freqs, kernels = _plan(config, sample_rate_hz)
    out = np.zeros((len(window_sizes), len(cands), len(centers)))
    for wi, ws in enumerate(window_sizes):
        use = weights[wi] > 0
        if not np.any(use):
            continue
        ws = int(ws)
        starts = _window_starts(centers, ws, len(x))
        xp = np.concatenate([np.zeros(ws), x, np.zeros(ws)])
        loud = erb_spectrum(xp[ws + starts[:, np.newaxis] + np.arange(ws)[np.newaxis, :]], sample_rate_hz, freqs)
        norms = np.linalg.norm(loud, axis=1, keepdims=True)
        loud = np.divide(loud, norms, out=np.zeros_like(loud), where=norms > 0)
        out[wi, use] = kernels[use] @ loud.T
    return out


def strength_matrix(x: np.ndarray, centers: np.ndarray, sample_rate_hz: int, config: PitchConfig) -> np.ndarray:
    """Pitch strength of every candidate (rows) at every sample index in
    ``centers`` (columns), blended across windows."""
    weights = _plan(config, sample_rate_hz)[2]
    S = np.zeros((len(weights[0]), len(centers)))
    for b in range(0, len(centers), _BLOCK):
        per_window = _window_strengths(x, centers[b : b + _BLOCK], sample_rate_hz, config)
        S[:, b : b + _BLOCK] = np.einsum("wc,wcn->cn", weights, per_window)
    return S


def _parabola(y0, y1, y2):
    """Vertex offset (in steps, clipped to +-1) and height of the parabola
    through three equally spaced points."""
    denom = y0 - 2 * y1 + y2
    safe = denom < 0
    delta = np.where(safe, 0.5 * (y0 - y2) / np.where(safe, denom, 1.0), 0.0)
    delta = np.clip(delta, -1.0, 1.0)
    return delta, y1 - 0.25 * (y0 - y2) * delta


def _pick(
    per_window: np.ndarray, weights: np.ndarray, cands: np.ndarray, fits: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame F0 and strength.

    The peak candidate is the argmax of the window-blended strength. Its
    position is refined on the strength curve of the window that dominates
    at the peak, because the blending weights themselves vary with the
    candidate and would otherwise skew the interpolated maximum.
    """
    S = np.einsum("wc,wcn->cn", weights, per_window)
    n = S.shape[1]
    cols = np.arange(n)
    i = np.argmax(S, axis=0)
    strength = S[i, cols]
    log_c = np.log2(cands)
    f0 = cands[i].copy()
    inner = (i > 0) & (i < len(cands) - 1)
    c = cols[inner]
    if c.size:
        ii = i[c]
        used = weights[:, ii] > 0
        ok = used & fits[:, c]
        last_used = used.shape[0] - 1 - np.argmax(used[::-1], axis=0)
        dom = np.where(ok.any(axis=0), np.argmax(ok, axis=0), last_used)
        y0, y1, y2 = per_window[dom, ii - 1, c], per_window[dom, ii, c], per_window[dom, ii + 1, c]
        delta, _ = _parabola(y0, y1, y2)
        step = np.where(delta >= 0, log_c[ii + 1] - log_c[ii], log_c[ii] - log_c[ii - 1])
        f0[c] = 2.0 ** (log_c[ii] + delta * step)
        _, strength[c] = _parabola(S[ii - 1, c], S[ii, c], S[ii + 1, c])
    return np.clip(f0, cands[0], cands[-1]), strength


def frame_rms(x: np.ndarray, centers: np.ndarray, length: int) -> np.ndarray:
    half = length // 2
    xp = np.concatenate([np.zeros(half), x, np.zeros(length)])
    c2 = np.concatenate([[0.0], np.cumsum(xp * xp)])
    return np.sqrt(np.maximum(c2[centers + length] - c2[centers], 0.0) / length)


def estimate_f0_contour(
    buffer: AudioBuffer, config: PitchConfig = PitchConfig(), framing: FramingConfig = FramingConfig()
) -> PitchContour:
    """F0 contour on the frame grid of ``framing`` (same times as the STFT)."""
    x = buffer.mono
    fs = buffer.sample_rate_hz
    if config.f_max >= fs / 2:
        raise ConfigurationError("f_max must lie below Nyquist")
    n = n_frames_for(len(x), framing, fs)
    if n == 0:
        raise InsufficientDataError("buffer shorter than one analysis frame")
    times = frame_times(n, framing, fs)
    centers = np.round(times * fs).astype(int)
    cands, window_sizes, weights, _, _ = _plan(config, fs)
    half = window_sizes // 2
    f0 = np.empty(n)
    strength = np.empty(n)
    for b in range(0, n, _BLOCK):
        per_window = _window_strengths(x, centers[b : b + _BLOCK], fs, config)
        c = centers[b : b + _BLOCK]
        fits = (c[np.newaxis, :] - half[:, np.newaxis] >= 0) & (c[np.newaxis, :] + half[:, np.newaxis] <= len(x))
        f0[b : b + _BLOCK], strength[b : b + _BLOCK] = _pick(per_window, weights, cands, fits)
    strength = np.clip(strength, 0.0, 1.0)
    rms = frame_rms(x, centers, framing.frame_length(fs))
    top = rms.max()
    voiced = (strength >= config.strength_threshold) & (top > 0) & (rms >= config.rms_floor * top)
    if not config.emit_unvoiced:
        f0 = np.where(voiced, f0, np.nan)
    return PitchContour(times, f0, strength, voiced)


def average_f0(contour: PitchContour) -> float:
    v = contour.voiced_f0
    if v.size == 0:
        raise NoVoicingError("contour has no voiced frames")
    return float(np.mean(v))


def pitch_range(contour: PitchContour) -> float:
    v = contour.voiced_f0
    if v.size == 0:
        raise NoVoicingError("contour has no voiced frames")
    return float(np.max(v) - np.min(v))

"""Time-varying loudness after Zwicker on a Bark grid built from STFT frames.

The front end replaces the third-octave filter bank of DIN 45631 with FFT
bin powers collected into 0.1-Bark cells. Each cell excites its own
critical band (1 Bark wide) and spreads to neighbouring bands with a fixed
lower slope and a level-dependent upper slope. Specific loudness follows
Zwicker's power law relative to the threshold in quiet, and is summed over
the grid with ``dz = 0.1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .errors import DomainError, EmptySignalError
from .preprocess import FramingConfig, Spectrogram, stft

DZ = 0.1
BARK_GRID = np.round(np.arange(241) * DZ, 10)

# Core critical bands of the DIN 45631 / ISO 532-1 procedure: upper band
# edges (Bark), threshold-in-quiet excitation level LTQ (dB) and free-field
# outer-ear transmission a0 (dB) for each band.
_BAND_UPPER = np.array(
    [0.9, 1.8, 2.8, 3.5, 4.4, 5.4, 6.6, 7.9, 9.2, 10.6,
     12.3, 13.8, 15.2, 16.7, 18.1, 19.3, 20.6, 21.8, 22.7, 23.6]
)
_LTQ = np.array([30, 18, 12, 8, 7, 6, 5, 4, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3], dtype=float)
_A0 = np.array(
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -0.5, -1.6, -3.2, -5.4, -5.6, -4.0, -1.5, 2.0, 5.0, 12.0]
)

LOWER_SLOPE_DB_PER_BARK = 27.0
LEVEL_FLOOR_DB = -100.0


def _band_index(z: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(_BAND_UPPER, z, side="left"), len(_BAND_UPPER) - 1)


THRESHOLD_IN_QUIET_DB = _LTQ[_band_index(BARK_GRID)]
OUTER_EAR_DB = _A0[_band_index(BARK_GRID)]


@dataclass(frozen=True)
class CalibrationSpec:
    """Maps digital level to sound pressure level.

    A full-scale sine (amplitude 1.0) is taken to be ``dbfs_to_dbspl_offset``
    dB SPL.
    """

    dbfs_to_dbspl_offset: float = 94.0

    def __post_init__(self):
        if not math.isfinite(self.dbfs_to_dbspl_offset):
            raise ValueError("calibration offset must be finite")

    def spl_of_power(self, mean_square):
        """dB SPL of a signal with the given mean square."""
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(np.asarray(mean_square) / 0.5) + self.dbfs_to_dbspl_offset

    def amplitude_for_spl(self, spl_db: float) -> float:
        """Peak amplitude of a sine at ``spl_db``."""
        return 10.0 ** ((spl_db - self.dbfs_to_dbspl_offset) / 20.0)


@dataclass(frozen=True, eq=False)
class SpecificLoudnessDistribution:
    bark_bins: np.ndarray
    n_prime: np.ndarray


@dataclass(frozen=True, eq=False)
class LoudnessContour:
    frame_times: np.ndarray
    loudness_sone: np.ndarray
    level_phon: np.ndarray

    def __len__(self):
        return len(self.frame_times)


@dataclass(frozen=True)
class LoudnessConfig:
    calibration: CalibrationSpec = CalibrationSpec()
    time_constant_s: float = 0.05
    floor_sone: float = 0.02


def hz_to_bark(f):
    """Critical-band rate ``13 atan(0.00076 f) + 3.5 atan((f / 7500)^2)``."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("frequency must be non-negative")
    z = 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)
    return z if z.ndim else float(z)


_HZ_GRID = np.linspace(0.0, 24000.0, 48001)
_BARK_OF_GRID = 13.0 * np.arctan(0.00076 * _HZ_GRID) + 3.5 * np.arctan((_HZ_GRID / 7500.0) ** 2)


def bark_to_hz(z):
    """Numerical inverse of :func:`hz_to_bark` on 0..24 Bark."""
    return np.interp(z, _BARK_OF_GRID, _HZ_GRID)


def bin_powers(frames: np.ndarray, window: np.ndarray) -> np.ndarray:
    """One-sided per-bin power such that the bins of a frame sum to the
    window-weighted mean square of its samples."""
    nfft = 2 * (frames.shape[-1] - 1)
    p = np.abs(frames) ** 2 / (nfft * np.sum(window**2) / 2.0)
    p[..., 0] /= 2.0
    if nfft % 2 == 0:
        p[..., -1] /= 2.0
    return p


def _cell_map(sample_rate_hz: int, nfft: int) -> tuple[np.ndarray, np.ndarray]:
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz)
    cell = np.round(hz_to_bark(f) / DZ).astype(int)
    return cell, cell < len(BARK_GRID)


def cell_powers(powers: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Collect bin powers into the 241 cells of the 0.1-Bark grid."""
    powers = np.atleast_2d(powers)
    nfft = 2 * (powers.shape[-1] - 1)
    cell, ok = _cell_map(sample_rate_hz, nfft)
    out = np.zeros((powers.shape[0], len(BARK_GRID)))
    for i in range(powers.shape[0]):
        out[i] = np.bincount(cell[ok], weights=powers[i, ok], minlength=len(BARK_GRID))
    return out


def _spreading_db(band_level_db: np.ndarray) -> np.ndarray:
    """Attenuation (dB) from each source cell (columns) to each grid cell
    (rows) for one frame; the upper slope flattens with level."""
    dz = _GRID_DIFF
    upper = _UPPER_SLOPE_BASE - 0.2 * np.maximum(band_level_db, 0.0)
    upper = np.maximum(upper, 5.0)
    att = np.zeros_like(dz)
    below = dz < -0.5
    above = dz > 0.5
    att[below] = LOWER_SLOPE_DB_PER_BARK * (-dz[below] - 0.5)
    att[above] = (np.broadcast_to(upper, dz.shape)[above]) * (dz[above] - 0.5)
    return att


_GRID_DIFF = BARK_GRID[:, np.newaxis] - BARK_GRID[np.newaxis, :]
_UPPER_SLOPE_BASE = 24.0 + 230.0 / np.maximum(bark_to_hz(BARK_GRID), 20.0)


def excitation_from_cells(cells_spl_power: np.ndarray) -> np.ndarray:
    """Excitation level (dB) on the Bark grid from calibrated cell intensities.

    ``cells_spl_power`` holds ``10**(L/10)`` for each cell's SPL ``L``.
    """
    p = cells_spl_power * 10.0 ** (-OUTER_EAR_DB / 10.0)
    # level of the critical band centred on each source cell drives its slope
    band = np.convolve(p, np.ones(11), mode="same")
    with np.errstate(divide="ignore"):
        band_db = 10.0 * np.log10(band)
    att = _spreading_db(np.where(np.isfinite(band_db), band_db, LEVEL_FLOOR_DB))
    e = (10.0 ** (-att / 10.0)) @ p
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(e)
    return np.maximum(level, LEVEL_FLOOR_DB)


def excitation_pattern(
    spec_frame: np.ndarray,
    sample_rate_hz: int,
    window: np.ndarray,
    calibration: CalibrationSpec = CalibrationSpec(),
) -> np.ndarray:
    """Excitation level L_E(z) in dB on the 241-point Bark grid for one
    one-sided STFT frame analysed with ``window``."""
    cells = cell_powers(bin_powers(np.asarray(spec_frame)[np.newaxis, :], window), sample_rate_hz)[0]
    return excitation_from_cells(_to_intensity(cells, calibration))


def _to_intensity(cells: np.ndarray, calibration: CalibrationSpec) -> np.ndarray:
    # mean square -> 10**(SPL/10)
    return cells / 0.5 * 10.0 ** (calibration.dbfs_to_dbspl_offset / 10.0)


def specific_loudness(excitation_db, threshold_db=THRESHOLD_IN_QUIET_DB) -> SpecificLoudnessDistribution:
    """``N' = 0.08 (E_TQ/E0)^0.23 [(0.5 + 0.5 E/E_TQ)^0.23 - 1]``, zero below
    the threshold in quiet."""
    e = np.asarray(excitation_db, dtype=np.float64)
    tq = np.asarray(threshold_db, dtype=np.float64)
    ratio = 10.0 ** ((e - tq) / 10.0)
    n = 0.08 * 10.0 ** (0.023 * tq) * ((0.5 + 0.5 * ratio) ** 0.23 - 1.0)
    n = np.where(e > tq, np.maximum(n, 0.0), 0.0)
    return SpecificLoudnessDistribution(BARK_GRID, n)


def total_loudness(dist: SpecificLoudnessDistribution) -> float:
    """Rectangle-rule integral of N' over [0, 24] Bark.

    The 241 grid points bound 240 cells of width ``dz``; each cell takes the
    value at its lower edge, so the point at 24 Bark closes the interval
    without adding a cell of its own.
    """
    return float(np.sum(np.asarray(dist.n_prime)[..., :-1], axis=-1) * DZ)


def sone_to_phon(n):
    n = np.asarray(n, dtype=np.float64)
    if np.any(n < 0):
        raise DomainError("loudness must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(n >= 1.0, 40.0 + 10.0 * np.log2(np.where(n > 0, n, 1.0)), 40.0 * (n + 0.0005) ** 0.35)
    out = np.where(n > 0, out, np.nan)
    return out if out.ndim else float(out)


def phon_to_sone(level):
    level = np.asarray(level, dtype=np.float64)
    out = np.where(level >= 40.0, 2.0 ** ((level - 40.0) / 10.0), (level / 40.0) ** (1 / 0.35) - 0.0005)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def loudness_of_spectrogram(spec: Spectrogram, calibration: CalibrationSpec = CalibrationSpec()) -> np.ndarray:
    """Instantaneous total loudness (sone) of every frame, no temporal smoothing."""
    powers = bin_powers(spec.frames, spec.window)
    cells = _to_intensity(cell_powers(powers, spec.sample_rate_hz), calibration)
    out = np.zeros(spec.n_frames)
    for i in range(spec.n_frames):
        out[i] = total_loudness(specific_loudness(excitation_from_cells(cells[i])))
    return out


def temporal_integration(loudness: np.ndarray, hop_s: float, time_constant_s: float) -> np.ndarray:
    """First-order low-pass along frames, started at the first frame's value."""
    if time_constant_s <= 0 or len(loudness) == 0:
        return np.asarray(loudness, dtype=np.float64).copy()
    a = math.exp(-hop_s / time_constant_s)
    out = np.empty(len(loudness))
    y = float(loudness[0])
    for i, v in enumerate(loudness):
        y = a * y + (1.0 - a) * v
        out[i] = y
    return out


def loudness_contour(
    buffer: AudioBuffer,
    config: FramingConfig = FramingConfig(),
    calibration: CalibrationSpec = CalibrationSpec(),
    time_constant_s: float = 0.05,
) -> LoudnessContour:
    spec = stft(buffer, config)
    raw = loudness_of_spectrogram(spec, calibration)
    hop_s = spec.hop_length / spec.sample_rate_hz
    n = temporal_integration(raw, hop_s, time_constant_s)
    n = np.maximum(n, 0.0)
    return LoudnessContour(spec.frame_times, n, sone_to_phon(n))


def average_loudness_level(contour: LoudnessContour, floor_sone: float = 0.02) -> float:
    """Mean phon over frames louder than ``floor_sone``."""
    mask = contour.loudness_sone > floor_sone
    if not np.any(mask):
        raise EmptySignalError(f"no frame exceeds {floor_sone} sone")
    return float(np.mean(contour.level_phon[mask]))

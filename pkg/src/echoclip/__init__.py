"""Speech quality metrics (loudness level, F0) for smartwatch recordings."""
from .audio_io import AudioBuffer, WavMetadata, read_wav, to_mono, write_wav
from .loudness import CalibrationSpec, LoudnessConfig, average_loudness_level, loudness_contour
from .pitch import PitchConfig, average_f0, estimate_f0_contour, pitch_range
from .preprocess import DenoiseConfig, FramingConfig, denoise, istft, stft, trim_segments
from .sqm_report import (
    DeviationReport,
    PipelineConfig,
    SqmRecord,
    Source,
    compare_recordings,
    compute_sqms,
    emit_report,
    percent_deviation,
    read_report,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "CalibrationSpec",
    "DenoiseConfig",
    "DeviationReport",
    "FramingConfig",
    "LoudnessConfig",
    "PipelineConfig",
    "PitchConfig",
    "SqmRecord",
    "Source",
    "WavMetadata",
    "average_f0",
    "average_loudness_level",
    "compare_recordings",
    "compute_sqms",
    "denoise",
    "emit_report",
    "estimate_f0_contour",
    "istft",
    "loudness_contour",
    "percent_deviation",
    "pitch_range",
    "read_report",
    "read_wav",
    "stft",
    "to_mono",
    "trim_segments",
    "write_wav",
]

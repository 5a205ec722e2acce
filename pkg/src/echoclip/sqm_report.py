"""Per-recording speech quality metrics and baseline/smartwatch comparison.

A record holds the average loudness level (phon), the average F0 and the
pitch range of one recording, together with a digest of every setting that
produced it. Two records of the same participant and task, one from the
baseline microphone (BL) and one from the smartwatch (SW), are compared by
percent deviation with the baseline as reference.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .audio_io import AudioBuffer
from .errors import (
    ConfigurationError,
    DataError,
    PairingError,
    PipelineError,
    PreconditionError,
    UndefinedReferenceError,
)
from .loudness import CalibrationSpec, LoudnessConfig, average_loudness_level, loudness_contour
from .pitch import PitchConfig, average_f0, estimate_f0_contour, pitch_range
from .preprocess import DenoiseConfig, FramingConfig, denoise, remap_intervals, text_lines, trim_segments


class Source(str, enum.Enum):
    BL = "BL"
    SW = "SW"


class Metric(str, enum.Enum):
    LOUDNESS_LEVEL = "loudness_level"
    F0 = "f0"


@dataclass(frozen=True)
class PipelineConfig:
    """Every setting that influences a record."""

    framing: FramingConfig = field(default_factory=FramingConfig)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    loudness: LoudnessConfig = field(default_factory=LoudnessConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)

    def as_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the settings."""
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """Copy with dotted-key overrides, e.g. ``{"pitch.f_min": "60"}``.

        String values are converted to the type of the field they replace.
        """
        out = self
        for key, value in overrides.items():
            out = _replace_path(out, key.split("."), value, key)
        return out


def _coerce(old, value, key):
    if not isinstance(value, str):
        return value
    try:
        if isinstance(old, bool):
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if isinstance(old, int):
            return int(value)
        if isinstance(old, float):
            return float(value)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot read {value!r} as {type(old).__name__}") from None
    return value.strip()


def _replace_path(obj, path, value, key):
    if not dataclasses.is_dataclass(obj):
        raise ConfigurationError(f"unknown setting {key!r}")
    names = {f.name for f in dataclasses.fields(obj)}
    if path[0] not in names:
        raise ConfigurationError(f"unknown setting {key!r}")
    old = getattr(obj, path[0])
    if len(path) == 1:
        if dataclasses.is_dataclass(old):
            raise ConfigurationError(f"{key!r} names a group, not a setting")
        new = _coerce(old, value, key)
    else:
        new = _replace_path(old, path[1:], value, key)
    try:
        return dataclasses.replace(obj, **{path[0]: new})
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: {exc}") from None


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """``key = value`` lines (``:`` also accepted); ``#`` starts a comment."""
    out = {}
    for lineno, line in text_lines(path):
        sep = "=" if "=" in line else ":"
        key, eq, value = line.partition(sep)
        if not eq or not key.strip():
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class SqmRecord:
    participant_id: str
    task_id: str
    source: Source
    avg_loudness_phon: float
    avg_f0_hz: float
    pitch_range_hz: float
    config_digest: str
    calibration_offset_db: float

    def __post_init__(self):
        object.__setattr__(self, "source", Source(self.source))
        if not self.config_digest:
            raise ValueError("config_digest must be present")

    def labels(self) -> str:
        return f"{self.participant_id}-{self.task_id}-{self.source.value}"


@dataclass(frozen=True)
class DeviationReport:
    participant_id: str
    task_id: str
    metric: Metric
    bl_value: float
    sw_value: float
    percent_deviation: float

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))


RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(SqmRecord))
DEVIATION_FIELDS = tuple(f.name for f in dataclasses.fields(DeviationReport))


def _relabel(exc: PipelineError, label: str) -> PipelineError:
    try:
        new = type(exc)(f"{label}: {exc}")
    except TypeError:
        return exc
    new.labels = label
    return new


def compute_sqms(
    buffer: AudioBuffer,
    participant_id: str,
    task_id: str,
    source: Source | str,
    config: PipelineConfig = PipelineConfig(),
    trim: Sequence[tuple[float, float]] | None = None,
    silence: Sequence[tuple[float, float]] | None = None,
) -> SqmRecord:
    """Trim, denoise, then measure loudness and pitch of one recording.

    ``trim`` lists interruptions to cut out and ``silence`` lists noise-only
    stretches for the noise estimate, both in seconds of the original file.
    """
    source = Source(source)
    label = f"{participant_id}-{task_id}-{source.value}"
    if buffer.channels != 1:
        raise PreconditionError(
            f"{label}: buffer has {buffer.channels} channels; apply to_mono before compute_sqms"
        )
    try:
        x = buffer
        if trim:
            x = trim_segments(x, trim)
            if silence:
                silence = remap_intervals(silence, trim)
        x = denoise(x, config.framing, config.denoise, silence=silence)
        lc = config.loudness
        contour = loudness_contour(x, config.framing, lc.calibration, lc.time_constant_s)
        loud = average_loudness_level(contour, lc.floor_sone)
        f0 = estimate_f0_contour(x, config.pitch, config.framing)
        avg, rng = average_f0(f0), pitch_range(f0)
    except PipelineError as exc:
        raise _relabel(exc, label) from exc
    return SqmRecord(
        participant_id,
        task_id,
        source,
        loud,
        avg,
        rng,
        config.digest(),
        lc.calibration.dbfs_to_dbspl_offset,
    )


def percent_deviation(bl: float, sw: float) -> float:
    """``100 |sw - bl| / |bl|``, the baseline being the reference."""
    if bl == 0:
        raise UndefinedReferenceError("baseline value is zero; deviation is undefined")
    if not (math.isfinite(bl) and math.isfinite(sw)):
        raise DataError("deviation needs finite values")
    return 100.0 * abs(sw - bl) / abs(bl)


def compare_recordings(bl: SqmRecord, sw: SqmRecord) -> list[DeviationReport]:
    """Deviation of loudness level and average F0 between two recordings of
    the same participant and task."""
    if (bl.participant_id, bl.task_id) != (sw.participant_id, sw.task_id):
        raise PairingError(f"cannot pair {bl.labels()} with {sw.labels()}")
    if bl.source == sw.source:
        raise PairingError(f"both recordings come from {bl.source.value}")
    if bl.config_digest != sw.config_digest:
        raise PairingError(f"{bl.labels()} and {sw.labels()} were analysed with different settings")
    pid, tid = bl.participant_id, bl.task_id
    return [
        DeviationReport(pid, tid, Metric.LOUDNESS_LEVEL, bl.avg_loudness_phon, sw.avg_loudness_phon,
                        percent_deviation(bl.avg_loudness_phon, sw.avg_loudness_phon)),
        DeviationReport(pid, tid, Metric.F0, bl.avg_f0_hz, sw.avg_f0_hz,
                        percent_deviation(bl.avg_f0_hz, sw.avg_f0_hz)),
    ]


def sort_records(records: Iterable[SqmRecord]) -> list[SqmRecord]:
    return sorted(records, key=lambda r: (r.participant_id, r.task_id, r.source.value))


def pair_records(records: Iterable[SqmRecord]) -> list[DeviationReport]:
    """Compare every BL record with the SW record of the same participant
    and task. Repetitions are paired in the order given."""
    groups: dict[tuple[str, str], dict[Source, list[SqmRecord]]] = {}
    for r in records:
        groups.setdefault((r.participant_id, r.task_id), {Source.BL: [], Source.SW: []})[r.source].append(r)
    out = []
    for key in sorted(groups):
        bls, sws = groups[key][Source.BL], groups[key][Source.SW]
        if not bls or not sws:
            continue
        if len(bls) != len(sws):
            raise PairingError(f"{key[0]}-{key[1]}: {len(bls)} BL vs {len(sws)} SW recordings")
        for b, s in zip(bls, sws):
            out.extend(compare_recordings(b, s))
    return out


def _row(obj) -> dict:
    d = asdict(obj)
    return {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in d.items()}


def deviations_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_deviations" + p.suffix)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            # repr keeps every float exact on re-read
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def emit_report(
    records: Sequence[SqmRecord],
    deviations: Sequence[DeviationReport] = (),
    fmt: str = "csv",
    out: str | os.PathLike = "report.csv",
) -> list[Path]:
    """Write records (and deviations) to ``out``; returns the files written.

    JSON puts both lists in one object. CSV writes the records to ``out``
    and, when there are deviations, a second file ``<stem>_deviations.csv``.
    """
    if not records:
        raise PreconditionError("no records to report")
    out = Path(out)
    recs = [_row(r) for r in records]
    devs = [_row(d) for d in deviations]
    if fmt == "json":
        with open(out, "w") as fh:
            json.dump({"records": recs, "deviations": devs}, fh, indent=2)
            fh.write("\n")
        return [out]
    if fmt != "csv":
        raise ConfigurationError(f"unknown report format {fmt!r}")
    _write_csv(out, RECORD_FIELDS, recs)
    written = [out]
    if devs:
        dpath = deviations_path(out)
        _write_csv(dpath, DEVIATION_FIELDS, devs)
        written.append(dpath)
    return written


def _typed(cls, row: Mapping[str, Any]):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in row:
            raise DataError(f"report row lacks field {f.name!r}")
        v = row[f.name]
        if f.type == "float" and isinstance(v, str):
            v = float(v)
        kwargs[f.name] = v
    return cls(**kwargs)


def read_report(path: str | os.PathLike) -> tuple[list[SqmRecord], list[DeviationReport]]:
    """Inverse of :func:`emit_report`, chosen by file suffix."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            doc = json.load(fh)
        return [_typed(SqmRecord, r) for r in doc["records"]], [
            _typed(DeviationReport, d) for d in doc["deviations"]
        ]
    with open(path, newline="") as fh:
        recs = [_typed(SqmRecord, r) for r in csv.DictReader(fh)]
    devs = []
    dpath = deviations_path(path)
    if dpath.exists():
        with open(dpath, newline="") as fh:
            devs = [_typed(DeviationReport, r) for r in csv.DictReader(fh)]
    return recs, devs


def calibration_from(offset_db: float | None, base: PipelineConfig) -> PipelineConfig:
    if offset_db is None:
        return base
    lc = dataclasses.replace(base.loudness, calibration=CalibrationSpec(offset_db))
    return dataclasses.replace(base, loudness=lc)

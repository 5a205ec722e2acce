"""PCM WAV reading/writing and the in-memory audio container.

Only integer PCM (8, 16 and 24 bit) is accepted. Samples are normalized by
``2**(bits - 1)`` so that negative full scale maps to exactly -1.0.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedFormatError, WavParseError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
SUPPORTED_BITS = (8, 16, 24)


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Normalized PCM audio.

    ``samples`` has shape ``(channels, n_samples)`` and is stored read-only.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("samples must be 1-D or (channels, n_samples)")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if x.size and (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1.0):
            raise ValueError("samples must be finite and lie in [-1, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def mono(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.channels != 1:
            raise ValueError(f"buffer has {self.channels} channels, expected mono")
        return self.samples[0]

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate_hz)


@dataclass(frozen=True)
class WavMetadata:
    sample_rate_hz: int
    bits_per_sample: int
    channels: int
    data_byte_length: int

    @property
    def block_align(self) -> int:
        return self.channels * (self.bits_per_sample // 8)

    def validate(self):
        if self.bits_per_sample not in SUPPORTED_BITS:
            raise UnsupportedFormatError(f"{self.bits_per_sample}-bit PCM is not supported")
        if self.channels < 1 or self.sample_rate_hz <= 0:
            raise WavParseError("fmt", "channels and sample rate must be positive")
        if self.data_byte_length % self.block_align:
            raise WavParseError(
                "data", f"length {self.data_byte_length} is not a multiple of block size {self.block_align}"
            )


def _parse_fmt(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise WavParseError("fmt", f"body is {len(body)} bytes, need at least 16")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", body)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise WavParseError("fmt", "extensible format body too short")
        tag = struct.unpack_from("<H", body, 24)[0]
    if tag != WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"format tag 0x{tag:04x} is not integer PCM")
    if bits not in SUPPORTED_BITS:
        raise UnsupportedFormatError(f"{bits}-bit PCM is not supported")
    if channels < 1 or rate == 0:
        raise WavParseError("fmt", "channels and sample rate must be positive")
    if block_align != channels * bits // 8:
        raise WavParseError("fmt", f"block align {block_align} inconsistent with {channels}x{bits} bit")
    return channels, rate, bits, block_align


def parse_wav_bytes(blob: bytes) -> tuple[bytes, WavMetadata]:
    """Split a RIFF/WAVE byte string into raw PCM data and its metadata.

    Chunks other than ``fmt `` and ``data`` are skipped; ``fmt `` must come
    first. Nothing is read past a declared chunk boundary.
    """
    if len(blob) < 12:
        raise WavParseError("RIFF", "file shorter than the 12-byte RIFF header")
    riff, riff_size, wave = struct.unpack_from("<4sI4s", blob)
    if riff != b"RIFF" or wave != b"WAVE":
        raise WavParseError("RIFF", "missing RIFF/WAVE signature")
    end = min(len(blob), 8 + riff_size)
    pos = 12
    fmt = None
    while pos + 8 <= end:
        cid, size = struct.unpack_from("<4sI", blob, pos)
        name = cid.decode("latin-1").strip()
        body_start = pos + 8
        if body_start + size > len(blob):
            raise WavParseError(name, f"declares {size} bytes but only {len(blob) - body_start} remain")
        body = blob[body_start : body_start + size]
        if cid == b"fmt ":
            fmt = _parse_fmt(body)
        elif cid == b"data":
            if fmt is None:
                raise WavParseError("data", "data chunk precedes fmt chunk")
            channels, rate, bits, block_align = fmt
            meta = WavMetadata(rate, bits, channels, size)
            meta.validate()
            return body, meta
        pos = body_start + size + (size & 1)
    if fmt is None:
        raise WavParseError("fmt", "no fmt chunk found")
    raise WavParseError("data", "no data chunk found")


def pcm_to_float(data: bytes, meta: WavMetadata) -> np.ndarray:
    """Decode interleaved PCM bytes to a ``(channels, n)`` float array."""
    bits = meta.bits_per_sample
    if bits == 8:
        ints = np.frombuffer(data, dtype=np.uint8).astype(np.int32) - 128
    elif bits == 16:
        ints = np.frombuffer(data, dtype="<i2").astype(np.int32)
    elif bits == 24:
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
    else:
        raise UnsupportedFormatError(f"{bits}-bit PCM is not supported")
    x = ints.astype(np.float64) / float(1 << (bits - 1))
    return x.reshape(-1, meta.channels).T


def float_to_pcm16(samples: np.ndarray) -> bytes:
    """Quantize a ``(channels, n)`` array to interleaved little-endian int16."""
    q = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    return q.T.tobytes()


def wav_header(meta: WavMetadata) -> bytes:
    """Canonical 44-byte RIFF/WAVE PCM header."""
    byte_rate = meta.sample_rate_hz * meta.block_align
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + meta.data_byte_length + (meta.data_byte_length & 1),
        b"WAVE",
        b"fmt ",
        16,
        WAVE_FORMAT_PCM,
        meta.channels,
        meta.sample_rate_hz,
        byte_rate,
        meta.block_align,
        meta.bits_per_sample,
        b"data",
        meta.data_byte_length,
    )


def read_wav_bytes(path: str | os.PathLike) -> tuple[bytes, WavMetadata]:
    with open(path, "rb") as fh:
        return parse_wav_bytes(fh.read())


def read_wav(path: str | os.PathLike) -> tuple[AudioBuffer, WavMetadata]:
    data, meta = read_wav_bytes(path)
    return AudioBuffer(pcm_to_float(data, meta), meta.sample_rate_hz), meta


def write_pcm_wav(path: str | os.PathLike, data: bytes, meta: WavMetadata) -> None:
    meta.validate()
    if len(data) != meta.data_byte_length:
        raise ValueError("data length does not match metadata")
    with open(path, "wb") as fh:
        fh.write(wav_header(meta))
        fh.write(data)
        if len(data) & 1:
            fh.write(b"\x00")


def write_wav(buffer: AudioBuffer, path: str | os.PathLike) -> WavMetadata:
    """Write ``buffer`` as 16-bit PCM. Returns the header that was written."""
    data = float_to_pcm16(buffer.samples)
    meta = WavMetadata(buffer.sample_rate_hz, 16, buffer.channels, len(data))
    write_pcm_wav(path, data, meta)
    return meta


def to_mono(buffer: AudioBuffer) -> AudioBuffer:
    """Average all channels into one; mono input is returned as is."""
    if buffer.channels == 1:
        return buffer
    return AudioBuffer(buffer.samples.mean(axis=0), buffer.sample_rate_hz)

"""In-process simulation of the watch-to-tablet audio transfer.

Raw PCM is cut into fixed-size packets, optionally disturbed by a
:class:`FaultPlan`, reassembled on the receiving side and finally written
out with a WAV header attached.

Wire format of one serialized chunk (little-endian)::

    session_id  u64
    seq         u32
    flags       u8    bit 0 = last chunk
    payload_len u16
    payload     payload_len bytes
"""
from __future__ import annotations

import enum
import logging
import os
import random
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence, TextIO

from .audio_io import WavMetadata, write_pcm_wav
from .errors import DataError, IntegrityError, MissingChunkError, SessionStateError

_logger = logging.getLogger(__name__)

CHUNK_SIZE = 2048
HEADER = struct.Struct("<QIBH")
FLAG_LAST = 0x01


@dataclass(frozen=True)
class Chunk:
    session_id: int
    seq: int
    payload: bytes
    is_last: bool = False

    def __post_init__(self):
        if self.seq < 0:
            raise ValueError("seq must be non-negative")
        if len(self.payload) > 0xFFFF:
            raise ValueError("payload does not fit the u16 length field")

    def encode(self) -> bytes:
        flags = FLAG_LAST if self.is_last else 0
        return HEADER.pack(self.session_id, self.seq, flags, len(self.payload)) + self.payload

    @classmethod
    def decode_from(cls, blob: bytes, offset: int = 0) -> tuple["Chunk", int]:
        """Decode one chunk at ``offset``; returns it and the next offset."""
        if offset + HEADER.size > len(blob):
            raise DataError(f"truncated chunk header at byte {offset}")
        sid, seq, flags, n = HEADER.unpack_from(blob, offset)
        start = offset + HEADER.size
        if start + n > len(blob):
            raise DataError(f"chunk seq {seq} declares {n} payload bytes, {len(blob) - start} remain")
        return cls(sid, seq, bytes(blob[start : start + n]), bool(flags & FLAG_LAST)), start + n


def chunk_stream(pcm: bytes, session_id: int, chunk_size: int = CHUNK_SIZE) -> list[Chunk]:
    """Split ``pcm`` into packets of ``chunk_size`` bytes (the last may be shorter)."""
    if not pcm:
        raise ValueError("pcm must be non-empty")
    if not 0 < chunk_size <= 0xFFFF:
        raise ValueError("chunk_size must be in 1..65535")
    n = -(-len(pcm) // chunk_size)
    return [
        Chunk(session_id, i, bytes(pcm[i * chunk_size : (i + 1) * chunk_size]), i == n - 1)
        for i in range(n)
    ]


def encode_chunks(chunks: Iterable[Chunk]) -> bytes:
    return b"".join(c.encode() for c in chunks)


def decode_chunks(blob: bytes) -> list[Chunk]:
    out, pos = [], 0
    while pos < len(blob):
        chunk, pos = Chunk.decode_from(blob, pos)
        out.append(chunk)
    return out


def write_chunk_file(path: str | os.PathLike, chunks: Iterable[Chunk]) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_chunks(chunks))


def read_chunk_file(path: str | os.PathLike) -> list[Chunk]:
    with open(path, "rb") as fh:
        return decode_chunks(fh.read())


class SessionState(enum.Enum):
    OPEN = "open"
    COMPLETE = "complete"
    FAILED = "failed"


@dataclass(frozen=True)
class RelaySession:
    """Receiving-side buffer for one recording.

    Instances are immutable; :func:`ingest_chunk` returns an updated copy.
    """

    session_id: int
    expected_format: WavMetadata | None = None
    received: dict = field(default_factory=dict)
    last_seq: int | None = None
    state: SessionState = SessionState.OPEN

    def missing(self) -> list[int]:
        top = self.last_seq if self.last_seq is not None else max(self.received, default=-1)
        return [s for s in range(top + 1) if s not in self.received]

    def assembled(self) -> bytes:
        if self.state is not SessionState.COMPLETE:
            raise SessionStateError(f"session {self.session_id} is {self.state.value}, not complete")
        return b"".join(self.received[s] for s in range(self.last_seq + 1))


def ingest_chunk(session: RelaySession, chunk: Chunk) -> RelaySession:
    """Place ``chunk`` at its sequence position.

    A redelivered chunk with identical bytes is ignored. The session becomes
    complete once the last chunk is in and no sequence number is missing.
    """
    if session.state is not SessionState.OPEN:
        if session.state is SessionState.COMPLETE and session.received.get(chunk.seq) == chunk.payload:
            return session
        raise SessionStateError(f"session {session.session_id} is {session.state.value}")
    if chunk.session_id != session.session_id:
        raise IntegrityError(f"chunk for session {chunk.session_id} sent to session {session.session_id}")
    prior = session.received.get(chunk.seq)
    if prior is not None:
        if prior != chunk.payload:
            raise IntegrityError(f"seq {chunk.seq} redelivered with different payload")
        _logger.debug("duplicate seq %d ignored", chunk.seq)
        return session
    last_seq = session.last_seq
    if chunk.is_last:
        if last_seq is not None and last_seq != chunk.seq:
            raise IntegrityError(f"last-chunk flag on seq {chunk.seq} and seq {last_seq}")
        last_seq = chunk.seq
    if last_seq is not None and chunk.seq > last_seq:
        raise IntegrityError(f"seq {chunk.seq} arrives after last seq {last_seq}")
    received = dict(session.received)
    received[chunk.seq] = chunk.payload
    new = replace(session, received=received, last_seq=last_seq)
    if last_seq is not None and len(received) == last_seq + 1:
        new = replace(new, state=SessionState.COMPLETE)
    return new


def close_session(session: RelaySession) -> RelaySession:
    """End of transmission: complete sessions pass through, gaps raise."""
    if session.state is SessionState.COMPLETE:
        return session
    missing = session.missing()
    if session.last_seq is None:
        # the final seq is unknown, so report the one after the highest seen
        missing.append(max(session.received, default=-1) + 1)
    raise MissingChunkError(missing)


def reassemble(chunks: Iterable[Chunk], session_id: int | None = None) -> bytes:
    chunks = list(chunks)
    if session_id is None:
        if not chunks:
            raise MissingChunkError([0])
        session_id = chunks[0].session_id
    session = RelaySession(session_id)
    for c in chunks:
        session = ingest_chunk(session, c)
    return close_session(session).assembled()


def finalize_session(session: RelaySession, format: WavMetadata, out: str | os.PathLike) -> WavMetadata:
    """Write the reassembled bytes as a WAV file with ``format``'s header fields."""
    if session.state is not SessionState.COMPLETE:
        raise SessionStateError(
            f"cannot finalize session {session.session_id}: state {session.state.value}, "
            f"missing {session.missing()}"
        )
    data = session.assembled()
    meta = WavMetadata(format.sample_rate_hz, format.bits_per_sample, format.channels, len(data))
    write_pcm_wav(out, data, meta)
    return meta


@dataclass(frozen=True)
class FaultPlan:
    """Transport faults applied between sender and receiver."""

    drop: frozenset[int] = frozenset()
    duplicate: frozenset[int] = frozenset()
    reorder: bool = False
    seed: int = 0

    def apply(self, chunks: Sequence[Chunk]) -> list[Chunk]:
        out = []
        for c in chunks:
            if c.seq in self.drop:
                continue
            out.append(c)
            if c.seq in self.duplicate:
                out.append(c)
        if self.reorder:
            random.Random(self.seed).shuffle(out)
        return out


class InProcessTransport:
    """FIFO queue standing in for the wireless link."""

    def __init__(self, plan: FaultPlan | None = None):
        self.plan = plan or FaultPlan()
        self._queue: list[Chunk] = []

    def send(self, chunks: Sequence[Chunk]) -> None:
        self._queue.extend(self.plan.apply(chunks))

    def __iter__(self) -> Iterator[Chunk]:
        while self._queue:
            yield self._queue.pop(0)


@dataclass
class RelayResult:
    meta: WavMetadata
    n_sent: int
    n_delivered: int
    log: list[str]


def relay_pcm(
    pcm: bytes,
    fmt: WavMetadata,
    out: str | os.PathLike,
    *,
    session_id: int = 1,
    chunk_size: int = CHUNK_SIZE,
    plan: FaultPlan | None = None,
    log: TextIO | None = None,
) -> RelayResult:
    """Send ``pcm`` through a faulty transport and write the recovered WAV.

    Raises :class:`MissingChunkError` if the plan lost packets.
    """
    chunks = chunk_stream(pcm, session_id, chunk_size)
    transport = InProcessTransport(plan)
    transport.send(chunks)
    lines = [f"session {session_id}: sent {len(chunks)} chunks of <= {chunk_size} bytes"]
    session = RelaySession(session_id, expected_format=fmt)
    delivered = 0
    for c in transport:
        delivered += 1
        session = ingest_chunk(session, c)
        lines.append(f"recv seq={c.seq} len={len(c.payload)} last={int(c.is_last)} state={session.state.value}")
    try:
        session = close_session(session)
    except MissingChunkError as exc:
        lines.append(f"session {session_id}: FAILED, {exc}")
        if log is not None:
            log.write("\n".join(lines) + "\n")
        raise
    meta = finalize_session(session, fmt, out)
    lines.append(f"session {session_id}: complete, {meta.data_byte_length} bytes written")
    if log is not None:
        log.write("\n".join(lines) + "\n")
    return RelayResult(meta, len(chunks), delivered, lines)

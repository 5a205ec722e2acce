import io
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoclip.audio_io import AudioBuffer, WavMetadata, float_to_pcm16, read_wav, read_wav_bytes, write_wav
from echoclip.errors import IntegrityError, MissingChunkError, SessionStateError
from echoclip.stream_relay import (
    CHUNK_SIZE,
    HEADER,
    Chunk,
    FaultPlan,
    RelaySession,
    SessionState,
    chunk_stream,
    close_session,
    decode_chunks,
    encode_chunks,
    finalize_session,
    ingest_chunk,
    read_chunk_file,
    reassemble,
    relay_pcm,
    write_chunk_file,
)

FMT = WavMetadata(44100, 16, 1, 0)


@pytest.mark.parametrize("n,sizes", [(5000, [2048, 2048, 904]), (2048, [2048]), (1, [1])])
def test_chunk_sizes(n, sizes):
    chunks = chunk_stream(bytes(n), 7)
    assert [len(c.payload) for c in chunks] == sizes
    assert [c.is_last for c in chunks] == [False] * (len(sizes) - 1) + [True]
    assert [c.seq for c in chunks] == list(range(len(sizes)))


def test_empty_pcm_rejected():
    with pytest.raises(ValueError):
        chunk_stream(b"", 1)


def test_wire_header_layout():
    c = Chunk(0x0102030405060708, 9, b"xyz", True)
    blob = c.encode()
    assert HEADER.size == 15
    assert blob[:8] == bytes([8, 7, 6, 5, 4, 3, 2, 1])
    assert blob[8:12] == (9).to_bytes(4, "little")
    assert blob[12] == 1 and blob[13:15] == (3).to_bytes(2, "little")
    assert Chunk.decode_from(blob) == (c, len(blob))


def test_chunk_file_round_trip(tmp_path):
    chunks = chunk_stream(bytes(range(256)) * 20, 3, 1000)
    p = tmp_path / "c.bin"
    write_chunk_file(p, chunks)
    assert read_chunk_file(p) == chunks


def test_in_order_delivery_completes():
    pcm = bytes(range(256)) * 20
    s = RelaySession(1)
    for c in chunk_stream(pcm, 1):
        assert s.state is SessionState.OPEN
        s = ingest_chunk(s, c)
    assert s.state is SessionState.COMPLETE
    assert s.assembled() == pcm


def test_gap_names_missing_seq():
    c = chunk_stream(bytes(5000), 1)
    s = ingest_chunk(ingest_chunk(RelaySession(1), c[0]), c[2])
    with pytest.raises(MissingChunkError) as info:
        close_session(s)
    assert info.value.missing == [1]
    assert "1" in str(info.value)


def test_missing_tail_is_reported():
    c = chunk_stream(bytes(5000), 1)
    s = ingest_chunk(RelaySession(1), c[0])
    with pytest.raises(MissingChunkError) as info:
        close_session(s)
    assert info.value.missing == [1]


def test_identical_duplicate_ignored_and_conflict_detected():
    c = chunk_stream(bytes(5000), 1)
    s = ingest_chunk(RelaySession(1), c[1])
    assert ingest_chunk(s, c[1]) is s
    with pytest.raises(IntegrityError):
        ingest_chunk(s, Chunk(1, 1, b"other", False))


def test_conflicting_last_flags_and_seq_after_last():
    s = ingest_chunk(RelaySession(1), Chunk(1, 2, b"a", True))
    with pytest.raises(IntegrityError):
        ingest_chunk(s, Chunk(1, 3, b"b", False))
    with pytest.raises(IntegrityError):
        ingest_chunk(s, Chunk(1, 1, b"b", True))


def test_foreign_session_rejected():
    with pytest.raises(IntegrityError):
        ingest_chunk(RelaySession(1), Chunk(2, 0, b"a", True))


def test_finalize_open_session_is_state_error(tmp_path):
    with pytest.raises(SessionStateError):
        finalize_session(RelaySession(1), FMT, tmp_path / "x.wav")


def test_finalized_sine_is_bit_identical(tmp_path):
    t = np.arange(44100) / 44100
    src = tmp_path / "src.wav"
    write_wav(AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t), 44100), src)
    pcm, meta = read_wav_bytes(src)
    s = RelaySession(5)
    for c in chunk_stream(pcm, 5):
        s = ingest_chunk(s, c)
    out = tmp_path / "out.wav"
    meta_out = finalize_session(s, meta, out)
    assert (meta_out.sample_rate_hz, meta_out.bits_per_sample, meta_out.channels) == (44100, 16, 1)
    assert read_wav_bytes(out) == (pcm, meta)
    np.testing.assert_array_equal(read_wav(out)[0].samples, read_wav(src)[0].samples)


@given(st.binary(min_size=1, max_size=20000), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_reassembly_under_any_permutation(pcm, rnd):
    chunks = chunk_stream(pcm, 9)
    assert len(chunks) == -(-len(pcm) // CHUNK_SIZE)
    rnd.shuffle(chunks)
    assert reassemble(chunks) == pcm


@given(st.binary(min_size=1, max_size=3 * CHUNK_SIZE), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_fault_plan_duplicates_and_reorder_are_harmless(pcm, seed):
    chunks = chunk_stream(pcm, 1)
    plan = FaultPlan(duplicate=frozenset(range(len(chunks))), reorder=True, seed=seed)
    assert reassemble(plan.apply(chunks)) == pcm


def test_fault_plan_is_seeded():
    chunks = chunk_stream(bytes(range(256)) * 100, 1, 512)
    a = FaultPlan(reorder=True, seed=3).apply(chunks)
    b = FaultPlan(reorder=True, seed=3).apply(chunks)
    assert a == b and a != chunks


def test_relay_pcm_log_and_drop(tmp_path):
    pcm = float_to_pcm16(np.linspace(-0.5, 0.5, 6000)[None, :])
    fmt = WavMetadata(44100, 16, 1, len(pcm))
    log = io.StringIO()
    res = relay_pcm(pcm, fmt, tmp_path / "o.wav", plan=FaultPlan(duplicate=frozenset({1})), log=log)
    assert res.n_sent == 6 and res.n_delivered == 7
    assert "complete" in log.getvalue().splitlines()[-1]
    assert read_wav_bytes(tmp_path / "o.wav")[0] == pcm
    log = io.StringIO()
    with pytest.raises(MissingChunkError) as info:
        relay_pcm(pcm, fmt, tmp_path / "p.wav", plan=FaultPlan(drop=frozenset({2, 4})), log=log)
    assert info.value.missing == [2, 4]
    assert "FAILED" in log.getvalue()
    assert not (tmp_path / "p.wav").exists()


def test_encoded_stream_decodes_in_order():
    rnd = random.Random(1)
    pcm = bytes(rnd.getrandbits(8) for _ in range(7000))
    chunks = chunk_stream(pcm, 11)
    assert decode_chunks(encode_chunks(chunks)) == chunks

"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured value and
the pinned tolerance, then asserts the same condition.
"""
import random
import time

import numpy as np
import pytest

from echoclip.audio_io import AudioBuffer, WavMetadata, read_wav, read_wav_bytes, write_wav
from echoclip.cli import main
from echoclip.errors import MissingChunkError
from echoclip.loudness import (
    BARK_GRID,
    CalibrationSpec,
    SpecificLoudnessDistribution,
    loudness_contour,
    sone_to_phon,
    total_loudness,
)
from echoclip.pitch import average_f0, estimate_f0_contour, pitch_range
from echoclip.preprocess import (
    FramingConfig,
    NoiseMethod,
    NoiseProfile,
    denoise,
    istft,
    spectral_subtract,
    stft,
)
from echoclip.sqm_report import compute_sqms, percent_deviation
from echoclip.stream_relay import (
    RelaySession,
    chunk_stream,
    close_session,
    finalize_session,
    ingest_chunk,
    reassemble,
)
from echoclip.synth import FS, glide, glide_frequency, tone, utterance, white_noise

# pinned tolerances
DEVIATION_CASES = [(100.0, 108.66, 8.66), (100.0, 109.27, 9.27), (100.0, 94.0, 6.00), (100.0, 90.65, 9.35)]
DEVIATION_BUDGET_S = 1.0
TONE_FREQS = (80, 120, 220, 330, 440)
TONE_REL_TOL = 0.01
NOISE_UNVOICED_MIN = 0.95
TONE_BUDGET_S = 30.0
GLIDE_REL_TOL = 0.03
GLIDE_RANGE_REL_TOL = 0.05
ANCHOR_REL_TOL = 0.15
INTEGRAL_ABS_TOL = 1e-9
PARSEVAL_REL_TOL = 1e-6
ISTFT_ABS_TOL = 1e-6
N_MIXTURES = 20
N_PAYLOADS = 100
N_UTTERANCES = 5
GAIN = 0.5


@pytest.fixture
def report(capsys):
    def emit(n, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {name}: {detail}")
        return ok

    return emit


def test_01_deviation_arithmetic(report):
    t0 = time.perf_counter()
    got = [round(percent_deviation(bl, sw), 2) for bl, sw, _ in DEVIATION_CASES]
    elapsed = time.perf_counter() - t0
    want = [e for _, _, e in DEVIATION_CASES]
    ok = got == want and elapsed < DEVIATION_BUDGET_S
    assert report(1, "deviation arithmetic", ok, f"{got} vs {want}, {elapsed:.4f} s < {DEVIATION_BUDGET_S} s")


def test_02_pitch_tone_oracle(report):
    t0 = time.perf_counter()
    worst, min_voiced = 0.0, 1.0
    for f in TONE_FREQS:
        c = estimate_f0_contour(tone(f, 3.0))
        min_voiced = min(min_voiced, c.voiced.mean())
        worst = max(worst, float(np.max(np.abs(c.voiced_f0 / f - 1))))
    noise = estimate_f0_contour(white_noise(3.0, seed=0))
    unvoiced = 1.0 - noise.voiced.mean()
    elapsed = time.perf_counter() - t0
    ok = worst < TONE_REL_TOL and min_voiced > 0 and unvoiced >= NOISE_UNVOICED_MIN and elapsed < TONE_BUDGET_S
    assert report(
        2, "pitch tone oracle", ok,
        f"max error {100 * worst:.3f}% < {100 * TONE_REL_TOL:.0f}%, noise unvoiced {100 * unvoiced:.1f}% "
        f">= {100 * NOISE_UNVOICED_MIN:.0f}%, {elapsed:.1f} s < {TONE_BUDGET_S:.0f} s",
    )


def test_03_pitch_glide(report):
    c = estimate_f0_contour(glide(100, 300, 2.0))
    truth = glide_frequency(c.frame_times, 100, 300, 2.0)
    v = c.voiced
    worst = float(np.max(np.abs(c.f0_hz[v] / truth[v] - 1)))
    rng = pitch_range(c)
    ok = v.mean() > 0.95 and worst < GLIDE_REL_TOL and abs(rng / 200 - 1) < GLIDE_RANGE_REL_TOL
    assert report(
        3, "pitch glide", ok,
        f"max error {100 * worst:.2f}% < {100 * GLIDE_REL_TOL:.0f}%, range {rng:.2f} Hz "
        f"within {100 * GLIDE_RANGE_REL_TOL:.0f}% of 200 Hz, voiced {100 * v.mean():.1f}%",
    )


def test_04_loudness_anchor(report):
    cal = CalibrationSpec()
    sone = float(np.median(loudness_contour(tone(1000, 1.0, cal.amplitude_for_spl(40)), calibration=cal).loudness_sone[20:]))
    levels = []
    for spl in (40, 50, 60, 70, 80):
        c = loudness_contour(tone(1000, 1.0, cal.amplitude_for_spl(spl)), calibration=cal)
        levels.append(float(np.median(c.level_phon[20:])))
    monotone = bool(np.all(np.diff(levels) > 0))
    exact = sone_to_phon(1.0) == 40.0
    ok = abs(sone - 1) <= ANCHOR_REL_TOL and exact and monotone
    assert report(
        4, "loudness anchor", ok,
        f"40 dB SPL -> {sone:.3f} sone (1 +/- {ANCHOR_REL_TOL}), sone_to_phon(1) == 40: {exact}, "
        f"phon at +10 dB steps {[round(x, 1) for x in levels]}",
    )


def test_05_loudness_integral(report):
    total = total_loudness(SpecificLoudnessDistribution(BARK_GRID, np.ones_like(BARK_GRID)))
    ok = abs(total - 24.0) <= INTEGRAL_ABS_TOL
    assert report(5, "loudness integral", ok, f"{total!r} sone, |err| {abs(total - 24):.1e} <= {INTEGRAL_ABS_TOL}")


def test_06_stft(report):
    buf = white_noise(2.0, seed=7)
    cfg = FramingConfig()
    spec = stft(buf, cfg)
    length, hop, nfft = spec.frame_length, spec.hop_length, spec.fft_size
    x = buf.mono
    idx = np.arange(length)[None, :] + hop * np.arange(spec.n_frames)[:, None]
    time_energy = np.sum((x[idx] * spec.window) ** 2, axis=1)
    p = np.abs(spec.frames) ** 2
    freq_energy = (p[:, 0] + p[:, -1] + 2 * p[:, 1:-1].sum(axis=1)) / nfft
    parseval = float(np.max(np.abs(freq_energy / time_energy - 1)))
    y = istft(spec).mono
    interior = slice(length, spec.n_frames * hop)
    recon = float(np.max(np.abs(y[interior] - x[interior])))
    ok = parseval < PARSEVAL_REL_TOL and recon < ISTFT_ABS_TOL
    assert report(
        6, "stft", ok,
        f"Parseval rel {parseval:.1e} < {PARSEVAL_REL_TOL}, istft interior max-abs {recon:.1e} < {ISTFT_ABS_TOL}",
    )


def _snr_db(clean, estimate):
    return 10 * np.log10(np.sum(clean**2) / np.sum((estimate - clean) ** 2))


def test_07_spectral_subtraction(report):
    gains = []
    for i, snr in enumerate(np.linspace(0, 20, N_MIXTURES)):
        clean = utterance(120 + 10 * i, 3.0, amplitude=0.3).mono
        noise = white_noise(3.0, amplitude=1.0, seed=i).mono.copy()
        noise *= np.sqrt(np.sum(clean**2) / np.sum(noise**2) / 10 ** (snr / 10))
        noisy = AudioBuffer(clean + noise, FS)
        out = denoise(noisy).mono
        gains.append(_snr_db(clean, out) - _snr_db(clean, noisy.mono))
    spec = stft(utterance(150, 1.0))
    zero = NoiseProfile(np.zeros(spec.frames.shape[1]), NoiseMethod.SILENCE_AVERAGE)
    identity = np.array_equal(np.abs(spectral_subtract(spec, zero).frames), np.abs(spec.frames))
    ok = min(gains) >= 0 and identity
    assert report(
        7, "spectral subtraction", ok,
        f"SNR gain over {N_MIXTURES} mixtures min {min(gains):.2f} dB >= 0 (max {max(gains):.2f} dB), "
        f"zero profile identity: {identity}",
    )


def test_08_relay(report, tmp_path, capsys):
    rnd = random.Random(2024)
    sizes = [1, 1 << 20] + [int(10 ** rnd.uniform(0, 6)) for _ in range(N_PAYLOADS - 2)]
    fmt = WavMetadata(FS, 8, 1, 0)  # block size 1, so any byte count is valid PCM
    lossless = 0
    for k, size in enumerate(sizes):
        pcm = rnd.randbytes(size)
        chunks = chunk_stream(pcm, k)
        rnd.shuffle(chunks)
        session = RelaySession(k, expected_format=fmt)
        for c in chunks:
            session = ingest_chunk(session, c)
        out = tmp_path / "p.wav"
        finalize_session(close_session(session), fmt, out)
        lossless += read_wav_bytes(out)[0] == pcm
    chunks = chunk_stream(bytes(10 * 2048), 1)
    try:
        reassemble([c for c in chunks if c.seq not in (2, 5)])
        named = []
    except MissingChunkError as exc:
        named = list(exc.missing)
    src, relayed = tmp_path / "src.wav", tmp_path / "relayed.wav"
    write_wav(utterance(140, 2.0, noise=0.002), src)
    assert main(["relay-sim", str(src), "--out", str(relayed), "--reorder", "--seed", "5"]) == 0
    capsys.readouterr()
    assert main(["compare", str(src), str(relayed)]) == 0
    devs = [ln.rsplit("=", 1)[1] for ln in capsys.readouterr().out.splitlines()]
    ok = lossless == N_PAYLOADS and named == [2, 5] and devs == ["0.00%", "0.00%"]
    assert report(
        8, "relay losslessness", ok,
        f"{lossless}/{N_PAYLOADS} payloads bit-exact (1 B..1 MB), gaps named {named}, compare deviations {devs}",
    )


def test_09_gain_split(report):
    rows = []
    for i in range(N_UTTERANCES):
        buf = utterance(100 + 40 * i, 2.0, vibrato_hz=3, vibrato_depth=0.04, noise=0.002, seed=i)
        a = compute_sqms(buf, "S", str(i), "BL")
        b = compute_sqms(buf.scaled(GAIN), "S", str(i), "SW")
        rows.append((a.avg_f0_hz, b.avg_f0_hz, a.avg_loudness_phon - b.avg_loudness_phon))
    f0_same = all(a == b for a, b, _ in rows)
    loud_changed = all(d > 0 for _, _, d in rows)
    ok = f0_same and loud_changed
    assert report(
        9, "gain split", ok,
        f"x{GAIN}: avg F0 unchanged on {sum(a == b for a, b, _ in rows)}/{N_UTTERANCES}, "
        f"loudness drop {[round(d, 2) for _, _, d in rows]} phon",
    )


def test_10_batch_determinism(report, tmp_path, capsys):
    for name, amp in (("bl", 0.5), ("sw", 0.3)):
        write_wav(utterance(160, 2.0, amplitude=amp, noise=0.003), tmp_path / f"{name}.wav")
    (tmp_path / "manifest.txt").write_text("S1 t1 BL bl.wav\nS1 t1 SW sw.wav\n")
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.csv"
        assert main(["batch", str(tmp_path / "manifest.txt"), "--out", str(out)]) == 0
        blobs.append((out.read_bytes(), (tmp_path / f"{run}_deviations.csv").read_bytes()))
    capsys.readouterr()
    ok = blobs[0] == blobs[1]
    assert report(10, "batch determinism", ok, f"two runs byte-identical: {ok} ({len(blobs[0][0])} + {len(blobs[0][1])} bytes)")

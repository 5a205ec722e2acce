"""Command-line entry point: ``echoclip analyze|compare|relay-sim|batch``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 pipeline error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio_io import read_wav, read_wav_bytes, to_mono
from .errors import AnnotationError, ConfigurationError, DataError, DomainError, PipelineError
from .preprocess import read_annotations, text_lines
from .sqm_report import (
    PipelineConfig,
    SqmRecord,
    Source,
    calibration_from,
    compare_recordings,
    compute_sqms,
    emit_report,
    pair_records,
    read_config_file,
    sort_records,
)
from .stream_relay import CHUNK_SIZE, FaultPlan, chunk_stream, relay_pcm, write_chunk_file

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seq_list(text: str) -> frozenset[int]:
    try:
        return frozenset(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sequence numbers, got {text!r}") from None


def _shared(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("analysis settings")
    g.add_argument("--calib", type=float, metavar="DB", help="dB SPL of a full-scale sine (default 94)")
    g.add_argument("--config", metavar="FILE", help="key = value settings file, e.g. 'pitch.f_min = 60'")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    g.add_argument("--denoise", choices=["auto", "silence_average", "minimum_statistics", "none"])
    g.add_argument("--time-constant", type=float, metavar="S", help="loudness integration time constant")
    g.add_argument("--floor-sone", type=float, help="silence floor for the loudness average")
    g.add_argument("--f-min", type=float)
    g.add_argument("--f-max", type=float)
    g.add_argument("--strength-threshold", type=float)
    g.add_argument("--rms-floor", type=float)
    g.add_argument("--out", metavar="FILE", help="write a report file")
    g.add_argument("--format", choices=["csv", "json"], default=None, help="report format (default from suffix)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="echoclip", description="Speech loudness and pitch metrics for BL/SW recordings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="metrics of one recording")
    a.add_argument("wav")
    a.add_argument("--trim", metavar="FILE", help="interruptions to cut, 'start_s end_s' per line")
    a.add_argument("--silence", metavar="FILE", help="noise-only intervals, 'start_s end_s' per line")
    a.add_argument("--participant", default=None, help="participant label (default: file stem)")
    a.add_argument("--task", default="-", help="task label")
    a.add_argument("--source", choices=["BL", "SW"], default="BL")
    _shared(a)

    c = sub.add_parser("compare", help="percent deviation of SW against BL")
    c.add_argument("bl")
    c.add_argument("sw")
    c.add_argument("--bl-trim", metavar="FILE")
    c.add_argument("--sw-trim", metavar="FILE")
    c.add_argument("--participant", default="-")
    c.add_argument("--task", default="-")
    _shared(c)

    r = sub.add_parser("relay-sim", help="send a WAV through the simulated watch link")
    r.add_argument("wav")
    r.add_argument("--out", required=True, metavar="WAV")
    r.add_argument("--chunk-size", type=int, default=CHUNK_SIZE)
    r.add_argument("--drop", type=_seq_list, default=frozenset(), metavar="SEQ,...")
    r.add_argument("--duplicate", type=_seq_list, default=frozenset(), metavar="SEQ,...")
    r.add_argument("--reorder", action="store_true")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--session-id", type=int, default=1)
    r.add_argument("--log", metavar="FILE", help="session log (default: <out>.log)")
    r.add_argument("--dump-chunks", metavar="FILE", help="write the serialized chunks as sent")

    b = sub.add_parser("batch", help="analyze a manifest of recordings")
    b.add_argument("manifest", help="lines of 'participant task source path [trim_file]'")
    _shared(b)
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    overrides: dict[str, str] = {}
    if args.config:
        overrides.update(read_config_file(args.config))
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    flags = {
        "denoise.method": args.denoise,
        "loudness.time_constant_s": args.time_constant,
        "loudness.floor_sone": args.floor_sone,
        "pitch.f_min": args.f_min,
        "pitch.f_max": args.f_max,
        "pitch.strength_threshold": args.strength_threshold,
        "pitch.rms_floor": args.rms_floor,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return calibration_from(args.calib, cfg.with_overrides(overrides))


def _load(path):
    buf, _ = read_wav(path)
    return to_mono(buf)


def _fmt(args) -> str:
    if args.format:
        return args.format
    return "json" if args.out and Path(args.out).suffix == ".json" else "csv"


def _print_record(r: SqmRecord) -> None:
    print(f"{r.participant_id} {r.task_id} {r.source.value}")
    print(f"  avg_loudness_phon  {r.avg_loudness_phon:.2f}")
    print(f"  avg_f0_hz          {r.avg_f0_hz:.2f}")
    print(f"  pitch_range_hz     {r.pitch_range_hz:.2f}")
    print(f"  calibration_db     {r.calibration_offset_db:.2f}")
    print(f"  config_digest      {r.config_digest[:16]}")


def _print_deviations(devs) -> None:
    for d in devs:
        print(
            f"{d.participant_id} {d.task_id} {d.metric.value:<15} "
            f"bl={d.bl_value:.2f} sw={d.sw_value:.2f} deviation={d.percent_deviation:.2f}%"
        )


def _analyze(args) -> int:
    cfg = _config(args)
    trim = read_annotations(args.trim) if args.trim else None
    silence = read_annotations(args.silence) if args.silence else None
    pid = args.participant if args.participant is not None else Path(args.wav).stem
    rec = compute_sqms(_load(args.wav), pid, args.task, args.source, cfg, trim=trim, silence=silence)
    _print_record(rec)
    if args.out:
        emit_report([rec], [], _fmt(args), args.out)
    return EXIT_OK


def _compare(args) -> int:
    cfg = _config(args)
    recs = []
    for path, trim_file, src in ((args.bl, args.bl_trim, Source.BL), (args.sw, args.sw_trim, Source.SW)):
        trim = read_annotations(trim_file) if trim_file else None
        recs.append(compute_sqms(_load(path), args.participant, args.task, src, cfg, trim=trim))
    devs = compare_recordings(*recs)
    _print_deviations(devs)
    if args.out:
        emit_report(recs, devs, _fmt(args), args.out)
    return EXIT_OK


def _relay(args) -> int:
    pcm, meta = read_wav_bytes(args.wav)
    if args.dump_chunks:
        write_chunk_file(args.dump_chunks, chunk_stream(pcm, args.session_id, args.chunk_size))
    plan = FaultPlan(args.drop, args.duplicate, args.reorder, args.seed)
    log_path = args.log or f"{args.out}.log"
    with open(log_path, "w") as log:
        result = relay_pcm(pcm, meta, args.out, session_id=args.session_id,
                           chunk_size=args.chunk_size, plan=plan, log=log)
    print(f"sent {result.n_sent} chunks, delivered {result.n_delivered}, "
          f"wrote {result.meta.data_byte_length} bytes to {args.out}")
    return EXIT_OK


def read_manifest(path) -> list[tuple[str, str, Source, Path, Path | None]]:
    """Rows of ``participant task source path [trim_file]``; relative paths
    are taken relative to the manifest."""
    base = Path(path).parent
    rows = []
    for lineno, line in text_lines(path):
        parts = line.split()
        if len(parts) not in (4, 5):
            raise AnnotationError(f"{path}:{lineno}: expected 'participant task source path [trim]'")
        try:
            src = Source(parts[2].upper())
        except ValueError:
            raise AnnotationError(f"{path}:{lineno}: source must be BL or SW, got {parts[2]!r}") from None
        trim = base / parts[4] if len(parts) == 5 else None
        rows.append((parts[0], parts[1], src, base / parts[3], trim))
    if not rows:
        raise AnnotationError(f"{path}: manifest lists no recordings")
    return rows


def _batch(args) -> int:
    cfg = _config(args)
    rows = read_manifest(args.manifest)
    recs = []
    for pid, tid, src, wav, trim_file in rows:
        trim = read_annotations(trim_file) if trim_file else None
        recs.append(compute_sqms(_load(wav), pid, tid, src, cfg, trim=trim))
    recs = sort_records(recs)
    devs = pair_records(recs)
    for r in recs:
        print(f"{r.participant_id} {r.task_id} {r.source.value} "
              f"loudness={r.avg_loudness_phon:.2f} phon f0={r.avg_f0_hz:.2f} Hz "
              f"range={r.pitch_range_hz:.2f} Hz")
    _print_deviations(devs)
    emit_report(recs, devs, _fmt(args), args.out or "report.csv")
    return EXIT_OK


_COMMANDS = {"analyze": _analyze, "compare": _compare, "relay-sim": _relay, "batch": _batch}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"echoclip: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, OSError) as exc:
        print(f"echoclip: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"echoclip: pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())

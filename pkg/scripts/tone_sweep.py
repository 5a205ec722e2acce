"""Pitch accuracy and loudness level across a sweep of pure tones.

Prints one row per frequency: median F0 error, voiced fraction and the
average loudness level at a fixed SPL.

    python scripts/tone_sweep.py --spl 60 --duration 2
"""
from __future__ import annotations

import argparse
import dataclasses
from dataclasses import dataclass

import numpy as np

from echoclip.loudness import CalibrationSpec, average_loudness_level, loudness_contour
from echoclip.pitch import estimate_f0_contour
from echoclip.synth import tone


@dataclass(frozen=True)
class SweepConfig:
    f_start: float = 60.0
    f_stop: float = 480.0
    n_tones: int = 12
    duration_s: float = 2.0
    spl_db: float = 60.0


def run(cfg: SweepConfig) -> list[dict]:
    cal = CalibrationSpec()
    amp = cal.amplitude_for_spl(cfg.spl_db)
    rows = []
    for f in np.geomspace(cfg.f_start, cfg.f_stop, cfg.n_tones):
        buf = tone(f, cfg.duration_s, amplitude=amp)
        c = estimate_f0_contour(buf)
        err = np.abs(c.voiced_f0 / f - 1) if c.voiced.any() else np.array([np.nan])
        rows.append({
            "freq_hz": f,
            "voiced": c.voiced.mean(),
            "median_err_pct": 100 * np.median(err),
            "max_err_pct": 100 * np.max(err),
            "phon": average_loudness_level(loudness_contour(buf, calibration=cal)),
        })
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in dataclasses.fields(SweepConfig):
        p.add_argument("--" + f.name.replace("_", "-").removesuffix("-s").removesuffix("-db"),
                       dest=f.name, type=type(f.default), default=f.default)
    cfg = SweepConfig(**vars(p.parse_args(argv)))
    print(f"{'freq_hz':>9} {'voiced':>7} {'med_err%':>9} {'max_err%':>9} {'phon':>7}")
    for r in run(cfg):
        print(f"{r['freq_hz']:9.2f} {r['voiced']:7.2f} {r['median_err_pct']:9.3f} "
              f"{r['max_err_pct']:9.3f} {r['phon']:7.2f}")


if __name__ == "__main__":
    main()

"""Signal measurements: crest factor, long-term PSD, THD, windowed peak/RMS."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal as sps

DB_FLOOR = -200.0


def db20(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(20.0 * np.log10(x), DB_FLOOR)


def db10(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(x), DB_FLOOR)


def par(x) -> float:
    """Peak-to-average ratio in dB, ``20 log10(max|x| / rms(x))``."""
    x = np.asarray(x, dtype=float)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        raise ValueError("PAR is undefined for a silent signal")
    rms = math.sqrt(np.mean(x * x))
    return 20.0 * math.log10(peak / rms)


def psd_welch(x, sample_rate: float, segment_length: int = 8192, overlap: float = 0.5):
    """Long-term one-sided PSD by Welch averaging of Hann-windowed segments.

    Returns ``(freqs_hz, density_db_per_hz)``. Density is scaled so white
    noise of variance s2 reads ``10 log10(2 s2 / fs)``; zeros floor at -200 dB.
    """
    x = np.asarray(x, dtype=float)
    if segment_length < 2:
        raise ValueError("segment_length must be >= 2")
    if x.shape[0] < segment_length:
        raise ValueError(f"signal has {x.shape[0]} samples, shorter than segment_length={segment_length}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    f, p = sps.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=segment_length,
        noverlap=int(round(overlap * segment_length)),
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    return f, db10(p)


def tone_power(x, sample_rate: float, freq: float) -> float:
    """Power of the sinusoid at ``freq``, by Hann-windowed single-bin projection.

    For ``A sin(2 pi f t + phi)`` this returns ``A**2 / 2``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    w = np.hanning(n)
    t = np.arange(n)
    # Goertzel-style correlation with the complex exponential at an arbitrary frequency
    c = np.dot(x * w, np.exp(-2j * np.pi * freq * t / sample_rate))
    amp = 2.0 * abs(c) / np.sum(w)
    return amp * amp / 2.0


def thd(x, sample_rate: float, f0: float, n_harmonics: int = 5) -> float:
    """Harmonic distortion in percent, ``100 sqrt(sum_h P_h) / sqrt(P_1)`` for h = 2..H.

    Needs at least one second of steady tone. Harmonics at or above Nyquist
    are dropped with a warning.
    """
    x = np.asarray(x, dtype=float)
    if f0 <= 0:
        raise ValueError("f0 must be positive")
    if x.shape[0] < sample_rate:
        raise ValueError(f"need at least 1 s of signal ({int(sample_rate)} samples), got {x.shape[0]}")
    if n_harmonics < 2:
        raise ValueError("n_harmonics must be >= 2")
    usable = int(math.ceil(sample_rate / 2.0 / f0)) - 1
    if n_harmonics > usable:
        warnings.warn(f"harmonics above Nyquist dropped: n_harmonics {n_harmonics} -> {usable}", stacklevel=2)
        n_harmonics = usable
    p1 = tone_power(x, sample_rate, f0)
    total = float(np.mean(x * x))
    if total == 0.0 or p1 < 1e-3 * total:
        raise ValueError(f"no fundamental detected at {f0} Hz")
    ph = sum(tone_power(x, sample_rate, h * f0) for h in range(2, n_harmonics + 1))
    return 100.0 * math.sqrt(ph) / math.sqrt(p1)


def peak_stats(x, sample_rate: float, window_ms: float):
    """Peak and RMS (dBFS) over consecutive non-overlapping windows.

    Returns ``(start_s, peak_dbfs, rms_dbfs)``; a trailing partial window is kept.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    x = np.asarray(x, dtype=float)
    win = max(1, int(round(window_ms * sample_rate / 1000.0)))
    starts = np.arange(0, x.shape[0], win)
    peaks = np.array([np.max(np.abs(x[s:s + win])) for s in starts]) if starts.size else np.zeros(0)
    rms = np.array([math.sqrt(np.mean(x[s:s + win] ** 2)) for s in starts]) if starts.size else np.zeros(0)
    return starts / sample_rate, db20(peaks), db20(rms)


@dataclass
class AnalysisReport:
    par_db: float
    peak_dbfs: float
    rms_dbfs: float
    psd: list[tuple[float, float]] = field(default_factory=list)
    thd_percent: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def analyze(x, sample_rate: float, f0: float | None = None, segment_length: int = 8192) -> AnalysisReport:
    x = np.asarray(x, dtype=float)
    peak = float(np.max(np.abs(x)))
    rms = math.sqrt(float(np.mean(x * x)))
    f, p = psd_welch(x, sample_rate, min(segment_length, x.shape[0]))
    return AnalysisReport(
        par_db=par(x),
        peak_dbfs=float(db20(peak)),
        rms_dbfs=float(db20(rms)),
        psd=[(float(a), float(b)) for a, b in zip(f, p)],
        thd_percent=None if f0 is None else thd(x, sample_rate, f0),
    )


def write_rows(path, rows: list[dict], fmt: str = "csv") -> None:
    """Write ``rows`` as CSV (header + one record per row) or a JSON list."""
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else [])
        writer.writeheader()
        writer.writerows(rows)

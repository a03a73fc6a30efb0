"""Phase-matched M-band crossover filterbank.

Each crossover frequency is realised as a 4th-order Linkwitz-Riley pair
(two cascaded 2nd-order Butterworth sections) and every band that does not
take part in a crossover gets a 2nd-order all-pass at that frequency, so
all bands share the same phase and their sum has a flat magnitude.

Band ``i`` (1-indexed) runs through::

    HP(fc_1)^2 ... HP(fc_{i-1})^2, LP(fc_i)^2, AP(fc_{i+1}) ... AP(fc_{M-1})

and the top band is the cascade of every high-pass pair.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from mbdp.errors import ConfigError, SampleRateMismatch

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BiquadCoeffs:
    """Second-order section, denominator normalised so that ``a0 == 1``."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.b0, self.b1, self.b2, self.a1, self.a2])

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])

    def response(self, freqs, fs: float) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        w = 2.0 * np.pi * np.asarray(freqs, dtype=float) / fs
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        return (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)


def _check_fc(fc: float, fs: float) -> None:
    if not fs > 0:
        raise ConfigError("sample_rate", f"must be positive, got {fs!r}")
    if not 0.0 < fc < fs / 2.0:
        raise ConfigError("fc", f"crossover frequency {fc!r} Hz outside (0, {fs / 2.0}) Hz")


def _butterworth_denominator(fc: float, fs: float) -> tuple[float, float, float]:
    # pre-warped analog cutoff, so fc lands exactly after the bilinear map
    k = math.tan(math.pi * fc / fs)
    kk = k * k
    norm = 1.0 + SQRT2 * k + kk
    return k, 2.0 * (kk - 1.0) / norm, (1.0 - SQRT2 * k + kk) / norm


def design_lowpass(fc: float, fs: float) -> BiquadCoeffs:
    """2nd-order Butterworth low-pass (Q = 1/sqrt(2)) via the bilinear transform."""
    _check_fc(fc, fs)
    k, a1, a2 = _butterworth_denominator(fc, fs)
    g = k * k / (1.0 + SQRT2 * k + k * k)
    return BiquadCoeffs(g, 2.0 * g, g, a1, a2)


def design_highpass(fc: float, fs: float) -> BiquadCoeffs:
    """2nd-order Butterworth high-pass, the mirror image of :func:`design_lowpass`."""
    _check_fc(fc, fs)
    k, a1, a2 = _butterworth_denominator(fc, fs)
    g = 1.0 / (1.0 + SQRT2 * k + k * k)
    return BiquadCoeffs(g, -2.0 * g, g, a1, a2)


def design_allpass(fc: float, fs: float) -> BiquadCoeffs:
    """2nd-order all-pass with the phase of ``LP(fc)^2 + HP(fc)^2``.

    The analog sum of the squared Butterworth pair is
    ``(s^2 - sqrt(2) s + 1) / (s^2 + sqrt(2) s + 1)``; its bilinear image
    has the mirrored denominator as numerator.
    """
    _check_fc(fc, fs)
    _, a1, a2 = _butterworth_denominator(fc, fs)
    return BiquadCoeffs(a2, a1, 1.0, a1, a2)


@dataclass(frozen=True)
class CrossoverSpec:
    """Sample rate plus strictly increasing crossover frequencies.

    ``n_bands`` is ``len(crossovers) + 1``; no crossovers means a single
    pass-through band.
    """

    sample_rate: float
    crossovers: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "crossovers", tuple(float(f) for f in self.crossovers))
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise ConfigError("sample_rate", f"must be positive, got {self.sample_rate!r}")
        nyq = self.sample_rate / 2.0
        prev = 0.0
        for i, fc in enumerate(self.crossovers):
            if not 0.0 < fc < nyq:
                raise ConfigError(f"crossover_hz[{i}]", f"{fc} Hz outside (0, {nyq}) Hz")
            if fc <= prev:
                raise ConfigError(
                    f"crossover_hz[{i}]", f"{fc} Hz not above previous crossover {prev} Hz"
                )
            prev = fc

    @property
    def n_bands(self) -> int:
        return len(self.crossovers) + 1


def band_chain(spec: CrossoverSpec, band: int) -> list[tuple[str, float]]:
    """Section layout of ``band`` (0-indexed) as ``(kind, fc)`` pairs."""
    chain = []
    for j, fc in enumerate(spec.crossovers):
        if j < band:
            chain += [("hp", fc), ("hp", fc)]
        elif j == band:
            chain += [("lp", fc), ("lp", fc)]
        else:
            chain.append(("ap", fc))
    return chain


_DESIGNERS = {"lp": design_lowpass, "hp": design_highpass, "ap": design_allpass}


@numba.njit(cache=True)
def _run_chains(x, coeffs, n_sections, state, out):
    # transposed direct form II, one chain per band, state carried across calls
    n_bands = out.shape[0]
    n = x.shape[0]
    for band in range(n_bands):
        ns = n_sections[band]
        for t in range(n):
            v = x[t]
            for s in range(ns):
                b0 = coeffs[band, s, 0]
                b1 = coeffs[band, s, 1]
                b2 = coeffs[band, s, 2]
                a1 = coeffs[band, s, 3]
                a2 = coeffs[band, s, 4]
                y = b0 * v + state[band, s, 0]
                state[band, s, 0] = b1 * v - a1 * y + state[band, s, 1]
                state[band, s, 1] = b2 * v - a2 * y
                v = y
            out[band, t] = v


@dataclass
class BandSplitter:
    """Streaming M-band splitter built from a :class:`CrossoverSpec`."""

    spec: CrossoverSpec
    chains: list[list[BiquadCoeffs]] = field(init=False)
    layout: list[list[tuple[str, float]]] = field(init=False)

    def __post_init__(self):
        fs = self.spec.sample_rate
        self.layout = [band_chain(self.spec, b) for b in range(self.spec.n_bands)]
        self.chains = [[_DESIGNERS[kind](fc, fs) for kind, fc in chain] for chain in self.layout]
        width = max(1, max(len(c) for c in self.chains))
        self._coeffs = np.zeros((self.n_bands, width, 5))
        self._n_sections = np.zeros(self.n_bands, dtype=np.int64)
        for b, chain in enumerate(self.chains):
            self._n_sections[b] = len(chain)
            for s, sec in enumerate(chain):
                self._coeffs[b, s] = sec.as_array()
        self._state = np.zeros((self.n_bands, width, 2))

    @property
    def n_bands(self) -> int:
        return self.spec.n_bands

    @property
    def sample_rate(self) -> float:
        return self.spec.sample_rate

    def reset(self) -> None:
        self._state[:] = 0.0

    def split(self, block, out: np.ndarray | None = None, sample_rate: float | None = None):
        """Filter ``block`` into ``(n_bands, len(block))`` band signals.

        Filter state persists between calls, so a long signal may be fed in
        arbitrary pieces. Pass ``out`` to reuse a buffer.
        """
        if sample_rate is not None and sample_rate != self.spec.sample_rate:
            raise SampleRateMismatch(
                f"block sample rate {sample_rate} Hz != splitter rate {self.spec.sample_rate} Hz"
            )
        x = np.asarray(block)
        if out is None:
            out = np.empty((self.n_bands, x.shape[0]))
        _run_chains(x, self._coeffs, self._n_sections, self._state, out)
        return out

    def frequency_response(self, band_index: int, freqs) -> np.ndarray:
        """Exact complex response of one band (0-indexed) at ``freqs`` Hz."""
        if not 0 <= band_index < self.n_bands:
            raise IndexError(f"band index {band_index} out of range for {self.n_bands} bands")
        freqs = np.asarray(freqs, dtype=float)
        nyq = self.sample_rate / 2.0
        if np.any(freqs < 0) or np.any(freqs > nyq):
            raise ValueError(f"frequencies must lie in [0, {nyq}] Hz")
        h = np.ones(freqs.shape, dtype=complex)
        for sec in self.chains[band_index]:
            h *= sec.response(freqs, self.sample_rate)
        return h

    def sum_response(self, freqs) -> np.ndarray:
        return sum(self.frequency_response(b, freqs) for b in range(self.n_bands))


def build_splitter(spec: CrossoverSpec) -> BandSplitter:
    return BandSplitter(spec)


def log_grid(f_lo: float, f_hi: float, n: int = 1024) -> np.ndarray:
    return np.geomspace(f_lo, f_hi, n)


def response_table(splitter: BandSplitter, freqs) -> list[dict]:
    """Rows of ``frequency_hz, band_index, magnitude_db, phase_rad``.

    One block of rows per band (``band_index`` 1..M) followed by the band
    sum (``band_index == "sum"``).
    """
    freqs = np.asarray(freqs, dtype=float)
    responses = [(str(b + 1), splitter.frequency_response(b, freqs)) for b in range(splitter.n_bands)]
    responses.append(("sum", splitter.sum_response(freqs)))
    rows = []
    for label, h in responses:
        mag = 20.0 * np.log10(np.maximum(np.abs(h), 1e-300))
        phase = np.angle(h)
        for f, m, p in zip(freqs, mag, phase):
            rows.append(
                {"frequency_hz": float(f), "band_index": label, "magnitude_db": float(m), "phase_rad": float(p)}
            )
    return rows


def write_response_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["frequency_hz", "band_index", "magnitude_db", "phase_rad"])
        writer.writeheader()
        writer.writerows(rows)

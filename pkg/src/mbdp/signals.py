"""Synthetic test stimuli. Every random generator takes an explicit seed."""

from __future__ import annotations

import numpy as np


def _time(duration: float, sample_rate: float) -> np.ndarray:
    return np.arange(int(round(duration * sample_rate))) / sample_rate


def sine(freq: float, duration: float, sample_rate: float, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    return amplitude * np.sin(2.0 * np.pi * freq * _time(duration, sample_rate) + phase)


def white_noise(duration: float, sample_rate: float, rms: float = 1.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rms * rng.standard_normal(int(round(duration * sample_rate)))


def pink_noise(duration: float, sample_rate: float, rms: float = 1.0, seed: int = 0) -> np.ndarray:
    """1/f noise by spectral shaping of white noise, scaled to ``rms``."""
    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = np.ones_like(f)
    shape[1:] = 1.0 / np.sqrt(f[1:])
    shape[0] = 0.0
    x = np.fft.irfft(spec * shape, n)
    return x * (rms / np.sqrt(np.mean(x * x)))


def am_noise(duration: float, sample_rate: float, rms: float = 0.1, rate_hz: float = 4.0, seed: int = 0) -> np.ndarray:
    """Speech-like noise: pink noise under a syllable-rate amplitude envelope."""
    t = _time(duration, sample_rate)
    env = 0.5 * (1.0 + np.sin(2.0 * np.pi * rate_hz * t)) ** 2
    x = pink_noise(duration, sample_rate, 1.0, seed) * env
    return x * (rms / np.sqrt(np.mean(x * x)))


def log_sweep(f_start: float, f_stop: float, duration: float, sample_rate: float, amplitude: float = 1.0) -> np.ndarray:
    t = _time(duration, sample_rate)
    k = np.log(f_stop / f_start)
    phase = 2.0 * np.pi * f_start * duration / k * (np.exp(t * k / duration) - 1.0)
    return amplitude * np.sin(phase)


GENERATORS = ("sine", "white", "pink", "am", "sweep")


def generate(kind: str, duration: float, sample_rate: float, amplitude: float = 1.0, freq: float = 1000.0, seed: int = 0) -> np.ndarray:
    """Dispatch used by the CLI; ``amplitude`` is peak for tones, RMS for noise."""
    if kind == "sine":
        return sine(freq, duration, sample_rate, amplitude)
    if kind == "white":
        return white_noise(duration, sample_rate, amplitude, seed)
    if kind == "pink":
        return pink_noise(duration, sample_rate, amplitude, seed)
    if kind == "am":
        return am_noise(duration, sample_rate, amplitude, seed=seed)
    if kind == "sweep":
        return log_sweep(20.0, min(20000.0, 0.45 * sample_rate), duration, sample_rate, amplitude)
    raise ValueError(f"unknown signal kind {kind!r}; choose from {GENERATORS}")

"""Per-band two-knee compressor.

Signal flow for one band: RMS level estimate -> static two-knee curve
(dB gain) -> linear gain -> one-pole gain smoother -> gain applied to the
look-ahead-delayed input. Gains are computed once per frame (``hop``
samples) and linearly interpolated across the following frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from mbdp.errors import ConfigError

LEVEL_FLOOR_DB = -120.0
MS_EPS = 1e-12
CURVE_MODES = ("paper_exact", "continuous")

# kernel parameter vector layout
_P_LW, _P_HI, _P_CR1, _P_CR2, _P_CONT, _P_A_RMS, _P_A_ATT, _P_A_REL = range(8)
_P_A_FAST, _P_A_SLOW, _P_TRIG, _P_EVENT = range(8, 12)
_N_PARAMS = 12

# kernel float state layout
_S_MS, _S_FAST, _S_SLOW, _S_GAIN, _S_PREV, _S_MIN = range(6)


@dataclass(frozen=True)
class EventDetectParams:
    """Dual-envelope transient detector settings (off by default)."""

    enabled: bool = False
    fast_window_ms: float = 1.0
    slow_window_ms: float = 50.0
    trigger_db: float = 6.0


@dataclass(frozen=True)
class CompressorParams:
    """Static curve plus timing for one band.

    Levels and thresholds are dBFS; times are milliseconds.
    """

    thre_lw: float = -30.0
    thre_hi: float = -10.0
    cr1: float = 2.0
    cr2: float = 4.0
    rms_window_ms: float = 20.0
    attack_ms: float = 5.0
    release_ms: float = 50.0
    lookahead_ms: float = 5.0
    curve_mode: str = "paper_exact"
    event_detect: EventDetectParams = field(default_factory=EventDetectParams)

    def validate(self, path: str = "") -> "CompressorParams":
        pre = f"{path}." if path else ""
        for name in ("thre_lw", "thre_hi", "cr1", "cr2", "rms_window_ms", "attack_ms", "release_ms", "lookahead_ms"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(pre + name, "must be finite")
        if not self.thre_lw < self.thre_hi:
            raise ConfigError(pre + "thre_lw", f"must be below thre_hi ({self.thre_lw} >= {self.thre_hi})")
        if self.thre_hi > 0.0:
            raise ConfigError(pre + "thre_hi", f"must be <= 0 dB, got {self.thre_hi}")
        if self.cr1 < 1.0:
            raise ConfigError(pre + "cr1", f"must be >= 1, got {self.cr1}")
        if self.cr2 < self.cr1:
            raise ConfigError(pre + "cr2", f"must be >= cr1 ({self.cr2} < {self.cr1})")
        for name in ("rms_window_ms", "attack_ms", "release_ms"):
            if getattr(self, name) <= 0:
                raise ConfigError(pre + name, "must be positive")
        if self.lookahead_ms < 0:
            raise ConfigError(pre + "lookahead_ms", "must be >= 0")
        if self.curve_mode not in CURVE_MODES:
            raise ConfigError(pre + "curve_mode", f"must be one of {CURVE_MODES}, got {self.curve_mode!r}")
        ev = self.event_detect
        if ev.fast_window_ms <= 0 or ev.slow_window_ms <= 0:
            raise ConfigError(pre + "event_detect", "windows must be positive")
        return self

    def lookahead_samples(self, sample_rate: float) -> int:
        return int(round(self.lookahead_ms * sample_rate / 1000.0))


def frame_hop(sample_rate: float) -> int:
    """Gain-update hop: 64 samples at 48 kHz, scaled with the rate."""
    return max(1, int(round(64.0 * sample_rate / 48000.0)))


def _coef(time_s: float) -> float:
    return math.exp(-1.0 / time_s) if time_s > 0 else 0.0


# -- static curve ------------------------------------------------------------


def compression_gain_db(level, params: CompressorParams):
    """Two-knee static gain ``p`` (dB, <= 0) for input level(s) in dBFS.

    Below ``thre_lw`` the gain is 0 dB. Between the knees the slope is set
    by ``cr1``; above ``thre_hi`` by ``cr2``. In ``paper_exact`` mode the
    upper segment is referenced to ``thre_hi`` alone, which leaves a jump
    at ``thre_hi``; ``continuous`` mode adds the lower segment's full
    reduction so the curve is continuous.
    """
    L = np.asarray(level, dtype=float)
    lw, hi = params.thre_lw, params.thre_hi
    k1 = 1.0 - 1.0 / params.cr1
    k2 = 1.0 - 1.0 / params.cr2
    upper = k2 * (hi - L)
    if params.curve_mode == "continuous":
        upper = upper + k1 * (lw - hi)
    p = np.where(L < lw, 0.0, np.where(L < hi, k1 * (lw - L), upper))
    return float(p) if p.ndim == 0 else p


def linear_gain(p_db):
    """dB gain to linear multiplier, ``10 ** (p / 20)``."""
    q = np.power(10.0, np.asarray(p_db, dtype=float) / 20.0)
    return float(q) if q.ndim == 0 else q


@numba.njit(cache=True)
def _curve_db(L, lw, hi, cr1, cr2, continuous):
    if L < lw:
        return 0.0
    k1 = 1.0 - 1.0 / cr1
    if L < hi:
        return k1 * (lw - L)
    p = (1.0 - 1.0 / cr2) * (hi - L)
    if continuous:
        p = p + k1 * (lw - hi)
    return p


@numba.njit(cache=True)
def _level_db(mean_square):
    L = 10.0 * math.log10(mean_square + MS_EPS)
    return L if L > LEVEL_FLOOR_DB else LEVEL_FLOOR_DB


@numba.njit(cache=True)
def _smooth(g, target, a_att, a_rel, event):
    a = a_att if (target < g or event) else a_rel
    return target + a * (g - target)


def curve_table(params: CompressorParams, levels=None) -> list[dict]:
    """Static curve rows: ``input_level_db, gain_db, output_level_db``."""
    if levels is None:
        levels = np.arange(-100.0, 0.0 + 0.25, 0.5)
    levels = np.asarray(levels, dtype=float)
    gains = np.atleast_1d(compression_gain_db(levels, params))
    return [
        {"input_level_db": float(L), "gain_db": float(p), "output_level_db": float(L + p)}
        for L, p in zip(levels, gains)
    ]


def write_curve_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["input_level_db", "gain_db", "output_level_db"])
        writer.writeheader()
        writer.writerows(rows)


# -- smoother -----------------------------------------------------------------


def smooth_gain(gain: float, target: float, params: CompressorParams, frame_period: float, event: bool = False) -> float:
    """One frame of the one-pole gain smoother.

    Moves ``gain`` towards ``target`` with the attack time constant when the
    gain is falling (or a transient ``event`` fired), else with release.
    ``frame_period`` is in seconds.
    """
    if not target > 0:
        raise ValueError(f"target gain must be positive, got {target}")
    a_att = math.exp(-frame_period / (params.attack_ms / 1000.0))
    a_rel = math.exp(-frame_period / (params.release_ms / 1000.0))
    return float(_smooth(gain, target, a_att, a_rel, event))


# -- state and kernels ----------------------------------------------------------


class CompressorState:
    """Mutable per-band state: estimators, smoothed gain, frame clock, delay line."""

    def __init__(self, lookahead: int = 0):
        self.fvars = np.zeros(6)
        self.ivars = np.zeros(2, dtype=np.int64)  # frame position, delay write index
        self.delay = np.zeros(max(lookahead, 1))
        self.lookahead = lookahead
        self.reset()

    def reset(self) -> None:
        self.fvars[:] = 0.0
        self.fvars[_S_GAIN] = 1.0
        self.fvars[_S_PREV] = 1.0
        self.fvars[_S_MIN] = 1.0
        self.ivars[:] = 0
        self.delay[:] = 0.0

    @property
    def mean_square(self) -> float:
        return float(self.fvars[_S_MS])

    @property
    def gain(self) -> float:
        return float(self.fvars[_S_GAIN])

    @property
    def min_gain(self) -> float:
        return float(self.fvars[_S_MIN])

    @property
    def frame_pos(self) -> int:
        return int(self.ivars[0])


@numba.njit(cache=True)
def _level_frames(x, a_rms, hop, fvars, ivars, levels):
    nf = 0
    ms = fvars[0]
    pos = ivars[0]
    for t in range(x.shape[0]):
        v = x[t] * x[t]
        ms = v + a_rms * (ms - v)
        pos += 1
        if pos == hop:
            levels[nf] = _level_db(ms)
            nf += 1
            pos = 0
    fvars[0] = ms
    ivars[0] = pos
    return nf


@numba.njit(cache=True)
def _event_frames(x, a_fast, a_slow, trigger_db, hop, fvars, ivars, events):
    nf = 0
    fast = fvars[1]
    slow = fvars[2]
    pos = ivars[0]
    for t in range(x.shape[0]):
        v = x[t] * x[t]
        fast = v + a_fast * (fast - v)
        slow = v + a_slow * (slow - v)
        pos += 1
        if pos == hop:
            events[nf] = _level_db(fast) - _level_db(slow) > trigger_db
            nf += 1
            pos = 0
    fvars[1] = fast
    fvars[2] = slow
    ivars[0] = pos
    return nf


@numba.njit(cache=True)
def _compress(x, out, P, hop, lookahead, fvars, ivars, delay, trace):
    ms = fvars[0]
    fast = fvars[1]
    slow = fvars[2]
    g_cur = fvars[3]
    g_prev = fvars[4]
    g_min = fvars[5]
    pos = ivars[0]
    wr = ivars[1]
    lw = P[0]
    hi = P[1]
    cr1 = P[2]
    cr2 = P[3]
    continuous = P[4] != 0.0
    a_rms = P[5]
    a_att = P[6]
    a_rel = P[7]
    a_fast = P[8]
    a_slow = P[9]
    trigger = P[10]
    use_event = P[11] != 0.0
    tracing = trace.shape[0] > 0
    nf = 0
    inv_hop = 1.0 / hop
    for t in range(x.shape[0]):
        xin = x[t]
        v = xin * xin
        ms = v + a_rms * (ms - v)
        if use_event:
            fast = v + a_fast * (fast - v)
            slow = v + a_slow * (slow - v)
        pos += 1
        g = g_prev + (g_cur - g_prev) * (pos * inv_hop)
        if pos == hop:
            L = _level_db(ms)
            q = 10.0 ** (_curve_db(L, lw, hi, cr1, cr2, continuous) / 20.0)
            event = False
            if use_event:
                event = _level_db(fast) - _level_db(slow) > trigger
            g_prev = g_cur
            g_cur = _smooth(g_cur, q, a_att, a_rel, event)
            if g_cur < g_min:
                g_min = g_cur
            if tracing and nf < trace.shape[0]:
                trace[nf, 0] = L
                trace[nf, 1] = 1.0 if event else 0.0
                trace[nf, 2] = g_cur
            nf += 1
            pos = 0
        if lookahead > 0:
            d = delay[wr]
            delay[wr] = xin
            wr += 1
            if wr == lookahead:
                wr = 0
        else:
            d = xin
        out[t] = d * g
    fvars[0] = ms
    fvars[1] = fast
    fvars[2] = slow
    fvars[3] = g_cur
    fvars[4] = g_prev
    fvars[5] = g_min
    ivars[0] = pos
    ivars[1] = wr
    return nf


# -- standalone stage operations ---------------------------------------------------


def rms_level(state: CompressorState, block, params: CompressorParams, sample_rate: float) -> np.ndarray:
    """Run the RMS level estimator over ``block``; one dBFS level per completed frame.

    Advances the mean-square accumulator and frame clock of ``state``.
    """
    x = np.ascontiguousarray(block, dtype=float)
    hop = frame_hop(sample_rate)
    levels = np.empty(x.shape[0] // hop + 1)
    a = _coef(params.rms_window_ms / 1000.0 * sample_rate)
    n = _level_frames(x, a, hop, state.fvars, state.ivars, levels)
    return levels[:n]


def detect_event(state: CompressorState, block, params: CompressorParams, sample_rate: float) -> np.ndarray:
    """Transient flags, one per completed frame.

    A frame is flagged when the fast envelope level exceeds the slow one by
    more than ``trigger_db``.
    """
    ev = params.event_detect
    x = np.ascontiguousarray(block, dtype=float)
    hop = frame_hop(sample_rate)
    flags = np.zeros(x.shape[0] // hop + 1, dtype=np.bool_)
    n = _event_frames(
        x,
        _coef(ev.fast_window_ms / 1000.0 * sample_rate),
        _coef(ev.slow_window_ms / 1000.0 * sample_rate),
        ev.trigger_db,
        hop,
        state.fvars,
        state.ivars,
        flags,
    )
    return flags[:n]


_NO_TRACE = np.zeros((0, 3))


class Compressor:
    """Streaming single-band compressor.

    ``process`` may be called with blocks of any length; output has the same
    length as the input and lags it by ``latency`` samples.
    """

    def __init__(self, params: CompressorParams, sample_rate: float):
        self.sample_rate = float(sample_rate)
        self.hop = frame_hop(self.sample_rate)
        self._P = np.zeros(_N_PARAMS)
        self.state = CompressorState(0)
        self.set_params(params)

    @property
    def latency(self) -> int:
        return self.state.lookahead

    @property
    def frame_period(self) -> float:
        return self.hop / self.sample_rate

    def set_params(self, params: CompressorParams) -> None:
        """Swap parameters, keeping state unless the look-ahead length changes."""
        params.validate()
        self.params = params
        fs = self.sample_rate
        ev = params.event_detect
        P = self._P
        P[_P_LW] = params.thre_lw
        P[_P_HI] = params.thre_hi
        P[_P_CR1] = params.cr1
        P[_P_CR2] = params.cr2
        P[_P_CONT] = 1.0 if params.curve_mode == "continuous" else 0.0
        P[_P_A_RMS] = _coef(params.rms_window_ms / 1000.0 * fs)
        P[_P_A_ATT] = math.exp(-self.frame_period / (params.attack_ms / 1000.0))
        P[_P_A_REL] = math.exp(-self.frame_period / (params.release_ms / 1000.0))
        P[_P_A_FAST] = _coef(ev.fast_window_ms / 1000.0 * fs)
        P[_P_A_SLOW] = _coef(ev.slow_window_ms / 1000.0 * fs)
        P[_P_TRIG] = ev.trigger_db
        P[_P_EVENT] = 1.0 if ev.enabled else 0.0
        lookahead = params.lookahead_samples(fs)
        if lookahead != self.state.lookahead:
            self.state = CompressorState(lookahead)

    def reset(self) -> None:
        self.state.reset()

    def process(self, block, out: np.ndarray | None = None, trace: np.ndarray | None = None) -> np.ndarray:
        """Compress one block.

        ``trace``, if given, is an ``(n_frames, 3)`` array that receives
        ``(level_db, event, smoothed_gain)`` for each frame completed in this
        block; rows beyond its length are dropped.
        """
        x = np.asarray(block)
        if out is None:
            out = np.empty(x.shape[0])
        st = self.state
        _compress(
            x, out, self._P, self.hop, st.lookahead, st.fvars, st.ivars, st.delay,
            _NO_TRACE if trace is None else trace,
        )
        return out


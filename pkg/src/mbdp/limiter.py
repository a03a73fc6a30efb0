"""Look-ahead peak limiter (one per band for the MBL, one for the FBL).

For every incoming sample the gain that would bring it to the threshold is
computed; the minimum over the look-ahead window is held, released
exponentially, and box-averaged over the attack length. Because the
attack ramp never spans more than the look-ahead window, the gain applied
to a sample is never above the gain that sample requires, so the output
stays under the threshold by construction. A final hard clamp absorbs
floating-point rounding and is counted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from mbdp.errors import ConfigError

# relative headroom on the required gain; keeps x * g below the threshold after rounding
HEADROOM = 1e-12

_F_ENV, _F_REL, _F_MIN, _F_MAXRATIO = range(4)
_I_DELAY, _I_REQ, _I_SMOOTH, _I_CLAMP = range(4)


def db_to_amp(db: float) -> float:
    return 10.0 ** (db / 20.0)


@dataclass(frozen=True)
class LimiterParams:
    """Peak threshold (linear, full scale = 1.0) and timing in milliseconds."""

    threshold: float = db_to_amp(-0.1)
    lookahead_ms: float = 1.5
    attack_ms: float = 1.0
    release_ms: float = 50.0

    @classmethod
    def from_dbfs(cls, threshold_dbfs: float, **kw) -> "LimiterParams":
        return cls(threshold=db_to_amp(threshold_dbfs), **kw)

    @property
    def threshold_dbfs(self) -> float:
        return 20.0 * math.log10(self.threshold)

    def validate(self, path: str = "") -> "LimiterParams":
        pre = f"{path}." if path else ""
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError(pre + "threshold_dbfs", f"threshold must be in (0, 1] linear, got {self.threshold}")
        if not (math.isfinite(self.lookahead_ms) and self.lookahead_ms >= 0):
            raise ConfigError(pre + "lookahead_ms", "must be >= 0")
        for name in ("attack_ms", "release_ms"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(pre + name, "must be positive")
        return self

    def lookahead_samples(self, sample_rate: float) -> int:
        return int(round(self.lookahead_ms * sample_rate / 1000.0))

    def attack_samples(self, sample_rate: float) -> int:
        return min(int(round(self.attack_ms * sample_rate / 1000.0)), self.lookahead_samples(sample_rate))

    def release_coef(self, sample_rate: float) -> float:
        return math.exp(-1.0 / (self.release_ms / 1000.0 * sample_rate))


class LimiterState:
    """Delay line, required-gain and smoothing windows, meters."""

    def __init__(self, lookahead: int = 0, attack: int = 0):
        self.lookahead = lookahead
        self.attack = attack
        self.delay = np.zeros(max(lookahead, 1))
        self.required = np.ones(lookahead + 1)
        self.smoothing = np.ones(attack + 1)
        self.fvars = np.zeros(4)
        self.ivars = np.zeros(4, dtype=np.int64)
        self.reset()

    def reset(self) -> None:
        self.delay[:] = 0.0
        self.required[:] = 1.0
        self.smoothing[:] = 1.0
        self.fvars[:] = [0.0, 1.0, 1.0, 0.0]
        self.ivars[:] = 0

    @property
    def envelope(self) -> float:
        return float(self.fvars[_F_ENV])

    @property
    def gain(self) -> float:
        return float(self.smoothing.sum() / self.smoothing.shape[0])

    @property
    def min_gain(self) -> float:
        return float(self.fvars[_F_MIN])

    @property
    def max_ratio(self) -> float:
        """Largest pre-clamp ``|y| / threshold`` seen so far."""
        return float(self.fvars[_F_MAXRATIO])

    @property
    def clamp_count(self) -> int:
        return int(self.ivars[_I_CLAMP])


@numba.njit(cache=True)
def _limit(x, out, gains, threshold, beta, delay, required, smoothing, fvars, ivars):
    L = required.shape[0] - 1
    A = smoothing.shape[0] - 1
    n_avg = float(A + 1)
    env = fvars[0]
    e_prev = fvars[1]
    g_min = fvars[2]
    max_ratio = fvars[3]
    di = ivars[0]
    ri = ivars[1]
    si = ivars[2]
    clamps = ivars[3]
    t_safe = threshold * (1.0 - HEADROOM)
    record = gains.shape[0] > 0
    for t in range(x.shape[0]):
        xin = x[t]
        a = abs(xin)
        # metering envelope: instant rise, exponential fall
        be = beta * env
        env = a if a > be else be

        required[ri] = 1.0 if a <= threshold else t_safe / a
        ri += 1
        if ri > L:
            ri = 0
        h = required[0]
        for k in range(1, L + 1):
            if required[k] < h:
                h = required[k]
        e = h if h < e_prev else h + beta * (e_prev - h)
        e_prev = e
        smoothing[si] = e
        si += 1
        if si > A:
            si = 0
        acc = 0.0
        for k in range(A + 1):
            acc += smoothing[k]
        # divide rather than multiply by 1/n so a window of ones gives exactly 1.0
        g = acc / n_avg

        if L > 0:
            d = delay[di]
            delay[di] = xin
            di += 1
            if di == L:
                di = 0
        else:
            d = xin
        y = d * g
        ratio = abs(y) / threshold
        if ratio > max_ratio:
            max_ratio = ratio
        if abs(y) > threshold:
            y = threshold if y > 0 else -threshold
            clamps += 1
        if g < g_min:
            g_min = g
        if record:
            gains[t] = g
        out[t] = y
    fvars[0] = env
    fvars[1] = e_prev
    fvars[2] = g_min
    fvars[3] = max_ratio
    ivars[0] = di
    ivars[1] = ri
    ivars[2] = si
    ivars[3] = clamps


@numba.njit(cache=True)
def _peak_env(x, beta, fvars, out):
    env = fvars[0]
    for t in range(x.shape[0]):
        a = abs(x[t])
        be = beta * env
        env = a if a > be else be
        out[t] = env
    fvars[0] = env


_NO_GAINS = np.zeros(0)


class Limiter:
    """Streaming look-ahead peak limiter with a hard output ceiling."""

    def __init__(self, params: LimiterParams, sample_rate: float):
        self.sample_rate = float(sample_rate)
        self.state = LimiterState()
        self.set_params(params)

    @property
    def latency(self) -> int:
        return self.state.lookahead

    def set_params(self, params: LimiterParams) -> None:
        """Swap parameters; state survives unless window lengths change."""
        params.validate()
        self.params = params
        fs = self.sample_rate
        self._beta = params.release_coef(fs)
        la, at = params.lookahead_samples(fs), params.attack_samples(fs)
        if (la, at) != (self.state.lookahead, self.state.attack):
            self.state = LimiterState(la, at)

    def reset(self) -> None:
        self.state.reset()

    def process(self, block, out: np.ndarray | None = None, gain_out: np.ndarray | None = None) -> np.ndarray:
        """Limit one block; ``gain_out`` optionally receives the applied gain per sample."""
        x = np.asarray(block)
        if out is None:
            out = np.empty(x.shape[0])
        st = self.state
        _limit(
            x, out, _NO_GAINS if gain_out is None else gain_out,
            self.params.threshold, self._beta,
            st.delay, st.required, st.smoothing, st.fvars, st.ivars,
        )
        return out


def limit_block(limiter: Limiter, block, out=None) -> np.ndarray:
    return limiter.process(block, out=out)


def peak_envelope(state: LimiterState, block, params: LimiterParams, sample_rate: float) -> np.ndarray:
    """Per-sample peak envelope ``e[t] = max(|x[t]|, beta * e[t-1])``.

    ``beta = exp(-1 / (release * fs))``: instantaneous rise, exponential fall.
    """
    x = np.ascontiguousarray(block, dtype=float)
    out = np.empty(x.shape[0])
    _peak_env(x, params.release_coef(sample_rate), state.fvars, out)
    return out


def mbl_process(limiters: Sequence[Limiter], bands: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Apply one limiter per band row of ``bands``; all look-aheads must match."""
    if len(limiters) != bands.shape[0]:
        raise ValueError(f"{len(limiters)} limiters for {bands.shape[0]} bands")
    check_equal_lookahead([lim.latency for lim in limiters], "bands[*].limiter.lookahead_ms")
    if out is None:
        out = np.empty(bands.shape)
    for k, lim in enumerate(limiters):
        lim.process(bands[k], out=out[k])
    return out


def check_equal_lookahead(lookaheads: Sequence[int], path: str) -> None:
    if len(set(lookaheads)) > 1:
        raise ConfigError(path, f"look-aheads differ across bands {list(lookaheads)}; bands would misalign at the mixer")


def write_gain_trace(path, gains, start_index: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "gain"])
        for i, g in enumerate(gains, start=start_index):
            writer.writerow([i, repr(float(g))])

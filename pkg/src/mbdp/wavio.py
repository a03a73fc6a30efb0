"""Minimal RIFF/WAVE reader and writer.

Supports 16- and 24-bit integer PCM and 32-bit IEEE float, including the
WAVE_FORMAT_EXTENSIBLE header variant on read. Samples are exchanged as
float64 arrays of shape ``(frames, channels)`` normalised to +/-1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(Exception):
    """Unreadable or unsupported WAV file."""


@dataclass
class WavAudio:
    samples: np.ndarray  # (frames, channels), float64 in +/-1.0
    sample_rate: int
    bits: int = 32
    is_float: bool = True

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def frames(self) -> int:
        return self.samples.shape[0]


def read_wav(path) -> WavAudio:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise WavError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or len(fmt) < 16:
        raise WavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavError(f"{path}: missing data chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavError(f"{path}: truncated extensible fmt chunk")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels < 1:
        raise WavError(f"{path}: no channels")
    if tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        is_float = True
    elif tag == WAVE_FORMAT_PCM and bits in (16, 24):
        is_float = False
    else:
        raise WavError(f"{path}: unsupported format tag {tag:#06x} with {bits} bits")
    width = bits // 8
    frames = len(payload) // (width * channels)
    raw = payload[: frames * width * channels]
    if is_float:
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif bits == 16:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    return WavAudio(x.reshape(frames, channels), int(rate), bits, is_float)


def write_wav(path, samples, sample_rate: int, bits: int = 32, is_float: bool = True) -> None:
    """Write ``samples`` (frames[, channels]) as 32-bit float or 16/24-bit PCM.

    Integer formats round to the nearest code and saturate at full scale.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    frames, channels = x.shape
    if is_float:
        if bits != 32:
            raise ValueError("float WAV output must be 32-bit")
        payload = x.astype("<f4").tobytes()
        tag = WAVE_FORMAT_IEEE_FLOAT
    elif bits == 16:
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag = WAVE_FORMAT_PCM
    elif bits == 24:
        v = np.clip(np.round(x * float(1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int32).ravel()
        b = np.empty((v.shape[0], 3), dtype=np.uint8)
        b[:, 0] = v & 0xFF
        b[:, 1] = (v >> 8) & 0xFF
        b[:, 2] = (v >> 16) & 0xFF
        payload = b.tobytes()
        tag = WAVE_FORMAT_PCM
    else:
        raise ValueError(f"unsupported integer bit depth {bits}")
    width = bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, int(sample_rate), int(sample_rate) * channels * width, channels * width, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)

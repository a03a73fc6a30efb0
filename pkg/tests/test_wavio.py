import struct

import numpy as np
import pytest

from mbdp.wavio import WavError, read_wav, write_wav


def extensible_float_wav(samples, rate):
    """Hand-built WAVE_FORMAT_EXTENSIBLE header wrapping float32 data."""
    payload = np.asarray(samples, dtype="<f4").tobytes()
    guid = struct.pack("<H", 3) + b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    fmt = struct.pack("<HHIIHHHHI", 0xFFFE, 1, rate, rate * 4, 4, 32, 22, 32, 4) + guid
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"LIST" + struct.pack("<I", 3) + b"abc\x00"
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestRoundTrip:
    def test_float32_exact(self, tmp_path, rng):
        x = rng.uniform(-1, 1, (1000, 2)).astype(np.float32).astype(np.float64)
        write_wav(tmp_path / "a.wav", x, 48000)
        audio = read_wav(tmp_path / "a.wav")
        assert audio.sample_rate == 48000 and audio.channels == 2 and audio.is_float
        np.testing.assert_array_equal(audio.samples, x)

    @pytest.mark.parametrize("bits", [16, 24])
    def test_pcm_within_lsb(self, tmp_path, rng, bits):
        x = rng.uniform(-1, 1, 999)
        write_wav(tmp_path / "a.wav", x, 44100, bits=bits, is_float=False)
        audio = read_wav(tmp_path / "a.wav")
        assert audio.bits == bits and not audio.is_float and audio.frames == 999
        assert np.max(np.abs(audio.samples[:, 0] - x)) <= 0.5 / 2 ** (bits - 1) + 1e-12

    def test_pcm_saturates(self, tmp_path):
        write_wav(tmp_path / "a.wav", [2.0, -2.0], 8000, bits=16, is_float=False)
        np.testing.assert_allclose(read_wav(tmp_path / "a.wav").samples[:, 0], [32767 / 32768, -1.0])

    def test_odd_payload_padded(self, tmp_path):
        write_wav(tmp_path / "a.wav", [0.5], 8000, bits=24, is_float=False)
        assert len((tmp_path / "a.wav").read_bytes()) % 2 == 0
        assert read_wav(tmp_path / "a.wav").samples[0, 0] == pytest.approx(0.5)


class TestRead:
    def test_extensible_and_unknown_chunks(self, tmp_path):
        (tmp_path / "e.wav").write_bytes(extensible_float_wav([0.25, -0.5], 96000))
        audio = read_wav(tmp_path / "e.wav")
        assert audio.sample_rate == 96000
        np.testing.assert_array_equal(audio.samples[:, 0], [0.25, -0.5])

    def test_not_riff(self, tmp_path):
        (tmp_path / "x.wav").write_bytes(b"hello world, not audio")
        with pytest.raises(WavError, match="not a RIFF"):
            read_wav(tmp_path / "x.wav")

    def test_missing_file(self, tmp_path):
        with pytest.raises(WavError, match="cannot read"):
            read_wav(tmp_path / "nope.wav")

    def test_unsupported_depth(self, tmp_path):
        write_wav(tmp_path / "a.wav", [0.0], 8000, bits=16, is_float=False)
        data = bytearray((tmp_path / "a.wav").read_bytes())
        struct.pack_into("<H", data, 34, 8)
        (tmp_path / "a.wav").write_bytes(bytes(data))
        with pytest.raises(WavError, match="unsupported"):
            read_wav(tmp_path / "a.wav")

    def test_write_rejects_float64(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(tmp_path / "a.wav", [0.0], 8000, bits=16, is_float=True)

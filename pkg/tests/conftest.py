import struct
import wave

import numpy as np
import pytest


def write_wav(path, samples, sample_rate=16000):
    """Write float samples in [-1, 1] as a mono 16-bit PCM wav file."""
    data = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(data * 32768.0).astype(np.int64)
    pcm = np.clip(pcm, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())
    return str(path)


def write_mulaw_wav(path):
    """Hand-assemble a RIFF/WAVE header with format tag 7 (mu-law)."""
    n = 100
    fmt = struct.pack("<HHIIHH", 7, 1, 8000, 8000, 1, 8)
    data = bytes(n)
    chunks = (b"fmt " + struct.pack("<I", len(fmt)) + fmt
              + b"data" + struct.pack("<I", len(data)) + data)
    blob = b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks
    with open(path, "wb") as fh:
        fh.write(blob)
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sine_wav(tmp_path):
    def make(freq, duration=0.5, sample_rate=16000, amplitude=0.5):
        t = np.arange(int(duration * sample_rate)) / sample_rate
        return write_wav(tmp_path / f"sine{freq}.wav",
                         amplitude * np.sin(2 * np.pi * freq * t), sample_rate)
    return make

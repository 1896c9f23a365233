"""Shared fixtures. WAV fixtures are written with the stdlib wave module
directly so file-format tests do not depend on the writer under test."""

import struct
import wave

import numpy as np
import pytest


def write_pcm16(path, ints, rate=16000, channels=1, sampwidth=2):
    """Write raw int16 samples through stdlib wave (independent of audio_io)."""
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(sampwidth)
        wf.setframerate(rate)
        data = b"".join(struct.pack("<h", int(v)) for v in ints) if sampwidth == 2 \
            else bytes(int(v) & 0xFF for v in ints)
        wf.writeframes(data)


@pytest.fixture
def tone_wav(tmp_path):
    """One second of a 440 Hz tone as a 16 kHz PCM16 mono file."""
    t = np.arange(16000) / 16000.0
    x = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    path = tmp_path / "tone.wav"
    write_pcm16(path, np.rint(x * 32768).astype(int))
    return path

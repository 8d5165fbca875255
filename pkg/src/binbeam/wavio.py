"""Multichannel WAV I/O: 16/24-bit PCM and 32-bit float.

Samples are returned as float64 ``(samples, channels)`` in [-1, 1).
"""

import wave
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .errors import UnsupportedFormat

_PCM_SCALE = {2: 2.0**15, 3: 2.0**23}


def wav_read(path):
    """Return ``(samples, sample_rate_hz)``."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            width = f.getsampwidth()
            channels = f.getnchannels()
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as exc:
        if "unknown format: 3" not in str(exc):
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        return _read_float(path)
    except (EOFError, OSError) as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(float)
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        data = np.where(v >= 1 << 23, v - (1 << 24), v).astype(float)
    else:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit PCM is not supported")
    return data.reshape(-1, channels) / _PCM_SCALE[width], rate


def _read_float(path):
    try:
        rate, data = scipy.io.wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if data.dtype != np.float32:
        raise UnsupportedFormat(f"{path}: float WAV must be 32-bit")
    if data.ndim == 1:
        data = data[:, None]
    return data.astype(float), rate


def wav_write(path, samples, sample_rate_hz, fmt="float32"):
    """Write ``(samples, channels)``; ``fmt`` is ``float32``, ``pcm16`` or ``pcm24``."""
    data = np.asarray(samples, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if fmt == "float32":
        scipy.io.wavfile.write(path, int(sample_rate_hz), data.astype(np.float32))
        return
    width = {"pcm16": 2, "pcm24": 3}.get(fmt)
    if width is None:
        raise UnsupportedFormat(f"unknown sample format {fmt!r}")
    scale = _PCM_SCALE[width]
    q = np.clip(np.round(data * scale), -scale, scale - 1).astype(np.int32)
    if width == 2:
        raw = q.astype("<i2").tobytes()
    else:
        u = q.astype("<i4").view(np.uint8).reshape(-1, 4)
        raw = u[:, :3].tobytes()
    with wave.open(str(path), "wb") as f:
        f.setnchannels(data.shape[1])
        f.setsampwidth(width)
        f.setframerate(int(sample_rate_hz))
        f.writeframes(raw)

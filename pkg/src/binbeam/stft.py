"""Square-root Hann STFT with 50% overlap and overlap-add resynthesis.

Signals are ``(samples, channels)`` arrays; spectra are
``(frames, bins, channels)``. The signal is padded by half a frame at the
start (and as much as needed at the end) so that every input sample is
covered by two frames and resynthesis is exact.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import ConfigMismatch, DimensionMismatch, PreconditionError, TooShort


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 8192
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if self.frame_len < 2 or self.frame_len % 2:
            raise PreconditionError("frame length must be even")

    @property
    def hop(self):
        return self.frame_len // 2

    @property
    def num_bins(self):
        return self.frame_len // 2 + 1

    @property
    def freqs_hz(self):
        return np.fft.rfftfreq(self.frame_len, 1.0 / self.sample_rate_hz)

    def window(self):
        # periodic Hann: its squares sum to one at 50% overlap
        return np.sqrt(scipy.signal.get_window("hann", self.frame_len, fftbins=True))

    def num_frames(self, length):
        return -(-length // self.hop) + 1


def _as_2d(signal):
    signal = np.asarray(signal, dtype=float)
    if signal.ndim == 1:
        signal = signal[:, None]
    if signal.ndim != 2:
        raise DimensionMismatch("signal must be (samples,) or (samples, channels)")
    return signal


def analyze(signal, cfg=StftConfig()):
    """STFT ``(frames, bins, channels)``.

    Frame ``t`` is the windowed FFT of padded samples
    ``[t*hop, t*hop + frame_len)``, where the padded signal starts with
    ``frame_len / 2`` zeros.
    """
    x = _as_2d(signal)
    length = x.shape[0]
    if length < cfg.frame_len:
        raise TooShort(f"signal has {length} samples, frame length is {cfg.frame_len}")
    n_frames = cfg.num_frames(length)
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    pad_front = cfg.frame_len // 2
    padded = np.zeros((total, x.shape[1]))
    padded[pad_front:pad_front + length] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.frame_len, axis=0)[:: cfg.hop]
    # frames: (T, channels, frame_len)
    spec = np.fft.rfft(frames * cfg.window(), axis=-1)
    return np.ascontiguousarray(np.swapaxes(spec, 1, 2))


def synthesize(tensor, cfg=StftConfig(), length=None):
    """Overlap-add inverse of :func:`analyze`; returns ``(samples, channels)``."""
    Y = np.asarray(tensor)
    if Y.ndim == 2:
        Y = Y[:, :, None]
    if Y.ndim != 3 or Y.shape[1] != cfg.num_bins:
        raise ConfigMismatch(f"tensor shape {Y.shape} does not match {cfg.num_bins} bins")
    n_frames = Y.shape[0]
    frames = np.fft.irfft(np.swapaxes(Y, 1, 2), n=cfg.frame_len, axis=-1) * cfg.window()
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros((total, Y.shape[2]))
    # two interleaved groups of non-overlapping frames: deterministic sums
    for start in (0, 1):
        grp = frames[start::2]
        if grp.shape[0] == 0:
            continue
        span = np.swapaxes(grp, 1, 2).reshape(-1, Y.shape[2])
        off = start * cfg.hop
        out[off:off + span.shape[0]] += span
    pad_front = cfg.frame_len // 2
    if length is None:
        length = (n_frames - 1) * cfg.hop
    return out[pad_front:pad_front + length]


def apply_filters(tensor, w_left, w_right):
    """Binaural output ``z(t, f) = w(f)^H y(t, f)`` for both ears.

    Filters are ``(bins, channels)``; returns ``(frames, bins, 2)``.
    """
    Y = np.asarray(tensor)
    w_left = np.asarray(w_left)
    w_right = np.asarray(w_right)
    if w_left.shape != Y.shape[1:] or w_right.shape != Y.shape[1:]:
        raise DimensionMismatch(f"filters {w_left.shape} do not match tensor bins/channels {Y.shape[1:]}")
    z_l = np.einsum("fm,tfm->tf", w_left.conj(), Y)
    z_r = np.einsum("fm,tfm->tf", w_right.conj(), Y)
    return np.stack([z_l, z_r], axis=-1)

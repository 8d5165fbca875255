"""Time-domain rendering of a synthetic scene.

Sources are rendered in the frequency domain with enough zero padding
that the convolution with the free-field ATFs is linear; the isotropic
noise field, being stationary, is rendered circularly over the whole
signal.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal

from .errors import PreconditionError
from .scene import SPEED_OF_SOUND, atf_at, fibonacci_sphere


@dataclass(frozen=True)
class Activity:
    """Fractions of the signal during which each source is on.

    The default timeline walks through all four VAD classes in turn: noise
    only, desired only, interferer only, then both sources together.
    """

    desired: tuple = ((0.2, 0.45), (0.7, 1.0))
    interferer: tuple = ((0.45, 1.0),)


def _gate(length, spans, ramp):
    """On/off envelope whose raised-cosine ramps lie inside each span, so
    a source is fully silent outside its spans."""
    g = np.zeros(length)
    for lo, hi in spans:
        i0, i1 = int(lo * length), int(hi * length)
        g[i0:i1] = 1.0
        r = min(ramp, (i1 - i0) // 2)
        if r > 0:
            rise = np.sin(0.5 * np.pi * (np.arange(r) + 0.5) / r) ** 2
            g[i0:i0 + r] *= rise
            g[i1 - r:i1] *= rise[::-1]
    return g


def speech_like(length, rng, pole=0.9, sample_rate_hz=16000):
    """AR(1)-coloured Gaussian noise with a slow syllabic envelope."""
    s = scipy.signal.lfilter([1.0], [1.0, -pole], rng.standard_normal(length))
    t = np.arange(length) / sample_rate_hz
    env = 0.6 + 0.4 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    s = s * env
    return s / np.std(s)


def antialias(signal, sample_rate_hz, cutoff_ratio=0.875):
    """Zero-phase low-pass below Nyquist, as an ADC front end would apply.

    Full-band excitation leaves energy at Nyquist, where fractional
    inter-microphone delays have long sinc tails that no finite STFT frame
    captures.
    """
    sos = scipy.signal.butter(8, cutoff_ratio * sample_rate_hz / 2, fs=sample_rate_hz, output="sos")
    return scipy.signal.sosfiltfilt(sos, signal)


def render_source(spec, signal, azimuth_deg, distance_m, tail=1024):
    """Multichannel image ``(samples, M)`` of a mono source.

    The image is cut at the signal length, as a recording would be;
    ``tail`` extra samples of padding absorb the propagation delay and the
    fractional-delay interpolation tails.
    """
    length = signal.shape[0]
    delay = np.max(np.linalg.norm(spec.mic_positions, axis=1)) + distance_m
    pad = int(np.ceil(delay / SPEED_OF_SOUND * spec.sample_rate_hz)) + tail
    n_fft = scipy.fft.next_fast_len(length + pad, real=True)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / spec.sample_rate_hz)
    H = atf_at(spec, freqs, azimuth_deg, distance_m)
    return np.fft.irfft(np.fft.rfft(signal, n=n_fft)[:, None] * H, n=n_fft, axis=0)[:length]


def render_isotropic(spec, length, rng, distance_m=3.0):
    """Diffuse noise from independent white sources on the noise-field grid,
    normalized to unit mean channel power."""
    n = spec.noise.num_angles
    if spec.noise.field == "spherical":
        az, el = fibonacci_sphere(n)
    else:
        az, el = np.arange(n) * 360.0 / n, np.zeros(n)
    freqs = np.fft.rfftfreq(length, 1.0 / spec.sample_rate_hz)
    acc = np.zeros((freqs.shape[0], spec.num_channels), dtype=np.complex128)
    for k in range(n):
        W = np.fft.rfft(rng.standard_normal(length))
        acc += W[:, None] * atf_at(spec, freqs, az[k], distance_m, el[k])
    noise = np.fft.irfft(acc, n=length, axis=0)
    return noise / np.sqrt(np.mean(noise**2))


@dataclass(frozen=True)
class Components:
    x: np.ndarray
    u: np.ndarray
    n: np.ndarray
    sample_rate_hz: int


def render_scene(spec, duration_s, seed=0, activity=Activity(), white_db=-30.0):
    """Desired, interferer and noise components ``(samples, M)``.

    The noise is the isotropic field plus independent sensor noise
    ``white_db`` below it. Source excitations are anti-aliased speech-like
    noise. Components are returned unscaled; use
    :func:`binbeam.scene.mix_components` to set SNR and SIR.
    """
    rng = np.random.default_rng(seed)
    length = int(round(duration_s * spec.sample_rate_hz))
    ramp = spec.sample_rate_hz // 50
    fs = spec.sample_rate_hz

    def excitation(spans):
        return antialias(speech_like(length, rng, sample_rate_hz=fs) * _gate(length, spans, ramp), fs)

    d = spec.source("desired")
    x = render_source(spec, excitation(activity.desired), d.angle_deg, d.distance_m)
    try:
        i = spec.source("interferer")
    except PreconditionError:
        u = np.zeros_like(x)
    else:
        u = render_source(spec, excitation(activity.interferer), i.angle_deg, i.distance_m)
    n = render_isotropic(spec, length, rng)
    n = n + 10 ** (white_db / 20) * rng.standard_normal(n.shape)
    return Components(x, u, n, spec.sample_rate_hz)

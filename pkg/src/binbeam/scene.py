"""Acoustic scene model: geometry, transfer functions, covariances, mixing.

Angles are azimuths in degrees, counterclockwise, with 0 deg straight
ahead (+x) and +90 deg to the left (+y). Channels are ordered left device
first, then right device.
"""

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChannelMismatch, EmptyDatabase, InvalidGeometry, LengthMismatch, ParseError, PreconditionError, SilentComponent

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class Source:
    angle_deg: float
    distance_m: float
    role: str = "desired"


@dataclass(frozen=True)
class NoiseSpec:
    p_white: float = 10 ** (-55 / 10)
    p_iso: float = 1.0
    field: str = "cylindrical"
    num_angles: int = 72


@dataclass(frozen=True)
class SceneSpec:
    """Array geometry, sources, noise field and transform parameters.

    ``ref_left`` and ``ref_right`` are 0-based channel indices;
    ``num_left`` channels belong to the left device.
    """

    mic_positions: np.ndarray
    num_left: int
    ref_left: int
    ref_right: int
    sources: tuple
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    sample_rate_hz: int = 16000
    fft_len: int = 512
    head_radius_m: float | None = None
    p_x: float = 1.0
    p_u: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        object.__setattr__(self, "mic_positions", pos)
        object.__setattr__(self, "sources", tuple(self.sources))
        m = pos.shape[0]
        if pos.ndim != 2 or pos.shape[1] != 3 or m < 2:
            raise InvalidGeometry("mic_positions must be an (M, 3) array with M >= 2")
        if not 1 <= self.num_left < m:
            raise InvalidGeometry("num_left must leave at least one channel per device")
        if not 0 <= self.ref_left < self.num_left or not self.num_left <= self.ref_right < m:
            raise InvalidGeometry("reference channels must lie on their own device")
        if sum(s.role == "desired" for s in self.sources) != 1:
            raise PreconditionError("scene needs exactly one desired source")
        if self.fft_len < 2 or self.fft_len & (self.fft_len - 1):
            raise PreconditionError("fft_len must be a power of two")
        if self.noise.p_white < 0 or self.noise.p_iso < 0:
            raise PreconditionError("noise PSDs must be non-negative")

    @property
    def num_channels(self):
        return self.mic_positions.shape[0]

    @property
    def num_bins(self):
        return self.fft_len // 2 + 1

    @property
    def freqs_hz(self):
        return np.arange(self.num_bins) * self.sample_rate_hz / self.fft_len

    def source(self, role):
        for s in self.sources:
            if s.role == role:
                return s
        raise PreconditionError(f"scene has no {role} source")

    @classmethod
    def from_dict(cls, d):
        try:
            noise = d.get("noise", {})
            p_white = noise.get("p_white")
            if p_white is None:
                p_white = 10 ** (noise.get("p_white_db", -55.0) / 10)
            return cls(
                mic_positions=np.asarray(d["mic_positions"], dtype=float),
                num_left=int(d["num_left"]),
                ref_left=int(d.get("ref_left", 0)),
                ref_right=int(d.get("ref_right", d["num_left"])),
                sources=tuple(Source(float(s["angle_deg"]), float(s["distance_m"]), s.get("role", "desired")) for s in d["sources"]),
                noise=NoiseSpec(
                    p_white=float(p_white),
                    p_iso=float(noise.get("p_iso", 1.0)),
                    field=noise.get("field", "cylindrical"),
                    num_angles=int(noise.get("num_angles", 72)),
                ),
                sample_rate_hz=int(d.get("sample_rate_hz", 16000)),
                fft_len=int(d.get("fft_len", 512)),
                head_radius_m=d.get("head_radius_m"),
                p_x=float(d.get("p_x", 1.0)),
                p_u=float(d.get("p_u", 1.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"invalid scene description: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc

    def to_dict(self):
        return {
            "mic_positions": self.mic_positions.tolist(),
            "num_left": self.num_left,
            "ref_left": self.ref_left,
            "ref_right": self.ref_right,
            "sources": [{"angle_deg": s.angle_deg, "distance_m": s.distance_m, "role": s.role} for s in self.sources],
            "noise": {"p_white": self.noise.p_white, "p_iso": self.noise.p_iso, "field": self.noise.field, "num_angles": self.noise.num_angles},
            "sample_rate_hz": self.sample_rate_hz,
            "fft_len": self.fft_len,
            "head_radius_m": self.head_radius_m,
            "p_x": self.p_x,
            "p_u": self.p_u,
        }


def hearing_aid_positions(spacing=0.014, head_radius=0.0875):
    """Two behind-the-ear devices with a front and a rear microphone each."""
    h = spacing / 2
    return np.array(
        [
            [h, head_radius, 0.0],
            [-h, head_radius, 0.0],
            [h, -head_radius, 0.0],
            [-h, -head_radius, 0.0],
        ]
    )


def default_scene(**overrides):
    """Desired source ahead, interferer at -35 deg, both at 3 m."""
    kw = dict(
        mic_positions=hearing_aid_positions(),
        num_left=2,
        ref_left=0,
        ref_right=2,
        sources=(Source(0.0, 3.0, "desired"), Source(-35.0, 3.0, "interferer")),
        head_radius_m=0.0875,
    )
    kw.update(overrides)
    return SceneSpec(**kw)


def _direction(azimuth_deg, elevation_deg=0.0):
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def _head_shadow(freqs_hz, incidence_rad, head_radius):
    """Single-pole/single-zero spherical-head shadow filter."""
    alpha_min, theta_min = 0.1, np.deg2rad(150.0)
    alpha = (1 + alpha_min / 2) + (1 - alpha_min / 2) * np.cos(incidence_rad / theta_min * np.pi)
    w0 = SPEED_OF_SOUND / head_radius
    jw = 1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float)
    return (1 + alpha * jw / (2 * w0)) / (1 + jw / (2 * w0))


def atf_at(spec, freqs_hz, azimuth_deg, distance_m, elevation_deg=0.0):
    """Free-field ATFs ``(len(freqs), M)`` for a point source.

    Spherical spreading ``exp(-j w r/c) / r`` per channel; with
    ``spec.head_radius_m`` set, each device also gets a head-shadow filter
    driven by the angle between the source and the device's outward axis.
    """
    if distance_m <= 0:
        raise InvalidGeometry("source distance must be positive")
    src = distance_m * _direction(azimuth_deg, elevation_deg)
    r = np.linalg.norm(spec.mic_positions - src, axis=1)
    if np.any(r < 1e-9):
        raise InvalidGeometry("source coincides with a microphone")
    freqs = np.asarray(freqs_hz, dtype=float)
    H = np.exp(-2j * np.pi * freqs[:, None] * r[None, :] / SPEED_OF_SOUND) / r[None, :]
    if spec.head_radius_m:
        u = _direction(azimuth_deg, elevation_deg)
        for ch in range(spec.num_channels):
            axis = np.array([0.0, 1.0, 0.0]) if ch < spec.num_left else np.array([0.0, -1.0, 0.0])
            incidence = np.arccos(np.clip(u @ axis, -1.0, 1.0))
            H[:, ch] *= _head_shadow(freqs, incidence, spec.head_radius_m)
    return H


def synth_atf(spec, source_index):
    """ATFs of ``spec.sources[source_index]`` on the spec's FFT grid, ``(F, M)``."""
    s = spec.sources[source_index]
    return atf_at(spec, spec.freqs_hz, s.angle_deg, s.distance_m)


def steering(spec, role):
    """ATFs ``(F, M)`` of the source with the given role."""
    idx = next((i for i, s in enumerate(spec.sources) if s.role == role), None)
    if idx is None:
        raise PreconditionError(f"scene has no {role} source")
    return synth_atf(spec, idx)


def fibonacci_sphere(n):
    """Near-uniform (azimuth, elevation) grid in degrees on the unit sphere."""
    k = np.arange(n) + 0.5
    el = np.rad2deg(np.arcsin(1 - 2 * k / n))
    az = np.rad2deg(np.pi * (1 + 5**0.5) * k) % 360.0
    return az, el


def atf_database(spec, distance_m=None, freqs_hz=None):
    """Synthetic ATF database ``(K, F, M)`` on the noise-field angle grid."""
    n = spec.noise.num_angles
    dist = distance_m if distance_m is not None else spec.source("desired").distance_m
    freqs = spec.freqs_hz if freqs_hz is None else freqs_hz
    if spec.noise.field == "spherical":
        az, el = fibonacci_sphere(n)
    elif spec.noise.field == "cylindrical":
        az, el = np.arange(n) * 360.0 / n, np.zeros(n)
    else:
        raise PreconditionError(f"unknown noise field {spec.noise.field!r}")
    return np.stack([atf_at(spec, freqs, az[k], dist, el[k]) for k in range(n)])


def iso_coherence(h):
    """Spatial coherence matrices ``(F, M, M)`` from an ATF database ``(K, F, M)``."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 2:
        h = h[:, None, :]
    if h.ndim != 3 or h.shape[0] < 1:
        raise EmptyDatabase("ATF database needs at least one angle")
    S = np.einsum("kfi,kfj->fij", h, h.conj())
    S = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))
    d = np.sqrt(np.real(np.einsum("fii->fi", S)))
    if np.any(d == 0):
        raise EmptyDatabase("a channel has zero energy over all angles")
    G = S / (d[:, :, None] * d[:, None, :])
    idx = np.arange(G.shape[-1])
    G[:, idx, idx] = 1.0
    return G


def noise_cov(gamma, p_white, p_iso):
    """``p_white * I + p_iso * Gamma`` for every bin."""
    gamma = np.asarray(gamma, dtype=np.complex128)
    return p_white * np.eye(gamma.shape[-1]) + p_iso * gamma


def rank1_cov(p, v):
    """``p v v^H``; ``v`` may carry leading batch axes."""
    if np.any(np.asarray(p) < 0):
        raise PreconditionError("PSD must be non-negative")
    v = np.asarray(v, dtype=np.complex128)
    return np.asarray(p)[..., None, None] * v[..., :, None] * v[..., None, :].conj()


@dataclass(frozen=True)
class SceneMatrices:
    """Per-bin ATFs and covariances of a matrix-level scene."""

    freqs_hz: np.ndarray
    a: np.ndarray
    b: np.ndarray
    R_n: np.ndarray
    gamma: np.ndarray


def build_matrices(spec, database=None):
    """ATFs and noise covariance for every bin of ``spec``.

    ``database`` overrides the synthetic isotropic ATF grid (``(K, F, M)``).
    """
    a = steering(spec, "desired")
    b = steering(spec, "interferer")
    h = atf_database(spec) if database is None else database
    gamma = iso_coherence(h)
    return SceneMatrices(spec.freqs_hz, a, b, noise_cov(gamma, spec.noise.p_white, spec.noise.p_iso), gamma)


# -- ATF database files ---------------------------------------------------------


@dataclass(frozen=True)
class AtfDatabase:
    """Measured impulse responses converted to ATFs.

    ``h`` has shape ``(K, F, M)``; angles in degrees.
    """

    angles_deg: np.ndarray
    sample_rate_hz: int
    fft_len: int
    h: np.ndarray

    @property
    def freqs_hz(self):
        return np.arange(self.h.shape[1]) * self.sample_rate_hz / self.fft_len

    def at(self, angle_deg):
        """ATFs ``(F, M)`` of the database angle closest to ``angle_deg``."""
        diff = np.abs((self.angles_deg - angle_deg + 180.0) % 360.0 - 180.0)
        return self.h[int(np.argmin(diff))]


def load_atf(path, fft_len=512, num_channels=None):
    """Read an impulse-response database and transform it to ATFs.

    Two layouts are accepted. A JSON document with header keys
    ``sample_rate_hz``, ``num_channels``, ``num_angles``, ``ir_len``,
    ``angles_deg`` plus ``data``: base64 little-endian samples (``dtype``
    ``float32`` or ``float64``, default ``float64``). Or a single JSON
    header line followed by a newline and the raw binary samples. Samples
    are row-major ``[angle][channel][sample]``.
    """
    raw = Path(path).read_bytes()
    header, payload = _split_atf(raw)
    try:
        fs = int(header["sample_rate_hz"])
        m = int(header["num_channels"])
        k = int(header["num_angles"])
        n = int(header["ir_len"])
        dtype = np.dtype(header.get("dtype", "float64")).newbyteorder("<")
        angles = np.asarray(header.get("angles_deg", np.arange(k) * 360.0 / k), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad header ({exc})") from exc
    if num_channels is not None and m != num_channels:
        raise ChannelMismatch(f"{path}: {m} channels, expected {num_channels}")
    if len(payload) != k * m * n * dtype.itemsize:
        raise ParseError(f"{path}: expected {k * m * n} samples, got {len(payload) // dtype.itemsize}")
    if angles.shape != (k,):
        raise ParseError(f"{path}: angles_deg must list {k} angles")
    ir = np.frombuffer(payload, dtype=dtype).astype(float).reshape(k, m, n)
    h = np.fft.rfft(ir, n=fft_len, axis=-1)
    return AtfDatabase(angles, fs, fft_len, np.ascontiguousarray(np.swapaxes(h, 1, 2)))


def _split_atf(raw):
    try:
        doc = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError):
        doc = None
    if isinstance(doc, dict):
        try:
            return doc, base64.b64decode(doc["data"], validate=True)
        except (KeyError, ValueError) as exc:
            raise ParseError(f"missing or corrupt data field ({exc})") from exc
    nl = raw.find(b"\n")
    if nl < 0:
        raise ParseError("no JSON header found")
    try:
        header = json.loads(raw[:nl])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad JSON header ({exc})") from exc
    if not isinstance(header, dict):
        raise ParseError("header is not a JSON object")
    return header, raw[nl + 1:]


def save_atf(path, ir, sample_rate_hz, angles_deg=None, binary=False, dtype="float64"):
    """Write impulse responses ``[angle][channel][sample]`` in the loader's format."""
    ir = np.asarray(ir, dtype=dtype)
    k, m, n = ir.shape
    header = {
        "sample_rate_hz": int(sample_rate_hz),
        "num_channels": m,
        "num_angles": k,
        "ir_len": n,
        "dtype": np.dtype(dtype).name,
        "angles_deg": list(map(float, angles_deg if angles_deg is not None else np.arange(k) * 360.0 / k)),
    }
    data = ir.astype(np.dtype(dtype).newbyteorder("<")).tobytes()
    if binary:
        Path(path).write_bytes(json.dumps(header).encode() + b"\n" + data)
    else:
        header["data"] = base64.b64encode(data).decode("ascii")
        Path(path).write_text(json.dumps(header))


# -- time-domain mixing ---------------------------------------------------------


@dataclass(frozen=True)
class Mixture:
    y: np.ndarray
    x: np.ndarray
    u: np.ndarray | None
    n: np.ndarray


def _power(sig, ch):
    return float(np.mean(sig[:, ch] ** 2))


def mix_components(x, u, n, target_snr_db, target_sir_db, ref_channel):
    """Rescale interferer and noise so the reference channel hits the target
    broadband SNR and SIR; the desired component is left untouched.

    Signals are ``(samples, channels)``; ``u`` may be ``None``.
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    comps = [x, n] if u is None else [x, np.asarray(u, dtype=float), n]
    if any(c.shape != x.shape for c in comps):
        raise LengthMismatch("components differ in length or channel count")
    p_x = _power(x, ref_channel)
    p_n = _power(n, ref_channel)
    if p_x == 0 or p_n == 0:
        raise SilentComponent("a component is silent in the reference channel")
    n = n * np.sqrt(p_x / (p_n * 10 ** (target_snr_db / 10)))
    if u is not None:
        u = comps[1]
        p_u = _power(u, ref_channel)
        if p_u == 0:
            raise SilentComponent("interferer is silent in the reference channel")
        u = u * np.sqrt(p_x / (p_u * 10 ** (target_sir_db / 10)))
        y = x + u + n
    else:
        y = x + n
    return Mixture(y, x, u, n)

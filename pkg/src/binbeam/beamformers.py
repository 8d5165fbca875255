"""Closed-form binaural beamformers for a single frequency bin.

Conventions: ``R_n`` is the M x M noise covariance, ``a`` and ``b`` are
the steering vectors (ATFs or RTFs) of the desired and interfering
source, and ``ref`` is the index of the reference microphone of the ear
being designed. Filters are applied as ``z = w^H y``.
"""

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConstraints, DimensionMismatch, EtaOne, EtaOneDeltaNotOne, PreconditionError, ZeroAtf
from .hermitian import herm_solve

PSI_EPS = 1e-8


class Algorithm(str, enum.Enum):
    BMVDR = "BMVDR"
    BLCMV = "BLCMV"
    BMVDR_N = "BMVDR_N"
    BLCMV_N = "BLCMV_N"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise PreconditionError(f"unknown algorithm {name!r}") from None


@dataclass(frozen=True)
class Gammas:
    gamma_a: float
    gamma_b: float
    gamma_ab: complex
    psi: float


@dataclass(frozen=True)
class BeamformerPair:
    w_left: np.ndarray
    w_right: np.ndarray
    algorithm: Algorithm
    delta: float = 1.0
    eta: float = 0.0


def selection(m, index):
    e = np.zeros(m, dtype=np.complex128)
    e[index] = 1.0
    return e


def _vec(v, m=None):
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    if m is not None and v.shape[0] != m:
        raise DimensionMismatch(f"vector length {v.shape[0]} does not match {m} channels")
    if not np.all(np.isfinite(v)):
        raise DimensionMismatch("vector contains NaN or Inf")
    return v


def _check_nonzero(a):
    if not np.any(a):
        raise ZeroAtf("steering vector is identically zero")


def gammas(R_n, a, b):
    """Noise-whitened inner products of the two steering vectors."""
    R_n = np.asarray(R_n)
    a = _vec(a, R_n.shape[0])
    b = _vec(b, R_n.shape[0])
    Z = herm_solve(R_n, np.stack([a, b], axis=1))
    g_a = np.real(np.vdot(a, Z[:, 0]))
    g_b = np.real(np.vdot(b, Z[:, 1]))
    g_ab = np.vdot(a, Z[:, 1])
    return Gammas(float(g_a), float(g_b), complex(g_ab), float(abs(g_ab) ** 2 / (g_a * g_b)))


def bmvdr(R_n, a, ref):
    """BMVDR filter ``R_n^{-1} a a_ref^* / gamma_a``."""
    R_n = np.asarray(R_n)
    a = _vec(a, R_n.shape[0])
    _check_nonzero(a)
    z = herm_solve(R_n, a)
    gamma_a = np.real(np.vdot(a, z))
    return z * (np.conj(a[ref]) / gamma_a)


def _lcmv(R_n, a, b, response):
    """``R_n^{-1} C (C^H R_n^{-1} C)^{-1} g`` with ``C = [a, b]``."""
    R_n = np.asarray(R_n)
    a = _vec(a, R_n.shape[0])
    b = _vec(b, R_n.shape[0])
    _check_nonzero(a)
    _check_nonzero(b)
    C = np.stack([a, b], axis=1)
    Z = herm_solve(R_n, C)
    G = C.conj().T @ Z
    G = 0.5 * (G + G.conj().T)
    psi = abs(G[0, 1]) ** 2 / (np.real(G[0, 0]) * np.real(G[1, 1]))
    if psi >= 1.0 - PSI_EPS:
        raise DegenerateConstraints(f"steering vectors are collinear (psi = {psi:.12f})")
    return Z @ np.linalg.solve(G, np.asarray(response, dtype=np.complex128))


def _check_delta(delta):
    if not 0.0 < delta <= 1.0:
        warnings.warn(f"interference scaling {delta} outside (0, 1]", stacklevel=3)


def _check_eta(eta):
    if not 0.0 <= eta <= 1.0:
        raise PreconditionError(f"mixing parameter {eta} outside [0, 1]")


def blcmv(R_n, a, b, ref, delta):
    """BLCMV filter: keep ``a`` at the reference, scale ``b`` by ``delta``."""
    _check_delta(delta)
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    return _lcmv(R_n, a, b, [np.conj(a[ref]), delta * np.conj(b[ref])])


def bmvdr_n(R_n, a, ref, eta):
    """BMVDR with partial noise estimation: ``(1-eta) w_BMVDR + eta e_ref``."""
    _check_eta(eta)
    w = bmvdr(R_n, a, ref)
    return (1.0 - eta) * w + eta * selection(w.shape[0], ref)


def adjusted_delta(delta, eta):
    """Interference scaling the embedded BLCMV must use inside BLCMV-N."""
    if eta == 1.0:
        raise EtaOne("adjusted interference scaling is undefined for eta = 1")
    return (delta - eta) / (1.0 - eta)


def blcmv_n(R_n, a, b, ref, delta, eta):
    """BLCMV with partial noise estimation.

    Mixes the reference microphone (weight ``eta``) with a BLCMV that uses
    the adjusted interference scaling. For ``eta == 1`` this is only defined
    when ``delta == 1`` (no processing).
    """
    _check_eta(eta)
    if eta == 0.0:
        return blcmv(R_n, a, b, ref, delta)
    m = np.asarray(R_n).shape[0]
    if eta == 1.0:
        if delta != 1.0:
            raise EtaOneDeltaNotOne("eta = 1 requires delta = 1")
        return selection(m, ref)
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    w = _lcmv(R_n, a, b, [np.conj(a[ref]), adjusted_delta(delta, eta) * np.conj(b[ref])])
    return eta * selection(m, ref) + (1.0 - eta) * w


def decompose_sub_blcmv(R_n, a, b, ref):
    """Split the BLCMV into a desired-passing and an interferer-passing part.

    Returns ``(w_x, w_u)``; ``w_x`` keeps ``a`` and nulls ``b``, ``w_u``
    keeps ``b`` and nulls ``a``, and ``blcmv(delta) == w_x + delta * w_u``.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    w_x = _lcmv(R_n, a, b, [np.conj(a[ref]), 0.0])
    w_u = _lcmv(R_n, a, b, [0.0, np.conj(b[ref])])
    return w_x, w_u


def common_filters(R_n, a, b):
    """Common spatial filters shared by both ears (D-BLCMV and I-BLCMV).

    The ear-specific sub-BLCMVs follow by scaling with the conjugated
    reference entries, e.g. ``w_x,L = w_x * conj(a[ref_left])``.
    """
    R_n = np.asarray(R_n)
    a = _vec(a, R_n.shape[0])
    b = _vec(b, R_n.shape[0])
    Z = herm_solve(R_n, np.stack([a, b], axis=1))
    g_a = np.real(np.vdot(a, Z[:, 0]))
    g_b = np.real(np.vdot(b, Z[:, 1]))
    g_ab = np.vdot(a, Z[:, 1])
    psi = abs(g_ab) ** 2 / (g_a * g_b)
    if psi >= 1.0 - PSI_EPS:
        raise DegenerateConstraints(f"steering vectors are collinear (psi = {psi:.12f})")
    w_x = (Z[:, 0] / g_a - psi * Z[:, 1] / g_ab) / (1.0 - psi)
    w_u = (Z[:, 1] / g_b - psi * Z[:, 0] / np.conj(g_ab)) / (1.0 - psi)
    return w_x, w_u


def design(algorithm, R_n, a, b, ref_left, ref_right, delta=1.0, eta=0.0):
    """Left and right filters of one algorithm for one frequency bin."""
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.BMVDR:
        w = [bmvdr(R_n, a, r) for r in (ref_left, ref_right)]
    elif algorithm is Algorithm.BMVDR_N:
        w = [bmvdr_n(R_n, a, r, eta) for r in (ref_left, ref_right)]
    elif algorithm is Algorithm.BLCMV:
        w = [blcmv(R_n, a, b, r, delta) for r in (ref_left, ref_right)]
    else:
        w = [blcmv_n(R_n, a, b, r, delta, eta) for r in (ref_left, ref_right)]
    return BeamformerPair(w[0], w[1], algorithm, float(delta), float(eta))

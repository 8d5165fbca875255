"""Performance measures and their closed-form predictions.

Two routes are provided for every quantity: a filter-based route that
evaluates quadratic forms of explicitly designed filters, and a
closed-form route built from the noise-whitened inner products
(``gamma_a``, ``gamma_b``, ``gamma_ab``, ``psi``). Tests pit one against
the other.
"""

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import beamformers as bf
from .beamformers import Algorithm
from .errors import DegenerateConstraints, LengthMismatch, ZeroBeta, ZeroDelta, ZeroDenominator, ZeroPowerChannel


@dataclass(frozen=True)
class BeamformerInputs:
    """Everything one frequency bin needs: noise covariance, steering
    vectors, reference channels and source PSDs."""

    R_n: np.ndarray
    a: np.ndarray
    b: np.ndarray
    ref_left: int
    ref_right: int
    p_x: float = 1.0
    p_u: float = 1.0

    @cached_property
    def gammas(self):
        return bf.gammas(self.R_n, self.a, self.b)

    @property
    def m(self):
        return self.a.shape[0]

    def refs(self):
        return self.ref_left, self.ref_right

    def design(self, algorithm, delta=1.0, eta=0.0):
        return bf.design(algorithm, self.R_n, self.a, self.b, self.ref_left, self.ref_right, delta, eta)


def psd(R, w):
    """Output PSD ``w^H R w``; tiny negative round-off is clamped to 0."""
    R = np.asarray(R)
    w = np.asarray(w)
    val = float(np.real(np.vdot(w, R @ w)))
    if val < 0.0 and val >= -1e-12 * np.linalg.norm(R, 2) * np.vdot(w, w).real:
        return 0.0
    return val


def cpsd(R, w1, w2):
    return complex(np.vdot(w1, np.asarray(R) @ w2))


def ratio(num, den):
    if den <= 0:
        raise ZeroDenominator("ratio with non-positive denominator")
    return num / den


snr = ratio
sir = ratio


def improvement_db(out_ratio, in_ratio):
    return 10.0 * np.log10(out_ratio) - 10.0 * np.log10(in_ratio)


def itf_from_cov(R, left, right):
    """Input ITF as ``E{|s_L|^2} / E{s_R s_L^*}`` read off a covariance."""
    R = np.asarray(R)
    den = R[right, left]
    if den == 0:
        raise ZeroDenominator("cross-PSD between reference channels is zero")
    return complex(R[left, left] / den)


def itf_vector(v, left, right):
    if v[right] == 0:
        raise ZeroDenominator("right reference entry is zero")
    return complex(v[left] / v[right])


def itf_out(w_left, w_right, v):
    """Output ITF ``w_L^H v / w_R^H v`` of a rank-1 source with steering ``v``."""
    den = np.vdot(w_right, v)
    if den == 0:
        raise ZeroDenominator("right output of the source is zero")
    return complex(np.vdot(w_left, v) / den)


def ild_itd(itf, omega):
    """ILD ``|ITF|^2`` and ITD ``unwrapped phase / omega``.

    Arrays are unwrapped along the last (frequency) axis starting at DC.
    Bins with ``omega == 0`` get ITD ``nan``.
    """
    itf = np.asarray(itf)
    omega = np.asarray(omega, dtype=float)
    ild = np.abs(itf) ** 2
    phase = np.unwrap(np.angle(itf), axis=-1) if itf.ndim else np.angle(itf)
    with np.errstate(divide="ignore", invalid="ignore"):
        itd = np.where(omega != 0, phase / np.where(omega != 0, omega, 1.0), np.nan)
    return ild, itd


def ic_msc(R, w_left, w_right):
    """Interaural coherence and MSC of the component with covariance ``R``."""
    p_l = psd(R, w_left)
    p_r = psd(R, w_right)
    if p_l <= 0 or p_r <= 0:
        raise ZeroPowerChannel("output PSD is zero on one side")
    ic = cpsd(R, w_left, w_right) / np.sqrt(p_l * p_r)
    return ic, float(min(max(abs(ic) ** 2, 0.0), 1.0))


def ic_from_matrix(R, left, right):
    """IC read directly from entries of a (possibly closed-form) matrix."""
    R = np.asarray(R)
    p_l = np.real(R[left, left])
    p_r = np.real(R[right, right])
    if p_l <= 0 or p_r <= 0:
        raise ZeroPowerChannel("zero PSD on one side")
    ic = complex(R[left, right] / np.sqrt(p_l * p_r))
    return ic, float(min(abs(ic) ** 2, 1.0))


def msc_error(msc_in, msc_out):
    """Frequency-averaged absolute MSC error over bins 1..F-1 (DC excluded)."""
    msc_in = np.asarray(msc_in, dtype=float)
    msc_out = np.asarray(msc_out, dtype=float)
    if msc_in.shape != msc_out.shape or msc_in.ndim != 1 or msc_in.shape[0] < 2:
        raise LengthMismatch("MSC curves must be 1-D, equally long, with at least two bins")
    return float(np.mean(np.abs(msc_in[1:] - msc_out[1:])))


# -- Rxu matrices -----------------------------------------------------------


class RxuKind(str, enum.Enum):
    RXU1 = "Rxu1"
    RXU2 = "Rxu2"
    RXU3 = "Rxu3"


def _herm(M):
    return 0.5 * (M + M.conj().T)


def _check_psi(g):
    if g.psi >= 1.0 - bf.PSI_EPS:
        raise DegenerateConstraints(f"steering vectors are collinear (psi = {g.psi:.12f})")


def rxu1(g, a, b, delta):
    """Noise-output matrix of the BLCMV: ``e^T Rxu1 e`` is its output noise PSD."""
    _check_psi(g)
    M = (
        np.outer(a, a.conj()) / g.gamma_a
        + delta**2 * np.outer(b, b.conj()) / g.gamma_b
        - 2.0 * g.psi * delta * _herm(np.outer(a, b.conj()) / np.conj(g.gamma_ab))
    )
    return M / (1.0 - g.psi)


def rxu2(g, a, b, eta):
    """Interference-output matrix of the BMVDR-N (without the ``p_u`` factor)."""
    return (
        (1.0 - eta) ** 2 * abs(g.gamma_ab) ** 2 / g.gamma_a**2 * np.outer(a, a.conj())
        + eta**2 * np.outer(b, b.conj())
        + (eta - eta**2) * 2.0 * _herm(np.outer(a, b.conj()) * g.gamma_ab / g.gamma_a)
    )


def rxu3(g, a, b, delta, eta):
    """BLCMV-N counterpart of :func:`rxu1`; output noise is ``eta^2 R_n + Rxu3``."""
    _check_psi(g)
    M = (
        (1.0 - eta**2) * np.outer(a, a.conj()) / g.gamma_a
        + (delta**2 - eta**2) * np.outer(b, b.conj()) / g.gamma_b
        - 2.0 * g.psi * (delta - eta**2) * _herm(np.outer(a, b.conj()) / np.conj(g.gamma_ab))
    )
    return M / (1.0 - g.psi)


def rxu_matrix(kind, inputs, delta=1.0, eta=0.0):
    kind = RxuKind(kind)
    a = np.asarray(inputs.a, dtype=np.complex128)
    b = np.asarray(inputs.b, dtype=np.complex128)
    g = inputs.gammas
    if kind is RxuKind.RXU1:
        return rxu1(g, a, b, delta)
    if kind is RxuKind.RXU2:
        return rxu2(g, a, b, eta)
    return rxu3(g, a, b, delta, eta)


# -- closed-form predictions -------------------------------------------------


def predicted_noise_matrix(algorithm, inputs, delta=1.0, eta=0.0):
    """Matrix whose (L,L), (R,R) and (L,R) entries are the output noise
    (C)PSDs predicted for ``algorithm``."""
    algorithm = Algorithm.parse(algorithm)
    a = np.asarray(inputs.a, dtype=np.complex128)
    b = np.asarray(inputs.b, dtype=np.complex128)
    g = inputs.gammas
    R_n = np.asarray(inputs.R_n)
    if algorithm in (Algorithm.BMVDR, Algorithm.BMVDR_N):
        if algorithm is Algorithm.BMVDR:
            eta = 0.0
        return (1.0 - eta**2) * np.outer(a, a.conj()) / g.gamma_a + eta**2 * R_n
    if algorithm is Algorithm.BLCMV:
        return rxu1(g, a, b, delta)
    return eta**2 * R_n + rxu3(g, a, b, delta, eta)


def predicted_out_noise_psd(algorithm, inputs, delta=1.0, eta=0.0):
    N = predicted_noise_matrix(algorithm, inputs, delta, eta)
    return float(np.real(N[inputs.ref_left, inputs.ref_left])), float(np.real(N[inputs.ref_right, inputs.ref_right]))


def predicted_out_snr(algorithm, inputs, delta=1.0, eta=0.0):
    """Closed-form output SNR ``(left, right)``."""
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.BMVDR:
        v = inputs.p_x * inputs.gammas.gamma_a
        return v, v
    n_l, n_r = predicted_out_noise_psd(algorithm, inputs, delta, eta)
    a = inputs.a
    return (
        ratio(inputs.p_x * abs(a[inputs.ref_left]) ** 2, n_l),
        ratio(inputs.p_x * abs(a[inputs.ref_right]) ** 2, n_r),
    )


def input_snr(inputs):
    R_n = np.asarray(inputs.R_n)
    return tuple(ratio(inputs.p_x * abs(inputs.a[r]) ** 2, np.real(R_n[r, r])) for r in inputs.refs())


def input_sir(inputs):
    return tuple(ratio(inputs.p_x * abs(inputs.a[r]) ** 2, inputs.p_u * abs(inputs.b[r]) ** 2) for r in inputs.refs())


def predicted_out_sir(algorithm, inputs, delta=1.0, eta=0.0):
    """Closed-form output SIR ``(left, right)``."""
    algorithm = Algorithm.parse(algorithm)
    g = inputs.gammas
    if algorithm is Algorithm.BMVDR:
        v = ratio(inputs.p_x * g.gamma_a**2, inputs.p_u * abs(g.gamma_ab) ** 2)
        return v, v
    if algorithm is Algorithm.BMVDR_N:
        M = rxu2(g, np.asarray(inputs.a, dtype=np.complex128), np.asarray(inputs.b, dtype=np.complex128), eta)
        return tuple(
            ratio(inputs.p_x * abs(inputs.a[r]) ** 2, inputs.p_u * np.real(M[r, r])) for r in inputs.refs()
        )
    if delta == 0:
        raise ZeroDelta("output SIR is unbounded for delta = 0")
    s_l, s_r = input_sir(inputs)
    return s_l / delta**2, s_r / delta**2


def predicted_sir_improvement_db(delta):
    """SIR gain of the BLCMV family, independent of the mixing parameter."""
    if delta == 0:
        raise ZeroDelta("SIR improvement is unbounded for delta = 0")
    return -20.0 * np.log10(abs(delta))


def predicted_itf_bmvdr_n(inputs, eta):
    """Closed-form output ITF of the interferer for the BMVDR-N."""
    g = inputs.gammas
    a, b = inputs.a, inputs.b
    l, r = inputs.refs()
    k = g.gamma_ab / g.gamma_a
    num = (1.0 - eta) * a[l] * k + eta * b[l]
    den = (1.0 - eta) * a[r] * k + eta * b[r]
    if den == 0:
        raise ZeroDenominator("right interferer output is zero")
    return complex(num / den)


def predicted_msc_bmvdr_n(inputs, eta):
    """Closed-form output noise MSC for the BMVDR-N, from input (C)PSDs."""
    g = inputs.gammas
    R_n = np.asarray(inputs.R_n)
    a = inputs.a
    l, r = inputs.refs()
    c = (1.0 - eta**2) / (inputs.p_x * g.gamma_a)
    p_x_lr = inputs.p_x * a[l] * np.conj(a[r])
    p_x_l = inputs.p_x * abs(a[l]) ** 2
    p_x_r = inputs.p_x * abs(a[r]) ** 2
    num = abs(c * p_x_lr + eta**2 * R_n[l, r]) ** 2
    den = (c * p_x_l + eta**2 * np.real(R_n[l, l])) * (c * p_x_r + eta**2 * np.real(R_n[r, r]))
    return float(min(num / den, 1.0))


def predicted_ic_blcmv_n(inputs, delta, eta):
    """Closed-form output noise IC and MSC of the BLCMV-N."""
    N = predicted_noise_matrix(Algorithm.BLCMV_N, inputs, delta, eta)
    return ic_from_matrix(N, inputs.ref_left, inputs.ref_right)


def predicted_ic(algorithm, inputs, delta=1.0, eta=0.0):
    N = predicted_noise_matrix(algorithm, inputs, delta, eta)
    return ic_from_matrix(N, inputs.ref_left, inputs.ref_right)


def input_ic(inputs):
    return ic_from_matrix(inputs.R_n, inputs.ref_left, inputs.ref_right)


def predicted_itf(algorithm, inputs, source):
    """Closed-form output ITF of ``source`` ('x' or 'u')."""
    algorithm = Algorithm.parse(algorithm)
    l, r = inputs.refs()
    if source == "x":
        return itf_vector(inputs.a, l, r)
    if algorithm in (Algorithm.BLCMV, Algorithm.BLCMV_N):
        return itf_vector(inputs.b, l, r)
    return itf_vector(inputs.a, l, r)


# -- parameter settings -------------------------------------------------------


def denominator_d(inputs, eta, delta, side="left"):
    """Output noise PSD of the BLCMV-N as a function of ``(eta, delta)``."""
    g = inputs.gammas
    a = np.asarray(inputs.a, dtype=np.complex128)
    b = np.asarray(inputs.b, dtype=np.complex128)
    r = inputs.ref_left if side == "left" else inputs.ref_right
    R_n = np.asarray(inputs.R_n)
    M = eta**2 * (R_n - rxu1(g, a, b, 1.0)) + rxu1(g, a, b, delta)
    return float(np.real(M[r, r]))


def delta_opt(inputs, side="left"):
    """SNR-maximizing interference scaling (not clamped to (0, 1])."""
    g = inputs.gammas
    _check_psi(g)
    r = inputs.ref_left if side == "left" else inputs.ref_right
    a_r, b_r = inputs.a[r], inputs.b[r]
    beta = abs(b_r) ** 2 / g.gamma_b
    if beta <= 0:
        raise ZeroBeta("interferer reference entry is zero")
    # psi / conj(gamma_ab) == gamma_ab / (gamma_a gamma_b), finite at gamma_ab = 0
    alpha = np.real(a_r * np.conj(b_r) * g.gamma_ab) / (g.gamma_a * g.gamma_b)
    return float(alpha / beta)


def eta_opt():
    """SNR-optimal mixing parameter: no mixing at all."""
    return 0.0


# -- filter-based route -------------------------------------------------------


@dataclass(frozen=True)
class FilterMetrics:
    snr_out: tuple
    sir_out: tuple
    noise_psd: tuple
    itf_x: complex
    itf_u: complex
    ic_n: complex
    msc_n: float


def filter_metrics(pair, inputs):
    """Evaluate a designed filter pair on the rank-1 source model."""
    a = np.asarray(inputs.a, dtype=np.complex128)
    b = np.asarray(inputs.b, dtype=np.complex128)
    R_x = inputs.p_x * np.outer(a, a.conj())
    R_u = inputs.p_u * np.outer(b, b.conj())
    R_n = np.asarray(inputs.R_n)
    ws = (pair.w_left, pair.w_right)
    px = [psd(R_x, w) for w in ws]
    pu = [psd(R_u, w) for w in ws]
    pn = [psd(R_n, w) for w in ws]
    snr_out = tuple(ratio(x, n) for x, n in zip(px, pn))
    sir_out = tuple(np.inf if u == 0 else x / u for x, u in zip(px, pu))
    try:
        itf_u = itf_out(pair.w_left, pair.w_right, b)
    except ZeroDenominator:
        itf_u = complex("nan")
    ic, msc = ic_msc(R_n, pair.w_left, pair.w_right)
    return FilterMetrics(snr_out, sir_out, tuple(pn), itf_out(pair.w_left, pair.w_right, a), itf_u, ic, msc)

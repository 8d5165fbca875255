"""Covariance estimation under an oracle VAD and covariance-whitening RTFs."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import InsufficientFrames, LengthMismatch, ParseError, ZeroReferenceEntry
from .hermitian import cholesky

NOISE_ONLY = 0
DESIRED = 1
INTERFERER = 2
BOTH = 3
DEGENERATE_EIGENVALUE = 1.0 + 1e-3


def _pairwise_sum(Z):
    """Pairwise (tree) reduction over axis 0: fixed summation order."""
    while Z.shape[0] > 1:
        if Z.shape[0] % 2:
            Z = np.concatenate([Z[:-2], Z[-2:-1] + Z[-1:]], axis=0)
        Z = Z[0::2] + Z[1::2]
    return Z[0]


def estimate_cov(tensor, labels=None, classes=None):
    """Sample covariances ``(bins, M, M)`` over the frames whose VAD label is
    in ``classes`` (all frames when ``labels`` is None).

    Outer products are accumulated in blocks of frames and the block sums
    are reduced pairwise, so the summation order is fixed by the frame
    count alone.
    """
    Y = np.asarray(tensor, dtype=np.complex128)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (Y.shape[0],):
            raise LengthMismatch(f"{labels.shape[0]} labels for {Y.shape[0]} frames")
        Y = Y[np.isin(labels, list(classes))]
    m = Y.shape[2]
    if Y.shape[0] < m:
        raise InsufficientFrames(f"{Y.shape[0]} frames selected, need at least {m}")
    blocks = [np.einsum("tfi,tfj->fij", Y[i:i + 16], Y[i:i + 16].conj()) for i in range(0, Y.shape[0], 16)]
    R = _pairwise_sum(np.stack(blocks)) / Y.shape[0]
    return 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))


@dataclass(frozen=True)
class CovEstimates:
    R_n: np.ndarray
    R_xn: np.ndarray
    R_v: np.ndarray
    frame_counts: dict


def estimate_all(tensor, labels):
    """Noise, desired+noise and interferer+noise covariances from VAD labels."""
    labels = np.asarray(labels)
    counts = {c: int(np.sum(labels == c)) for c in (NOISE_ONLY, DESIRED, INTERFERER, BOTH)}
    return CovEstimates(
        R_n=estimate_cov(tensor, labels, [NOISE_ONLY]),
        R_xn=estimate_cov(tensor, labels, [DESIRED]),
        R_v=estimate_cov(tensor, labels, [INTERFERER]),
        frame_counts=counts,
    )


@dataclass(frozen=True)
class RtfEstimate:
    rtf: np.ndarray
    eigenvalue: float
    degenerate: bool


def cw_rtf(R_sn, R_n, ref):
    """Covariance-whitening RTF of the source dominating ``R_sn - R_n``.

    With ``R_n = L L^H`` the principal eigenvector ``u`` of
    ``L^{-1} R_sn L^{-H}`` is de-whitened as ``L u`` and normalized to the
    ``ref`` entry. ``degenerate`` flags an eigenvalue too close to one for a
    source to be present.
    """
    L, _ = cholesky(R_n)
    tmp = scipy.linalg.solve_triangular(L, np.asarray(R_sn, dtype=np.complex128), lower=True, check_finite=False)
    C = scipy.linalg.solve_triangular(L, tmp.conj().T, lower=True, check_finite=False)
    C = 0.5 * (C + C.conj().T)
    vals, vecs = scipy.linalg.eigh(C, check_finite=False)
    v = L @ vecs[:, -1]
    lam = float(vals[-1])
    degenerate = lam < DEGENERATE_EIGENVALUE
    if abs(v[ref]) <= 1e-14 * np.linalg.norm(v):
        if degenerate:
            # no source: the eigenvector is arbitrary, there is nothing to report
            return RtfEstimate(np.full(v.shape, np.nan, dtype=complex), lam, True)
        raise ZeroReferenceEntry("estimated steering vector vanishes at the reference")
    rtf = v / v[ref]
    rtf[ref] = 1.0
    return RtfEstimate(rtf, lam, degenerate)


def oracle_vad(x, u, cfg, threshold_db=-40.0):
    """Frame labels from the clean source components ``(samples, channels)``.

    A source counts as active in a frame when its windowed frame energy in
    channel 0 exceeds ``threshold_db`` relative to its loudest frame.
    """
    from .stft import analyze

    def active(sig):
        if sig is None:
            return None
        e = np.sum(np.abs(analyze(sig[:, :1], cfg)[:, :, 0]) ** 2, axis=1)
        return e > e.max() * 10 ** (threshold_db / 10)

    ax = active(np.asarray(x, dtype=float))
    au = active(None if u is None else np.asarray(u, dtype=float))
    if au is None:
        au = np.zeros_like(ax)
    labels = np.full(ax.shape, NOISE_ONLY)
    labels[ax & ~au] = DESIRED
    labels[~ax & au] = INTERFERER
    labels[ax & au] = BOTH
    return labels


def read_vad(path):
    """One integer label per line (blank lines and ``#`` comments ignored)."""
    labels = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            v = int(line)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not an integer: {line!r}") from None
        if v not in (NOISE_ONLY, DESIRED, INTERFERER, BOTH):
            raise ParseError(f"{path}:{lineno}: unknown label {v}")
        labels.append(v)
    return np.asarray(labels, dtype=int)


def write_vad(path, labels):
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))

"""STFT-domain processing chain for recorded or rendered multichannel signals.

analyze -> covariance estimation -> covariance-whitening RTFs -> per-bin
filters -> apply -> synthesize. When the ground-truth components are
available they are pushed through the same filters (shadow filtering) to
measure SNR, SIR and noise MSC at the outputs.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import beamformers as bf
from .beamformers import Algorithm
from .errors import NumericalError, PreconditionError
from .estimation import CovEstimates, cw_rtf, estimate_all, estimate_cov
from .metrics import msc_error, predicted_sir_improvement_db
from .report import MetricsReport
from .stft import StftConfig, analyze, apply_filters, synthesize

log = logging.getLogger(__name__)

WORKERS_ENV = "BINBEAM_WORKERS"


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def map_bins(fn, n_bins, workers=None):
    """Apply ``fn(f)`` to every bin, preserving bin order in the result."""
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        return [fn(f) for f in range(n_bins)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_bins)))


@dataclass(frozen=True)
class ProcessConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    ref_left: int = 0
    ref_right: int = 2
    delta: float = 0.3
    eta: float = 0.3
    algorithms: tuple = tuple(Algorithm)


@dataclass
class ProcessResult:
    outputs: dict
    filters: dict
    rtf_desired: np.ndarray
    rtf_interferer: np.ndarray
    degenerate_bins: dict
    report: MetricsReport | None = None
    shadow: dict | None = None


def oracle_covariances(X, U, N):
    """Covariances computed from the separately known component spectra."""
    R_n = estimate_cov(N)
    return CovEstimates(R_n=R_n, R_xn=estimate_cov(X) + R_n, R_v=estimate_cov(U) + R_n, frame_counts={})


def _per_bin_value(v, f):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else float(v[f])


def design_filters(cov, cfg, workers=None):
    """RTFs and per-bin filter pairs for every requested algorithm.

    Bins whose desired RTF (or, for the BLCMV family, interferer RTF) is
    flagged degenerate, or whose constraints are collinear, fall back to
    the unprocessed reference microphones.
    """
    n_bins, m, _ = cov.R_n.shape
    algos = [Algorithm.parse(a) for a in cfg.algorithms]
    l, r = cfg.ref_left, cfg.ref_right

    def one(f):
        out = {"a": np.full(m, np.nan, complex), "b": np.full(m, np.nan, complex), "w": {}, "bad": set()}
        try:
            ea = cw_rtf(cov.R_xn[f], cov.R_n[f], l)
            eb = cw_rtf(cov.R_v[f], cov.R_n[f], l)
        except NumericalError:
            out["bad"] = set(algos)
            ea = eb = None
        if ea is not None:
            out["a"], out["b"] = ea.rtf, eb.rtf
        delta = _per_bin_value(cfg.delta, f)
        eta = _per_bin_value(cfg.eta, f)
        for alg in algos:
            uses_b = alg in (Algorithm.BLCMV, Algorithm.BLCMV_N)
            if ea is None or ea.degenerate or (uses_b and eb.degenerate):
                out["bad"].add(alg)
            else:
                try:
                    pair = bf.design(alg, cov.R_n[f], ea.rtf, eb.rtf, l, r, delta, eta)
                    out["w"][alg] = (pair.w_left, pair.w_right)
                    continue
                except NumericalError:
                    out["bad"].add(alg)
            out["w"][alg] = (bf.selection(m, l), bf.selection(m, r))
        return out

    per_bin = map_bins(one, n_bins, workers)
    filters = {
        alg: (np.stack([p["w"][alg][0] for p in per_bin]), np.stack([p["w"][alg][1] for p in per_bin])) for alg in algos
    }
    bad = {alg: [f for f, p in enumerate(per_bin) if alg in p["bad"]] for alg in algos}
    return filters, np.stack([p["a"] for p in per_bin]), np.stack([p["b"] for p in per_bin]), bad


def _bin_power(Z):
    return np.sum(np.abs(Z) ** 2, axis=0)


def _parseval_weights(n_bins):
    # one-sided spectrum: every bin but DC and Nyquist stands for two
    w = np.full(n_bins, 2.0)
    w[0] = w[-1] = 1.0
    return w


def _msc_curve(Z):
    num = np.abs(np.sum(Z[:, :, 0] * Z[:, :, 1].conj(), axis=0)) ** 2
    den = np.sum(np.abs(Z[:, :, 0]) ** 2, axis=0) * np.sum(np.abs(Z[:, :, 1]) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.clip(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0), 0.0, 1.0)


def _db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def shadow_report(X, U, N, filters, cfg, freqs_hz):
    """Signal-based measures from filtering each component separately.

    Broadband ratios use powers summed over all frames and bins, weighted
    so that they equal time-domain power ratios.
    """
    refs = [cfg.ref_left, cfg.ref_right]
    wts = _parseval_weights(X.shape[1])
    x_in, u_in, n_in = X[:, :, refs], U[:, :, refs], N[:, :, refs]
    rep = MetricsReport(np.asarray(freqs_hz))
    msc_in = _msc_curve(n_in)
    rep.add_bins("msc_in", "INPUT", "", msc_in)
    shadow = {}
    for alg, (w_l, w_r) in filters.items():
        zx, zu, zn = (apply_filters(C, w_l, w_r) for C in (X, U, N))
        shadow[alg] = (zx, zu, zn)
        name = alg.value
        for k, side in enumerate("LR"):
            px_o, pu_o, pn_o = _bin_power(zx[:, :, k]), _bin_power(zu[:, :, k]), _bin_power(zn[:, :, k])
            px_i, pu_i, pn_i = _bin_power(x_in[:, :, k]), _bin_power(u_in[:, :, k]), _bin_power(n_in[:, :, k])
            with np.errstate(divide="ignore", invalid="ignore"):
                rep.add_bins("dsnr_db", name, side, _db(px_o / pn_o) - _db(px_i / pn_i))
                rep.add_bins("dsir_db", name, side, _db(px_o / pu_o) - _db(px_i / pu_i))
                bx_o, bu_o, bn_o, bx_i, bu_i, bn_i = (wts @ p for p in (px_o, pu_o, pn_o, px_i, pu_i, pn_i))
                rep.add_broadband("dsnr_db", name, side, _db(bx_o / bn_o) - _db(bx_i / bn_i))
                rep.add_broadband("dsir_db", name, side, _db(bx_o / bu_o) - _db(bx_i / bu_i))
        msc_out = _msc_curve(zn)
        rep.add_bins("msc_out", name, "", msc_out)
        rep.add_broadband("dmsc", name, "", msc_error(msc_in, msc_out))
        if alg in (Algorithm.BLCMV, Algorithm.BLCMV_N) and float(np.min(cfg.delta)) > 0:
            rep.add_broadband("dsir_db_predicted", name, "", predicted_sir_improvement_db(float(np.mean(cfg.delta))))
    return rep, shadow


def run_pipeline(y, cfg, labels=None, components=None, oracle=False, workers=None):
    """Process a multichannel signal ``(samples, M)``.

    ``labels`` is the per-frame VAD; ``components`` an optional
    ``(x, u, n)`` triple of ground-truth signals (with ``y = x + u + n``).
    With ``oracle=True`` covariances come from the components instead of
    the VAD segmentation.
    """
    y = np.asarray(y, dtype=float)
    Y = analyze(y, cfg.stft)
    comp_spec = None
    if components is not None:
        comp_spec = tuple(analyze(np.asarray(c, dtype=float), cfg.stft) for c in components)
    if oracle:
        if comp_spec is None:
            raise PreconditionError("oracle covariances need the ground-truth components")
        cov = oracle_covariances(*comp_spec)
    else:
        cov = estimate_all(Y, labels)
    filters, a, b, bad = design_filters(cov, cfg, workers)
    for alg, bins in bad.items():
        if bins:
            log.info("%s: %d bins fall back to the reference microphones", alg.value, len(bins))
    outputs = {alg: synthesize(apply_filters(Y, *w), cfg.stft, length=y.shape[0]) for alg, w in filters.items()}
    result = ProcessResult(outputs, filters, a, b, {alg.value: v for alg, v in bad.items()})
    if comp_spec is not None:
        result.report, result.shadow = shadow_report(*comp_spec, filters, cfg, cfg.stft.freqs_hz)
        result.report.notes["degenerate_bins"] = result.degenerate_bins
        if not oracle:
            result.report.notes["frame_counts"] = {str(k): v for k, v in cov.frame_counts.items()}
    return result

"""Matrix-level parameter sweeps: closed-form predictions against filters.

Every grid point yields two rows, one per route. The closed-form route
evaluates the gamma/Rxu expressions; the filter route designs the filters
and evaluates quadratic forms on the rank-1 source model.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import beamformers as bf
from .beamformers import Algorithm
from .errors import InvalidGeometry, NumericalError, PreconditionError, ZeroDelta, ZeroPowerChannel
from .metrics import (
    BeamformerInputs,
    delta_opt,
    input_ic,
    input_sir,
    input_snr,
    predicted_ic,
    predicted_out_sir,
    predicted_out_snr,
    psd,
    ratio,
)
from .pipeline import map_bins
from .scene import build_matrices, iso_coherence

DELTA_RANGE = (-1.0, 1.5)
ROUTES = ("closed_form", "filter")
COLUMNS = (
    "freq_hz", "delta", "eta", "algorithm", "route",
    "dsnr_l", "dsnr_r", "dsir_l", "dsir_r",
    "msc_in", "msc_out", "dmsc", "delta_opt_l", "delta_opt_r", "delta_opt_in_range",
)
NAN = float("nan")


@dataclass(frozen=True)
class ValidateJob:
    """One sweep. ``freqs_hz`` of ``None`` means every bin; requested
    frequencies snap to the nearest bin."""

    scene: object
    deltas: tuple = (0.3,)
    etas: tuple = (0.3,)
    algorithms: tuple = tuple(Algorithm)
    freqs_hz: tuple | None = None
    database: object = None
    out_path: str | None = None
    workers: int | None = None

    def __post_init__(self):
        for name in ("deltas", "etas", "algorithms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.deltas or not self.etas or not self.algorithms:
            raise PreconditionError("parameter grids and algorithm list must be non-empty")
        lo, hi = DELTA_RANGE
        if any(not lo <= d <= hi for d in self.deltas):
            raise PreconditionError(f"delta grid must lie within [{lo}, {hi}]")
        if any(not 0.0 <= e <= 1.0 for e in self.etas):
            raise PreconditionError("eta grid must lie within [0, 1]")
        object.__setattr__(self, "deltas", tuple(sorted(float(d) for d in self.deltas)))
        object.__setattr__(self, "etas", tuple(sorted(float(e) for e in self.etas)))
        algos = sorted({Algorithm.parse(a) for a in self.algorithms}, key=lambda a: a.value)
        object.__setattr__(self, "algorithms", tuple(algos))


def _db(x):
    if x == 0:
        return -math.inf
    return 10.0 * math.log10(x)


def scene_matrices(job):
    """``(freqs_hz, a, b, R_n)`` for the selected bins."""
    spec = job.scene
    db = job.database
    if db is None:
        mats = build_matrices(spec)
        freqs, a, b, R_n = mats.freqs_hz, mats.a, mats.b, mats.R_n
    else:
        if db.h.shape[2] != spec.num_channels:
            raise InvalidGeometry(f"ATF database has {db.h.shape[2]} channels, scene has {spec.num_channels}")
        freqs = db.freqs_hz
        a = db.at(spec.source("desired").angle_deg)
        b = db.at(spec.source("interferer").angle_deg)
        gamma = iso_coherence(db.h)
        R_n = spec.noise.p_white * np.eye(spec.num_channels) + spec.noise.p_iso * gamma
    if job.freqs_hz is None:
        idx = np.arange(freqs.shape[0])
    else:
        idx = np.unique([int(np.argmin(np.abs(freqs - f))) for f in job.freqs_hz])
    return freqs[idx], a[idx], b[idx], R_n[idx]


def _closed_form(alg, inp, delta, eta):
    s_l, s_r = predicted_out_snr(alg, inp, delta, eta)
    try:
        i_l, i_r = predicted_out_sir(alg, inp, delta, eta)
    except ZeroDelta:
        i_l = i_r = math.inf
    _, msc = predicted_ic(alg, inp, delta, eta)
    return s_l, s_r, i_l, i_r, msc


class _BinFilters:
    """Per-bin building blocks; every algorithm's filters are linear
    combinations of the BMVDR, the common desired/interferer-passing
    filters and the reference selectors."""

    def __init__(self, inp):
        m = inp.m
        l, r = inp.refs()
        a, b = inp.a, inp.b
        self.inp = inp
        self.e = (bf.selection(m, l), bf.selection(m, r))
        self.mvdr = (bf.bmvdr(inp.R_n, a, l), bf.bmvdr(inp.R_n, a, r))
        try:
            w_x, w_u = bf.common_filters(inp.R_n, a, b)
        except NumericalError:
            self.wx = self.wu = None
        else:
            self.wx = (w_x * np.conj(a[l]), w_x * np.conj(a[r]))
            self.wu = (w_u * np.conj(b[l]), w_u * np.conj(b[r]))

    def pair(self, alg, delta, eta):
        if alg is Algorithm.BMVDR:
            return self.mvdr
        if alg is Algorithm.BMVDR_N:
            return tuple((1 - eta) * w + eta * e for w, e in zip(self.mvdr, self.e))
        if self.wx is None:
            raise bf.DegenerateConstraints("collinear steering vectors")
        if alg is Algorithm.BLCMV:
            eta = 0.0
        return tuple(eta * e + (1 - eta) * x + (delta - eta) * u for e, x, u in zip(self.e, self.wx, self.wu))


def _filter_route(bins, alg, delta, eta):
    inp = bins.inp
    w_l, w_r = bins.pair(alg, delta, eta)
    a = np.asarray(inp.a)
    b = np.asarray(inp.b)
    R_n = np.asarray(inp.R_n)
    out = []
    for w in (w_l, w_r):
        px = inp.p_x * abs(np.vdot(w, a)) ** 2
        pu = inp.p_u * abs(np.vdot(w, b)) ** 2
        out.append((ratio(px, psd(R_n, w)), math.inf if pu == 0 else px / pu))
    p_l, p_r = psd(R_n, w_l), psd(R_n, w_r)
    if p_l * p_r == 0:
        raise ZeroPowerChannel("output noise PSD is zero on one side")
    msc = min(abs(np.vdot(w_l, R_n @ w_r)) ** 2 / (p_l * p_r), 1.0)
    return out[0][0], out[1][0], out[0][1], out[1][1], msc


def _undefined(alg, delta, eta):
    return alg is Algorithm.BLCMV_N and eta == 1.0 and delta != 1.0


def _bin_rows(job, f_hz, inp):
    snr_in = input_snr(inp)
    sir_in = input_sir(inp)
    msc_in = input_ic(inp)[1]
    try:
        d_opt = (delta_opt(inp, "left"), delta_opt(inp, "right"))
    except NumericalError:
        d_opt = (NAN, NAN)
    d_opt = d_opt + (int(all(0.0 < d <= 1.0 for d in d_opt)),)
    bins = _BinFilters(inp)
    rows = []
    for delta in job.deltas:
        for eta in job.etas:
            for alg in job.algorithms:
                for route in ROUTES:
                    vals = None
                    if not _undefined(alg, delta, eta):
                        try:
                            if route == "closed_form":
                                vals = _closed_form(alg, inp, delta, eta)
                            else:
                                vals = _filter_route(bins, alg, delta, eta)
                        except NumericalError:
                            vals = None
                    if vals is None:
                        metrics = (NAN,) * 7
                    else:
                        s_l, s_r, i_l, i_r, msc = vals
                        metrics = (
                            _db(s_l) - _db(snr_in[0]), _db(s_r) - _db(snr_in[1]),
                            _db(i_l) - _db(sir_in[0]), _db(i_r) - _db(sir_in[1]),
                            msc_in, msc, abs(msc - msc_in),
                        )
                    rows.append((f_hz, delta, eta, alg.value, route) + metrics + d_opt)
    return rows


def run_validate(job):
    """All sweep rows, sorted by frequency, delta, eta, algorithm and route.

    When every bin is swept, a closing row per grid point (``freq_hz`` =
    ``mean``) carries the MSC error averaged over all bins except DC.
    """
    freqs, a, b, R_n = scene_matrices(job)
    spec = job.scene
    inputs = [
        BeamformerInputs(R_n[k], a[k], b[k], spec.ref_left, spec.ref_right, spec.p_x, spec.p_u)
        for k in range(freqs.shape[0])
    ]
    per_bin = map_bins(lambda k: _bin_rows(job, float(freqs[k]), inputs[k]), len(inputs), job.workers)
    rows = [r for chunk in per_bin for r in chunk]
    if job.freqs_hz is None and len(per_bin) > 1:
        rows.extend(_mean_rows(per_bin))
    return rows


def _mean_rows(per_bin):
    out = []
    for j, key_row in enumerate(per_bin[0]):
        dmsc = [chunk[j][11] for chunk in per_bin[1:]]
        val = float(np.mean(dmsc)) if not any(math.isnan(v) for v in dmsc) else NAN
        out.append(("mean",) + key_row[1:5] + (NAN,) * 6 + (val, NAN, NAN, 0))
    return out


def _fmt(v):
    if isinstance(v, (str, int)):
        return str(v)
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return str(v)
    return repr(float(v))


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))

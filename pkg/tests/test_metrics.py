import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binbeam import beamformers as bf
from binbeam import metrics as mt
from binbeam.beamformers import Algorithm
from binbeam.errors import DegenerateConstraints, LengthMismatch, ZeroBeta, ZeroDelta, ZeroDenominator, ZeroPowerChannel
from binbeam.metrics import BeamformerInputs

from conftest import random_inputs, random_pd, random_vec, seeds


def naive_quadratic(R, w):
    m = len(w)
    return sum(np.conj(w[i]) * R[i, j] * w[j] for i in range(m) for j in range(m))


def test_psd_basics(rng):
    assert mt.psd(np.eye(3), bf.selection(3, 0)) == 1.0
    assert mt.psd(np.eye(3), np.zeros(3)) == 0.0
    R = random_pd(rng, 5)
    w = random_vec(rng, 5)
    assert mt.psd(R, w) == pytest.approx(np.real(naive_quadratic(R, w)), rel=1e-12)
    v = random_vec(rng, 3)
    P = np.outer(v, v.conj())
    null = np.cross(v.conj(), random_vec(rng, 3).conj()).conj()
    null -= v * np.vdot(v, null) / np.vdot(v, v)
    assert mt.psd(P, null) >= 0.0


def test_ratio_and_improvement():
    assert mt.snr(1.0, 1.0) == 1.0
    assert mt.improvement_db(10.0, 1.0) == pytest.approx(10.0)
    with pytest.raises(ZeroDenominator):
        mt.sir(1.0, 0.0)


def test_itf_and_cues():
    itf = mt.itf_vector(np.array([2.0, 2.0]), 0, 1)
    ild, itd = mt.ild_itd(np.array([itf, itf]), np.array([1.0, 2.0]))
    assert itf == 1 and np.all(ild == 1) and np.all(itd == 0)
    tau = 3.1e-4
    omega = 2 * np.pi * np.linspace(0, 8000, 257)
    ild, itd = mt.ild_itd(np.exp(1j * omega * tau), omega)
    assert np.isnan(itd[0])
    np.testing.assert_allclose(itd[1:], tau, rtol=1e-10)
    np.testing.assert_allclose(ild, 1.0)
    with pytest.raises(ZeroDenominator):
        mt.itf_vector(np.array([1.0, 0.0]), 0, 1)
    v = np.array([1 + 2j, 0.5 - 1j, 3.0])
    assert mt.itf_from_cov(np.outer(v, v.conj()), 0, 1) == pytest.approx(v[0] / v[1])


def test_ic_msc_trivial_cases(rng):
    R = random_pd(rng, 4)
    w = random_vec(rng, 4)
    _, msc = mt.ic_msc(R, w, w)
    assert msc == pytest.approx(1.0)
    _, msc = mt.ic_msc(np.eye(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert msc == 0.0
    with pytest.raises(ZeroPowerChannel):
        mt.ic_msc(np.eye(2), np.zeros(2), np.array([0.0, 1.0]))
    ic, _ = mt.ic_msc(R, w, random_vec(rng, 4))
    assert abs(ic) <= 1 + 1e-12


def test_msc_error(rng):
    assert mt.msc_error(np.full(5, 0.4), np.full(5, 0.4)) == 0.0
    assert mt.msc_error(np.ones(9), np.zeros(9)) == 1.0
    a, b = rng.uniform(size=33), rng.uniform(size=33)
    direct = sum(abs(a[f] - b[f]) for f in range(1, 33)) / 32
    assert mt.msc_error(a, b) == pytest.approx(direct, rel=1e-12)
    # DC is excluded
    a2 = a.copy()
    a2[0] = 99.0
    assert mt.msc_error(a2, b) == mt.msc_error(a, b)
    with pytest.raises(LengthMismatch):
        mt.msc_error(np.ones(3), np.ones(4))
    with pytest.raises(LengthMismatch):
        mt.msc_error(np.ones(1), np.ones(1))


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.05, 1.0), st.floats(0.0, 0.95), st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_closed_form_matches_filter_route(seed, delta, eta, p_x, p_u):
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng, p_x=p_x, p_u=p_u)
    for alg in Algorithm:
        fm = mt.filter_metrics(inp.design(alg, delta, eta), inp)
        np.testing.assert_allclose(mt.predicted_out_snr(alg, inp, delta, eta), fm.snr_out, rtol=1e-8)
        np.testing.assert_allclose(mt.predicted_out_sir(alg, inp, delta, eta), fm.sir_out, rtol=1e-8)
        np.testing.assert_allclose(mt.predicted_out_noise_psd(alg, inp, delta, eta), fm.noise_psd, rtol=1e-8)
        ic, msc = mt.predicted_ic(alg, inp, delta, eta)
        assert ic == pytest.approx(fm.ic_n, rel=1e-8, abs=1e-10)
        assert msc == pytest.approx(fm.msc_n, rel=1e-8, abs=1e-10)


def test_trivial_predictions():
    inp = BeamformerInputs(np.eye(2), np.array([1.0, 0.0]), np.array([0.5, 1.0]), 0, 1)
    assert mt.predicted_out_snr(Algorithm.BMVDR, inp) == (1.0, 1.0)
    r = random_inputs(np.random.default_rng(5))
    assert mt.predicted_out_snr(Algorithm.BLCMV_N, r, 0.3, 0.0) == pytest.approx(mt.predicted_out_snr(Algorithm.BLCMV, r, 0.3))
    assert mt.predicted_sir_improvement_db(0.3) == pytest.approx(10 * np.log10(1 / 0.09))
    assert mt.predicted_sir_improvement_db(1.0) == 0.0
    with pytest.raises(ZeroDelta):
        mt.predicted_sir_improvement_db(0.0)
    with pytest.raises(ZeroDelta):
        mt.predicted_out_sir(Algorithm.BLCMV, r, 0.0)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(-1.0, 1.5), st.floats(0.0, 1.0))
def test_rxu_relations(seed, delta, eta):
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng)
    r1 = mt.rxu_matrix("Rxu1", inp, delta)
    r3 = mt.rxu_matrix("Rxu3", inp, delta, eta)
    np.testing.assert_allclose(r3, r1 - eta**2 * mt.rxu_matrix("Rxu1", inp, 1.0), atol=1e-10 * np.linalg.norm(r1))
    for M in (r1, r3, mt.rxu_matrix("Rxu2", inp, eta=eta)):
        np.testing.assert_allclose(M, M.conj().T, atol=1e-12 * np.linalg.norm(M))
    assert np.linalg.matrix_rank(r3, tol=1e-9 * np.linalg.norm(r3)) <= 2
    if eta == 0:
        np.testing.assert_allclose(r3, r1, atol=1e-12 * np.linalg.norm(r1))


def test_rxu3_vanishes_without_processing(rng):
    inp = random_inputs(rng)
    assert np.linalg.norm(mt.rxu_matrix("Rxu3", inp, 1.0, 1.0)) < 1e-12 * np.linalg.norm(mt.rxu_matrix("Rxu1", inp, 1.0))


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(-1.0, 1.5), st.floats(0.0, 0.95))
def test_blcmv_n_noise_entries_against_quadratic_forms(seed, delta, eta):
    """Left, right and cross entries of eta^2 R_n + Rxu3 equal explicit filter forms."""
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng)
    l, r = inp.refs()
    w_l = bf.blcmv_n(inp.R_n, inp.a, inp.b, l, delta, eta) if 0 < delta <= 1 else None
    if w_l is None:
        return
    w_r = bf.blcmv_n(inp.R_n, inp.a, inp.b, r, delta, eta)
    N = eta**2 * inp.R_n + mt.rxu_matrix("Rxu3", inp, delta, eta)
    scale = np.real(inp.R_n[l, l] + inp.R_n[r, r])
    assert np.real(N[l, l]) == pytest.approx(np.real(naive_quadratic(inp.R_n, w_l)), rel=1e-9, abs=1e-12 * scale)
    assert np.real(N[r, r]) == pytest.approx(np.real(naive_quadratic(inp.R_n, w_r)), rel=1e-9, abs=1e-12 * scale)
    assert N[l, r] == pytest.approx(np.vdot(w_l, inp.R_n @ w_r), rel=1e-9, abs=1e-12 * scale)


def test_common_filter_cross_term_is_negative(rng):
    """w_x^H R_n w_u = -psi / ((1 - psi) conj(gamma_ab))."""
    for _ in range(50):
        inp = random_inputs(rng)
        g = inp.gammas
        w_x, w_u = bf.common_filters(inp.R_n, inp.a, inp.b)
        cross = np.vdot(w_x, inp.R_n @ w_u)
        expected = -g.psi / ((1 - g.psi) * np.conj(g.gamma_ab))
        assert cross == pytest.approx(expected, rel=1e-9)
        assert np.real(np.vdot(w_x, inp.R_n @ w_x)) == pytest.approx(1 / (g.gamma_a * (1 - g.psi)), rel=1e-9)
        assert np.real(np.vdot(w_u, inp.R_n @ w_u)) == pytest.approx(1 / (g.gamma_b * (1 - g.psi)), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_mixture_psd_identity(seed, delta, eta):
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng)
    for k, side in enumerate(("left", "right")):
        ref = inp.refs()[k]
        p_in = np.real(inp.R_n[ref, ref])
        p_blcmv = mt.predicted_out_noise_psd(Algorithm.BLCMV, inp, delta)[k]
        p_blcmv_1 = mt.predicted_out_noise_psd(Algorithm.BLCMV, inp, 1.0)[k]
        rhs = eta**2 * (p_in - p_blcmv_1) + p_blcmv
        assert mt.predicted_out_noise_psd(Algorithm.BLCMV_N, inp, delta, eta)[k] == pytest.approx(rhs, rel=1e-9)
        assert mt.denominator_d(inp, eta, delta, side) == pytest.approx(rhs, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(-1.0, 1.0))
def test_denominator_nondecreasing_in_eta(seed, delta):
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng)
    for side in ("left", "right"):
        d = [mt.denominator_d(inp, e, delta, side) for e in np.linspace(0, 1, 21)]
        assert np.all(np.diff(d) >= -1e-12 * abs(d[0]))
    assert mt.eta_opt() == 0.0


def test_delta_opt_is_sweep_argmax(rng):
    grid = np.round(np.arange(-1.0, 1.0 + 1e-9, 1e-3), 3)
    for _ in range(30):
        inp = random_inputs(rng)
        for k, side in enumerate(("left", "right")):
            d_opt = mt.delta_opt(inp, side)
            if not -1.0 < d_opt < 1.0:
                continue
            snr = [mt.predicted_out_snr(Algorithm.BLCMV, inp, d)[k] for d in grid]
            assert abs(grid[int(np.argmax(snr))] - d_opt) <= 1e-3 + 1e-12


def test_delta_opt_edge_cases(rng):
    R = np.eye(3)
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.5])
    # a and b orthogonal under R_n: gamma_ab = 0 puts the optimum at delta = 0
    inp = BeamformerInputs(R, a + b, a - 0.8 * b, 0, 1)
    assert inp.gammas.gamma_ab == pytest.approx(0.0, abs=1e-15)
    assert mt.delta_opt(inp, "left") == pytest.approx(0.0, abs=1e-14)
    assert mt.delta_opt(inp, "right") == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ZeroBeta):
        mt.delta_opt(BeamformerInputs(R, a + b, b, 0, 1), "left")
    with pytest.raises(DegenerateConstraints):
        mt.delta_opt(BeamformerInputs(R, a, 2 * a, 0, 1), "left")


def test_cue_preservation(rng):
    for _ in range(50):
        inp = random_inputs(rng)
        itf_x, itf_u = mt.itf_vector(inp.a, *inp.refs()), mt.itf_vector(inp.b, *inp.refs())
        for alg in Algorithm:
            fm = mt.filter_metrics(inp.design(alg, 0.3, 0.3), inp)
            assert fm.itf_x == pytest.approx(itf_x, rel=1e-9)
            assert mt.predicted_itf(alg, inp, "x") == pytest.approx(itf_x)
            if alg in (Algorithm.BLCMV, Algorithm.BLCMV_N):
                assert fm.itf_u == pytest.approx(itf_u, rel=1e-9)
        fm = mt.filter_metrics(inp.design(Algorithm.BMVDR), inp)
        assert fm.itf_u == pytest.approx(itf_x, rel=1e-9)
        assert fm.msc_n == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_bmvdr_n_cue_predictions(seed, eta):
    rng = np.random.default_rng(seed)
    inp = random_inputs(rng)
    fm = mt.filter_metrics(inp.design(Algorithm.BMVDR_N, eta=eta), inp)
    assert mt.predicted_itf_bmvdr_n(inp, eta) == pytest.approx(fm.itf_u, rel=1e-8)
    assert mt.predicted_msc_bmvdr_n(inp, eta) == pytest.approx(fm.msc_n, rel=1e-8, abs=1e-12)


def test_bmvdr_n_cue_limits(rng):
    inp = random_inputs(rng)
    l, r = inp.refs()
    assert mt.predicted_itf_bmvdr_n(inp, 1.0) == pytest.approx(inp.b[l] / inp.b[r])
    assert mt.predicted_itf_bmvdr_n(inp, 0.0) == pytest.approx(inp.a[l] / inp.a[r])
    assert mt.predicted_msc_bmvdr_n(inp, 1.0) == pytest.approx(mt.input_ic(inp)[1])
    assert mt.predicted_msc_bmvdr_n(inp, 0.0) == pytest.approx(1.0)


def test_blcmv_n_ic_limits(rng):
    inp = random_inputs(rng)
    ic, _ = mt.predicted_ic_blcmv_n(inp, 1.0, 1.0)
    assert ic == pytest.approx(mt.input_ic(inp)[0])
    ic0, msc0 = mt.predicted_ic_blcmv_n(inp, 0.4, 0.0)
    assert ic0 == pytest.approx(mt.predicted_ic(Algorithm.BLCMV, inp, 0.4)[0])
    assert msc0 < 1.0


def test_snr_ordering_for_bmvdr_n(rng):
    for _ in range(50):
        inp = random_inputs(rng)
        top = mt.predicted_out_snr(Algorithm.BMVDR, inp)
        for eta in np.linspace(0, 1, 11):
            s = mt.predicted_out_snr(Algorithm.BMVDR_N, inp, eta=eta)
            assert s[0] <= top[0] * (1 + 1e-10) and s[1] <= top[1] * (1 + 1e-10)

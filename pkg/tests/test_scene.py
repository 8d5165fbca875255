import json

import numpy as np
import pytest
import scipy.special

from binbeam import scene as sc
from binbeam.errors import ChannelMismatch, EmptyDatabase, InvalidGeometry, LengthMismatch, ParseError, PreconditionError, SilentComponent
from binbeam.simulate import Activity, render_isotropic, render_scene, render_source, speech_like


def two_mic_scene(d=0.2, field="cylindrical", n=360, far=1e5):
    pos = np.array([[0.0, d / 2, 0.0], [0.0, -d / 2, 0.0]])
    return sc.SceneSpec(
        pos, 1, 0, 1, (sc.Source(0.0, far, "desired"), sc.Source(60.0, far, "interferer")), sc.NoiseSpec(field=field, num_angles=n)
    )


def test_cylindrical_coherence_is_bessel():
    spec = two_mic_scene()
    G = sc.iso_coherence(sc.atf_database(spec))
    k = 2 * np.pi * spec.freqs_hz / sc.SPEED_OF_SOUND
    np.testing.assert_allclose(np.real(G[:, 0, 1]), scipy.special.j0(k * 0.2), atol=1e-6)
    assert np.max(np.abs(np.imag(G[:, 0, 1]))) < 1e-6
    np.testing.assert_array_equal(np.real(G[:, 0, 0]), 1.0)


def test_spherical_coherence_is_sinc():
    spec = two_mic_scene(field="spherical", n=4000)
    G = sc.iso_coherence(sc.atf_database(spec))
    kd = 2 * np.pi * spec.freqs_hz * 0.2 / sc.SPEED_OF_SOUND
    np.testing.assert_allclose(np.real(G[:, 0, 1]), np.sinc(kd / np.pi), atol=5e-3)


def test_iso_coherence_errors():
    with pytest.raises(EmptyDatabase):
        sc.iso_coherence(np.zeros((0, 3, 2)))
    with pytest.raises(EmptyDatabase):
        sc.iso_coherence(np.zeros((4, 3, 2)))


def test_free_field_atf_is_delay_and_spreading():
    spec = two_mic_scene(far=2.0)
    f = np.array([0.0, 500.0, 3000.0])
    H = sc.atf_at(spec, f, 30.0, 2.0)
    src = 2.0 * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6), 0.0])
    r = np.linalg.norm(spec.mic_positions - src, axis=1)
    np.testing.assert_allclose(H, np.exp(-2j * np.pi * f[:, None] * r / sc.SPEED_OF_SOUND) / r, rtol=1e-12)
    with pytest.raises(InvalidGeometry):
        sc.atf_at(spec, f, 0.0, 0.0)


def test_head_shadow_properties():
    spec = sc.default_scene()
    f = np.array([0.0, 200.0, 6000.0])
    H = sc.atf_at(spec, f, 90.0, 3.0)
    free = sc.atf_at(sc.default_scene(head_radius_m=None), f, 90.0, 3.0)
    np.testing.assert_allclose(np.abs(H[0]), np.abs(free[0]), rtol=1e-12)
    # lateral source: the far ear is attenuated at high frequencies, the near ear boosted
    assert abs(H[2, 0]) > abs(free[2, 0])
    assert abs(H[2, 2]) < 0.5 * abs(free[2, 2])


def test_scene_validation():
    pos = sc.hearing_aid_positions()
    src = (sc.Source(0, 3, "desired"),)
    with pytest.raises(InvalidGeometry):
        sc.SceneSpec(pos[:1], 1, 0, 1, src)
    with pytest.raises(InvalidGeometry):
        sc.SceneSpec(pos, 4, 0, 2, src)
    with pytest.raises(InvalidGeometry):
        sc.SceneSpec(pos, 2, 2, 3, src)
    with pytest.raises(PreconditionError):
        sc.SceneSpec(pos, 2, 0, 2, ())
    with pytest.raises(PreconditionError):
        sc.SceneSpec(pos, 2, 0, 2, src, fft_len=500)
    with pytest.raises(PreconditionError):
        sc.default_scene().source("talker")


def test_scene_dict_roundtrip(tmp_path):
    spec = sc.default_scene(p_x=2.0)
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(spec.to_dict()))
    back = sc.SceneSpec.load(path)
    assert back.to_dict() == spec.to_dict()
    d = spec.to_dict()
    del d["noise"]["p_white"]
    d["noise"]["p_white_db"] = -40.0
    assert sc.SceneSpec.from_dict(d).noise.p_white == pytest.approx(1e-4)
    with pytest.raises(ParseError):
        sc.SceneSpec.from_dict({"num_left": 2})
    path.write_text("{not json")
    with pytest.raises(ParseError):
        sc.SceneSpec.load(path)


def test_build_matrices_shapes_and_noise_diagonal():
    spec = sc.default_scene()
    m = sc.build_matrices(spec)
    assert m.a.shape == m.b.shape == (spec.num_bins, 4)
    assert m.R_n.shape == (spec.num_bins, 4, 4)
    np.testing.assert_allclose(np.real(np.einsum("fii->fi", m.R_n)), spec.noise.p_white + spec.noise.p_iso)
    for R in m.R_n[::32]:
        assert np.all(np.linalg.eigvalsh(R) > 0)


def test_rank1_cov():
    v = np.array([[1.0, 1j], [2.0, 0.0]])
    R = sc.rank1_cov(np.array([1.0, 0.5]), v)
    np.testing.assert_allclose(R[0], [[1, -1j], [1j, 1]])
    np.testing.assert_allclose(R[1], [[2, 0], [0, 0]])
    with pytest.raises(PreconditionError):
        sc.rank1_cov(-1.0, v[0])


@pytest.mark.parametrize("binary", [False, True])
@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_atf_file_roundtrip(tmp_path, binary, dtype):
    rng = np.random.default_rng(0)
    ir = rng.standard_normal((6, 4, 100))
    path = tmp_path / "db.atf"
    sc.save_atf(path, ir, 16000, np.arange(6) * 60.0, binary=binary, dtype=dtype)
    db = sc.load_atf(path, fft_len=128, num_channels=4)
    ref = np.swapaxes(np.fft.rfft(ir.astype(dtype).astype(float), n=128, axis=-1), 1, 2)
    np.testing.assert_allclose(db.h, ref, rtol=1e-12, atol=1e-12)
    assert db.sample_rate_hz == 16000 and db.h.shape == (6, 65, 4)
    np.testing.assert_array_equal(db.at(355.0), db.h[0])
    np.testing.assert_array_equal(db.at(-125.0), db.h[4])
    with pytest.raises(ChannelMismatch):
        sc.load_atf(path, num_channels=2)


def test_atf_file_errors(tmp_path):
    path = tmp_path / "bad.atf"
    path.write_bytes(b"garbage without header")
    with pytest.raises(ParseError):
        sc.load_atf(path)
    sc.save_atf(path, np.zeros((2, 2, 8)), 16000, binary=True)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError):
        sc.load_atf(path)
    path.write_text(json.dumps({"sample_rate_hz": 16000}))
    with pytest.raises(ParseError):
        sc.load_atf(path)


def test_atf_database_scene_matches_synthetic_grid(tmp_path):
    """A database built from the synthetic scene reproduces its coherence."""
    spec = sc.default_scene()
    h = sc.atf_database(spec)
    G1 = sc.iso_coherence(h)
    G2 = sc.build_matrices(spec, database=h).gamma
    np.testing.assert_array_equal(G1, G2)


def test_mix_components_hits_targets():
    rng = np.random.default_rng(3)
    x, u, n = (rng.standard_normal((4000, 3)) * s for s in (1.0, 3.0, 0.2))
    mix = sc.mix_components(x, u, n, 10.0, 5.0, 2)
    p = lambda s: np.mean(s[:, 2] ** 2)
    assert 10 * np.log10(p(mix.x) / p(mix.n)) == pytest.approx(10.0)
    assert 10 * np.log10(p(mix.x) / p(mix.u)) == pytest.approx(5.0)
    np.testing.assert_allclose(mix.y, mix.x + mix.u + mix.n)
    only = sc.mix_components(x, None, n, 0.0, 0.0, 0)
    assert only.u is None
    with pytest.raises(SilentComponent):
        sc.mix_components(np.zeros_like(x), u, n, 0, 0, 0)
    with pytest.raises(LengthMismatch):
        sc.mix_components(x, u[:10], n, 0, 0, 0)


def test_rendered_source_interaural_lag():
    """Cross-correlation peak between the ears equals the geometric delay."""
    spec = two_mic_scene(d=0.5, far=50.0)
    rng = np.random.default_rng(0)
    s = rng.standard_normal(16000)
    img = render_source(spec, s, 90.0, 50.0)
    src = np.array([0.0, 50.0, 0.0])
    r = np.linalg.norm(spec.mic_positions - src, axis=1)
    expected = (r[1] - r[0]) * spec.sample_rate_hz / sc.SPEED_OF_SOUND
    xc = np.fft.irfft(np.fft.rfft(img[:, 1]) * np.conj(np.fft.rfft(img[:, 0])), n=16000)
    lag = int(np.argmax(xc))
    assert abs(lag - expected) <= 0.5


def test_rendered_noise_coherence_converges():
    spec = two_mic_scene(d=0.1, n=72, far=3.0)
    noise = render_isotropic(spec, 2**16, np.random.default_rng(1))
    assert np.mean(noise**2) == pytest.approx(1.0)
    from binbeam.estimation import estimate_cov
    from binbeam.stft import StftConfig, analyze

    cfg = StftConfig(frame_len=512, sample_rate_hz=spec.sample_rate_hz)
    R = estimate_cov(analyze(noise, cfg))
    G = sc.iso_coherence(sc.atf_database(spec, distance_m=3.0, freqs_hz=cfg.freqs_hz))
    c = np.real(R[:, 0, 1]) / np.sqrt(np.real(R[:, 0, 0] * R[:, 1, 1]))
    band = slice(5, 200)
    # 255 frames: sampling error of a coherence estimate stays well under 0.15
    assert np.max(np.abs(c[band] - np.real(G[band, 0, 1]))) < 0.15


def test_render_scene_and_activity():
    spec = sc.default_scene()
    comps = render_scene(spec, 2.0, seed=4, activity=Activity(desired=((0.0, 0.5),), interferer=((0.5, 1.0),)))
    assert comps.x.shape == comps.u.shape == comps.n.shape == (32000, 4)
    first, second = slice(1000, 15000), slice(17000, 31000)
    assert np.mean(comps.x[second] ** 2) < 1e-6 * np.mean(comps.x[first] ** 2)
    assert np.mean(comps.u[first] ** 2) < 1e-6 * np.mean(comps.u[second] ** 2)
    again = render_scene(spec, 2.0, seed=4, activity=Activity(desired=((0.0, 0.5),), interferer=((0.5, 1.0),)))
    np.testing.assert_array_equal(comps.n, again.n)
    s = speech_like(8000, np.random.default_rng(0))
    assert np.std(s) == pytest.approx(1.0)


def test_rendering_is_linear_not_circular():
    """A band-limited click near the end must not wrap around to the start."""
    from binbeam.simulate import antialias

    spec = sc.default_scene()
    s = np.zeros(4000)
    s[-200] = 1.0
    s = antialias(s, spec.sample_rate_hz)
    img = render_source(spec, s, 30.0, 3.0)
    assert np.max(np.abs(img[:2000])) < 1e-6 * np.max(np.abs(render_source(spec, s[::-1], 30.0, 3.0)))


def test_gate_is_silent_outside_spans():
    from binbeam.simulate import _gate

    g = _gate(1000, ((0.2, 0.5),), 50)
    assert np.all(g[:200] == 0) and np.all(g[500:] == 0)
    np.testing.assert_array_equal(g[250:450], 1.0)
    np.testing.assert_allclose(g[200:250] + g[450:500][::-1], 2 * g[200:250], atol=1e-15)

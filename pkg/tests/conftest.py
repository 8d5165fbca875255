import numpy as np
import pytest
from hypothesis import strategies as st

from binbeam.metrics import BeamformerInputs


def random_pd(rng, m, cond=None):
    """Random Hermitian positive definite matrix."""
    A = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    R = A @ A.conj().T + 0.1 * np.eye(m)
    if cond is not None:
        vals, vecs = np.linalg.eigh(R)
        vals = np.geomspace(1.0, 1.0 / cond, m)
        R = (vecs * vals) @ vecs.conj().T
    return 0.5 * (R + R.conj().T)


def random_vec(rng, m):
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


def random_inputs(rng, m=None, p_x=1.0, p_u=1.0):
    m = m if m is not None else int(rng.choice([2, 4, 6]))
    half = m // 2
    return BeamformerInputs(
        random_pd(rng, m), random_vec(rng, m), random_vec(rng, m), int(rng.integers(half)), half + int(rng.integers(half)), p_x, p_u
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

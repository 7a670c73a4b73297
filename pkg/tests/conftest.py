import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import settings

from tmera.tensor import make_rng

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return make_rng(1234)


@st.composite
def hermitian(draw, dim):
    re = draw(st.lists(st.floats(-1, 1), min_size=dim * dim, max_size=dim * dim))
    im = draw(st.lists(st.floats(-1, 1), min_size=dim * dim, max_size=dim * dim))
    a = np.array(re).reshape(dim, dim) + 1j * np.array(im).reshape(dim, dim)
    return a + a.conj().T


@st.composite
def angle_vectors(draw, scale=np.pi):
    return np.array(draw(st.lists(st.floats(-scale, scale), min_size=15, max_size=15)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

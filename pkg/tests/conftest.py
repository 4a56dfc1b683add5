import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_mixture(rng, m=None, d=None, spread=3.0):
    from npmle import MixingMeasure

    m = m or int(rng.integers(1, 6))
    d = d or int(rng.integers(1, 3))
    atoms = rng.normal(scale=spread, size=(m, d))
    w = rng.dirichlet(np.ones(m))
    return MixingMeasure.from_weights(atoms, w)


# (criterion number, passed, detail) collected by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:>2}: {detail}")

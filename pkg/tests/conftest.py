import numpy as np
import pytest

from lrfsfusion import BernoulliTrack, GaussianMixture, Label, LMBDensity

_ACCEPTANCE: list = []


def random_mixture(rng, dim=4, n_comp=None, spread=50.0):
    n_comp = int(rng.integers(1, 4)) if n_comp is None else n_comp
    w = rng.uniform(0.2, 1.0, n_comp)
    means = rng.normal(0.0, spread, (n_comp, dim))
    A = rng.normal(0.0, 1.0, (n_comp, dim, dim))
    covs = A @ np.swapaxes(A, 1, 2) + np.eye(dim) * rng.uniform(0.5, 3.0, (n_comp, 1, 1))
    return GaussianMixture(w / w.sum(), means, covs)


def random_lmb(rng, labels, dim=4, spread=50.0):
    tracks = [BernoulliTrack(lab, float(rng.uniform(0.05, 0.95)), random_mixture(rng, dim, spread=spread)) for lab in labels]
    return LMBDensity(tracks, labels)


def labels(n, agent=0):
    return [Label(1, i, agent) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    def _report(criterion, ok, detail):
        _ACCEPTANCE.append((criterion, ok, detail))

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")

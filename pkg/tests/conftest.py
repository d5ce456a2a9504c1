from pathlib import Path

import numpy as np
import pytest

from covmatch import Channel, CovariateSpace, Distribution, WorldModel

MODELS_DIR = Path(__file__).resolve().parents[1] / "models"


def random_model(rng: np.random.Generator, m: int, sparse: float = 0.0) -> WorldModel:
    """Dirichlet-random model; with ``sparse`` > 0 some entries are zeroed out."""
    space = CovariateSpace([f"c{i}" for i in range(m)])

    def vec():
        v = rng.dirichlet(np.ones(m))
        if sparse and m > 1:
            mask = rng.random(m) < sparse
            mask[rng.integers(m)] = False
            v = np.where(mask, 0.0, v)
            v /= v.sum()
        return v

    return WorldModel(
        space,
        Distribution(space, vec()),
        Distribution(space, vec()),
        Channel(space, np.array([vec() for _ in range(m)])),
        Channel(space, np.array([vec() for _ in range(m)])),
    )


@pytest.fixture
def perfect():
    return WorldModel.binary_symmetric(0.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20181024)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")

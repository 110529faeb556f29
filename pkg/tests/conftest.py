import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY_CONFIG = os.path.join(ROOT, "configs", "toy.ini")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_cfg():
    from ssfeedback.harness.config import load_config

    return load_config(TOY_CONFIG)


@pytest.fixture(scope="session")
def toy_ablation(toy_cfg, tmp_path_factory):
    """The three 200-epoch toy-site runs (learned / random / dft probing).

    Trained once per session and shared by the acceptance and slow tests.
    """
    import time

    from ssfeedback.harness.experiments import run_ablation

    out = tmp_path_factory.mktemp("ablation")
    t0 = time.perf_counter()
    table, results = run_ablation(toy_cfg, str(out))
    return {"table": table, "results": results, "out": out, "seconds": time.perf_counter() - t0}


ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long training runs on the toy site")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

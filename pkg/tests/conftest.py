import numpy as np
import pytest

from ndssm.ssd import Mamba2Config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cfg():
    # d_inner 32, 4 heads of 8 channels, 8-wide state
    return Mamba2Config(d_model=16, expand=2, d_state=8, headdim=8, d_conv=4, chunk=64)


@pytest.fixture(scope="session")
def default_cfg():
    return Mamba2Config()


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and report.when == "call":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _ACCEPTANCE[item.name] = ("PASS" if report.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[1])):
        status, doc = _ACCEPTANCE[name]
        terminalreporter.write_line(f"[{status}] {doc}")

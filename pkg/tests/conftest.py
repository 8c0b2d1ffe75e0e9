import numpy as np
import pytest

from gsvs_ldpc.code import ParityCheckMatrix, dvbt2_short_half_profile, generate_ira_code, generate_regular_code

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}")


@pytest.fixture(scope="session")
def small_regular():
    return generate_regular_code(96, 3, 6, seed=5)


@pytest.fixture(scope="session")
def small_ira():
    info, m = dvbt2_short_half_profile(scale=100)  # 18 deg-8 + 54 deg-3 info columns, 90 checks
    return generate_ira_code(info, m, seed=3)


@pytest.fixture(scope="session")
def tiny_H():
    return ParityCheckMatrix.from_dense([[1, 1, 0], [0, 1, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)

import pytest

from interbank_mfg.model import ModelParams

# network sizes and costs used by the riccati/equilibrium figures
FIG5 = ModelParams(n_banks=10, a=1.0, q=1.0, epsilon=10.0, c=0.0, horizon=1.0)
FIG6 = ModelParams(n_banks=10, a=1.0, q=1.0, epsilon=2.0, c=0.0, horizon=1.0)
# interbank default experiments
BANKS = ModelParams(n_banks=10, a=0.0, sigma=1.0, rho=0.0, horizon=1.0, default_level=-0.7)


@pytest.fixture
def fig5():
    return FIG5


@pytest.fixture
def fig6():
    return FIG6


@pytest.fixture
def banks():
    return BANKS


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)

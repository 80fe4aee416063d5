import os

import pytest
from hypothesis import HealthCheck, settings

from tvarch.model import LagWeights, ParameterCurve, Regularity, build_spec

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

AC_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(AC_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)


REG = Regularity(rho=0.1, Q=0.6, nu=0.3, M=20.0)


@pytest.fixture
def reg():
    return REG


@pytest.fixture
def cos_spec():
    """tvARCH(0) with a_0(u) = 2 + cos(2 pi u)."""
    return build_spec([ParameterCurve.sinusoid(2.0, 1.0, 0.0, 1.0)], "gaussian", REG)


@pytest.fixture
def arch1_const():
    return build_spec([ParameterCurve.constant(0.5), ParameterCurve.constant(0.4)], "gaussian", Regularity(0.1, 0.5, 0.2, 1.0))


@pytest.fixture
def arch1_tv():
    return build_spec(
        [ParameterCurve.sinusoid(1.0, 0.3, 0.2, 1.0), ParameterCurve.polynomial(0.1, 0.2)],
        "gaussian",
        REG,
    )


@pytest.fixture
def arch2_tv():
    return build_spec(
        [ParameterCurve.sinusoid(1.5, 0.5, 0.0, 1.0), ParameterCurve.polynomial(0.2, 0.1), ParameterCurve.sinusoid(0.15, 0.05, 0.0, 2.0)],
        "gaussian",
        Regularity(0.1, 0.35, 0.3, 5.0, LagWeights("unit")),
    )

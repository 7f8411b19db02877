import dataclasses

import pytest
from hypothesis import HealthCheck, settings

from ferrosim.ftj import FtjStack, NlsParams, TunnelParams
from ferrosim.presets import get_variant

settings.register_profile("ferrosim", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ferrosim")


@pytest.fixture(scope="session")
def stack_a() -> FtjStack:
    return get_variant("A").stack


def quiet(stack: FtjStack, switching: bool = True, tunneling: bool = True) -> FtjStack:
    """Copy of ``stack`` with switching and/or tunneling made negligible."""
    out = stack
    if not switching:
        out = dataclasses.replace(out, nls=dataclasses.replace(out.nls, tau0=1e30))
    if not tunneling:
        out = dataclasses.replace(out, tun=TunnelParams(1e-30, 1e-30))
    return out


def single_domain(stack: FtjStack) -> FtjStack:
    return dataclasses.replace(stack, nls=NlsParams(1, stack.nls.tau0, stack.nls.ea_mean, 0.0))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])

import numpy as np
import pytest

from nozzleshock.gas_core import BackgroundShock, GasConstants
from nozzleshock.nozzle import NozzleSpec, Profile1D
from nozzleshock.shock_locator import find_admissible_locations, kdot


@pytest.fixture(scope="session")
def gas():
    return GasConstants(1.4)


@pytest.fixture(scope="session")
def bg(gas):
    return BackgroundShock.from_upstream(1.0, 2.0, gas)


def centred_pressure(bg, theta_profile, length=1.0, where=0.5):
    """Constant exit pressure putting P* at a given fraction of the way
    between R(L) and R(0)."""
    k = kdot(bg)
    total = theta_profile.integral(0.0, length)
    r0, r1 = total, total * (1.0 - k)
    target = r1 + where * (r0 - r1)
    return Profile1D.constant(target / bg.elliptic_coefficient("+"))


def make_spec(bg, theta_expr, sigma, pressure=None, length=1.0, where=0.5):
    theta = Profile1D.from_expression(theta_expr, 0.0, length, constants={"L": length})
    if pressure is None:
        pressure = centred_pressure(bg, theta, length, where)
    elif not isinstance(pressure, Profile1D):
        pressure = Profile1D.constant(pressure)
    return NozzleSpec(length, sigma, theta, pressure)


@pytest.fixture(scope="session")
def expanding(bg):
    """Expanding nozzle Theta = x^3 with the anchor near 0.84."""
    spec = make_spec(bg, "x^3", 0.01)
    rep = find_admissible_locations(spec, bg)
    assert len(rep.admissible_roots) == 1
    return spec, rep.admissible_roots[0].xi_star


def observed_order(errors, ratio=2.0):
    e = np.asarray(errors, float)
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


ACCEPTANCE = {}


def report(number, ok, detail):
    """Record one acceptance line; all lines are printed in the terminal summary."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

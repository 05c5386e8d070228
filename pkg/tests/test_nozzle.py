import warnings

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from conftest import make_spec
from nozzleshock.errors import CompatibilityError, ExpressionError, GeometryError, LagrangeInversionError
from nozzleshock.nozzle import NozzleSpec, Profile1D, lagrange_to_physical, parse_expression, physical_y, wall_height
from nozzleshock.transonic_iteration import solve_transonic


def test_grammar_basic():
    f = parse_expression("2*sin(pi*x)^2 + pow(x, 3) - cos(0) / L", {"L": 2.0})
    x = np.linspace(0, 1, 7)
    assert np.allclose(f(x), 2 * np.sin(np.pi * x) ** 2 + x**3 - 0.5)


def test_grammar_constant_broadcasts():
    f = parse_expression("3")
    assert f(np.zeros(4)).shape == (4,)


@pytest.mark.parametrize("bad", ["", "x +", "foo(x)", "y + 1", "__import__('os')", "x.real", "sin(x, 2)", "[x]"])
def test_grammar_rejects(bad):
    with pytest.raises(ExpressionError):
        parse_expression(bad)(np.linspace(0, 1, 3))


def test_profile_derivatives():
    p = Profile1D.from_expression("sin(3*x)")
    x = np.linspace(0.1, 0.9, 5)
    assert np.allclose(p.derivative(x), 3 * np.cos(3 * x), atol=1e-12)
    assert np.allclose(p.derivative(x, 2), -9 * np.sin(3 * x), atol=1e-6)


def test_sampled_profile_and_csv(tmp_path):
    xs = np.linspace(0, 1, 201)
    path = tmp_path / "theta.csv"
    path.write_text("x,theta\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(xs, np.sin(xs))))
    p = Profile1D.from_csv(path)
    t = np.linspace(0, 1, 33)
    assert np.allclose(p(t), np.sin(t), atol=1e-9)
    fd = (p(t[1:-1] + 1e-6) - p(t[1:-1] - 1e-6)) / 2e-6
    assert np.allclose(p.derivative(t[1:-1]), fd, atol=1e-6)
    assert p.integral() == pytest.approx(1 - np.cos(1), abs=1e-10)


def test_sampled_profile_validation():
    with pytest.raises(ValueError):
        Profile1D.from_samples([0, 1, 2], [0, 1, 2])
    with pytest.raises(ValueError):
        Profile1D.from_samples([0, 2, 1, 3], [0, 1, 2, 3])


def test_wall_height_flat():
    spec = NozzleSpec(1.0, 0.0, Profile1D.from_expression("x^3"), Profile1D.constant(0))
    assert np.all(wall_height(spec, np.linspace(0, 1, 9)) == 1.0)


def test_wall_height_constant_angle():
    spec = NozzleSpec(2.0, 0.03, Profile1D.constant(0.7, 0, 2), Profile1D.constant(0))
    x = np.linspace(0, 2, 9)
    assert np.allclose(wall_height(spec, x), 1 + x * np.tan(0.021), rtol=1e-14)


def test_wall_height_against_gauss():
    spec = NozzleSpec(1.0, 0.1, Profile1D.from_expression("sin(2*pi*x)^3"), Profile1D.constant(0))
    nodes, weights = leggauss(40)
    for x in (0.3, 0.77, 1.0):
        s = 0.5 * x * (nodes + 1)
        ref = 1 + 0.5 * x * np.sum(weights * np.tan(0.1 * np.sin(2 * np.pi * s) ** 3))
        assert wall_height(spec, x) == pytest.approx(ref, abs=1e-10)


def test_wall_height_monotone():
    up = NozzleSpec(1.0, 0.05, Profile1D.from_expression("x^3"), Profile1D.constant(0))
    down = NozzleSpec(1.0, 0.05, Profile1D.from_expression("-x^3"), Profile1D.constant(0))
    x = np.linspace(0, 1, 50)
    assert np.all(np.diff(wall_height(up, x)) > 0)
    assert np.all(np.diff(wall_height(down, x)) < 0)


def test_geometry_errors():
    with pytest.raises(GeometryError):
        NozzleSpec(1.0, 2.0, Profile1D.constant(1.0), Profile1D.constant(0))
    with pytest.raises(GeometryError):
        NozzleSpec(-1.0, 0.1, Profile1D.constant(1.0), Profile1D.constant(0))
    spec = NozzleSpec(1.0, 0.1, Profile1D.from_expression("x^3"), Profile1D.constant(0))
    with pytest.raises(GeometryError):
        wall_height(spec, 1.5)


def test_normalisation():
    spec = NozzleSpec(1.0, 0.01, Profile1D.from_expression("4*x^3"), Profile1D.constant(0), normalize_theta=True)
    assert spec.theta.sup_norm() == pytest.approx(1.0)
    assert spec.theta_scale == pytest.approx(0.25)


def test_compatibility_policy():
    good = NozzleSpec(1.0, 0.01, Profile1D.from_expression("x^3"), Profile1D.constant(0))
    assert good.check_compatibility() <= 1e-10
    bad = NozzleSpec(1.0, 0.01, Profile1D.from_expression("sin(pi*x)^2"), Profile1D.constant(0))
    with pytest.raises(CompatibilityError):
        bad.check_compatibility("error")
    with pytest.warns(UserWarning):
        bad.check_compatibility("warn")
    flat = NozzleSpec(1.0, 0.0, Profile1D.from_expression("sin(pi*x)^2"), Profile1D.constant(0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        flat.check_compatibility("error")


def test_compatibility_small_defect_warns():
    spec = NozzleSpec(1.0, 0.01, Profile1D.from_expression("x^3 + 1e-8*x"), Profile1D.constant(0))
    with pytest.warns(UserWarning):
        spec.check_compatibility("error")


def test_physical_y_background(bg):
    eta = np.linspace(0, 1, 65)
    u = bg.u_plus
    one = np.ones_like(eta)
    y = physical_y(u.p * one, 0 * one, u.q * one, u.s * one, eta, bg.gas)
    assert np.allclose(y, eta, atol=1e-12)


def test_physical_y_constant_flux(bg):
    eta = np.linspace(0, 1, 33)
    u = bg.u_plus
    one = np.ones_like(eta)
    y = physical_y(u.p * one, 0 * one, 2 * u.q * one, u.s * one, eta, bg.gas)
    assert np.allclose(y, eta / 2, atol=1e-12)


def test_physical_y_order(bg):
    u = bg.u_plus

    def err(n):
        eta = np.linspace(0, 1, n)
        q = u.q * (1 + 0.3 * np.sin(2 * eta))
        y = physical_y(u.p * np.ones(n), 0.1 * eta, q, u.s * np.ones(n), eta, bg.gas)
        fine = np.linspace(0, 1, 20001)
        qf = u.q * (1 + 0.3 * np.sin(2 * fine))
        yf = physical_y(u.p * np.ones(fine.size), 0.1 * fine, qf, u.s * np.ones(fine.size), fine, bg.gas)
        return abs(y[-1] - yf[-1])

    assert err(33) / err(65) >= 3.9


def test_physical_y_rejects_reversed_flow(bg):
    eta = np.linspace(0, 1, 9)
    one = np.ones_like(eta)
    with pytest.raises(LagrangeInversionError):
        physical_y(one, np.pi * one, one, 0 * one, eta, bg.gas)


def test_physical_y_monotone(bg):
    eta = np.linspace(0, 1, 41)
    u = bg.u_plus
    y = physical_y(u.p * (1 + 0.1 * eta), 0.05 * eta, u.q * (1 + 0.2 * eta**2), u.s * np.ones_like(eta), eta, bg.gas)
    assert np.all(np.diff(y) > 0)


def test_lagrange_to_physical_background(bg):
    spec = make_spec(bg, "x^3", 0.0, pressure=0.0)
    sol = solve_transonic(spec, bg, 0.6)
    phys = lagrange_to_physical(sol)
    assert np.all(phys.x == 0.6)
    assert np.allclose(phys.y, sol.eta, atol=1e-12)
    assert phys.wall_x == 0.6 and phys.anchor_offset == 0.0
    assert phys.wall_y == pytest.approx(1.0, abs=1e-12)

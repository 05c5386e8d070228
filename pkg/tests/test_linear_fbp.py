import numpy as np
import pytest

from conftest import make_spec, observed_order
from nozzleshock.elliptic_bvp import RectGrid, first_order_residuals
from nozzleshock.errors import CFLError, SolvabilityError
from nozzleshock.gas_core import bs_matrix, rh_jacobians
from nozzleshock.linear_fbp import (
    anchor_curve,
    assemble_linear_subsonic,
    assembled_residual_with_error,
    column_identity_error,
    sample_column,
    solve_linear_fbp,
    solve_linear_supersonic,
    supersonic_potential_characteristic,
    verify_solvability_identity,
    wave_speed,
)
from nozzleshock.shock_locator import kdot


def test_wave_speed(bg):
    d = bg.minus
    expected = d.rho * bg.u_minus.q / np.sqrt(d.mach**2 - 1)
    assert wave_speed(bg) == pytest.approx(expected, rel=1e-14)


def test_zero_sigma(bg):
    spec = make_spec(bg, "x^3", 0.0)
    sup = solve_linear_supersonic(spec, bg, 65, 33)
    assert all(np.all(c == 0) for c in sup.fields.components())
    sol = solve_linear_fbp(0.6, spec, bg, 65, 33)
    assert all(np.all(c == 0) for c in sol.plus.components())
    assert np.all(sol.psi_prime == 0) and np.all(sol.psi == 0.6)


def test_flat_walls_zero_pressure(bg):
    spec = make_spec(bg, "0", 0.01, pressure=0.0)
    sol = solve_linear_fbp(0.4, spec, bg, 65, 33)
    assert all(np.max(np.abs(c)) == 0 for c in sol.plus.components())


def test_supersonic_identities(bg, expanding):
    spec, _ = expanding
    f = solve_linear_supersonic(spec, bg, 129, 65).fields
    assert np.max(np.abs(f.s)) == 0.0
    assert np.max(np.abs(f.p + bg.minus.rho * bg.u_minus.q * f.q)) <= 1e-16
    assert np.all(f.theta[:, 0] == 0) and np.allclose(f.theta[:, -1], spec.sigma * spec.theta(f.xi))


def test_cfl_violation(bg, expanding):
    spec, _ = expanding
    with pytest.raises(CFLError):
        solve_linear_supersonic(spec, bg, 33, 257, substeps=1)


def test_leapfrog_against_characteristics(bg, expanding):
    spec, _ = expanding
    errs = []
    for n_xi, n_eta in ((65, 33), (129, 65), (257, 129)):
        sup = solve_linear_supersonic(spec, bg, n_xi, n_eta)
        xi, eta = np.meshgrid(sup.fields.xi, sup.fields.eta, indexing="ij")
        exact = supersonic_potential_characteristic(spec, bg, xi, eta)
        errs.append(np.max(np.abs(sup.phi - exact)))
    assert errs[-1] <= 1e-6 * spec.sigma / 0.01
    assert np.all(observed_order(errs) >= 1.9)


def test_column_identity_second_order(bg, expanding):
    spec, _ = expanding
    errs = [column_identity_error(solve_linear_supersonic(spec, bg, n, (n + 1) // 2), spec, bg) for n in (65, 129, 257)]
    assert np.all(observed_order(errs) >= 1.9)


def _subsonic_residual(sol, bg, xb, exclude=0.0):
    grid = RectGrid(1.0 - xb, 1.0, sol.plus.xi.size, sol.plus.eta.size)
    r1, r2 = first_order_residuals(sol.plus.p, sol.plus.theta, bg.u_plus.q, bg.elliptic_coefficient("+"), grid)
    x1, x2 = grid.mesh()
    mask = np.zeros_like(x1, bool)
    mask[1:-1, 1:-1] = True
    for cx in (0.0, grid.l1):
        mask &= np.hypot(x1 - cx, x2 - 1.0) > exclude
    return np.sqrt(np.sum(grid.weights * (r1**2 + r2**2) * mask))


def test_subsonic_residual_convergence(bg, expanding):
    # Theta' != 0 at both ends of the top wall breaks the corner compatibility of
    # the data there, so the residual converges at second order only away from
    # those two corners (and at first order globally).
    spec, xb = expanding
    sols = [solve_linear_fbp(xb, spec, bg, n, (n + 1) // 2) for n in (129, 257, 513)]
    away = [_subsonic_residual(s, bg, xb, exclude=0.1) for s in sols]
    everywhere = [_subsonic_residual(s, bg, xb) for s in sols]
    assert np.all(observed_order(away) >= 1.9)
    assert np.all(observed_order(everywhere) >= 0.9)


def test_shock_closure(bg, expanding):
    spec, xb = expanding
    sol = solve_linear_fbp(xb, spec, bg)
    p_tr, _ = sample_column(sol.minus, xb)
    mass = bg.minus.rho * bg.u_minus.q
    u_minus = np.vstack([p_tr, np.zeros_like(p_tr), -p_tr / mass, np.zeros_like(p_tr)])
    plus0 = np.vstack([sol.plus.p[0], sol.plus.q[0], sol.plus.s[0]])
    closure = bs_matrix(bg) @ plus0 + rh_jacobians(bg).minus[:3] @ u_minus
    assert np.max(np.abs(closure)) <= 1e-12


def test_shock_slope_formula(bg, expanding):
    spec, xb = expanding
    sol = solve_linear_fbp(xb, spec, bg)
    _, th_tr = sample_column(sol.minus, xb)
    expected = (bg.u_plus.q * sol.plus.theta[0] - bg.u_minus.q * th_tr) / bg.jump_p
    assert np.allclose(sol.psi_prime, expected, rtol=0, atol=1e-15)
    assert sol.psi[-1] == xb
    assert np.allclose(sol.psi, anchor_curve(xb, sol.psi_prime, sol.eta))


def test_anchor_curve_linear():
    eta = np.linspace(0, 1, 11)
    assert np.allclose(anchor_curve(0.5, 2 * eta, eta), 0.5 - (1 - eta**2), atol=1e-2)
    assert np.allclose(anchor_curve(0.5, np.ones(11), eta), 0.5 - (1 - eta))


def test_linearity_in_sigma(bg, expanding):
    spec, xb = expanding
    a = solve_linear_fbp(xb, spec, bg, 129, 65)
    b = solve_linear_fbp(xb, make_spec(bg, "x^3", 2 * spec.sigma), bg, 129, 65)
    for ca, cb in zip(a.plus.components(), b.plus.components()):
        assert np.allclose(cb, 2 * ca, rtol=1e-10, atol=1e-15)
    assert np.allclose(b.psi_prime, 2 * a.psi_prime, rtol=1e-10, atol=1e-15)


def test_deterministic(bg, expanding):
    spec, xb = expanding
    a = solve_linear_fbp(xb, spec, bg, 129, 65)
    b = solve_linear_fbp(xb, spec, bg, 129, 65)
    assert all(np.array_equal(x, y) for x, y in zip(a.plus.components(), b.plus.components()))


def test_off_root_raises(bg, expanding):
    spec, xb = expanding
    with pytest.raises(SolvabilityError):
        solve_linear_fbp(xb - 0.05, spec, bg)


def test_solvability_identity_at_root(bg, expanding):
    spec, xb = expanding
    assert abs(verify_solvability_identity(xb, spec, bg)) <= 1e-10


def test_solvability_identity_perturbed(bg, expanding):
    spec, xb = expanding
    delta = 1e-5
    expected = kdot(bg) * spec.theta(xb) * delta
    assert verify_solvability_identity(xb + delta, spec, bg) == pytest.approx(expected, rel=1e-4)


def test_solvability_matches_assembled_residual(bg, expanding):
    spec, xb = expanding
    for xi in (xb, xb + 0.02):
        resid, err = assembled_residual_with_error(xi, spec, bg)
        assert abs(resid - verify_solvability_identity(xi, spec, bg)) <= 10 * err


def test_assemble_rejects_outside(bg, expanding):
    spec, _ = expanding
    with pytest.raises(ValueError):
        assemble_linear_subsonic(1.0, spec, bg, np.zeros(5), np.linspace(0, 1, 5))

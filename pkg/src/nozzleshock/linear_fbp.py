"""The linear free boundary problem around the background normal shock.

Supersonic side: the perturbation potential phi with phi_xi = theta and
phi_eta = a- p solves phi_xixi = phi_etaeta / kappa^2, marched in xi.
Subsonic side: (p, theta) solve the first-order elliptic system on
(xi_bar, L) x (0, 1) with shock data from the linearised jump conditions;
q and S are transported along streamlines.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .elliptic_bvp import EllipticProblem, RectGrid, compatibility_residual, solve_first_order_elliptic
from .errors import CFLError
from .fields import FlowFields
from .gas_core import BackgroundShock, bs_matrix_and_gsharp
from .nozzle import NozzleSpec
from .shock_locator import RCurve, kdot, pstar

# projection limit for the O(h^2) quadrature defect of the assembled problem
PROJECTION_FACTOR = 50.0


def wave_speed(bg: BackgroundShock) -> float:
    """1/kappa: characteristic slope d eta / d xi of the linear supersonic system."""
    kappa2 = -bg.elliptic_coefficient("-") * bg.u_minus.q
    return 1.0 / math.sqrt(kappa2)


@dataclass
class LinearSupersonic:
    fields: FlowFields
    phi: np.ndarray
    substeps: int
    cfl: float


def solve_linear_supersonic(spec: NozzleSpec, bg: BackgroundShock, n_xi=257, n_eta=129, substeps=None, max_cfl=0.9):
    """Leapfrog march of the potential wave equation.

    ``substeps=None`` picks the smallest number of internal steps per output
    column with Courant number <= max_cfl; an explicit value above the
    stability limit raises :class:`CFLError`.
    """
    L = spec.length
    xi = np.linspace(0.0, L, n_xi)
    eta = np.linspace(0.0, 1.0, n_eta)
    dxi, deta = xi[1] - xi[0], eta[1] - eta[0]
    c = wave_speed(bg)
    nu_col = c * dxi / deta
    if substeps is None:
        substeps = max(1, math.ceil(nu_col / max_cfl))
    nu = nu_col / substeps
    if nu > 1.0:
        raise CFLError(f"Courant number {nu:.3f} > 1 for leapfrog")
    a_m = bg.elliptic_coefficient("-")
    top = lambda x: spec.sigma * spec.theta.cumulative(x)

    phi = np.zeros((n_xi, n_eta))
    if spec.sigma != 0.0:
        h = dxi / substeps
        prev = np.zeros(n_eta)
        cur = np.zeros(n_eta)
        cur[-1] = top(h)
        step = 1
        if substeps == 1:
            phi[1] = cur
        nu2 = nu * nu
        total = (n_xi - 1) * substeps
        while step < total:
            nxt = np.empty(n_eta)
            nxt[1:-1] = 2.0 * cur[1:-1] - prev[1:-1] + nu2 * (cur[2:] - 2.0 * cur[1:-1] + cur[:-2])
            nxt[0] = 0.0
            step += 1
            nxt[-1] = top(step * h)
            prev, cur = cur, nxt
            if step % substeps == 0:
                phi[step // substeps] = cur

    theta = np.gradient(phi, dxi, axis=0, edge_order=2)
    theta[0, :] = 0.0
    theta[:, 0] = 0.0
    theta[:, -1] = spec.sigma * spec.theta(xi)
    p = np.gradient(phi, deta, axis=1, edge_order=2) / a_m
    mass = bg.minus.rho * bg.u_minus.q
    f = FlowFields(xi, eta, p, theta, -p / mass, np.zeros_like(p))
    return LinearSupersonic(f, phi, substeps, nu)


def supersonic_potential_characteristic(spec: NozzleSpec, bg: BackgroundShock, xi, eta):
    """Exact potential from characteristics with reflections at the walls.

    phi(xi, eta) = G(eta + c xi) - G(c xi - eta), G(s) = sum_k h((s - 1 - 2k)/c),
    where h(t) = sigma int_0^t Theta for t > 0 and 0 otherwise.
    """
    c = wave_speed(bg)
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))

    def h(t):
        t = np.clip(t, 0.0, None)
        return np.where(t > 0.0, spec.sigma * spec.theta.cumulative(t), 0.0)

    def big_g(s):
        out = np.zeros_like(s)
        kmax = int(np.ceil((np.max(s) - 1.0) / 2.0)) + 1
        for k in range(max(kmax, 0) + 1):
            out += h((s - 1.0 - 2.0 * k) / c)
        return out

    return big_g(eta + c * xi) - big_g(c * xi - eta)


def column_identity_error(sup: LinearSupersonic, spec: NozzleSpec, bg: BackgroundShock):
    """max over columns of |a- int_0^1 p deta - sigma int_0^xi Theta|."""
    f = sup.fields
    w = np.full(f.eta.size, f.eta[1] - f.eta[0])
    w[0] = w[-1] = 0.5 * w[0]
    lhs = bg.elliptic_coefficient("-") * (f.p @ w)
    rhs = spec.sigma * spec.theta.cumulative(f.xi)
    return float(np.max(np.abs(lhs - rhs)))


def sample_column(fields: FlowFields, xi_star):
    """(p, theta) traces at xi = xi_star by cubic interpolation along xi."""
    p = CubicSpline(fields.xi, fields.p, axis=0)(xi_star)
    th = CubicSpline(fields.xi, fields.theta, axis=0)(xi_star)
    return p, th


def assemble_linear_subsonic(xi_star, spec: NozzleSpec, bg: BackgroundShock, p_minus_trace, eta, n1=None):
    """First-order elliptic problem for (p+, theta+) on (xi_star, L) x (0, 1)."""
    L = spec.length
    if not 0.0 < xi_star < L:
        raise ValueError("xi_star must lie strictly inside (0, L)")
    n2 = eta.size
    if n1 is None:
        n1 = max(9, int(round((L - xi_star) * 2 * (n2 - 1))) + 1)
    grid = RectGrid(L - xi_star, 1.0, n1, n2)
    _, g1s, g2s, g3s = bs_matrix_and_gsharp(bg, p_minus_trace)
    s = spec.sigma
    prob = EllipticProblem(
        bg.u_plus.q,
        bg.elliptic_coefficient("+"),
        0.0,
        0.0,
        g1s,
        0.0,
        s * spec.pressure(eta),
        s * spec.theta(xi_star + grid.x1),
        grid,
    )
    return prob, (g1s, g2s, g3s)


@dataclass
class LinearSolution:
    xi_star: float
    minus: FlowFields  # on [0, L] x [0, 1]
    plus: FlowFields  # on [xi_star, L] x [0, 1]
    psi_prime: np.ndarray  # on eta nodes
    psi: np.ndarray  # xi_star - int_eta^1 psi'
    compat: dict = field(default_factory=dict)

    @property
    def eta(self):
        return self.plus.eta


def solve_linear_subsonic(xi_star, spec, bg, p_minus_trace, theta_minus_trace, eta, n1=None, compat_tol=None,
                          projection_factor=PROJECTION_FACTOR):
    """Subsonic perturbation fields and the shock slope for a given anchor.

    The assembled data satisfy the compatibility condition only up to
    quadrature error; a defect below projection_factor * (h1^2 + h2^2) * scale
    is projected out, anything larger raises SolvabilityError.
    """
    prob, (g1s, g2s, g3s) = assemble_linear_subsonic(xi_star, spec, bg, p_minus_trace, eta, n1)
    grid = prob.grid
    scale = abs(prob.a2) * (np.max(np.abs(prob.g1)) + np.max(np.abs(prob.g3))) * grid.l2 + (
        np.max(np.abs(prob.g4)) * grid.l1
    )
    proj_tol = projection_factor * (grid.h1**2 + grid.h2**2) * scale
    info = {}
    u1, u2 = solve_first_order_elliptic(prob, compat_tol=compat_tol, project=True, projection_tol=proj_tol, info=info)
    info["projection_tol"] = proj_tol
    xi = xi_star + grid.x1
    mass = bg.plus.rho * bg.u_plus.q
    s_plus = np.broadcast_to(g3s, u1.shape).copy()
    q_plus = g2s[None, :] + (g1s[None, :] - u1) / mass
    plus = FlowFields(xi, eta, u1, u2, q_plus, s_plus)
    psi_prime = (bg.u_plus.q * u2[0, :] - bg.u_minus.q * theta_minus_trace) / bg.jump_p
    return plus, psi_prime, info


def anchor_curve(xi_star, psi_prime, eta):
    """psi(eta) = xi_star - int_eta^1 psi' (trapezoid)."""
    d = np.diff(eta)
    seg = 0.5 * (psi_prime[1:] + psi_prime[:-1]) * d
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return xi_star - tail


def solve_linear_fbp(xi_star, spec: NozzleSpec, bg: BackgroundShock, n_xi=257, n_eta=129, n1=None, sup=None,
                     compat_tol=None):
    if sup is None:
        sup = solve_linear_supersonic(spec, bg, n_xi, n_eta)
    p_tr, th_tr = sample_column(sup.fields, xi_star)
    eta = sup.fields.eta
    plus, psi_prime, info = solve_linear_subsonic(xi_star, spec, bg, p_tr, th_tr, eta, n1, compat_tol)
    return LinearSolution(xi_star, sup.fields, plus, psi_prime, anchor_curve(xi_star, psi_prime, eta), info)


def verify_solvability_identity(xi_star, spec: NozzleSpec, bg: BackgroundShock) -> float:
    """P* - R(xi_star); sigma times this equals the elliptic compatibility residual."""
    return pstar(bg, spec.pressure) - float(RCurve(spec, kdot(bg))(xi_star))


def assembled_residual_with_error(xi_star, spec, bg, n_xi=257, n_eta=129):
    """Compatibility residual of the assembled subsonic problem, divided by sigma,
    and a Richardson estimate of its discretisation error (grid h vs 2h)."""
    out = []
    for nx, ne in ((n_xi, n_eta), ((n_xi + 1) // 2, (n_eta + 1) // 2)):
        sup = solve_linear_supersonic(spec, bg, nx, ne)
        p_tr, _ = sample_column(sup.fields, xi_star)
        prob, _ = assemble_linear_subsonic(xi_star, spec, bg, p_tr, sup.fields.eta)
        out.append(compatibility_residual(prob) / spec.sigma)
    return out[0], abs(out[0] - out[1]) / 3.0

"""Nonlinear transonic shock: fixed-point iteration around the linear solution.

The subsonic region behind the shock xi = psi(eta) is mapped onto the fixed
rectangle (xi_bar, L) x (0, 1) by

    xi_t = L + (L - xi_bar) / (L - psi(eta)) * (xi - L).

Each step freezes the current perturbation (dU, dpsi'), evaluates the
nonlinear remainders f1, f2, f3 and g1..g4, fixes the anchor shift d xi*
from the compatibility condition of the elliptic problem and solves the
constant-coefficient system for the update.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq

from .elliptic_bvp import EllipticProblem, RectGrid, _data_scale, compatibility_residual, solve_first_order_elliptic
from .errors import BallViolationError, GeometryError, NonContractionError, SolvabilityRootError
from .fields import FlowFields
from .gas_core import BackgroundShock, FlowState, bs_matrix, density, rh_jacobians, rh_residuals, speed_from_bernoulli
from .linear_fbp import LinearSolution, anchor_curve, solve_linear_fbp, solve_linear_supersonic
from .nozzle import NozzleSpec, physical_y
from .supersonic import solve_supersonic_nonlinear

log = logging.getLogger(__name__)


@dataclass
class IterationOptions:
    iter_tol: float = 1e-10
    max_iters: int = 50
    final_tol: float = 1e-8
    beta: float = 4.0
    bracket_width: float = 10.0  # d xi* bracket is +/- bracket_width * sigma * L
    # the radius sigma^(3/2)/2 is a proof device; on practical grids the
    # distance to the linear seed exceeds it, so violations are logged
    ball: str = "warn"  # abort | warn | off
    divergence_window: int = 3
    n_xi: int = 257
    n_eta: int = 129
    n1: int = None
    order: int = 2
    compat_policy: str = "error"
    compat_tol: float = 1e-8  # relative to the data scale of each elliptic solve
    sigma_max: float = 0.05

    def __post_init__(self):
        if self.ball not in ("abort", "warn", "off"):
            raise ValueError("ball policy must be abort, warn or off")
        if not self.beta > 2:
            raise ValueError("beta must exceed 2")
        for name in ("iter_tol", "final_tol", "bracket_width", "compat_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterationState:
    delta_u: FlowFields  # perturbation on the fixed rectangle
    delta_psi_prime: np.ndarray
    delta_xi_star: float = 0.0
    iteration_index: int = 0
    norms: dict = field(default_factory=dict)


@dataclass
class AssembledData:
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    g: np.ndarray  # (4, n_eta)
    gsharp: np.ndarray  # (3, n_eta)
    delta_p3: np.ndarray
    delta_theta4: np.ndarray
    psi: np.ndarray
    problem: EllipticProblem
    minus_on_shock: FlowState


class IterationContext:
    """Everything fixed during one nonlinear solve."""

    def __init__(self, spec: NozzleSpec, bg: BackgroundShock, xi_bar, supersonic: FlowFields, grid: RectGrid):
        self.spec, self.bg, self.xi_bar = spec, bg, float(xi_bar)
        self.sup = supersonic
        self.grid = grid
        self.xi = xi_bar + grid.x1
        self.eta = grid.x2
        self.gas = bg.gas
        self.dp = bg.plus
        self.a1 = bg.u_plus.q
        self.a2 = bg.elliptic_coefficient("+")
        self.beta_plus = rh_jacobians(bg).plus
        self.bs_inv = np.linalg.inv(bs_matrix(bg))
        self._p_spline = RectBivariateSpline(supersonic.xi, supersonic.eta, supersonic.p, kx=3, ky=3)
        self._th_spline = RectBivariateSpline(supersonic.xi, supersonic.eta, supersonic.theta, kx=3, ky=3)

    def minus_along(self, psi):
        """Supersonic state sampled on the curve xi = psi(eta)."""
        L = self.spec.length
        if np.any(psi <= 0.0) or np.any(psi >= L):
            raise GeometryError("shock curve leaves (0, L)")
        p = self._p_spline.ev(psi, self.eta)
        th = self._th_spline.ev(psi, self.eta)
        s = np.full_like(p, self.bg.u_minus.s)
        q = speed_from_bernoulli(self.bg.minus.bernoulli, p, s, self.gas)
        return FlowState(p, th, q, s)

    def full(self, du: FlowFields):
        u = self.bg.u_plus
        return du.p + u.p, du.theta + u.theta, du.q + u.q, du.s + u.s


def _tail(values, eta):
    """int_eta^1 values (trapezoid), on the nodes."""
    return anchor_curve(0.0, values, eta) * -1.0


def domain_metrics(xi_t, psi, psi_prime, xi_bar, length):
    """Factors of the fixed-domain transform.

    For u(xi, eta) = u_t(xi_t, eta):
        d_eta u = d_eta u_t - stretch * d_xi_t u_t,   d_xi u = (1 + metric) d_xi_t u_t,
    with stretch = (L - xi_t) psi' / (L - psi) and metric = (psi - xi_bar) / (L - psi).
    """
    den = length - np.asarray(psi, float)
    stretch = (length - np.asarray(xi_t, float))[:, None] / den[None, :] * np.asarray(psi_prime, float)[None, :]
    metric = ((np.asarray(psi, float) - xi_bar) / den)[None, :]
    return stretch, metric


def assemble_rhs(state: IterationState, ctx: IterationContext, delta_xi=None) -> AssembledData:
    """Nonlinear remainders and boundary data for the linearised problem."""
    if delta_xi is None:
        delta_xi = state.delta_xi_star
    spec, bg, gas = ctx.spec, ctx.bg, ctx.gas
    L, xb, sigma = spec.length, ctx.xi_bar, spec.sigma
    grid, xi, eta = ctx.grid, ctx.xi, ctx.eta
    du, dpsi = state.delta_u, np.asarray(state.delta_psi_prime, float)
    p, th, q, s = ctx.full(du)
    rho = density(p, s, gas)
    mass = rho * q
    m2 = q * q * rho / (gas.gamma * p)
    k = (1.0 - m2) / (rho * q * q)
    sn, cs = np.sin(th), np.cos(th)

    shift = delta_xi - _tail(dpsi, eta)  # psi - xi_bar
    psi = xb + shift
    if np.any(psi <= 0.0) or np.any(psi >= L):
        raise GeometryError("shock curve leaves (0, L)")
    stretch, metric = domain_metrics(xi, psi, dpsi, xb, L)

    h1, h2 = grid.h1, grid.h2
    dpx, dpy = np.gradient(p, h1, h2, edge_order=2)
    dtx, dty = np.gradient(th, h1, h2, edge_order=2)
    ddpx, ddpy = np.gradient(du.p, h1, h2, edge_order=2)
    ddtx, ddty = np.gradient(du.theta, h1, h2, edge_order=2)

    a1_term = -(sn / mass) * dpx + q * cs * dtx  # row 1 of A1(U) d_xi U
    a2_term = -(sn / mass) * dtx - (cs / mass) * k * dpx  # row 2
    f1 = (ddpy + ctx.a1 * ddtx) - (dpy + a1_term) + stretch * dpx - metric * a1_term
    f2 = (ddty - ctx.a2 * ddpx) - (dty + a2_term) + stretch * dtx - metric * a2_term

    dplus = ctx.dp
    f3 = bg.u_plus.q * du.q + du.p / dplus.rho + dplus.temperature * du.s - (0.5 * q * q + gas.gamma * p / ((gas.gamma - 1.0) * rho))

    # shock data
    u_shock = FlowState(p[0], th[0], q[0], s[0])
    um = ctx.minus_along(psi)
    big_g = np.array(rh_residuals(u_shock, um, dpsi, gas))
    du0 = np.vstack([du.p[0], du.theta[0], du.q[0], du.s[0]])
    lin = ctx.beta_plus @ du0
    g = lin - big_g
    g[3] -= bg.jump_p * dpsi
    gsharp = ctx.bs_inv @ g[:3]

    y_exit = physical_y(p[-1], th[-1], q[-1], s[-1], eta, gas)
    dp3 = sigma * np.asarray(spec.pressure(y_exit), float)
    xs = ((L - xb - delta_xi) * xi + delta_xi * L) / (L - xb)
    dth4 = sigma * np.asarray(spec.theta(xs), float)
    prob = EllipticProblem(ctx.a1, ctx.a2, f1, f2, gsharp[0], 0.0, dp3, dth4, grid)
    return AssembledData(f1, f2, f3, g, gsharp, dp3, dth4, psi, prob, um)


def solvability_functional(state, ctx, delta_xi):
    """I(d xi*) = -int f2 + int dTheta4 + a2 int (g1# - dP3); zero at solvability."""
    data = assemble_rhs(state, ctx, delta_xi)
    return -compatibility_residual(data.problem), data


def solve_delta_xi(state: IterationState, ctx: IterationContext, options: IterationOptions = None):
    """Root of the solvability functional by safeguarded Newton (secant slope
    from finite differences) with a bisection-type fallback.

    Returns (d xi*, assembled data at the root, number of evaluations).
    """
    options = options or IterationOptions()
    spec = ctx.spec
    L, sigma = spec.length, spec.sigma
    i0, data = solvability_functional(state, ctx, 0.0)
    scale = _data_scale(data.problem)
    if scale == 0.0 or sigma == 0.0:
        # the bracket collapses with sigma; leftover data is round-off
        return 0.0, data, 1
    tol = 1e-12 * max(scale, sigma)
    half = options.bracket_width * sigma * L
    lo = max(-half, -(ctx.xi_bar) * 0.99)
    hi = min(half, (L - ctx.xi_bar) * 0.99)
    evals = 1
    x, fx = 0.0, i0
    fd = 1e-7 * L
    for _ in range(30):
        if abs(fx) <= tol:
            return x, data, evals
        f_h, _ = solvability_functional(state, ctx, x + fd)
        evals += 1
        slope = (f_h - fx) / fd
        if slope == 0.0 or not math.isfinite(slope):
            break
        x_new = x - fx / slope
        if not lo <= x_new <= hi:
            break
        step = abs(x_new - x)
        x = x_new
        fx, data = solvability_functional(state, ctx, x)
        evals += 1
        if step <= 1e-15 * L:
            return x, data, evals
    # fallback: bracketed root finding
    samples = []
    f_lo, _ = solvability_functional(state, ctx, lo)
    f_hi, _ = solvability_functional(state, ctx, hi)
    samples += [(lo, f_lo), (0.0, i0), (hi, f_hi)]
    if f_lo * f_hi > 0:
        raise SolvabilityRootError("solvability functional has no sign change in the bracket", samples)
    x = brentq(lambda d: solvability_functional(state, ctx, d)[0], lo, hi, xtol=1e-15 * L, rtol=4 * np.finfo(float).eps)
    fx, data = solvability_functional(state, ctx, x)
    return x, data, evals + 2


def apply_iteration_map(state: IterationState, ctx: IterationContext, options: IterationOptions = None):
    """One application of the fixed-point map (dU, dpsi') -> (dU*, dpsi*')."""
    options = options or IterationOptions()
    bg = ctx.bg
    dxs, data, evals = solve_delta_xi(state, ctx, options)
    u1, u2 = solve_first_order_elliptic(data.problem, compat_tol=options.compat_tol * _data_scale(data.problem) + 1e-14)
    dplus = ctx.dp
    qbar = bg.u_plus.q
    g1s, g2s, g3s = data.gsharp
    ds = np.broadcast_to(g3s[None, :], u1.shape).copy()
    shock_const = qbar * g2s + g1s / dplus.rho + dplus.temperature * g3s
    dq = (shock_const[None, :] + data.f3 - data.f3[0][None, :] - u1 / dplus.rho - dplus.temperature * ds) / qbar
    new = FlowFields(ctx.xi, ctx.eta, u1, u2, dq, ds)
    dpsi_new = (ctx.beta_plus[3] @ np.vstack([u1[0], u2[0], dq[0], ds[0]]) - data.g[3]) / bg.jump_p
    out = IterationState(new, dpsi_new, float(dxs), state.iteration_index + 1)
    out.norms = {"solvability_evals": evals}
    return out, data


# -- norms ---------------------------------------------------------------------


def field_norm(fields: FlowFields, grid: RectGrid, beta=4.0):
    """sup norm plus the h-weighted l^beta norm of first differences, summed over components."""
    total = 0.0
    w = grid.h1 * grid.h2
    for c in fields.components():
        g1 = np.diff(c, axis=0) / grid.h1
        g2 = np.diff(c, axis=1) / grid.h2
        total += np.max(np.abs(c)) + (w * np.sum(np.abs(g1) ** beta)) ** (1 / beta) + (w * np.sum(np.abs(g2) ** beta)) ** (1 / beta)
    return float(total)


def trace_norm(values, eta, beta=4.0):
    """sup plus the discrete W^{1-1/beta, beta} Gagliardo seminorm on [0, 1]."""
    v = np.asarray(values, float)
    h = eta[1] - eta[0]
    diff = np.abs(v[:, None] - v[None, :])
    dist = np.abs(eta[:, None] - eta[None, :])
    np.fill_diagonal(dist, 1.0)
    semi = (h * h * np.sum((diff / dist) ** beta)) ** (1 / beta)
    return float(np.max(np.abs(v)) + semi)


def proxy_norm(delta_u: FlowFields, delta_psi_prime, grid: RectGrid, beta=4.0):
    return field_norm(delta_u, grid, beta) + trace_norm(delta_psi_prime, grid.x2, beta)


def _difference(a: IterationState, b: IterationState):
    du = FlowFields(a.delta_u.xi, a.delta_u.eta, *(x - y for x, y in zip(a.delta_u.components(), b.delta_u.components())))
    return du, np.asarray(a.delta_psi_prime) - np.asarray(b.delta_psi_prime)


# -- driver ----------------------------------------------------------------------


@dataclass
class SubsonicPhysical:
    x: np.ndarray  # physical xi of each node of the fixed rectangle
    theta: np.ndarray


@dataclass
class ShockSolution:
    background: BackgroundShock
    spec: NozzleSpec
    xi_bar: float
    xi_star: float
    eta: np.ndarray
    psi: np.ndarray
    psi_prime: np.ndarray
    supersonic: FlowFields  # full state on [0, L] x [0, 1]
    plus: FlowFields  # full state on the fixed rectangle
    plus_physical: SubsonicPhysical
    minus_on_shock: FlowState
    linear: LinearSolution
    log: list
    residuals: dict
    constants: dict
    converged: bool
    iterations: int

    @property
    def u_minus(self):
        return self.supersonic

    @property
    def u_plus(self):
        return self.plus

    def to_manifest(self):
        return {
            "xi_bar": self.xi_bar,
            "xi_star": self.xi_star,
            "delta_xi_star": self.xi_star - self.xi_bar,
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": self.residuals,
            "constants": self.constants,
            "log": self.log,
            "psi": {"eta": self.eta.tolist(), "psi": self.psi.tolist(), "psi_prime": self.psi_prime.tolist()},
        }


def _validate(ctx: IterationContext, state: IterationState, psi):
    """Nonlinear jump residuals, exit pressure mismatch and entropy condition."""
    bg, spec = ctx.bg, ctx.spec
    p, th, q, s = ctx.full(state.delta_u)
    um = ctx.minus_along(psi)
    res = np.array(rh_residuals(FlowState(p[0], th[0], q[0], s[0]), um, state.delta_psi_prime, ctx.gas))
    y_exit = physical_y(p[-1], th[-1], q[-1], s[-1], ctx.eta, ctx.gas)
    exit_err = np.abs(p[-1] - bg.u_plus.p - spec.sigma * spec.pressure(y_exit))
    jump = p[0] - um.p
    out = {f"G{j + 1}": float(np.max(np.abs(res[j]))) for j in range(4)}
    out["exit_pressure"] = float(np.max(exit_err))
    out["min_pressure_jump"] = float(np.min(jump))
    out["rh_max"] = float(np.max(np.abs(res)))
    return out, um


def solve_transonic(spec: NozzleSpec, bg: BackgroundShock, xi_star_seed, options: IterationOptions = None,
                    supersonic=None, linear=None):
    """Fixed-point solve for the shock through the anchor seed ``xi_star_seed``.

    Raises NonContractionError when the step ratio exceeds 1 for
    ``divergence_window`` consecutive steps, and BallViolationError when an
    iterate leaves the ball of radius sigma^(3/2)/2 around the linear
    solution (with ``options.ball == "abort"``).
    """
    options = options or IterationOptions()
    sigma, L = spec.sigma, spec.length
    xb = float(xi_star_seed)
    if sigma > options.sigma_max:
        raise GeometryError(f"sigma = {sigma} exceeds the configured sigma_max = {options.sigma_max}")
    if not 0.0 < xb < L:
        raise GeometryError("anchor seed must lie inside (0, L)")
    if supersonic is None:
        supersonic = solve_supersonic_nonlinear(spec, bg, options.n_xi, options.n_eta, order=options.order,
                                                compat_policy=options.compat_policy)
    if linear is None:
        sup_lin = solve_linear_supersonic(spec, bg, options.n_xi, options.n_eta)
        linear = solve_linear_fbp(xb, spec, bg, n1=options.n1, sup=sup_lin)
    grid = RectGrid(L - xb, 1.0, linear.plus.xi.size, linear.plus.eta.size)
    ctx = IterationContext(spec, bg, xb, supersonic, grid)
    seed = IterationState(linear.plus, np.asarray(linear.psi_prime, float).copy(), 0.0, 0)
    radius = 0.5 * sigma**1.5
    entries = []
    state = seed
    steps = []
    converged = sigma == 0.0
    above = 0
    while not converged and state.iteration_index < options.max_iters:
        new, data = apply_iteration_map(state, ctx, options)
        du, dpp = _difference(new, state)
        step = proxy_norm(du, dpp, grid, options.beta) + abs(new.delta_xi_star - state.delta_xi_star)
        bu, bp = _difference(new, seed)
        ball = proxy_norm(bu, bp, grid, options.beta)
        ratio = step / steps[-1] if steps and steps[-1] > 0 else None
        steps.append(step)
        entry = {
            "iteration": new.iteration_index,
            "step": step,
            "ratio": ratio,
            "delta_xi_star": new.delta_xi_star,
            "ball_distance": ball,
            "ball_radius": radius,
            "compat_residual": float(compatibility_residual(data.problem)),
            "solvability_evals": new.norms["solvability_evals"],
        }
        entries.append(entry)
        log.debug("iteration %d step %.3e ratio %s", new.iteration_index, step, ratio)
        new.norms.update(step=step, ball=ball)
        state = new
        if ball > radius and options.ball != "off":
            msg = f"iterate left the admissible ball: distance {ball:.3e} > radius {radius:.3e}"
            if options.ball == "abort":
                raise BallViolationError(msg, entries)
            if not any(e.get("ball_violation") for e in entries):
                log.warning(msg)
            entry["ball_violation"] = True
        above = above + 1 if ratio is not None and ratio > 1.0 else 0
        if above >= options.divergence_window:
            raise NonContractionError(f"step ratio above 1 for {above} consecutive steps", entries)
        if step < options.iter_tol:
            converged = True

    if not converged:
        raise NonContractionError(f"no convergence within {options.max_iters} iterations", entries)
    psi = ctx.xi_bar + state.delta_xi_star - _tail(state.delta_psi_prime, ctx.eta)
    residuals, um = _validate(ctx, state, psi)
    if residuals["min_pressure_jump"] <= 0.0:
        raise GeometryError("entropy condition [p] > 0 violated on the shock")
    if max(residuals["rh_max"], residuals["exit_pressure"]) > options.final_tol:
        raise NonContractionError(
            f"final residuals {residuals['rh_max']:.3e} / {residuals['exit_pressure']:.3e} exceed {options.final_tol:.1e}",
            entries,
        )
    p, th, q, s = ctx.full(state.delta_u)
    plus = FlowFields(ctx.xi, ctx.eta, p, th, q, s)
    x_phys = L + (L - psi)[None, :] / (L - xb) * (ctx.xi - L)[:, None]
    xi_star = float(psi[-1])
    ratios = [e["ratio"] for e in entries if e["ratio"] is not None]
    scale = sigma if sigma > 0 else 1.0
    constants = {
        "plus_sup_over_sigma": state.delta_u.sup_norm() / scale,
        "anchor_shift_over_sigma": abs(xi_star - xb) / scale,
        "shock_slope_sup_over_sigma": float(np.max(np.abs(state.delta_psi_prime))) / scale,
        "distance_to_linear": proxy_norm(*_difference(state, seed), grid, options.beta),
        "median_ratio": float(np.median(ratios)) if ratios else None,
        "anchor_offset": abs(xi_star - xb),
        "ball_radius": radius,
        "ball_constant": (entries[-1]["ball_distance"] / sigma**2) if entries else 0.0,
        "ball_violations": sum(1 for e in entries if e.get("ball_violation")),
    }
    return ShockSolution(
        background=bg,
        spec=spec,
        xi_bar=xb,
        xi_star=xi_star,
        eta=ctx.eta,
        psi=psi,
        psi_prime=np.asarray(state.delta_psi_prime, float),
        supersonic=supersonic,
        plus=plus,
        plus_physical=SubsonicPhysical(x_phys, th),
        minus_on_shock=um,
        linear=linear,
        log=entries,
        residuals=residuals,
        constants=constants,
        converged=converged,
        iterations=state.iteration_index,
    )


def estimate_sigma_max(spec: NozzleSpec, bg: BackgroundShock, xi_star_seed, upper=0.05, steps=6, options=None):
    """Largest sigma in (0, upper] for which solve_transonic converges, by bisection.

    The anchor seed does not depend on sigma, so the same seed is reused.
    """
    from dataclasses import replace

    from .errors import NozzleShockError

    options = replace(options or IterationOptions(), sigma_max=max(upper, 1.0))

    def ok(sig):
        try:
            solve_transonic(replace(spec, sigma=sig), bg, xi_star_seed, options)
            return True
        except NozzleShockError:
            return False

    if ok(upper):
        return upper
    lo, hi = 0.0, upper
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo

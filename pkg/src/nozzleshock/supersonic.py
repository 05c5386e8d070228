"""Nonlinear supersonic flow ahead of the shock.

The quasilinear system A(U) d_xi V + d_eta V = 0 for V = (p, theta) is
marched in xi by an inverse characteristic scheme: both characteristics
through a new node are traced back to the previous column, and the
Riemann relations l(+/-) . dV = 0 are solved for V at the new node.
S is constant on the rows and q follows from the Bernoulli law.
"""

import math

import numpy as np

from .errors import CFLError, MarchingError
from .fields import FlowFields
from .gas_core import BackgroundShock, density, speed_from_bernoulli
from .nozzle import NozzleSpec

MACH_MARGIN = 1e-3
MAX_SUBSTEPS = 4096


def _coefficients(p, theta, gas, bern, s):
    """Slopes d eta/d xi of C+/C- and the left eigenvectors, all vectorised."""
    q = speed_from_bernoulli(bern, p, s, gas)
    rho = density(p, s, gas)
    m2 = q * q * rho / (gas.gamma * p)
    if np.any(m2 <= (1.0 + MACH_MARGIN) ** 2):
        raise MarchingError(f"flow lost supersonicity (min M = {math.sqrt(float(np.min(m2))):.4f})")
    root = np.sqrt(m2 - 1.0)
    mass = rho * q
    sn, cs = np.sin(theta), np.cos(theta)
    lam_p = mass / (-sn + cs * root)
    lam_m = mass / (-sn - cs * root)
    l1 = (m2 - 1.0) / (rho * q * q)
    return lam_p, lam_m, l1, root, q


def _interp(v, eta, y, order):
    """Interpolate column values v (nodes eta) at points y."""
    if order == 1:
        return np.interp(y, eta, v)
    h = eta[1] - eta[0]
    j = np.clip(np.rint(y / h).astype(int), 1, eta.size - 2)
    t = (y - eta[j]) / h
    return 0.5 * t * (t - 1.0) * v[j - 1] + (1.0 - t * t) * v[j] + 0.5 * t * (t + 1.0) * v[j + 1]


def _step(p, th, eta, dx, top_theta, gas, bern, s, order, max_cfl):
    """One column advance; returns new (p, theta)."""
    h = eta[1] - eta[0]
    lam_p, lam_m, l1, root, _ = _coefficients(p, th, gas, bern, s)
    cfl = dx * max(np.max(np.abs(lam_p)), np.max(np.abs(lam_m))) / h
    if cfl > max_cfl:
        raise CFLError(f"characteristic Courant number {cfl:.3f} exceeds {max_cfl}")

    def trace(lp, lm):
        yp = np.clip(eta - dx * lp, 0.0, 1.0)
        ym = np.clip(eta - dx * lm, 0.0, 1.0)
        return yp, ym

    yp, ym = trace(lam_p, lam_m)
    p_new = th_new = None
    for sweep in range(2 if order == 2 else 1):
        ap, rp = _interp(l1, eta, yp, order), _interp(root, eta, yp, order)
        am, rm = _interp(l1, eta, ym, order), _interp(root, eta, ym, order)
        if sweep == 1:
            # corrector: average slopes and eigenvectors between foot and new node
            lp2, lm2, l1n, rootn, _ = _coefficients(p_new, th_new, gas, bern, s)
            yp, ym = trace(0.5 * (_interp(lam_p, eta, yp, order) + lp2), 0.5 * (_interp(lam_m, eta, ym, order) + lm2))
            ap = 0.5 * (_interp(l1, eta, yp, order) + l1n)
            rp = 0.5 * (_interp(root, eta, yp, order) + rootn)
            am = 0.5 * (_interp(l1, eta, ym, order) + l1n)
            rm = 0.5 * (_interp(root, eta, ym, order) + rootn)
        pp, tp = _interp(p, eta, yp, order), _interp(th, eta, yp, order)
        pm, tm = _interp(p, eta, ym, order), _interp(th, eta, ym, order)
        # ap p + rp th = ap pp + rp tp ;  am p - rm th = am pm - rm tm
        cp = ap * pp + rp * tp
        cm = am * pm - rm * tm
        det = -ap * rm - rp * am
        p_new = (-rm * cp - rp * cm) / det
        th_new = (ap * cm - am * cp) / det
        # walls: bottom closes with C-, top with C+
        th_new[0] = 0.0
        p_new[0] = (cm[0] + rm[0] * th_new[0]) / am[0]
        th_new[-1] = top_theta
        p_new[-1] = (cp[-1] - rp[-1] * th_new[-1]) / ap[-1]
    return p_new, th_new


def solve_supersonic_nonlinear(spec: NozzleSpec, bg: BackgroundShock, n_xi=257, n_eta=129, order=2, max_cfl=0.9,
                               substeps=None, compat_policy="error"):
    """March the full supersonic system over [0, L] x [0, 1].

    ``order=1`` uses linear interpolation at the characteristic feet;
    ``order=2`` adds a predictor-corrector with quadratic interpolation.
    Without an explicit ``substeps`` each column is split so that the
    characteristic Courant number stays below ``max_cfl``.
    The wall profile must be compatible with the uniform inflow at the
    inlet corner (see :meth:`NozzleSpec.check_compatibility`).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    spec.check_compatibility(compat_policy)
    gas = bg.gas
    xi = np.linspace(0.0, spec.length, n_xi)
    eta = np.linspace(0.0, 1.0, n_eta)
    um = bg.u_minus
    bern, s = bg.minus.bernoulli, um.s
    p_all = np.full((n_xi, n_eta), um.p)
    th_all = np.zeros((n_xi, n_eta))
    if spec.sigma != 0.0:
        dxi, h = xi[1] - xi[0], eta[1] - eta[0]
        p, th = p_all[0].copy(), th_all[0].copy()
        for i in range(1, n_xi):
            sub = substeps
            if sub is None:
                # size the substeps from the current slopes, with headroom for their change over the column
                lam_p, lam_m = _coefficients(p, th, gas, bern, s)[:2]
                slope = max(np.max(np.abs(lam_p)), np.max(np.abs(lam_m)))
                sub = max(1, math.ceil(dxi * slope * 1.25 / (h * max_cfl)))
            while True:
                try:
                    p_new, th_new = p, th
                    dx = dxi / sub
                    for k in range(1, sub + 1):
                        x = xi[i - 1] + k * dx
                        p_new, th_new = _step(p_new, th_new, eta, dx, spec.sigma * float(spec.theta(x)), gas, bern, s,
                                              order, max_cfl)
                    break
                except CFLError:
                    # slopes steepen inside the column (near-sonic flow): retry with finer steps
                    if substeps is not None or sub >= MAX_SUBSTEPS:
                        raise
                    sub *= 2
            p, th = p_new, th_new
            p_all[i], th_all[i] = p, th
    s_all = np.full_like(p_all, s)
    q_all = speed_from_bernoulli(bern, p_all, s_all, gas)
    rho = density(p_all, s_all, gas)
    mach = q_all / np.sqrt(gas.gamma * p_all / rho)
    if np.min(mach) <= 1.0 + MACH_MARGIN:
        raise MarchingError(f"flow lost supersonicity (min M = {np.min(mach):.4f})")
    return FlowFields(xi, eta, p_all, th_all, q_all, s_all)


def characteristic_speed(bg: BackgroundShock) -> float:
    """|d eta / d xi| of the background characteristics."""
    d = bg.minus
    return d.rho * bg.u_minus.q / math.sqrt(d.mach**2 - 1.0)

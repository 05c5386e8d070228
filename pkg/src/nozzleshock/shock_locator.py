"""Initial shock positions from the solvability condition R(xi) = P*.

R(xi) = int_0^L Theta - K int_0^xi Theta, so R' = -K Theta: every sign
change of Theta inside (0, L) creates a turning point of R and possibly a
further root.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import bisect, minimize_scalar

from .gas_core import BackgroundShock, kdot
from .nozzle import NozzleSpec, Profile1D

__all__ = ["kdot", "pstar", "RCurve", "r_of_xi", "find_admissible_locations", "LocatedRoot", "LocationReport"]


def pstar(bg: BackgroundShock, pressure_profile: Profile1D, nodes=4097) -> float:
    """P* = (1/(rho+ q+)) ((1 - M+^2)/(rho+ q+^2)) int_0^1 P."""
    eta = np.linspace(0.0, 1.0, nodes)
    return float(bg.elliptic_coefficient("+") * simpson(pressure_profile(eta), x=eta))


class RCurve:
    """R(xi) and R'(xi) with the cumulative integral of Theta cached."""

    def __init__(self, spec: NozzleSpec, k: float):
        self.spec = spec
        self.k = float(k)
        self.total = spec.theta.integral(0.0, spec.length)

    def __call__(self, xi):
        return self.total - self.k * self.spec.theta.cumulative(xi)

    def derivative(self, xi):
        return -self.k * self.spec.theta(xi)


def r_of_xi(spec: NozzleSpec, k: float, xi):
    return RCurve(spec, k)(xi)


@dataclass
class LocatedRoot:
    xi_star: float
    r_prime_sign: int
    theta_at_root: float
    residual: float
    degenerate: bool = False
    tangential: bool = False
    boundary: bool = False

    @property
    def admissible(self):
        return not (self.degenerate or self.tangential or self.boundary)


@dataclass
class LocationReport:
    roots: list
    r_lower: float
    r_upper: float
    p_star: float
    in_range: bool
    status: str
    kdot: float
    scan_cells: int
    notes: list = field(default_factory=list)

    @property
    def admissible_roots(self):
        return [r for r in self.roots if r.admissible]

    def to_dict(self):
        d = asdict(self)
        for r, rd in zip(self.roots, d["roots"]):
            rd["admissible"] = r.admissible
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _extreme(f, xs, vals, which):
    """Refine the grid extremum of f by bounded minimisation."""
    idx = int(np.argmin(vals) if which == "min" else np.argmax(vals))
    best = vals[idx]
    lo, hi = xs[max(idx - 1, 0)], xs[min(idx + 1, xs.size - 1)]
    if hi > lo:
        sgn = 1.0 if which == "min" else -1.0
        res = minimize_scalar(lambda x: sgn * f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
        cand = sgn * res.fun
        best = min(best, cand) if which == "min" else max(best, cand)
    return float(best)


def find_admissible_locations(spec: NozzleSpec, bg: BackgroundShock, scan_cells=4096, theta_tol=1e-12,
                              root_tol=1e-12) -> LocationReport:
    """Enumerate every root of R - P* on [0, L] by scan and bisection (xtol = root_tol * L)."""
    k = kdot(bg)
    ps = pstar(bg, spec.pressure)
    rc = RCurve(spec, k)
    L = spec.length
    xs = np.linspace(0.0, L, scan_cells + 1)
    rv = rc(xs)
    r_lo = _extreme(rc, xs, rv, "min")
    r_hi = _extreme(rc, xs, rv, "max")
    scale = abs(r_lo) + abs(r_hi) + 1.0
    tol = 1e-10 * scale
    in_range = r_lo - tol <= ps <= r_hi + tol
    notes = []
    if not in_range:
        notes.append(f"P* = {ps:.6g} outside [{r_lo:.6g}, {r_hi:.6g}]: no admissible location")
        return LocationReport([], r_lo, r_hi, ps, False, "out_of_range", k, scan_cells, notes)
    status = "ok"
    if min(abs(ps - r_lo), abs(ps - r_hi)) <= tol:
        status = "boundary_of_range"
        notes.append("P* coincides with an extreme value of R; tangential roots flagged degenerate")

    f = lambda x: float(rc(x)) - ps
    fv = rv - ps
    xtol = root_tol * L
    found = []
    for i in range(scan_cells):
        a, b = fv[i], fv[i + 1]
        if a == 0.0:
            found.append((xs[i], False))
        elif a * b < 0:
            found.append((bisect(f, xs[i], xs[i + 1], xtol=xtol, maxiter=200), False))
    if fv[-1] == 0.0:
        found.append((xs[-1], False))

    # even-multiplicity roots: local minima of |R - P*| without a sign change
    absf = np.abs(fv)
    for i in range(1, scan_cells):
        if absf[i] <= absf[i - 1] and absf[i] <= absf[i + 1] and fv[i - 1] * fv[i + 1] > 0:
            res = minimize_scalar(lambda x: abs(f(x)), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                  options={"xatol": xtol})
            if res.fun <= tol:
                found.append((float(res.x), True))

    found.sort()
    roots = []
    for x, tangential in found:
        # a double root is only located to ~sqrt(eps), and round-off may add a sign change beside it
        window = 1e-6 * L if tangential or (roots and roots[-1].tangential) else 1e-9 * L
        if roots and abs(x - roots[-1].xi_star) <= window:
            roots[-1].tangential |= tangential
            continue
        th = float(spec.theta(x))
        roots.append(
            LocatedRoot(
                xi_star=float(x),
                r_prime_sign=int(np.sign(-k * th)),
                theta_at_root=th,
                residual=f(x),
                degenerate=abs(th) <= theta_tol or tangential,
                tangential=tangential,
                boundary=x <= 1e-10 * L or x >= L * (1 - 1e-10),
            )
        )
    for r in roots:
        r.degenerate = r.degenerate or r.tangential
    return LocationReport(roots, r_lo, r_hi, ps, True, status, k, scan_cells, notes)

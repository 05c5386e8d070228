"""Polytropic gas thermodynamics, the background normal shock and the
Rankine-Hugoniot residuals G1..G4 with their linearisations.

State vectors are ordered U = (p, theta, q, S) everywhere in the package.
All functions accept scalars or numpy arrays of matching shape.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SingularConfigurationError


@dataclass(frozen=True)
class GasConstants:
    gamma: float = 1.4
    c_v: float = 1.0
    s0: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if not self.c_v > 0.0:
            raise DomainError(f"c_v must be positive, got {self.c_v}")


@dataclass(frozen=True)
class FlowState:
    """U = (p, theta, q, S).  Fields may be floats or equally shaped arrays."""

    p: float
    theta: float
    q: float
    s: float

    def __post_init__(self):
        if np.any(np.asarray(self.p) <= 0):
            raise DomainError("pressure must be positive")
        if np.any(np.asarray(self.q) <= 0):
            raise DomainError("speed must be positive")

    def as_array(self):
        return np.array([self.p, self.theta, self.q, self.s], dtype=float)


class Derived(NamedTuple):
    rho: object
    c: object
    mach: object
    enthalpy: object
    bernoulli: object
    temperature: object


def density(p, s, g: GasConstants):
    """Invert p = (gamma-1) exp((S-S0)/c_v) rho^gamma for rho."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DomainError("density requires positive pressure")
    rho = (p / ((g.gamma - 1.0) * np.exp((np.asarray(s) - g.s0) / g.c_v))) ** (1.0 / g.gamma)
    return rho if rho.ndim else float(rho)


def entropy(p, rho, g: GasConstants):
    """Entropy of the state (p, rho); inverse of :func:`density`."""
    return g.s0 + g.c_v * np.log(np.asarray(p) / ((g.gamma - 1.0) * np.asarray(rho) ** g.gamma))


def enthalpy(p, rho, g: GasConstants):
    return g.gamma * p / ((g.gamma - 1.0) * rho)


def derived(u: FlowState, g: GasConstants) -> Derived:
    rho = density(u.p, u.s, g)
    c2 = g.gamma * u.p / rho
    c = np.sqrt(c2)
    i = enthalpy(u.p, rho, g)
    # T is chosen so that dPhi/dS at fixed p equals T.
    t = u.p / ((g.gamma - 1.0) * g.c_v * rho)
    return Derived(rho, c, u.q / c, i, 0.5 * u.q**2 + i, t)


def speed_from_bernoulli(bernoulli, p, s, g: GasConstants):
    """Speed q with q^2/2 + i(p, S) equal to the given Bernoulli constant."""
    rho = density(p, s, g)
    q2 = 2.0 * (bernoulli - enthalpy(p, rho, g))
    if np.any(q2 <= 0):
        raise DomainError("Bernoulli constant below enthalpy; no positive speed")
    return np.sqrt(q2)


def normal_shock_downstream(u_minus: FlowState, g: GasConstants) -> FlowState:
    """Subsonic state behind a normal shock, from the classical Mach relations.

    One Newton step on (G1, G2, G3) then removes round-off drift.
    """
    if abs(float(u_minus.theta)) > 0.0:
        raise DomainError("normal shock requires theta = 0 upstream")
    d = derived(u_minus, g)
    m2 = float(d.mach) ** 2
    if m2 <= 1.0:
        raise DomainError(f"upstream Mach {np.sqrt(m2):.6g} <= 1: no admissible downstream state")
    gam = g.gamma
    p_ratio = 1.0 + 2.0 * gam * (m2 - 1.0) / (gam + 1.0)
    rho_ratio = (gam + 1.0) * m2 / ((gam - 1.0) * m2 + 2.0)
    p2 = u_minus.p * p_ratio
    rho2 = d.rho * rho_ratio
    q2 = u_minus.q / rho_ratio
    s2 = float(entropy(p2, rho2, g))
    state = np.array([p2, q2, s2])

    def resid(x):
        up = FlowState(x[0], 0.0, x[1], x[2])
        return np.array(rh_residuals(up, u_minus, 0.0, g)[:3])

    r = resid(state)
    jac = _bs_matrix_at(FlowState(p2, 0.0, q2, s2), u_minus, g)
    step = np.linalg.solve(jac, -r)
    cand = state + step
    if np.linalg.norm(resid(cand)) <= np.linalg.norm(r):
        state = cand
    return FlowState(float(state[0]), 0.0, float(state[1]), float(state[2]))


def rh_residuals(u_plus: FlowState, u_minus: FlowState, psi_prime, g: GasConstants):
    """Jump residuals (G1, G2, G3, G4) in Lagrange coordinates."""
    dp = derived(u_plus, g)
    dm = derived(u_minus, g)
    up, vp = u_plus.q * np.cos(u_plus.theta), u_plus.q * np.sin(u_plus.theta)
    um, vm = u_minus.q * np.cos(u_minus.theta), u_minus.q * np.sin(u_minus.theta)
    if np.any(np.abs(up) <= 1e-14 * u_plus.q) or np.any(np.abs(um) <= 1e-14 * u_minus.q):
        raise SingularConfigurationError("u = q cos(theta) vanishes on a shock side")
    jp = u_plus.p - u_minus.p
    jv = vp - vm
    g1 = (1.0 / (dp.rho * up) - 1.0 / (dm.rho * um)) * jp + (vp / up - vm / um) * jv
    g2 = (up + u_plus.p / (dp.rho * up) - um - u_minus.p / (dm.rho * um)) * jp + (
        u_plus.p * vp / up - u_minus.p * vm / um
    ) * jv
    g3 = dp.bernoulli - dm.bernoulli
    g4 = jv - psi_prime * jp
    return g1, g2, g3, g4


@dataclass(frozen=True)
class BackgroundShock:
    """Uniform normal shock (U-, U+) with rho- q- = rho+ q+ = 1."""

    u_minus: FlowState
    u_plus: FlowState
    gas: GasConstants

    def __post_init__(self):
        dm, dp = derived(self.u_minus, self.gas), derived(self.u_plus, self.gas)
        if not dm.mach > 1.0:
            raise DomainError("background upstream state is not supersonic")
        if not dp.mach < 1.0:
            raise DomainError("background downstream state is not subsonic")
        if not self.u_plus.p > self.u_minus.p:
            raise DomainError("entropy condition [p] > 0 violated")

    @classmethod
    def from_upstream(cls, p_minus: float, mach_minus: float, gas: GasConstants):
        """Build the normalised background from upstream pressure and Mach number.

        With rho q = 1 and c^2 = gamma p / rho the upstream density is
        1 / (gamma p M^2); the entropy absorbs the rescaling.
        """
        if not p_minus > 0:
            raise DomainError("upstream pressure must be positive")
        if not mach_minus > 1.0:
            raise DomainError(f"upstream Mach {mach_minus} is not supersonic")
        rho = 1.0 / (gas.gamma * p_minus * mach_minus**2)
        q = 1.0 / rho
        s = float(entropy(p_minus, rho, gas))
        um = FlowState(float(p_minus), 0.0, float(q), s)
        return cls(um, normal_shock_downstream(um, gas), gas)

    @classmethod
    def from_state(cls, u_minus: FlowState, gas: GasConstants):
        """Normalise an arbitrary uniform upstream state, keeping p and M."""
        d = derived(u_minus, gas)
        return cls.from_upstream(float(u_minus.p), float(d.mach), gas)

    @property
    def minus(self) -> Derived:
        return derived(self.u_minus, self.gas)

    @property
    def plus(self) -> Derived:
        return derived(self.u_plus, self.gas)

    @property
    def jump_p(self) -> float:
        return self.u_plus.p - self.u_minus.p

    def elliptic_coefficient(self, side="+"):
        """(1/(rho q)) (1 - M^2)/(rho q^2) on the requested side."""
        u, d = (self.u_plus, self.plus) if side == "+" else (self.u_minus, self.minus)
        m = d.rho * u.q
        return (1.0 / m) * (1.0 - d.mach**2) / (d.rho * u.q**2)


def kdot(bg: BackgroundShock) -> float:
    """K = [p]((gamma-1)/(gamma p+) + 1/(rho+ q+^2))."""
    g = bg.gas
    return bg.jump_p * ((g.gamma - 1.0) / (g.gamma * bg.u_plus.p) + 1.0 / (bg.plus.rho * bg.u_plus.q**2))


class RHJacobians(NamedTuple):
    plus: np.ndarray  # rows beta_1+ .. beta_4+
    minus: np.ndarray


def rh_jacobians(bg: BackgroundShock) -> RHJacobians:
    """Gradients of G1..G4 at (U+, U-, psi' = 0) in closed form."""
    g = bg.gas
    jp = bg.jump_p

    def side(u, d, sign):
        m = d.rho * u.q
        b1 = (1.0 / m) * jp * np.array([-1.0 / (d.rho * d.c**2), 0.0, -1.0 / u.q, 1.0 / (g.gamma * g.c_v)])
        b2 = (1.0 / m) * jp * np.array(
            [1.0 - u.p / (d.rho * d.c**2), 0.0, m - u.p / u.q, u.p / (g.gamma * g.c_v)]
        )
        b3 = np.array([1.0 / d.rho, 0.0, u.q, u.p / ((g.gamma - 1.0) * g.c_v * d.rho)])
        b4 = np.array([0.0, u.q, 0.0, 0.0])
        return sign * np.vstack([b1, b2, b3, b4])

    return RHJacobians(side(bg.u_plus, bg.plus, 1.0), side(bg.u_minus, bg.minus, -1.0))


def _bs_matrix_at(u_plus: FlowState, u_minus: FlowState, g: GasConstants):
    d = derived(u_plus, g)
    jp = u_plus.p - u_minus.p
    m = d.rho * u_plus.q
    return np.array(
        [
            (jp / m) * np.array([-1.0 / (d.rho * d.c**2), -1.0 / u_plus.q, 1.0 / (g.gamma * g.c_v)]),
            (jp / m) * np.array([1.0 - u_plus.p / (d.rho * d.c**2), m - u_plus.p / u_plus.q, u_plus.p / (g.gamma * g.c_v)]),
            [1.0 / d.rho, u_plus.q, u_plus.p / ((g.gamma - 1.0) * g.c_v * d.rho)],
        ]
    )


def bs_matrix(bg: BackgroundShock) -> np.ndarray:
    """3x3 matrix acting on (p+, q+, S+) in the linearised jump conditions."""
    return _bs_matrix_at(bg.u_plus, bg.u_minus, bg.gas)


def bs_determinant(bg: BackgroundShock) -> float:
    g = bg.gas
    m = bg.plus.rho * bg.u_plus.q
    return (1.0 / ((g.gamma - 1.0) * g.c_v)) * bg.jump_p**2 * bg.u_plus.p / m**3 * (1.0 - bg.plus.mach**2)


def bs_matrix_and_gsharp(bg: BackgroundShock, p_dot_minus):
    """Downstream shock traces (p+, q+, S+) generated by an upstream pressure
    perturbation p- (with theta- = 0, q- = -p-/(rho- q-), S- = 0).

    Returns (det B_s, p_plus, q_plus, s_plus).
    """
    det = bs_determinant(bg)
    if abs(1.0 - bg.plus.mach**2) < 1e-14:
        raise SingularConfigurationError("downstream state is sonic; B_s singular")
    g = bg.gas
    up, dp = bg.u_plus, bg.plus
    um, dm = bg.u_minus, bg.minus
    k = kdot(bg)
    pm = np.asarray(p_dot_minus, dtype=float)
    upstream = (dm.mach**2 - 1.0) / (dm.rho * um.q**2) * pm
    downstream = dp.rho * up.q**2 / (dp.mach**2 - 1.0)
    p_plus = downstream * upstream * (1.0 - k)
    q_plus = upstream * (bg.jump_p - downstream * (1.0 - k))
    s_plus = -(g.gamma - 1.0) * g.c_v / up.p * upstream * bg.jump_p
    return det, p_plus, q_plus, s_plus


def quasilinear_matrix(u: FlowState, g: GasConstants) -> np.ndarray:
    """A(U) in A(U) d_xi (p, theta) + d_eta (p, theta) = 0; shape (..., 2, 2)."""
    d = derived(u, g)
    m = d.rho * u.q
    s, c = np.sin(u.theta), np.cos(u.theta)
    a = np.empty(np.shape(u.p) + (2, 2))
    a[..., 0, 0] = -s / m
    a[..., 0, 1] = d.rho * u.q**2 * c / m
    a[..., 1, 0] = (d.mach**2 - 1.0) * c / (d.rho * u.q**2) / m
    a[..., 1, 1] = -s / m
    return a


def characteristic_eigenvalues(u: FlowState, g: GasConstants):
    """lambda_{+/-} = (-sin(theta) +/- cos(theta) sqrt(M^2 - 1)) / (rho q)."""
    d = derived(u, g)
    if np.any(d.mach <= 1.0):
        raise DomainError("eigenvalues of A(U) are complex for M <= 1")
    root = np.sqrt(d.mach**2 - 1.0)
    m = d.rho * u.q
    return (-np.sin(u.theta) + np.cos(u.theta) * root) / m, (-np.sin(u.theta) - np.cos(u.theta) * root) / m

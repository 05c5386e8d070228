"""Boundary value problems for Cauchy-Riemann type systems on a rectangle.

The constant-coefficient system

    d2 u1 + a1 d1 u2 = f1,    d2 u2 - a2 d1 u1 = f2

with u1 prescribed on x1 = 0 (g1) and x1 = l1 (g3) and u2 prescribed on
x2 = 0 (g2) and x2 = l2 (g4) is rescaled to a Cauchy-Riemann system and
split into two potentials:

* V = (Phi_x2, Phi_x1) with Laplace(Phi) = f1, Phi = 0 on the boundary;
* W = (-Psi_x1, Psi_x2) with Laplace(Psi) = f2 and Neumann data.

The Neumann problem is solvable only when int f2 = int (g4 - g2) + a2 int (g1 - g3).
Arrays are indexed [i, j] with i along x1 and j along x2.
"""

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NozzleShockError, SolvabilityError


@dataclass(frozen=True)
class RectGrid:
    l1: float
    l2: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 3 or self.n2 < 3:
            raise ValueError("RectGrid needs at least 3 nodes per direction")
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("RectGrid extents must be positive")

    @property
    def h1(self):
        return self.l1 / (self.n1 - 1)

    @property
    def h2(self):
        return self.l2 / (self.n2 - 1)

    @property
    def x1(self):
        return np.linspace(0.0, self.l1, self.n1)

    @property
    def x2(self):
        return np.linspace(0.0, self.l2, self.n2)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @property
    def w1(self):
        return _trapezoid_weights(self.n1, self.h1)

    @property
    def w2(self):
        return _trapezoid_weights(self.n2, self.h2)

    @property
    def weights(self):
        return np.outer(self.w1, self.w2)


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass
class EllipticProblem:
    a1: float
    a2: float
    f1: np.ndarray
    f2: np.ndarray
    g1: np.ndarray  # u1 on x1 = 0, length n2
    g2: np.ndarray  # u2 on x2 = 0, length n1
    g3: np.ndarray  # u1 on x1 = l1, length n2
    g4: np.ndarray  # u2 on x2 = l2, length n1
    grid: RectGrid

    def __post_init__(self):
        if not self.a1 * self.a2 > 0 or self.a1 <= 0:
            raise ValueError("coefficients must satisfy a1 > 0, a2 > 0")
        n1, n2 = self.grid.n1, self.grid.n2
        self.f1 = _field(self.f1, (n1, n2))
        self.f2 = _field(self.f2, (n1, n2))
        self.g1 = _trace(self.g1, self.grid.x2)
        self.g3 = _trace(self.g3, self.grid.x2)
        self.g2 = _trace(self.g2, self.grid.x1)
        self.g4 = _trace(self.g4, self.grid.x1)


def _field(v, shape):
    return np.broadcast_to(np.asarray(v, dtype=float), shape).copy()


def _trace(v, nodes):
    if callable(v):
        v = v(nodes)
    return np.broadcast_to(np.asarray(v, dtype=float), nodes.shape).copy()


def _trapz(v, w):
    return float(np.dot(w, v))


def compatibility_residual(prob: EllipticProblem) -> float:
    """int f2 - int (g4 - g2) dx1 - a2 int (g1 - g3) dx2 (composite trapezoid)."""
    g = prob.grid
    return (
        float(np.sum(g.weights * prob.f2))
        - _trapz(prob.g4 - prob.g2, g.w1)
        - prob.a2 * _trapz(prob.g1 - prob.g3, g.w2)
    )


def _data_scale(prob: EllipticProblem) -> float:
    g = prob.grid
    return (
        float(np.sum(g.weights * np.abs(prob.f2)))
        + _trapz(np.abs(prob.g4) + np.abs(prob.g2), g.w1)
        + prob.a2 * _trapz(np.abs(prob.g1) + np.abs(prob.g3), g.w2)
    )


# -- Poisson ---------------------------------------------------------------

_local = threading.local()


def _cached_factor(key, build):
    cache = getattr(_local, "factors", None)
    if cache is None:
        cache = _local.factors = {}
    if key not in cache:
        if len(cache) >= 16:
            cache.pop(next(iter(cache)))
        cache[key] = build()
    return cache[key]


def _second_difference(n, h, neumann):
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    lo, up = off.copy(), off.copy()
    if neumann:
        up[0] = 2.0
        lo[-1] = 2.0
    return sp.diags([lo, main, up], [-1, 0, 1], format="csr") / h**2


def _dirichlet_factor(grid):
    def build():
        d1 = _second_difference(grid.n1 - 2, grid.h1, False)
        d2 = _second_difference(grid.n2 - 2, grid.h2, False)
        a = sp.kron(d1, sp.identity(grid.n2 - 2)) + sp.kron(sp.identity(grid.n1 - 2), d2)
        return splu(a.tocsc())

    return _cached_factor(("D", grid.n1, grid.n2, grid.h1, grid.h2), build)


def _neumann_factor(grid):
    def build():
        d1 = _second_difference(grid.n1, grid.h1, True)
        d2 = _second_difference(grid.n2, grid.h2, True)
        a = sp.kron(d1, sp.identity(grid.n2)) + sp.kron(sp.identity(grid.n1), d2)
        w = grid.weights.ravel()
        wa = sp.diags(w) @ a  # symmetric under trapezoid weights
        border = sp.csr_matrix(w[None, :])
        full = sp.bmat([[wa, border.T], [border, None]], format="csc")
        return splu(full)

    return _cached_factor(("N", grid.n1, grid.n2, grid.h1, grid.h2), build)


def poisson_solve(kind, rhs, grid: RectGrid, traces=None, compat_tol=None):
    """Five-point Poisson solve.

    kind='dirichlet': ``traces`` = (left, bottom, right, top) boundary values
    (None for zero).  kind='neumann': ``traces`` = outward normal derivatives
    on (left, bottom, right, top); the returned solution has zero trapezoid mean.
    """
    rhs = _field(rhs, (grid.n1, grid.n2))
    if kind == "dirichlet":
        u = np.zeros((grid.n1, grid.n2))
        if traces is not None:
            left, bottom, right, top = traces
            u[:, 0] = _trace(bottom, grid.x1)
            u[:, -1] = _trace(top, grid.x1)
            u[0, :] = _trace(left, grid.x2)
            u[-1, :] = _trace(right, grid.x2)
        b = rhs[1:-1, 1:-1].copy()
        b[0, :] -= u[0, 1:-1] / grid.h1**2
        b[-1, :] -= u[-1, 1:-1] / grid.h1**2
        b[:, 0] -= u[1:-1, 0] / grid.h2**2
        b[:, -1] -= u[1:-1, -1] / grid.h2**2
        u[1:-1, 1:-1] = _dirichlet_factor(grid).solve(b.ravel()).reshape(b.shape)
        return u
    if kind != "neumann":
        raise ValueError(f"unknown Poisson kind {kind!r}")
    left, bottom, right, top = (np.zeros(1) if t is None else t for t in (traces or (None,) * 4))
    ft = rhs.copy()
    ft[0, :] -= 2.0 * _trace(left, grid.x2) / grid.h1
    ft[-1, :] -= 2.0 * _trace(right, grid.x2) / grid.h1
    ft[:, 0] -= 2.0 * _trace(bottom, grid.x1) / grid.h2
    ft[:, -1] -= 2.0 * _trace(top, grid.x1) / grid.h2
    w = grid.weights
    residual = float(np.sum(w * ft))
    if compat_tol is None:
        compat_tol = 1e-8 * (float(np.sum(w * np.abs(ft))) + 1e-300)
    if abs(residual) > compat_tol:
        raise SolvabilityError(residual, compat_tol, "Neumann data incompatible with the source")
    b = np.append((w * ft).ravel(), 0.0)
    sol = _neumann_factor(grid).solve(b)
    if not np.all(np.isfinite(sol)):
        raise NozzleShockError("singular Neumann system")
    return sol[:-1].reshape(grid.n1, grid.n2)


# -- Cauchy-Riemann ----------------------------------------------------------


def solve_cauchy_riemann(f1, f2, g1, g2, g3, g4, grid: RectGrid, compat_tol=None, check=True):
    """Solve d2 v1 + d1 v2 = f1, d2 v2 - d1 v1 = f2 with v1 = g1, g3 on the
    x1-edges and v2 = g2, g4 on the x2-edges."""
    prob = EllipticProblem(1.0, 1.0, f1, f2, g1, g2, g3, g4, grid)
    if check:
        res = compatibility_residual(prob)
        tol = 1e-8 * (_data_scale(prob) + 1e-300) if compat_tol is None else compat_tol
        if abs(res) > tol:
            raise SolvabilityError(res, tol)
    return _cr_core(prob)


def _derivative(u, h, axis):
    """Centred differences inside; at the two ends a one-sided stencil that
    carries the same leading error h^2 u_xxx / 6 as the centred one.

    The discrete potentials have a smooth O(h^2) error, and the Neumann
    closure is itself a centred difference.  Matching the truncation terms at
    the edges keeps the error of the recovered fields smooth up to the
    boundary, so their difference quotients stay second order there too.
    """
    if u.shape[axis] < 5:
        return np.gradient(u, h, axis=axis, edge_order=2)
    u = np.moveaxis(u, axis, 0)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    # fourth-order one-sided derivative plus h^2/6 times a one-sided third derivative
    d[0] = (-27.0 * u[0] + 54.0 * u[1] - 42.0 * u[2] + 18.0 * u[3] - 3.0 * u[4]) / (12.0 * h)
    d[-1] = (27.0 * u[-1] - 54.0 * u[-2] + 42.0 * u[-3] - 18.0 * u[-4] + 3.0 * u[-5]) / (12.0 * h)
    return np.moveaxis(d, 0, axis)


def _corner_lift(f1, grid: RectGrid):
    """Polynomial pair (w1, w2) = (d2 P, d1 P) with Laplacian of P bilinear and equal
    to f1 at the four corners.  It satisfies d2 w2 - d1 w1 = 0, and removing it
    makes f1 vanish at the corners, where the split into Dirichlet and Neumann
    potentials would otherwise be singular."""
    l1, l2 = grid.l1, grid.l2
    c00, c10, c01, c11 = f1[0, 0], f1[-1, 0], f1[0, -1], f1[-1, -1]
    a = c00
    b = (c10 - c00) / l1
    c = (c01 - c00) / l2
    d = (c11 - c10 - c01 + c00) / (l1 * l2)
    x1, x2 = grid.mesh()
    w1 = c * x2**2 / 2 + d * x1**3 / 6
    w2 = a * x1 + b * x1**2 / 2 + d * x1**2 * x2 / 2
    lap = a + b * x1 + c * x2 + d * x1 * x2
    return w1, w2, lap


def _cr_core(prob: EllipticProblem):
    grid = prob.grid
    h1, h2 = grid.h1, grid.h2
    w1, w2, lap = _corner_lift(prob.f1, grid)
    g1, g3 = prob.g1 - w1[0], prob.g3 - w1[-1]
    g2, g4 = prob.g2 - w2[:, 0], prob.g4 - w2[:, -1]
    phi = poisson_solve("dirichlet", prob.f1 - lap, grid)
    psi = poisson_solve("neumann", prob.f2, grid, traces=(g1, -g2, -g3, g4), compat_tol=np.inf)
    phi_1, phi_2 = _derivative(phi, h1, 0), _derivative(phi, h2, 1)
    psi_1, psi_2 = _derivative(psi, h1, 0), _derivative(psi, h2, 1)
    # Neumann data are exact normal derivatives at the boundary nodes
    psi_1[0, :], psi_1[-1, :] = -g1, -g3
    psi_2[:, 0], psi_2[:, -1] = g2, g4
    v1 = phi_2 - psi_1 + w1
    v2 = phi_1 + psi_2 + w2
    v1[0, :], v1[-1, :] = prob.g1, prob.g3
    v2[:, 0], v2[:, -1] = prob.g2, prob.g4
    return v1, v2


def solve_first_order_elliptic(prob: EllipticProblem, compat_tol=None, project=False, projection_tol=None, info=None):
    """Solve the constant-coefficient system through the rescaling
    y1 = x1 / sqrt(a1 a2), v1 = sqrt(a2/a1) u1.

    With ``project`` a residual between compat_tol and projection_tol is
    removed by shifting f2 by its mean defect; anything larger raises.
    ``info`` (a dict) receives the residual and whether it was projected.
    """
    res = compatibility_residual(prob)
    tol = 1e-8 * (_data_scale(prob) + 1e-300) if compat_tol is None else compat_tol
    f2 = prob.f2
    projected = False
    if abs(res) > tol:
        if not project or projection_tol is None or abs(res) > projection_tol:
            raise SolvabilityError(res, tol if not project else max(tol, projection_tol or 0.0))
        f2 = f2 - res / (prob.grid.l1 * prob.grid.l2)
        projected = True
    if info is not None:
        info.update(residual=res, tolerance=tol, projected=projected)
    s = np.sqrt(prob.a2 / prob.a1)
    stretched = RectGrid(prob.grid.l1 / np.sqrt(prob.a1 * prob.a2), prob.grid.l2, prob.grid.n1, prob.grid.n2)
    tprob = EllipticProblem(1.0, 1.0, s * prob.f1, f2, s * prob.g1, prob.g2, s * prob.g3, prob.g4, stretched)
    v1, v2 = _cr_core(tprob)
    return v1 / s, v2


def first_order_residuals(u1, u2, a1, a2, grid: RectGrid):
    """Central-difference residuals (r1, r2) of the two equations at all nodes."""
    d1u1, d2u1 = np.gradient(u1, grid.h1, grid.h2, edge_order=2)
    d1u2, d2u2 = np.gradient(u2, grid.h1, grid.h2, edge_order=2)
    return d2u1 + a1 * d1u2, d2u2 - a2 * d1u1

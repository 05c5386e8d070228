"""Nozzle geometry, boundary profiles and the Lagrange coordinate map.

Profiles are given either as closed-form expressions over ``x`` or as
uniformly sampled values with cubic interpolation.  The expression grammar
accepts numbers, the identifiers ``x``, ``pi``, ``L`` (and any extra named
constants), the operators ``+ - * / ^`` (``**`` also works), unary minus,
and the functions ``sin, cos, tan, exp, sqrt, pow``.
"""

import ast
import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.interpolate import CubicSpline

from .errors import CompatibilityError, ExpressionError, GeometryError, LagrangeInversionError
from .gas_core import density

_FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "pow": (2, np.power),
}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def parse_expression(text: str, constants=None):
    """Compile an expression over ``x`` into a vectorised callable.

    The Python parser supplies the syntax tree; only whitelisted nodes are
    accepted, so nothing is ever evaluated by ``eval``.
    """
    names = {"pi": math.pi}
    names.update(constants or {})
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    try:
        # '^' is exponentiation, so it must bind like '**', not like XOR
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda x: value
        if isinstance(node, ast.Name):
            if node.id == "x":
                return lambda x: x
            if node.id in names:
                value = float(names[node.id])
                return lambda x: value
            raise ExpressionError(f"unknown identifier {node.id!r} in {text!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda x: -inner(x)
            return inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = build(node.left), build(node.right)
            return lambda x: op(left(x), right(x))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS:
            arity, fn = _FUNCTIONS[node.func.id]
            if len(node.args) != arity or node.keywords:
                raise ExpressionError(f"{node.func.id} expects {arity} argument(s) in {text!r}")
            args = [build(a) for a in node.args]
            return lambda x: fn(*(a(x) for a in args))
        raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")

    compiled = build(tree)

    def evaluate(x):
        x = np.asarray(x)
        return np.broadcast_to(compiled(x), x.shape) * 1.0

    return evaluate


def _one_sided_weights(order: int, npts: int, h: float):
    """Finite-difference weights at node 0 using nodes 0..npts-1."""
    k = np.arange(npts)
    vander = np.vander(k * h, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


@dataclass
class Profile1D:
    """A scalar function on [a, b], closed form or sampled.

    ``source`` records how the profile was built so it can be echoed into
    output manifests.
    """

    a: float
    b: float
    func: object = None
    xs: np.ndarray = None
    ys: np.ndarray = None
    source: dict = field(default_factory=dict)
    analytic: bool = False

    def __post_init__(self):
        if self.func is None and self.xs is None:
            raise ValueError("Profile1D needs either a callable or samples")
        self._spline = None
        self._primitive = None
        if self.xs is not None:
            self.xs = np.asarray(self.xs, dtype=float)
            self.ys = np.asarray(self.ys, dtype=float)
            if self.xs.ndim != 1 or self.xs.shape != self.ys.shape or self.xs.size < 4:
                raise ValueError("sampled profile needs >= 4 matching coordinate/value pairs")
            if np.any(np.diff(self.xs) <= 0):
                raise ValueError("sample coordinates must be strictly increasing")
            self._spline = CubicSpline(self.xs, self.ys, bc_type="not-a-knot", extrapolate=True)

    @classmethod
    def from_expression(cls, text, a=0.0, b=1.0, constants=None):
        f = parse_expression(text, constants)
        return cls(a, b, func=f, source={"expression": text}, analytic=True)

    @classmethod
    def from_callable(cls, f, a=0.0, b=1.0, label="callable"):
        return cls(a, b, func=f, source={"callable": label})

    @classmethod
    def constant(cls, value, a=0.0, b=1.0):
        v = float(value)
        return cls(a, b, func=lambda x: np.full(np.shape(x), v), source={"expression": repr(v)}, analytic=True)

    @classmethod
    def from_samples(cls, xs, ys):
        xs = np.asarray(xs, dtype=float)
        return cls(float(xs[0]), float(xs[-1]), xs=xs, ys=ys, source={"samples": int(xs.size)})

    @classmethod
    def from_csv(cls, path):
        """Two-column CSV (coordinate, value); a non-numeric first row is a header."""
        rows = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or not "".join(row).strip():
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if i == 0:
                        continue
                    raise ValueError(f"{path}: malformed row {i + 1}: {row}") from None
        data = np.array(rows)
        prof = cls.from_samples(data[:, 0], data[:, 1])
        prof.source = {"csv": str(Path(path))}
        return prof

    def scaled(self, factor):
        """New profile equal to factor * self."""
        factor = float(factor)
        if self._spline is not None:
            out = Profile1D(self.a, self.b, xs=self.xs, ys=factor * self.ys, source=dict(self.source))
        else:
            f = self.func
            out = Profile1D(self.a, self.b, func=lambda x: factor * f(x), source=dict(self.source), analytic=self.analytic)
        out.source["scale"] = factor * self.source.get("scale", 1.0)
        return out

    def __call__(self, x):
        if self._spline is not None:
            return self._spline(x)
        return self.func(x)

    def derivative(self, x, order=1):
        if self._spline is not None:
            return self._spline(x, order)
        x = np.asarray(x, dtype=float)
        if order == 1 and self.analytic:
            # complex step: exact to round-off for the analytic grammar
            h = 1e-30
            return np.imag(self.func(x + 1j * h)) / h
        h = 1e-4 * max(1.0, abs(self.b - self.a))
        w = {1: [-0.5, 0.0, 0.5], 2: [1.0, -2.0, 1.0]}[order]
        return sum(wi * self.func(x + (k - 1) * h) for k, wi in enumerate(w)) / h**order

    def _primitive_spline(self):
        if self._primitive is None:
            if self._spline is not None:
                self._primitive = self._spline.antiderivative()
            else:
                xs = np.linspace(self.a, self.b, 8193)
                self._primitive = CubicSpline(xs, self.func(xs)).antiderivative()
        return self._primitive

    def cumulative(self, x):
        """Integral of the profile from a to x."""
        prim = self._primitive_spline()
        return prim(x) - prim(self.a)

    def integral(self, lo=None, hi=None):
        lo = self.a if lo is None else lo
        hi = self.b if hi is None else hi
        return float(self.cumulative(hi) - self.cumulative(lo))

    def sup_norm(self, n=4097):
        xs = np.linspace(self.a, self.b, n)
        return float(np.max(np.abs(self(xs))))

    def describe(self):
        out = {"domain": [float(self.a), float(self.b)]}
        out.update(self.source)
        return out


COMPAT_OK = 1e-10
COMPAT_WARN = 1e-6


@dataclass
class NozzleSpec:
    length: float
    sigma: float
    theta: Profile1D
    pressure: Profile1D
    normalize_theta: bool = False

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryError("nozzle length must be positive")
        if self.sigma < 0:
            raise GeometryError("sigma must be non-negative")
        self.theta_scale = 1.0
        if self.normalize_theta:
            norm = self.theta.sup_norm()
            if norm == 0:
                raise GeometryError("cannot normalise a zero wall-angle profile")
            self.theta_scale = 1.0 / norm
            self.theta = self.theta.scaled(self.theta_scale)
        xs = np.linspace(0.0, self.length, 2049)
        if self.sigma * np.max(np.abs(self.theta(xs))) >= 0.5 * np.pi:
            raise GeometryError("sigma * |Theta| reaches pi/2: wall turns vertical")

    def compatibility_defect(self):
        """max(|Theta(0)|, L|Theta'(0)|, L^2|Theta''(0)|) from one-sided
        differences on samples (7-point stencil, exact for degree <= 5)."""
        h = 1e-4 * self.length
        vals = self.theta(np.arange(7) * h)
        d1 = _one_sided_weights(1, 7, h) @ vals
        d2 = _one_sided_weights(2, 7, h) @ vals
        return float(max(abs(vals[0]), self.length * abs(d1), self.length**2 * abs(d2)))

    def check_compatibility(self, policy="error"):
        """Return the defect; warn or raise according to its size and ``policy``."""
        defect = self.compatibility_defect()
        if self.sigma == 0 or defect <= COMPAT_OK:
            return defect
        msg = f"wall-angle profile incompatible at the inlet corner (defect {defect:.3e})"
        if defect < COMPAT_WARN or policy == "warn":
            warnings.warn(msg, stacklevel=2)
        elif policy == "error":
            raise CompatibilityError(msg)
        return defect


def wall_height(spec: NozzleSpec, x, nodes=513):
    """phi_w(x) = 1 + int_0^x tan(sigma Theta) by composite Simpson."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-14) or np.any(x > spec.length * (1 + 1e-14)):
        raise GeometryError("wall_height evaluated outside [0, L]")
    t = np.linspace(0.0, 1.0, nodes)
    s = x[..., None] * t
    ang = spec.sigma * spec.theta(s)
    if np.any(np.abs(ang) >= 0.5 * np.pi):
        raise GeometryError("sigma * |Theta| reaches pi/2 at a quadrature node")
    out = 1.0 + simpson(np.tan(ang), x=s, axis=-1)
    return out if out.ndim else float(out)


def physical_y(p, theta, q, s, eta, gas):
    """Y(eta) = int_0^eta ds / (rho q cos theta) along one grid line (trapezoid)."""
    flux = density(np.asarray(p), np.asarray(s), gas) * np.asarray(q) * np.cos(theta)
    if np.any(flux <= 0):
        raise LagrangeInversionError("non-positive mass flux along the integration line")
    return cumulative_trapezoid(1.0 / flux, eta, initial=0.0)


@dataclass
class PhysicalShock:
    x: np.ndarray  # shock abscissa phi_s(y) at the samples
    y: np.ndarray
    wall_y: float  # Y_s
    wall_x: float  # phi_s(Y_s)
    anchor_offset: float  # |phi_s(Y_s) - xi_bar|
    supersonic_y: np.ndarray  # y(xi, eta) on the supersonic grid
    subsonic_x: np.ndarray  # physical coordinates of the subsonic grid
    subsonic_y: np.ndarray


def lagrange_to_physical(solution) -> PhysicalShock:
    """Physical shock curve and grid coordinates of a converged solution.

    Along the shock, dy = (1/(rho u) + psi' v/u) d eta on the supersonic side;
    downstream, y grows along each streamline by tan(theta) dx.
    """
    gas = solution.background.gas
    eta = solution.eta
    psi, psi_p = solution.psi, solution.psi_prime
    um = solution.minus_on_shock
    rho = density(um.p, um.s, gas)
    u = um.q * np.cos(um.theta)
    if np.any(rho * u <= 0):
        raise LagrangeInversionError("non-positive mass flux on the shock")
    dy = 1.0 / (rho * u) + psi_p * np.tan(um.theta)
    y_shock = cumulative_trapezoid(dy, eta, initial=0.0)

    sup = solution.supersonic
    ys = np.empty_like(sup.p)
    for i in range(sup.xi.size):
        ys[i] = physical_y(sup.p[i], sup.theta[i], sup.q[i], sup.s[i], eta, gas)

    plus = solution.plus_physical
    x_sub = plus.x
    y_sub = y_shock[None, :] + cumulative_trapezoid(np.tan(plus.theta), x_sub, axis=0, initial=0.0)
    return PhysicalShock(
        x=psi.copy(),
        y=y_shock,
        wall_y=float(y_shock[-1]),
        wall_x=float(psi[-1]),
        anchor_offset=float(abs(psi[-1] - solution.xi_bar)),
        supersonic_y=ys,
        subsonic_x=x_sub,
        subsonic_y=y_sub,
    )

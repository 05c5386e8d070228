"""Grid-function containers and CSV output."""

from dataclasses import dataclass

import numpy as np

NAMES = ("p", "theta", "q", "s")


@dataclass
class FlowFields:
    """Four fields on a tensor grid, arrays indexed [i(xi), j(eta)]."""

    xi: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    s: np.ndarray

    def components(self):
        return (self.p, self.theta, self.q, self.s)

    def scaled(self, factor):
        return FlowFields(self.xi, self.eta, *(factor * c for c in self.components()))

    def shifted(self, base):
        """Fields plus a constant base state (p, theta, q, s)."""
        return FlowFields(self.xi, self.eta, *(c + b for c, b in zip(self.components(), base)))

    def sup_norm(self):
        return float(max(np.max(np.abs(c)) for c in self.components()))

    @classmethod
    def zeros(cls, xi, eta):
        z = np.zeros((xi.size, eta.size))
        return cls(xi, eta, z, z.copy(), z.copy(), z.copy())


def fmt(v):
    """Round-trip float formatting (17 significant digits)."""
    return format(float(v), ".17g")


def write_fields_csv(path, fields: FlowFields, extra=None):
    """Long-format CSV: xi, eta, p, theta, q, s (plus optional extra columns)."""
    extra = extra or {}
    cols = ["xi", "eta", *NAMES, *extra]
    xi_grid = np.broadcast_to(fields.xi[:, None] if fields.xi.ndim == 1 else fields.xi, fields.p.shape)
    eta_grid = np.broadcast_to(fields.eta[None, :], fields.p.shape)
    arrays = [xi_grid, eta_grid, *fields.components(), *extra.values()]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(fields.p.shape[0]):
            for j in range(fields.p.shape[1]):
                fh.write(",".join(fmt(a[i, j]) for a in arrays) + "\n")


def write_columns_csv(path, columns: dict):
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*data):
            fh.write(",".join(fmt(v) for v in row) + "\n")

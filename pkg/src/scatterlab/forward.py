"""Forward scattering: LS total fields, near-field Green data, far-field amplitudes, discrepancies."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from ._accel import ordered_map
from ._solver import (CUBE_INV_R, CUBE_MEAN_R, BoxConvolution, SolveInfo, offset_lattice,
                      offset_range, solve_second_kind)
from .errors import AdmissibilityError, ConfigError, SupportError
from .medium import Grid3, Potential

TWO_PI3 = (2.0 * np.pi) ** 3


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    maxiter: int = 500          # total GMRES iterations
    restart: int = 50
    workers: int = 1

    @property
    def cycles(self) -> int:
        return max(1, -(-self.maxiter // self.restart))


DEFAULT_SOLVER = SolverConfig()


# --------------------------------------------------------- quadrature

@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) x trapezoid in azimuth on the sphere of radius r."""

    r: float
    n_theta: int = 16
    n_phi: int = 32

    def __post_init__(self):
        if not self.r > 0 or self.n_theta < 1 or self.n_phi < 1:
            raise ConfigError("sphere quadrature needs r > 0 and positive node counts")

    @cached_property
    def _rule(self):
        t, wt = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        T, PHI = np.meshgrid(t, phi, indexing="ij")
        st = np.sqrt(1.0 - T**2)
        dirs = np.stack([st * np.cos(PHI), st * np.sin(PHI), T], -1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = (wt[:, None] * np.full(self.n_phi, 2.0 * np.pi / self.n_phi)).ravel()
        return dirs, w

    @property
    def directions(self) -> np.ndarray:
        return self._rule[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.r * self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self.r**2 * self._rule[1]

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    def describe(self) -> dict:
        return {"r": self.r, "n_theta": self.n_theta, "n_phi": self.n_phi,
                "rule": "gauss-legendre(cos theta) x trapezoid(phi)"}


# ------------------------------------------------------------ kernels

_TABLES: dict = {}
_TABLES_LOCK = threading.Lock()


def helmholtz_table(omega: float, h: float, lo, hi) -> np.ndarray:
    """h^3 G0(h o) on integer offsets lo..hi; the origin cell holds the cell average."""
    key = (float(omega), float(h), tuple(int(a) for a in lo), tuple(int(a) for a in hi))
    with _TABLES_LOCK:
        tab = _TABLES.get(key)
    if tab is not None:
        return tab
    o = offset_lattice(lo, hi)
    d = h * np.sqrt((o.astype(float) ** 2).sum(-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tab = -np.exp(1j * omega * d) / (4.0 * np.pi * d)
    zero = d == 0.0
    if zero.any():
        tab[zero] = -(CUBE_INV_R / h + 1j * omega - 0.5 * omega**2 * h * CUBE_MEAN_R
                      - 1j * omega**3 * h * h / 24.0) / (4.0 * np.pi)
    tab = tab * h**3
    tab.setflags(write=False)
    with _TABLES_LOCK:
        if len(_TABLES) > 32:
            _TABLES.clear()
        _TABLES[key] = tab
    return tab


class HelmholtzOperator:
    """The LS operator u -> K(v u) restricted to the support box of v."""

    def __init__(self, v: Potential, box=None):
        self.v = v
        self.box = v.box if box is None else box
        if self.box is None:
            self.conv = None
            return
        lo, hi = offset_range(self.box, self.box)
        self.table = helmholtz_table(v.omega, v.grid.h, lo, hi)
        self.conv = BoxConvolution(self.table, self.box, self.box)
        self.vbox = np.asarray(v.samples[self.box])
        self.x = v.grid.coords(self.box)

    def solve(self, u_inc: np.ndarray, solver: SolverConfig = DEFAULT_SOLVER, label=""):
        """Scattered part u_s on the box from the incident field on the box."""
        rhs = self.conv(self.vbox * u_inc)
        u, info = solve_second_kind(self.conv, self.vbox, rhs, tol=solver.tol,
                                    maxiter=solver.cycles, restart=solver.restart, label=label)
        u = u.reshape(self.vbox.shape)
        # residual of the full LS equation psi = u_inc + K v psi, relative to the incident field
        psi = u_inc + u
        r = psi - u_inc - self.conv(self.vbox * psi)
        info.residual = float(np.linalg.norm(r) / max(np.linalg.norm(u_inc), 1e-300))
        return u, info

    def extend(self, psi_box: np.ndarray, target=None) -> np.ndarray:
        """sum_s G0(x - s) v(s) psi(s) h^3 on the target box (default: whole grid)."""
        g = self.v.grid
        if target is None:
            target = (slice(0, g.Nx),) * 3
        lo, hi = offset_range(target, self.box)
        conv = BoxConvolution(helmholtz_table(self.v.omega, g.h, lo, hi), target, self.box)
        return conv(self.vbox * psi_box)

    def dense_matrix(self) -> np.ndarray:
        return self.conv.dense(self.table) * self.vbox.ravel()[None, :]


# ------------------------------------------------------ total fields

@dataclass(frozen=True, eq=False)
class ScatteredField:
    grid: Grid3
    psi: np.ndarray
    k: np.ndarray
    iterations: int
    residual: float
    history: tuple = ()


def _check_wavevector(k, omega):
    k = np.asarray(k, dtype=float).reshape(3)
    if abs(k @ k - omega**2) > 1e-12 * max(1.0, omega**2):
        raise AdmissibilityError(f"|k|^2 = {k @ k!r} differs from E = {omega**2!r}")
    return k


def solve_total_field(v: Potential, k, solver: SolverConfig = DEFAULT_SOLVER) -> ScatteredField:
    """psi+ = exp(ikx) + int G0+(x-y) v psi+ dy on the grid."""
    k = _check_wavevector(k, v.omega)
    x = v.grid.coords()
    inc = np.exp(1j * (x @ k))
    op = HelmholtzOperator(v)
    if op.conv is None:
        return ScatteredField(v.grid, inc, k, 0, 0.0)
    inc_box = inc[op.box]
    u, info = op.solve(inc_box, solver, label="total field")
    psi = inc + op.extend(inc_box + u)
    return ScatteredField(v.grid, psi, k, info.iterations, info.residual, tuple(info.history))


def dense_total_field(v: Potential, k) -> np.ndarray:
    """Direct dense solve of the same discrete LS system (oracle for small grids)."""
    k = _check_wavevector(k, v.omega)
    x = v.grid.coords()
    inc = np.exp(1j * (x @ k))
    op = HelmholtzOperator(v)
    if op.conv is None:
        return inc
    A = np.eye(op.vbox.size) - op.dense_matrix()
    psi_box = np.linalg.solve(A, inc[op.box].ravel()).reshape(op.vbox.shape)
    return inc + op.extend(psi_box)


# ---------------------------------------------------------- near field

@dataclass(frozen=True, eq=False)
class NearFieldColumn:
    y: np.ndarray
    field: np.ndarray          # G+(x, y) on grid nodes
    trace: np.ndarray | None   # G+(x_i, y) on quadrature nodes
    info: SolveInfo


def _check_source(v: Potential, y):
    y = np.asarray(y, dtype=float).reshape(3)
    if not np.linalg.norm(y) > v.support_radius:
        raise SupportError(f"source point |y|={np.linalg.norm(y):.6g} lies inside B_r1")
    return y


def near_field_green(v: Potential, y, quad: SphereQuadrature | None = None,
                     solver: SolverConfig = DEFAULT_SOLVER) -> NearFieldColumn:
    """G+(., y) = G0(. - y) + w with w = K v (G0(. - y) + w)."""
    y = _check_source(v, y)
    g = v.grid
    x = g.coords().reshape(-1, 3)
    free = _kernels.outgoing_green(x, y[None, :], v.omega)[:, 0].reshape(g.shape)
    op = HelmholtzOperator(v)
    trace = None
    if quad is not None:
        trace = _kernels.outgoing_green(quad.nodes, y[None, :], v.omega)[:, 0]
    if op.conv is None:
        return NearFieldColumn(y, free, trace, SolveInfo())
    inc = free[op.box]
    u, info = op.solve(inc, solver, label="near-field column")
    psi = inc + u
    full = free + op.extend(psi)
    if quad is not None:
        A = _kernels.outgoing_green(quad.nodes, op.x.reshape(-1, 3), v.omega)
        trace = trace + A @ (op.vbox.ravel() * psi.ravel()) * g.h**3
    return NearFieldColumn(y, full, trace, info)


@dataclass(frozen=True, eq=False)
class NearFieldData:
    quad: SphereQuadrature
    values: np.ndarray
    omega: float
    max_residual: float = 0.0
    iterations: int = 0

    def reciprocity_defect(self) -> float:
        return float(np.linalg.norm(self.values - self.values.T) / np.linalg.norm(self.values))


def near_field_matrix(v: Potential, quad: SphereQuadrature,
                      solver: SolverConfig = DEFAULT_SOLVER) -> NearFieldData:
    """V[i, j] = G+(x_i, y_j); the diagonal holds the regular part of G+ at coincident points."""
    if not quad.r > v.support_radius:
        raise SupportError(f"sphere radius r={quad.r} must exceed r1={v.support_radius}")
    Y = quad.nodes
    V = _kernels.outgoing_green(Y, Y, v.omega)
    op = HelmholtzOperator(v)
    if op.conv is None:
        return NearFieldData(quad, V, v.omega)
    xs = op.x.reshape(-1, 3)
    A = _kernels.outgoing_green(Y, xs, v.omega)          # (nodes, box)
    inc_all = A.T.reshape(op.vbox.shape + (Y.shape[0],))  # G0(z - y_j), reciprocity of G0

    def column(j):
        inc = inc_all[..., j]
        u, info = op.solve(inc, solver, label=f"near-field column {j}")
        return (inc + u).ravel(), info

    cols = ordered_map(column, range(Y.shape[0]), solver.workers)
    Psi = np.stack([c[0] for c in cols], axis=1)
    V = V + A @ (op.vbox.ravel()[:, None] * Psi) * v.grid.h**3
    return NearFieldData(quad, V, v.omega, max(c[1].residual for c in cols),
                         sum(c[1].iterations for c in cols))


def apply_near_field_operator(data: NearFieldData, phi) -> np.ndarray:
    """(S phi)(x_i) = sum_j V[i, j] phi(y_j) w_j."""
    phi = np.asarray(phi, dtype=complex).ravel()
    if phi.size != data.quad.size:
        raise ConfigError("phi must have one value per quadrature node")
    return data.values @ (data.quad.weights * phi)


# ----------------------------------------------------------- far field

@dataclass(frozen=True, eq=False)
class FarFieldData:
    incident: np.ndarray      # unit k-hat, (Ni, 3)
    outgoing: np.ndarray      # unit l-hat, (No, 3)
    values: np.ndarray        # f(omega k_i, omega l_j), (Ni, No)
    omega: float
    w_incident: np.ndarray | None = None
    w_outgoing: np.ndarray | None = None
    max_residual: float = 0.0


def _unit_rows(d):
    d = np.atleast_2d(np.asarray(d, dtype=float))
    if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-12):
        raise AdmissibilityError("direction vectors must have unit length")
    return d


def far_field_matrix(v: Potential, omega: float, incident, outgoing=None,
                     solver: SolverConfig = DEFAULT_SOLVER, weights=None) -> FarFieldData:
    """f(k, l) = (2 pi)^-3 sum_y exp(-i l.y) v(y) psi+(y, k) h^3 for all incident x outgoing pairs."""
    if abs(omega - v.omega) > 1e-15 * max(1.0, omega):
        raise ConfigError("far-field frequency differs from the potential's frequency")
    kin = _unit_rows(incident)
    kout = kin if outgoing is None else _unit_rows(outgoing)
    wi, wo = (None, None) if weights is None else weights
    op = HelmholtzOperator(v)
    if op.conv is None:
        return FarFieldData(kin, kout, np.zeros((kin.shape[0], kout.shape[0]), complex), omega, wi, wo)
    xs = op.x.reshape(-1, 3)

    def row(i):
        inc = np.exp(1j * omega * (op.x @ kin[i]))
        u, info = op.solve(inc, solver, label=f"incident direction {i}")
        dens = op.vbox.ravel() * (inc + u).ravel()
        return _kernels.nudft(xs, -omega * kout, dens) * (v.grid.h**3 / TWO_PI3), info

    rows = ordered_map(row, range(kin.shape[0]), solver.workers)
    vals = np.stack([r[0] for r in rows], axis=0)
    return FarFieldData(kin, kout, vals, omega, wi, wo, max(r[1].residual for r in rows))


def far_field_on_sphere(v: Potential, quad: SphereQuadrature,
                        solver: SolverConfig = DEFAULT_SOLVER) -> FarFieldData:
    """f on M_omega sampled at quadrature directions (both spheres share the rule)."""
    w = quad.weights / quad.r**2
    return far_field_matrix(v, v.omega, quad.directions, None, solver, (w, w))


def far_field_pairs(v: Potential, omega: float, pairs, solver: SolverConfig = DEFAULT_SOLVER) -> np.ndarray:
    """f(omega k_i, omega l_i) for an explicit list of (k_hat, l_hat) pairs."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2, 3)
    kin, inv = np.unique(pairs[:, 0, :], axis=0, return_inverse=True)
    data = far_field_matrix(v, omega, kin, pairs[:, 1, :], solver)
    return data.values[inv.ravel(), np.arange(pairs.shape[0])]


# --------------------------------------------------------- discrepancy

def data_discrepancy(d1, d2, kind: str = "near") -> float:
    """Quadrature-weighted L2 norm of the data difference.

    near: sum_ij w_i w_j |V1 - V2|^2 on dB_r x dB_r.
    far: product measure on the two direction spheres of radius omega, i.e. omega^4 w_i w_j.
    """
    if kind == "near":
        if not isinstance(d1, NearFieldData) or not isinstance(d2, NearFieldData):
            raise ConfigError("near discrepancy needs NearFieldData on both sides")
        q1, q2 = d1.quad, d2.quad
        if (q1.r, q1.n_theta, q1.n_phi) != (q2.r, q2.n_theta, q2.n_phi) or d1.omega != d2.omega:
            raise ConfigError("near-field data use different quadratures or frequencies")
        w = q1.weights
        D = d1.values - d2.values
        return float(np.sqrt(np.sum((w[:, None] * w[None, :]) * np.abs(D) ** 2)))
    if kind == "far":
        if not isinstance(d1, FarFieldData) or not isinstance(d2, FarFieldData):
            raise ConfigError("far discrepancy needs FarFieldData on both sides")
        if (d1.values.shape != d2.values.shape or d1.omega != d2.omega
                or not np.array_equal(d1.incident, d2.incident)
                or not np.array_equal(d1.outgoing, d2.outgoing)):
            raise ConfigError("far-field data use different direction sets or frequencies")
        if d1.w_incident is None or d1.w_outgoing is None:
            raise ConfigError("far-field data carry no quadrature weights")
        w = d1.omega**4 * (d1.w_incident[:, None] * d1.w_outgoing[None, :])
        D = d1.values - d2.values
        return float(np.sqrt(np.sum(w * np.abs(D) ** 2)))
    raise ConfigError(f"unknown discrepancy kind {kind!r}")

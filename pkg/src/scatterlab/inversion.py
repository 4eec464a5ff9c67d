"""Low-pass/tail split, the rho(delta), kappa(rho) schedule, truncated Fourier reconstruction,
bound evaluators and the stability sweep."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from . import _kernels
from ._accel import ordered_map
from .errors import AdmissibilityError, ConfigError, ScatterLabError, SolverError
from .faddeev import amplitude_h, solve_cgo, theta_pair
from .forward import (DEFAULT_SOLVER, SolverConfig, SphereQuadrature, data_discrepancy,
                      far_field_on_sphere, near_field_matrix)
from .medium import (Bump, FourierLattice, FourierSample, Grid3, Potential, lattice_points,
                     make_phantom, potential_of, union_box)

log = logging.getLogger(__name__)

DELTA_FLOOR = 1e-300


# -------------------------------------------------------------- schedule

@dataclass(frozen=True)
class Schedule:
    tau: float
    r2: float
    beta: float
    delta: float
    rho: float
    eps: float
    kappa: float
    E: float

    def __post_init__(self):
        if abs(self.beta * 2.0 * self.r2 + self.tau - 1.0) > 1e-15:
            raise ConfigError("schedule violates beta * 2 r2 + tau = 1")
        if self.kappa**2 > 4.0 * (self.E + self.rho**2) * (1 + 1e-12):
            raise AdmissibilityError(
                f"kappa^2 = {self.kappa**2:.6g} > 4(E + rho^2) = {4 * (self.E + self.rho**2):.6g}; "
                "use a smaller eps")

    @property
    def log_term(self) -> float:
        return math.log(3.0 + 1.0 / self.delta)


def schedule_from_delta(delta: float, tau: float, r2: float, E: float, eps: float = 1.0,
                        rho_override: float | None = None) -> Schedule:
    """beta = (1 - tau)/(2 r2), rho = beta ln(3 + 1/delta), kappa = eps (E + rho^2)^(1/6)."""
    if not 0 < tau < 1:
        raise ConfigError("tau must lie in (0, 1)")
    if not r2 > 0 or not delta > 0 or not eps > 0:
        raise ConfigError("r2, delta and eps must be positive")
    beta = (1.0 - tau) / (2.0 * r2)
    rho = beta * math.log(3.0 + 1.0 / delta) if rho_override is None else float(rho_override)
    kappa = eps * (E + rho * rho) ** (1.0 / 6.0)
    return Schedule(tau, r2, beta, delta, rho, eps, kappa, E)


# ------------------------------------------------------- reconstruction

def _as_arrays(samples):
    if isinstance(samples, FourierLattice):
        return samples.p, samples.values, samples.spacing
    samples = list(samples)
    if not samples:
        return np.zeros((0, 3)), np.zeros(0, complex), None
    p = np.array([s.p for s in samples], dtype=float)
    vals = np.array([s.value for s in samples], dtype=complex)
    comps = np.abs(p[np.abs(p) > 1e-14])
    spacing = float(comps.min()) if comps.size else None
    return p, vals, spacing


def lowpass_reconstruct(samples, kappa: float, grid: Grid3, spacing: float | None = None) -> np.ndarray:
    """w(x) = sum_{|p| <= kappa} exp(-i p.x) w_hat(p) dp^3 on the grid nodes."""
    p, vals, inferred = _as_arrays(samples)
    spacing = spacing or inferred or np.pi / (2.0 * grid.L)
    if kappa > grid.nyquist * (1 + 1e-12):
        raise AdmissibilityError("kappa exceeds the grid Nyquist limit")
    if spacing > np.pi / (2.0 * grid.L) * (1 + 1e-9):
        raise AdmissibilityError(
            f"p-grid spacing {spacing:.6g} exceeds pi/(2L) = {np.pi / (2 * grid.L):.6g}: undersampled")
    J = np.round(p / spacing)
    if np.any(np.abs(J * spacing - p) > 1e-9 * max(1.0, spacing)):
        raise AdmissibilityError("samples do not lie on a uniform p-lattice")
    inside = (p**2).sum(1) <= kappa**2 * (1 + 1e-12)
    Jreq, _ = lattice_points(spacing, kappa)
    if Jreq.shape[0] != int(inside.sum()):
        raise AdmissibilityError(
            f"samples cover {int(inside.sum())} of the {Jreq.shape[0]} lattice points with |p| <= kappa")
    J = J[inside].astype(int)
    p = p[inside]
    c = vals[inside] * spacing**3
    if c.size == 0:
        return np.zeros(grid.shape, dtype=complex)
    P = 2.0 * np.pi / (spacing * grid.h)
    Pi = int(round(P))
    if abs(P - Pi) < 1e-9 * P and Pi >= grid.Nx:
        A = np.zeros((Pi, Pi, Pi), dtype=complex)
        np.add.at(A, (J[:, 0] % Pi, J[:, 1] % Pi, J[:, 2] % Pi), c * np.exp(1j * p.sum(1) * grid.L))
        return sfft.fftn(A, workers=1)[: grid.Nx, : grid.Nx, : grid.Nx]
    x = grid.coords().reshape(-1, 3)
    return _kernels.nudft(p, -x, c).reshape(grid.shape)


def split_integrals(diff: FourierLattice, kappa: float) -> tuple[float, float, float]:
    """(I1, I2, total): lattice quadrature of |w_hat| inside / outside |p| <= kappa."""
    a = np.abs(diff.values) * diff.spacing**3
    inside = (diff.p**2).sum(1) <= kappa**2 * (1 + 1e-12)
    i1 = float(np.sum(a[inside]))
    i2 = float(np.sum(a[~inside]))
    return i1, i2, float(np.sum(a))


def tail_bound(N_measured: float, m: float, kappa: float) -> float:
    """8 pi c4 N kappa^-(m-3) / (m - 3) with c4 N replaced by the measured ||w_hat||_m."""
    if not m > 3:
        raise ConfigError("tail bound needs m > 3")
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    return 8.0 * np.pi * N_measured * kappa ** (-(m - 3.0)) / (m - 3.0)


def theoretical_bound(delta: float, s: float, C: float) -> float:
    """C (ln(3 + 1/delta))^-s."""
    if not (delta > 0 and s > 0 and C > 0):
        raise ConfigError("theoretical bound needs delta, s, C > 0")
    return C * math.log(3.0 + 1.0 / delta) ** (-s)


def smoothness_exponent(m: float) -> float:
    return (m - 3.0) / 3.0


@dataclass
class SweepRecord:
    alpha: float
    delta_near: float
    delta_far: float
    rho: float
    kappa: float
    err_linf: float
    bound: float
    s: float
    C_fit: float = float("nan")
    pair_id: str = ""
    modes: int = 0
    dropped: int = 0
    degenerate: bool = False
    status: str = "ok"


@dataclass
class Reconstruction:
    field: np.ndarray
    samples: list
    record: SweepRecord
    max_residual: float


def reconstruct_difference(v1: Potential, v2: Potential, schedule: Schedule, p_grid=None,
                           solver: SolverConfig = DEFAULT_SOLVER, method: str = "real",
                           m: float = 6, ball_radius: float = 1.0) -> Reconstruction:
    """Estimate v2 - v1 from h2(k, l) - h1(k, l) on the p-ball |p| <= kappa and low-pass it."""
    if v1.grid != v2.grid or v1.E != v2.E:
        raise ConfigError("potentials must share grid and energy")
    g = v1.grid
    E, rho, kappa = v1.E, schedule.rho, schedule.kappa
    spacing = np.pi / (2.0 * g.L)
    if p_grid is None:
        _, p_grid = lattice_points(spacing, kappa)
    p_grid = np.atleast_2d(np.asarray(p_grid, dtype=float))
    ok = (p_grid**2).sum(1) <= 4.0 * (E + rho * rho) * (1 + 1e-12)
    dropped = int((~ok).sum())
    box = union_box(v1.box, v2.box)
    # identical potentials give bitwise identical h, so the difference is exactly zero
    same = np.array_equal(v1.samples, v2.samples)

    def one(p):
        if box is None or same:
            return 0.0 + 0.0j, 0.0
        pair = theta_pair(p, E, rho)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            c1 = solve_cgo(v1, pair.k, solver, box=box, method=method)
            c2 = solve_cgo(v2, pair.k, solver, box=box, method=method)
        return amplitude_h(v2, c2, pair.l) - amplitude_h(v1, c1, pair.l), max(c1.residual, c2.residual)

    res = ordered_map(one, list(p_grid[ok]), solver.workers)
    it = iter(res)
    # inadmissible p contribute zero to the low-pass synthesis
    vals = [next(it)[0] if flag else 0.0 for flag in ok]
    samples = [FourierSample(tuple(p), complex(val)) for p, val in zip(p_grid, vals)]
    rec = lowpass_reconstruct(samples, kappa, g, spacing)
    truth = v2.samples - v1.samples
    ball = g.ball_mask(ball_radius, strict=False)
    err = float(np.max(np.abs(truth - rec)[ball])) if ball.any() else 0.0
    s = smoothness_exponent(m)
    record = SweepRecord(alpha=float("nan"), delta_near=schedule.delta, delta_far=float("nan"),
                         rho=rho, kappa=kappa, err_linf=err,
                         bound=theoretical_bound(schedule.delta, s, 1.0), s=s,
                         modes=len(samples) - dropped, dropped=dropped)
    return Reconstruction(rec, samples, record, max((r[1] for r in res), default=0.0))


# ------------------------------------------------------------------ sweep

@dataclass(frozen=True)
class SweepConfig:
    grid: Grid3
    r1: float
    omega: float
    base: tuple
    perturbation: tuple
    alphas: tuple
    m: int = 6
    tau: float = 0.5
    r2: float = 2.0
    eps: float = 1.0
    quad: SphereQuadrature = field(default_factory=lambda: SphereQuadrature(1.25, 16, 32))
    far_quad: SphereQuadrature | None = field(default_factory=lambda: SphereQuadrature(1.0, 8, 16))
    solver: SolverConfig = DEFAULT_SOLVER
    method: str = "real"
    workers: int = 1
    pair_id: str = "pair"


@dataclass
class SweepResult:
    records: list
    C_fit: float
    s: float
    failures: list
    envelope_ok: bool
    monotone_ok: bool


def _rung_phantom(cfg: SweepConfig, alpha: float):
    bumps = tuple(cfg.base) + tuple(b.scaled(alpha) for b in cfg.perturbation if alpha != 0)
    return make_phantom(bumps, cfg.grid, cfg.r1, cfg.m)


def envelope_fit(records: Sequence[SweepRecord]) -> float:
    """Smallest C with err <= C (ln(3 + 1/delta))^-s on every non-degenerate rung."""
    ratios = [r.err_linf / r.bound for r in records if not r.degenerate and r.status == "ok"]
    return float(max(ratios)) if ratios else float("nan")


def stability_sweep(cfg: SweepConfig) -> SweepResult:
    """Per alpha: near/far data for base vs. base + alpha * perturbation, delta, schedule, reconstruction."""
    alphas = sorted(float(a) for a in cfg.alphas)
    positive = [a for a in alphas if a > 0]
    if len(positive) >= 2 and max(positive) / min(positive) < 1e4 * (1 - 1e-12):
        raise ConfigError("alpha ladder must span at least four orders of magnitude")
    solver = replace(cfg.solver, workers=1)
    n1 = make_phantom(tuple(cfg.base), cfg.grid, cfg.r1, cfg.m)
    v1 = potential_of(n1, cfg.omega)
    near1 = near_field_matrix(v1, cfg.quad, replace(cfg.solver, workers=cfg.workers))
    far1 = far_field_on_sphere(v1, cfg.far_quad, solver) if cfg.far_quad else None
    s = smoothness_exponent(cfg.m)

    def rung(alpha):
        try:
            v2 = potential_of(_rung_phantom(cfg, alpha), cfg.omega)
            near2 = near_field_matrix(v2, cfg.quad, solver)
            dn = data_discrepancy(near1, near2, "near")
            df = float("nan")
            if far1 is not None:
                df = data_discrepancy(far1, far_field_on_sphere(v2, cfg.far_quad, solver), "far")
            degenerate = dn == 0.0
            delta = max(dn, DELTA_FLOOR)
            sch = schedule_from_delta(delta, cfg.tau, cfg.r2, v1.E, cfg.eps)
            rec = reconstruct_difference(v1, v2, sch, solver=solver, method=cfg.method, m=cfg.m)
            r = rec.record
            r.alpha, r.delta_near, r.delta_far = alpha, delta, df
            r.degenerate, r.pair_id = degenerate, cfg.pair_id
            return r
        except ScatterLabError as exc:
            log.warning("rung alpha=%g aborted: %s", alpha, exc)
            return SweepRecord(alpha, float("nan"), float("nan"), float("nan"), float("nan"),
                               float("nan"), float("nan"), s, pair_id=cfg.pair_id, status=f"failed: {exc}")

    records = ordered_map(rung, alphas, cfg.workers)
    records.sort(key=lambda r: r.alpha)
    C = envelope_fit(records)
    good = [r for r in records if r.status == "ok"]
    for r in good:
        r.C_fit = C
        if np.isfinite(C) and C > 0:
            r.bound = theoretical_bound(r.delta_near, s, C)
    fit = [r for r in good if not r.degenerate]
    envelope_ok = all(r.err_linf <= r.bound * (1 + 1e-12) for r in fit)
    by_delta = sorted(fit, key=lambda r: r.delta_near)
    monotone_ok = all(a.err_linf <= b.err_linf for a, b in zip(by_delta, by_delta[1:]))
    failures = [r for r in records if r.status != "ok"]
    return SweepResult(records, C, s, failures, envelope_ok, monotone_ok)

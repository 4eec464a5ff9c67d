"""Faddeev Green function, CGO solutions mu(x, k), generalized amplitude h(k, l).

Kernel evaluation. With b = Im k, rho = |b| and a = Re k, the Faddeev
function factors as g(x, k) = exp(-i a.x) F_b(x), where

    F_b(x) = (2 pi)^-3 int exp(i eta.x) (-1) / (eta^2 - (E + rho^2) + 2 i b.eta) d eta

is real and depends on x only through z = x.b/rho and r = |x - z b/rho|.
Closing the eta_3 contour and subtracting the Laplace part gives

    F_b(x) = -(pi/|x| + R(r, z)) / (4 pi^2)

with a smooth remainder R evaluated by Gauss-Legendre panels in
`_kernels.faddeev_remainder`. A point-sampled spectral synthesis of the
symbol is kept as method="spectral".
"""
from __future__ import annotations

import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from . import _kernels
from ._accel import ordered_map
from ._solver import CUBE_INV_R, BoxConvolution, SolveInfo, offset_lattice, offset_range, solve_second_kind
from .errors import AdmissibilityError, ConfigError, SupportError
from .forward import DEFAULT_SOLVER, SolverConfig
from .medium import FourierSample, Grid3, Potential, union_box

TWO_PI3 = (2.0 * np.pi) ** 3
REFERENCE_AXES = (np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


# -------------------------------------------------------- wave vectors

@dataclass(frozen=True, eq=False)
class ComplexWaveVector:
    re: np.ndarray
    im: np.ndarray
    E: float

    def __post_init__(self):
        re = np.asarray(self.re, dtype=float).reshape(3)
        im = np.asarray(self.im, dtype=float).reshape(3)
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        scale = max(1.0, re @ re + im @ im)
        if abs(re @ re - im @ im - self.E) > 1e-12 * scale or abs(re @ im) > 1e-12 * scale:
            raise AdmissibilityError("wave vector violates k.k = E")

    @property
    def vector(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def modulus(self) -> float:
        return float(np.sqrt(self.re @ self.re + self.im @ self.im))

    @property
    def rho(self) -> float:
        return float(np.linalg.norm(self.im))

    def __neg__(self) -> "ComplexWaveVector":
        return ComplexWaveVector(-self.re, -self.im, self.E)


@dataclass(frozen=True, eq=False)
class ThetaPair:
    k: ComplexWaveVector
    l: ComplexWaveVector
    p: np.ndarray
    rho: float

    def __post_init__(self):
        if not np.allclose(self.k.im, self.l.im, rtol=0, atol=1e-12 * max(1.0, self.rho)):
            raise AdmissibilityError("Im k must equal Im l")


def theta_pair(p, E: float, rho: float, frame_seed: float = 0.0) -> ThetaPair:
    """k = p/2 + a + i b, l = k - p with a, b, p mutually orthogonal, |b| = rho.

    Frame rule: b points along the component orthogonal to p of the first
    reference axis (e3, e2, e1) making an angle > 1e-6 with p; a completes
    the right-handed frame (p_hat, a_hat, b_hat). For p = 0, p_hat = e3.
    `frame_seed` rotates (a, b) about p by that angle (radians).
    """
    p = np.asarray(p, dtype=float).reshape(3)
    if not rho > 0:
        raise AdmissibilityError("rho must be positive")
    p2 = float(p @ p)
    if p2 > 4.0 * (E + rho * rho) * (1 + 1e-12):
        raise AdmissibilityError(f"p^2 = {p2:.6g} exceeds 4(E + rho^2) = {4 * (E + rho * rho):.6g}")
    pmax = float(np.max(np.abs(p)))
    if pmax > 0:
        ph = p / pmax              # rescale first: p.p underflows for |p| < 1e-154
        ph /= np.linalg.norm(ph)
    else:
        ph = np.array([0.0, 0.0, 1.0])
    for ax in REFERENCE_AXES:
        c = abs(ax @ ph)
        if np.arccos(min(1.0, c)) > 1e-6:
            bh = ax - (ax @ ph) * ph
            bh /= np.linalg.norm(bh)
            bh -= (bh @ ph) * ph   # second pass: p nearly along ax cancels most of ax
            bh /= np.linalg.norm(bh)
            break
    ah = np.cross(bh, ph)
    if frame_seed:
        c, s = np.cos(frame_seed), np.sin(frame_seed)
        ah, bh = c * ah + s * bh, -s * ah + c * bh
    amod = np.sqrt(max(E + rho * rho - p2 / 4.0, 0.0))
    kre = p / 2.0 + amod * ah
    kim = rho * bh
    k = ComplexWaveVector(kre, kim, E)
    l = ComplexWaveVector(kre - p, kim, E)
    return ThetaPair(k, l, p, float(rho))


# ------------------------------------------------------- kernel tables

class _TableCache:
    def __init__(self, size: int = 8):
        self.size = size
        self.data: OrderedDict = OrderedDict()
        self.lock = threading.Lock()

    def get(self, key):
        with self.lock:
            if key in self.data:
                self.data.move_to_end(key)
                return self.data[key]
        return None

    def put(self, key, value):
        with self.lock:
            self.data[key] = value
            self.data.move_to_end(key)
            while len(self.data) > self.size:
                self.data.popitem(last=False)


_CACHE = _TableCache()


def clear_kernel_cache():
    _CACHE.data.clear()


def _real_F_table(b: np.ndarray, E: float, h: float, lo, hi, cutoff: float) -> np.ndarray:
    """h^3 F_b(h o) on integer offsets lo..hi (origin: cell average of the singular part)."""
    rho = float(np.linalg.norm(b))
    bh = b / rho
    o = offset_lattice(lo, hi).astype(float)
    shape = o.shape[:-1]
    x = h * o.reshape(-1, 3)
    d = np.sqrt((x**2).sum(1))
    z = x @ bh
    r = np.sqrt(np.maximum(d * d - z * z, 0.0))
    F = np.empty(d.size)
    nz = d > 0
    # (r, z) pairs repeat when b is aligned with a lattice symmetry
    key = np.round(np.stack([r[nz], z[nz]], 1) / h, 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    rule = _kernels.remainder_rule(rho, E, float(d.max()) if d.size else 1.0, cutoff)
    R = _kernels.faddeev_remainder(uniq[:, 0] * h, uniq[:, 1] * h, rule)[inv.ravel()]
    F[nz] = -(np.pi / d[nz] + R) / (4.0 * np.pi**2)
    F[~nz] = -CUBE_INV_R / (4.0 * np.pi * h) + rho / (4.0 * np.pi)
    return (F * h**3).reshape(shape)


def faddeev_F_table(b, E: float, h: float, lo, hi, cutoff: float = 160.0) -> np.ndarray:
    """Cached h^3 F_b on offsets; a table for -b is reused by reflecting offsets."""
    b = np.asarray(b, dtype=float)
    lo = tuple(int(a) for a in lo)
    hi = tuple(int(a) for a in hi)
    key = (tuple(b.tolist()), float(E), float(h), lo, hi, float(cutoff))
    tab = _CACHE.get(key)
    if tab is not None:
        return tab
    mkey = (tuple((-b).tolist()), float(E), float(h), tuple(-a for a in hi), tuple(-a for a in lo), float(cutoff))
    mtab = _CACHE.get(mkey)
    if mtab is not None:
        return mtab[::-1, ::-1, ::-1]
    tab = _real_F_table(b, E, h, lo, hi, cutoff)
    tab.setflags(write=False)
    _CACHE.put(key, tab)
    return tab


class SpectralTable(NamedTuple):
    table: np.ndarray
    floored: int
    total: int


def spectral_g_table(k: ComplexWaveVector, h: float, lo, hi, floor: float = 1e-12) -> SpectralTable:
    """h^3 g(h o, k) by discrete synthesis of -1/(xi^2 + 2 k.xi) on a padded frequency grid."""
    span = max(int(b) - int(a) + 1 for a, b in zip(lo, hi))
    P = sfft.next_fast_len(2 * span)
    dxi = 2.0 * np.pi / (P * h)
    m = np.round(sfft.fftfreq(P) * P)
    xi = dxi * m
    X, Y, Z = np.meshgrid(xi, xi, xi, indexing="ij", sparse=True)
    kv = k.vector
    den = X**2 + Y**2 + Z**2 + 2.0 * (kv[0] * X + kv[1] * Y + kv[2] * Z)
    small = np.abs(den) < floor
    # the symbol's zero set (a circle through xi = 0) has measure zero: drop those nodes
    S = np.where(small, 0.0, -1.0 / np.where(small, 1.0, den))
    nyq = np.abs(m) == P // 2
    S[nyq, :, :] = 0
    S[:, nyq, :] = 0
    S[:, :, nyq] = 0
    g = sfft.ifftn(S, workers=1)   # = h^3 * (2 pi)^-3 sum exp(i xi x) S dxi^3
    o = offset_lattice(lo, hi)
    tab = g[o[..., 0] % P, o[..., 1] % P, o[..., 2] % P]
    return SpectralTable(tab, int(small.sum()), int(P**3))


def _g_table(k: ComplexWaveVector, h: float, lo, hi, method: str, cutoff: float):
    if method == "real":
        F = faddeev_F_table(k.im, k.E, h, lo, hi, cutoff)
        x = h * offset_lattice(lo, hi)
        return np.exp(-1j * (x @ k.re)) * F, 0
    if method == "spectral":
        st = spectral_g_table(k, h, lo, hi)
        return st.table, st.floored
    raise ConfigError(f"unknown Faddeev kernel method {method!r}")


@dataclass(frozen=True, eq=False)
class FaddeevKernel:
    grid: Grid3
    k: ComplexWaveVector
    values: np.ndarray      # g(x, k) at grid nodes
    method: str
    floored: int = 0


def faddeev_green_kernel(k: ComplexWaveVector, grid: Grid3, method: str = "real",
                         cutoff: float = 160.0) -> FaddeevKernel:
    """g(., k) at the grid nodes; the origin node holds the cell-averaged value."""
    if not k.rho > 0:
        raise AdmissibilityError("Im k = 0: the Faddeev symbol zeros are not integrable")
    half = grid.Nx // 2
    lo, hi = (-half,) * 3, (half - 1,) * 3
    tab, floored = _g_table(k, grid.h, lo, hi, method, cutoff)
    if floored:
        warnings.warn(f"Faddeev symbol zero at {floored} frequency nodes (dropped)", RuntimeWarning, stacklevel=2)
    return FaddeevKernel(grid, k, tab / grid.h**3, method, floored)


# ----------------------------------------------------------- CGO fields

@dataclass(frozen=True, eq=False)
class CgoField:
    """mu(., k) on the solve box; `extend` evaluates it elsewhere via the integral equation."""

    grid: Grid3
    k: ComplexWaveVector
    box: tuple
    mu_box: np.ndarray
    residual: float
    iterations: int
    vbox: np.ndarray
    method: str = "real"
    cutoff: float = 160.0
    below_rho_min: bool = False

    @property
    def sup_deviation(self) -> float:
        return float(np.max(np.abs(self.mu_box - 1.0))) if self.mu_box.size else 0.0

    @property
    def sup_mu(self) -> float:
        return float(np.max(np.abs(self.mu_box))) if self.mu_box.size else 1.0

    def extend(self, target) -> np.ndarray:
        """mu on an index box: 1 + sum_s g(x - s, k) v(s) mu(s) h^3."""
        shape = tuple(s.stop - s.start for s in target)
        if self.box is None:
            return np.ones(shape, dtype=complex)
        lo, hi = offset_range(target, self.box)
        tab, _ = _g_table(self.k, self.grid.h, lo, hi, self.method, self.cutoff)
        conv = BoxConvolution(tab, target, self.box)
        return 1.0 + conv(self.vbox * self.mu_box)

    def psi(self, target) -> np.ndarray:
        """psi = exp(i k.x) mu on an index box."""
        x = self.grid.coords(target)
        return np.exp(1j * (x @ self.k.vector)) * self.extend(target)


def _rho_min_default(E: float) -> float:
    return 0.5 * max(1.0, np.sqrt(E))


def solve_cgo(v: Potential, k: ComplexWaveVector, solver: SolverConfig = DEFAULT_SOLVER,
              box=None, method: str = "real", cutoff: float = 160.0,
              rho_min: float | None = None) -> CgoField:
    """mu = 1 + int g(x - y, k) v(y) mu(y) dy on the support box (mu-form of the CGO equation)."""
    if not k.rho > 0:
        raise AdmissibilityError("Im k = 0: no CGO equation")
    if abs(k.E - v.E) > 1e-12 * max(1.0, v.E):
        raise AdmissibilityError("k.k must equal the potential's energy")
    if rho_min is None:
        rho_min = _rho_min_default(v.E)
    below = k.rho < rho_min
    if below:
        warnings.warn(f"rho={k.rho:.4g} below rho_min={rho_min:.4g}: contraction not guaranteed",
                      RuntimeWarning, stacklevel=2)
    box = v.box if box is None else box
    if box is None:
        return CgoField(v.grid, k, None, np.ones((0, 0, 0), complex), 0.0, 0,
                        np.zeros((0, 0, 0)), method, cutoff, below)
    vbox = np.asarray(v.samples[box])
    if v.box is not None and union_box(v.box, box) != tuple(box):
        raise SupportError("solve box does not contain the support of v")
    lo, hi = offset_range(box, box)
    tab, floored = _g_table(k, v.grid.h, lo, hi, method, cutoff)
    conv = BoxConvolution(tab, box, box)
    ones = np.ones(vbox.shape, dtype=complex)
    rhs = conv(vbox * ones)
    u, info = solve_second_kind(conv, vbox, rhs, tol=solver.tol, maxiter=solver.cycles,
                                restart=solver.restart, label=f"CGO rho={k.rho:.4g}")
    mu = ones + u.reshape(vbox.shape)
    res = mu - 1.0 - conv(vbox * mu)
    resid = float(np.linalg.norm(res) / np.sqrt(mu.size))
    return CgoField(v.grid, k, tuple(box), mu, resid, info.iterations, vbox, method, cutoff, below)


def amplitude_h(v: Potential, cgo: CgoField, l: ComplexWaveVector) -> complex:
    """h(k, l) = (2 pi)^-3 sum exp(-i l.x) v psi(x, k) h^3 = (2 pi)^-3 sum exp(i p.x) v mu h^3."""
    k = cgo.k
    p = k.vector - l.vector
    if np.max(np.abs(p.imag)) > 1e-12 * max(1.0, k.rho):
        raise AdmissibilityError("(k, l) is not a Theta pair: k - l is not real")
    if v.box is None:
        return 0.0 + 0.0j
    if cgo.box is None or union_box(cgo.box, v.box) != cgo.box:
        raise SupportError("CGO solve box does not cover the support of v")
    x = v.grid.coords(cgo.box)
    vb = np.asarray(v.samples[cgo.box])
    dens = np.exp(1j * (x @ p.real)) * vb * cgo.mu_box
    return complex(dens.sum() * v.grid.h**3 / TWO_PI3)


@dataclass(frozen=True)
class HatEstimate:
    p: tuple
    value: complex
    rho: float
    E: float
    residual: float
    sup_deviation: float

    def as_sample(self) -> FourierSample:
        return FourierSample(self.p, self.value)


def hat_v_from_h(v: Potential, p, E: float, rho: float, solver: SolverConfig = DEFAULT_SOLVER,
                 method: str = "real", frame_seed: float = 0.0, box=None) -> HatEstimate:
    """h(k, l) at the Theta pair (p, E, rho): the estimate of v_hat(p)."""
    pair = theta_pair(p, E, rho, frame_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cgo = solve_cgo(v, pair.k, solver, box=box, method=method)
    val = amplitude_h(v, cgo, pair.l)
    return HatEstimate(tuple(np.asarray(p, float).tolist()), val, float(rho), float(E),
                       cgo.residual, cgo.sup_deviation)


def h_samples(v: Potential, P, rho: float, solver: SolverConfig = DEFAULT_SOLVER,
              method: str = "real") -> list[HatEstimate]:
    """hat_v_from_h for many p (rows of P), parallel over p, ordered output."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return ordered_map(lambda p: hat_v_from_h(v, p, v.E, rho, solver, method), list(P), solver.workers)

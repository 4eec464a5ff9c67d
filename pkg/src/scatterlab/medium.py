"""Refractive-index phantoms, potentials, Sobolev and weighted norms, Fourier samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import correlate1d

from . import _kernels
from .errors import AdmissibilityError, ConfigError, SupportError

TWO_PI3 = (2.0 * np.pi) ** 3


# ------------------------------------------------------------------ grid

@dataclass(frozen=True)
class Grid3:
    """Uniform cube [-L, L)^3 with nodes -L + i h, i = 0..Nx-1 (the origin is a node)."""

    L: float
    Nx: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ConfigError(f"grid half extent must be positive, got L={self.L}")
        if int(self.Nx) != self.Nx or self.Nx < 8 or self.Nx % 2:
            raise ConfigError(f"grid Nx must be an even integer >= 8, got {self.Nx}")
        object.__setattr__(self, "Nx", int(self.Nx))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.Nx

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nx, self.Nx, self.Nx)

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.Nx)

    @property
    def nyquist(self) -> float:
        return np.pi / self.h

    def index_axis(self) -> np.ndarray:
        """Integer lattice coordinates i - Nx/2 (node = h * index)."""
        return np.arange(self.Nx) - self.Nx // 2

    def coords(self, sl=None) -> np.ndarray:
        """Node coordinates, shape (..., 3); optionally restricted to a tuple of slices."""
        ax = self.axis
        if sl is None:
            sl = (slice(None),) * 3
        X, Y, Z = np.meshgrid(ax[sl[0]], ax[sl[1]], ax[sl[2]], indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt((self.coords() ** 2).sum(-1))

    def ball_mask(self, r: float, strict: bool = True) -> np.ndarray:
        return self.radius < r if strict else self.radius <= r

    def box_around(self, r: float) -> tuple[slice, slice, slice]:
        """Smallest index box containing every node with |x_i| <= r on each axis."""
        idx = np.nonzero(np.abs(self.axis) <= r + 1e-12)[0]
        if idx.size == 0:
            raise SupportError(f"radius {r} selects no grid nodes")
        s = slice(int(idx[0]), int(idx[-1]) + 1)
        return (s, s, s)

    def describe(self) -> dict:
        return {"L": self.L, "Nx": self.Nx, "h": self.h}


def support_box(*fields: np.ndarray) -> tuple[slice, slice, slice] | None:
    """Bounding index box of the union of nonzero nodes, or None if all vanish."""
    mask = np.zeros(fields[0].shape, dtype=bool)
    for f in fields:
        mask |= f != 0
    if not mask.any():
        return None
    out = []
    for ax in range(3):
        other = tuple(a for a in range(3) if a != ax)
        nz = np.nonzero(mask.any(axis=other))[0]
        out.append(slice(int(nz[0]), int(nz[-1]) + 1))
    return tuple(out)


def union_box(*boxes) -> tuple[slice, slice, slice] | None:
    boxes = [b for b in boxes if b is not None]
    if not boxes:
        return None
    return tuple(
        slice(min(b[a].start for b in boxes), max(b[a].stop for b in boxes)) for a in range(3)
    )


# --------------------------------------------------------------- phantom

@dataclass(frozen=True)
class Bump:
    """One inhomogeneity: amplitude * profile(|x - center| / radius).

    order=None is the smooth bump exp(-a^2/(a^2 - |x-c|^2)); an integer
    order q selects the finite-smoothness profile (1 - |x-c|^2/a^2)^q,
    whose Fourier transform decays like |p|^-(q+2).
    """

    center: tuple[float, float, float]
    radius: float
    amplitude: complex
    order: int | None = None

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        if len(c) != 3:
            raise ConfigError("bump center must have three coordinates")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ConfigError(f"bump radius must be positive, got {self.radius}")
        if self.order is not None and (int(self.order) != self.order or self.order < 1):
            raise ConfigError(f"bump order must be a positive integer, got {self.order}")

    def profile(self, x: np.ndarray) -> np.ndarray:
        d2 = ((x - np.asarray(self.center)) ** 2).sum(-1)
        a2 = self.radius**2
        inside = d2 < a2
        out = np.zeros(d2.shape)
        if self.order is None:
            out[inside] = np.exp(-a2 / (a2 - d2[inside]))
        else:
            out[inside] = (1.0 - d2[inside] / a2) ** int(self.order)
        return out

    def scaled(self, alpha: float) -> "Bump":
        return Bump(self.center, self.radius, self.amplitude * alpha, self.order)


@dataclass(frozen=True, eq=False)
class RefractiveIndex:
    grid: Grid3
    samples: np.ndarray
    support_radius: float
    smoothness: int = 6
    norm_budget: float | None = None
    bumps: tuple[Bump, ...] = ()

    def __post_init__(self):
        if self.smoothness <= 3:
            raise ConfigError(f"smoothness m must exceed 3, got {self.smoothness}")
        if self.samples.shape != self.grid.shape:
            raise ConfigError("refractive index samples do not match the grid shape")
        if np.any(self.samples.imag < 0):
            raise AdmissibilityError("Im n < 0 at some node")
        outside = self.grid.radius >= self.support_radius
        if np.any(self.samples[outside] != 1.0):
            raise SupportError(f"n differs from 1 at a node with |x| >= r1={self.support_radius}")
        self.samples.setflags(write=False)

    def certified_norm(self) -> float:
        """C_n: quadrature value of ||n - 1||_{m,1} unless a budget was given."""
        if self.norm_budget is not None:
            return float(self.norm_budget)
        return sobolev_norm(self.samples - 1.0, self.grid, self.smoothness).value


def make_phantom(bumps: Iterable[Bump], grid: Grid3, r1: float, m: int = 6,
                 norm_budget: float | None = None) -> RefractiveIndex:
    """n = 1 + sum of bumps, after checking each bump ball lies in B_{r1} and Im n >= 0."""
    bumps = tuple(bumps)
    if not grid.L > r1:
        raise ConfigError(f"grid half extent L={grid.L} must exceed r1={r1}")
    for b in bumps:
        reach = float(np.linalg.norm(b.center)) + b.radius
        if reach > r1 * (1 + 1e-12):
            raise SupportError(
                f"bump at {b.center} with radius {b.radius} reaches |x|={reach:.6g} > r1={r1}")
        if b.amplitude.imag < 0:
            raise AdmissibilityError(f"bump at {b.center} has amp_im < 0, giving Im n < 0")
    x = grid.coords()
    n = np.ones(grid.shape, dtype=complex)
    for b in bumps:
        n += complex(b.amplitude) * b.profile(x)
    return RefractiveIndex(grid, n, float(r1), int(m), norm_budget, bumps)


@dataclass(frozen=True, eq=False)
class Potential:
    grid: Grid3
    samples: np.ndarray
    E: float
    omega: float
    support_radius: float

    def __post_init__(self):
        if abs(self.E - self.omega**2) > 0:
            raise ConfigError("potential energy must equal omega^2")
        self.samples.setflags(write=False)

    @cached_property
    def box(self):
        return support_box(self.samples)

    @property
    def is_zero(self) -> bool:
        return self.box is None

    def __sub__(self, other: "Potential") -> "Potential":
        _check_same(self, other)
        return Potential(self.grid, self.samples - other.samples, self.E, self.omega,
                         max(self.support_radius, other.support_radius))


def _check_same(a: Potential, b: Potential):
    if a.grid != b.grid or a.E != b.E:
        raise ConfigError("potentials live on different grids or energies")


def potential_of(n: RefractiveIndex, omega: float) -> Potential:
    if not omega > 0:
        raise ConfigError(f"omega must be positive, got {omega}")
    omega = float(omega)
    E = omega * omega
    return Potential(n.grid, E * (1.0 - n.samples), E, omega, n.support_radius)


# ---------------------------------------------------------- Sobolev norm

def fd_weights(order: int, accuracy: int = 4) -> np.ndarray:
    """Centered finite-difference weights (Fornberg) for d^order/dx^order."""
    if order == 0:
        return np.array([1.0])
    half = (order + 1) // 2 - 1 + accuracy // 2
    xs = np.arange(-half, half + 1, dtype=float)
    n = xs.size
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i]
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


class SobolevNorm(NamedTuple):
    value: float
    coarse: bool


def sobolev_norm(w: np.ndarray, grid: Grid3, m: int, coarse_threshold: float = 0.5) -> SobolevNorm:
    """max_{|J|<=m} sum_nodes |d^J w| h^3 with 4th-order centered differences.

    Zero padding outside the grid is exact for fields supported in the
    interior. `coarse` flags m*h > coarse_threshold (derivatives of order m
    are then under-resolved for features of unit scale).
    """
    if m < 0:
        raise ConfigError("Sobolev order must be >= 0")
    h = grid.h
    w = np.asarray(w)
    stencils = [fd_weights(j) / h**j for j in range(m + 1)]

    def deriv(f, j, ax):
        if j == 0:
            return f
        if np.iscomplexobj(f):
            return (correlate1d(f.real, stencils[j], axis=ax, mode="constant")
                    + 1j * correlate1d(f.imag, stencils[j], axis=ax, mode="constant"))
        return correlate1d(f, stencils[j], axis=ax, mode="constant")

    best = 0.0
    for j1 in range(m + 1):
        f1 = deriv(w, j1, 0)
        for j2 in range(m + 1 - j1):
            f2 = deriv(f1, j2, 1)
            for j3 in range(m + 1 - j1 - j2):
                val = float(np.abs(deriv(f2, j3, 2)).sum() * h**3)
                best = max(best, val)
    return SobolevNorm(best, bool(m * h > coarse_threshold))


# -------------------------------------------------------- Fourier samples

@dataclass(frozen=True)
class FourierSample:
    p: tuple[float, float, float]
    value: complex

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("Fourier sample value must be finite")


def _support_nodes(v: Potential):
    box = v.box
    if box is None:
        return np.zeros((0, 3)), np.zeros(0, dtype=complex)
    x = v.grid.coords(box).reshape(-1, 3)
    c = v.samples[box].ravel()
    keep = c != 0
    return x[keep], c[keep]


def fourier_hat_many(v: Potential, P: np.ndarray) -> np.ndarray:
    """(2 pi)^-3 sum_x exp(i p.x) v(x) h^3 for each row of P (trapezoid rule)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] and np.max(np.linalg.norm(P, axis=1)) > v.grid.nyquist * (1 + 1e-12):
        raise AdmissibilityError(f"|p| exceeds the grid Nyquist limit {v.grid.nyquist:.6g}")
    x, c = _support_nodes(v)
    if c.size == 0:
        return np.zeros(P.shape[0], dtype=complex)
    return _kernels.nudft(x, P, c) * (v.grid.h**3 / TWO_PI3)


def fourier_hat(v: Potential, p) -> FourierSample:
    p = np.asarray(p, dtype=float).reshape(3)
    val = fourier_hat_many(v, p[None, :])[0]
    if not np.any(v.samples.imag):
        # conjugate symmetry is exact for real v: evaluate both signs, keep the symmetric part
        val_m = fourier_hat_many(v, -p[None, :])[0]
        val = 0.5 * (val + np.conj(val_m))
    return FourierSample(tuple(p), complex(val))


@dataclass(frozen=True, eq=False)
class FourierLattice:
    """Samples on the cubic lattice p = j * spacing restricted to |p| <= kmax."""

    p: np.ndarray
    index: np.ndarray
    values: np.ndarray
    spacing: float
    kmax: float

    def samples(self) -> list[FourierSample]:
        return [FourierSample(tuple(pp), complex(vv)) for pp, vv in zip(self.p, self.values)]


def lattice_points(spacing: float, kmax: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer indices j and p = j*spacing with |p| <= kmax, in a fixed (lexicographic) order."""
    jmax = int(np.floor(kmax / spacing + 1e-9))
    j = np.arange(-jmax, jmax + 1)
    J = np.stack(np.meshgrid(j, j, j, indexing="ij"), -1).reshape(-1, 3)
    keep = (J**2).sum(1) * spacing**2 <= kmax**2 * (1 + 1e-12)
    J = J[keep]
    return J, J * spacing


def fourier_lattice(v: Potential, kmax: float | None = None) -> FourierLattice:
    """fourier_hat on the lattice of spacing pi/(2L) via one zero-padded FFT of size 2Nx."""
    g = v.grid
    if kmax is None:
        kmax = g.nyquist
    if kmax > g.nyquist * (1 + 1e-12):
        raise AdmissibilityError("kmax exceeds the grid Nyquist limit")
    P = 2 * g.Nx
    spacing = 2.0 * np.pi / (P * g.h)
    J, p = lattice_points(spacing, kmax)
    full = sfft.ifftn(np.asarray(v.samples, dtype=complex), s=(P, P, P), workers=1) * P**3
    vals = full[J[:, 0] % P, J[:, 1] % P, J[:, 2] % P]
    # node x_i = -L + i h contributes exp(i p (-L)) on top of the DFT phase
    vals = vals * np.exp(-1j * p.sum(1) * g.L) * (g.h**3 / TWO_PI3)
    return FourierLattice(p, J, vals, spacing, float(kmax))


def weighted_sup_norm(samples, mu: float) -> float:
    """max (1 + |p|)^mu |value| over samples (FourierSample list or FourierLattice)."""
    if not mu > 0:
        raise ConfigError("weight exponent mu must be positive")
    if isinstance(samples, FourierLattice):
        p, vals = samples.p, samples.values
    else:
        samples = list(samples)
        if not samples:
            raise ConfigError("weighted_sup_norm needs at least one sample")
        p = np.array([s.p for s in samples], dtype=float)
        vals = np.array([s.value for s in samples], dtype=complex)
    return float(np.max((1.0 + np.linalg.norm(p, axis=1)) ** mu * np.abs(vals)))


# ------------------------------------------------------ reference phantoms

# (1 - r^2/a^2)^4 profiles: exactly H^6 regular, and resolved on the default h = 0.125 grid
# (the exp(-a^2/(a^2 - r^2)) bump of the same radius is too steep there to round-trip within 1%)
STANDARD_BUMP = Bump((0.0, 0.0, 0.0), 0.8, -0.1, order=4)
STANDARD_PERTURBATION = Bump((0.15, 0.0, 0.0), 0.6, -0.05, order=4)


def standard_pair(grid: Grid3, r1: float = 1.0, m: int = 6) -> tuple[RefractiveIndex, RefractiveIndex]:
    """The reference bump and the same bump plus an off-centre perturbation."""
    n1 = make_phantom([STANDARD_BUMP], grid, r1, m)
    n2 = make_phantom([STANDARD_BUMP, STANDARD_PERTURBATION], grid, r1, m)
    return n1, n2

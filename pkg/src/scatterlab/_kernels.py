"""Hot loops with a numba path and a numpy path (selected by SCATTERLAB_NUMBA).

Three kernels:
  * faddeev_remainder: the smooth remainder of the contour-reduced Hankel
    representation of the exponentially weighted Faddeev function,
  * nudft: sums  sum_m exp(i p_k . x_m) c_m  for scattered p and x,
  * outgoing_green: the outgoing free kernel -exp(i w |x-y|)/(4 pi |x-y|).
"""
from __future__ import annotations

import ctypes
from dataclasses import dataclass

import numpy as np
import scipy.special as sc

from ._accel import NUMBA_AVAILABLE, numba_enabled

TWO_PI = 2.0 * np.pi

if NUMBA_AVAILABLE:
    import numba
    from numba.extending import get_cython_function_address

    _j0_addr = get_cython_function_address("scipy.special.cython_special", "j0")
    _j0 = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)(_j0_addr)


def gauss_panels(a: float, b: float, width: float, order: int = 16):
    """Composite Gauss-Legendre nodes/weights on [a, b] with panels <= width."""
    n = max(1, int(np.ceil((b - a) / width - 1e-12)))
    x, w = np.polynomial.legendre.leggauss(order)
    e = np.linspace(a, b, n + 1)
    mid = 0.5 * (e[:-1] + e[1:])[:, None]
    half = 0.5 * (e[1:] - e[:-1])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


@dataclass(frozen=True)
class RemainderRule:
    """Quadrature nodes for the four spectral pieces of the remainder integral.

    gam/wgam: gamma in (0, sqrt E) (propagating band, x3 < 0 only)
    bet/wbet: beta in (0, rho)     (evanescent band, x3 < 0 only)
    tail/wtail: beta in (rho, rho + cutoff)
    sub/wsub: s in (0, sqrt(E + rho^2)) for the subtracted Laplace piece
    """

    rho: float
    E: float
    gam: np.ndarray
    wgam: np.ndarray
    bet: np.ndarray
    wbet: np.ndarray
    tail: np.ndarray
    wtail: np.ndarray
    sub: np.ndarray
    wsub: np.ndarray


def remainder_rule(rho: float, E: float, r_max: float, cutoff: float = 160.0, order: int = 16) -> RemainderRule:
    # panel widths keep ~10+ nodes per oscillation of J0(s r) for r <= r_max
    w_in = min(1.0, 6.0 / max(r_max, 1e-3))
    w_tail = min(2.0, 12.0 / max(r_max, 1e-3))
    gam, wgam = gauss_panels(0.0, np.sqrt(E), w_in, order)
    bet, wbet = gauss_panels(0.0, rho, w_in, order)
    tail, wtail = gauss_panels(rho, rho + cutoff, w_tail, order)
    sub, wsub = gauss_panels(0.0, np.sqrt(E + rho * rho), w_in, order)
    return RemainderRule(rho, E, gam, wgam, bet, wbet, tail, wtail, sub, wsub)


def _remainder_numpy(r, z, rule: RemainderRule, chunk: int = 256):
    rho, E = rule.rho, rule.E
    out = np.empty(r.size)
    s_gam = np.sqrt(E - rule.gam**2)
    s_bet = np.sqrt(E + rule.bet**2)
    s_tail = np.sqrt(E + rule.tail**2)
    for lo in range(0, r.size, chunk):
        ri = r[lo:lo + chunk, None]
        zi = z[lo:lo + chunk, None]
        az = np.abs(zi)
        neg = (zi[:, 0] < 0.0)
        acc = np.zeros(ri.shape[0])
        if neg.any():
            damp = np.exp(-rho * az)
            a1 = (rule.wgam * sc.j0(s_gam * ri) * TWO_PI * damp * np.sin(rule.gam * zi)).sum(1)
            a2 = (rule.wbet * sc.j0(s_bet * ri) * TWO_PI * damp * np.sinh(rule.bet * az)).sum(1)
            acc += np.where(neg, a1 - a2, 0.0)
        jj = np.where(zi >= 0.0, np.exp(-(rule.tail - rho) * az), np.exp(-(rule.tail + rho) * az))
        acc += (rule.wtail * sc.j0(s_tail * ri) * np.pi * (jj - np.exp(-s_tail * az) * rule.tail / s_tail)).sum(1)
        acc -= (rule.wsub * sc.j0(rule.sub * ri) * np.pi * np.exp(-rule.sub * az)).sum(1)
        out[lo:lo + chunk] = acc
    return out


if NUMBA_AVAILABLE:

    # ctypes globals cannot be cached on disk; compiled once per process
    @numba.njit(cache=False)
    def _remainder_numba_impl(r, z, rho, E, gam, wgam, bet, wbet, tail, wtail, sub, wsub):
        n = r.size
        out = np.empty(n)
        for i in range(n):
            ri = r[i]
            zi = z[i]
            az = abs(zi)
            acc = 0.0
            if zi < 0.0:
                damp = np.exp(-rho * az)
                for j in range(gam.size):
                    s = np.sqrt(E - gam[j] * gam[j])
                    acc += wgam[j] * _j0(s * ri) * TWO_PI * damp * np.sin(gam[j] * zi)
                for j in range(bet.size):
                    s = np.sqrt(E + bet[j] * bet[j])
                    acc -= wbet[j] * _j0(s * ri) * TWO_PI * damp * np.sinh(bet[j] * az)
            for j in range(tail.size):
                be = tail[j]
                s = np.sqrt(E + be * be)
                if zi >= 0.0:
                    jj = np.exp(-(be - rho) * az)
                else:
                    jj = np.exp(-(be + rho) * az)
                acc += wtail[j] * _j0(s * ri) * np.pi * (jj - np.exp(-s * az) * be / s)
            for j in range(sub.size):
                acc -= wsub[j] * _j0(sub[j] * ri) * np.pi * np.exp(-sub[j] * az)
            out[i] = acc
        return out

    def _remainder_numba(r, z, rule: RemainderRule):
        return _remainder_numba_impl(
            r, z, rule.rho, rule.E, rule.gam, rule.wgam, rule.bet, rule.wbet,
            rule.tail, rule.wtail, rule.sub, rule.wsub,
        )


def faddeev_remainder(r, z, rule: RemainderRule, use_numba: bool | None = None):
    """R(r, z) = int_0^inf J0(s r) [J(z, s) - (pi/s) exp(-s|z|)] s ds."""
    r = np.ascontiguousarray(r, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    if use_numba is None:
        use_numba = numba_enabled()
    if use_numba and NUMBA_AVAILABLE:
        return _remainder_numba(r, z, rule)
    return _remainder_numpy(r, z, rule)


# ---------------------------------------------------------------- nudft

def _nudft_numpy(x, p, c, chunk: int = 64):
    out = np.empty(p.shape[0], dtype=complex)
    for lo in range(0, p.shape[0], chunk):
        out[lo:lo + chunk] = np.exp(1j * (p[lo:lo + chunk] @ x.T)) @ c
    return out


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def _nudft_numba(x, p, c):
        K = p.shape[0]
        M = x.shape[0]
        out = np.empty(K, dtype=np.complex128)
        for k in range(K):
            acc = 0.0 + 0.0j
            p0, p1, p2 = p[k, 0], p[k, 1], p[k, 2]
            for m in range(M):
                ph = p0 * x[m, 0] + p1 * x[m, 1] + p2 * x[m, 2]
                acc += c[m] * (np.cos(ph) + 1j * np.sin(ph))
            out[k] = acc
        return out


def nudft(x, p, c, use_numba: bool | None = None):
    """sum_m exp(i p_k . x_m) c_m for every row p_k."""
    x = np.ascontiguousarray(x, dtype=float).reshape(-1, 3)
    p = np.ascontiguousarray(p, dtype=float).reshape(-1, 3)
    c = np.ascontiguousarray(c, dtype=complex).ravel()
    if use_numba is None:
        use_numba = numba_enabled()
    if use_numba and NUMBA_AVAILABLE:
        return _nudft_numba(x, p, c)
    return _nudft_numpy(x, p, c)


# ------------------------------------------------------- outgoing kernel

def _green_numpy(X, Y, omega):
    d = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        G = -np.exp(1j * omega * d) / (4.0 * np.pi * d)
    G[d == 0.0] = -1j * omega / (4.0 * np.pi)
    return G


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def _green_numba(X, Y, omega):
        n = X.shape[0]
        m = Y.shape[0]
        G = np.empty((n, m), dtype=np.complex128)
        for i in range(n):
            for j in range(m):
                d0 = X[i, 0] - Y[j, 0]
                d1 = X[i, 1] - Y[j, 1]
                d2 = X[i, 2] - Y[j, 2]
                d = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                if d == 0.0:
                    G[i, j] = -1j * omega / (4.0 * np.pi)
                else:
                    G[i, j] = -(np.cos(omega * d) + 1j * np.sin(omega * d)) / (4.0 * np.pi * d)
        return G


def outgoing_green(X, Y, omega: float, use_numba: bool | None = None):
    """Matrix -exp(i w|x_i - y_j|)/(4 pi |x_i - y_j|); coincident points get the regular part -i w/(4 pi)."""
    X = np.ascontiguousarray(X, dtype=float).reshape(-1, 3)
    Y = np.ascontiguousarray(Y, dtype=float).reshape(-1, 3)
    if use_numba is None:
        use_numba = numba_enabled()
    if use_numba and NUMBA_AVAILABLE:
        return _green_numba(X, Y, float(omega))
    return _green_numpy(X, Y, float(omega))

"""Box-restricted FFT convolutions and the GMRES driver shared by the LS solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import SolverError

# integral of 1/|x| and of |x| over the unit cube centred at the origin
CUBE_INV_R = 3.0 * np.log(2.0 + np.sqrt(3.0)) - np.pi / 2.0
CUBE_MEAN_R = 0.4802959782275265


def box_shape(box) -> tuple[int, int, int]:
    return tuple(s.stop - s.start for s in box)


def offset_range(target, source):
    """Integer offsets t - s spanned by target and source index boxes (inclusive bounds)."""
    lo = np.array([t.start - (s.stop - 1) for t, s in zip(target, source)])
    hi = np.array([(t.stop - 1) - s.start for t, s in zip(target, source)])
    return lo, hi


def offset_lattice(lo, hi) -> np.ndarray:
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1)


class BoxConvolution:
    """out[t] = sum_s K[t - s] u[s] for index boxes `target` and `source`.

    `table` holds K on the inclusive offset range returned by offset_range,
    already multiplied by the cell volume.
    """

    def __init__(self, table: np.ndarray, target, source):
        self.target = tuple(target)
        self.source = tuple(source)
        self.nt = box_shape(target)
        self.ns = box_shape(source)
        lo, hi = offset_range(target, source)
        if table.shape != tuple(hi - lo + 1):
            raise ValueError("kernel table does not match the box offsets")
        self.fshape = tuple(sfft.next_fast_len(a + b - 1) for a, b in zip(self.nt, self.ns))
        self.khat = sfft.fftn(table, s=self.fshape, workers=1)
        self.sel = tuple(slice(b - 1, b - 1 + a) for a, b in zip(self.nt, self.ns))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        uh = sfft.fftn(u.reshape(self.ns), s=self.fshape, workers=1)
        return sfft.ifftn(uh * self.khat, workers=1)[self.sel]

    def dense(self, table: np.ndarray) -> np.ndarray:
        """Explicit matrix of the same operator (small boxes only)."""
        lo, _ = offset_range(self.target, self.source)
        T = offset_lattice([t.start for t in self.target], [t.stop - 1 for t in self.target]).reshape(-1, 3)
        S = offset_lattice([s.start for s in self.source], [s.stop - 1 for s in self.source]).reshape(-1, 3)
        d = T[:, None, :] - S[None, :, :] - lo
        return table[d[..., 0], d[..., 1], d[..., 2]]


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = 0.0
    history: list = field(default_factory=list)


def solve_second_kind(conv: BoxConvolution, vbox: np.ndarray, rhs: np.ndarray, *, tol: float,
                      maxiter: int, restart: int, label: str = "") -> tuple[np.ndarray, SolveInfo]:
    """Solve u - K(v u) = rhs on a box by restarted GMRES.

    A zero right-hand side returns an exact zero without iterating.
    """
    n = rhs.size
    vflat = vbox.ravel()
    b = rhs.ravel().astype(complex)
    info = SolveInfo()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n, dtype=complex), info

    def mv(x):
        return x - conv(vflat * x).ravel()

    A = LinearOperator((n, n), matvec=mv, dtype=complex)
    hist: list[float] = []
    x, flag = gmres(A, b, rtol=tol, atol=0.0, restart=min(restart, n), maxiter=maxiter,
                    callback=lambda r: hist.append(float(r)), callback_type="pr_norm")
    res = float(np.linalg.norm(mv(x) - b) / bnorm)
    info.iterations = len(hist)
    info.residual = res
    info.history = hist
    if flag != 0 and res > tol * 10:
        raise SolverError(f"GMRES did not converge{(' for ' + label) if label else ''}: "
                          f"relative residual {res:.3e} after {len(hist)} iterations", hist)
    return x, info

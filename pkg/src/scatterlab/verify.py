"""Numerical checks of the exact h-difference identity, the Alessandrini-type inequality,
the delta-chain bound and the decay rate of v_hat - h."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .faddeev import ComplexWaveVector, ThetaPair, amplitude_h, solve_cgo, theta_pair
from .forward import DEFAULT_SOLVER, NearFieldData, SolverConfig, data_discrepancy
from .errors import ConfigError, VerificationError
from .medium import Potential, RefractiveIndex, fourier_hat_many, union_box

TWO_PI3 = (2.0 * np.pi) ** 3


def _quiet_cgo(v, k, solver, box, method):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return solve_cgo(v, k, solver, box=box, method=method)


# ------------------------------------------------------ identity check

@dataclass(frozen=True)
class IdentityCheck:
    lhs: complex
    rhs: complex
    rel_mismatch: float


def check_h_difference_identity(v1: Potential, v2: Potential, pair: ThetaPair,
                                solver: SolverConfig = DEFAULT_SOLVER, method: str = "real") -> IdentityCheck:
    """h2(k,l) - h1(k,l) against (2 pi)^-3 sum psi1(x,-l) (v2 - v1) psi2(x,k) h^3.

    Both sides are assembled on the union support box, so the identity is
    exact for the discrete equations up to the solver tolerance.
    """
    if not pair.rho > 0:
        raise ConfigError("identity check needs |Im k| > 0")
    box = union_box(v1.box, v2.box)
    if box is None:
        return IdentityCheck(0j, 0j, 0.0)
    k, l = pair.k, pair.l
    c1k = _quiet_cgo(v1, k, solver, box, method)
    c2k = _quiet_cgo(v2, k, solver, box, method)
    lhs = amplitude_h(v2, c2k, l) - amplitude_h(v1, c1k, l)
    c1ml = _quiet_cgo(v1, -l, solver, box, method)
    g = v1.grid
    x = g.coords(box)
    # psi1(x,-l) psi2(x,k) = exp(i (k - l).x) mu1(x,-l) mu2(x,k)
    w = np.asarray(v2.samples[box] - v1.samples[box])
    rhs = complex((np.exp(1j * (x @ pair.p)) * c1ml.mu_box * w * c2k.mu_box).sum() * g.h**3 / TWO_PI3)
    scale = max(abs(lhs), abs(rhs))
    return IdentityCheck(complex(lhs), rhs, 0.0 if scale == 0 else abs(lhs - rhs) / scale)


# ------------------------------------------------ solution fields on B_r2

@dataclass(frozen=True, eq=False)
class SolutionField:
    """Samples of a solution of (Delta + omega^2 n) psi = 0 on the nodes of B_r2."""

    grid: object
    box: tuple
    values: np.ndarray          # on the index box
    mask: np.ndarray            # nodes with |x| < r2 inside the box
    residual: float
    radius: float
    sup_mu: float = float("nan")

    def scaled(self, c: complex) -> "SolutionField":
        return SolutionField(self.grid, self.box, c * self.values, self.mask, self.residual,
                             self.radius, self.sup_mu)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values[self.mask]) ** 2) * self.grid.h**3))


def cgo_solution(v: Potential, k: ComplexWaveVector, r2: float, solver: SolverConfig = DEFAULT_SOLVER,
                 method: str = "real", box=None) -> SolutionField:
    """psi = exp(ikx) mu on B_r2 from the CGO equation (extended off the support by the integral)."""
    g = v.grid
    if not r2 < g.L:
        raise ConfigError(f"r2={r2} must be smaller than the grid half extent {g.L}")
    cgo = _quiet_cgo(v, k, solver, box, method)
    target = g.box_around(r2)
    mu = cgo.extend(target)
    x = g.coords(target)
    mask = np.sqrt((x**2).sum(-1)) < r2
    psi = np.exp(1j * (x @ k.vector)) * mu
    return SolutionField(g, target, psi, mask, cgo.residual, r2, float(np.max(np.abs(mu[mask]))))


# -------------------------------------------------- Alessandrini check

def operator_gap(near1: NearFieldData, near2: NearFieldData, iterations: int = 100,
                 stagnation: float = 1e-10) -> float:
    """||S1 - S2|| on L2(dB_r) by power iteration on the symmetrically weighted matrix."""
    if near1.quad.size != near2.quad.size:
        raise ConfigError("near-field data use different quadratures")
    sw = np.sqrt(near1.quad.weights)
    A = sw[:, None] * (near1.values - near2.values) * sw[None, :]
    if not np.any(A):
        return 0.0
    x = np.random.default_rng(0).standard_normal(A.shape[1]) + 0j
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iterations):
        y = A.conj().T @ (A @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        new = float(np.sqrt(ny))
        if abs(new - sigma) <= stagnation * new:
            sigma = new
            break
        sigma = new
    return sigma


@dataclass(frozen=True)
class AlessandriniCheck:
    lhs: float
    operator_gap: float
    norm1: float
    norm2: float
    ratio: float


def _index_samples(n) -> np.ndarray:
    """Samples of n; a Potential is mapped back through n = 1 - v / omega^2."""
    if isinstance(n, Potential):
        return 1.0 - np.asarray(n.samples) / n.E
    return np.asarray(n.samples)


def check_alessandrini(n1: RefractiveIndex | Potential, n2: RefractiveIndex | Potential, psi1: SolutionField, psi2: SolutionField,
                       near1: NearFieldData, near2: NearFieldData, residual_tol: float = 1e-4,
                       gap: float | None = None) -> AlessandriniCheck:
    """lhs = |int_B1 (n1 - n2) psi1 psi2|; ratio = lhs / (||S1 - S2|| ||psi1|| ||psi2||)."""
    for psi in (psi1, psi2):
        if not psi.residual <= residual_tol:
            raise VerificationError(f"solution residual {psi.residual:.3e} exceeds {residual_tol:.1e}")
    if psi1.box != psi2.box:
        raise ConfigError("solution fields live on different boxes")
    g = n1.grid
    dn = (_index_samples(n1) - _index_samples(n2))[psi1.box]
    x = g.coords(psi1.box)
    ball = np.sqrt((x**2).sum(-1)) < max(n1.support_radius, n2.support_radius)
    lhs = float(abs(np.sum((dn * psi1.values * psi2.values)[ball & psi1.mask]) * g.h**3))
    og = operator_gap(near1, near2) if gap is None else gap
    a, b = psi1.l2_norm(), psi2.l2_norm()
    if lhs == 0.0:
        ratio = 0.0
    elif og == 0.0:
        ratio = float("inf")
    else:
        ratio = lhs / (og * a * b)
    return AlessandriniCheck(lhs, og, a, b, ratio)


# ---------------------------------------------------------- delta chain

@dataclass(frozen=True)
class DeltaChainCheck:
    h_gap: float
    bound: float
    c3: float
    c5: float
    sigma: float
    delta: float
    rho: float
    holds: bool


def check_delta_chain(v1: Potential, v2: Potential, pair: ThetaPair, near1: NearFieldData,
                      near2: NearFieldData, r2: float, c3: float | None = None,
                      sigma_emp: float | None = None, delta: float | None = None,
                      solver: SolverConfig = DEFAULT_SOLVER, method: str = "real") -> DeltaChainCheck:
    """|h2 - h1| <= c3 c5 omega^2 sigma^2 exp(2 rho r2) delta with in-run constants.

    c3 defaults to the ratio measured on this very pair (max'ed with the
    supplied value), sigma to the largest |mu| seen on B_r2.
    """
    box = union_box(v1.box, v2.box)
    if delta is None:
        delta = data_discrepancy(near1, near2, "near")
    c5 = (4.0 / 3.0) * np.pi * r2**3 / TWO_PI3
    if box is None or np.array_equal(v1.samples, v2.samples):
        return DeltaChainCheck(0.0, 0.0, c3 or 0.0, c5, sigma_emp or 1.0, delta, pair.rho, True)
    c1k = _quiet_cgo(v1, pair.k, solver, box, method)
    c2k = _quiet_cgo(v2, pair.k, solver, box, method)
    h_gap = abs(amplitude_h(v2, c2k, pair.l) - amplitude_h(v1, c1k, pair.l))
    psi1 = cgo_solution(v1, -pair.l, r2, solver, method, box)
    psi2 = cgo_solution(v2, pair.k, r2, solver, method, box)
    ales = check_alessandrini(v1, v2, psi1, psi2, near1, near2)
    c3_used = max(ales.ratio, c3 or 0.0)
    sigma = max(psi1.sup_mu, psi2.sup_mu) if sigma_emp is None else sigma_emp
    bound = c3_used * c5 * v1.E * sigma**2 * np.exp(2.0 * pair.rho * r2) * delta
    return DeltaChainCheck(float(h_gap), float(bound), float(c3_used), float(c5), float(sigma),
                           float(delta), pair.rho, bool(h_gap <= bound))


# ----------------------------------------------------- delta_v decay

@dataclass(frozen=True)
class SlopeReport:
    rho: np.ndarray
    scale: np.ndarray           # sqrt(E + rho^2)
    quantity: np.ndarray        # |(v1_hat - v2_hat) - (h1 - h2)|
    slope: float
    prefactor: float


def check_delta_v_bound(v1: Potential, v2: Potential, p, rhos, solver: SolverConfig = DEFAULT_SOLVER,
                        method: str = "real") -> SlopeReport:
    """Log-log regression of |(v1_hat - v2_hat)(p) - (h1 - h2)(k, l)| against sqrt(E + rho^2)."""
    p = np.asarray(p, dtype=float).reshape(3)
    rhos = np.asarray(rhos, dtype=float)
    E = v1.E
    box = union_box(v1.box, v2.box)
    w_hat = fourier_hat_many(v1 - v2, p[None, :])[0]
    q = []
    for rho in rhos:
        if box is None or np.array_equal(v1.samples, v2.samples):
            q.append(0.0)
            continue
        pair = theta_pair(p, E, rho)
        c1 = _quiet_cgo(v1, pair.k, solver, box, method)
        c2 = _quiet_cgo(v2, pair.k, solver, box, method)
        dh = amplitude_h(v1, c1, pair.l) - amplitude_h(v2, c2, pair.l)
        q.append(abs(w_hat - dh))
    q = np.array(q)
    scale = np.sqrt(E + rhos**2)
    if np.all(q > 0) and len(q) >= 2:
        slope = float(np.polyfit(np.log(scale), np.log(q), 1)[0])
    else:
        slope = float("nan")
    pref = float(np.max(q * scale)) if len(q) else 0.0
    return SlopeReport(rhos, scale, q, slope, pref)


# ------------------------------------------------------------- report

@dataclass
class CheckBlock:
    name: str
    digest: str
    constants: dict
    passed: bool
    tolerances: dict
    points: list = field(default_factory=list)   # (check, x, y) regression points

    def render(self) -> str:
        lines = [f"[{self.name}]", f"  inputs_digest = {self.digest}"]
        for k, v in self.constants.items():
            lines.append(f"  {k} = {_fmt(v)}")
        for k, v in self.tolerances.items():
            lines.append(f"  tolerance.{k} = {_fmt(v)}")
        lines.append(f"  status = {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return repr(complex(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


# ------------------------------------------------------- orchestration

def verify_pair(v1: Potential, v2: Potential, near1: NearFieldData, near2: NearFieldData, settings,
                solver: SolverConfig = DEFAULT_SOLVER, method: str = "real",
                digest: str = "") -> list[CheckBlock]:
    """Run the four checks on one pair and return one report block each.

    `settings` carries p, the rho values, the number of Alessandrini samples,
    r2 and the tolerances (see config.VerifySettings).
    """
    st = settings
    E = v1.E
    p = np.asarray(st.p, dtype=float)
    blocks = []

    # exact identity
    pair = theta_pair(p, E, st.rho_identity)
    idc = check_h_difference_identity(v1, v2, pair, solver, method)
    blocks.append(CheckBlock(
        "h_difference_identity", digest,
        {"p": p, "rho": st.rho_identity, "lhs": idc.lhs, "rhs": idc.rhs, "rel_mismatch": idc.rel_mismatch},
        idc.rel_mismatch <= st.identity_tol, {"rel_mismatch": st.identity_tol}))

    # Alessandrini ratio over random frames
    box = union_box(v1.box, v2.box)
    gap = operator_gap(near1, near2)
    seeds = np.random.default_rng(0).uniform(0.0, 2.0 * np.pi, st.samples)
    ratios, sigma = [], 1.0
    scale_defect = 0.0
    for i, seed in enumerate(seeds):
        pr = theta_pair(p, E, st.rho_alessandrini, frame_seed=float(seed))
        psi1 = cgo_solution(v1, -pr.l, st.r2, solver, method, box)
        psi2 = cgo_solution(v2, pr.k, st.r2, solver, method, box)
        a = check_alessandrini(v1, v2, psi1, psi2, near1, near2, gap=gap)
        ratios.append(a.ratio)
        sigma = max(sigma, psi1.sup_mu, psi2.sup_mu)
        if i == 0:
            a2 = check_alessandrini(v1, v2, psi1.scaled(2.0), psi2, near1, near2, gap=gap)
            scale_defect = 0.0 if a.ratio == 0 else abs(a2.ratio - a.ratio) / a.ratio
    ratios = np.array(ratios)
    finite = bool(np.all(np.isfinite(ratios)))
    if finite and np.all(ratios == 0):
        spread = 1.0
    elif finite and np.all(ratios > 0):
        spread = float(ratios.max() / ratios.min())
    else:
        spread = float("inf")
    blocks.append(CheckBlock(
        "alessandrini", digest,
        {"rho": st.rho_alessandrini, "r2": st.r2, "operator_gap": gap, "c3_min": float(ratios.min()),
         "c3_max": float(ratios.max()), "spread": spread, "scale_defect": scale_defect},
        finite and spread <= st.alessandrini_spread and scale_defect <= 1e-12,
        {"spread": st.alessandrini_spread, "scale_defect": 1e-12},
        [("alessandrini.ratio", float(i), float(r)) for i, r in enumerate(ratios)]))

    # delta chain with the measured c3 and sigma
    c3 = float(ratios.max()) if finite else None
    delta = data_discrepancy(near1, near2, "near")
    chain = [check_delta_chain(v1, v2, theta_pair(p, E, rho), near1, near2, st.r2, c3=c3,
                               sigma_emp=None, delta=delta, solver=solver, method=method)
             for rho in st.rho_chain]
    sig = max([sigma] + [c.sigma for c in chain])
    blocks.append(CheckBlock(
        "delta_chain", digest,
        {"delta": delta, "c5": chain[0].c5, "c3": max(c.c3 for c in chain), "sigma": sig,
         "rho": [c.rho for c in chain], "h_gap": [c.h_gap for c in chain],
         "bound": [c.bound for c in chain]},
        all(c.holds for c in chain), {"h_gap_over_bound": 1.0},
        [("delta_chain.h_gap", c.rho, c.h_gap) for c in chain]
        + [("delta_chain.bound", c.rho, c.bound) for c in chain]))

    # decay of v_hat - h
    sr = check_delta_v_bound(v1, v2, p, st.rho_decay, solver, method)
    if np.all(sr.quantity == 0):
        ok = True
    else:
        ok = bool(np.isfinite(sr.slope) and abs(sr.slope + 1.0) <= st.slope_tol)
    blocks.append(CheckBlock(
        "delta_v_bound", digest,
        {"p": p, "rho": sr.rho, "quantity": sr.quantity, "slope": sr.slope, "prefactor": sr.prefactor},
        ok, {"slope_target": -1.0, "slope_tol": st.slope_tol},
        [("delta_v_bound", float(np.log(s)), float(np.log(q)) if q > 0 else float("-inf"))
         for s, q in zip(sr.scale, sr.quantity)]))
    return blocks

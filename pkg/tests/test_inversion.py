import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatterlab.errors import AdmissibilityError, ConfigError
from scatterlab.forward import SphereQuadrature
from scatterlab.inversion import (DELTA_FLOOR, SweepConfig, SweepRecord, envelope_fit, lowpass_reconstruct,
                                  reconstruct_difference, schedule_from_delta, smoothness_exponent,
                                  split_integrals, stability_sweep, tail_bound, theoretical_bound)
from scatterlab.medium import (STANDARD_BUMP, STANDARD_PERTURBATION, Bump, FourierLattice, FourierSample,
                               Grid3, fourier_hat_many, fourier_lattice, lattice_points, make_phantom,
                               potential_of, weighted_sup_norm)


def _diff_lattice(v1, v2):
    a, b = fourier_lattice(v1), fourier_lattice(v2)
    return FourierLattice(a.p, a.index, b.values - a.values, a.spacing, a.kmax)


# -------------------------------------------------------------- schedule

def test_schedule_examples():
    s = schedule_from_delta(0.01, 0.5, 2.0, 1.0)
    assert s.beta == 0.125
    assert s.rho == pytest.approx(0.125 * math.log(103), rel=1e-15)
    assert s.rho == pytest.approx(0.5793, abs=5e-5)
    s = schedule_from_delta(1e9, 0.5, 2.0, 1.0)
    assert s.rho == pytest.approx(0.1373, abs=5e-5)
    assert s.rho > 0.125 * math.log(3)


def test_schedule_errors():
    with pytest.raises(AdmissibilityError):
        schedule_from_delta(1e9, 0.5, 2.0, 1.0, eps=10.0)
    for bad in (dict(tau=0.0), dict(tau=1.0), dict(r2=0.0), dict(delta=0.0), dict(eps=-1.0)):
        kw = dict(delta=0.01, tau=0.5, r2=2.0, E=1.0, eps=1.0) | bad
        with pytest.raises(ConfigError):
            schedule_from_delta(**kw)


@settings(max_examples=200, deadline=None)
@given(delta=st.floats(1e-12, 1e6), tau=st.floats(0.01, 0.99), r2=st.floats(0.5, 5), E=st.floats(0.1, 10),
       eps=st.floats(0.1, 1.5))
def test_schedule_algebra(delta, tau, r2, E, eps):
    rho = (1 - tau) / (2 * r2) * math.log(3 + 1 / delta)
    if (eps * (E + rho**2) ** (1 / 6)) ** 2 > 4 * (E + rho**2) * (1 + 1e-9):
        with pytest.raises(AdmissibilityError):
            schedule_from_delta(delta, tau, r2, E, eps)
        return
    s = schedule_from_delta(delta, tau, r2, E, eps)
    assert abs(s.beta * 2 * s.r2 + s.tau - 1) <= 1e-15
    assert s.kappa**6 == pytest.approx(eps**6 * (E + s.rho**2), rel=1e-12)
    assert s.kappa**2 <= 4 * (E + s.rho**2)
    # rho sees delta only through ln(3 + 1/delta): same log, same rho
    twin = schedule_from_delta(1.0 / (math.exp(s.log_term) - 3.0), tau, r2, E, eps)
    assert twin.rho == pytest.approx(s.rho, rel=1e-12)


# ---------------------------------------------------------------- lowpass

def test_lowpass_zero_samples(grid32):
    sp = np.pi / (2 * grid32.L)
    _, P = lattice_points(sp, 2.0)
    rec = lowpass_reconstruct([FourierSample(tuple(p), 0.0) for p in P], 2.0, grid32, sp)
    assert np.all(rec == 0)


def test_lowpass_single_sample_is_constant(grid32):
    sp = np.pi / (2 * grid32.L)
    _, P = lattice_points(sp, 0.5 * sp)
    assert P.shape[0] == 1
    rec = lowpass_reconstruct([FourierSample((0, 0, 0), 0.3 + 0.1j)], 0.5 * sp, grid32, sp)
    assert np.allclose(rec, (0.3 + 0.1j) * sp**3, rtol=1e-13, atol=0)


def test_lowpass_round_trip(std_potentials, grid32):
    v = std_potentials[0]
    rec = lowpass_reconstruct(fourier_lattice(v), grid32.nyquist, grid32)
    ball = grid32.ball_mask(1.0, strict=False)
    err = np.max(np.abs(rec - v.samples)[ball]) / np.max(np.abs(v.samples))
    assert err <= 0.01


def test_lowpass_fft_and_direct_paths_agree(std_potentials, grid32):
    # a spacing that is not commensurate with the grid forces the direct sum
    v = std_potentials[1]
    lat = fourier_lattice(v, kmax=3.0)
    fast = lowpass_reconstruct(lat, 3.0, grid32)
    sp = 0.7
    _, P = lattice_points(sp, 3.0)
    vals = fourier_hat_many(v, P)
    direct = lowpass_reconstruct([FourierSample(tuple(p), complex(x)) for p, x in zip(P, vals)], 3.0, grid32, sp)
    ball = grid32.ball_mask(1.0, strict=False)
    # both are truncated syntheses of the same transform on different lattices
    assert np.max(np.abs(fast - direct)[ball]) <= 0.05 * np.max(np.abs(fast))


def test_lowpass_guards(grid32):
    with pytest.raises(AdmissibilityError):          # spacing > pi/(2L)
        lowpass_reconstruct([FourierSample((0, 0, 0), 1.0)], 0.1, grid32, spacing=1.0)
    with pytest.raises(AdmissibilityError):
        lowpass_reconstruct([FourierSample((0, 0, 0), 1.0)], 2 * grid32.nyquist, grid32)
    with pytest.raises(AdmissibilityError):          # missing lattice points inside the ball
        lowpass_reconstruct([FourierSample((0, 0, 0), 1.0)], 2.0, grid32)


# ------------------------------------------------------------ split / tail

def test_split_consistency(std_potentials):
    d = _diff_lattice(*std_potentials)
    for kappa in (0.5, 2.0, 4.0, 8.0, 20.0):
        i1, i2, total = split_integrals(d, kappa)
        assert abs(i1 + i2 - total) <= 1e-10 * total


def test_tail_bound_examples():
    assert tail_bound(1.0, 6, 4.0) == pytest.approx(tail_bound(1.0, 6, 2.0) / 8, rel=1e-15)
    assert tail_bound(1.0, 8, 4.0) == pytest.approx(tail_bound(1.0, 8, 2.0) / 32, rel=1e-15)
    assert tail_bound(3.0, 6, 2.0) == pytest.approx(8 * np.pi * 3.0 / 3.0 / 8, rel=1e-15)
    with pytest.raises(ConfigError):
        tail_bound(1.0, 3, 2.0)
    with pytest.raises(ConfigError):
        tail_bound(1.0, 6, 0.0)


def test_measured_tail_below_bound(std_potentials):
    d = _diff_lattice(*std_potentials)
    N = weighted_sup_norm(d, 6)
    for kappa in (2.0, 4.0, 8.0):
        assert split_integrals(d, kappa)[1] <= tail_bound(N, 6, kappa)


# ---------------------------------------------------------- theoretical bound

def test_theoretical_bound_examples():
    assert smoothness_exponent(6) == 1.0
    delta = 1.0 / (math.e**2 - 3.0)
    for s in (0.5, 1.0, 2.0):
        assert theoretical_bound(delta, s, 3.0) == pytest.approx(3.0 * 2.0**-s, rel=1e-14)
    ladder = [10.0**k for k in range(3, -13, -1)]
    vals = [theoretical_bound(d, 1.0, 1.0) for d in ladder]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ConfigError):
        theoretical_bound(0.0, 1.0, 1.0)


def test_envelope_fit_majorizes():
    recs = [SweepRecord(a, d, float("nan"), 1, 1, e, theoretical_bound(d, 1, 1), 1)
            for a, d, e in ((1e-3, 1e-4, 0.01), (1e-1, 1e-2, 0.08), (1.0, 0.1, 0.2))]
    recs.append(SweepRecord(0.0, DELTA_FLOOR, float("nan"), 1, 1, 0.0, 1.0, 1, degenerate=True))
    C = envelope_fit(recs)
    assert all(r.err_linf <= theoretical_bound(r.delta_near, 1, C) * (1 + 1e-12) for r in recs)
    assert any(r.err_linf == pytest.approx(theoretical_bound(r.delta_near, 1, C)) for r in recs)


# --------------------------------------------------------------- reconstruction

def test_reconstruct_identical_is_zero(std_potentials):
    v = std_potentials[0]
    rec = reconstruct_difference(v, v, schedule_from_delta(0.01, 0.5, 2.0, v.E))
    assert np.all(rec.field == 0)
    assert rec.record.err_linf == 0.0


def _weak_pair(grid, amp=-1e-3):
    weak = Bump((0, 0, 0), 1.0, amp, order=2)
    v1 = potential_of(make_phantom([STANDARD_BUMP], grid, 1.0, m=4), 1.0)
    v2 = potential_of(make_phantom([STANDARD_BUMP, weak], grid, 1.0, m=4), 1.0)
    return v1, v2


@pytest.mark.slow
def test_reconstruct_weak_bump_large_rho():
    # a unit-radius bump needs |p| up to ~6 for 10% accuracy; eps = 3 puts kappa there at rho = 8.
    # The coarse Nx = 12 grid keeps the 461 CGO pairs affordable.
    g = Grid3(1.25, 12)
    v1, v2 = _weak_pair(g)
    sch = schedule_from_delta(0.01, 0.5, 2.0, 1.0, eps=3.0, rho_override=8.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = reconstruct_difference(v1, v2, sch, m=4)
    scale = np.max(np.abs(v2.samples - v1.samples))
    assert rec.record.err_linf <= 0.1 * scale
    assert rec.record.dropped == 0


def test_reconstruct_kappa_ladder():
    # one set of h samples at the largest kappa, re-synthesised with smaller cut-offs
    g = Grid3(1.25, 12)
    v1, v2 = _weak_pair(g)
    sch = schedule_from_delta(0.01, 0.5, 2.0, 1.0, eps=3.5 / 65 ** (1 / 6), rho_override=8.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = reconstruct_difference(v1, v2, sch, m=4)
    truth = v2.samples - v1.samples
    ball = g.ball_mask(1.0, strict=False)
    sp = np.pi / (2 * g.L)
    errs = []
    for kappa in (3.5, 2.5, 1.5):
        w = lowpass_reconstruct(rec.samples, kappa, g, sp)
        errs.append(np.max(np.abs(truth - w)[ball]))
    assert errs[0] < errs[1] < errs[2]


# ------------------------------------------------------------------ sweep

@pytest.fixture(scope="module")
def small_sweep(grid32):
    cfg = SweepConfig(grid=grid32, r1=1.0, omega=1.0, base=(STANDARD_BUMP,),
                      perturbation=(STANDARD_PERTURBATION,), alphas=(1.0, 0.0, 1e-2, 1e-4),
                      quad=SphereQuadrature(1.25, 6, 12), far_quad=SphereQuadrature(1.0, 4, 8))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return stability_sweep(cfg)


def test_sweep_degenerate_rung(small_sweep):
    r0 = small_sweep.records[0]
    assert r0.alpha == 0.0
    assert r0.degenerate and r0.delta_near == DELTA_FLOOR
    assert r0.err_linf == 0.0


def test_sweep_sorted_and_finite(small_sweep):
    recs = small_sweep.records
    assert [r.alpha for r in recs] == [0.0, 1e-4, 1e-2, 1.0]
    for r in recs:
        for x in (r.delta_near, r.delta_far, r.rho, r.kappa, r.err_linf, r.bound, r.s):
            assert np.isfinite(x) and x >= 0
    assert not small_sweep.failures


def test_sweep_envelope_and_delta_monotone(small_sweep):
    assert small_sweep.envelope_ok
    live = [r for r in small_sweep.records if not r.degenerate]
    dn = [r.delta_near for r in live]
    df = [r.delta_far for r in live]
    assert all(a < b * 1.01 for a, b in zip(dn, dn[1:]))
    assert all(a < b * 1.01 for a, b in zip(df, df[1:]))
    for r in live:
        assert r.err_linf <= theoretical_bound(r.delta_near, small_sweep.s, small_sweep.C_fit) * (1 + 1e-12)


def test_sweep_ladder_must_span_four_decades(grid32):
    cfg = SweepConfig(grid=grid32, r1=1.0, omega=1.0, base=(STANDARD_BUMP,),
                      perturbation=(STANDARD_PERTURBATION,), alphas=(1e-2, 1.0))
    with pytest.raises(ConfigError):
        stability_sweep(cfg)

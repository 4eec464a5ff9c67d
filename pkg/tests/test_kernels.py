import numpy as np
import pytest

from scatterlab import _accel
from scatterlab._accel import NUMBA_AVAILABLE, numba_enabled, ordered_map, worker_count
from scatterlab._kernels import faddeev_remainder, gauss_panels, nudft, outgoing_green, remainder_rule
from scatterlab.faddeev import clear_kernel_cache, faddeev_F_table

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def test_env_flag(monkeypatch):
    monkeypatch.setenv("SCATTERLAB_NUMBA", "0")
    assert not numba_enabled()
    monkeypatch.setenv("SCATTERLAB_NUMBA", "off")
    assert not numba_enabled()
    monkeypatch.setenv("SCATTERLAB_NUMBA", "1")
    assert numba_enabled() == NUMBA_AVAILABLE


def test_worker_count(monkeypatch):
    monkeypatch.delenv("SCATTERLAB_THREADS", raising=False)
    assert worker_count(None) == 1
    assert worker_count(4) == 4
    monkeypatch.setenv("SCATTERLAB_THREADS", "3")
    assert worker_count(8) == 3
    monkeypatch.setenv("SCATTERLAB_THREADS", "junk")
    assert worker_count(2) == 2


def test_ordered_map_keeps_order():
    assert ordered_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]


def test_gauss_panels_integrate_polynomials():
    x, w = gauss_panels(0.0, 3.0, 0.7)
    assert w.sum() == pytest.approx(3.0, rel=1e-14)
    assert (w * x**5).sum() == pytest.approx(3.0**6 / 6, rel=1e-13)
    assert np.all(np.diff(x) > 0)


@needs_numba
def test_remainder_paths_agree():
    rng = np.random.default_rng(1)
    r = rng.uniform(0, 2, 200)
    z = rng.uniform(-2, 2, 200)
    rule = remainder_rule(3.0, 1.0, 3.5)
    a = faddeev_remainder(r, z, rule, use_numba=True)
    b = faddeev_remainder(r, z, rule, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(b)))


@needs_numba
def test_nudft_paths_agree():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(300, 3))
    p = rng.normal(size=(40, 3)) * 3
    c = rng.normal(size=300) + 1j * rng.normal(size=300)
    a = nudft(x, p, c, use_numba=True)
    b = nudft(x, p, c, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-11 * np.max(np.abs(b))


def test_nudft_zero_frequency_is_sum():
    c = np.arange(5) + 1j
    assert nudft(np.zeros((5, 3)), np.zeros((1, 3)), c)[0] == pytest.approx(c.sum(), abs=1e-14)


@needs_numba
def test_green_paths_agree():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 3))
    Y = np.vstack([rng.normal(size=(20, 3)), X[:3]])
    a = outgoing_green(X, Y, 1.7, use_numba=True)
    b = outgoing_green(X, Y, 1.7, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))
    assert a[0, 20] == pytest.approx(-1j * 1.7 / (4 * np.pi))


def test_green_free_space_values():
    G = outgoing_green(np.zeros((1, 3)), np.array([[1.0, 0, 0]]), 2.0)
    assert G[0, 0] == pytest.approx(-np.exp(2j) / (4 * np.pi), abs=1e-15)


@needs_numba
def test_kernel_table_same_under_env_flag(monkeypatch):
    lo, hi = (-4,) * 3, (3,) * 3
    b = np.array([0.0, 0.0, 2.0])
    monkeypatch.setenv("SCATTERLAB_NUMBA", "1")
    clear_kernel_cache()
    t1 = faddeev_F_table(b, 1.0, 0.125, lo, hi)
    monkeypatch.setenv("SCATTERLAB_NUMBA", "0")
    clear_kernel_cache()
    t0 = faddeev_F_table(b, 1.0, 0.125, lo, hi)
    clear_kernel_cache()
    assert np.max(np.abs(t1 - t0)) <= 1e-12 * np.max(np.abs(t0))

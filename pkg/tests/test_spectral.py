import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sklimit import spectral

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_domain_defaults_and_validation():
    dom = spectral.Domain()
    assert dom.N == 32 and dom.M == 128
    np.testing.assert_allclose(dom.alphas[:3], [1.0, 4.0, 9.0])
    with pytest.raises(ValueError):
        spectral.Domain(L=-1.0)
    with pytest.raises(ValueError):
        spectral.Domain(N=8, M=10)


def test_eigenvalue_and_unit_bounds():
    dom = spectral.Domain(L=2.0, N=4)
    assert spectral.eigenvalue(2, dom) == pytest.approx((math.pi) ** 2)
    with pytest.raises(IndexError):
        spectral.unit(5, dom)
    with pytest.raises(IndexError):
        spectral.eigenvalue(0, dom)


@pytest.mark.parametrize("N", [4, 16, 64, 256])
def test_dense_and_fft_transforms_agree(N):
    dom = spectral.Domain(N=N)
    x = np.random.default_rng(N).standard_normal((3, N))
    g_dense = spectral.to_grid(x, dom, fft=False)
    g_fft = spectral.to_grid(x, dom, fft=True)
    np.testing.assert_allclose(g_dense, g_fft, atol=1e-12)
    np.testing.assert_allclose(spectral.from_grid(g_dense, dom, fft=False), spectral.from_grid(g_dense, dom, fft=True),
                               atol=1e-12)


def test_to_grid_matches_basis_sum():
    dom = spectral.Domain(L=1.5, N=6)
    x = np.arange(1.0, 7.0)
    direct = sum(x[k - 1] * dom.basis(k) for k in dom.k)
    np.testing.assert_allclose(spectral.to_grid(x, dom), direct, atol=1e-12)


@given(arrays(float, 16, elements=finite))
def test_grid_round_trip(x):
    dom = spectral.Domain(N=16)
    np.testing.assert_allclose(spectral.from_grid(spectral.to_grid(x, dom), dom), x, atol=1e-9 * (1 + np.abs(x).max()))


@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite), st.sampled_from([0.0, 0.5, 1.0]))
def test_sobolev_norm_is_a_norm(x, y, beta):
    dom = spectral.Domain(N=8)
    nx, ny = spectral.sobolev_norm(x, beta, dom), spectral.sobolev_norm(y, beta, dom)
    assert spectral.sobolev_norm(x + y, beta, dom) <= nx + ny + 1e-9 * (1 + nx + ny)
    assert spectral.sobolev_inner(x, x, beta, dom) == pytest.approx(nx**2, rel=1e-12, abs=1e-12)


def test_sobolev_norm_monotone_in_beta():
    dom = spectral.Domain(N=8)
    x = np.random.default_rng(0).standard_normal(8)
    assert spectral.sobolev_norm(x, 0, dom) <= spectral.sobolev_norm(x, 1, dom)


def test_projection():
    dom = spectral.Domain(N=5)
    x = np.arange(1.0, 6.0)
    np.testing.assert_array_equal(spectral.project(x, 2, dom), [1, 2, 0, 0, 0])
    with pytest.raises(IndexError):
        spectral.project(x, 6, dom)


def test_lp_norm_two_equals_l2():
    dom = spectral.Domain(N=8)
    x = np.random.default_rng(1).standard_normal(8)
    assert spectral.lp_norm(x, 2, dom) == pytest.approx(np.linalg.norm(x), rel=1e-12)


def test_field_csv_round_trip():
    dom = spectral.Domain(L=2.5, N=3)
    f = spectral.SpectralField(np.array([1.0, -2.5, 1e-17]), dom)
    g = spectral.SpectralField.from_csv(f.to_csv())
    np.testing.assert_array_equal(g.coeffs, f.coeffs)
    assert g.domain.L == 2.5
    with pytest.raises(ValueError):
        spectral.SpectralField.from_csv("1,2,3")
    with pytest.raises(ValueError):
        spectral.SpectralField(np.zeros(2), dom)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sklimit import integrator, lyapunov, measures, noise, reaction, semigroup, spectral
from sklimit.lyapunov import LyapunovParams
from sklimit.measures import EmpiricalMeasure

DOM = spectral.Domain(N=6)
KG = reaction.ReactionSpec.klein_gordon()
LAM = noise.power_spectrum(DOM, 1.0, amplitude=2.0).lambdas


def _grad(f, z, h=1e-6):
    u, v = z
    gu, gv = np.zeros_like(u), np.zeros_like(v)
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = h
        gu[k] = (f((u + e, v)) - f((u - e, v))) / (2 * h)
        gv[k] = (f((u, v + e)) - f((u, v - e))) / (2 * h)
    return gu, gv


def _d2v(f, z, h=1e-3):
    u, v = z
    out = np.zeros(v.size)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        out[k] = (f((u, v + e)) - 2 * f((u, v)) + f((u, v - e))) / h**2
    return out


def _ito_generator(f, z, mu, spec, dom, lam):
    """Kolmogorov operator by finite differences of ``f``."""
    u, v = z
    gu, gv = _grad(f, z)
    drift_v = (-dom.alphas * u - v + reaction.eval_b(spec, u, dom)) / mu
    return gu @ v + gv @ drift_v + 0.5 * np.sum(lam**2 * _d2v(f, z)) / mu**2


def test_parameter_validation():
    for bad in ((0.0, 0.1), (0.1, 0.0), (0.1, 0.1, -1.0)):
        with pytest.raises(ValueError):
            LyapunovParams(*bad)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.0, 2.0))
def test_k_single_mode_polynomial(sigma, tau, mu, theta, c):
    dom = spectral.Domain(N=3)
    z = (sigma * spectral.unit(1, dom), tau * spectral.unit(1, dom))
    p = LyapunovParams(theta, mu)
    ref = mu * sigma**2 + (theta * mu + 0.5) * sigma**2 + mu**2 * (theta * sigma + tau) ** 2 \
        + mu * sigma * tau + mu * c * sigma**2
    assert lyapunov.k_theta_mu(p, z, reaction.ReactionSpec.linear(c), dom) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("mu,theta", [(0.5, 0.05), (0.05, 0.3), (0.005, 1.0)])
def test_generator_matches_finite_difference_ito(mu, theta):
    rng = np.random.default_rng(int(mu * 1000))
    z = (rng.standard_normal(DOM.N) / DOM.k, rng.standard_normal(DOM.N) / math.sqrt(mu))
    p = LyapunovParams(theta, mu, 0.0, float(np.sum(LAM**2)))
    f = lambda w: float(lyapunov.k_theta_mu(p, w, KG, DOM))
    ref = _ito_generator(f, z, mu, KG, DOM, LAM)
    assert lyapunov.generator_on_k(p, z, KG, DOM) == pytest.approx(ref, rel=1e-5, abs=1e-5)


def test_grad_v_k_matches_finite_difference():
    rng = np.random.default_rng(4)
    z = (rng.standard_normal(DOM.N), rng.standard_normal(DOM.N))
    p = LyapunovParams(0.2, 0.3)
    _, gv = _grad(lambda w: float(lyapunov.k_theta_mu(p, w, KG, DOM)), z)
    np.testing.assert_allclose(lyapunov.grad_v_k(p, z), gv, rtol=1e-6, atol=1e-7)


def test_exponential_generator_matches_finite_difference_ito():
    rng = np.random.default_rng(5)
    mu = 0.2
    z = (0.3 * rng.standard_normal(DOM.N) / DOM.k, 0.3 * rng.standard_normal(DOM.N))
    p = LyapunovParams(0.1, mu, 0.05, float(np.sum(LAM**2)))
    f = lambda w: float(lyapunov.phi_exp(p, w, KG, DOM))
    ref = _ito_generator(f, z, mu, KG, DOM, LAM)
    assert lyapunov.generator_on_phi(p, z, KG, DOM, LAM) == pytest.approx(ref, rel=1e-4)
    zero = LyapunovParams(0.1, mu, 0.0, p.trace_q)
    assert lyapunov.phi_bracket(zero, z, KG, DOM, LAM) == pytest.approx(lyapunov.generator_on_k(zero, z, KG, DOM))


def test_generator_is_time_derivative_of_expectation():
    # linear case: E K(z_h) is exact from the propagator and step covariance
    dom = spectral.Domain(N=2)
    c, mu, theta = 0.5, 0.1, 0.2
    lam = np.array([1.0, 0.5])
    spec = reaction.ReactionSpec.linear(c)
    p = LyapunovParams(theta, mu, 0.0, float(np.sum(lam**2)))
    z = (np.array([0.7, -0.2]), np.array([0.1, 0.4]))
    a = dom.alphas + c
    # quadratic form of K per mode in (u, v)
    G11 = mu * dom.alphas + theta * mu + 0.5 + mu**2 * theta**2 + mu * c
    G12 = mu**2 * theta + 0.5 * mu
    G22 = np.full(2, mu**2)
    errs, hs = [], [4e-3, 2e-3, 1e-3, 5e-4]
    nk = lyapunov.generator_on_k(p, z, spec, dom)
    for h in hs:
        e11, e12, e21, e22 = semigroup.wave_entries(mu, h, a)
        m_u, m_v = e11 * z[0] + e12 * z[1], e21 * z[0] + e22 * z[1]
        S11, S12, S22 = integrator.step_cov(mu, h, a, lam)
        ek = lyapunov.k_theta_mu(p, (m_u, m_v), spec, dom) + np.sum(G11 * S11 + 2 * G12 * S12 + G22 * S22)
        errs.append(abs((ek - lyapunov.k_theta_mu(p, z, spec, dom)) / h - nk))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)
    assert errs[-1] < 0.05 * abs(nk)


def test_large_states_have_strongly_negative_drift():
    rng = np.random.default_rng(6)
    for mu in (0.5, 0.05, 0.005):
        z = lyapunov.large_state_probe(DOM, mu, 200, rng)
        p = LyapunovParams(0.05, mu, 0.0, float(np.sum(LAM**2)))
        assert np.all(lyapunov.generator_on_k(p, z, KG, DOM) < -1e4)


def test_sandwich_constants_positive():
    rng = np.random.default_rng(7)
    for mu in (0.5, 0.05):
        z = lyapunov.random_states(DOM, mu, 1000, rng)
        sand = lyapunov.sandwich_constants(LyapunovParams(0.05, mu), z, KG, DOM)
        assert sand["c1"] > 0 and math.isfinite(sand["c2"]) and sand["c2"] > 0


def test_bisection_finds_threshold():
    assert lyapunov._bisect(lambda x: x < 0.3, 0.0, 1.0) == pytest.approx(0.3, abs=1e-9)
    assert lyapunov._bisect(lambda x: False, 0.0, 1.0) == 0.0
    assert lyapunov._bisect(lambda x: True, 0.0, 1.0) == 1.0


def test_fitted_constants_pass_sign_check():
    rng = np.random.default_rng(8)
    mus = [0.5, 0.05]
    tq = float(np.sum(LAM**2))
    theta = 0.5 * lyapunov.fit_theta(mus, KG, DOM, tq, rng, n_probe=200)
    delta = 0.5 * lyapunov.fit_delta(theta, mus, KG, DOM, LAM, rng, n_probe=200)
    assert theta > 0 and delta > 0
    for mu in mus:
        p = LyapunovParams(theta, mu, delta, tq)
        probe = lyapunov.large_state_probe(DOM, mu, 200, rng)
        calib = lyapunov.random_states(DOM, mu, 2000, rng)
        lam1, lam2 = lyapunov.fit_phi_constants(p, calib, KG, DOM, LAM, probe)
        assert lam1 > 0
        rep = lyapunov.phi_sign_check(p, lyapunov.random_states(DOM, mu, 2000, rng), KG, DOM, LAM, lam1, lam2)
        assert rep["pass_fraction"] >= 0.999
        drift = lyapunov.drift_check_k(p, calib, KG, DOM)
        assert math.isfinite(drift["c_hat"]) and drift["violation_count"] == 0


def test_invariance_identity_on_exact_gaussian_samples():
    dom = spectral.Domain(N=4)
    spec = reaction.ReactionSpec.linear(1.0)
    nz = noise.NoiseSpectrum([1.0, 0.5, 0.3, 0.2])
    mu = 0.1
    ref = measures.gaussian_invariant_oracle(mu, spec, nz, dom)
    rng = np.random.default_rng(9)
    n = 50000
    m = EmpiricalMeasure(rng.standard_normal((n, 4)) * np.sqrt(ref["var_u"]), dom,
                         rng.standard_normal((n, 4)) * np.sqrt(ref["var_v"]), mu)
    rep = lyapunov.invariance_identity(LyapunovParams(0.05, mu, 0.0, nz.trace_q2), m, spec)
    assert abs(rep["z"]) <= 3
    assert rep["n"] == n


def test_dissipation_and_k_mu():
    z = (np.ones(DOM.N), np.ones(DOM.N))
    p = LyapunovParams(0.1, 0.2)
    lp = spectral.lp_norm(z[0], 4, DOM) ** 4
    assert lyapunov.dissipation(p, z, KG, DOM) == pytest.approx(DOM.alphas.sum() + 0.2 * DOM.N + lp)
    assert lyapunov.k_mu(p, z, KG, DOM) == pytest.approx(0.2 * DOM.alphas.sum() + 0.2 * lp + DOM.N + 0.04 * DOM.N)

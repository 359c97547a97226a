import math

import numpy as np
import pytest

from sklimit import integrator, noise, reaction, semigroup, spectral
from sklimit.errors import BlowUpError, ConfigError
from sklimit.integrator import SchemeConfig

KG = reaction.ReactionSpec.klein_gordon()


def test_scheme_validation():
    assert SchemeConfig(dt=0.01, T=1.0).n_steps == 100
    for bad in ({"dt": 0.0}, {"dt": 2.0, "T": 1.0}, {"record_stride": 0}, {"noise_mode": "ito"}):
        with pytest.raises(ConfigError):
            SchemeConfig(**bad)
    assert integrator.default_dt(1000.0) == pytest.approx(1e-4)
    assert integrator.default_dt(-1.0) == 1e-3


def test_step_covariance_against_euler_maruyama():
    mu, a, lam, dt = 0.2, 1.0, 1.0, 0.1
    ref = np.array(integrator.step_cov(mu, dt, np.array([a]), np.array([lam]))).ravel()
    rng = np.random.default_rng(5)
    n, sub = 20000, 1000
    h = dt / sub
    u = np.zeros(n)
    v = np.zeros(n)
    for _ in range(sub):
        dw = math.sqrt(h) * rng.standard_normal(n)
        u, v = u + h * v, v + h * (-a * u - v) / mu + lam * dw / mu
    samples = np.stack([u * u, u * v, v * v])
    est = samples.mean(1)
    se = samples.std(1, ddof=1) / math.sqrt(n)
    # the EM bias at this substep is far below the MC band
    assert np.all(np.abs(est - ref) <= 3 * se + 1e-3 * np.abs(ref))


def test_step_covariance_reaches_stationary_values():
    a = np.array([1.0, 25.0, 400.0])
    S11, S12, S22 = integrator.step_cov(0.05, 200.0, a, np.ones(3))
    np.testing.assert_allclose(S11, 1 / (2 * a), rtol=1e-10)
    np.testing.assert_allclose(S22, np.full(3, 1 / (2 * 0.05)), rtol=1e-10)
    np.testing.assert_allclose(S12, 0.0, atol=1e-12)


def test_both_covariance_routes_agree_at_the_switch():
    mu, a = 0.01, np.array([4.0])
    # rate just below and above the switch value 10
    lo = integrator.step_cov(mu, 0.0999, a, np.ones(1))
    hi = integrator.step_cov(mu, 0.1001, a, np.ones(1))
    for x, y in zip(lo, hi):
        assert float(x[0]) == pytest.approx(float(y[0]), rel=5e-3)


def test_cholesky_reproduces_covariance():
    cov = integrator.step_cov(0.3, 0.05, np.array([1.0, 9.0]), np.array([1.0, 0.2]))
    L11, L21, L22 = integrator.cholesky2(cov)
    np.testing.assert_allclose(L11**2, cov[0])
    np.testing.assert_allclose(L11 * L21, cov[1])
    np.testing.assert_allclose(L21**2 + L22**2, cov[2])


def _silent(dom):
    return noise.NoiseSpectrum(np.zeros(dom.N))


@pytest.mark.parametrize("mu", [0.5, 0.05, 0.002])
def test_linear_wave_without_noise_matches_closed_form(mu):
    dom = spectral.Domain(N=8)
    spec = reaction.ReactionSpec.linear(1.0)
    z0 = (np.ones(8) / dom.k, np.linspace(-1, 1, 8))
    cfg = SchemeConfig(dt=1e-3, T=1.0)
    u, v = integrator.simulate_wave(mu, spec, _silent(dom), dom, z0, cfg, noise.SeededDriver(0), record=False)
    ref = semigroup.apply_s_mu(mu, 1.0, z0, dom, shift=1.0)
    np.testing.assert_allclose(u, ref.u, atol=1e-8)
    np.testing.assert_allclose(v, ref.v, atol=1e-8)


def test_linear_heat_without_noise_matches_closed_form():
    dom = spectral.Domain(N=8)
    spec = reaction.ReactionSpec.linear(2.0)
    cfg = SchemeConfig(dt=1e-3, T=1.0, record_stride=100)
    t, U = integrator.simulate_heat(spec, _silent(dom), dom, np.ones(8), cfg, noise.SeededDriver(0))
    assert len(t) == 11
    np.testing.assert_allclose(U[-1], np.exp(-(dom.alphas + 2.0)), atol=1e-8)


def test_heat_refinement_is_first_order_without_noise():
    dom = spectral.Domain(N=16)
    x = 3.0 / dom.k
    ends = {}
    for dt in (4e-3, 2e-3, 1e-3, 5e-4, 1e-4):
        ends[dt] = integrator.simulate_heat(KG, _silent(dom), dom, x, SchemeConfig(dt=dt, T=0.5),
                                            noise.SeededDriver(0), record=False)
    err = [np.linalg.norm(ends[dt] - ends[1e-4]) for dt in (4e-3, 2e-3, 1e-3)]
    slope = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(err), 1)[0]
    assert slope > 0.8


def test_coupled_refinement_strong_order():
    dom = spectral.Domain(N=16)
    nz = noise.power_spectrum(dom, 1.0, amplitude=1.0)
    fine_dt, T, paths = 1.25e-4, 0.5, 64
    n_fine = int(round(T / fine_dt))
    xi = np.random.default_rng(3).standard_normal((n_fine, paths, dom.N))
    x = np.tile(1.0 / dom.k, (paths, 1))

    def run(level):
        dt = fine_dt * 2**level
        st = integrator.HeatStepper(KG, nz, dom, dt, "coupled_increment")
        u = x.copy()
        for blk in xi.reshape(-1, 2**level, paths, dom.N):
            u = st.step(u, blk.sum(0) / math.sqrt(2**level))
        return u

    ref = run(0)
    err = [np.sqrt(np.mean(np.sum((run(l) - ref) ** 2, -1))) for l in (3, 4, 5)]
    slope = np.polyfit(np.log([8, 16, 32]), np.log(err), 1)[0]
    assert slope >= 0.5


def test_wave_exact_covariance_marginal():
    dom = spectral.Domain(N=2)
    mu = 0.2
    nz = noise.NoiseSpectrum([1.0, 0.5])
    spec = reaction.ReactionSpec.linear(0.0)
    cfg = SchemeConfig(dt=0.05, T=0.5)
    drv = noise.EnsembleDriver(2, range(4000), 2 * dom.N)
    u, v = integrator.simulate_wave(mu, spec, nz, dom, (np.zeros((4000, 2)), np.zeros((4000, 2))), cfg, drv,
                                    record=False)
    ref = integrator.step_cov(mu, 0.5, dom.alphas, nz.lambdas)
    for est, target in ((u * u, ref[0]), (u * v, ref[1]), (v * v, ref[2])):
        se = est.std(0, ddof=1) / math.sqrt(4000)
        assert np.all(np.abs(est.mean(0) - target) <= 3.5 * se)


def test_heat_stationary_variance():
    dom = spectral.Domain(N=4)
    nz = noise.NoiseSpectrum([1.0, 1.0, 0.5, 0.5])
    n = 4000
    u = integrator.simulate_heat(reaction.ReactionSpec.linear(0.0), nz, dom, np.zeros((n, 4)),
                                 SchemeConfig(dt=0.1, T=6.0), noise.EnsembleDriver(4, range(n), 4), record=False)
    target = nz.lambdas**2 / (2 * dom.alphas)
    se = target * math.sqrt(2.0 / n)
    assert np.all(np.abs(u.var(0) - target) <= 3 * se)


def test_functional_steps_are_reproducible():
    dom = spectral.Domain(N=8)
    nz = noise.power_spectrum(dom)
    cfg = SchemeConfig(dt=1e-3, T=1.0)
    z = (np.ones(8), np.zeros(8))
    a = integrator.step_wave(z, 0.1, KG, nz, dom, cfg, noise.SeededDriver(9, 1))
    b = integrator.step_wave(z, 0.1, KG, nz, dom, cfg, noise.SeededDriver(9, 1))
    np.testing.assert_array_equal(a.u, b.u)
    h1 = integrator.step_heat(np.ones(8), KG, nz, dom, cfg, noise.SeededDriver(9, 2))
    h2 = integrator.step_heat(np.ones(8), KG, nz, dom, cfg, noise.SeededDriver(9, 3))
    assert not np.array_equal(h1, h2)


def test_blow_up_is_reported():
    dom = spectral.Domain(N=4)
    grow = reaction.ReactionSpec.lipschitz(lambda x, s: s**2, lambda x, s: 2 * s, 0.0)
    with pytest.raises(BlowUpError) as info:
        integrator.simulate_heat(grow, _silent(dom), dom, np.full(4, 50.0), SchemeConfig(dt=1e-2, T=5.0),
                                 noise.SeededDriver(0))
    assert info.value.step is not None


def test_coupled_simulation_requires_coupled_mode():
    dom = spectral.Domain(N=4)
    nz = noise.power_spectrum(dom)
    with pytest.raises(ConfigError):
        integrator.simulate_coupled([0.1], KG, nz, dom, (np.zeros(4), np.zeros(4)), np.zeros(4),
                                    SchemeConfig(), noise.EnsembleDriver(0, [0], 4))


def test_coupled_wave_approaches_heat():
    dom = spectral.Domain(N=16)
    nz = noise.power_spectrum(dom, amplitude=1.0)
    cfg = SchemeConfig(dt=1e-3, T=0.5, noise_mode="coupled_increment")
    x = 1.0 / dom.k
    rows = integrator.simulate_coupled([0.1, 0.01, 0.001], KG, nz, dom, (x, np.zeros(16)), x, cfg,
                                       noise.EnsembleDriver(1, range(16), 16))
    errs = [r["mean_sup_error"] for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert all(r["per_trajectory"].shape == (16,) for r in rows)


def test_velocity_contribution_shrinks_with_mu():
    dom = spectral.Domain(N=8)
    spec = reaction.ReactionSpec.linear(0.0)
    cfg = SchemeConfig(dt=1e-3, T=1.0, noise_mode="coupled_increment")
    y = np.ones(8)
    for mu in (0.1, 0.01):
        row = integrator.simulate_coupled([mu], spec, _silent(dom), dom, (np.zeros(8), y), np.zeros(8), cfg,
                                          noise.EnsembleDriver(0, [0], 8))[0]
        assert row["mean_sup_error"] <= 2 * mu * np.linalg.norm(y) + 1e-12

"""Exponential-Euler time stepping for the wave and heat SPDEs.

The linear flow (Laplacian, damping and, for the ``linear`` reaction, the
``-c u`` term) is propagated exactly per mode; the remaining nonlinearity is
frozen over a step and integrated against the exact propagator. Two noise
treatments are available:

``exact_covariance``
    Gaussian increment with the exact per-step covariance of the linear
    stochastic convolution (unbiased stationary statistics for the linear part).
``coupled_increment``
    Left-point rule driven by Brownian increments that are shared by every
    system fed from the same driver, giving a pathwise coupling between the
    wave system at several masses and the heat system.
"""

from dataclasses import dataclass

import numpy as np

from . import reaction, semigroup, spectral
from .errors import BlowUpError, ConfigError, NumericalError

BLOWUP = 1e12
NOISE_MODES = ("exact_covariance", "coupled_increment")


@dataclass(frozen=True)
class SchemeConfig:
    dt: float = 1e-3
    T: float = 1.0
    record_stride: int = 1
    noise_mode: str = "exact_covariance"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"scheme.dt must be positive, got {self.dt}")
        if not self.T > 0 or self.dt > self.T:
            raise ConfigError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.record_stride < 1:
            raise ConfigError("scheme.record_stride must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"scheme.noise_mode must be one of {NOISE_MODES}")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


def default_dt(slope):
    return min(1e-3, 0.1 / slope) if slope > 0 else 1e-3


def step_cov(mu, dt, a, lam, n_quad=64):
    """Per-step covariance of the wave stochastic convolution on each mode.

    Returns ``(S11, S12, S22)`` for ``int_0^dt exp(sM) b b^T exp(sM^T) ds`` with
    ``b = (0, lam/mu)``. Uses 64-node Gauss-Legendre where the integrand is
    smooth on [0, dt] and the 2x2 Lyapunov equation
    ``M S + S M^T = E b b^T E^T - b b^T`` otherwise.
    """
    if not (mu > 0 and dt > 0):
        raise ValueError("step_cov needs mu > 0 and dt > 0")
    a = np.asarray(a, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), a.shape)
    q = (lam / mu) ** 2
    rate = dt * (1.0 / mu + np.sqrt(np.abs(a) / mu))
    S11 = np.empty_like(a)
    S12 = np.empty_like(a)
    S22 = np.empty_like(a)

    smooth = rate <= 10.0
    if np.any(smooth):
        x, w = np.polynomial.legendre.leggauss(n_quad)
        s = 0.5 * dt * (x + 1.0)
        _, g1, _, g2 = semigroup.wave_entries(mu, s[:, None], a[smooth])
        wq = 0.5 * dt * w[:, None]
        S11[smooth] = q[smooth] * np.sum(wq * g1 * g1, 0)
        S12[smooth] = q[smooth] * np.sum(wq * g1 * g2, 0)
        S22[smooth] = q[smooth] * np.sum(wq * g2 * g2, 0)

    stiff = ~smooth
    if np.any(stiff):
        aa = a[stiff]
        _, e12, _, e22 = semigroup.wave_entries(mu, dt, aa)
        p, r = aa / mu, 1.0 / mu
        R11 = q[stiff] * e12 * e12
        R12 = q[stiff] * e12 * e22
        R22 = q[stiff] * (e22 * e22 - 1.0)
        s12 = 0.5 * R11
        s22 = -(0.5 * R22 + p * s12) / r
        s11 = (s22 - r * s12 - R12) / p
        S11[stiff], S12[stiff], S22[stiff] = s11, s12, s22

    return _psd((S11, S12, S22))


def _psd(cov):
    S11, S12, S22 = cov
    S12 = np.asarray(S12)
    tr = S11 + S22
    half = 0.5 * (S11 - S22)
    rad = np.sqrt(half**2 + S12**2)
    low = 0.5 * tr - rad
    if np.any(low < -1e-12 * np.maximum(tr, 1e-300)):
        raise NumericalError(f"step covariance not PSD (min eigenvalue {low.min():.3e})")
    return np.maximum(S11, 0.0), S12, np.maximum(S22, 0.0)


def cholesky2(cov):
    """Lower-triangular factor ``(L11, L21, L22)`` of per-mode 2x2 covariances."""
    S11, S12, S22 = cov
    L11 = np.sqrt(S11)
    with np.errstate(divide="ignore", invalid="ignore"):
        L21 = np.where(L11 > 0, S12 / L11, 0.0)
    L22 = np.sqrt(np.maximum(S22 - L21**2, 0.0))
    return L11, L21, L22


def _check(norm2, step):
    bad = ~np.isfinite(norm2) | (norm2 > BLOWUP**2)
    if np.any(bad):
        raise BlowUpError(f"state norm exceeded {BLOWUP:g} at step {step}", step=step,
                          norm=float(np.sqrt(np.nanmax(np.where(np.isfinite(norm2), norm2, np.inf)))))


class WaveStepper:
    """One exponential-Euler step of the wave system at mass ``mu``."""

    def __init__(self, mu, spec, noise, dom, dt, noise_mode="exact_covariance"):
        if not mu > 0:
            raise ValueError(f"mass parameter mu must be positive, got {mu}")
        if noise_mode not in NOISE_MODES:
            raise ConfigError(f"unknown noise mode {noise_mode!r}")
        self.mu, self.spec, self.noise, self.dom, self.dt = mu, spec, noise, dom, dt
        self.noise_mode = noise_mode
        self.a = dom.alphas + spec.linear_coeff
        self.E = semigroup.wave_entries(mu, dt, self.a)
        f = semigroup.wave_phi1(mu, dt, self.a)
        self.Fu, self.Fv = f[1] / mu, f[3] / mu
        lam = noise.lambdas
        if noise_mode == "exact_covariance":
            self.L = cholesky2(step_cov(mu, dt, self.a, lam))
            self.width = 2 * dom.N
        else:
            self.Gu, self.Gv = self.E[1] * lam / mu, self.E[3] * lam / mu
            self.width = dom.N
        self.nonlinear = spec.variant != "linear"
        self.alphas = dom.alphas

    def step(self, u, v, normals):
        e11, e12, e21, e22 = self.E
        un = e11 * u + e12 * v
        vn = e21 * u + e22 * v
        if self.nonlinear:
            b = reaction.eval_b(self.spec, u, self.dom)
            un += self.Fu * b
            vn += self.Fv * b
        N = self.dom.N
        if self.noise_mode == "exact_covariance":
            z1, z2 = normals[..., :N], normals[..., N:]
            L11, L21, L22 = self.L
            un += L11 * z1
            vn += L21 * z1 + L22 * z2
        else:
            dbeta = np.sqrt(self.dt) * normals
            un += self.Gu * dbeta
            vn += self.Gv * dbeta
        return un, vn

    def norm2(self, u, v):
        return np.sum(self.alphas * u**2, -1) + np.sum(v**2, -1)


class HeatStepper:
    """One exponential-Euler step of the heat system."""

    def __init__(self, spec, noise, dom, dt, noise_mode="exact_covariance"):
        if noise_mode not in NOISE_MODES:
            raise ConfigError(f"unknown noise mode {noise_mode!r}")
        self.spec, self.noise, self.dom, self.dt = spec, noise, dom, dt
        self.noise_mode = noise_mode
        a = dom.alphas + spec.linear_coeff
        self.e = semigroup.heat_factor(dt, a)
        self.phi = semigroup.heat_phi1(dt, a)
        lam = noise.lambdas
        if noise_mode == "exact_covariance":
            self.g = lam * np.sqrt(-np.expm1(-2.0 * a * dt) / (2.0 * a))
        else:
            self.g = self.e * lam * np.sqrt(dt)
        self.width = dom.N
        self.nonlinear = spec.variant != "linear"

    def step(self, u, normals):
        un = self.e * u + self.g * normals
        if self.nonlinear:
            un += self.phi * reaction.eval_b(self.spec, u, self.dom)
        return un

    def norm2(self, u):
        return np.sum(u**2, -1)


def step_wave(z, mu, spec, noise, dom, cfg, driver):
    """Single wave step; ``driver`` is a :class:`~sklimit.noise.SeededDriver`."""
    st = WaveStepper(mu, spec, noise, dom, cfg.dt, cfg.noise_mode)
    u, v = st.step(np.asarray(z[0], float), np.asarray(z[1], float), driver.normals(st.width))
    _check(st.norm2(u, v), driver.step)
    return spectral.PhaseState(u, v)


def step_heat(u, spec, noise, dom, cfg, driver):
    st = HeatStepper(spec, noise, dom, cfg.dt, cfg.noise_mode)
    un = st.step(np.asarray(u, float), driver.normals(st.width))
    _check(st.norm2(un), driver.step)
    return un


def _normals(driver, width):
    return driver.normals() if hasattr(driver, "stream_ids") else driver.normals(width)


def simulate_wave(mu, spec, noise, dom, z0, cfg, driver, n_steps=None, record=True):
    """Integrate the wave system; returns ``(times, U, V)`` at the record stride
    (or only the final state when ``record`` is false)."""
    st = WaveStepper(mu, spec, noise, dom, cfg.dt, cfg.noise_mode)
    n = cfg.n_steps if n_steps is None else n_steps
    u = np.array(z0[0], dtype=float)
    v = np.array(z0[1], dtype=float)
    times, U, V = [0.0], [u.copy()], [v.copy()]
    for i in range(1, n + 1):
        try:
            u, v = st.step(u, v, _normals(driver, st.width))
        except BlowUpError as exc:
            raise BlowUpError(f"{exc} (wave, mu={mu}, step {i})", step=i) from exc
        _check(st.norm2(u, v), i)
        if record and i % cfg.record_stride == 0:
            times.append(i * cfg.dt)
            U.append(u.copy())
            V.append(v.copy())
    if not record:
        return u, v
    return np.array(times), np.array(U), np.array(V)


def simulate_heat(spec, noise, dom, u0, cfg, driver, n_steps=None, record=True):
    st = HeatStepper(spec, noise, dom, cfg.dt, cfg.noise_mode)
    n = cfg.n_steps if n_steps is None else n_steps
    u = np.array(u0, dtype=float)
    times, U = [0.0], [u.copy()]
    for i in range(1, n + 1):
        try:
            u = st.step(u, _normals(driver, st.width))
        except BlowUpError as exc:
            raise BlowUpError(f"{exc} (heat, step {i})", step=i) from exc
        _check(st.norm2(u), i)
        if record and i % cfg.record_stride == 0:
            times.append(i * cfg.dt)
            U.append(u.copy())
    if not record:
        return u
    return np.array(times), np.array(U)


def simulate_coupled(mu_list, spec, noise, dom, init_wave, init_heat, cfg, driver):
    """Run the heat system and the wave system at every mass in ``mu_list``
    from one stream of Brownian increments.

    ``driver`` is an :class:`~sklimit.noise.EnsembleDriver` of width N (one
    stream per trajectory). Returns per-mass sup-in-time H-distances
    ``sup_t |u_mu(t) - u(t)|_H`` for each trajectory plus their mean and
    standard error, and ``sup_t E|u_mu(t) - u(t)|_H`` over the ensemble.
    Initial data may be shared vectors or per-trajectory arrays.
    """
    if cfg.noise_mode != "coupled_increment":
        raise ConfigError("simulate_coupled requires scheme.noise_mode = coupled_increment")
    if getattr(driver, "width", dom.N) != dom.N:
        raise ConfigError("coupled driver must have width N")
    heat = HeatStepper(spec, noise, dom, cfg.dt, "coupled_increment")
    waves = [WaveStepper(mu, spec, noise, dom, cfg.dt, "coupled_increment") for mu in mu_list]
    B = len(driver)
    uh = np.broadcast_to(np.asarray(init_heat, float), (B, dom.N)).copy()
    states = [(np.broadcast_to(np.asarray(init_wave[0], float), (B, dom.N)).copy(),
               np.broadcast_to(np.asarray(init_wave[1], float), (B, dom.N)).copy()) for _ in mu_list]
    sup = np.zeros((len(mu_list), B))
    for j, (u, _) in enumerate(states):
        sup[j] = np.linalg.norm(u - uh, axis=-1)
    # sup over t of the ensemble-mean distance
    sup_mean = sup.mean(1)
    for i in range(1, cfg.n_steps + 1):
        xi = driver.normals()
        uh_next = heat.step(uh, xi)
        _check(heat.norm2(uh_next), i)
        for j, st in enumerate(waves):
            u, v = states[j]
            u, v = st.step(u, v, xi)
            _check(st.norm2(u, v), i)
            states[j] = (u, v)
            dist = np.linalg.norm(u - uh_next, axis=-1)
            sup[j] = np.maximum(sup[j], dist)
            sup_mean[j] = max(sup_mean[j], dist.mean())
        uh = uh_next
    rows = []
    for j, mu in enumerate(mu_list):
        rows.append({
            "mu": float(mu),
            "mean_sup_error": float(sup[j].mean()),
            "stderr": float(sup[j].std(ddof=1) / np.sqrt(B)) if B > 1 else 0.0,
            "sup_of_mean": float(sup_mean[j]),
            "per_trajectory": sup[j],
        })
    return rows

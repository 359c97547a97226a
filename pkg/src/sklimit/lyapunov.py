"""Lyapunov functionals for the wave system and their Kolmogorov drifts.

The wave system is ``du = v dt``, ``mu dv = (A u - v + B(u)) dt + Q dw``. For
``theta > 0`` the functional

    K(u, v) = mu|u|^2_{H1} + (theta mu + 1/2)|u|^2 + mu^2|theta u + v|^2
              + mu<u, v> - 2 mu int bfrak(x, u) dx

has the closed-form drift

    N K = -(1 + 2 theta mu)|u|^2_{H1} - (1 - 2 theta mu) mu |v|^2
          + 2 theta^2 mu^2 <u, v> + (1 + 2 theta mu)<B(u), u> + Tr Q^2,

and for ``Phi = exp(delta K)``

    N Phi = delta Phi [N K + delta / (2 mu^2) |Q D_v K|^2],
    D_v K = mu (1 + 2 theta mu) u + 2 mu^2 v.

Drift checks work with the bracket (``N Phi / (delta Phi)``) so that large
states do not overflow.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import reaction, spectral
from .errors import BlowUpError


@dataclass(frozen=True)
class LyapunovParams:
    theta: float
    mu: float
    delta: float = 0.0
    trace_q: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


def _uv(z):
    return np.asarray(z[0], dtype=float), np.asarray(z[1], dtype=float)


def _lp_power(spec, u, dom):
    """``|u|^{p+1}_{L^{p+1}}`` for polynomial reactions, else 0."""
    if spec.variant != "polynomial":
        return np.zeros(u.shape[:-1])
    p = spec.exponent
    return spectral.lp_norm(u, p + 1, dom) ** (p + 1)


def k_theta_mu(p, z, spec, dom):
    u, v = _uv(z)
    mu, th = p.mu, p.theta
    h1 = np.sum(dom.alphas * u * u, -1)
    w = th * u + v
    out = (mu * h1 + (th * mu + 0.5) * np.sum(u * u, -1) + mu**2 * np.sum(w * w, -1)
           + mu * np.sum(u * v, -1) - 2 * mu * reaction.antiderivative_integral(spec, u, dom))
    if not np.all(np.isfinite(out)):
        raise BlowUpError("K overflow")
    return out


def k_mu(p, z, spec, dom):
    u, v = _uv(z)
    mu = p.mu
    return (mu * np.sum(dom.alphas * u * u, -1) + mu * _lp_power(spec, u, dom)
            + np.sum(u * u, -1) + mu**2 * np.sum(v * v, -1))


def generator_on_k(p, z, spec, dom):
    u, v = _uv(z)
    mu, th = p.mu, p.theta
    out = (-(1 + 2 * th * mu) * np.sum(dom.alphas * u * u, -1)
           - (1 - 2 * th * mu) * mu * np.sum(v * v, -1)
           + 2 * th**2 * mu**2 * np.sum(u * v, -1)
           + (1 + 2 * th * mu) * reaction.b_dot_u(spec, u, dom)
           + p.trace_q)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("generator overflow")
    return out


def grad_v_k(p, z):
    u, v = _uv(z)
    return p.mu * (1 + 2 * p.theta * p.mu) * u + 2 * p.mu**2 * v


def phi_bracket(p, z, spec, dom, lambdas):
    """``N Phi / (delta Phi) = N K + delta/(2 mu^2) |Q D_v K|^2``."""
    qd = lambdas * grad_v_k(p, z)
    return generator_on_k(p, z, spec, dom) + p.delta / (2 * p.mu**2) * np.sum(qd * qd, -1)


def phi_exp(p, z, spec, dom):
    with np.errstate(over="ignore"):
        return np.exp(p.delta * k_theta_mu(p, z, spec, dom))


def generator_on_phi(p, z, spec, dom, lambdas):
    """``N Phi``; entries that overflow come back as ``inf`` (``-inf``)."""
    if p.delta == 0:
        return np.zeros(np.shape(z[0])[:-1])
    with np.errstate(over="ignore", invalid="ignore"):
        return p.delta * phi_exp(p, z, spec, dom) * phi_bracket(p, z, spec, dom, lambdas)


def dissipation(p, z, spec, dom, with_h=False):
    """``|u|^2_{H1} + mu|v|^2 + |u|^{p+1}`` (plus ``|u|^2`` when ``with_h``)."""
    u, v = _uv(z)
    out = np.sum(dom.alphas * u * u, -1) + p.mu * np.sum(v * v, -1) + _lp_power(spec, u, dom)
    if with_h:
        out = out + np.sum(u * u, -1)
    return out


def drift_check_k(p, states, spec, dom):
    """``c_hat = max (N K + theta D)`` over the states (D from :func:`dissipation`)."""
    nk = generator_on_k(p, states, spec, dom)
    slack = nk + p.theta * dissipation(p, states, spec, dom)
    return {"theta": p.theta, "delta": p.delta, "mu": p.mu, "c_hat": float(np.max(slack)),
            "violation_count": int(np.sum(~np.isfinite(slack))), "n_states": int(slack.size)}


def sandwich_constants(p, states, spec, dom):
    """Fitted ``c1 = min K_theta/K_mu`` and ``c2 = max K_theta/(K_mu + 1)``."""
    kt = k_theta_mu(p, states, spec, dom)
    km = k_mu(p, states, spec, dom)
    nz = km > 0
    return {"c1": float(np.min(kt[nz] / km[nz])), "c2": float(np.max(kt / (km + 1.0)))}


def random_states(dom, mu, n, rng, radii=(1e-2, 1e2), decay=1.0):
    """States with log-uniform size and ``k^-decay`` spectral profile; v is
    scaled by ``1/sqrt(mu)`` so that ``mu|v|^2`` and ``|u|^2_{H1}`` are comparable."""
    r = np.exp(rng.uniform(np.log(radii[0]), np.log(radii[1]), size=(n, 1)))
    prof = dom.k ** (-decay - 1.0)
    u = r * prof * rng.standard_normal((n, dom.N))
    v = r * prof * dom.k * rng.standard_normal((n, dom.N)) / math.sqrt(mu)
    return u, v


def large_state_probe(dom, mu, n, rng, size=1e3):
    """Random directions scaled to ``|u|_{H1} = size`` (with comparable
    ``sqrt(mu)|v|``), plus pure-u and pure-v directions."""
    u, v = random_states(dom, mu, n, rng, radii=(1.0, 1.0))
    u[: n // 4] = 0.0
    v[n // 4 : n // 2] = 0.0
    scale = np.sqrt(np.sum(dom.alphas * u * u, -1) + mu * np.sum(v * v, -1))[:, None]
    return u * size / scale, v * size / scale


def _bisect(passes, lo, hi, iters=40):
    if not passes(lo):
        return 0.0
    if passes(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if passes(mid) else (lo, mid)
    return lo


def fit_theta(mu_list, spec, dom, trace_q, rng, n_probe=2000, size=1e3, theta_max=2.0):
    """Largest theta whose drift ``N K + theta D`` is negative on the
    large-state probe for every mu."""
    probes = {mu: large_state_probe(dom, mu, n_probe, rng, size) for mu in mu_list}

    def ok(th):
        for mu, z in probes.items():
            p = LyapunovParams(max(th, 1e-300), mu, 0.0, trace_q)
            if np.any(generator_on_k(p, z, spec, dom) + th * dissipation(p, z, spec, dom) >= 0):
                return False
        return True

    return _bisect(ok, 1e-12, theta_max)


def fit_delta(theta, mu_list, spec, dom, lambdas, rng, n_probe=2000, size=1e3, delta_max=10.0):
    """Largest delta whose Phi-drift bracket is negative on the large-state
    probe for every mu."""
    trace_q = float(np.sum(lambdas**2))
    probes = {mu: large_state_probe(dom, mu, n_probe, rng, size) for mu in mu_list}

    def ok(d):
        for mu, z in probes.items():
            p = LyapunovParams(theta, mu, d, trace_q)
            if np.any(phi_bracket(p, z, spec, dom, lambdas) >= 0):
                return False
        return True

    return _bisect(ok, 0.0, delta_max)


def fit_phi_constants(p, states, spec, dom, lambdas, probe):
    """``lambda_1`` from the large-state probe, then the smallest ``lambda_2``
    making ``bracket <= -lambda_1 theta (D_H - lambda_2 / theta)`` on ``states``."""
    g = phi_bracket(p, probe, spec, dom, lambdas)
    d = dissipation(p, probe, spec, dom, with_h=True)
    lam1 = float(np.min(-g / (p.theta * d)))
    gs = phi_bracket(p, states, spec, dom, lambdas)
    ds = dissipation(p, states, spec, dom, with_h=True)
    lam2 = float(np.max(p.theta * (gs / (lam1 * p.theta) + ds)))
    return lam1, lam2


def phi_sign_check(p, states, spec, dom, lambdas, lam1, lam2, tol=1e-9):
    """Count states violating ``N Phi <= -lambda_1 theta delta Phi (D_H - lambda_2/theta)``,
    evaluated on the bracket with relative tolerance ``tol``."""
    g = phi_bracket(p, states, spec, dom, lambdas)
    rhs = -lam1 * p.theta * (dissipation(p, states, spec, dom, with_h=True) - lam2 / p.theta)
    bad = g > rhs + tol * (np.abs(g) + np.abs(rhs))
    return {"violation_count": int(bad.sum()), "n_states": int(bad.size),
            "pass_fraction": float(1.0 - bad.mean()), "worst_margin": float(np.max(g - rhs))}


def invariance_identity(p, measure, spec):
    """Sample mean of ``N K`` over invariant samples with its standard error."""
    vals = generator_on_k(p, (measure.u, measure.v), spec, measure.domain)
    n = vals.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return {"mean": float(vals.mean()), "stderr": se, "z": float(vals.mean() / se) if se > 0 else 0.0,
            "trace_q": p.trace_q, "n": n}

"""Mode-wise propagators for the damped wave group and the heat semigroup.

On mode k the linear wave system ``mu u'' + u' + a u = 0`` is the first-order
system ``z' = M z`` with ``M = [[0, 1], [-a/mu, -1/mu]]``. Writing
``tau = -1/(2 mu)`` for half the trace and ``d = (1 - 4 mu a) / (4 mu^2)``,

    exp(t M) = e^{tau t} [ C(d t^2) I + t S(d t^2) (M - tau I) ]

with ``C = cosh(sqrt(x))`` and ``S = sinh(sqrt(x)) / sqrt(x)`` continued to
``x < 0`` by cos/sin. Both are entire in ``x``, so a short series covers the
near-critical band without cancellation, and the overdamped branch is
evaluated through the slow root ``-2a / (1 + sqrt(1 - 4 mu a))``.
"""

import numpy as np

from . import spectral
from .errors import NumericalError

CRITICAL_BAND = 1e-8


def regime(mu, a):
    disc = 1.0 - 4.0 * mu * np.asarray(a, dtype=float)
    return np.where(np.abs(disc) < CRITICAL_BAND, "critical", np.where(disc < 0, "underdamped", "overdamped"))


def _check_mu(mu):
    if not mu > 0:
        raise ValueError(f"mass parameter mu must be positive, got {mu}")


def wave_entries(mu, t, a):
    """Entries ``(E11, E12, E21, E22)`` of ``exp(t M)``, broadcast over t and a."""
    _check_mu(mu)
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(t < 0):
        raise ValueError("propagator time must be non-negative")
    t, a = np.broadcast_arrays(t, a)
    disc = 1.0 - 4.0 * mu * a
    x = disc * t**2 / (4.0 * mu**2)
    tau_t = -t / (2.0 * mu)

    eC = np.empty_like(x)
    tS = np.empty_like(x)

    ser = np.abs(x) < 1e-4
    if np.any(ser):
        xs = x[ser]
        e = np.exp(tau_t[ser])
        eC[ser] = e * (1 + xs / 2 + xs**2 / 24 + xs**3 / 720)
        tS[ser] = e * t[ser] * (1 + xs / 6 + xs**2 / 120 + xs**3 / 5040)

    over = (~ser) & (x > 0)
    if np.any(over):
        sq = np.sqrt(disc[over])
        r = np.sqrt(x[over])
        slow = np.exp(t[over] * (-2.0 * a[over] / (1.0 + sq)))
        fast = np.exp(-2.0 * r)
        eC[over] = 0.5 * slow * (1.0 + fast)
        tS[over] = t[over] * slow * (-np.expm1(-2.0 * r)) / (2.0 * r)

    under = (~ser) & (x < 0)
    if np.any(under):
        r = np.sqrt(-x[under])
        e = np.exp(tau_t[under])
        eC[under] = e * np.cos(r)
        tS[under] = t[under] * e * np.sin(r) / r

    half = tS / (2.0 * mu)
    return eC + half, tS, -tS * a / mu, eC - half


def wave_propagator(mu, t, a):
    """``exp(t M)`` as an array of shape ``(..., 2, 2)``."""
    e11, e12, e21, e22 = wave_entries(mu, t, a)
    return np.stack([np.stack([e11, e12], -1), np.stack([e21, e22], -1)], -2)


def wave_phi1(mu, t, a):
    """Entries of ``M^{-1} (exp(t M) - I)`` (the integral of exp(sM) over [0, t])."""
    a = np.asarray(a, dtype=float)
    e11, e12, e21, e22 = wave_entries(mu, t, a)
    f11 = (-(e11 - 1.0) - mu * e21) / a
    f12 = (-e12 - mu * (e22 - 1.0)) / a
    return f11, f12, e11 - 1.0, e12


def heat_factor(t, a):
    return np.exp(-np.asarray(a) * t)


def heat_phi1(t, a):
    a = np.asarray(a, dtype=float)
    return -np.expm1(-a * t) / a


def apply_s_mu(mu, t, z, dom, shift=0.0):
    """``S_mu(t) z`` for a phase state ``z = (u, v)``."""
    e11, e12, e21, e22 = wave_entries(mu, t, dom.alphas + shift)
    u, v = z
    return spectral.PhaseState(e11 * u + e12 * v, e21 * u + e22 * v)


def apply_heat(t, x, dom, shift=0.0):
    if t < 0:
        raise ValueError("heat semigroup time must be non-negative")
    return heat_factor(t, dom.alphas + shift) * np.asarray(x, dtype=float)


def phi_mu(mu, t, y, dom):
    """``(1/mu) Pi_1 S_mu(t)(0, y) - S(t) y``."""
    _, e12, _, _ = wave_entries(mu, t, dom.alphas)
    return (e12 / mu - heat_factor(t, dom.alphas)) * np.asarray(y, dtype=float)


# energy identities --------------------------------------------------------


def _panels(mu, T, dom, n_quad, max_panels=200000):
    """Composite Gauss-Legendre nodes on [0, T], panels narrow enough to
    resolve the fast decay scale mu and the fastest oscillation."""
    disc = 1.0 - 4.0 * mu * dom.alphas
    omega = np.sqrt(np.maximum(-disc, 0.0)) / (2.0 * mu)
    width = min(T, mu / 2.0)
    if omega.max() > 0:
        width = min(width, np.pi / (2.0 * omega.max()))
    n_panels = int(min(np.ceil(T / width), max_panels))
    edges = np.linspace(0.0, T, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * x
    weights = half[:, None] * w
    return edges, nodes, weights


def _energy_residual(mu, beta, z, T, n_quad, dom, which):
    _check_mu(mu)
    x0, y0 = (np.asarray(c, dtype=float) for c in z)
    al = dom.alphas
    edges, nodes, weights = _panels(mu, T, dom, n_quad)

    e11, e12, e21, e22 = wave_entries(mu, nodes[..., None], al)
    u = e11 * x0 + e12 * y0
    v = e21 * x0 + e22 * y0
    if which == 1:
        integrand = np.sum(al ** (beta - 1) * v**2, axis=-1)
        rhs = mu * np.sum(al ** (beta - 1) * y0**2) + np.sum(al**beta * x0**2)
    else:
        integrand = np.sum(al**beta * u**2, axis=-1)
        rhs = mu * np.sum(al**beta * x0**2) + np.sum(al ** (beta - 1) * (mu * y0 + x0) ** 2)
    cum = np.concatenate([[0.0], np.cumsum(np.sum(integrand * weights, axis=-1))])

    stride = max(len(edges) // 64, 1)
    idx = np.unique(np.concatenate([np.arange(0, len(edges), stride), [len(edges) - 1]]))
    t = edges[idx]
    E11, E12, E21, E22 = wave_entries(mu, t[:, None], al)
    ut = E11 * x0 + E12 * y0
    vt = E21 * x0 + E22 * y0
    if which == 1:
        lhs = mu * np.sum(al ** (beta - 1) * vt**2, -1) + np.sum(al**beta * ut**2, -1) + 2 * cum[idx]
    else:
        lhs = mu * np.sum(al**beta * ut**2, -1) + np.sum(al ** (beta - 1) * (mu * vt + ut) ** 2, -1) + 2 * cum[idx]
    if rhs == 0:
        return float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - rhs)) / rhs)


def energy_residual_1(mu, beta, z, T, n_quad, dom):
    """Relative defect of ``mu|v|^2_{beta-1} + |u|^2_beta + 2 int |v|^2_{beta-1}``
    against its initial value, maximized over a grid in [0, T]."""
    return _energy_residual(mu, beta, z, T, n_quad, dom, 1)


def energy_residual_2(mu, beta, z, T, n_quad, dom):
    """Same for ``mu|u|^2_beta + |mu v + u|^2_{beta-1} + 2 int |u|^2_beta``."""
    return _energy_residual(mu, beta, z, T, n_quad, dom, 2)


# Lemma-3 ratio ------------------------------------------------------------


def lemma3_integral(mu, rho, a, n_quad=48):
    """``int_0^inf s^{-rho} (E12(s)/mu)^2 ds`` for a single mode of eigenvalue a."""
    _check_mu(mu)
    disc = 1.0 - 4.0 * mu * a
    if disc > 0:
        slow = 2.0 * a / (1.0 + np.sqrt(disc))
        omega = 0.0
    else:
        slow = 1.0 / (2.0 * mu)
        omega = np.sqrt(-disc) / (2.0 * mu)
    if not slow > 0:
        raise NumericalError("integrand does not decay; Lemma-3 integral diverges")
    s_end = np.log(1e14) / (2.0 * slow) + 10.0 * mu
    h0 = min(mu / 4.0, 0.25 / slow)
    if omega > 0:
        h0 = min(h0, np.pi / (4.0 * omega))
    h0 = min(h0, s_end)

    # s^{-rho} singularity on [0, h0]: Gauss-Jacobi weight (1 + x)^{-rho}
    from scipy.special import roots_jacobi

    xj, wj = roots_jacobi(n_quad, 0.0, -rho)
    s = 0.5 * h0 * (xj + 1.0)
    g = wave_entries(mu, s, a)[1] / mu
    first = (0.5 * h0) ** (1.0 - rho) * np.sum(wj * g**2)

    cap = np.pi / (2.0 * omega) if omega > 0 else np.inf
    edges = [h0]
    while edges[-1] < s_end:
        edges.append(min(edges[-1] + min(edges[-1], cap), s_end))
    edges = np.array(edges)
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * xg
    vals = nodes ** (-rho) * (wave_entries(mu, nodes, a)[1] / mu) ** 2
    total = first + np.sum(half[:, None] * wg * vals)

    peak = np.max(vals) if vals.size else 0.0
    if vals.size and peak > 0 and vals[-1, -1] > 1e-12 * peak:
        raise NumericalError("Lemma-3 integrand has not decayed at the cutoff")
    return float(total)


def lemma3_ratio(mu, rho, beta, k, dom, lam_k=1.0):
    """Lemma-3 integral over the scale ``lambda_k^2 / alpha_k^{1-(rho+beta)}``.

    The H^beta weight ``alpha_k^beta`` and ``lambda_k^2`` cancel, leaving
    ``alpha_k^{1-rho} int s^{-rho} (E12/mu)^2 ds``.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if beta < 0 or rho + beta >= 1:
        raise ValueError("need beta >= 0 and rho + beta < 1")
    a = spectral.eigenvalue(k, dom)
    if lam_k == 0:
        return 0.0
    integral = lam_k**2 * a**beta * lemma3_integral(mu, rho, a)
    return float(integral / (lam_k**2 / a ** (1.0 - (rho + beta))))


# limit probes -------------------------------------------------------------


def probe_times(mu, T, n=256):
    fine = np.geomspace(mu * 1e-3, T, n)
    return np.unique(np.concatenate([[0.0], fine, np.linspace(0.0, T, n)]))


def extremal_family(R, beta, mu, dom, n_random=64, seed=0):
    """Candidate initial data on ``{|x|_{H^beta} + sqrt(mu)|y|_H <= R}``:
    single modes at full radius in x or y, split pairs, and random points."""
    N = dom.N
    al = dom.alphas
    xs, ys = [], []
    eye = np.eye(N)
    for k in range(N):
        xs.append(R * al[k] ** (-beta / 2) * eye[k])
        ys.append(np.zeros(N))
        xs.append(np.zeros(N))
        ys.append(R / np.sqrt(mu) * eye[k])
        xs.append(0.5 * R * al[k] ** (-beta / 2) * eye[k])
        ys.append(0.5 * R / np.sqrt(mu) * eye[k])
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        dx = rng.standard_normal(N)
        dy = rng.standard_normal(N)
        dx /= spectral.sobolev_norm(dx, beta, dom)
        dy /= np.linalg.norm(dy)
        s = rng.uniform()
        xs.append(s * R * dx)
        ys.append((1 - s) * R / np.sqrt(mu) * dy)
    return np.array(xs), np.array(ys)


def semigroup_limit_probe(mu_list, R, beta, T, dom, n_random=64, seed=0):
    """Sup over the extremal family and ``t <= T`` of
    ``|Pi_1 S_mu(t)(x, y) - S(t) x|_H`` and of the convolution defect for
    time-constant forcing ``psi = (R/T) alpha_k^{-beta/2} e_k``."""
    rows = []
    al = dom.alphas
    for mu in mu_list:
        xs, ys = extremal_family(R, beta, mu, dom, n_random, seed)
        t = probe_times(mu, T)
        e11, e12, _, _ = wave_entries(mu, t[:, None], al)
        heat = heat_factor(t[:, None], al)
        diff = (e11 - heat)[None] * xs[:, None, :] + e12[None] * ys[:, None, :]
        err = np.sqrt(np.sum(diff**2, axis=-1))
        point = float(err.max())
        y_only = float(np.max(np.sqrt(np.sum((e12[None] * ys[:, None, :]) ** 2, -1))
                              / np.maximum(np.linalg.norm(ys, axis=-1), 1e-300)[:, None]))

        _, f12, _, _ = wave_phi1(mu, t[:, None], al)
        conv_kernel = f12 / mu - heat_phi1(t[:, None], al)
        psi_amp = (R / T) * al ** (-beta / 2)
        conv = float(np.max(np.abs(conv_kernel) * psi_amp))
        rows.append({
            "mu": float(mu),
            "R": float(R),
            "sup_error": point,
            "conv_error": conv,
            "y_gain": y_only,
            "y_gain_bound": 2.0 * mu,
            "sqrt_mu_R_bound": 2.0 * np.sqrt(mu) * R,
        })
    return rows

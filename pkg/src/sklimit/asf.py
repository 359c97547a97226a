"""Tangent dynamics of the heat system and the asymptotic smoothing checks.

The damped tangent solves ``rho' = A rho + DB(u) rho - alpha_nbar P_nbar rho``
(the control ``v = alpha_nbar Q^{-1} P_nbar rho`` removes the low modes);
without damping it is the first variation ``J_t h`` of the flow. Both are
stepped with exponential Euler and DB(u) frozen over a step, which is the
exact derivative of the discrete heat map used by the integrator.
"""

import math

import numpy as np

from . import integrator, reaction, semigroup
from .errors import ConfigError
from .noise import EnsembleDriver


def _rates(dom, spec, nbar, damped):
    lam = dom.alphas + spec.linear_coeff
    if damped:
        lam = lam + dom.alphas[nbar - 1] * (dom.k <= nbar)
    return lam


def check_gap(dom, spec, nbar):
    gap = dom.alphas[nbar - 1] - spec.slope_bound
    if not gap > 0:
        raise ConfigError(f"need alpha_nbar > L_b, got alpha_{nbar} - L_b = {gap:g}")
    return gap


class TangentStepper:
    """Advances tangent vectors (last axis = mode) along a reference path.

    ``rho`` may carry extra axes; with ``rho`` of shape (..., N, N) holding
    one tangent per row, the whole Jacobian is propagated at once.
    """

    def __init__(self, spec, dom, dt, nbar=1, damped=True):
        if damped:
            check_gap(dom, spec, nbar)
        lam = _rates(dom, spec, nbar, damped)
        self.e = semigroup.heat_factor(dt, lam)
        self.phi = semigroup.heat_phi1(dt, lam)
        self.spec, self.dom = spec, dom
        self.nonlinear = spec.variant != "linear"

    def step(self, u, rho):
        out = self.e * rho
        if self.nonlinear:
            ub = u if rho.ndim == np.ndim(u) else np.expand_dims(u, -2)
            out = out + self.phi * reaction.linearize_apply(self.spec, ub, rho, self.dom)
        return out


def evolve_tangent(u_path, h, nbar, spec, dom, dt, damped=True):
    """Tangent trajectory along ``u_path`` (shape (n_steps+1, ..., N)).

    Returns an array of shape ``(n_steps+1,) + h.shape`` with ``rho[0] = h``.
    """
    u_path = np.asarray(u_path, dtype=float)
    if nbar > dom.N or nbar < 1:
        raise ConfigError(f"nbar={nbar} outside 1..{dom.N}")
    st = TangentStepper(spec, dom, dt, nbar, damped)
    rho = np.array(h, dtype=float)
    out = np.empty((u_path.shape[0],) + rho.shape)
    out[0] = rho
    for i in range(1, u_path.shape[0]):
        rho = st.step(u_path[i - 1], rho)
        out[i] = rho
    return out


def decay_check(rho, h, nbar, L_b, times, dom):
    """Max over t of ``|rho(t)|^2 / (|h|^2 exp(-(alpha_nbar - L_b) t))``."""
    rate = dom.alphas[nbar - 1] - L_b
    if not rate > 0:
        raise ConfigError("decay bound needs alpha_nbar > L_b")
    h2 = np.sum(np.asarray(h) ** 2, -1)
    num = np.sum(np.asarray(rho) ** 2, -1)
    shape = (-1,) + (1,) * (num.ndim - 1)
    bound = h2 * np.exp(-rate * np.asarray(times)).reshape(shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, num / bound, np.where(num > 0, np.inf, 0.0))
    return {"max_ratio": float(np.max(ratio)), "ratio": ratio, "rate": float(rate)}


def control_energy(rho, times, noise, nbar, dom, L_b):
    """``int |Q v|^2 ds`` with ``v = alpha_nbar Q^{-1} P_nbar rho`` (trapezoid),
    together with the bound ``|h|^2 alpha_nbar^2 / (alpha_nbar - L_b)``."""
    if np.any(noise.lambdas[:nbar] <= 0):
        raise ConfigError("control needs lambda_k > 0 for k <= nbar")
    an = dom.alphas[nbar - 1]
    rho = np.asarray(rho)
    dens = an**2 * np.sum(rho[..., :nbar] ** 2, -1)
    energy = np.trapezoid(dens, np.asarray(times), axis=0)
    bound = np.sum(rho[0] ** 2, -1) * an**2 / (an - L_b)
    return {"energy": energy, "bound": bound, "ok": bool(np.all(energy <= bound))}


def simulate_path(x, spec, noise, dom, dt, n_steps, driver):
    """Heat trajectory (every step) for a batch driven by ``driver``."""
    st = integrator.HeatStepper(spec, noise, dom, dt, "exact_covariance")
    B = len(driver)
    u = np.broadcast_to(np.asarray(x, float), (B, dom.N)).copy()
    path = np.empty((n_steps + 1, B, dom.N))
    path[0] = u
    for i in range(1, n_steps + 1):
        u = st.step(u, driver.normals())
        integrator._check(st.norm2(u), i)
        path[i] = u
    return path


def gradient_probe(x, t_grid, spec, noise, dom, dt=1e-3, ensemble_n=200, nbar=1, j=1, seed=0):
    """Monte Carlo check of the asymptotic smoothing estimate for
    ``phi(u) = cos <u, e_j>``.

    Along each trajectory the undamped and damped Jacobians are propagated
    in full, giving ``|D P_t phi(x)|`` (norm of ``E[J_t^T D phi(u_t)]``), the
    tangent remainder ``|E[rho_t^T D phi(u_t)]|`` and the right-hand side
    ``C sqrt(P_t phi^2) + exp(-(alpha_nbar - L_b) t) sqrt(P_t |D phi|^2)``
    with ``C = alpha_nbar / sqrt(alpha_nbar - L_b)``.
    """
    gap = check_gap(dom, spec, nbar)
    an = dom.alphas[nbar - 1]
    C = an / math.sqrt(gap)
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    heat = integrator.HeatStepper(spec, noise, dom, dt, "exact_covariance")
    free = TangentStepper(spec, dom, dt, nbar, damped=False)
    damp = TangentStepper(spec, dom, dt, nbar, damped=True)
    drv = EnsembleDriver(seed, range(ensemble_n), dom.N)
    B, N = ensemble_n, dom.N
    u = np.broadcast_to(np.asarray(x, float), (B, N)).copy()
    # row i of J holds the tangent started at e_i
    J = np.broadcast_to(np.eye(N), (B, N, N)).copy()
    R = J.copy()
    rows, step = [], 0
    for t in t_grid:
        for _ in range(int(round(t / dt)) - step):
            J = free.step(u, J)
            R = damp.step(u, R)
            u = heat.step(u, drv.normals())
            step += 1
            integrator._check(heat.norm2(u), step)
        s = np.sin(u[:, j - 1])
        c = np.cos(u[:, j - 1])
        # D phi(u) = -sin(u_j) e_j, so <D phi, J h> picks column j of each tangent
        g = -s[:, None] * J[:, :, j - 1]
        r = -s[:, None] * R[:, :, j - 1]
        grad, gse = g.mean(0), g.std(0, ddof=1) / math.sqrt(B)
        rem = r.mean(0)
        lhs = float(np.linalg.norm(grad))
        lhs_se = float(np.linalg.norm(gse))
        p_phi2 = float(np.mean(c * c))
        p_dphi2 = float(np.mean(s * s))
        term1 = C * math.sqrt(p_phi2)
        term2 = math.exp(-gap * t) * math.sqrt(p_dphi2)
        rhs = term1 + term2
        rows.append({"t": float(t), "lhs": lhs, "lhs_stderr": lhs_se, "rhs_term1": term1, "rhs_term2": term2,
                     "margin": rhs - (lhs + 3 * lhs_se), "remainder": float(np.linalg.norm(rem)),
                     "remainder_bound": term2})
    rem = np.array([r["remainder"] for r in rows])
    ok = rem > 0
    fit = float(-np.polyfit(t_grid[ok], np.log(rem[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return {"rows": rows, "C": C, "gap": gap, "remainder_decay_rate": fit}


def fd_first_variation(x, h, eps, spec, noise, dom, dt, n_steps, seed=0):
    """``(u^{x + eps h}(t) - u^x(t)) / eps`` with shared noise."""
    drv = EnsembleDriver(seed, [0], dom.N)
    a = simulate_path(x, spec, noise, dom, dt, n_steps, drv)[-1, 0]
    b = simulate_path(np.asarray(x) + eps * np.asarray(h), spec, noise, dom, dt, n_steps, drv.fork())[-1, 0]
    return (b - a) / eps

"""Ground metrics on H, empirical Wasserstein-1 distances and the
contraction probe for the heat semigroup."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import integrator
from .errors import ConfigError
from .noise import EnsembleDriver

EXACT_MAX_N = 4096


@dataclass(frozen=True)
class GroundMetric:
    """``variant`` is ``"l2"`` or ``"path"``; ``refine`` is the number of
    interior points used by the path descent (0 keeps the straight line)."""

    variant: str = "l2"
    eta: float = 0.0
    refine: int = 0

    def __post_init__(self):
        if self.variant not in ("l2", "path"):
            raise ConfigError(f"unknown ground metric {self.variant!r}")
        if self.variant == "path" and not self.eta > 0:
            raise ConfigError(f"path metric needs eta > 0, got {self.eta}")
        if self.refine < 0:
            raise ConfigError("refine must be >= 0")

    @classmethod
    def parse(cls, text):
        """``"l2"`` or ``"path:<eta>"``."""
        if text == "l2":
            return cls("l2")
        if text.startswith("path:"):
            return cls("path", float(text.split(":", 1)[1]))
        raise ConfigError(f"metric must be 'l2' or 'path:<eta>', got {text!r}")

    @property
    def name(self):
        return "l2" if self.variant == "l2" else f"path:{self.eta:g}"


def default_eta(spec, noise, dom):
    """Conservative exponent ``0.1 (alpha_1 - L_b) / (1 + Tr Q^2)``."""
    gap = dom.alphas[0] - max(spec.slope_bound, 0.0)
    return 0.1 * gap / (1.0 + noise.trace_q2)


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("ground distance needs finite inputs")


def _segment_quad(eta, x, y):
    """Weighted length of the straight segment by adaptive Gauss-Kronrod."""
    d = y - x
    length = float(np.linalg.norm(d))
    if length == 0.0:
        return 0.0
    xx, xd, dd = float(x @ x), float(x @ d), float(d @ d)
    val, _ = integrate.quad(lambda t: math.exp(eta * (xx + 2 * t * xd + t * t * dd)), 0.0, 1.0,
                            epsrel=1e-8, epsabs=0.0, limit=200)
    return val * length


def segment_closed_form(eta, x, y):
    """Straight-segment weighted length via the Dawson function,
    ``(e^{eta|y|^2} D(z1) - e^{eta|x|^2} D(z0)) / sqrt(eta)``. Broadcasts."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    A = np.sum(d * d, -1)
    B = 2 * np.sum(x * d, -1)
    r = np.sqrt(eta * A)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(A > 0, B / (2 * A), 0.0)
        z0, z1 = r * s, r * (1 + s)
        val = (np.exp(eta * np.sum(y * y, -1)) * special.dawsn(z1)
               - np.exp(eta * np.sum(x * x, -1)) * special.dawsn(z0)) / math.sqrt(eta)
    return np.where(A > 0, val, 0.0)


def sandwich(gm, x, y):
    """``(|x-y|, exp(eta(|x|^2+|y|^2)) |x-y|)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    base = np.linalg.norm(x - y, axis=-1)
    if gm.variant == "l2":
        return base, base
    return base, np.exp(gm.eta * (np.sum(x * x, -1) + np.sum(y * y, -1))) * base


def _gl_path_cost(eta, pts, nodes, weights):
    seg = pts[1:] - pts[:-1]
    g = pts[:-1, None, :] + nodes[None, :, None] * seg[:, None, :]
    w = np.exp(eta * np.sum(g * g, -1)) @ weights
    return float(np.sum(w * np.linalg.norm(seg, axis=-1)))


def _refine_path(eta, x, y, m, tol=1e-6, max_sweeps=50):
    """Block coordinate descent on the interior points of a piecewise-linear
    path; each block move minimises the two adjacent segment costs."""
    nodes, weights = np.polynomial.legendre.leggauss(24)
    nodes, weights = 0.5 * (nodes + 1), 0.5 * weights
    pts = x + np.linspace(0, 1, m + 2)[:, None] * (y - x)
    cost = _gl_path_cost(eta, pts, nodes, weights)
    for _ in range(max_sweeps):
        prev = cost
        for i in range(1, m + 1):
            def local(p, i=i):
                trio = np.stack([pts[i - 1], p, pts[i + 1]])
                return _gl_path_cost(eta, trio, nodes, weights)
            res = optimize.minimize(local, pts[i], method="BFGS", options={"gtol": 1e-10})
            if res.fun < local(pts[i]):
                pts[i] = res.x
        cost = _gl_path_cost(eta, pts, nodes, weights)
        if prev - cost <= tol * prev:
            break
    return pts


def ground_distance(gm, x, y, report=False):
    """Distance between two coefficient vectors.

    For the path metric this is an upper approximation of the infimum over
    paths (straight line, optionally refined), clamped into the sandwich
    ``|x-y| <= d <= exp(eta(|x|^2+|y|^2))|x-y|``. With ``report=True`` also
    returns ``{"raw", "lower", "upper", "active"}``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    if x.shape != y.shape:
        raise ValueError("points must live in the same space")
    lo, hi = sandwich(gm, x, y)
    if gm.variant == "l2":
        raw = float(lo)
    else:
        raw = _segment_quad(gm.eta, x, y)
        if gm.refine and raw > 0:
            pts = _refine_path(gm.eta, x, y, gm.refine)
            raw = min(raw, sum(_segment_quad(gm.eta, a, b) for a, b in zip(pts[:-1], pts[1:])))
    val = min(max(raw, float(lo)), float(hi))
    active = "lower" if raw < lo else "upper" if raw > hi else "none"
    if report:
        return val, {"raw": raw, "lower": float(lo), "upper": float(hi), "active": active}
    return val


def cost_matrix(gm, X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _finite(X, Y)
    C = cdist(X, Y)
    if gm.variant == "path":
        line = segment_closed_form(gm.eta, X[:, None, :], Y[None, :, :])
        upper = np.exp(gm.eta * (np.sum(X * X, 1)[:, None] + np.sum(Y * Y, 1)[None, :])) * C
        C = np.clip(line, C, upper)
    return C


@dataclass
class TransportResult:
    value: float
    solver: str
    plan: np.ndarray
    bounds: dict
    converged: bool = True
    iterations: int = 0

    def as_dict(self):
        return {"value": self.value, "solver": self.solver, "bounds": self.bounds,
                "converged": self.converged, "iterations": self.iterations}


def exact_assignment(C):
    """Optimal perfect matching; returns ``(cost / n, permutation)``."""
    C = np.asarray(C, dtype=float)
    if C.shape[0] != C.shape[1]:
        raise ValueError(f"exact solver needs equal sample counts, got {C.shape}")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(C.shape[0], dtype=int)
    perm[rows] = cols
    return float(C[rows, cols].mean()), perm


def sinkhorn(C, eps, tol=1e-9, max_iter=100000):
    """Log-domain Sinkhorn for uniform marginals with epsilon scaling (warm
    starts from ``eps * 2^j``); returns ``(<P, C>, P, converged, iterations)``.
    Convergence means the row-marginal L1 error is below ``tol``."""
    C = np.asarray(C, dtype=float)
    if not eps > 0:
        raise ValueError("entropic solver needs eps > 0")
    n, m = C.shape
    loga, logb = -math.log(n), -math.log(m)
    f = np.zeros(n)
    g = np.zeros(m)
    scale = max(float(C.max()), eps)
    schedule = [eps * 2.0**j for j in range(int(max(0, math.log2(scale / eps))), 0, -1)] + [eps]
    total = 0
    converged = False
    for e in schedule:
        last = e == eps
        budget = max_iter - total if last else 200
        for it in range(1, budget + 1):
            f = e * (loga - special.logsumexp((g[None, :] - C) / e, axis=1))
            g = e * (logb - special.logsumexp((f[:, None] - C) / e, axis=0))
            if it % 10 == 0 or it == 1:
                rows = special.logsumexp((f[:, None] + g[None, :] - C) / e, axis=1)
                if np.abs(np.exp(rows) - 1.0 / n).sum() < (tol if last else 1e-3):
                    converged = last
                    break
        total += it
        if total >= max_iter:
            break
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    return float(np.sum(P * C)), P, converged, total


def parse_solver(text):
    if text == "exact":
        return "exact", None
    if text.startswith("entropic:"):
        return "entropic", float(text.split(":", 1)[1])
    raise ConfigError(f"solver must be 'exact' or 'entropic:<eps>', got {text!r}")


def _coords(m):
    return m.u if hasattr(m, "u") else np.asarray(m, dtype=float)


def wasserstein(m1, m2, gm=None, solver="exact", eps=None):
    """Empirical W1 between two sample sets (u-coefficients for measures)."""
    gm = gm or GroundMetric()
    if solver.startswith("entropic:"):
        solver, eps = parse_solver(solver)
    X, Y = _coords(m1), _coords(m2)
    if X.shape[-1] != Y.shape[-1]:
        raise ValueError("measures live in different spaces")
    if solver == "exact" and X.shape[0] != Y.shape[0]:
        raise ValueError(f"exact solver needs equal sample counts ({X.shape[0]} vs {Y.shape[0]})")
    C = cost_matrix(gm, X, Y)
    bounds = {"mean_difference": float(np.linalg.norm(X.mean(0) - Y.mean(0)))}
    if gm.variant == "path":
        lo, _ = exact_assignment(cdist(X, Y)) if X.shape[0] == Y.shape[0] else (None, None)
        bounds["l2_lower"] = lo
    if solver == "exact":
        if X.shape[0] > EXACT_MAX_N:
            raise ValueError(f"exact solver limited to n <= {EXACT_MAX_N}; use entropic")
        val, perm = exact_assignment(C)
        return TransportResult(val, "exact", perm, bounds)
    if solver == "entropic":
        val, P, ok, it = sinkhorn(C, eps)
        return TransportResult(val, f"entropic:{eps:g}", P, bounds, ok, it)
    raise ConfigError(f"unknown solver {solver!r}")


def contraction_probe(x, y, t_grid, ensemble_n, spec, noise, dom, gm=None, dt=1e-3,
                      seed=0, eps_ball=0.1, coupled=False):
    """Heat ensembles started at ``x`` and ``y``; per t the empirical
    distance between the two ensembles and the fraction of trajectory pairs
    closer than ``eps_ball``. ``irreducible_fraction`` runs over all n*n
    cross pairs; ``paired_fraction`` only over index-matched pairs.
    ``coupled`` shares the noise."""
    gm = gm or GroundMetric()
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    st = integrator.HeatStepper(spec, noise, dom, dt, "exact_covariance")
    n = int(ensemble_n)
    da = EnsembleDriver(seed, range(n), dom.N)
    db = da.fork() if coupled else EnsembleDriver(seed, range(n, 2 * n), dom.N)
    ux = np.tile(np.asarray(x, float), (n, 1))
    uy = np.tile(np.asarray(y, float), (n, 1))
    rows, step = [], 0
    for target in t_grid:
        k = int(round(target / dt)) - step
        for _ in range(max(k, 0)):
            ux = st.step(ux, da.normals())
            uy = st.step(uy, db.normals())
            step += 1
            integrator._check(st.norm2(ux), step)
            integrator._check(st.norm2(uy), step)
        gap = np.linalg.norm(ux - uy, axis=1)
        w = wasserstein(ux, uy, gm).value
        rows.append({"t": float(target), "rho": w, "mean_pair_distance": float(gap.mean()),
                     "irreducible_fraction": float(np.mean(cdist(ux, uy) < eps_ball)),
                     "paired_fraction": float(np.mean(gap < eps_ball))})
    vals = np.array([r["rho"] for r in rows])
    ok = vals > 0
    rate = float(-np.polyfit(t_grid[ok], np.log(vals[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return {"rows": rows, "delta_hat": rate}


def brute_force_matching(C):
    """Minimum mean matching cost by enumerating all permutations (n <= 9)."""
    from itertools import permutations

    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n > 9:
        raise ValueError("brute-force matching is limited to n <= 9")
    idx = np.arange(n)
    return min(float(C[idx, list(p)].mean()) for p in permutations(range(n)))

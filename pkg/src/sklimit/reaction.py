"""Reaction term b(x, s), its antiderivative and linearization.

Three families are supported:

* ``linear``: ``b = -c s`` (exact, evaluated spectrally without aliasing);
* ``lipschitz``: a user map with a declared global slope bound ``L_b``;
* ``polynomial``: ``b = -a(x) |s|^(p-1) s + f(x, s)`` with ``1 < p <= 3``
  (``f = 0`` is the Klein-Gordon term).

The antiderivative is normalized as ``int_0^s b(x, r) dr``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import spectral
from .errors import BlowUpError, ValidationError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _integrate_from_zero(fun, xi, s):
    """``int_0^s fun(xi, r) dr`` pointwise, by 24-node Gauss-Legendre on [0, s]."""
    s = np.asarray(s, dtype=float)
    xi = np.broadcast_to(xi, s.shape)
    r = s[..., None] * _GL_X
    vals = fun(xi[..., None], r)
    return s * np.sum(vals * _GL_W, axis=-1)


def _const(value):
    return lambda xi: np.full(np.shape(xi), float(value))


@dataclass(frozen=True)
class ReactionSpec:
    variant: str
    c: float = 0.0
    exponent: float = 1.0
    a: Callable = field(default=None, repr=False)
    a_bounds: tuple = (1.0, 1.0)
    f: Optional[Callable] = field(default=None, repr=False)
    df: Optional[Callable] = field(default=None, repr=False)
    L_f: float = 0.0
    b: Optional[Callable] = field(default=None, repr=False)
    db: Optional[Callable] = field(default=None, repr=False)
    L_b: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.variant not in ("linear", "lipschitz", "polynomial"):
            raise ValueError(f"unknown reaction variant {self.variant!r}")
        if self.variant == "linear" and self.c < 0:
            raise ValueError("linear reaction needs c >= 0")
        if self.variant == "polynomial" and not 1 < self.exponent <= 3:
            raise ValueError(f"polynomial exponent must lie in (1, 3], got {self.exponent}")
        if self.variant == "lipschitz" and (self.b is None or self.db is None or self.L_b is None):
            raise ValueError("lipschitz reaction needs b, db and a declared L_b")

    @classmethod
    def linear(cls, c):
        return cls("linear", c=float(c), label=f"linear(c={c})")

    @classmethod
    def klein_gordon(cls, exponent=3.0, a=1.0):
        return cls.polynomial(exponent, a=a, label=f"klein-gordon(p={exponent}, a={a})")

    @classmethod
    def polynomial(cls, exponent, a=1.0, f=None, df=None, L_f=0.0, a_bounds=None, label=""):
        if callable(a):
            afun = a
            if a_bounds is None:
                raise ValueError("a(x) given as a function needs explicit a_bounds")
        else:
            afun = _const(a)
            a_bounds = (float(a), float(a))
        if a_bounds[0] <= 0:
            raise ValueError("polynomial coefficient a(x) must be bounded below by a positive a0")
        if f is not None and df is None:
            raise ValueError("f needs its derivative df")
        return cls("polynomial", exponent=float(exponent), a=afun, a_bounds=tuple(a_bounds),
                   f=f, df=df, L_f=float(L_f), label=label or f"polynomial(p={exponent})")

    @classmethod
    def lipschitz(cls, b, db, L_b, label=""):
        return cls("lipschitz", b=b, db=db, L_b=float(L_b), label=label or "lipschitz")

    # pointwise maps ------------------------------------------------------

    @property
    def linear_coeff(self):
        """Part ``-c s`` of b that time steppers fold into the exact propagator."""
        return self.c if self.variant == "linear" else 0.0

    @property
    def growth_exponent(self):
        return self.exponent if self.variant == "polynomial" else 1.0

    def pointwise(self, xi, s):
        if self.variant == "linear":
            return -self.c * s
        if self.variant == "lipschitz":
            return self.b(xi, s)
        p = self.exponent
        out = -self.a(xi) * np.abs(s) ** (p - 1) * s
        if self.f is not None:
            out = out + self.f(xi, s)
        return out

    def derivative(self, xi, s):
        if self.variant == "linear":
            return np.full(np.shape(s), -self.c)
        if self.variant == "lipschitz":
            return self.db(xi, s)
        p = self.exponent
        out = -p * self.a(xi) * np.abs(s) ** (p - 1)
        if self.df is not None:
            out = out + self.df(xi, s)
        return out

    def antiderivative(self, xi, s):
        if self.variant == "linear":
            return -0.5 * self.c * s**2
        if self.variant == "lipschitz":
            return _integrate_from_zero(self.b, xi, s)
        p = self.exponent
        out = -self.a(xi) * np.abs(s) ** (p + 1) / (p + 1)
        if self.f is not None:
            out = out + _integrate_from_zero(self.f, xi, s)
        return out

    @property
    def slope_bound(self):
        """Declared or structural upper bound for ``d b / d s`` (the constant L_b)."""
        if self.variant == "linear":
            return -self.c
        if self.variant == "lipschitz":
            return self.L_b
        return self.L_f if self.f is not None else 0.0


def _grid_values(u, dom):
    g = spectral.to_grid(u, dom)
    if not np.all(np.isfinite(g)):
        raise BlowUpError("non-finite field values")
    return g


def _checked(values, what):
    if not np.all(np.isfinite(values)):
        raise BlowUpError(f"overflow while evaluating {what}")
    return values


def eval_b(spec, u, dom):
    """Galerkin projection of B(u) = b(x, u(x))."""
    u = np.asarray(u, dtype=float)
    if spec.variant == "linear":
        return -spec.c * u
    g = _grid_values(u, dom)
    with np.errstate(over="ignore", invalid="ignore"):
        bg = spec.pointwise(dom.grid, g)
    return spectral.from_grid(_checked(bg, "b(u)"), dom)


def nonlinear_part(spec, u, dom):
    """B(u) minus the linear part folded into the propagator."""
    if spec.variant == "linear":
        return np.zeros_like(np.asarray(u, dtype=float))
    return eval_b(spec, u, dom)


def antiderivative_integral(spec, u, dom):
    """``int_D bfrak(x, u(x)) dx`` with ``bfrak(x, s) = int_0^s b(x, r) dr``."""
    u = np.asarray(u, dtype=float)
    if spec.variant == "linear":
        return -0.5 * spec.c * np.sum(u**2, axis=-1)
    g = _grid_values(u, dom)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = spec.antiderivative(dom.grid, g)
    return spectral.grid_integral(_checked(vals, "antiderivative"), dom)


def b_dot_u(spec, u, dom):
    """``<B(u), u>_H`` using the grid quadrature (exact for polynomial b)."""
    u = np.asarray(u, dtype=float)
    if spec.variant == "linear":
        return -spec.c * np.sum(u**2, axis=-1)
    g = _grid_values(u, dom)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = spec.pointwise(dom.grid, g) * g
    return spectral.grid_integral(_checked(vals, "<b(u), u>"), dom)


def linearize_apply(spec, u, h, dom):
    """Projection of ``d_s b(x, u(x)) h(x)``; ``u`` broadcasts against ``h``."""
    h = np.asarray(h, dtype=float)
    if spec.variant == "linear":
        return -spec.c * h
    gu = _grid_values(u, dom)
    gh = _grid_values(h, dom)
    with np.errstate(over="ignore", invalid="ignore"):
        prod = spec.derivative(dom.grid, gu) * gh
    return spectral.from_grid(_checked(prod, "DB(u) h"), dom)


def _sigma_grid(S, n=400):
    pos = np.logspace(-6, np.log10(S), n)
    return np.concatenate([-pos[::-1], [0.0], pos])


def validate_spec(spec, dom, noise=None, S=1e3, raise_on_failure=True):
    """Grid-based check of the structural hypotheses on b.

    Estimates ``sup d_s b`` on ``[-S, S]`` and compares it with the spectral gap
    (``alpha_1`` when the growth exponent is 1, ``alpha_nbar`` otherwise); for
    polynomial b also fits the dissipativity pair (c1, c2), the growth constant,
    and the additive shift needed for the antiderivative sign bound.
    """
    sig = _sigma_grid(S)
    xi = dom.grid[:: max(dom.M // 16, 1)]
    X, SG = np.meshgrid(xi, sig, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        bvals = spec.pointwise(X, SG)
        dvals = spec.derivative(X, SG)
        avals = spec.antiderivative(X, SG)

    failures = []
    report = {"variant": spec.variant, "label": spec.label, "sigma_range": float(S)}
    k_idx = np.unravel_index(np.argmax(dvals), dvals.shape)
    lb_est = float(dvals[k_idx])
    report["L_b_estimate"] = lb_est
    report["L_b"] = float(spec.slope_bound) if spec.variant != "polynomial" else max(lb_est, spec.slope_bound)
    alpha1 = float(dom.alphas[0])
    report["alpha_1"] = alpha1

    if spec.variant == "lipschitz" and lb_est > spec.L_b + 1e-9 * max(1.0, abs(spec.L_b)):
        failures.append({"inequality": "sup d_s b <= declared L_b", "lhs": lb_est, "rhs": spec.L_b,
                         "witness_sigma": float(SG[k_idx])})

    p = spec.growth_exponent
    absig = np.abs(SG)
    growth = np.max(np.abs(bvals) / (1.0 + absig**p))
    report["growth_constant"] = float(growth)
    if not np.isfinite(growth):
        failures.append({"inequality": "|b| <= c (1 + |s|^p)", "lhs": float(growth), "rhs": np.inf,
                         "witness_sigma": None})

    if p == 1.0:
        lb = report["L_b"]
        if not lb < alpha1:
            failures.append({"inequality": "L_b < alpha_1", "lhs": lb, "rhs": alpha1,
                             "witness_sigma": float(SG[k_idx])})
        excess = avals - lb * SG**2
        report["antiderivative_shift"] = float(max(np.max(excess), 0.0))
    else:
        nbar = noise.nbar if noise is not None else 1
        alpha_nbar = float(dom.alphas[nbar - 1])
        report["nbar"] = nbar
        report["alpha_nbar"] = alpha_nbar
        if not report["L_b"] < alpha_nbar:
            failures.append({"inequality": "L_b < alpha_nbar", "lhs": report["L_b"], "rhs": alpha_nbar,
                             "witness_sigma": float(SG[k_idx])})
        tail = absig >= np.sqrt(S)
        ratio = -(bvals * SG)[tail] / absig[tail] ** (p + 1)
        c1 = float(np.min(ratio))
        c2 = float(np.max(bvals * SG + c1 * absig ** (p + 1)))
        report["c1"], report["c2"] = c1, max(c2, 0.0)
        if not c1 > 0:
            j = np.argmin(ratio)
            failures.append({"inequality": "b(s) s <= -c1 |s|^(p+1) + c2 with c1 > 0", "lhs": c1, "rhs": 0.0,
                             "witness_sigma": float(SG[tail][j])})
        kappa = float(np.min(-avals[tail] / absig[tail] ** (p + 1)))
        report["kappa"] = kappa
        report["antiderivative_shift"] = float(max(np.max(avals + kappa * absig ** (p + 1)), 0.0))
        if not kappa > 0:
            failures.append({"inequality": "bfrak(s) <= -kappa |s|^(p+1) with kappa > 0", "lhs": kappa,
                             "rhs": 0.0, "witness_sigma": None})

    report["failures"] = failures
    report["ok"] = not failures
    if failures and raise_on_failure:
        lines = "; ".join(f"{f['inequality']} (lhs={f['lhs']:.6g}, rhs={f['rhs']:.6g}, sigma={f['witness_sigma']})"
                          for f in failures)
        raise ValidationError(f"reaction term {spec.label} fails: {lines}", failures)
    return report


def effective_slope(spec, dom, S=1e3):
    """Numerical ``sup d_s b`` (declared bound for Lipschitz maps)."""
    return validate_spec(spec, dom, S=S, raise_on_failure=False)["L_b"]

"""Dirichlet sine basis on [0, L]: eigenvalues, norms, projections and the
collocation grid used for pointwise nonlinearities.

Fields are stored as coefficient arrays of shape ``(..., N)`` in the
orthonormal basis ``e_k(x) = sqrt(2/L) sin(k pi x / L)``; leading axes are
batch axes (trajectories, chains, samples).
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.fft


@dataclass(frozen=True)
class Domain:
    """Interval [0, L] truncated to ``N`` sine modes, with an ``M``-point
    interior collocation grid ``x_j = j L / (M + 1)``."""

    L: float = np.pi
    N: int = 32
    M: int = 0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got {self.L}")
        if int(self.N) < 1:
            raise ValueError(f"need at least one mode, got N={self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not self.M:
            object.__setattr__(self, "M", 4 * self.N)
        object.__setattr__(self, "M", int(self.M))
        if self.M < 2 * self.N:
            raise ValueError(f"grid size M={self.M} must be at least 2N={2 * self.N}")

    @property
    def k(self):
        return np.arange(1, self.N + 1)

    @property
    def alphas(self):
        """Eigenvalues ``(k pi / L)^2`` of -A for k = 1..N."""
        return (self.k * np.pi / self.L) ** 2

    @property
    def grid(self):
        return self.L * np.arange(1, self.M + 1) / (self.M + 1)

    @property
    def h(self):
        return self.L / (self.M + 1)

    def basis(self, k):
        """Grid values of e_k."""
        return np.sqrt(2.0 / self.L) * np.sin(k * np.pi * self.grid / self.L)


@dataclass(frozen=True)
class SpectralField:
    coeffs: np.ndarray
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape[-1] != self.domain.N:
            raise ValueError(f"expected {self.domain.N} coefficients, got {c.shape[-1]}")
        object.__setattr__(self, "coeffs", c)

    def to_csv(self):
        row = ",".join(repr(float(x)) for x in self.coeffs)
        return f"# L={self.domain.L!r} N={self.domain.N}\n{row}\n"

    @classmethod
    def from_csv(cls, text, M=0):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if len(lines) != 2 or not lines[0].startswith("#"):
            raise ValueError("expected a '# L=<L> N=<N>' header and one coefficient row")
        meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
        dom = Domain(L=float(meta["L"]), N=int(meta["N"]), M=M)
        return cls(np.array([float(x) for x in lines[1].split(",")]), dom)


class PhaseState(NamedTuple):
    """Displacement/velocity pair of coefficient arrays."""

    u: np.ndarray
    v: np.ndarray


def eigenvalue(k, dom):
    if not 1 <= k <= dom.N:
        raise IndexError(f"mode index {k} outside 1..{dom.N}")
    return (k * np.pi / dom.L) ** 2


def unit(k, dom):
    """Coefficients of the basis vector e_k."""
    if not 1 <= k <= dom.N:
        raise IndexError(f"mode index {k} outside 1..{dom.N}")
    x = np.zeros(dom.N)
    x[k - 1] = 1.0
    return x


def sobolev_norm(x, beta, dom):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(dom.alphas**beta * x**2, axis=-1))


def sobolev_inner(x, y, beta, dom):
    return np.sum(dom.alphas**beta * np.asarray(x) * np.asarray(y), axis=-1)


def project(x, n, dom):
    if not 0 <= n <= dom.N:
        raise IndexError(f"projection rank {n} outside 0..{dom.N}")
    out = np.array(x, dtype=float, copy=True)
    out[..., n:] = 0.0
    return out


# below this many matrix entries a dense sine matrix beats the FFT
DENSE_LIMIT = 1 << 17


@lru_cache(maxsize=32)
def _sine_matrix(L, N, M):
    j = np.arange(1, M + 1)
    k = np.arange(1, N + 1)
    mat = np.sqrt(2.0 / L) * np.sin(np.pi * np.outer(k, j) / (M + 1))
    mat.flags.writeable = False
    return mat


def to_grid(x, dom, fft=None):
    """Evaluate coefficients on the interior collocation grid (DST-I, or the
    equivalent dense sine matrix for small grids)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dom.N:
        raise ValueError(f"expected {dom.N} coefficients, got {x.shape[-1]}")
    if fft is None:
        fft = dom.N * dom.M > DENSE_LIMIT
    if not fft:
        return x @ _sine_matrix(dom.L, dom.N, dom.M)
    pad = [(0, 0)] * (x.ndim - 1) + [(0, dom.M - dom.N)]
    full = np.pad(x, pad)
    return 0.5 * np.sqrt(2.0 / dom.L) * scipy.fft.dst(full, type=1, axis=-1)


def from_grid(values, dom, fft=None):
    """Galerkin coefficients of grid data: trapezoid rule with zero endpoints,
    which is the exact inverse of :func:`to_grid` on the retained modes."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != dom.M:
        raise ValueError(f"expected {dom.M} grid values, got {values.shape[-1]}")
    if fft is None:
        fft = dom.N * dom.M > DENSE_LIMIT
    if not fft:
        return dom.h * (values @ _sine_matrix(dom.L, dom.N, dom.M).T)
    c = scipy.fft.dst(values, type=1, axis=-1)[..., : dom.N]
    return 0.5 * dom.h * np.sqrt(2.0 / dom.L) * c


def grid_integral(values, dom):
    """Trapezoid rule over [0, L] with zero boundary values."""
    return dom.h * np.sum(values, axis=-1)


def lp_norm(x, p, dom):
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    g = np.abs(to_grid(x, dom))
    return grid_integral(g**p, dom) ** (1.0 / p)

"""Diagonal noise covariance Q and reproducible Brownian increments.

Increments are a pure function of ``(master_seed, stream_id, step)``: each
stream is a Philox counter-based generator keyed by the seed and stream id,
and steps are grouped in fixed-size blocks, each block starting at its own
counter value. Two integrators handed drivers with the same seed and stream
therefore see identical Gaussian draws, which is what couples the wave and
heat systems pathwise.
"""

import warnings
from dataclasses import dataclass

import numpy as np

BLOCK = 256


@dataclass(frozen=True)
class NoiseSpectrum:
    """Eigenvalues ``lambdas[k-1]`` of Q, plus the non-degeneracy pair
    (nbar, c_min): ``lambda_k >= c_min`` for every k <= nbar."""

    lambdas: np.ndarray
    nbar: int = 1
    c_min: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("noise spectrum must be a non-empty vector")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("noise eigenvalues must be finite and non-negative")
        if not 1 <= self.nbar <= lam.size:
            raise ValueError(f"nbar={self.nbar} outside 1..{lam.size}")
        object.__setattr__(self, "lambdas", lam)

    @property
    def trace_q2(self):
        return float(np.sum(self.lambdas**2))

    @property
    def norm(self):
        return float(np.max(self.lambdas))


def power_spectrum(dom, decay_s=0.75, nbar=1, amplitude=1.0, c_min=None):
    """``lambda_k = amplitude * alpha_k^(-decay_s)``; c_min defaults to lambda_nbar."""
    lam = amplitude * dom.alphas ** (-decay_s)
    if c_min is None:
        c_min = float(lam[nbar - 1])
    return NoiseSpectrum(lam, nbar=nbar, c_min=c_min)


def apply_q(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.lambdas.size:
        raise ValueError(f"size mismatch: {x.shape[-1]} vs {spec.lambdas.size}")
    return spec.lambdas * x


def verify_hypothesis_q(spec, delta, dom):
    """Truncated ``Tr[Q^2 (-A)^delta]`` and the non-degeneracy check.

    ``summability_warning`` is raised when the partial sums over the last
    tenth of the retained modes still grow by more than 1%.
    """
    if spec.lambdas.size == 0:
        raise ValueError("empty spectrum")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    terms = spec.lambdas**2 * dom.alphas[: spec.lambdas.size] ** delta
    partial = np.cumsum(terms)
    n = terms.size
    start = max(n - max(n // 10, 1), 1) - 1
    base = partial[start]
    growth = (partial[-1] - base) / base if base > 0 else (np.inf if partial[-1] > 0 else 0.0)
    nondeg = bool(np.all(spec.lambdas[: spec.nbar] >= spec.c_min) and spec.c_min > 0)
    return {
        "trace_value": float(partial[-1]),
        "tail_growth": float(growth),
        "summability_warning": bool(growth > 0.01),
        "nondegeneracy_ok": nondeg,
    }


def _philox(master_seed, stream_id, block):
    key = ((int(master_seed) & 0xFFFFFFFFFFFFFFFF) << 64) | (int(stream_id) & 0xFFFFFFFFFFFFFFFF)
    bitgen = np.random.Philox(key=key, counter=int(block) << 64)
    return np.random.Generator(bitgen)


class SeededDriver:
    """Single-owner stream of standard normal vectors of fixed width."""

    def __init__(self, master_seed, stream_id=0, width=None, step=0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.width = width
        self.step = int(step)
        self._block_id = None
        self._block = None

    def normals_at(self, step, width):
        """Standard normals for ``step``; does not move the counter."""
        if self.width is None:
            self.width = int(width)
        elif width != self.width:
            raise ValueError(f"driver width is {self.width}, requested {width}")
        b, i = divmod(int(step), BLOCK)
        if b != self._block_id:
            self._block = _philox(self.master_seed, self.stream_id, b).standard_normal((BLOCK, self.width))
            self._block_id = b
        return self._block[i].copy()

    def normals(self, width):
        out = self.normals_at(self.step, width)
        self.step += 1
        return out

    def sample_increments(self, dt, count):
        """Brownian increments ``N(0, dt)`` for ``count`` independent modes."""
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return np.sqrt(dt) * self.normals(count)


class EnsembleDriver:
    """A batch of streams ``stream_ids`` drawn in lock-step; row ``i`` equals
    what ``SeededDriver(seed, stream_ids[i])`` would produce."""

    def __init__(self, master_seed, stream_ids, width, step=0):
        self.master_seed = int(master_seed)
        self.stream_ids = [int(s) for s in stream_ids]
        self.width = int(width)
        self.step = int(step)
        self._block_id = None
        self._block = None

    def __len__(self):
        return len(self.stream_ids)

    def normals(self):
        b, i = divmod(self.step, BLOCK)
        if b != self._block_id:
            self._block = np.stack(
                [_philox(self.master_seed, s, b).standard_normal((BLOCK, self.width)) for s in self.stream_ids],
                axis=1,
            )
            self._block_id = b
        self.step += 1
        return self._block[i]

    def increments(self, dt):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return np.sqrt(dt) * self.normals()

    def fork(self, width=None):
        """A fresh driver over the same streams, rewound to step 0."""
        return EnsembleDriver(self.master_seed, self.stream_ids, width or self.width)


def check_nondegenerate(spec, x):
    """``|Q x|_H >= c_min |P_nbar x|_H``; True when the bound holds."""
    qx = np.linalg.norm(apply_q(spec, x), axis=-1)
    px = np.linalg.norm(np.asarray(x)[..., : spec.nbar], axis=-1)
    return np.all(qx >= spec.c_min * px - 1e-12 * (1 + px))


def warn_if_unsummable(report):
    if report["summability_warning"]:
        warnings.warn(
            f"Tr[Q^2 (-A)^delta] partial sums still growing ({report['tail_growth']:.2%} over the last tenth)",
            RuntimeWarning,
        )

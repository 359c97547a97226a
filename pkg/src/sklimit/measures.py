"""Invariant-measure sampling, moment reports, the Gaussian oracle for the
linear case, and the ``skmeas v1`` file format."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import integrator, spectral
from .errors import ConfigError
from .noise import EnsembleDriver
from .spectral import Domain, PhaseState


@dataclass(frozen=True)
class SamplerConfig:
    burn_in_time: float = 0.0
    sample_gap_time: float = 0.0
    samples_per_chain: int = 20
    chains: int = 50
    seed: int = 0
    stream_base: int = 0

    def __post_init__(self):
        if self.samples_per_chain < 1 or self.chains < 1:
            raise ConfigError("sampler needs at least one chain and one sample per chain")
        if self.burn_in_time < 0 or self.sample_gap_time < 0:
            raise ConfigError("sampler times must be non-negative")

    def resolved(self, spec, dom):
        """Fill zero burn-in/gap with the relaxation-time defaults."""
        gap = dom.alphas[0] - max(spec.slope_bound, 0.0)
        if gap <= 0:
            raise ConfigError(f"no spectral gap: alpha_1 - L_b = {gap:g}")
        burn = self.burn_in_time or 10.0 / gap
        sgap = self.sample_gap_time or 1.0 / gap
        return SamplerConfig(burn, sgap, self.samples_per_chain, self.chains, self.seed, self.stream_base)


@dataclass
class EmpiricalMeasure:
    """Samples as a coefficient array ``u`` of shape (n, N) and, for wave
    measures, ``v`` of the same shape."""

    u: np.ndarray
    domain: Domain
    v: np.ndarray = None
    mu: float = None
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def system(self):
        return "heat" if self.v is None else "wave"

    def __len__(self):
        return self.u.shape[0]

    @property
    def samples(self):
        if self.v is None:
            return [spectral.SpectralField(x, self.domain) for x in self.u]
        return [PhaseState(a, b) for a, b in zip(self.u, self.v)]

    def first_marginal(self):
        """u-component measure (the extension of the first marginal to H)."""
        return EmpiricalMeasure(self.u, self.domain, None, None, self.seed, dict(self.metadata, source_mu=self.mu))


def _steps(time, dt):
    return max(1, int(round(time / dt)))


def _half_chain_check(x):
    """Compare per-coordinate means of the first and second sampling halves
    of each chain (x has shape chains × samples × N); returns max |z|."""
    n = x.shape[1]
    if n < 2:
        return 0.0
    a, b = x[:, : n // 2].reshape(-1, x.shape[-1]), x[:, n // 2 :].reshape(-1, x.shape[-1])
    sa = a.var(0, ddof=1) / a.shape[0] if a.shape[0] > 1 else np.zeros(x.shape[-1])
    sb = b.var(0, ddof=1) / b.shape[0] if b.shape[0] > 1 else np.zeros(x.shape[-1])
    se = np.sqrt(sa + sb)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(a.mean(0) - b.mean(0)) / se, 0.0)
    # moment 2 as well: compare mean squares
    a2, b2 = a**2, b**2
    se2 = np.sqrt(a2.var(0, ddof=1) / a2.shape[0] + b2.var(0, ddof=1) / b2.shape[0]) if a.shape[0] > 1 else 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z2 = np.where(se2 > 0, np.abs(a2.mean(0) - b2.mean(0)) / se2, 0.0)
    return float(max(z.max(), z2.max()))


def _diagnose(meta, x):
    # Bonferroni-adjusted 3 sigma threshold across coordinates and both moments
    zmax = _half_chain_check(x)
    thresh = 3.0 + math.sqrt(2.0 * math.log(max(2 * x.shape[-1], 2)))
    meta["stationarity_z"] = zmax
    meta["stationarity_ok"] = bool(zmax < thresh)
    if not meta["stationarity_ok"]:
        meta["warning"] = f"half-chain moment difference {zmax:.2f} sigma"


def sample_wave_invariant(mu, spec, noise, dom, scheme, sampler):
    """Forward-simulate ``sampler.chains`` chains from z = 0 in exact-covariance
    mode, discard burn-in, then record every ``sample_gap_time``."""
    sampler = sampler.resolved(spec, dom)
    st = integrator.WaveStepper(mu, spec, noise, dom, scheme.dt, "exact_covariance")
    streams = [sampler.stream_base + i for i in range(sampler.chains)]
    drv = EnsembleDriver(sampler.seed, streams, st.width)
    B = sampler.chains
    u = np.zeros((B, dom.N))
    v = np.zeros((B, dom.N))
    U = np.empty((B, sampler.samples_per_chain, dom.N))
    V = np.empty_like(U)
    step = 0

    def advance(n, u, v, step):
        for _ in range(n):
            u, v = st.step(u, v, drv.normals())
            step += 1
            integrator._check(st.norm2(u, v), step)
        return u, v, step

    u, v, step = advance(_steps(sampler.burn_in_time, scheme.dt), u, v, step)
    gap = _steps(sampler.sample_gap_time, scheme.dt)
    for j in range(sampler.samples_per_chain):
        if j:
            u, v, step = advance(gap, u, v, step)
        U[:, j], V[:, j] = u, v
    meta = {"system": "wave", "mu": mu, "spec": spec.label, "dt": scheme.dt,
            "burn_in_time": sampler.burn_in_time, "sample_gap_time": sampler.sample_gap_time,
            "chains": B, "samples_per_chain": sampler.samples_per_chain, "seed": sampler.seed}
    _diagnose(meta, np.concatenate([U, V], -1))
    if not meta["stationarity_ok"]:
        warnings.warn(meta["warning"], RuntimeWarning)
    return EmpiricalMeasure(U.reshape(-1, dom.N), dom, V.reshape(-1, dom.N), mu, sampler.seed, meta)


def sample_heat_invariant(spec, noise, dom, scheme, sampler):
    sampler = sampler.resolved(spec, dom)
    st = integrator.HeatStepper(spec, noise, dom, scheme.dt, "exact_covariance")
    streams = [sampler.stream_base + i for i in range(sampler.chains)]
    drv = EnsembleDriver(sampler.seed, streams, st.width)
    B = sampler.chains
    u = np.zeros((B, dom.N))
    U = np.empty((B, sampler.samples_per_chain, dom.N))
    step = 0
    gap = _steps(sampler.sample_gap_time, scheme.dt)
    for j in range(sampler.samples_per_chain):
        n = _steps(sampler.burn_in_time, scheme.dt) if j == 0 else gap
        for _ in range(n):
            u = st.step(u, drv.normals())
            step += 1
            integrator._check(st.norm2(u), step)
        U[:, j] = u
    meta = {"system": "heat", "spec": spec.label, "dt": scheme.dt,
            "burn_in_time": sampler.burn_in_time, "sample_gap_time": sampler.sample_gap_time,
            "chains": B, "samples_per_chain": sampler.samples_per_chain, "seed": sampler.seed}
    _diagnose(meta, U)
    if not meta["stationarity_ok"]:
        warnings.warn(meta["warning"], RuntimeWarning)
    return EmpiricalMeasure(U.reshape(-1, dom.N), dom, None, None, sampler.seed, meta)


def gaussian_invariant_oracle(mu, spec, noise, dom):
    """Exact stationary per-mode variances for a linear reaction.

    ``mu=None`` (or ``"heat"``) gives the heat system. The u-variance
    ``lambda_k^2 / (2 (alpha_k + c))`` is the same for every mass.
    """
    if spec.variant != "linear":
        raise ValueError("the Gaussian oracle needs a linear reaction")
    lam2 = noise.lambdas[: dom.N] ** 2
    a = dom.alphas + spec.c
    if np.any(a <= 0):
        raise ValueError("alpha_k + c must be positive")
    out = {"var_u": lam2 / (2.0 * a)}
    if mu is not None and mu != "heat":
        if not mu > 0:
            raise ValueError("mu must be positive")
        out["var_v"] = lam2 / (2.0 * mu)
        out["cov_uv"] = np.zeros(dom.N)
    return out


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    return float(np.mean(x)), (float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def moment_quantities(m, spec):
    """Per-sample energies: |u|^2_{H^1}, mu|v|^2, |u|^{p+1}_{L^{p+1}}."""
    dom = m.domain
    q = {"h1_u": np.sum(dom.alphas * m.u**2, -1), "h_u": np.sum(m.u**2, -1)}
    if m.v is not None:
        q["mu_v2"] = m.mu * np.sum(m.v**2, -1)
    p = spec.growth_exponent
    if p is not None and spec.variant == "polynomial":
        q["lp_u"] = spectral.lp_norm(m.u, p + 1, dom) ** (p + 1)
    total = q["h1_u"] + q.get("mu_v2", 0.0) + q.get("lp_u", 0.0)
    q["energy"] = total
    return q


def moment_report(m, mu, spec):
    if m is None or len(m) == 0:
        raise ValueError("moment report needs a nonempty measure")
    out = {"mu": mu, "n": len(m)}
    for key, vals in moment_quantities(m, spec).items():
        mean, se = _mean_se(vals)
        out[key] = {"mean": mean, "stderr": se}
    return out


def exp_weight(m, spec):
    """``mu|u|^2_{H^1} + |u|^2 + mu^2|v|^2 + mu|u|^{p+1}_{L^{p+1}}`` per sample
    (just ``|u|^2`` for heat measures)."""
    dom = m.domain
    w = np.sum(m.u**2, -1)
    if m.v is not None:
        mu = m.mu
        w = w + mu * np.sum(dom.alphas * m.u**2, -1) + mu**2 * np.sum(m.v**2, -1)
        p = spec.growth_exponent if spec is not None else None
        if spec is not None and spec.variant == "polynomial":
            w = w + mu * spectral.lp_norm(m.u, p + 1, dom) ** (p + 1)
    return w


def exp_moment_report(m, eta_grid, spec=None, weight=None):
    """Empirical ``E exp(eta W)`` per eta; ``stable`` when the effective
    sample size of the exponential weight exceeds 30."""
    if m is None or len(m) == 0:
        raise ValueError("exponential-moment report needs a nonempty measure")
    w = exp_weight(m, spec) if weight is None else np.asarray(weight, dtype=float)
    rows = []
    for eta in eta_grid:
        if eta == 0:
            rows.append({"eta": 0.0, "estimate": 1.0, "stderr": 0.0, "ess": float(w.size), "stable": True})
            continue
        x = eta * w
        shift = x.max()
        e = np.exp(x - shift)
        ess = float(e.sum() ** 2 / np.sum(e**2))
        mean = float(np.exp(shift) * e.mean()) if shift < 700 else math.inf
        se = float(np.exp(shift) * e.std(ddof=1) / math.sqrt(e.size)) if shift < 700 and e.size > 1 else math.inf
        rows.append({"eta": float(eta), "estimate": mean, "stderr": se, "ess": ess, "stable": ess > 30})
    return rows


def gaussian_mgf(var_u, eta):
    """``E exp(eta |u|^2)`` for independent centred Gaussian modes."""
    var_u = np.asarray(var_u, dtype=float)
    if np.any(2 * eta * var_u >= 1):
        return math.inf
    return float(np.prod((1.0 - 2.0 * eta * var_u) ** -0.5))


class MeasureParseError(ValueError):
    def __init__(self, msg, line):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def save_measure(m, path):
    dom = m.domain
    mu = "heat" if m.mu is None else repr(float(m.mu))
    head = f"# skmeas v1; system={m.system}; mu={mu}; N={dom.N}; L={dom.L!r}; seed={m.seed}"
    data = m.u if m.v is None else np.concatenate([m.u, m.v], -1)
    with open(path, "w") as fh:
        fh.write(head + "\n")
        for row in data:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_measure(path, M=0):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MeasureParseError("empty file", 1)
    head = lines[0]
    if not head.startswith("# skmeas"):
        raise MeasureParseError("missing '# skmeas' header", 1)
    parts = [p.strip() for p in head[1:].split(";")]
    if parts[0] != "skmeas v1":
        raise MeasureParseError(f"unsupported format version {parts[0]!r}", 1)
    try:
        meta = dict(p.split("=", 1) for p in parts[1:])
        system = meta["system"]
        N, L, seed = int(meta["N"]), float(meta["L"]), int(meta["seed"])
        mu = None if meta["mu"] == "heat" else float(meta["mu"])
    except (KeyError, ValueError) as exc:
        raise MeasureParseError(f"bad header field ({exc})", 1) from None
    if system not in ("wave", "heat"):
        raise MeasureParseError(f"unknown system {system!r}", 1)
    width = 2 * N if system == "wave" else N
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        try:
            row = [float(x) for x in ln.split(",")]
        except ValueError:
            raise MeasureParseError("non-numeric entry", i) from None
        if len(row) != width:
            raise MeasureParseError(f"expected {width} values, got {len(row)}", i)
        rows.append(row)
    if not rows:
        raise MeasureParseError("no samples", len(lines))
    data = np.array(rows)
    dom = Domain(L=L, N=N, M=M)
    if system == "wave":
        return EmpiricalMeasure(data[:, :N], dom, data[:, N:], mu, seed, {"system": "wave"})
    return EmpiricalMeasure(data, dom, None, None, seed, {"system": "heat"})


def sweep_uniformity(reports, key="energy"):
    """max/min ratio of a reported mean over a mu-sweep."""
    vals = np.array([r[key]["mean"] for r in reports])
    if np.any(vals <= 0):
        return math.inf if np.any(vals > 0) else 1.0
    return float(vals.max() / vals.min())


def batch_means(x, chains, batch):
    """Mean and batch-means standard error of per-sample values ``x`` laid out
    chain-major (``chains`` equal blocks of consecutive samples)."""
    x = np.asarray(x, dtype=float)
    per = x.shape[0] // chains
    if per * chains != x.shape[0]:
        raise ValueError("sample count is not a multiple of the chain count")
    nb = max(per // batch, 1)
    size = per // nb
    blocks = x[: chains * per].reshape((chains, per) + x.shape[1:])[:, : nb * size]
    means = blocks.reshape((chains, nb, size) + x.shape[1:]).mean(2).reshape((chains * nb,) + x.shape[1:])
    k = means.shape[0]
    se = means.std(0, ddof=1) / math.sqrt(k) if k > 1 else np.full(means.shape[1:], np.inf)
    return x.mean(0), se

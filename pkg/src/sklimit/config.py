"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Every key has a typed default
(see :data:`DEFAULTS`); unknown keys are rejected. Reaction maps given as
expressions are parsed with a whitelist of arithmetic and elementary
functions in the variables ``x`` (position) and ``s`` (state value).
"""

import ast
import hashlib
import json
import math

import numpy as np

from . import noise as noise_mod
from .errors import ConfigError
from .integrator import SchemeConfig
from .measures import SamplerConfig
from .reaction import ReactionSpec
from .spectral import Domain
from .transport import GroundMetric

# key: (type, default); "floats" is a comma-separated list
DEFAULTS = {
    "domain.L": (float, math.pi),
    "domain.N": (int, 32),
    "domain.M": (int, 0),
    "noise.decay_s": (float, 1.5),
    "noise.amplitude": (float, 20.0),
    "noise.nbar": (int, 1),
    "noise.c_min": (float, 0.0),
    "noise.delta": (float, 0.5),
    "reaction.variant": (str, "polynomial"),
    "reaction.exponent": (float, 3.0),
    "reaction.a": (str, "1"),
    "reaction.f": (str, ""),
    "reaction.df": (str, ""),
    "reaction.L_f": (float, 0.0),
    "reaction.c": (float, 1.0),
    "reaction.b": (str, ""),
    "reaction.db": (str, ""),
    "reaction.L_b": (float, 0.0),
    "scheme.dt": (float, 1e-3),
    "scheme.T": (float, 1.0),
    "scheme.noise_mode": (str, "exact_covariance"),
    "scheme.record_stride": (int, 1),
    "sampler.burn_in_time": (float, 0.0),
    "sampler.sample_gap_time": (float, 0.0),
    "sampler.chains": (int, 200),
    "sampler.samples_per_chain": (int, 5),
    "metric.ground": (str, "l2"),
    "metric.solver": (str, "exact"),
    "metric.refine": (int, 0),
    "run.seed": (int, 20240501),
    # energy identities
    "energy.mu_list": ("floats", "1, 0.3, 0.1, 0.03, 0.01"),
    "energy.beta_list": ("floats", "0, 1"),
    "energy.N": (int, 64),
    "energy.T": (float, 2.0),
    "energy.n_states": (int, 16),
    "energy.n_quad": (int, 64),
    "energy.tol": (float, 1e-8),
    # damping-gain bound
    "gain.n_samples": (int, 1000),
    # lemma 3 uniformity
    "lemma3.cases": (str, "0.5:0, 0.25:0.5"),
    "lemma3.mu_list": ("floats", "1, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 0.0003, 0.0001"),
    "lemma3.k_max": (int, 64),
    "lemma3.spread": (float, 10.0),
    # semigroup limits
    "semigroup.mu_list": ("floats", "0.1, 0.01, 0.001"),
    "semigroup.R_list": ("floats", "1, 10"),
    "semigroup.beta": (float, 0.0),
    "semigroup.T": (float, 1.0),
    "semigroup.N": (int, 32),
    # finite-time coupling
    "finite.mu_list": ("floats", "0.1, 0.01, 0.001"),
    "finite.trajectories": (int, 64),
    "finite.T": (float, 1.0),
    "finite.variants": (str, "linear, klein-gordon"),
    "finite.se_factor": (float, 2.0),
    # stationary limit
    "stationary.mu_list": ("floats", "0.5, 0.1, 0.02"),
    "stationary.samples": (int, 1000),
    "stationary.replicates": (int, 8),
    "stationary.se_factor": (float, 2.0),
    "stationary.gap_sigma": (float, 3.0),
    # trajectory limit started from the invariant measure
    "trajectory.mu_list": ("floats", "0.5, 0.1, 0.02"),
    "trajectory.trajectories": (int, 200),
    "trajectory.T": (float, 1.0),
    # Gaussian oracle
    "gaussian.c": (float, 1.0),
    "gaussian.mu_list": ("floats", "0.5, 0.05"),
    "gaussian.chains": (int, 4),
    "gaussian.samples_per_chain": (int, 500),
    "gaussian.sigma": (float, 3.0),
    "gaussian.batch": (int, 25),
    # Lyapunov drift
    "lyapunov.mu_list": ("floats", "0.5, 0.05, 0.005"),
    "lyapunov.n_states": (int, 10000),
    "lyapunov.theta": (float, 0.0),
    "lyapunov.delta": (float, 0.0),
    "lyapunov.safety": (float, 0.5),
    "lyapunov.c_spread": (float, 2.0),
    "lyapunov.sigma": (float, 3.0),
    "lyapunov.pass_fraction": (float, 0.999),
    # moments
    "moments.mu_list": ("floats", "0.5, 0.05, 0.005"),
    "moments.eta": (float, 0.0),
    "moments.spread": (float, 2.0),
    # asymptotic smoothing
    "asf.N": (int, 16),
    "asf.runs": (int, 32),
    "asf.T": (float, 8.0),
    "asf.t_grid": ("floats", "1, 2, 4, 8"),
    "asf.ensemble": (int, 200),
    "asf.j": (int, 1),
    "asf.slack": (float, 1e-6),
    # optimal transport checks
    "ot.instances": (int, 100),
    "ot.n_max": (int, 8),
    "ot.gauss_n": (int, 2000),
    "ot.gauss_tol": (float, 0.05),
    "ot.pairs": (int, 1000),
    # contraction and irreducibility
    "contraction.amplitude": (float, 1.0),
    "contraction.eps": (float, 0.1),
    "contraction.ensemble": (int, 200),
    "contraction.t_grid": ("floats", "0.25, 0.5, 1, 2, 4"),
}

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "sign": np.sign, "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Compare,
          ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def compile_expression(text, variables=("x", "s")):
    """Vectorised function of ``variables`` from an arithmetic expression."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(variables) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"only elementary functions may be called in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"only numeric constants allowed in {text!r}")
    code = compile(tree, "<config>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fun(*args):
        scope = dict(zip(variables, args))
        out = eval(code, env, scope)  # noqa: S307 - AST whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*args).shape).astype(float)

    fun.source = text
    return fun


def _convert(key, typ, raw):
    try:
        if typ == "floats":
            vals = [float(t) for t in raw.split(",") if t.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} ({exc})") from None


class Config:
    def __init__(self, values=None):
        self.values = {}
        for key, (typ, default) in DEFAULTS.items():
            self.values[key] = _convert(key, typ, default) if typ == "floats" else default
        for key, raw in (values or {}).items():
            self.set(key, raw)

    def set(self, key, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        typ = DEFAULTS[key][0]
        self.values[key] = _convert(key, typ, raw) if isinstance(raw, str) else raw

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def parse(cls, text):
        cfg = cls()
        for n, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {n}: expected 'section.key = value'")
            key, raw = (t.strip() for t in body.split("=", 1))
            try:
                cfg.set(key, raw)
            except ConfigError as exc:
                raise ConfigError(f"line {n}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.parse(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None

    def resolved(self):
        """Plain JSON-able dict of every key."""
        return {k: self.values[k] for k in sorted(self.values)}

    def hash(self):
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dumps(self):
        lines = []
        for k, v in self.resolved().items():
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    # builders ------------------------------------------------------------

    def domain(self, N=None):
        try:
            return Domain(L=self["domain.L"], N=N or self["domain.N"], M=self["domain.M"] if N is None else 0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def noise(self, dom, amplitude=None):
        nbar = self["noise.nbar"]
        if not 1 <= nbar <= dom.N:
            raise ConfigError(f"noise.nbar={nbar} outside 1..{dom.N}")
        c_min = self["noise.c_min"] or None
        return noise_mod.power_spectrum(dom, self["noise.decay_s"], nbar,
                                        self["noise.amplitude"] if amplitude is None else amplitude, c_min)

    def reaction(self):
        variant = self["reaction.variant"]
        if variant == "linear":
            return ReactionSpec.linear(self["reaction.c"])
        if variant in ("klein-gordon", "polynomial"):
            p = self["reaction.exponent"]
            a_text = self["reaction.a"]
            try:
                a = float(a_text)
                a_bounds = None
            except ValueError:
                afun = compile_expression(a_text, ("x",))
                grid = np.linspace(0.0, self["domain.L"], 2001)
                vals = afun(grid)
                a, a_bounds = afun, (float(vals.min()), float(vals.max()))
            f = compile_expression(self["reaction.f"]) if self["reaction.f"] else None
            df = compile_expression(self["reaction.df"]) if self["reaction.df"] else None
            try:
                return ReactionSpec.polynomial(p, a=a, f=f, df=df, L_f=self["reaction.L_f"], a_bounds=a_bounds,
                                               label=f"polynomial(p={p:g}, a={a_text})")
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if variant == "lipschitz":
            if not (self["reaction.b"] and self["reaction.db"]):
                raise ConfigError("lipschitz reaction needs reaction.b and reaction.db")
            return ReactionSpec.lipschitz(compile_expression(self["reaction.b"]),
                                          compile_expression(self["reaction.db"]), self["reaction.L_b"],
                                          label=f"lipschitz({self['reaction.b']})")
        raise ConfigError(f"reaction.variant must be linear, klein-gordon, polynomial or lipschitz, got {variant!r}")

    def scheme(self, **override):
        kw = {"dt": self["scheme.dt"], "T": self["scheme.T"], "record_stride": self["scheme.record_stride"],
              "noise_mode": self["scheme.noise_mode"]}
        kw.update(override)
        return SchemeConfig(**kw)

    def sampler(self, stream_base=0, **override):
        kw = {"burn_in_time": self["sampler.burn_in_time"], "sample_gap_time": self["sampler.sample_gap_time"],
              "chains": self["sampler.chains"], "samples_per_chain": self["sampler.samples_per_chain"],
              "seed": self["run.seed"], "stream_base": stream_base}
        kw.update(override)
        return SamplerConfig(**kw)

    def metric(self):
        gm = GroundMetric.parse(self["metric.ground"])
        return GroundMetric(gm.variant, gm.eta, self["metric.refine"])

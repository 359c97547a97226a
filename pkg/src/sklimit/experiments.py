"""Experiment registry.

Each experiment takes a :class:`~sklimit.config.Config` and returns an
:class:`Outcome`: named pass/fail assertions, summary values and CSV tables.
The CLI writes them to disk; the acceptance tests call them directly.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import asf, integrator, lyapunov, measures, noise as noise_mod, reaction, semigroup, spectral, transport
from .noise import EnsembleDriver
from .reaction import ReactionSpec


@dataclass
class Outcome:
    assertions: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def check(self, name, passed, value=None, threshold=None, **detail):
        self.assertions.append({"name": name, "passed": bool(passed), "value": _plain(value),
                                "threshold": _plain(threshold), **{k: _plain(v) for k, v in detail.items()}})
        return bool(passed)

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [[_plain(x) for x in r] for r in rows])

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)


def _plain(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


REGISTRY = {}


def experiment(name, summary):
    def deco(fn):
        REGISTRY[name] = (fn, summary)
        return fn
    return deco


def names():
    return list(REGISTRY)


def _setup(cfg, N=None):
    dom = cfg.domain(N)
    return dom, cfg.noise(dom), cfg.reaction()


def _rng(cfg, salt):
    return np.random.default_rng([cfg["run.seed"], salt])


def _random_phase(rng, n, dom, decay=1.0):
    k = dom.k
    u = rng.standard_normal((n, dom.N)) * k ** (-decay)
    v = rng.standard_normal((n, dom.N))
    return u, v


# ---------------------------------------------------------------------------


@experiment("energy-identities", "exactness of the two linear energy identities of the wave group")
def energy_identities(cfg):
    out = Outcome()
    dom = spectral.Domain(cfg["domain.L"], cfg["energy.N"])
    rng = _rng(cfg, 1)
    u, v = _random_phase(rng, cfg["energy.n_states"], dom)
    rows, worst = [], 0.0
    for mu in cfg["energy.mu_list"]:
        for beta in cfg["energy.beta_list"]:
            r1 = max(semigroup.energy_residual_1(mu, beta, (x, y), cfg["energy.T"], cfg["energy.n_quad"], dom)
                     for x, y in zip(u, v))
            r2 = max(semigroup.energy_residual_2(mu, beta, (x, y), cfg["energy.T"], cfg["energy.n_quad"], dom)
                     for x, y in zip(u, v))
            rows.append([mu, beta, r1, r2])
            worst = max(worst, r1, r2)
    out.table("residuals", ["mu", "beta", "identity_1", "identity_2"], rows)
    out.values["max_residual"] = worst
    out.check("max relative residual", worst <= cfg["energy.tol"], worst, cfg["energy.tol"])
    return out


@experiment("damping-gain", "velocity-to-displacement gain of the wave group is at most 2 mu")
def damping_gain(cfg):
    out = Outcome()
    dom = spectral.Domain(cfg["domain.L"], cfg["domain.N"])
    rng = _rng(cfg, 2)
    n = cfg["gain.n_samples"]
    mus = np.exp(rng.uniform(np.log(1e-4), 0.0, n))
    ts = np.exp(rng.uniform(np.log(1e-4), np.log(10.0), n))
    betas = rng.uniform(0.0, 1.0, n)
    ys = rng.standard_normal((n, dom.N)) * dom.k ** (-rng.uniform(0.0, 2.0, (n, 1)))
    rows, violations, worst = [], 0, 0.0
    for mu, t, beta, y in zip(mus, ts, betas, ys):
        _, e12, _, _ = semigroup.wave_entries(mu, t, dom.alphas)
        lhs = spectral.sobolev_norm(e12 * y, beta, dom)
        rhs = 2 * mu * spectral.sobolev_norm(y, beta, dom)
        worst = max(worst, lhs / rhs)
        violations += lhs > rhs
        rows.append([mu, t, beta, lhs, rhs])
    out.table("samples", ["mu", "t", "beta", "lhs", "rhs"], rows)
    out.values["max_ratio"] = worst
    out.check("violations", violations == 0, int(violations), 0)
    return out


def _lemma3_cases(text):
    cases = []
    for tok in text.split(","):
        rho, beta = tok.split(":")
        cases.append((float(rho), float(beta)))
    return cases


@experiment("lemma3", "uniformity in mu of the weighted stochastic-convolution integral")
def lemma3(cfg):
    out = Outcome()
    dom = spectral.Domain(cfg["domain.L"], cfg["lemma3.k_max"])
    rows = []
    for rho, beta in _lemma3_cases(cfg["lemma3.cases"]):
        sup_k = []
        for k in range(1, cfg["lemma3.k_max"] + 1):
            vals = [semigroup.lemma3_ratio(mu, rho, beta, k, dom) for mu in cfg["lemma3.mu_list"]]
            rows += [[rho, beta, k, mu, r] for mu, r in zip(cfg["lemma3.mu_list"], vals)]
            sup_k.append(max(vals))
        sup_k = np.array(sup_k)
        spread = sup_k.max() / sup_k.min()
        tag = f"rho={rho:g}, beta={beta:g}"
        out.values[tag] = {"max": sup_k.max(), "min": sup_k.min(), "spread": spread}
        out.check(f"bounded ({tag})", np.all(np.isfinite(sup_k)), sup_k.max())
        out.check(f"max/min of sup over mu ({tag})", spread <= cfg["lemma3.spread"], spread, cfg["lemma3.spread"])
    out.table("ratios", ["rho", "beta", "k", "mu", "ratio"], rows)
    return out


@experiment("semigroup-limits", "convergence of the wave group's first component to the heat semigroup")
def semigroup_limits(cfg):
    out = Outcome()
    dom = spectral.Domain(cfg["domain.L"], cfg["semigroup.N"])
    rows = []
    for R in cfg["semigroup.R_list"]:
        res = semigroup.semigroup_limit_probe(cfg["semigroup.mu_list"], R, cfg["semigroup.beta"], cfg["semigroup.T"],
                                              dom, seed=cfg["run.seed"] % (2**32))
        errs = [r["sup_error"] for r in res]
        conv = [r["conv_error"] for r in res]
        rows += [[r["mu"], R, r["sup_error"], r["conv_error"], r["y_gain"], r["y_gain_bound"]] for r in res]
        out.check(f"sup error strictly decreasing (R={R:g})", all(b < a for a, b in zip(errs, errs[1:])), errs)
        out.check(f"convolution error strictly decreasing (R={R:g})", all(b < a for a, b in zip(conv, conv[1:])), conv)
        out.check(f"velocity gain within 2 mu (R={R:g})", all(r["y_gain"] <= r["y_gain_bound"] for r in res),
                  [r["y_gain"] for r in res])
    out.table("probe", ["mu", "R", "sup_error", "conv_error", "y_gain", "y_gain_bound"], rows)
    return out


def _variant_spec(cfg, name):
    name = name.strip()
    if name == "linear":
        return ReactionSpec.linear(cfg["reaction.c"])
    if name == "klein-gordon":
        return ReactionSpec.klein_gordon(cfg["reaction.exponent"], 1.0)
    if name == "config":
        return cfg.reaction()
    raise ValueError(f"unknown variant {name!r}")


def _decreasing_with_margin(means, ses, factor):
    ok = True
    for i in range(len(means) - 1):
        gap = means[i] - means[i + 1]
        ok &= gap > factor * math.hypot(ses[i], ses[i + 1])
    return ok


@experiment("finite-time-sk", "pathwise small-mass limit on [0, T] with shared Brownian increments")
def finite_time_sk(cfg):
    out = Outcome()
    dom, nz, _ = _setup(cfg)
    scheme = cfg.scheme(T=cfg["finite.T"], noise_mode="coupled_increment")
    rows = []
    for name in cfg["finite.variants"].split(","):
        spec = _variant_spec(cfg, name)
        drv = EnsembleDriver(cfg["run.seed"], range(cfg["finite.trajectories"]), dom.N)
        zero = np.zeros(dom.N)
        res = integrator.simulate_coupled(cfg["finite.mu_list"], spec, nz, dom, (zero, zero), zero, scheme, drv)
        means = [r["mean_sup_error"] for r in res]
        ses = [r["stderr"] for r in res]
        rows += [[name.strip(), r["mu"], r["mean_sup_error"], r["stderr"], r["sup_of_mean"]] for r in res]
        out.check(f"{name.strip()}: mean sup error decreasing by > {cfg['finite.se_factor']:g} SE",
                  _decreasing_with_margin(means, ses, cfg["finite.se_factor"]), means, stderr=ses)
    out.table("errors", ["variant", "mu", "mean_sup_error", "stderr", "sup_of_mean"], rows)
    return out


def _measure_seed(cfg, replicate):
    return cfg["run.seed"] * 1000 + replicate


@experiment("stationary-sk-limit", "Wasserstein distance between the wave and heat invariant laws as mu -> 0")
def stationary_sk_limit(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    scheme = cfg.scheme()
    gm = cfg.metric()
    n = cfg["stationary.samples"]
    chains = cfg["sampler.chains"]
    if n % chains:
        raise ValueError("stationary.samples must be a multiple of sampler.chains")
    per = n // chains
    mus = cfg["stationary.mu_list"]
    W = np.zeros((cfg["stationary.replicates"], len(mus)))
    floor = np.zeros(cfg["stationary.replicates"])
    for r in range(cfg["stationary.replicates"]):
        seed = _measure_seed(cfg, r)
        heat = measures.sample_heat_invariant(spec, nz, dom, scheme,
                                              cfg.sampler(0, seed=seed, samples_per_chain=per))
        heat2 = measures.sample_heat_invariant(spec, nz, dom, scheme,
                                               cfg.sampler(1 << 20, seed=seed, samples_per_chain=per))
        floor[r] = transport.wasserstein(heat, heat2, gm, cfg["metric.solver"]).value
        for i, mu in enumerate(mus):
            wave = measures.sample_wave_invariant(mu, spec, nz, dom, scheme,
                                                  cfg.sampler((i + 2) << 20, seed=seed, samples_per_chain=per))
            W[r, i] = transport.wasserstein(wave.first_marginal(), heat, gm, cfg["metric.solver"]).value
    R = W.shape[0]
    mean, se = W.mean(0), W.std(0, ddof=1) / math.sqrt(R)
    fmean, fse = floor.mean(), floor.std(ddof=1) / math.sqrt(R)
    out.table("replicates", ["replicate"] + [f"mu={m:g}" for m in mus] + ["noise_floor"],
              [[r] + list(W[r]) + [floor[r]] for r in range(R)])
    out.table("summary", ["mu", "mean", "stderr"], [[m, a, b] for m, a, b in zip(mus, mean, se)])
    out.values.update({"mean": mean, "stderr": se, "noise_floor": fmean, "noise_floor_stderr": fse})
    k = cfg["stationary.se_factor"]
    mono = all(mean[i + 1] <= mean[i] + k * math.hypot(se[i], se[i + 1]) for i in range(len(mus) - 1))
    out.check(f"monotone nonincreasing within {k:g} combined SE", mono, list(mean), stderr=list(se))
    if spec.variant == "linear":
        out.check("smallest-mu value within the noise floor", mean[-1] <= fmean + k * math.hypot(se[-1], fse),
                  mean[-1], fmean)
    else:
        drop = mean[0] - mean[-1]
        need = cfg["stationary.gap_sigma"] * math.hypot(se[0], se[-1])
        out.check(f"largest-mu minus smallest-mu >= {cfg['stationary.gap_sigma']:g} sigma", drop >= need, drop, need)
    return out


@experiment("trajectory-sk-limit", "sup_t E|u_mu(t) - u(t)| started from the wave invariant law")
def trajectory_sk_limit(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    B = cfg["trajectory.trajectories"]
    rows, vals, ses = [], [], []
    for i, mu in enumerate(cfg["trajectory.mu_list"]):
        init = measures.sample_wave_invariant(mu, spec, nz, dom, cfg.scheme(),
                                              cfg.sampler(i << 20, chains=B, samples_per_chain=1))
        scheme = cfg.scheme(T=cfg["trajectory.T"], noise_mode="coupled_increment")
        drv = EnsembleDriver(cfg["run.seed"] + 1, range(B), dom.N)
        res = integrator.simulate_coupled([mu], spec, nz, dom, (init.u, init.v), init.u, scheme, drv)[0]
        rows.append([mu, res["sup_of_mean"], res["mean_sup_error"], res["stderr"]])
        vals.append(res["sup_of_mean"])
        ses.append(res["stderr"])
    out.table("errors", ["mu", "sup_t_mean_error", "mean_sup_error", "stderr"], rows)
    out.check("sup_t E|u_mu - u| decreasing in mu", all(b < a for a, b in zip(vals, vals[1:])), vals)
    return out


@experiment("gaussian-oracle", "linear reaction: sampled variances against the exact Gaussian invariant law")
def gaussian_oracle(cfg):
    out = Outcome()
    dom, nz, _ = _setup(cfg)
    spec = ReactionSpec.linear(cfg["gaussian.c"])
    oracle = measures.gaussian_invariant_oracle(None, spec, nz, dom)["var_u"]
    k = cfg["gaussian.sigma"]
    chains = cfg["gaussian.chains"]
    tables, rows = [], []
    for i, mu in enumerate(cfg["gaussian.mu_list"]):
        m = measures.sample_wave_invariant(mu, spec, nz, dom, cfg.scheme(),
                                           cfg.sampler(i << 20, chains=chains,
                                                       samples_per_chain=cfg["gaussian.samples_per_chain"]))
        var, se = measures.batch_means(m.u**2, chains, cfg["gaussian.batch"])
        varv, sev = measures.batch_means(m.v**2, chains, cfg["gaussian.batch"])
        ov = measures.gaussian_invariant_oracle(mu, spec, nz, dom)["var_v"]
        z = np.abs(var - oracle) / se
        zv = np.abs(varv - ov) / sev
        tables.append((var, se))
        rows += [[mu, kk, a, b, c, d, e] for kk, a, b, c, d, e in zip(dom.k, var, se, oracle, varv, ov)]
        out.check(f"mu={mu:g}: every u-variance within {k:g} sigma of the oracle", np.all(z <= k), float(z.max()), k)
        out.values[f"mu={mu:g}"] = {"max_z_u": z.max(), "max_z_v": zv.max()}
    (a, sa), (b, sb) = tables[0], tables[-1]
    zc = np.abs(a - b) / np.hypot(sa, sb)
    out.check(f"u-variance tables agree across mu within {k:g} combined sigma", np.all(zc <= k), float(zc.max()), k)
    out.table("variances", ["mu", "k", "var_u", "stderr", "oracle_u", "var_v", "oracle_v"], rows)
    return out


def _lyapunov_fit(cfg, spec, nz, dom, mus):
    rng = _rng(cfg, 8)
    theta = cfg["lyapunov.theta"]
    delta = cfg["lyapunov.delta"]
    fitted = {}
    if not theta:
        fitted["theta_bar"] = lyapunov.fit_theta(mus, spec, dom, nz.trace_q2, rng)
        theta = cfg["lyapunov.safety"] * fitted["theta_bar"]
    if not delta:
        fitted["delta_bar"] = lyapunov.fit_delta(theta, mus, spec, dom, nz.lambdas, rng)
        delta = cfg["lyapunov.safety"] * fitted["delta_bar"]
    return theta, delta, fitted


def _state_cloud(cfg, m, mu, dom, n, salt):
    rng = _rng(cfg, salt)
    k = min(len(m), n // 5)
    ru, rv = lyapunov.random_states(dom, mu, n - k, rng)
    return np.concatenate([m.u[:k], ru]), np.concatenate([m.v[:k], rv])


@experiment("lyapunov-drift", "drift inequalities for K and exp(delta K), uniform in mu")
def lyapunov_drift(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    mus = cfg["lyapunov.mu_list"]
    theta, delta, fitted = _lyapunov_fit(cfg, spec, nz, dom, mus)
    out.values.update(fitted, theta=theta, delta=delta)
    rows, chat = [], []
    n = cfg["lyapunov.n_states"]
    for i, mu in enumerate(mus):
        m = measures.sample_wave_invariant(mu, spec, nz, dom, cfg.scheme(), cfg.sampler(i << 20))
        p = lyapunov.LyapunovParams(theta, mu, delta, nz.trace_q2)
        calib = _state_cloud(cfg, m, mu, dom, n, 100 + i)
        test = _state_cloud(cfg, m, mu, dom, n, 200 + i)
        probe = lyapunov.large_state_probe(dom, mu, 2000, _rng(cfg, 300 + i))
        rep = lyapunov.drift_check_k(p, test, spec, dom)
        big = lyapunov.generator_on_k(p, probe, spec, dom) + theta * lyapunov.dissipation(p, probe, spec, dom)
        lam1, lam2 = lyapunov.fit_phi_constants(p, calib, spec, dom, nz.lambdas, probe)
        sign = lyapunov.phi_sign_check(p, test, spec, dom, nz.lambdas, lam1, lam2)
        sand = lyapunov.sandwich_constants(p, test, spec, dom)
        chat.append(rep["c_hat"])
        rows.append([mu, theta, delta, rep["c_hat"], float(big.max()), lam1, lam2, sign["pass_fraction"],
                     sign["violation_count"], sand["c1"], sand["c2"]])
        out.check(f"mu={mu:g}: K drift negative on large states", big.max() < 0, float(big.max()), 0.0)
        out.check(f"mu={mu:g}: c_hat finite", math.isfinite(rep["c_hat"]), rep["c_hat"])
        out.check(f"mu={mu:g}: Phi drift inequality pass fraction", lam1 > 0 and sign["pass_fraction"]
                  >= cfg["lyapunov.pass_fraction"], sign["pass_fraction"], cfg["lyapunov.pass_fraction"],
                  lambda_1=lam1, lambda_2=lam2)
        out.check(f"mu={mu:g}: K sandwich constant c1 > 0", sand["c1"] > 0, sand["c1"])
    spread = max(chat) / min(chat) if min(chat) > 0 else math.inf
    out.check("c_hat spread across mu", spread < cfg["lyapunov.c_spread"], spread, cfg["lyapunov.c_spread"])
    out.table("drift", ["mu", "theta", "delta", "c_hat", "large_state_max", "lambda_1", "lambda_2",
                        "phi_pass_fraction", "phi_violations", "c1", "c2"], rows)
    return out


@experiment("invariance-identity", "mean Kolmogorov drift of K over invariant samples vanishes")
def invariance_identity(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    theta, _, _ = _lyapunov_fit(cfg, spec, nz, dom, cfg["lyapunov.mu_list"]) if not cfg["lyapunov.theta"] \
        else (cfg["lyapunov.theta"], 0, 0)
    rows = []
    k = cfg["lyapunov.sigma"]
    for i, mu in enumerate(cfg["lyapunov.mu_list"]):
        m = measures.sample_wave_invariant(mu, spec, nz, dom, cfg.scheme(), cfg.sampler((i + 8) << 20))
        p = lyapunov.LyapunovParams(theta, mu, 0.0, nz.trace_q2)
        rep = lyapunov.invariance_identity(p, m, spec)
        rows.append([mu, rep["mean"], rep["stderr"], rep["z"], rep["n"]])
        out.check(f"mu={mu:g}: |mean N K| within {k:g} sigma", abs(rep["z"]) <= k, rep["z"], k)
    out.table("identity", ["mu", "mean", "stderr", "z", "n"], rows)
    return out


@experiment("exp-moments", "moment and exponential-moment bounds uniform in mu")
def exp_moments(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    eta = cfg["moments.eta"] or transport.default_eta(spec, nz, dom)
    out.values["eta"] = eta
    reports, rows, erows = [], [], []
    for i, mu in enumerate(cfg["moments.mu_list"]):
        m = measures.sample_wave_invariant(mu, spec, nz, dom, cfg.scheme(), cfg.sampler((i + 16) << 20))
        rep = measures.moment_report(m, mu, spec)
        reports.append(rep)
        keys = [k for k in rep if isinstance(rep[k], dict)]
        rows.append([mu] + [rep[k]["mean"] for k in keys] + [rep[k]["stderr"] for k in keys])
        for e in measures.exp_moment_report(m, [0.0, 0.5 * eta, eta], spec):
            erows.append([mu, e["eta"], e["estimate"], e["stderr"], e["ess"], e["stable"]])
            if e["eta"] == eta:
                out.check(f"mu={mu:g}: exp-moment stable at eta={eta:.3g}", e["stable"], e["ess"], 30)
    for key in keys:
        vals = [r[key]["mean"] for r in reports]
        spread = max(vals) / min(vals) if min(vals) > 0 else math.inf
        out.check(f"{key}: max/min across mu", spread < cfg["moments.spread"], spread, cfg["moments.spread"])
    est = [r[2] for r in erows if r[1] == eta]
    out.check("exp-moment estimates finite", all(math.isfinite(x) for x in est), est)
    out.table("moments", ["mu"] + [f"{k}_mean" for k in keys] + [f"{k}_stderr" for k in keys], rows)
    out.table("exp_moments", ["mu", "eta", "estimate", "stderr", "ess", "stable"], erows)
    return out


@experiment("asf", "tangent decay, control energy and the asymptotic gradient estimate")
def asf_experiment(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg, cfg["asf.N"])
    nbar = cfg["noise.nbar"]
    gap = asf.check_gap(dom, spec, nbar)
    dt = cfg["scheme.dt"]
    n_steps = int(round(cfg["asf.T"] / dt))
    runs = cfg["asf.runs"]
    rng = _rng(cfg, 10)
    radii = np.exp(rng.uniform(np.log(0.1), np.log(10.0), (runs, 1)))
    x = radii * rng.standard_normal((runs, dom.N)) * dom.k ** -1.0
    h = rng.standard_normal((runs, dom.N))
    heat = integrator.HeatStepper(spec, nz, dom, dt, "exact_covariance")
    tan = asf.TangentStepper(spec, dom, dt, nbar, damped=True)
    drv = EnsembleDriver(cfg["run.seed"], range(runs), dom.N)
    u, rho = x.copy(), h.copy()
    h2 = np.sum(h * h, -1)
    an = dom.alphas[nbar - 1]
    ratio = np.ones(runs)
    dens_prev = an**2 * np.sum(rho[:, :nbar] ** 2, -1)
    energy = np.zeros(runs)
    for i in range(1, n_steps + 1):
        rho = tan.step(u, rho)
        u = heat.step(u, drv.normals())
        integrator._check(heat.norm2(u), i)
        t = i * dt
        ratio = np.maximum(ratio, np.sum(rho * rho, -1) / (h2 * math.exp(-(an - spec.slope_bound) * t)))
        dens = an**2 * np.sum(rho[:, :nbar] ** 2, -1)
        energy += 0.5 * dt * (dens + dens_prev)
        dens_prev = dens
    bound = h2 * an**2 / gap
    out.table("runs", ["run", "max_decay_ratio", "control_energy", "control_bound"],
              [[r, ratio[r], energy[r], bound[r]] for r in range(runs)])
    out.check("decay ratio <= 1 + slack on every run", np.all(ratio <= 1 + cfg["asf.slack"]), float(ratio.max()),
              1 + cfg["asf.slack"])
    out.check("control energy within bound on every run", np.all(energy <= bound), float(np.max(energy / bound)), 1.0)
    probe = asf.gradient_probe(x[0], cfg["asf.t_grid"], spec, nz, dom, dt, cfg["asf.ensemble"], nbar,
                               cfg["asf.j"], cfg["run.seed"] + 1)
    prow = probe["rows"]
    out.table("gradient_probe", ["t", "lhs", "lhs_stderr", "rhs_term1", "rhs_term2", "margin", "remainder"],
              [[r["t"], r["lhs"], r["lhs_stderr"], r["rhs_term1"], r["rhs_term2"], r["margin"], r["remainder"]]
               for r in prow])
    out.check("gradient estimate holds with positive margin at every t", all(r["margin"] > 0 for r in prow),
              [r["margin"] for r in prow], 0.0)
    rate = probe["remainder_decay_rate"]
    out.check("remainder decay rate >= 0.5 (alpha_nbar - L_b)", rate >= 0.5 * gap, rate, 0.5 * gap)
    return out


@experiment("ot-checks", "exact matching solver against enumeration and a 1D Gaussian closed form")
def ot_checks(cfg):
    out = Outcome()
    rng = _rng(cfg, 11)
    mismatches, rows = 0, []
    for i in range(cfg["ot.instances"]):
        n = int(rng.integers(1, cfg["ot.n_max"] + 1))
        d = int(rng.integers(1, 6))
        X, Y = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        C = transport.cost_matrix(transport.GroundMetric(), X, Y)
        exact = transport.exact_assignment(C)[0]
        brute = transport.brute_force_matching(C)
        mismatches += abs(exact - brute) > 1e-12 * max(1.0, brute)
        rows.append([i, n, d, exact, brute])
    out.table("instances", ["instance", "n", "dim", "exact", "brute_force"], rows)
    out.check("exact solver equals enumeration", mismatches == 0, mismatches, 0)
    n = cfg["ot.gauss_n"]
    a = rng.standard_normal((n, 1))
    b = 2.0 * rng.standard_normal((n, 1))
    w = transport.wasserstein(a, b).value
    # quantile-integral oracle: int_0^1 |F1^-1(q) - F2^-1(q)| dq
    oracle = integrate.quad(lambda q: abs(stats.norm.ppf(q) - 2.0 * stats.norm.ppf(q)), 0, 1, limit=200)[0]
    rel = abs(w - oracle) / oracle
    out.values.update(gaussian_w1=w, gaussian_oracle=oracle, closed_form=math.sqrt(2 / math.pi))
    out.check("1D Gaussian W1 within tolerance", rel <= cfg["ot.gauss_tol"], rel, cfg["ot.gauss_tol"])
    return out


@experiment("metric-sandwich", "weighted path metric lies between |x-y| and exp(eta(|x|^2+|y|^2))|x-y|")
def metric_sandwich(cfg):
    out = Outcome()
    dom, nz, spec = _setup(cfg)
    eta = transport.default_eta(spec, nz, dom)
    gm = transport.GroundMetric("path", eta, cfg["metric.refine"])
    rng = _rng(cfg, 12)
    n = cfg["ot.pairs"]
    x = lyapunov.random_states(dom, 1.0, n, rng, radii=(1e-2, 3.0 / math.sqrt(eta)))[0]
    y = lyapunov.random_states(dom, 1.0, n, rng, radii=(1e-2, 3.0 / math.sqrt(eta)))[0]
    closed = transport.segment_closed_form(eta, x, y)
    bad, worst_gap, rows = 0, 0.0, []
    for i in range(n):
        _, rep = transport.ground_distance(gm, x[i], y[i], report=True)
        raw = rep["raw"]
        bad += not (rep["lower"] * (1 - 1e-12) <= raw <= rep["upper"] * (1 + 1e-12))
        worst_gap = max(worst_gap, abs(raw - closed[i]) / max(raw, 1e-300))
        rows.append([i, rep["lower"], raw, closed[i], rep["upper"]])
    out.values["eta"] = eta
    out.table("pairs", ["pair", "lower", "quadrature", "closed_form", "upper"], rows)
    out.check("sandwich violations", bad == 0, bad, 0)
    out.check("quadrature agrees with closed form", worst_gap < 1e-7, worst_gap, 1e-7)
    return out


@experiment("contraction", "heat-semigroup contraction and irreducibility statistics")
def contraction(cfg):
    out = Outcome()
    dom, _, spec = _setup(cfg)
    # a weaker noise keeps ball hits observable with a finite ensemble
    nz = cfg.noise(dom, amplitude=cfg["contraction.amplitude"])
    eps = cfg["contraction.eps"]
    t_grid = sorted(cfg["contraction.t_grid"])
    rows = []
    for r in (1.0, 10.0):
        x = np.zeros(dom.N)
        x[0] = r
        res = transport.contraction_probe(x, np.zeros(dom.N), t_grid, cfg["contraction.ensemble"], spec, nz, dom,
                                          dt=cfg["scheme.dt"], seed=cfg["run.seed"], eps_ball=eps)
        fr = [row["irreducible_fraction"] for row in res["rows"]]
        for row in res["rows"]:
            rows.append([r, row["t"], row["rho"], row["mean_pair_distance"], row["irreducible_fraction"],
                         row["paired_fraction"]])
        # first grid time from which every later fraction is positive
        t_star = next((t for i, t in enumerate(t_grid) if all(f > 0 for f in fr[i:])), None)
        out.values[f"delta_hat(|x|={r:g})"] = res["delta_hat"]
        out.values[f"t_star(|x|={r:g})"] = t_star
        out.check(f"|x|={r:g}: irreducibility fraction positive for t >= t_star", t_star is not None,
                  min(fr[t_grid.index(t_star):]) if t_star is not None else 0.0, 0.0, t_star=t_star)
    out.table("contraction", ["x_norm", "t", "rho", "mean_pair_distance", "irreducible_fraction",
                              "paired_fraction"], rows)
    return out


def validate(cfg):
    """Aggregate hypothesis checks on the configured noise and reaction."""
    dom, nz, spec = _setup(cfg)
    rep_q = noise_mod.verify_hypothesis_q(nz, cfg["noise.delta"], dom)
    rep_b = reaction.validate_spec(spec, dom, nz, raise_on_failure=False)
    failures = [f["inequality"] for f in rep_b["failures"]]
    if rep_q["summability_warning"]:
        failures.append("Tr[Q^2 (-A)^delta] partial sums not converged")
    if not rep_q["nondegeneracy_ok"]:
        failures.append("noise degenerate on the first nbar modes")
    return {"ok": not failures, "failures": failures, "noise": rep_q, "reaction": _plain(rep_b),
            "trace_q2": nz.trace_q2}

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sklimit import noise, reaction, spectral, transport
from sklimit.errors import ConfigError
from sklimit.measures import EmpiricalMeasure
from sklimit.transport import GroundMetric

coord = st.floats(-2.0, 2.0, allow_nan=False)


def test_metric_parsing():
    assert GroundMetric.parse("l2") == GroundMetric()
    gm = GroundMetric.parse("path:0.25")
    assert gm.variant == "path" and gm.eta == 0.25 and gm.name == "path:0.25"
    for bad in ("l1", "path:", "path:-1"):
        with pytest.raises((ConfigError, ValueError)):
            GroundMetric.parse(bad)
    with pytest.raises(ConfigError):
        transport.parse_solver("simplex")
    assert transport.parse_solver("entropic:0.1") == ("entropic", 0.1)


@given(st.integers(2, 7), st.integers(0, 10**6))
def test_exact_solver_equals_enumeration(n, seed):
    C = np.random.default_rng(seed).uniform(size=(n, n))
    val, perm = transport.exact_assignment(C)
    assert val == pytest.approx(transport.brute_force_matching(C), abs=1e-12)
    assert sorted(perm) == list(range(n))
    assert C[np.arange(n), perm].mean() == pytest.approx(val)


def test_exact_solver_requires_square():
    with pytest.raises(ValueError):
        transport.exact_assignment(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        transport.wasserstein(np.zeros((3, 2)), np.zeros((4, 2)))


def test_gaussian_w1_closed_form():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2000, 1))
    y = 2.0 * rng.standard_normal((2000, 1))
    res = transport.wasserstein(x, y)
    assert res.value == pytest.approx(math.sqrt(2 / math.pi), rel=0.05)
    # in 1D the optimal matching pairs order statistics
    assert res.value == pytest.approx(np.mean(np.abs(np.sort(x[:, 0]) - np.sort(y[:, 0]))), rel=1e-12)


@given(arrays(float, (6, 3), elements=coord), arrays(float, (6, 3), elements=coord), st.floats(0.1, 10.0))
def test_w1_scales_and_is_symmetric(x, y, c):
    a = transport.wasserstein(x, y).value
    assert transport.wasserstein(y, x).value == pytest.approx(a, abs=1e-12)
    assert transport.wasserstein(c * x, c * y).value == pytest.approx(c * a, rel=1e-9, abs=1e-12)


@given(arrays(float, (5, 2), elements=coord), arrays(float, (5, 2), elements=coord),
       arrays(float, (5, 2), elements=coord))
def test_w1_triangle_inequality(x, y, z):
    w = lambda a, b: transport.wasserstein(a, b).value
    assert w(x, z) <= w(x, y) + w(y, z) + 1e-12


def test_sinkhorn_approaches_exact_from_above():
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((40, 2)), rng.standard_normal((40, 2)) + 1.0
    C = transport.cost_matrix(GroundMetric(), X, Y)
    exact, _ = transport.exact_assignment(C)
    vals = []
    for eps in (1.0, 0.3, 0.1, 0.03):
        val, P, ok, _ = transport.sinkhorn(C, eps)
        assert ok
        np.testing.assert_allclose(P.sum(1), 1 / 40, atol=1e-8)
        vals.append(val)
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] >= exact - 1e-9
    assert vals[-1] - exact < 0.05 * exact


def test_entropic_wasserstein_handles_unequal_sizes():
    rng = np.random.default_rng(2)
    res = transport.wasserstein(rng.standard_normal((30, 2)), rng.standard_normal((20, 2)), solver="entropic:0.1")
    assert res.converged and res.solver == "entropic:0.1"
    with pytest.raises(ValueError):
        transport.sinkhorn(np.zeros((2, 2)), 0.0)


def test_wasserstein_accepts_measures():
    dom = spectral.Domain(N=3)
    a = EmpiricalMeasure(np.zeros((4, 3)), dom)
    b = EmpiricalMeasure(np.ones((4, 3)), dom, np.zeros((4, 3)), 0.1)
    assert transport.wasserstein(a, b).value == pytest.approx(math.sqrt(3))
    assert transport.wasserstein(a, b).as_dict()["solver"] == "exact"


@given(arrays(float, 3, elements=coord), arrays(float, 3, elements=coord), st.floats(0.01, 1.0))
def test_closed_form_matches_quadrature(x, y, eta):
    ref = transport._segment_quad(eta, x, y)
    assert transport.segment_closed_form(eta, x, y) == pytest.approx(ref, rel=1e-7, abs=1e-14)


@given(arrays(float, 3, elements=coord), arrays(float, 3, elements=coord), st.floats(0.01, 1.0))
def test_path_metric_sandwich_and_symmetry(x, y, eta):
    gm = GroundMetric("path", eta)
    d, rep = transport.ground_distance(gm, x, y, report=True)
    assert rep["lower"] * (1 - 1e-12) <= d <= rep["upper"] * (1 + 1e-12)
    assert transport.ground_distance(gm, y, x) == pytest.approx(d, rel=1e-9, abs=1e-15)
    assert rep["active"] in ("none", "lower", "upper")


def test_refined_path_never_longer_than_segment():
    gm0 = GroundMetric("path", 1.0)
    gm2 = GroundMetric("path", 1.0, refine=3)
    x, y = np.array([1.5, 1.0]), np.array([-1.5, 1.0])
    straight = transport.ground_distance(gm0, x, y)
    bent = transport.ground_distance(gm2, x, y)
    assert np.linalg.norm(x - y) <= bent < straight


def test_cost_matrix_matches_pairwise_distance():
    rng = np.random.default_rng(3)
    X, Y = rng.standard_normal((4, 2)), rng.standard_normal((5, 2))
    gm = GroundMetric("path", 0.3)
    C = transport.cost_matrix(gm, X, Y)
    for i in range(4):
        for j in range(5):
            assert C[i, j] == pytest.approx(transport.ground_distance(gm, X[i], Y[j]), rel=1e-7)
    with pytest.raises(ValueError):
        transport.cost_matrix(gm, np.array([[np.nan, 0.0]]), Y)


def test_default_eta_shrinks_with_noise():
    dom = spectral.Domain(N=8)
    kg = reaction.ReactionSpec.klein_gordon()
    weak = transport.default_eta(kg, noise.power_spectrum(dom, amplitude=0.1), dom)
    strong = transport.default_eta(kg, noise.power_spectrum(dom, amplitude=10.0), dom)
    assert 0 < strong < weak < 0.1


def test_synchronous_coupling_contracts_at_linear_rate():
    dom = spectral.Domain(N=8)
    c = 1.0
    spec = reaction.ReactionSpec.linear(c)
    x = 2.0 * spectral.unit(1, dom)
    res = transport.contraction_probe(x, np.zeros(8), [0.5, 1.0, 2.0], 16, spec, noise.power_spectrum(dom), dom,
                                      dt=0.01, coupled=True)
    for row in res["rows"]:
        assert row["mean_pair_distance"] == pytest.approx(2.0 * math.exp(-(1.0 + c) * row["t"]), rel=1e-9)
        assert row["rho"] <= row["mean_pair_distance"] + 1e-12
    assert res["rows"][-1]["paired_fraction"] == 1.0


def test_independent_ensembles_report_fractions():
    dom = spectral.Domain(N=8)
    kg = reaction.ReactionSpec.klein_gordon()
    res = transport.contraction_probe(np.ones(8), np.zeros(8), [0.5, 2.0], 50, kg,
                                      noise.power_spectrum(dom, 1.5, amplitude=1.0), dom, dt=0.01, eps_ball=0.5)
    last = res["rows"][-1]
    assert 0 < last["irreducible_fraction"] <= 1
    assert last["rho"] < res["rows"][0]["rho"]

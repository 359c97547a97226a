import numpy as np
import pytest
from hypothesis import given, strategies as st

from sklimit import reaction, spectral
from sklimit.errors import BlowUpError, ValidationError

DOM = spectral.Domain(N=16)
KG = reaction.ReactionSpec.klein_gordon()


def test_constructor_validation():
    with pytest.raises(ValueError):
        reaction.ReactionSpec.linear(-1.0)
    with pytest.raises(ValueError):
        reaction.ReactionSpec.polynomial(4.0)
    with pytest.raises(ValueError):
        reaction.ReactionSpec.polynomial(3.0, a=lambda x: x)
    with pytest.raises(ValueError):
        reaction.ReactionSpec("lipschitz")


@given(st.floats(-50, 50), st.floats(1.1, 3.0))
def test_antiderivative_derivative_pair(s, p):
    spec = reaction.ReactionSpec.polynomial(p, a=1.3)
    h = 1e-6 * max(1.0, abs(s))
    fd = (spec.antiderivative(0.0, s + h) - spec.antiderivative(0.0, s - h)) / (2 * h)
    assert fd == pytest.approx(spec.pointwise(0.0, s), rel=1e-5, abs=1e-6)


def test_lipschitz_antiderivative_by_quadrature():
    spec = reaction.ReactionSpec.lipschitz(lambda x, s: np.sin(s), lambda x, s: np.cos(s), 1.0)
    s = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(spec.antiderivative(0.0, s), 1 - np.cos(s), atol=1e-12)


def test_linear_reaction_is_spectral():
    spec = reaction.ReactionSpec.linear(2.0)
    u = np.random.default_rng(0).standard_normal(DOM.N)
    np.testing.assert_allclose(reaction.eval_b(spec, u, DOM), -2.0 * u)
    assert reaction.b_dot_u(spec, u, DOM) == pytest.approx(-2.0 * u @ u)
    assert reaction.antiderivative_integral(spec, u, DOM) == pytest.approx(-(u @ u))
    np.testing.assert_array_equal(reaction.nonlinear_part(spec, u, DOM), 0.0)


def test_b_dot_u_matches_coefficient_inner_product():
    u = np.random.default_rng(1).standard_normal(DOM.N) * DOM.k ** -2.0
    assert reaction.b_dot_u(KG, u, DOM) == pytest.approx(reaction.eval_b(KG, u, DOM) @ u, rel=1e-10)
    assert reaction.b_dot_u(KG, u, DOM) == pytest.approx(-spectral.lp_norm(u, 4, DOM) ** 4, rel=1e-10)


def test_linearization_converges_at_first_order():
    rng = np.random.default_rng(2)
    u = rng.standard_normal(DOM.N) * DOM.k ** -1.5
    h = rng.standard_normal(DOM.N) * DOM.k ** -1.5
    lin = reaction.linearize_apply(KG, u, h, DOM)
    eps = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    err = [np.linalg.norm((reaction.eval_b(KG, u + e * h, DOM) - reaction.eval_b(KG, u, DOM)) / e - lin) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_linearize_broadcasts_over_tangents():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(DOM.N) * 0.3
    H = rng.standard_normal((5, DOM.N))
    batch = reaction.linearize_apply(KG, u, H, DOM)
    for i in range(5):
        np.testing.assert_allclose(batch[i], reaction.linearize_apply(KG, u, H[i], DOM), atol=1e-13)


def test_overflow_raises_blowup():
    with pytest.raises(BlowUpError):
        reaction.eval_b(KG, np.full(DOM.N, 1e120), DOM)


def test_validation_accepts_klein_gordon_and_rejects_large_slope():
    rep = reaction.validate_spec(KG, DOM)
    assert rep["ok"] and rep["c1"] > 0 and rep["L_b"] <= 0
    bad = reaction.ReactionSpec.lipschitz(lambda x, s: 2.0 * s, lambda x, s: np.full(np.shape(s), 2.0), 2.0)
    with pytest.raises(ValidationError):
        reaction.validate_spec(bad, DOM)
    rep = reaction.validate_spec(bad, DOM, raise_on_failure=False)
    assert any("alpha_1" in f["inequality"] for f in rep["failures"])


def test_declared_slope_must_dominate():
    lying = reaction.ReactionSpec.lipschitz(lambda x, s: 0.9 * np.sin(s), lambda x, s: 0.9 * np.cos(s), 0.1)
    rep = reaction.validate_spec(lying, DOM, raise_on_failure=False)
    assert not rep["ok"]
    assert rep["L_b_estimate"] == pytest.approx(0.9, rel=1e-6)


def test_variable_coefficient_requires_bounds():
    spec = reaction.ReactionSpec.polynomial(3.0, a=lambda x: 1 + np.sin(x) ** 2, a_bounds=(1.0, 2.0))
    u = np.zeros(DOM.N)
    u[0] = 1.0
    assert reaction.b_dot_u(spec, u, DOM) < reaction.b_dot_u(KG, u, DOM)

import numpy as np
import pytest

from dempc.discount import (ExplicitDiscount, builtin, from_config, linear_lower_bound, parse,
                            piecewise_linear, staircase_weights, validate_discount, weights)


def test_linear_weights():
    np.testing.assert_allclose(weights(builtin("lin"), 4), [1.0, 0.75, 0.5, 0.25])


def test_half_linear_weights():
    np.testing.assert_allclose(weights(builtin("half-lin"), 4), [1.0, 1.0, 1.0, 0.5])


def test_polynomial_weights():
    np.testing.assert_allclose(weights(builtin("poly", q=2), 4), [1.0, 0.9375, 0.75, 0.4375])


def test_undiscounted_weights():
    np.testing.assert_array_equal(weights(builtin("un"), 3), [1.0, 1.0, 1.0])


def test_staircase_weights_rule():
    # w[k-1] = w[k] = 1 - k/N for even k, w[0] = 1
    np.testing.assert_allclose(staircase_weights(4), [1.0, 0.5, 0.5, 0.0])
    np.testing.assert_allclose(staircase_weights(6), [1.0, 2 / 3, 2 / 3, 1 / 3, 1 / 3, 0.0])
    np.testing.assert_allclose(weights(builtin("staircase"), 5), [1.0, 0.6, 0.6, 0.2, 0.2])


def test_bad_horizon_and_names():
    with pytest.raises(ValueError):
        weights(builtin("lin"), 0)
    with pytest.raises(ValueError):
        builtin("cosine")
    with pytest.raises(ValueError):
        builtin("poly")
    with pytest.raises(ValueError):
        builtin("poly", q=1.5)


def test_explicit_schedule_shape_and_range_checked():
    with pytest.raises(ValueError):
        weights(ExplicitDiscount("short", lambda N: [1.0] * (N - 1)), 3)
    with pytest.raises(ValueError):
        weights(ExplicitDiscount("big", lambda N: [2.0] * N), 3)


def test_parse_and_config():
    assert parse("poly:3").params == {"q": 3}
    assert parse("half-lin").label == "half-lin"
    assert from_config({"name": "polynomial", "q": 2}).label == "poly:2"
    assert parse("staircase").label == "staircase"


def test_validate_rejects_undiscounted_with_two_violations():
    rep = validate_discount(builtin("un"))
    assert not rep.is_valid
    assert rep.violated_conditions == ["beta(1)=0", "end-slope"]


@pytest.mark.parametrize("name,params,slope", [
    ("lin", {}, 1.0), ("half-lin", {}, 2.0),
    ("poly", {"q": 1}, 1.0), ("poly", {"q": 2}, 2.0), ("poly", {"q": 3}, 3.0), ("poly", {"q": 5}, 5.0),
])
def test_validate_accepts_catalogue(name, params, slope):
    rep = validate_discount(builtin(name, **params))
    assert rep.is_valid, rep.summary()
    assert rep.lipschitz_estimate >= slope - 1e-6
    assert rep.lipschitz_estimate <= slope + 1e-6
    assert rep.beta0 == 1.0 and rep.beta1 == 0.0


def test_validate_flags_increase():
    bump = piecewise_linear([0.0, 0.5, 0.6, 1.0], [1.0, 0.5, 0.7, 0.0])
    rep = validate_discount(bump)
    assert "non-increasing" in rep.violated_conditions
    assert rep.max_increase == pytest.approx(0.2 / 1000, rel=1e-6)


def test_validate_flags_flat_end():
    flat = piecewise_linear([0.0, 0.9, 1.0], [1.0, 0.0, 0.0])
    assert validate_discount(flat).violated_conditions == ["end-slope"]


def test_validate_needs_uniform():
    with pytest.raises(TypeError):
        validate_discount(builtin("staircase"))


def test_linear_lower_bound():
    assert linear_lower_bound(builtin("lin")) == pytest.approx(1.0)
    assert linear_lower_bound(builtin("half-lin")) == pytest.approx(1.0)
    assert linear_lower_bound(builtin("poly", q=2)) >= 1.0 - 1e-12

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvadbench import nn
from pvadbench.models import (
    Dims, Variant, build_model, dsc_combine, expected_parameter_count, posteriors, pvad_logits,
)

COUNTS = {"EF": 133_955, "LF": 84_803, "CLF": 101_315, "DCLF": 405_571}
TINY = Dims(input=40, enroll=6, hidden=5, fcn=4, dyn_hidden=6, enc_hidden=6, enc_layers=2)


@pytest.mark.parametrize("name,count", sorted(COUNTS.items()))
def test_parameter_counts(name, count):
    assert build_model(name, 0).parameter_count() == count
    assert expected_parameter_count(name) == count


def test_dsc_count_in_budget():
    n = build_model("DSC", 0).parameter_count()
    assert n == expected_parameter_count("DSC")
    assert 1_300_000 <= n <= 1_600_000


def test_variant_parse():
    assert Variant.parse("clf") is Variant.CLF
    assert Variant.parse(Variant.DSC) is Variant.DSC
    with pytest.raises(ValueError):
        Variant.parse("XYZ")


@pytest.mark.parametrize("name", ["EF", "LF", "CLF", "DCLF"])
def test_posteriors_are_distributions(name, rng):
    m = build_model(name, 0, TINY)
    e = rng.normal(size=6)
    post = posteriors(m, rng.normal(size=(9, 40)), e / np.linalg.norm(e))
    assert post.shape == (9, 3)
    np.testing.assert_allclose(post.sum(axis=1), 1.0)


@pytest.mark.parametrize("name", ["EF", "LF", "CLF", "DCLF"])
def test_models_are_causal(name, rng):
    m = build_model(name, 1, TINY)
    e = np.eye(6)[0]
    x = rng.normal(size=(12, 40))
    y = x.copy()
    y[7:] += 5.0
    a = posteriors(m, x, e)
    b = posteriors(m, y, e)
    np.testing.assert_allclose(a[:7], b[:7], atol=1e-14)


def test_dsc_posteriors_and_zero_enrollment(rng):
    m = build_model("DSC", 0, TINY)
    x = rng.normal(size=(8, 40))
    post = posteriors(m, x, np.eye(6)[1])
    np.testing.assert_allclose(post.sum(axis=1), 1.0)
    zero = posteriors(m, x, np.zeros(6))
    assert np.all(zero[:, 1] == 0.0)


def test_dsc_combine_arithmetic():
    out = dsc_combine(np.array([[0.8, 0.2]]), np.array([0.5]))
    np.testing.assert_allclose(out, [[0.6, 0.2, 0.2]])
    np.testing.assert_allclose(dsc_combine(np.array([0.3, 0.7]), None), [0.3, 0.0, 0.7])
    with pytest.raises(ValueError):
        dsc_combine(np.array([0.5, 0.6]), None)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(-1, 1))
def test_dsc_combine_is_distribution(p_s, cos):
    out = dsc_combine(np.array([p_s, 1 - p_s]), cos)
    assert np.all(out >= 0)
    assert out.sum() == pytest.approx(1.0)


def test_zero_enrollment_dclf_uses_unit_cosine(rng):
    m = build_model("DCLF", 0, TINY)
    assert np.all(np.isfinite(posteriors(m, rng.normal(size=(5, 40)), np.zeros(6))))


def test_shape_errors(rng):
    m = build_model("EF", 0, TINY)
    with pytest.raises(nn.ShapeError):
        pvad_logits(m, rng.normal(size=(5, 39)), np.ones(6))
    with pytest.raises(nn.ShapeError):
        pvad_logits(m, rng.normal(size=(5, 40)), np.ones(7))


def test_film_starts_as_identity():
    m = build_model("CLF", 0)
    b = m.params["film.b"].data
    assert np.all(b[:64] == 1.0) and np.all(b[64:] == 0.0)


def test_build_is_deterministic():
    a, b = build_model("LF", 5), build_model("LF", 5)
    for (k, x), (_, y) in zip(a.params.items(), b.params.items()):
        np.testing.assert_array_equal(x.data, y.data)

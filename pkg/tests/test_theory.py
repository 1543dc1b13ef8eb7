import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwgnn.theory import (HomophilyLaw, TheoremSetting, analytic_bound, bernstein_bound,
                          bernstein_probe, canonical_setting, clipped_normal_moments,
                          expected_embedding, sample_embedding, sample_embeddings, spectral_norm,
                          verify_concentration)

GRID = np.linspace(0.2, 2.0, 10)


def point_setting(p=0.75, k=2, w=None):
    # scale 0: features are point masses at the class centres
    return TheoremSetting(k, [1.0, 0.0], [0.0, 1.0], 0.0, 5.0, HomophilyLaw("point", p), w=w)


def test_expected_embedding_example():
    assert np.allclose(expected_embedding(point_setting()), [5 / 6, 1 / 6], atol=1e-15)


def test_expected_embedding_pure_homophily_and_large_k():
    w = np.array([[2.0, 1.0], [0.0, 3.0]])
    s = point_setting(1.0, k=7, w=w)
    assert np.allclose(expected_embedding(s), w @ [1.0, 0.0])
    s = point_setting(0.5, k=10 ** 7)
    assert np.allclose(expected_embedding(s), [0.5, 0.5], atol=1e-6)


def test_zero_weight_gives_zero_embedding():
    s = canonical_setting()
    s.w = np.zeros((4, 4))
    assert not sample_embeddings(s, 50, seed=1).any()
    assert analytic_bound(s, 0.5) == 0.0


def test_degenerate_draws_are_exact():
    s = point_setting(1.0, k=4, w=np.array([[1.0, 2.0], [3.0, 4.0]]))
    h = sample_embedding(s, np.random.default_rng(0))
    assert np.array_equal(h, [1.0, 3.0])


def test_clipped_moments_against_sampling():
    rng = np.random.default_rng(0)
    loc = np.array([0.3, -1.5, 2.5])
    x = np.clip(loc + 1.2 * rng.standard_normal((400_000, 3)), -2, 2)
    m, t = clipped_normal_moments(loc, 1.2, 2.0)
    assert np.allclose(m, x.mean(0), atol=5e-3)
    assert np.allclose(t, (x * x).mean(0), atol=1e-2)
    m, t = clipped_normal_moments(loc, 0.0, 2.0)
    assert m.tolist() == [0.3, -1.5, 2.0]


def test_monte_carlo_mean_matches_expectation():
    s = canonical_setting(var_p=0.05)
    h = sample_embeddings(s, 100_000, seed=3)
    se = h.std(0, ddof=1) / np.sqrt(len(h))
    assert (np.abs(h.mean(0) - expected_embedding(s)) <= 4 * se).all()


def test_sampling_is_deterministic_and_chunked():
    s = canonical_setting()
    a = sample_embeddings(s, 2500, seed=9)
    assert np.array_equal(a, sample_embeddings(s, 2500, seed=9))
    # the first chunk does not depend on the total count
    assert np.array_equal(a[:1000], sample_embeddings(s, 1000, seed=9))
    assert not np.array_equal(a, sample_embeddings(s, 2500, seed=10))


def test_bound_properties():
    s = canonical_setting(var_p=0.02)
    t = np.linspace(0.05, 5, 60)
    b = analytic_bound(s, t)
    assert (np.diff(b) < 0).all()
    assert (b <= 2 * s.d).all()
    with pytest.raises(ValueError):
        analytic_bound(s, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 0.1), st.floats(0.05, 4.0))
def test_bound_grows_with_variance(var, t):
    low = analytic_bound(canonical_setting(var_p=var), t)
    high = analytic_bound(canonical_setting(var_p=min(2 * var, 0.24)), t)
    assert high >= low


@pytest.mark.parametrize("seed", range(10))
def test_spectral_norm_matches_svd(seed):
    w = np.random.default_rng(seed).normal(size=(4, 4))
    assert abs(spectral_norm(w) - np.linalg.svd(w, compute_uv=False)[0]) <= 1e-8


def test_spectral_norm_zero():
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_tail_vanishes_beyond_support():
    s = canonical_setting(var_p=0.08)
    # every coordinate of h and E h lies in [-C_x, C_x]
    far = 2 * s.c_x * np.sqrt(s.d) + 0.01
    r = verify_concentration(s, [far, far * 2], trials=2000, seed=0)
    assert r.empirical == [0.0, 0.0]


@pytest.mark.parametrize("var", [0.0, 0.02, 0.05, 0.08])
def test_canonical_setting_passes(var):
    r = verify_concentration(canonical_setting(var_p=var), GRID, trials=10_000, seed=0)
    assert r.all_passed
    for e, b, se, ok in zip(r.empirical, r.bound, r.stderr, r.passed):
        assert ok == (e <= b + 3 * se)
        assert b <= 1.0


def test_midpoint_tail_rises_with_variance():
    tails = [verify_concentration(canonical_setting(var_p=v), GRID, 10_000, 0).midpoint_tail()
             for v in (0.0, 0.02, 0.08)]
    assert tails[0] <= tails[1] <= tails[2]


def test_report_fields():
    r = verify_concentration(canonical_setting(), [0.5, 1.0], trials=1000, seed=1)
    d = r.to_dict()
    assert d["all_passed"] == r.all_passed and "t2" in d["notes"]
    assert TheoremSetting.from_dict(d["setting"]).to_dict() == d["setting"]
    with pytest.raises(ValueError):
        verify_concentration(canonical_setting(), [0.5], trials=999)


def test_homophily_laws():
    law = HomophilyLaw("beta", 0.5, 0.05)
    a, b = law.beta_params()
    assert a / (a + b) == pytest.approx(0.5)
    assert a * b / ((a + b) ** 2 * (a + b + 1)) == pytest.approx(0.05)
    assert HomophilyLaw("beta", 0.3, 0.0).kind == "point"
    d = HomophilyLaw("discrete", values=[0.2, 0.8], probs=[0.5, 0.5])
    assert d.mean == pytest.approx(0.5) and d.var == pytest.approx(0.09)
    draws = d.quantile(np.random.default_rng(0).random(20_000))
    assert set(np.unique(draws)) == {0.2, 0.8}
    assert abs((draws == 0.2).mean() - 0.5) < 0.02
    for bad in (dict(kind="beta", mean=0.5, var=0.3), dict(kind="gamma"),
                dict(kind="discrete", values=[0.5], probs=[0.7])):
        with pytest.raises(ValueError):
            HomophilyLaw(**bad)


def test_setting_validation():
    with pytest.raises(ValueError):
        TheoremSetting(0, [1.0], [0.0], 1.0, 2.0, HomophilyLaw())
    with pytest.raises(ValueError):
        TheoremSetting(3, [1.0], [0.0, 1.0], 1.0, 2.0, HomophilyLaw())
    with pytest.raises(ValueError):
        TheoremSetting.from_dict({**canonical_setting().to_dict(), "extra": 1})


# -- Bernstein -----------------------------------------------------------------

def test_bernstein_reference_value():
    assert bernstein_bound(-1, 1, 1 / 3, 100, 0.2) == pytest.approx(0.9420, abs=5e-5)
    emp, bound = bernstein_probe(-1, 1, 100, 0.2, trials=10_000, seed=0)
    assert bound == pytest.approx(0.9420, abs=5e-5)
    assert emp <= bound and emp < 0.005


def test_bernstein_degenerate_cases():
    emp, _ = bernstein_probe(-1, 1, 50, 0.01, sampler="point")
    assert emp == 0.0
    emp, bound = bernstein_probe(0, 1, 10, 1.5)
    assert emp == 0.0 and emp <= bound
    with pytest.raises(ValueError):
        bernstein_probe(1, 0, 10, 0.1)
    with pytest.raises(ValueError):
        bernstein_probe(0, 1, 10, 0.0)

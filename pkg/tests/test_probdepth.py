import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pgdepth.errors import BadRange, DimensionMismatch, NonFiniteLogit
from pgdepth.probdepth import (
    DEFAULT_LAMBDA, DepthDistribution, build_quantizer, decode_expectation, depth_score, fuse_local,
)

METHODS = ("uniform", "sid", "lid", "uniform_log")


def brute_expectation(omega, logits):
    e = [math.exp(x - max(logits)) for x in logits]
    z = sum(e)
    return sum(w * v / z for w, v in zip(omega, e))


def test_uniform_split_points():
    q = build_quantizer(60, 10, "uniform")
    assert q.n_bins == 7
    assert list(q.omega) == [0, 10, 20, 30, 40, 50, 60]


def test_uniform_log_split_points():
    q = build_quantizer(60, 10, "uniform_log", d_lo=1)
    np.testing.assert_allclose(q.support, np.linspace(0, math.log(60), 7), atol=1e-12)
    assert q.omega[0] == pytest.approx(1.0)
    assert q.omega[-1] == pytest.approx(60.0)


def test_sid_lid_shapes():
    sid = build_quantizer(70, 10, "sid")
    lid = build_quantizer(70, 10, "lid")
    # sid: constant ratio between neighbours; lid: widths grow linearly
    ratios = sid.omega[1:] / sid.omega[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    np.testing.assert_allclose(np.diff(np.diff(lid.omega)), np.diff(lid.omega)[0], rtol=1e-9)
    assert np.all(np.diff(np.diff(lid.omega)) > 0)
    assert sid.omega[-1] == pytest.approx(70) and lid.omega[-1] == pytest.approx(70)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("d_max,unit", [(60, 10), (70, 10), (110, 5), (21, 10)])
def test_split_points_increasing(method, d_max, unit):
    q = build_quantizer(d_max, unit, method)
    assert q.n_bins == d_max // unit + 1
    assert np.all(np.diff(q.omega) > 0)
    assert q.omega[0] >= 0 and q.omega[-1] <= d_max + 1e-9


@pytest.mark.parametrize("d_max,unit", [(10, 10), (5, 10), (60, 0), (60, -1)])
def test_bad_range(d_max, unit):
    with pytest.raises(BadRange):
        build_quantizer(d_max, unit)


def test_decode_delta_and_flat():
    q = build_quantizer(60, 10)
    for k in range(7):
        logits = np.zeros(7)
        logits[k] = 1000
        assert decode_expectation(q, logits) == pytest.approx(q.omega[k], abs=1e-6)
    assert decode_expectation(q, np.zeros(7)) == pytest.approx(30.0, abs=1e-12)


def test_decode_three_bins_against_brute_force():
    q = build_quantizer(20, 10)
    want = brute_expectation([0, 10, 20], [1, 2, 3])
    assert want == pytest.approx(15.752103826, abs=1e-8)
    assert decode_expectation(q, [1.0, 2.0, 3.0]) == pytest.approx(want, abs=1e-12)


def test_decode_uniform_log_is_geometric_mean():
    q = build_quantizer(60, 10, "uniform_log")
    logits = np.array([0.3, -1.0, 2.0, 0.0, 0.5, 1.5, -0.2])
    p = np.exp(logits) / np.exp(logits).sum()
    assert decode_expectation(q, logits) == pytest.approx(float(np.prod(q.omega ** p)), rel=1e-12)


def test_decode_batch_matches_rows():
    q = build_quantizer(70, 10, "lid")
    rng = np.random.default_rng(1)
    L = rng.normal(size=(20, q.n_bins))
    batch = decode_expectation(q, L)
    np.testing.assert_allclose(batch, [decode_expectation(q, row) for row in L], atol=1e-12)


def test_decode_errors():
    q = build_quantizer(60, 10)
    with pytest.raises(DimensionMismatch):
        decode_expectation(q, np.zeros(6))
    with pytest.raises(NonFiniteLogit):
        decode_expectation(q, [0, 0, np.nan, 0, 0, 0, 0])
    with pytest.raises(NonFiniteLogit):
        decode_expectation(q, [0, 0, np.inf, 0, 0, 0, 0])


logit_vectors = arrays(np.float64, 8, elements=st.floats(-30, 30))


@pytest.mark.parametrize("method", METHODS)
@given(logits=logit_vectors, shift=st.floats(-50, 50))
def test_decode_bounded_and_shift_invariant(method, logits, shift):
    q = build_quantizer(70, 10, method)
    d = decode_expectation(q, logits)
    assert q.omega[0] <= d <= q.omega[-1]
    assert decode_expectation(q, logits + shift) == pytest.approx(d, abs=1e-9)


@given(logits=logit_vectors, i=st.integers(0, 6), frac=st.floats(0, 1))
def test_decode_monotone_in_mass_shift(logits, i, frac):
    q = build_quantizer(70, 10)
    p = DepthDistribution(logits).probs
    moved = p.copy()
    amount = frac * p[i]
    moved[i] -= amount
    moved[i + 1] += amount
    with np.errstate(divide="ignore"):
        before = decode_expectation(q, np.log(np.maximum(p, 1e-300)))
        after = decode_expectation(q, np.log(np.maximum(moved, 1e-300)))
    assert after >= before - 1e-9


def test_scores_on_delta():
    q = build_quantizer(60, 10)
    logits = np.array([1000.0, 0, 0, 0, 0, 0, 0])
    assert depth_score(logits, "top2") == pytest.approx(0.5)
    assert depth_score(logits, "entropy") == pytest.approx(1.0)
    assert depth_score(logits, "std", q) == pytest.approx(1.0)


def test_scores_on_flat_and_small_cases():
    assert depth_score(np.zeros(7), "entropy") == pytest.approx(0.0, abs=1e-12)
    assert depth_score(np.log([0.6, 0.3, 0.1]), "top2") == pytest.approx(0.45, abs=1e-12)
    # two endpoint masses of one half reach the maximal spread
    q = build_quantizer(60, 10)
    assert depth_score(np.log([0.5, 1e-300, 1e-300, 1e-300, 1e-300, 1e-300, 0.5]), "std", q) == pytest.approx(0, abs=1e-9)


def test_std_score_needs_quantizer():
    with pytest.raises(ValueError):
        depth_score(np.zeros(7), "std")


@pytest.mark.parametrize("variant", ["top2", "entropy", "std"])
@given(logits=logit_vectors, shift=st.floats(-50, 50))
def test_scores_in_unit_interval_and_shift_invariant(variant, logits, shift):
    q = build_quantizer(70, 10)
    s = depth_score(logits, variant, q)
    assert 0 <= s <= 1
    assert depth_score(logits + shift, variant, q) == pytest.approx(s, abs=1e-9)


def test_fuse_local():
    assert DEFAULT_LAMBDA == pytest.approx(math.log(0.256 / 0.744), abs=1e-15)
    assert fuse_local(10, 20) == pytest.approx(0.256 * 10 + 0.744 * 20, abs=1e-12)
    assert fuse_local(10, 20) == pytest.approx(17.44, abs=1e-12)
    assert fuse_local(10, 20, 0.0) == 15
    assert fuse_local(10, 20, 800) == pytest.approx(10)
    assert fuse_local(10, 20, -800) == pytest.approx(20)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(-20, 20))
def test_fuse_local_between_inputs(d_r, d_p, lam):
    d = fuse_local(d_r, d_p, lam)
    assert min(d_r, d_p) - 1e-9 <= d <= max(d_r, d_p) + 1e-9

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opad.core import (
    EmptySupportError,
    ExactTarget,
    NonFiniteScoreError,
    ParticleSet,
    SupportMismatchError,
    WeightedApprox,
    frequency_weights,
    jensen_gap,
    kl_divergence,
    kl_lower_bound,
    logsumexp,
    opad_weights,
)


def keys(n):
    return [bytes([i]) for i in range(n)]


def exact_from_probs(probs):
    return ExactTarget.from_scores({k: math.log(p) for k, p in zip(keys(len(probs)), probs)})


class FakeTrace:
    def __init__(self, accepted, scores):
        self.accepted = accepted
        self.proposals = ParticleSet(scores.items())


def test_logsumexp_handles_large_magnitudes():
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2))
    assert logsumexp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + math.log(2))
    assert logsumexp([]) == -math.inf


def test_particle_set_rejects_non_finite_and_keeps_order():
    ps = ParticleSet([(b"b", 1.0), (b"a", 2.0)])
    assert list(ps) == [b"b", b"a"]
    assert not ps.add(b"a", 5.0)
    assert ps[b"a"] == 2.0
    with pytest.raises(NonFiniteScoreError, match="63"):
        ps.add(b"c", -math.inf)


def test_opad_symmetric_pair():
    approx = opad_weights(ParticleSet(zip(keys(2), [0.0, 0.0])))
    np.testing.assert_allclose(approx.weights, [0.5, 0.5], atol=1e-15)


def test_opad_hand_normalized_triple():
    approx = opad_weights(ParticleSet(zip(keys(3), map(math.log, [1, 2, 5]))))
    np.testing.assert_allclose(approx.weights, [0.125, 0.25, 0.625], atol=1e-15)


def test_opad_single_particle_and_empty():
    assert opad_weights(ParticleSet([(b"x", -734.2)])).weights[0] == 1.0
    with pytest.raises(EmptySupportError):
        opad_weights(ParticleSet())


def test_weighted_approx_rejects_unnormalized():
    with pytest.raises(ValueError):
        WeightedApprox(ParticleSet(zip(keys(2), [0.0, 0.0])), np.log([0.5, 0.6]))


def test_frequency_weights_counts():
    a, b = b"a", b"b"
    approx = frequency_weights(FakeTrace([a, a, b, a], {a: 0.0, b: 1.0}))
    assert approx.as_dict() == pytest.approx({a: 0.75, b: 0.25})
    assert frequency_weights(FakeTrace([a], {a: 0.0})).as_dict() == {a: 1.0}
    assert frequency_weights(FakeTrace([a] * 37, {a: 0.0})).as_dict() == {a: 1.0}
    with pytest.raises(EmptySupportError):
        frequency_weights(FakeTrace([], {}))


def test_kl_zero_when_approx_is_target():
    exact = exact_from_probs([0.1, 0.2, 0.3, 0.4])
    approx = opad_weights(ParticleSet(exact.table.items()))
    assert abs(kl_divergence(approx, exact)) <= 1e-12


def test_kl_two_state_hand_value():
    exact = exact_from_probs([0.75, 0.25])
    approx = WeightedApprox(ParticleSet(zip(keys(2), [0.0, 0.0])), np.log([0.5, 0.5]))
    expected = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    assert kl_divergence(approx, exact) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.143841, abs=1e-6)


def test_kl_single_state_support():
    exact = exact_from_probs([0.75, 0.25])
    approx = opad_weights(ParticleSet([(keys(2)[1], 0.0)]))
    assert kl_divergence(approx, exact) == pytest.approx(-math.log(0.25), abs=1e-12)


def test_kl_support_mismatch():
    exact = exact_from_probs([0.5, 0.5])
    approx = opad_weights(ParticleSet([(b"zz", 0.0)]))
    with pytest.raises(SupportMismatchError):
        kl_divergence(approx, exact)
    with pytest.raises(SupportMismatchError):
        kl_lower_bound([b"zz"], exact)


@pytest.mark.parametrize("mass, expected", [(1.0, 0.0), (0.5, math.log(2)), (0.001, -math.log(0.001))])
def test_kl_lower_bound_direct_formula(mass, expected):
    exact = exact_from_probs([mass / 2, mass / 2, 1 - mass] if mass < 1 else [0.5, 0.5])
    ks = keys(2)
    assert kl_lower_bound(ks, exact) == pytest.approx(expected, abs=1e-12)


def test_exact_target_log_z_recomputes():
    exact = exact_from_probs([0.2, 0.3, 0.5])
    assert exact.log_z == pytest.approx(math.log(sum(math.exp(v) for v in exact.table.values())), abs=1e-15)


# -- Jensen variant --------------------------------------------------------

def test_jensen_constant_g_equality():
    lhs, rhs = jensen_gap([2.0, 2.0, 2.0], [0.2, 0.3, 0.5], lambda x: -math.log(x))
    assert lhs == pytest.approx(-math.log(2.0), abs=1e-15)
    assert rhs == pytest.approx(-math.log(2.0), abs=1e-15)


def test_jensen_square_hand_values():
    assert jensen_gap([1, 2], [0.5, 0.5], lambda x: x * x) == pytest.approx((2.5, 2.25))


def test_jensen_neglog_hand_values():
    lhs, rhs = jensen_gap([1, 4], [0.25, 0.75], lambda x: -math.log(x))
    assert lhs == pytest.approx(-0.75 * math.log(4), abs=1e-12)
    assert rhs == pytest.approx(-math.log(3.25), abs=1e-12)
    assert lhs == pytest.approx(-1.039721, abs=1e-6)
    assert rhs == pytest.approx(-1.178655, abs=1e-6)
    assert lhs > rhs


@pytest.mark.parametrize("g, p", [([1, 2], [1.0]), ([1, 2], [0.5, 0.6]), ([1, 2], [1.0, 0.0]), ([], [])])
def test_jensen_rejects_bad_inputs(g, p):
    with pytest.raises(ValueError):
        jensen_gap(g, p, abs)


# -- properties ------------------------------------------------------------

log_scores = st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=12)


@settings(max_examples=200, deadline=None)
@given(scores=log_scores, data=st.data())
def test_opad_identity_and_optimality(scores, data):
    exact = ExactTarget.from_scores(dict(zip(keys(len(scores)), scores)))
    size = data.draw(st.integers(1, len(scores)))
    chosen = data.draw(st.permutations(keys(len(scores)))).copy()[:size]
    ps = ParticleSet((k, exact.table[k]) for k in chosen)
    best = opad_weights(ps)
    kl_best = kl_divergence(best, exact)
    assert abs(kl_best - kl_lower_bound(ps, exact)) <= 1e-9
    assert abs(float(best.weights.sum()) - 1.0) <= 1e-12
    if size > 1:
        raw = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size)))
        w = raw / raw.sum()
        if np.max(np.abs(w - best.weights)) > 1e-6:
            other = WeightedApprox(ps, np.log(w) - logsumexp(np.log(w)))
            assert kl_divergence(other, exact) > kl_best


@settings(max_examples=100, deadline=None)
@given(scores=log_scores, data=st.data())
def test_adding_new_particle_strictly_lowers_kl(scores, data):
    ks = keys(len(scores))
    exact = ExactTarget.from_scores(dict(zip(ks, scores)))
    cut = data.draw(st.integers(1, len(ks) - 1))
    small, big = ks[:cut], ks
    extra_mass = logsumexp([exact.log_prob(k) for k in ks[cut:]])
    # only assert strictness when the added mass is resolvable in double precision
    if extra_mass - logsumexp([exact.log_prob(k) for k in small]) > -30:
        assert kl_lower_bound(small, exact) > kl_lower_bound(big, exact)
    assert kl_lower_bound(small, exact) >= kl_lower_bound(big, exact)

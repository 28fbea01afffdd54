import math

import numpy as np
import pytest

from opad.core import NonFiniteScoreError, ParticleSet, kl_divergence, kl_lower_bound
from opad.exact import enumerate_dags
from opad.samplers import (
    ChainTrace,
    FlipKernel,
    extract_approximations,
    gamma_flip_kernel,
    ising_flip_kernel,
    run_chain,
    structure_kernel,
)
from opad.states import decode_dag, pack_bits
from opad.targets import IsingModel, IsingParams

from conftest import TableTarget


def one_move_apart(a, b):
    """Independent neighbor test: single add, delete or reversal."""
    diff = np.argwhere(a != b)
    if len(diff) == 1:
        return True
    if len(diff) == 2:
        (i1, j1), (i2, j2) = diff
        return (i1, j1) == (j2, i2)
    return False


def brute_neighbors(n):
    dags = list(enumerate_dags(n))
    mats = {k: decode_dag(k, n) for k in dags}
    return {k: {o for o in dags if o != k and one_move_apart(mats[k], mats[o])} for k in dags}


def test_single_state_chain(two_state):
    init = pack_bits([0])
    trace = run_chain(two_state, FlipKernel(1), init, 1, seed=0)
    assert trace.accepted == [init]
    assert list(trace.proposals) == [init]
    assert trace.accept_count == 0
    mc, opad, plus = extract_approximations(trace)
    for approx in (mc, opad, plus):
        assert approx.as_dict() == {init: 1.0}


def test_uniform_target_accepts_everything():
    model = IsingModel(IsingParams(m=6, beta=0.0))
    trace = run_chain(model, ising_flip_kernel(6), model.encode([1] * 6), 2000, seed=3)
    assert trace.acceptance_rate() == 1.0


def test_two_state_stationary_frequencies(two_state):
    trace = run_chain(two_state, FlipKernel(1), pack_bits([1]), 100_000, seed=2024)
    freq = extract_approximations(trace)[0].as_dict()
    assert freq[pack_bits([0])] == pytest.approx(2 / 3, abs=0.01)
    assert freq[pack_bits([1])] == pytest.approx(1 / 3, abs=0.01)


def test_scores_memoized(two_state):
    run_chain(two_state, FlipKernel(1), pack_bits([0]), 500, seed=1)
    assert two_state.calls == 2


@pytest.mark.parametrize("factory", [ising_flip_kernel, gamma_flip_kernel])
def test_flip_kernel_contract(factory, rng):
    m = 7
    kernel = factory(m)
    start = pack_bits([1, 0, 1, 1, 0, 0, 1])
    counts = np.zeros(m)
    trials = 10_000
    for _ in range(trials):
        prop = kernel.propose(start, rng)
        diff = np.flatnonzero(np.unpackbits(np.frombuffer(prop.state, np.uint8), count=m)
                              != np.unpackbits(np.frombuffer(start, np.uint8), count=m))
        assert len(diff) == 1
        assert prop.log_q_forward == prop.log_q_backward == -math.log(m)
        assert kernel.log_q(start, prop.state) == prop.log_q_backward
        counts[diff[0]] += 1
    p = 1 / m
    sigma = math.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(counts - trials * p) <= 3 * sigma)


def test_flip_kernel_factories_reject_tiny():
    with pytest.raises(ValueError):
        ising_flip_kernel(1)
    with pytest.raises(ValueError):
        gamma_flip_kernel(1)


def test_structure_kernel_two_nodes():
    k = structure_kernel(2)
    empty = pack_bits([0, 0, 0, 0])
    edge = pack_bits([0, 1, 0, 0])
    rev = pack_bits([0, 0, 1, 0])
    assert set(k.neighborhood(empty)) == {edge, rev}
    assert set(k.neighborhood(edge)) == {empty, rev}


@pytest.mark.parametrize("n", [2, 3, 4])
def test_structure_neighborhoods_match_brute_force(n):
    k = structure_kernel(n)
    for key, nbrs in brute_neighbors(n).items():
        assert set(k.neighborhood(key)) == nbrs
        assert len(k.neighborhood(key)) == len(nbrs)


def test_structure_kernel_q_consistency(rng):
    n = 4
    k = structure_kernel(n)
    ref = brute_neighbors(n)
    for key in list(enumerate_dags(n))[::11]:
        for _ in range(5):
            prop = k.propose(key, rng)
            assert prop.state in ref[key]
            assert math.exp(prop.log_q_forward) * len(ref[key]) == pytest.approx(1.0)
            assert prop.log_q_backward == pytest.approx(-math.log(len(ref[prop.state])))
            assert k.log_q(key, prop.state) == prop.log_q_backward


def test_structure_chain_visits_only_dags(dag3):
    trace = run_chain(dag3, structure_kernel(3), dag3.random_state(np.random.default_rng(0)), 2000, seed=5)
    valid = set(enumerate_dags(3))
    assert set(trace.proposals) <= valid


def test_trace_invariants_and_determinism(ising4):
    init = ising4.encode([1, -1, 1, -1])
    a = run_chain(ising4, ising_flip_kernel(4), init, 400, seed=77)
    b = run_chain(ising4, ising_flip_kernel(4), init, 400, seed=77)
    assert a == b
    assert a.accepted[0] == init
    assert set(a.accepted) <= set(a.proposals)
    assert 0 <= a.accept_count <= a.n_iter - 1
    assert len(a.proposed) == a.n_iter - 1
    for key, score in a.proposals.items():
        assert ising4.log_score(key) == score


def test_equality_case_all_accepted_and_proportional():
    # a chain that accepted every proposal and visited in proportion to pi
    s0, s1 = pack_bits([0]), pack_bits([1])
    trace = ChainTrace(accepted=[s0, s1, s0], proposals=ParticleSet([(s0, math.log(2)), (s1, 0.0)]),
                       accept_count=2, proposed=[s1, s0])
    mc, opad, plus = extract_approximations(trace)
    np.testing.assert_allclose(mc.weights, opad.weights, atol=1e-15)
    np.testing.assert_allclose(opad.weights, plus.weights, atol=1e-15)


@pytest.mark.parametrize("seed", range(8))
def test_kl_ordering_on_small_ising(ising4, ising4_exact, seed):
    rng = np.random.default_rng(seed)
    init = ising4.random_state(rng)
    trace = run_chain(ising4, ising_flip_kernel(4), init, 30, seed=seed)
    mc, opad, plus = extract_approximations(trace)
    kmc, kop, kpl = (kl_divergence(x, ising4_exact) for x in (mc, opad, plus))
    assert kmc >= kop - 1e-9
    assert kop >= kpl - 1e-9
    assert abs(kop - kl_lower_bound(set(trace.accepted), ising4_exact)) <= 1e-9
    assert abs(kpl - kl_lower_bound(trace.proposals, ising4_exact)) <= 1e-9
    assert set(opad.particles) <= set(plus.particles)


@pytest.mark.parametrize("seed", range(4))
def test_kl_ordering_on_dag_target(dag3, dag3_exact, seed):
    trace = run_chain(dag3, structure_kernel(3), dag3.random_state(np.random.default_rng(seed)), 200, seed=seed)
    mc, opad, plus = extract_approximations(trace)
    kmc, kop, kpl = (kl_divergence(x, dag3_exact) for x in (mc, opad, plus))
    assert kmc >= kop - 1e-9 >= kpl - 2e-9


def test_non_finite_init_rejected():
    target = TableTarget([0.0, -math.inf])
    with pytest.raises(NonFiniteScoreError):
        run_chain(target, FlipKernel(1), pack_bits([1]), 5, seed=0)

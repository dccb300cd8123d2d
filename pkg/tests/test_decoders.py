import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbvb.decoders import (
    Algorithm,
    DecoderState,
    DoubleVerificationError,
    EqualityPolicy,
    empirical_alpha_trace,
    peel,
    pre_remove_zero_checks,
    run_decoder,
    values_equal,
    write_round_trace_csv,
)
from nbvb.graph import GraphSpec, build_random_regular, valid_n
from nbvb.signals import SignalInstance, SignalModel, encode, sample_signal

EXACT = EqualityPolicy()
ALGS = list(Algorithm)


def instance(n, dv, dc, alpha, seed, model="exact"):
    g = build_random_regular(GraphSpec(n, dv, dc, seed))
    s = sample_signal(n, SignalModel(alpha, model, seed=seed + 1))
    return g, s, encode(g, s)


def test_equality_policy_examples():
    assert values_equal(5, 5, EXACT)
    assert values_equal(1.0, 1.0 + 1e-15, EqualityPolicy("tolerant", abs_tol=1e-12))
    assert not values_equal(1.0, 1.1, EqualityPolicy.tolerant())
    with pytest.raises(ValueError):
        EqualityPolicy("fuzzy")


def test_independent_exact_draws_never_collide():
    s1 = sample_signal(10**6, SignalModel(1.0, seed=101)).values
    s2 = sample_signal(10**6, SignalModel(1.0, seed=202)).values
    assert not np.any(EXACT.eq(s1, s2))


def test_zero_signal_verifies_everything_up_front():
    g, s, c = instance(60, 5, 6, 0.0, 4)
    st_ = pre_remove_zero_checks(DecoderState.fresh(g, c), EXACT)
    assert st_.verified.all() and not st_.estimate.any()
    for alg in ALGS:
        r = run_decoder(alg, g, c, EXACT, s)
        assert r.success and r.iterations == 0
        assert empirical_alpha_trace(r).tolist() == [0.0]


def test_dense_continuous_signal_has_no_zero_checks():
    g, s, c = instance(120, 5, 6, 1.0, 4, "gaussian")
    st_ = pre_remove_zero_checks(DecoderState.fresh(g, c), EqualityPolicy.tolerant())
    assert not st_.verified.any()


def test_zero_check_removal_matches_ground_truth():
    g, s, c = instance(600, 5, 6, 0.2, 8)
    st_ = pre_remove_zero_checks(DecoderState.fresh(g, c), EXACT)
    supp = set(s.support.tolist())
    expect = {v for v in range(g.n)
              if any(not supp.intersection(g.check_adj[j].tolist()) for j in g.var_adj[v])}
    assert set(np.flatnonzero(st_.verified).tolist()) == expect


def test_peel_bookkeeping():
    g, s, c = instance(60, 5, 6, 0.3, 2)
    st_ = DecoderState.fresh(g, c)
    zero = int(np.flatnonzero(s.values == 0)[0])
    before = st_.residual.copy()
    peel(st_, zero, 0)
    assert np.array_equal(st_.residual, before)
    assert np.all(st_.degree[g.var_adj[zero]] == 5)
    with pytest.raises(DoubleVerificationError):
        peel(st_, zero, 0)
    st_.check_invariants(c)


def test_peeling_the_last_support_neighbour_zeroes_the_check():
    x = np.zeros(60, dtype=np.int64)
    x[9] = 12345
    g = build_random_regular(GraphSpec(60, 5, 6, seed=1))
    c = encode(g, SignalInstance.from_values(x))
    st_ = peel(DecoderState.fresh(g, c), 9, 12345)
    assert not st_.residual.any()


@pytest.mark.parametrize("alg", ALGS)
def test_single_nonzero_is_recovered(alg):
    x = np.zeros(300, dtype=np.int64)
    x[42] = -777
    g = build_random_regular(GraphSpec(300, 5, 6, seed=3))
    r = run_decoder(alg, g, encode(g, SignalInstance.from_values(x)), EXACT,
                    SignalInstance.from_values(x), audit=True)
    assert r.success and r.estimate[42] == -777


@pytest.mark.parametrize("alg", ALGS)
def test_trace_is_monotone_and_csv_schema(alg, tmp_path):
    g, s, c = instance(3000, 5, 6, 0.25, 5)
    r = run_decoder(alg, g, c, EXACT, s, audit=True)
    assert np.all(np.diff(r.trace[:, 1]) < 0)  # strict decrease each executed round
    assert np.all(np.diff(empirical_alpha_trace(r)) <= 0)
    write_round_trace_csv(r, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "round,unverified_total,unverified_support,verifications_this_round"
    assert len(lines) == len(r.trace) + 1


def test_stalled_instance_has_constant_positive_tail():
    g, s, c = instance(3000, 5, 6, 0.5, 6)
    r = run_decoder(Algorithm.SBB, g, c, EXACT, s)
    assert r.stall and not r.success
    assert empirical_alpha_trace(r)[-1] > 0


def test_max_rounds_exhaustion_is_a_stall():
    g, s, c = instance(3000, 5, 6, 0.25, 5)
    r = run_decoder(Algorithm.SBB, g, c, EXACT, s, max_rounds=1)
    assert r.stall and r.iterations == 1


def test_determinism():
    g, s, c = instance(2004, 5, 6, 0.3, 10)
    for alg in ALGS:
        a = run_decoder(alg, g, c, EXACT, s)
        b = run_decoder(alg, g, c, EXACT, s)
        assert np.array_equal(a.trace, b.trace) and np.array_equal(a.estimate, b.estimate)


@pytest.mark.parametrize("alg", [Algorithm.LM, Algorithm.SBB, Algorithm.XH])
def test_variable_relabelling_gives_the_same_verified_sets(alg):
    g, s, c = instance(1500, 5, 6, 0.28, 12)
    perm = np.random.default_rng(0).permutation(g.n)
    inv = np.argsort(perm)
    # relabel variables: new variable i is old variable perm[i]
    from nbvb.graph import BipartiteGraph, _check_adjacency

    var_adj = np.sort(g.var_adj[perm], axis=1)
    h = BipartiteGraph(g.spec, var_adj, _check_adjacency(var_adj, g.m, g.d_c))
    t = SignalInstance.from_values(s.values[perm])
    a = run_decoder(alg, g, c, EXACT, s)
    b = run_decoder(alg, h, encode(h, t), EXACT, t)
    assert np.array_equal(a.trace, b.trace)
    assert np.array_equal(a.estimate, b.estimate[inv])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), alpha=st.floats(0.05, 0.6),
       shape=st.sampled_from([(3, 4), (5, 6), (5, 8), (7, 8)]))
def test_soundness_and_genie_dominance(seed, alpha, shape):
    dv, dc = shape
    n = valid_n(400, dv, dc)
    g, s, c = instance(n, dv, dc, alpha, seed)
    res = {alg: run_decoder(alg, g, c, EXACT, s, audit=True) for alg in ALGS}
    for alg, r in res.items():
        if r.success:
            assert np.array_equal(r.estimate, s.values)
        wrong = np.any(r.estimate[r.estimate != 0] != s.values[r.estimate != 0])
        assert r.anomalies >= int(wrong)
        if alg is not Algorithm.XH:
            # degree-one and pair rules never verify a wrong value in exact mode
            assert r.anomalies == 0 and not wrong
    if any(res[a].success for a in (Algorithm.LM, Algorithm.SBB, Algorithm.XH)):
        assert res[Algorithm.GENIE].success


def test_xh_majority_can_be_fooled_when_dv_is_small():
    # With d_v = 3 two agreeing checks suffice; two support nodes sharing two
    # checks make both read x_v + x_w.  The result must be flagged, not claimed.
    g = build_random_regular(GraphSpec(valid_n(400, 3, 4), 3, 4, seed=3))
    s = sample_signal(g.n, SignalModel(0.125, seed=4))
    r = run_decoder(Algorithm.XH, g, encode(g, s), EXACT, s)
    assert not r.success and r.anomalies >= 1


def test_gaussian_mode_recovers_within_tolerance():
    g, s, c = instance(3000, 5, 6, 0.2, 21, "gaussian")
    r = run_decoder(Algorithm.SBB, g, c, EqualityPolicy.tolerant(), s)
    assert r.success and np.allclose(r.estimate, s.values, atol=1e-9)

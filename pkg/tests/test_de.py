import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbvb.de import (
    DeParams,
    DeState,
    StopRule,
    Verdict,
    binomial_pmf,
    de_init,
    de_step,
    de_trace,
    lm_prephase,
    lm_prephase_details,
    write_de_trace_csv,
)
from nbvb.decoders import Algorithm

CELLS = [(3, 4), (5, 6), (5, 7), (5, 8), (7, 8)]
ALGS = list(Algorithm)


def check_state(s: DeState, d_c: int, tol=1e-9):
    assert abs(s.pN.sum() - 1) <= tol and abs(s.pX.sum() - 1) <= tol
    assert np.all((s.pN >= 0) & (s.pN <= 1)) and np.all((s.pX >= 0) & (s.pX <= 1))
    assert abs(s.edge_mass() - s.alpha * d_c) <= tol


def test_beta_values():
    assert DeParams(5, 6, "genie").beta == 1
    assert DeParams(5, 6, "lm").beta == 1
    assert DeParams(5, 6, "sbb").beta == 2
    assert DeParams(5, 6, "xh").beta == 3
    assert DeParams(7, 8, "xh").beta == 4


def test_init_zero_is_absorbing():
    s = de_init(0.0, DeParams(5, 6, "sbb"))
    assert s.pN.tolist() == [1, 0, 0, 0, 0, 0, 0] and s.pX.tolist() == [1, 0, 0, 0, 0, 0]
    nxt, bd = de_step(s, DeParams(5, 6, "sbb"))
    assert nxt.alpha == 0 and bd.p_r == 0
    assert np.array_equal(nxt.pN, s.pN) and np.array_equal(nxt.pX, s.pX)


def test_init_sbb_020():
    p = DeParams(5, 6, "sbb")
    s = de_init(0.2, p)
    want = [0.262144, 0.393216, 0.245760, 0.081920, 0.015360, 0.001536, 0.000064]
    assert np.allclose(s.pN, want, atol=1e-15)
    p0 = 0.393216 / 1.2
    assert p0 == pytest.approx(0.32768, abs=1e-15)
    assert np.allclose(s.pX, [math.comb(5, i) * p0**i * (1 - p0) ** (5 - i) for i in range(6)])


def test_first_step_sbb_020():
    p = DeParams(5, 6, "sbb")
    s0 = de_init(0.2, p)
    s1, bd = de_step(s0, p)
    assert s1.alpha == pytest.approx(0.2 * (1 - s0.pX[2:].sum()), rel=1e-14)
    assert abs(s1.edge_mass() - 6 * s1.alpha) <= 1e-12
    assert bd.p_r == pytest.approx(s0.pX[2:].sum(), rel=1e-14)


def test_lm_prephase_substitution():
    d = lm_prephase_details(0.5, DeParams(3, 4, "lm"))
    assert d.p_delta == pytest.approx(0.875, abs=1e-15)
    assert d.p_k_delta == pytest.approx(0.669921875, abs=1e-15)
    assert d.p_prime == pytest.approx(0.765625, abs=1e-15)


def test_lm_prephase_zero():
    d = lm_prephase_details(0.0, DeParams(3, 4, "lm"))
    assert d.p_delta == 0 and d.p_k_delta == 0
    assert d.pN_prime0.tolist() == [1, 0, 0, 0, 0]
    assert d.state.alpha == 0 and d.state.pN[0] == 1


def _reference_lm_prephase(a, d_v, d_c):
    """Scalar transcription of the pre-phase formulas, kept free of the package's helpers."""
    C = math.comb
    pN = [C(d_c, i) * a**i * (1 - a) ** (d_c - i) for i in range(d_c + 1)]
    p_delta = 1 - (1 - a) ** (d_c - 1)
    p_kd = p_delta**d_v
    pp = p_delta ** (d_v - 1)

    def T(i, j):
        return C(d_c - i, j - i) * pp ** (j - i) * (1 - pp) ** (d_c - j)

    pNp = [pN[0]] + [sum(pN[i] * T(i, j) for i in range(1, j + 1)) for j in range(1, d_c + 1)]
    p0 = pNp[1] / (a * d_c)
    pXK = [C(d_v, i) * p0**i * (1 - p0) ** (d_v - i) for i in range(d_v + 1)]
    p_r = sum(pXK[1:])
    p_f = (p_r - p0) / (1 - p0)
    q = [0.0] * (d_c + 1)
    for qq in range(1, d_c + 1):
        for j in range(max(2, qq), d_c + 1):
            for i in range(max(1, j - qq), j + 1):
                q[qq] += pN[i] * T(i, j) * C(i, j - qq) * p_f ** (j - qq) * (1 - p_f) ** (i - j + qq)
    q[0] = pN[0] + pN[1] * T(1, 1) + sum(pN[i] * T(i, i) * p_f**i for i in range(2, d_c + 1))
    alpha1 = a * (1 - p_r) + (1 - a) * p_kd
    B = q[1] / sum(i * q[i] for i in range(1, d_c + 1))
    pX = [C(d_v, i) * B**i * (1 - B) ** (d_v - i) for i in range(d_v + 1)]
    return dict(p_delta=p_delta, p_kd=p_kd, pNp=pNp, p0=p0, p_r=p_r, p_f=p_f,
                q=q, alpha1=alpha1, pX=pX)


@pytest.mark.parametrize("alpha0,cell", [(0.25, (3, 4)), (0.2, (5, 6)), (0.15, (7, 8))])
def test_lm_prephase_matches_scalar_transcription(alpha0, cell):
    d_v, d_c = cell
    ref = _reference_lm_prephase(alpha0, d_v, d_c)
    d = lm_prephase_details(alpha0, DeParams(d_v, d_c, "lm"))
    assert d.p_delta == pytest.approx(ref["p_delta"], abs=1e-14)
    assert d.p_k_delta == pytest.approx(ref["p_kd"], abs=1e-14)
    assert np.allclose(d.pN_prime0, ref["pNp"], atol=1e-14)
    assert d.p0 == pytest.approx(ref["p0"], abs=1e-14)
    assert d.p_r == pytest.approx(ref["p_r"], abs=1e-14)
    assert d.p_f == pytest.approx(ref["p_f"], abs=1e-14)
    assert np.allclose(d.state.pN, ref["q"], atol=1e-12)
    assert d.state.alpha == pytest.approx(ref["alpha1"], abs=1e-14)
    assert np.allclose(d.state.pX, ref["pX"], atol=1e-12)
    assert sum(ref["q"]) == pytest.approx(1.0, abs=1e-12)
    check_state(lm_prephase(alpha0, DeParams(d_v, d_c, "lm")), d_c)


def test_trace_zero_is_immediate_success():
    for alg in ALGS:
        tr = de_trace(0.0, DeParams(5, 6, alg))
        assert tr.verdict is Verdict.SUCCESS and tr.iterations == 0


@pytest.mark.parametrize("cell,alg,ok,bad", [
    ((5, 6), "sbb", 0.30, 0.35),
    ((3, 4), "genie", 0.64, 0.66),
])
def test_trace_brackets(cell, alg, ok, bad):
    p = DeParams(*cell, alg)
    assert de_trace(ok, p).verdict is Verdict.SUCCESS
    assert de_trace(bad, p).verdict is Verdict.STALL


def test_max_iter_is_inconclusive_not_stall():
    tr = de_trace(0.32, DeParams(5, 6, "sbb"), StopRule(max_iter=3))
    assert tr.verdict is Verdict.INCONCLUSIVE and tr.iterations == 3


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule(success_eps=0)


@settings(max_examples=200, deadline=None)
@given(alpha0=st.floats(0.0, 1.0), cell=st.sampled_from(CELLS), alg=st.sampled_from(ALGS),
       steps=st.integers(1, 30))
def test_step_invariants(alpha0, cell, alg, steps):
    p = DeParams(*cell, alg)
    s = de_init(alpha0, p)
    check_state(s, p.d_c)
    for _ in range(steps):
        nxt, bd = de_step(s, p)
        check_state(nxt, p.d_c)
        assert nxt.alpha <= s.alpha
        if s.alpha >= StopRule().success_eps:
            # far below the success cutoff, where no trace ever steps, the raw
            # ratios are quotients of near-underflow masses and may drift
            for x in (bd.p_r, bd.A, bd.B, bd.p_N10):
                assert -1e-12 <= x <= 1 + 1e-12
        s = nxt


@settings(max_examples=60, deadline=None)
@given(alpha0=st.floats(0.0, 1.0), cell=st.sampled_from(CELLS))
def test_beta_ordering_of_verdicts(alpha0, cell):
    v = {a: de_trace(alpha0, DeParams(*cell, a), keep_states=False).verdict for a in ALGS}
    if v[Algorithm.XH] is Verdict.SUCCESS:
        assert v[Algorithm.SBB] is Verdict.SUCCESS
    if v[Algorithm.SBB] is Verdict.SUCCESS:
        assert v[Algorithm.GENIE] is Verdict.SUCCESS


def test_binomial_pmf_sums_to_one():
    for d in range(1, 10):
        for p in (0.0, 0.3, 1.0):
            assert binomial_pmf(d, p).sum() == pytest.approx(1.0)


def test_trace_csv(tmp_path):
    tr = de_trace(0.25, DeParams(3, 4, "lm"))
    write_de_trace_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("ell,alpha,p_r,A,B,pN_0")
    assert len(lines) == len(tr.states) + 1
    assert lines[1].startswith("0,0.25,")

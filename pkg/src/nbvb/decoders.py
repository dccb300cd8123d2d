"""Node-based verification decoders: Genie, LM, SBB and (parallel) XH.

All four run round-synchronously: every decision in a round is computed
from the state at the start of that round and the resulting verifications
are applied together at the end.  A round that verifies nothing is a stall.

The decoders see only the graph and the measurements.  The ground truth is
used for Genie's support-induced subgraph, for the success check, and for
the support trace; never inside the LM/SBB/XH decision rules.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .graph import BipartiteGraph
from .signals import SignalInstance

__all__ = [
    "Algorithm",
    "EqualityPolicy",
    "DecoderState",
    "DecodeResult",
    "DoubleVerificationError",
    "values_equal",
    "pre_remove_zero_checks",
    "peel",
    "run_decoder",
    "empirical_alpha_trace",
    "default_max_rounds",
    "write_round_trace_csv",
]


class Algorithm(str, enum.Enum):
    GENIE = "genie"
    LM = "lm"
    SBB = "sbb"
    XH = "xh"

    def beta(self, d_v: int) -> int:
        """Minimum number of degree-one checks that gets a support node verified."""
        if self is Algorithm.SBB:
            return 2
        if self is Algorithm.XH:
            return math.ceil(d_v / 2)
        return 1


@dataclass(frozen=True)
class EqualityPolicy:
    mode: str = "exact"
    abs_tol: float = 0.0
    rel_tol: float = 0.0

    def __post_init__(self):
        if self.mode not in ("exact", "tolerant"):
            raise ValueError(f"unknown equality mode {self.mode!r}")
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be non-negative")

    @classmethod
    def tolerant(cls, sigma: float = 1.0) -> "EqualityPolicy":
        return cls("tolerant", abs_tol=1e-9 * sigma, rel_tol=1e-9)

    def eq(self, a, b):
        """Elementwise equality under this policy (arrays or scalars)."""
        if self.mode == "exact":
            return a == b
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        scale = np.maximum(np.abs(a), np.abs(b))
        return np.abs(a - b) <= np.maximum(self.abs_tol, self.rel_tol * scale)

    def is_zero(self, a):
        if self.mode == "exact":
            return a == 0
        return np.abs(a) <= self.abs_tol


def values_equal(a, b, p: EqualityPolicy) -> bool:
    return bool(p.eq(a, b))


class DoubleVerificationError(RuntimeError):
    """A decoder tried to verify a node that is already verified."""


@dataclass(eq=False)
class DecoderState:
    """Residual graph: unverified nodes, residual check values and degrees.

    Mutable and single-owner; ``peel`` updates it in place.
    """

    graph: BipartiteGraph
    residual: np.ndarray
    degree: np.ndarray
    verified: np.ndarray
    estimate: np.ndarray
    round: int = 0

    @classmethod
    def fresh(cls, g: BipartiteGraph, c: np.ndarray) -> "DecoderState":
        c = np.asarray(c)
        if c.shape != (g.m,):
            raise ValueError(f"measurement vector has shape {c.shape}, expected ({g.m},)")
        return cls(
            graph=g,
            residual=c.copy(),
            degree=np.full(g.m, g.d_c, dtype=np.int64),
            verified=np.zeros(g.n, dtype=bool),
            estimate=np.zeros(g.n, dtype=c.dtype),
        )

    @property
    def unverified_count(self) -> int:
        return int(self.graph.n - np.count_nonzero(self.verified))

    def peel_many(self, nodes: np.ndarray, values: np.ndarray) -> None:
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return
        if np.any(self.verified[nodes]) or np.unique(nodes).size != nodes.size:
            raise DoubleVerificationError("attempt to verify an already verified node")
        values = np.asarray(values, dtype=self.estimate.dtype)
        g = self.graph
        self.verified[nodes] = True
        self.estimate[nodes] = values
        checks = g.var_adj[nodes].ravel()
        with np.errstate(over="ignore"):
            np.subtract.at(self.residual, checks, np.repeat(values, g.d_v))
        self.degree -= np.bincount(checks, minlength=g.m)

    def check_invariants(self, c: np.ndarray) -> None:
        """Recompute residual degrees and values from scratch and compare."""
        g = self.graph
        unv = ~self.verified[g.check_adj]
        if not np.array_equal(unv.sum(axis=1), self.degree):
            raise AssertionError("residual degrees out of sync")
        contrib = np.where(self.verified, self.estimate, 0).astype(self.estimate.dtype)
        with np.errstate(over="ignore"):
            expect = c - contrib[g.check_adj].sum(axis=1, dtype=c.dtype)
        if c.dtype.kind == "i":
            ok = np.array_equal(expect, self.residual)
        else:
            ok = np.allclose(expect, self.residual, rtol=1e-9, atol=1e-9)
        if not ok:
            raise AssertionError("residual check values out of sync")


def peel(st: DecoderState, v: int, value) -> DecoderState:
    """Verify ``v`` to ``value`` and remove it from the residual graph."""
    st.peel_many(np.array([v]), np.array([value]))
    return st


def _zero_check_nodes(st: DecoderState, p: EqualityPolicy) -> np.ndarray:
    z = np.flatnonzero(p.is_zero(st.residual) & (st.degree > 0))
    if z.size == 0:
        return z
    nb = np.unique(st.graph.check_adj[z].ravel())
    return nb[~st.verified[nb]]


def pre_remove_zero_checks(st: DecoderState, p: EqualityPolicy) -> DecoderState:
    """Verify to zero every variable adjacent to a zero-valued check."""
    nodes = _zero_check_nodes(st, p)
    st.peel_many(nodes, np.zeros(nodes.size, dtype=st.estimate.dtype))
    return st


@dataclass
class _Schedule:
    nodes: np.ndarray
    values: np.ndarray
    anomalies: int = 0


def _resolve(nodes: np.ndarray, values: np.ndarray, p: EqualityPolicy) -> _Schedule:
    """Merge proposed (node, value) pairs; nodes with disagreeing proposals are dropped."""
    if nodes.size == 0:
        return _Schedule(nodes, values)
    order = np.argsort(nodes, kind="stable")
    nodes, values = nodes[order], values[order]
    uniq, start = np.unique(nodes, return_index=True)
    first = np.repeat(values[start], np.diff(np.append(start, nodes.size)))
    agree = p.eq(values, first)
    bad = np.zeros(uniq.size, dtype=bool)
    grp = np.repeat(np.arange(uniq.size), np.diff(np.append(start, nodes.size)))
    np.logical_or.at(bad, grp, ~agree)
    return _Schedule(uniq[~bad], values[start][~bad], int(bad.sum()))


def _degree_one_round(st: DecoderState, p: EqualityPolicy) -> _Schedule:
    d1 = np.flatnonzero(st.degree == 1)
    if d1.size == 0:
        return _Schedule(d1, st.residual[:0])
    nb = st.graph.check_adj[d1]
    pos = np.argmax(~st.verified[nb], axis=1)
    nodes = nb[np.arange(d1.size), pos]
    return _resolve(nodes, st.residual[d1], p)


def _sbb_round(st: DecoderState, p: EqualityPolicy) -> _Schedule:
    g = st.graph
    unv = np.flatnonzero(~st.verified)
    nbr = g.var_adj[unv]
    val = st.residual[nbr]
    ii, jj = (np.array(x) for x in zip(*combinations(range(g.d_v), 2)))
    hit = p.eq(val[:, ii], val[:, jj])
    rows, cols = np.nonzero(hit)
    empty = _Schedule(np.zeros(0, np.int64), st.residual[:0])
    if rows.size == 0:
        return empty
    ca = nbr[rows, ii[cols]]
    cb = nbr[rows, jj[cols]]
    lo, hi = np.minimum(ca, cb), np.maximum(ca, cb)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    ca, cb = pairs[:, 0], pairs[:, 1]
    gval = st.residual[ca]

    A, B = g.check_adj[ca], g.check_adj[cb]
    ua, ub = ~st.verified[A], ~st.verified[B]
    same = (A[:, :, None] == B[:, None, :]) & ua[:, :, None] & ub[:, None, :]
    common_a = same.any(axis=2)
    common_b = same.any(axis=1)
    zero_nodes = np.concatenate([A[ua & ~common_a], B[ub & ~common_b]])

    single = common_a.sum(axis=1) == 1
    val_nodes = A[single, np.argmax(common_a[single], axis=1)]
    val_vals = gval[single]

    zeros = np.zeros(zero_nodes.size, dtype=st.residual.dtype)
    return _resolve(np.concatenate([zero_nodes, val_nodes]), np.concatenate([zeros, val_vals]), p)


def _xh_round(st: DecoderState, p: EqualityPolicy) -> _Schedule:
    g = st.graph
    need = math.ceil(g.d_v / 2)
    unv = np.flatnonzero(~st.verified)
    val = np.sort(st.residual[g.var_adj[unv]], axis=1)
    eq = p.eq(val[:, 1:], val[:, :-1])
    run = np.ones(val.shape, dtype=np.int64)
    for k in range(1, g.d_v):
        run[:, k] = np.where(eq[:, k - 1], run[:, k - 1] + 1, 1)
    reached = run == need
    nq = reached.sum(axis=1)
    ok = nq == 1
    pos = np.argmax(reached[ok], axis=1)
    return _Schedule(unv[ok], val[ok][np.arange(pos.size), pos], int(np.count_nonzero(nq > 1)))


_ROUND_RULES = {
    Algorithm.GENIE: _degree_one_round,
    Algorithm.LM: _degree_one_round,
    Algorithm.SBB: _sbb_round,
    Algorithm.XH: _xh_round,
}


@dataclass
class DecodeResult:
    algorithm: Algorithm
    success: bool
    iterations: int
    stall: bool
    anomalies: int
    per_round_unverified_support_fraction: np.ndarray
    # rows of (round, unverified_total, unverified_support, verifications_this_round)
    trace: np.ndarray = field(repr=False)
    estimate: np.ndarray = field(repr=False)

    @property
    def anomalous(self) -> bool:
        return self.anomalies > 0

    @property
    def unverified_total_fraction(self) -> np.ndarray:
        return self.trace[:, 1] / len(self.estimate)


def default_max_rounds(n: int) -> int:
    return 10 * math.ceil(math.log2(max(n, 2))) + 200


def run_decoder(
    algorithm: Algorithm | str,
    g: BipartiteGraph,
    c: np.ndarray,
    policy: EqualityPolicy,
    ground_truth: SignalInstance,
    max_rounds: int | None = None,
    audit: bool = False,
) -> DecodeResult:
    """Decode ``c`` with one of the four algorithms.

    ``audit=True`` recomputes the residual state from scratch after every
    round; slow, meant for tests.
    """
    alg = Algorithm(algorithm)
    if ground_truth.n != g.n:
        raise ValueError("ground truth length does not match the graph")
    if max_rounds is None:
        max_rounds = default_max_rounds(g.n)
    st = DecoderState.fresh(g, c)
    in_support = np.zeros(g.n, dtype=bool)
    in_support[ground_truth.support] = True

    if alg is Algorithm.GENIE:
        off = np.flatnonzero(~in_support)
        st.peel_many(off, np.zeros(off.size, dtype=st.estimate.dtype))
    else:
        pre_remove_zero_checks(st, policy)

    rows = [(0, st.unverified_count, int(np.count_nonzero(in_support & ~st.verified)),
             g.n - st.unverified_count)]
    rule = _ROUND_RULES[alg]
    anomalies = 0
    iterations = 0
    while st.unverified_count and st.round < max_rounds:
        sched = rule(st, policy)
        anomalies += sched.anomalies
        st.round += 1
        if sched.nodes.size == 0:
            break
        st.peel_many(sched.nodes, sched.values)
        if audit:
            st.check_invariants(c)
        iterations += 1
        rows.append((st.round, st.unverified_count,
                     int(np.count_nonzero(in_support & ~st.verified)), sched.nodes.size))

    done = st.unverified_count == 0
    # a verified value that disagrees with the truth marks the instance anomalous,
    # whether or not decoding finished
    v = st.verified
    if ground_truth.exact:
        wrong = bool(np.any(st.estimate[v] != ground_truth.values[v]))
    else:
        wrong = not bool(np.all(policy.eq(st.estimate[v], ground_truth.values[v])))
    trace = np.array(rows, dtype=np.int64)
    return DecodeResult(
        algorithm=alg,
        success=bool(done and not wrong),
        iterations=iterations,
        stall=not done,
        anomalies=anomalies + int(wrong),
        per_round_unverified_support_fraction=trace[:, 2] / g.n,
        trace=trace,
        estimate=st.estimate,
    )


def empirical_alpha_trace(result: DecodeResult) -> np.ndarray:
    """Fraction of all variables that are unverified support nodes, per round."""
    return result.per_round_unverified_support_fraction


def write_round_trace_csv(result: DecodeResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("round,unverified_total,unverified_support,verifications_this_round\n")
        for r in result.trace.tolist():
            fh.write(",".join(map(str, r)) + "\n")

"""Density evolution for node-based verification decoding on (d_v, d_c) graphs.

The state at iteration ``ell`` is the fraction ``alpha`` of variables that
are still unverified members of the tracked set, the check-degree law
``pN`` (probability that a check has ``i`` edges into that set, ``i =
0..d_c``) and the law ``pX`` of a tracked variable's number of degree-one
check neighbours (``i = 0..d_v``).

For Genie, SBB and XH the tracked set is the support.  For LM it is the
potential support: the support plus the zero-valued variables whose every
check is nonzero, since those survive LM's zero-check removal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .decoders import Algorithm

__all__ = [
    "ConsistencyError",
    "DeParams",
    "DeState",
    "DeStepBreakdown",
    "LmPrephase",
    "StopRule",
    "Verdict",
    "DeTrace",
    "binomial_pmf",
    "de_init",
    "de_step",
    "lm_prephase",
    "lm_prephase_details",
    "de_trace",
    "write_de_trace_csv",
]

NORM_TOL = 1e-9
# masses below the smallest normal double are treated as empty events;
# ratios of subnormals are too coarse to be probabilities
_TINY = np.finfo(np.float64).tiny


class ConsistencyError(ArithmeticError):
    """A DE probability vector drifted further from normalisation than rounding allows."""


@dataclass(frozen=True)
class DeParams:
    d_v: int
    d_c: int
    algorithm: Algorithm

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.d_v < 1 or self.d_c < 1:
            raise ValueError("degrees must be >= 1")

    @property
    def beta(self) -> int:
        return self.algorithm.beta(self.d_v)


@dataclass(frozen=True)
class DeState:
    ell: int
    alpha: float
    pN: np.ndarray
    pX: np.ndarray

    def edge_mass(self) -> float:
        """Expected edges per check into the tracked set; equals ``alpha * d_c``."""
        return float(np.arange(self.pN.size) @ self.pN)


@dataclass(frozen=True)
class DeStepBreakdown:
    p_r: float
    A: float
    B: float
    p_N10: float
    pN1_plus: float


@dataclass(frozen=True)
class LmPrephase:
    """Intermediate quantities of LM's zero-check removal and first iteration."""

    p_delta: float
    p_k_delta: float
    p_prime: float
    pN0: np.ndarray
    pN_prime0: np.ndarray
    p0: float
    pX_support: np.ndarray
    p_r: float
    p_f: float
    B: float
    alpha_support: float
    state: DeState


@lru_cache(maxsize=None)
def _comb_table(d: int) -> np.ndarray:
    t = np.zeros((d + 1, d + 1))
    for i in range(d + 1):
        for j in range(i + 1):
            t[i, j] = math.comb(i, j)
    t.flags.writeable = False
    return t


def binomial_pmf(d: int, p: float, q: float | None = None) -> np.ndarray:
    """Binom(d, p) masses; pass ``q = 1 - p`` when it is known more accurately."""
    k = np.arange(d + 1)
    if q is None:
        q = 1.0 - p
    return _comb_table(d)[d] * p**k * q ** (d - k)


def _clamp(v: np.ndarray, what: str) -> np.ndarray:
    v = np.clip(v, 0.0, 1.0)
    s = v.sum()
    if abs(s - 1.0) >= NORM_TOL:
        raise ConsistencyError(f"{what} sums to {s!r}")
    return v / s


def _absorbing(ell: int, params: DeParams) -> DeState:
    pN = np.zeros(params.d_c + 1)
    pX = np.zeros(params.d_v + 1)
    pN[0] = pX[0] = 1.0
    return DeState(ell, 0.0, pN, pX)


def de_init(alpha0: float, params: DeParams) -> DeState:
    """Initial DE state; for LM this is the state after the pre-phase (``ell = 1``)."""
    if not 0.0 <= alpha0 <= 1.0:
        raise ValueError(f"alpha0 must lie in [0, 1], got {alpha0}")
    if params.algorithm is Algorithm.LM:
        return lm_prephase(alpha0, params)
    if alpha0 == 0.0:
        return _absorbing(0, params)
    pN = binomial_pmf(params.d_c, alpha0)
    # p0 = pN[1] / (alpha0 d_c) = (1 - alpha0)^(d_c - 1), with its complement
    # taken through expm1 so that it stays exact relative to itself at small alpha0
    log_p0 = (params.d_c - 1) * math.log1p(-alpha0) if alpha0 < 1.0 else -math.inf
    p0, q0 = math.exp(log_p0), -math.expm1(log_p0)
    return DeState(0, alpha0, pN, binomial_pmf(params.d_v, p0, q0))


def de_step(state: DeState, params: DeParams) -> tuple[DeState, DeStepBreakdown]:
    d_v, d_c, beta = params.d_v, params.d_c, params.beta
    alpha, pN, pX = state.alpha, state.pN, state.pX

    tail = pX[beta:]
    # survivor mass summed directly: 1 - p_r cancels badly once p_r is near one
    stay = min(float(pX[:beta].sum()), 1.0)
    p_r = 1.0 - stay
    kx = np.arange(beta, d_v + 1)
    edges_r = float(kx @ tail)
    if stay <= 0.0:
        return _absorbing(state.ell + 1, params), DeStepBreakdown(p_r, 0.0, 0.0, 1.0, 0.0)

    new_alpha = alpha * stay
    # Each probability and its complement is formed from its own sum.  The
    # two add to one only through edge conservation, but neither is ever a
    # difference of nearly equal numbers, which matters once A or B is near 1.
    head = pX[:beta]
    kh = np.arange(beta)
    scale = alpha * d_c / d_v
    if pN[1] > _TINY:
        p_N10 = scale * edges_r / pN[1]
        p_N11 = scale * float(kh @ head) / pN[1]
    else:
        p_N10, p_N11 = 0.0, 1.0
    free = float(np.arange(2, d_c + 1) @ pN[2:])
    if alpha > 0 and free > _TINY:
        A = scale * float((d_v - kx) @ tail) / free
        A_keep = scale * float((d_v - kh) @ head) / free
    else:
        A, A_keep = 0.0, 1.0

    def unit(x):
        return min(max(x, 0.0), 1.0)

    # check degree i -> j: degree one loses its edge w.p. p_N10, higher degrees thin by A
    k = np.arange(d_c + 1)
    C = _comb_table(d_c)
    drop = np.maximum(k[:, None] - k[None, :], 0)
    thin = np.tril(C * unit(A) ** drop * unit(A_keep) ** k[None, :])
    thin[0] = 0.0
    thin[0, 0] = 1.0
    thin[1] = 0.0
    thin[1, 0], thin[1, 1] = unit(p_N10), unit(p_N11)
    newN = pN @ thin
    pN1_plus = float(pN[2:] @ thin[2:, 1])

    higher = float(k[2:] @ newN[2:])
    den = pN1_plus + higher
    if den > _TINY:
        B, B_keep = pN1_plus / den, higher / den
    else:
        B, B_keep = 0.0, 1.0
    b_use, b_keep = unit(B), unit(B_keep)

    # surviving variables (fewer than beta degree-one checks) gain degree-one neighbours w.p. B
    kv = np.arange(d_v + 1)
    Cv = _comb_table(d_v)
    gain = np.zeros((beta, d_v + 1))
    for j in range(min(beta, d_v + 1)):
        i = kv[j:]
        gain[j, j:] = Cv[d_v - j, i - j] * b_use ** (i - j) * b_keep ** (d_v - i)
    newX = pX[:beta] @ gain / stay

    out = DeState(state.ell + 1, new_alpha, _clamp(newN, "pN"), _clamp(newX, "pX"))
    return out, DeStepBreakdown(p_r, A, B, p_N10, pN1_plus)


def lm_prephase_details(alpha0: float, params: DeParams) -> LmPrephase:
    if params.algorithm is not Algorithm.LM:
        raise ValueError("the pre-phase applies to LM only")
    if not 0.0 <= alpha0 <= 1.0:
        raise ValueError(f"alpha0 must lie in [0, 1], got {alpha0}")
    d_v, d_c = params.d_v, params.d_c
    a = alpha0

    pN0 = binomial_pmf(d_c, a)
    if a == 0.0:
        st = _absorbing(1, params)
        return LmPrephase(0.0, 0.0, 0.0, pN0, pN0.copy(), 0.0, st.pX.copy(),
                          0.0, 0.0, 0.0, 0.0, st)

    # Probabilities near one are carried through their logarithms so that the
    # complements used below keep full relative precision at small alpha0.
    log_1ma = math.log1p(-a) if a < 1.0 else -math.inf
    # edge from a zero-valued variable lands on a check with some support neighbour
    p_delta = -math.expm1((d_c - 1) * log_1ma)
    if p_delta == 0.0:
        log_pd = -math.inf
    elif p_delta < 0.5:
        log_pd = math.log(p_delta)
    else:
        log_pd = math.log1p(-math.exp((d_c - 1) * log_1ma)) if p_delta < 1.0 else 0.0
    p_k_delta = math.exp(d_v * log_pd)
    p_prime = math.exp((d_v - 1) * log_pd)
    q_prime = -math.expm1((d_v - 1) * log_pd)

    # N_i -> N'_j: j - i of the check's d_c - i zero-valued edges go to K_delta
    k = np.arange(d_c + 1)
    C = _comb_table(d_c)
    trans = np.zeros((d_c + 1, d_c + 1))
    trans[0, 0] = 1.0
    for i in range(1, d_c + 1):
        j = k[i:]
        trans[i, i:] = C[d_c - i, j - i] * p_prime ** (j - i) * q_prime ** (d_c - j)
    pN_prime0 = pN0 @ trans

    # a support edge sees a degree-one check in N': its other d_c - 1 edges all
    # avoid both the support and K_delta
    if q_prime > 0.0 and a < 1.0:
        log_p0 = (d_c - 1) * (log_1ma + math.log(q_prime))
    else:
        log_p0 = -math.inf
    p0 = math.exp(log_p0)
    q0 = -math.expm1(log_p0)
    pX_support = binomial_pmf(d_v, p0, q0)
    p_r = float(pX_support[1:].sum())
    # support nodes outside the degree-one check have d_v - 1 other chances
    q_f = q0 ** (d_v - 1)
    p_f = -math.expm1((d_v - 1) * math.log1p(-p0)) if p0 < 0.5 else 1.0 - q_f

    # first LM iteration: N_i -> N'_j (K_delta edges) -> N'_q (j - q support edges resolved)
    q1 = np.zeros(d_c + 1)
    q1[0] = pN0[0] + pN0[1] * trans[1, 1]
    for i in range(1, d_c + 1):
        r = np.arange(i + 1)
        drop = C[i, r] * p_f**r * q_f ** (i - r)
        for j in range(max(i, 2), d_c + 1):
            w = pN0[i] * trans[i, j]
            if w:
                np.add.at(q1, j - r, w * drop)

    alpha_support = a * q0**d_v
    alpha1 = alpha_support + (1.0 - a) * p_k_delta
    edges = float(k[1:] @ q1[1:])
    if edges > _TINY:
        B, B_keep = q1[1] / edges, float(k[2:] @ q1[2:]) / edges
    else:
        B, B_keep = 0.0, 1.0
    if alpha1 <= 0.0:
        st = _absorbing(1, params)
    else:
        st = DeState(1, alpha1, _clamp(q1, "pN'"), _clamp(binomial_pmf(d_v, B, B_keep), "pX'"))
    return LmPrephase(p_delta, p_k_delta, p_prime, pN0, pN_prime0, p0, pX_support,
                      p_r, p_f, B, alpha_support, st)


def lm_prephase(alpha0: float, params: DeParams) -> DeState:
    return lm_prephase_details(alpha0, params).state


class Verdict(str, enum.Enum):
    SUCCESS = "success"
    STALL = "stall"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class StopRule:
    success_eps: float = 1e-7
    progress_eps: float = 1e-10
    patience: int = 50
    max_iter: int = 10**6

    def __post_init__(self):
        if not (self.success_eps > 0 and self.progress_eps > 0
                and self.patience > 0 and self.max_iter > 0):
            raise ValueError("stop rule fields must all be positive")


@dataclass
class DeTrace:
    verdict: Verdict
    params: DeParams
    alpha0: float
    states: list[DeState] = field(repr=False)
    steps: list[DeStepBreakdown | None] = field(repr=False)

    @property
    def iterations(self) -> int:
        return self.states[-1].ell

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.states])

    def summaries(self) -> list[tuple[int, float, float]]:
        """``(ell, alpha, p_r)`` per recorded state; ``p_r`` is NaN past the last step."""
        return [(s.ell, s.alpha, b.p_r if b else math.nan)
                for s, b in zip(self.states, self.steps)]


def de_trace(alpha0: float, params: DeParams, stop: StopRule = StopRule(),
             keep_states: bool = True) -> DeTrace:
    """Iterate DE until alpha < success_eps, a stall, or max_iter.

    A stall is ``patience`` consecutive steps with relative decrease of
    alpha below ``progress_eps``.  With ``keep_states=False`` only the
    first and last states are kept (for threshold search).
    """
    state = de_init(alpha0, params)
    states: list[DeState] = []
    steps: list[DeStepBreakdown | None] = []
    if params.algorithm is Algorithm.LM and alpha0 < stop.success_eps:
        state = DeState(0, alpha0, binomial_pmf(params.d_c, alpha0), binomial_pmf(params.d_v, 0.0))
    elif params.algorithm is Algorithm.LM:
        pre = lm_prephase_details(alpha0, params)
        states.append(DeState(0, alpha0, pre.pN0, pre.pX_support))
        steps.append(DeStepBreakdown(pre.p_r, math.nan, pre.B, math.nan, math.nan))
    slow = 0
    while True:
        if state.alpha < stop.success_eps:
            verdict = Verdict.SUCCESS
            break
        if state.ell >= stop.max_iter:
            verdict = Verdict.INCONCLUSIVE
            break
        nxt, bd = de_step(state, params)
        if keep_states or not states:
            states.append(state)
            steps.append(bd)
        slow = slow + 1 if state.alpha - nxt.alpha < stop.progress_eps * state.alpha else 0
        state = nxt
        if slow >= stop.patience:
            verdict = Verdict.STALL
            break
    states.append(state)
    steps.append(None)
    return DeTrace(verdict, params, alpha0, states, steps)


def write_de_trace_csv(tr: DeTrace, path: str | Path) -> None:
    p = tr.params
    cols = ["ell", "alpha", "p_r", "A", "B"]
    cols += [f"pN_{i}" for i in range(p.d_c + 1)] + [f"pX_{i}" for i in range(p.d_v + 1)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for s, b in zip(tr.states, tr.steps):
            row = [str(s.ell), repr(s.alpha)]
            row += [repr(float(x)) for x in ((b.p_r, b.A, b.B) if b else (math.nan,) * 3)]
            row += [repr(float(x)) for x in s.pN] + [repr(float(x)) for x in s.pX]
            fh.write(",".join(row) + "\n")

"""Finite-length experiments: success-rate sweeps and DE/simulation trace comparisons.

Seeds.  Trial ``t`` of grid point ``i`` draws its signal from
``SeedSequence([master_seed, i, t])``; with ``graph_mode="fresh"`` the
graph seed is ``SeedSequence([master_seed, i, t, 1])``.  Both are reduced to
a 64-bit integer with ``generate_state(1, uint64)``.  Trials are therefore
independent of scheduling, and aggregation only sums per-trial results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .de import DeParams, StopRule, de_init, de_trace, lm_prephase_details
from .decoders import (
    Algorithm,
    DecoderState,
    EqualityPolicy,
    _degree_one_round,
    pre_remove_zero_checks,
    run_decoder,
)
from .graph import BipartiteGraph, GraphSpec, build_random_regular
from .signals import SignalModel, ValueModel, encode, sample_signal

__all__ = [
    "SweepConfig",
    "SweepPoint",
    "SuccessCurve",
    "TraceComparison",
    "LmPrephaseMeasurement",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "run_trace_comparison",
    "model_trace",
    "measure_lm_prephase",
    "transition_width",
    "write_sweep_csv",
    "write_gnuplot",
    "write_trace_csv",
]


def trial_seed(master_seed: int, point: int, trial: int, *extra: int) -> int:
    ss = np.random.SeedSequence([master_seed, point, trial, *extra])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepConfig:
    graph_spec: GraphSpec
    algorithm: Algorithm
    alpha_grid: tuple[float, ...]
    trials_per_point: int = 1000
    policy: EqualityPolicy = EqualityPolicy()
    master_seed: int = 0
    graph_mode: str = "fixed"
    value_model: ValueModel = ValueModel.EXACT
    max_rounds: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "value_model", ValueModel(self.value_model))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if list(self.alpha_grid) != sorted(self.alpha_grid):
            raise ValueError("alpha_grid must be sorted ascending")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid entries must lie in [0, 1]")
        if self.graph_mode not in ("fixed", "fresh"):
            raise ValueError(f"graph_mode must be 'fixed' or 'fresh', got {self.graph_mode!r}")
        if self.value_model is ValueModel.EXACT and self.policy.mode != "exact":
            raise ValueError("exact-integer signals need the exact equality policy")


@dataclass(frozen=True)
class SweepPoint:
    alpha0: float
    success_rate: float
    trials: int
    mean_iterations: float
    anomaly_count: int


@dataclass
class SuccessCurve:
    config: SweepConfig
    points: list[SweepPoint]
    # grid alphas where the rate rose by more than 3 sigma over the previous point
    monotonicity_flags: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class _TrialOutcome:
    success: bool
    iterations: int
    anomalies: int
    trace: np.ndarray


# graph shared by worker processes in fixed-graph sweeps
_WORKER_GRAPH: BipartiteGraph | None = None


def _init_worker(g):
    global _WORKER_GRAPH
    _WORKER_GRAPH = g


def _graph_for(cfg: SweepConfig, point: int, trial: int, shared: BipartiteGraph | None) -> BipartiteGraph:
    if cfg.graph_mode == "fixed":
        return shared if shared is not None else build_random_regular(cfg.graph_spec)
    spec = replace(cfg.graph_spec, seed=trial_seed(cfg.master_seed, point, trial, 1))
    return build_random_regular(spec)


def _comparison_trace(alg: Algorithm, res) -> np.ndarray:
    """Simulated alpha trace on the same footing as the DE state for ``alg``.

    LM's DE tracks the potential support after round 0, i.e. every unverified
    variable; the others track the unverified support.
    """
    tr = res.per_round_unverified_support_fraction
    if alg is Algorithm.LM:
        return np.concatenate([tr[:1], res.unverified_total_fraction[1:]])
    return tr


def run_trial(cfg: SweepConfig, point: int, trial: int, alpha0: float,
              graph: BipartiteGraph | None = None) -> _TrialOutcome:
    g = _graph_for(cfg, point, trial, graph if graph is not None else _WORKER_GRAPH)
    model = SignalModel(alpha0, cfg.value_model, trial_seed(cfg.master_seed, point, trial))
    s = sample_signal(g.n, model)
    res = run_decoder(cfg.algorithm, g, encode(g, s), cfg.policy, s, cfg.max_rounds)
    return _TrialOutcome(res.success, res.iterations, res.anomalies,
                         _comparison_trace(cfg.algorithm, res))


def _run_point(args) -> list[_TrialOutcome]:
    cfg, point, alpha0 = args
    return [run_trial(cfg, point, t, alpha0) for t in range(cfg.trials_per_point)]


def _map_points(cfg: SweepConfig, alphas, jobs: int, graph):
    tasks = [(cfg, i, a) for i, a in enumerate(alphas)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(graph,)) as ex:
            yield from ex.map(_run_point, tasks)
    else:
        _init_worker(graph)
        try:
            for t in tasks:
                yield _run_point(t)
        finally:
            _init_worker(None)


def _aggregate(alpha0: float, outs: list[_TrialOutcome]) -> SweepPoint:
    n = len(outs)
    return SweepPoint(
        alpha0=alpha0,
        success_rate=sum(o.success for o in outs) / n,
        trials=n,
        mean_iterations=sum(o.iterations for o in outs) / n,
        anomaly_count=sum(o.anomalies for o in outs),
    )


def _flags(points: list[SweepPoint]) -> list[float]:
    out = []
    for a, b in zip(points, points[1:]):
        p = (a.success_rate + b.success_rate) / 2
        sigma = math.sqrt(max(p * (1 - p), 1e-12) * (1 / a.trials + 1 / b.trials))
        if b.success_rate - a.success_rate > 3 * sigma:
            out.append(b.alpha0)
    return out


def run_sweep(cfg: SweepConfig, jobs: int = 1, on_point=None) -> SuccessCurve:
    """Success rate at every grid point; ``on_point(SweepPoint)`` fires as points finish."""
    graph = build_random_regular(cfg.graph_spec) if cfg.graph_mode == "fixed" else None
    points = []
    for alpha0, outs in zip(cfg.alpha_grid, _map_points(cfg, cfg.alpha_grid, jobs, graph)):
        pt = _aggregate(alpha0, outs)
        points.append(pt)
        if on_point is not None:
            on_point(pt)
    return SuccessCurve(cfg, points, _flags(points))


def transition_width(curve: SuccessCurve, upper: float = 0.9, lower: float = 0.1) -> float:
    """Grid distance from the last point with rate > upper to the first later point with rate < lower."""
    pts = curve.points
    hi_idx = [i for i, p in enumerate(pts) if p.success_rate > upper]
    if not hi_idx:
        raise ValueError("no grid point above the upper rate")
    i = hi_idx[-1]
    for p in pts[i + 1:]:
        if p.success_rate < lower:
            return p.alpha0 - pts[i].alpha0
    raise ValueError("no grid point below the lower rate after the waterfall")


def model_trace(alpha0: float, params: DeParams, stop: StopRule = StopRule()) -> np.ndarray:
    return de_trace(alpha0, params, stop).alphas


def _pad(seqs: list[np.ndarray], length: int) -> np.ndarray:
    return np.array([np.concatenate([s, np.full(length - len(s), s[-1])]) for s in seqs])


@dataclass
class TraceComparison:
    alpha0: float
    de_trace: np.ndarray
    sim_traces: list[np.ndarray] = field(repr=False)
    prefix: int = 5
    successes: int = 0
    anomalies: int = 0

    @property
    def length(self) -> int:
        return max(len(self.de_trace), max(len(t) for t in self.sim_traces))

    def table(self) -> np.ndarray:
        """Columns ``ell, alpha_de, mean, min, max`` padded with each trace's final value."""
        L = self.length
        de = _pad([self.de_trace], L)[0]
        sims = _pad(self.sim_traces, L)
        return np.column_stack([np.arange(L), de, sims.mean(0), sims.min(0), sims.max(0)])

    @property
    def mean_sim_trace(self) -> np.ndarray:
        return self.table()[:, 2]

    @property
    def max_abs_gap_over_prefix(self) -> float:
        t = self.table()[: self.prefix + 1]
        return float(np.max(np.abs(t[:, 1] - t[:, 2])))


def run_trace_comparison(cfg: SweepConfig, params: DeParams, stop: StopRule = StopRule(),
                         prefix: int = 5, jobs: int = 1) -> TraceComparison:
    if len(cfg.alpha_grid) != 1:
        raise ValueError("trace comparison takes exactly one alpha0")
    if params.algorithm is not cfg.algorithm:
        raise ValueError("DE and simulation algorithms differ")
    (alpha0,) = cfg.alpha_grid
    de = model_trace(alpha0, params, stop)
    graph = build_random_regular(cfg.graph_spec) if cfg.graph_mode == "fixed" else None
    (outs,) = list(_map_points(cfg, [alpha0], jobs, graph))
    return TraceComparison(alpha0, de, [o.trace for o in outs], prefix,
                           sum(o.success for o in outs), sum(o.anomalies for o in outs))


@dataclass(frozen=True)
class LmPrephaseMeasurement:
    """Empirical counterparts of the LM pre-phase quantities, as fractions."""

    k_delta: float          # zero-valued survivors of zero-check removal, over n
    k_prime: float          # all survivors, over n
    pN_prime0: np.ndarray   # check degrees into the survivors, over m
    alpha1: float           # unverified after the first LM round, over n
    pN_prime1: np.ndarray   # check degrees into the unverified set after round one, over m


def measure_lm_prephase(g: BipartiteGraph, alpha0: float, seed: int) -> LmPrephaseMeasurement:
    s = sample_signal(g.n, SignalModel(alpha0, ValueModel.EXACT, seed))
    st = DecoderState.fresh(g, encode(g, s))
    policy = EqualityPolicy()
    pre_remove_zero_checks(st, policy)
    unv = ~st.verified
    in_support = np.zeros(g.n, dtype=bool)
    in_support[s.support] = True
    k_prime = unv.sum() / g.n
    k_delta = (unv & ~in_support).sum() / g.n
    hist0 = np.bincount(st.degree, minlength=g.d_c + 1) / g.m
    sched = _degree_one_round(st, policy)
    st.peel_many(sched.nodes, sched.values)
    hist1 = np.bincount(st.degree, minlength=g.d_c + 1) / g.m
    return LmPrephaseMeasurement(float(k_delta), float(k_prime), hist0,
                                 st.unverified_count / g.n, hist1)


def write_sweep_csv(curve: SuccessCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("alpha0,success_rate,trials,mean_iterations,anomalies\n")
        for p in curve.points:
            fh.write(f"{p.alpha0!r},{p.success_rate!r},{p.trials},{p.mean_iterations!r},{p.anomaly_count}\n")


def write_gnuplot(curve: SuccessCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {curve.config.algorithm.value} n={curve.config.graph_spec.n}\n")
        fh.write("# alpha0 success_rate\n")
        for p in curve.points:
            fh.write(f"{p.alpha0!r} {p.success_rate!r}\n")


def write_trace_csv(tc: TraceComparison, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("ell,alpha_de,alpha_sim_mean,alpha_sim_min,alpha_sim_max\n")
        for ell, de, mean, lo, hi in tc.table().tolist():
            fh.write(f"{int(ell)},{de!r},{mean!r},{lo!r},{hi!r}\n")

"""Success thresholds by bisection on the initial density factor."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .de import DeParams, StopRule, Verdict, de_trace
from .decoders import Algorithm

__all__ = [
    "ThresholdError",
    "Probe",
    "ThresholdReport",
    "CellResult",
    "TABLE1_GRAPHS",
    "TABLE1_GRID",
    "REFERENCE_THRESHOLDS",
    "probe",
    "find_threshold",
    "audit_scan",
    "threshold_table",
    "write_threshold_csv",
    "format_table",
]

TABLE1_GRAPHS = [(3, 4), (5, 6), (5, 7), (5, 8), (7, 8)]
_ROW_ORDER = [Algorithm.XH, Algorithm.SBB, Algorithm.LM, Algorithm.GENIE]
TABLE1_GRID = [(dv, dc, alg) for alg in _ROW_ORDER for dv, dc in TABLE1_GRAPHS]

# Published reference values; XH and SBB on (3, 4) have none.
REFERENCE_THRESHOLDS: dict[tuple[int, int, Algorithm], float] = {
    (5, 6, Algorithm.XH): 0.1846, (5, 7, Algorithm.XH): 0.1552,
    (5, 8, Algorithm.XH): 0.1339, (7, 8, Algorithm.XH): 0.1435,
    (5, 6, Algorithm.SBB): 0.3271, (5, 7, Algorithm.SBB): 0.2783,
    (5, 8, Algorithm.SBB): 0.2421, (7, 8, Algorithm.SBB): 0.3057,
    (3, 4, Algorithm.LM): 0.2993, (5, 6, Algorithm.LM): 0.2541,
    (5, 7, Algorithm.LM): 0.2011, (5, 8, Algorithm.LM): 0.1646,
    (7, 8, Algorithm.LM): 0.2127,
    (3, 4, Algorithm.GENIE): 0.6474, (5, 6, Algorithm.GENIE): 0.5509,
    (5, 7, Algorithm.GENIE): 0.4786, (5, 8, Algorithm.GENIE): 0.4224,
    (7, 8, Algorithm.GENIE): 0.4708,
}


class ThresholdError(RuntimeError):
    """Bisection hit an inconclusive probe or an inconsistent bracket."""


@dataclass(frozen=True)
class Probe:
    alpha0: float
    verdict: Verdict
    iterations: int


@dataclass
class ThresholdReport:
    params: DeParams
    lo: float
    hi: float
    probes: list[Probe] = field(repr=False)
    tol: float = 1e-4

    @property
    def threshold(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def oversampling_ratio(self) -> float:
        """Measurements per nonzero at the threshold, ``d_v / (threshold * d_c)``."""
        return self.params.d_v / (self.threshold * self.params.d_c)


@dataclass
class CellResult:
    d_v: int
    d_c: int
    algorithm: Algorithm
    report: ThresholdReport | None = None
    error: str | None = None

    @property
    def reference(self) -> float | None:
        return REFERENCE_THRESHOLDS.get((self.d_v, self.d_c, self.algorithm))


def probe(alpha0: float, params: DeParams, stop: StopRule) -> Probe:
    tr = de_trace(alpha0, params, stop, keep_states=False)
    return Probe(alpha0, tr.verdict, tr.iterations)


def find_threshold(params: DeParams, stop: StopRule = StopRule(), tol: float = 1e-4) -> ThresholdReport:
    """Bisect [0, 1] for the largest alpha0 whose DE verdict is Success.

    Assumes the verdict is monotone in alpha0; ``audit_scan`` checks that.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    probes = []

    def run(a: float) -> Verdict:
        pr = probe(a, params, stop)
        probes.append(pr)
        if pr.verdict is Verdict.INCONCLUSIVE:
            raise ThresholdError(
                f"{params.algorithm.value} ({params.d_v},{params.d_c}): DE inconclusive at "
                f"alpha0={a!r} after {pr.iterations} iterations; raise stop.max_iter"
            )
        return pr.verdict

    if run(1.0) is Verdict.SUCCESS:
        return ThresholdReport(params, 1.0, 1.0, probes, tol)
    if run(0.0) is not Verdict.SUCCESS:
        raise ThresholdError("alpha0 = 0 did not succeed")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if run(mid) is Verdict.SUCCESS:
            lo = mid
        else:
            hi = mid
    return ThresholdReport(params, lo, hi, probes, tol)


def audit_scan(params: DeParams, stop: StopRule = StopRule(), points: int = 101) -> tuple[list[Probe], list[float]]:
    """Uniform verdict scan of [0, 1]; returns probes and the alpha0 values where
    a non-Success verdict is followed by a Success (monotonicity violations)."""
    probes = [probe(i / (points - 1), params, stop) for i in range(points)]
    bad = [b.alpha0 for a, b in zip(probes, probes[1:])
           if a.verdict is not Verdict.SUCCESS and b.verdict is Verdict.SUCCESS]
    return probes, bad


def _cell(args) -> CellResult:
    (d_v, d_c, alg), stop, tol = args
    alg = Algorithm(alg)
    try:
        rep = find_threshold(DeParams(d_v, d_c, alg), stop, tol)
        return CellResult(d_v, d_c, alg, report=rep)
    except (ThresholdError, ArithmeticError, ValueError) as exc:
        return CellResult(d_v, d_c, alg, error=str(exc))


def threshold_table(grid, stop: StopRule = StopRule(), tol: float = 1e-4, jobs: int = 1) -> list[CellResult]:
    tasks = [(cell, stop, tol) for cell in grid]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_cell, tasks))
    return [_cell(t) for t in tasks]


def write_threshold_csv(cells: list[CellResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("d_v,d_c,algorithm,threshold,lo,hi,r_o,probes\n")
        for c in cells:
            if c.report is None:
                fh.write(f"{c.d_v},{c.d_c},{c.algorithm.value},,,,,0\n")
                continue
            r = c.report
            fh.write(
                f"{c.d_v},{c.d_c},{c.algorithm.value},{r.threshold:.6f},{r.lo:.6f},"
                f"{r.hi:.6f},{r.oversampling_ratio:.4f},{len(r.probes)}\n"
            )


def format_table(cells: list[CellResult]) -> str:
    """Plain-text table: algorithms as rows, (d_v,d_c) graphs as columns."""
    graphs = sorted({(c.d_v, c.d_c) for c in cells})
    algs = [a for a in _ROW_ORDER if any(c.algorithm is a for c in cells)]
    by = {(c.d_v, c.d_c, c.algorithm): c for c in cells}
    head = ["(d_v,d_c)"] + [f"({dv},{dc})" for dv, dc in graphs]
    rows = [head]
    notes = []
    for a in algs:
        row = [a.value.upper() if a is not Algorithm.GENIE else "Genie"]
        for dv, dc in graphs:
            c = by.get((dv, dc, a))
            if c is None:
                row.append("")
            elif c.report is None:
                row.append("error")
            else:
                mark = ""
                if c.reference is None:
                    mark = "*"
                    notes.append(f"* ({dv},{dc}) {a.value}: computed; no published reference value")
                row.append(f"{c.report.threshold:.4f}{mark}")
        rows.append(row)
    width = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = [" | ".join(s.rjust(w) for s, w in zip(r, width)) for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in width))
    return "\n".join(lines + sorted(set(notes))) + "\n"

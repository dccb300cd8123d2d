"""Random (d_v, d_c)-regular bipartite sensing graphs.

Variables are indexed ``0..n-1`` and checks ``0..m-1``.  Both adjacency
views are dense ``int64`` arrays (``var_adj`` is ``(n, d_v)``, ``check_adj``
is ``(m, d_c)``) so neighbour iteration is a plain fancy-index.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GraphError",
    "GraphSpec",
    "BipartiteGraph",
    "CheckDegreePartition",
    "VariablePartition",
    "build_random_regular",
    "valid_n",
    "induced_check_partition",
    "induced_variable_partition",
    "dumps_graph",
    "loads_graph",
]


class GraphError(ValueError):
    """Invalid graph parameters or a construction that could not be repaired."""


@dataclass(frozen=True)
class GraphSpec:
    n: int
    d_v: int
    d_c: int
    seed: int = 0

    def __post_init__(self):
        if self.d_v < 1 or self.d_c < 1:
            raise GraphError(f"degrees must be >= 1, got d_v={self.d_v}, d_c={self.d_c}")
        if self.n < self.d_c:
            raise GraphError(f"need n >= d_c, got n={self.n}, d_c={self.d_c}")
        if (self.n * self.d_v) % self.d_c:
            raise GraphError(
                f"n*d_v = {self.n * self.d_v} is not divisible by d_c = {self.d_c}"
            )
        if not 0 <= self.seed < 2**64:
            raise GraphError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def m(self) -> int:
        return self.n * self.d_v // self.d_c


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    spec: GraphSpec
    var_adj: np.ndarray
    check_adj: np.ndarray

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def d_v(self) -> int:
        return self.spec.d_v

    @property
    def d_c(self) -> int:
        return self.spec.d_c

    def incidence_matrix(self) -> np.ndarray:
        """Dense 0/1 matrix of shape ``(n, m)``; for small graphs and tests."""
        g = np.zeros((self.n, self.m), dtype=np.int64)
        rows = np.repeat(np.arange(self.n), self.d_v)
        g[rows, self.var_adj.ravel()] = 1
        return g

    def has_parallel_edges(self) -> bool:
        s = np.sort(self.var_adj, axis=1)
        return bool(np.any(s[:, 1:] == s[:, :-1]))


def valid_n(n: int, d_v: int, d_c: int) -> int:
    """Smallest variable count >= n for which ``n*d_v`` is a multiple of ``d_c``."""
    step = d_c // np.gcd(d_v, d_c)
    return int(-(-max(n, d_c) // step) * step)


def _check_adjacency(var_adj: np.ndarray, m: int, d_c: int) -> np.ndarray:
    n, d_v = var_adj.shape
    flat = var_adj.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=m)
    if counts.shape[0] != m or np.any(counts != d_c):
        raise GraphError("check degrees are not all equal to d_c")
    # stable sort on check index keeps variables ascending within each check
    return (order // d_v).reshape(m, d_c).astype(np.int64)


def _repair_parallel_edges(
    checks: np.ndarray, d_v: int, rng: np.random.Generator, max_swaps: int
) -> int:
    """Swap check endpoints of duplicate edges in place; return swaps used."""
    n = checks.shape[0] // d_v
    adj = checks.reshape(n, d_v)
    swaps = 0
    while True:
        s = np.sort(adj, axis=1)
        bad_vars = np.flatnonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))
        if bad_vars.size == 0:
            return swaps
        for v in bad_vars:
            row = adj[v]
            _, first = np.unique(row, return_index=True)
            dup_slots = np.setdiff1d(np.arange(d_v), first)
            for k in dup_slots:
                e = v * d_v + k
                while True:
                    if swaps >= max_swaps:
                        raise GraphError(
                            f"could not remove parallel edges within {max_swaps} swaps"
                        )
                    swaps += 1
                    f = int(rng.integers(checks.shape[0]))
                    w = f // d_v
                    if w == v:
                        continue
                    c_e, c_f = checks[e], checks[f]
                    if c_f in adj[v] or c_e in adj[w]:
                        continue
                    checks[e], checks[f] = c_f, c_e
                    break


def build_random_regular(spec: GraphSpec) -> BipartiteGraph:
    """Configuration-model graph with edge-swap repair of parallel edges.

    Deterministic given ``spec.seed`` (numpy PCG64).
    """
    n, d_v, d_c, m = spec.n, spec.d_v, spec.d_c, spec.m
    if d_v > m:
        raise GraphError(f"d_v={d_v} exceeds the check count m={m}; no simple graph exists")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    checks = rng.permutation(np.repeat(np.arange(m, dtype=np.int64), d_c))
    _repair_parallel_edges(checks, d_v, rng, max_swaps=100 * n)
    var_adj = np.sort(checks.reshape(n, d_v), axis=1)
    check_adj = _check_adjacency(var_adj, m, d_c)
    var_adj.flags.writeable = False
    check_adj.flags.writeable = False
    return BipartiteGraph(spec, var_adj, check_adj)


@dataclass(frozen=True, eq=False)
class CheckDegreePartition:
    """Check counts by degree in the subgraph induced by ``subset``.

    ``degree[j]`` is check ``j``'s number of neighbours inside the subset,
    so membership in ``N_i`` is ``degree == i``.
    """

    counts: np.ndarray
    degree: np.ndarray
    subset: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class VariablePartition:
    counts: np.ndarray


def _as_subset(g: BipartiteGraph, subset) -> np.ndarray:
    idx = np.unique(np.asarray(list(subset) if isinstance(subset, (set, frozenset)) else subset,
                               dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= g.n):
        raise IndexError(f"subset indices must lie in [0, {g.n})")
    return idx


def induced_check_partition(g: BipartiteGraph, subset) -> CheckDegreePartition:
    idx = _as_subset(g, subset)
    degree = np.bincount(g.var_adj[idx].ravel(), minlength=g.m)
    counts = np.bincount(degree, minlength=g.d_c + 1)
    return CheckDegreePartition(counts=counts, degree=degree, subset=idx)


def induced_variable_partition(
    g: BipartiteGraph, subset, cp: CheckDegreePartition
) -> VariablePartition:
    """Count subset variables by how many of their checks have induced degree 1."""
    idx = _as_subset(g, subset)
    if not np.array_equal(idx, cp.subset):
        raise ValueError("check partition was computed for a different subset")
    ones = (cp.degree[g.var_adj[idx]] == 1).sum(axis=1)
    return VariablePartition(counts=np.bincount(ones, minlength=g.d_v + 1))


def dumps_graph(g: BipartiteGraph) -> str:
    s = g.spec
    buf = io.StringIO()
    buf.write(f"{s.n} {s.m} {s.d_v} {s.d_c} {s.seed}\n")
    for i, row in enumerate(g.var_adj):
        buf.write(f"v {i}: " + " ".join(map(str, row)) + "\n")
    return buf.getvalue()


def loads_graph(text: str) -> BipartiteGraph:
    lines = text.strip().splitlines()
    n, m, d_v, d_c, seed = (int(x) for x in lines[0].split())
    spec = GraphSpec(n, d_v, d_c, seed)
    if spec.m != m or len(lines) != n + 1:
        raise GraphError("graph header does not match body")
    var_adj = np.empty((n, d_v), dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        head, _, body = line.partition(":")
        if head.split() != ["v", str(i)]:
            raise GraphError(f"malformed line {i + 2}: {line!r}")
        var_adj[i] = [int(x) for x in body.split()]
    check_adj = _check_adjacency(var_adj, m, d_c)
    return BipartiteGraph(spec, var_adj, check_adj)


def save_graph(g: BipartiteGraph, path: str | Path) -> None:
    Path(path).write_text(dumps_graph(g))

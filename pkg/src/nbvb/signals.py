"""Sparse signals under the density-factor model, and their measurements.

Two value models:

``gaussian``
    nonzeros are standard normal draws (scaled by ``sigma``), float64.
``exact``
    nonzeros are uniform on ``[1, 2**62]`` with a random sign, int64.
    Measurements are accumulated in wrap-around int64 arithmetic, i.e.
    exactly in Z/2**64.  Every recovered value fits in int64, so peeling
    reproduces it bit-for-bit; a residual is "zero" or two residuals are
    "equal" only if the true integers agree modulo 2**64, which for
    distinct support sets happens with probability about 2**-62.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import BipartiteGraph

__all__ = [
    "ValueModel",
    "SignalModel",
    "SignalInstance",
    "sample_signal",
    "encode",
    "write_values_csv",
]

EXACT_MAX = 2**62


class ValueModel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXACT = "exact"


@dataclass(frozen=True)
class SignalModel:
    alpha0: float
    value_model: ValueModel = ValueModel.EXACT
    seed: int = 0
    sigma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha0 <= 1.0:
            raise ValueError(f"alpha0 must lie in [0, 1], got {self.alpha0}")
        object.__setattr__(self, "value_model", ValueModel(self.value_model))


@dataclass(frozen=True, eq=False)
class SignalInstance:
    values: np.ndarray
    support: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return int(self.support.size)

    @property
    def exact(self) -> bool:
        return self.values.dtype.kind == "i"

    @classmethod
    def from_values(cls, values) -> "SignalInstance":
        values = np.asarray(values)
        if values.dtype.kind not in "if":
            raise TypeError(f"unsupported signal dtype {values.dtype}")
        if values.dtype.kind == "i":
            values = values.astype(np.int64)
        else:
            values = values.astype(np.float64)
        return cls(values=values, support=np.flatnonzero(values))


def sample_signal(n: int, model: SignalModel) -> SignalInstance:
    """Each entry is nonzero independently with probability ``alpha0``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(model.seed))
    mask = rng.random(n) < model.alpha0
    k = int(mask.sum())
    if model.value_model is ValueModel.EXACT:
        values = np.zeros(n, dtype=np.int64)
        mag = rng.integers(1, EXACT_MAX, size=k, endpoint=True, dtype=np.int64)
        sign = np.where(rng.random(k) < 0.5, -1, 1)
        values[mask] = mag * sign
    else:
        values = np.zeros(n, dtype=np.float64)
        draw = rng.standard_normal(k) * model.sigma
        # a standard normal draw is exactly zero with probability 0, but guard anyway
        draw[draw == 0.0] = np.finfo(np.float64).tiny
        values[mask] = draw
    return SignalInstance(values=values, support=np.flatnonzero(mask))


def encode(g: BipartiteGraph, s: SignalInstance) -> np.ndarray:
    """Measurement vector ``c[j] = sum of s.values over the neighbours of check j``."""
    if s.values.shape != (g.n,):
        raise ValueError(f"signal has length {s.values.shape[0]}, graph has n={g.n}")
    with np.errstate(over="ignore"):
        return s.values[g.check_adj].sum(axis=1, dtype=s.values.dtype)


def write_values_csv(values: np.ndarray, path: str | Path) -> None:
    """Dump a signal or measurement vector as ``index,value`` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("index,value\n")
        if values.dtype.kind == "i":
            for i, v in enumerate(values.tolist()):
                fh.write(f"{i},{v}\n")
        else:
            for i, v in enumerate(values.tolist()):
                fh.write(f"{i},{v!r}\n")

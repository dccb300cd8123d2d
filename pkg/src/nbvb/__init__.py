"""Verification-based sparse recovery on regular bipartite graphs.

Finite-length decoders (Genie, LM, SBB, XH), their density-evolution
analysis, threshold search and Monte-Carlo experiments.
"""

__version__ = "0.1.0"

from .decoders import Algorithm, EqualityPolicy, run_decoder
from .de import DeParams, StopRule, Verdict, de_init, de_step, de_trace
from .graph import GraphSpec, build_random_regular, valid_n
from .signals import SignalModel, ValueModel, encode, sample_signal
from .threshold import find_threshold, threshold_table

__all__ = [
    "Algorithm",
    "EqualityPolicy",
    "run_decoder",
    "DeParams",
    "StopRule",
    "Verdict",
    "de_init",
    "de_step",
    "de_trace",
    "GraphSpec",
    "build_random_regular",
    "valid_n",
    "SignalModel",
    "ValueModel",
    "encode",
    "sample_signal",
    "find_threshold",
    "threshold_table",
]

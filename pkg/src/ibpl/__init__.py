"""Paraphrase similarity on exact bilingual probability worlds.

Round-trip translation similarity, strict distribution-matching similarity,
its deterministic Information Bottleneck relaxation with the accompanying
information-loss bounds, and a tabular adversarial IB trainer.
"""

from ._backend import BACKEND
from .prob_core import (
    JointTable,
    ProbVector,
    World,
    bayes_invert,
    entropy,
    kl_divergence,
    l1_distance,
    mutual_information,
    pinsker_gap,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "JointTable", "ProbVector", "World", "bayes_invert", "entropy",
    "kl_divergence", "l1_distance", "mutual_information", "pinsker_gap", "__version__",
]

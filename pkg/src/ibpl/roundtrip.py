"""Exact round-trip translation analysis.

A round trip x_s -> y -> x_p marginalizes over pivots:

    P(x_p | x_s) = sum_y P(y | x_s) P(x_p | y) / Z(x_s)

which factors as P(x_p) * S_MT(x_p, x_s) / Z(x_s), where S_MT is the
symmetric overlap sum_y P(y|x1) P(y|x2) / P(y). Z(x_s) is 1 when every pivot
is used and the retained row mass under a restricted pivot selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .partition_ib import strict_similarity
from .prob_core import ZERO_TOL, ProbVector, World


@dataclass(frozen=True)
class PivotSelection:
    """Which pivots a round trip may pass through: all, top-k, or an explicit set."""

    mode: str = "all"
    k: int = 0
    pivots: tuple = ()

    def __post_init__(self):
        if self.mode not in ("all", "topk", "explicit"):
            raise ValidationError(f"unknown pivot selection mode {self.mode!r}")
        if self.mode == "topk" and self.k < 1:
            raise ValidationError("TopK selection needs k >= 1")
        if self.mode == "explicit" and not self.pivots:
            raise ValidationError("explicit pivot set must be non-empty")

    @classmethod
    def all(cls):
        return cls("all")

    @classmethod
    def topk(cls, k):
        return cls("topk", k=int(k))

    @classmethod
    def explicit(cls, pivots):
        return cls("explicit", pivots=tuple(pivots))

    def describe(self):
        if self.mode == "topk":
            return f"topk:{self.k}"
        if self.mode == "explicit":
            return "explicit:" + ",".join(str(p) for p in self.pivots)
        return "all"


def pivot_topk(world: World, x_s, k: int) -> list:
    """The k pivots most probable under P(y|x_s); ties go to the lower pivot index."""
    if not 1 <= k <= world.n_pivot:
        raise ValidationError(f"k must be in [1, {world.n_pivot}], got {k}")
    row = world.p_y_given_x[world.x_index(x_s)]
    order = sorted(range(world.n_pivot), key=lambda j: (-row[j], j))
    return [world.y_labels[j] for j in order[:k]]


def selected_pivots(world: World, x_s, sel: PivotSelection) -> list:
    """Pivot indices S(x_s) used for source ``x_s``."""
    if sel.mode == "all":
        return list(range(world.n_pivot))
    if sel.mode == "topk":
        if sel.k > world.n_pivot:
            raise ValidationError(f"k={sel.k} exceeds |Y|={world.n_pivot}")
        return [world.y_index(y) for y in pivot_topk(world, x_s, sel.k)]
    idx = [world.y_index(y) for y in sel.pivots]
    if len(set(idx)) != len(idx):
        raise ValidationError("explicit pivot set contains duplicates")
    return idx


def roundtrip_dist(world: World, x_s, sel: PivotSelection = PivotSelection()) -> ProbVector:
    """P(x_p | x_s) over all sources, renormalized over the selected pivots."""
    i = world.x_index(x_s)
    row = world.p_y_given_x[i]
    idx = selected_pivots(world, i, sel)
    z = float(row[idx].sum()) if sel.mode != "all" else 1.0
    if z <= ZERO_TOL:
        raise DomainError(f"empty effective pivot support for {world.x_labels[i]!r}")
    py = world.p_y
    out = np.zeros(world.n_source)
    for j in idx:
        if row[j] <= ZERO_TOL:
            continue
        # P(x_p | y) = P(x_p, y) / P(y); P(y) >= P(x_s, y) > 0 here
        out += row[j] * world.joint.mass[:, j] / py[j]
    return ProbVector(out / z, world.x_labels)


def s_mt(world: World, x1, x2, sel: PivotSelection = PivotSelection()) -> float:
    """Unnormalized round-trip similarity sum_{y in S} P(y|x1) P(y|x2) / P(y).

    Under TopK the pivot set is the top-k of ``x1``, so the value is only
    symmetric for the ``all`` and ``explicit`` modes. Zero-mass pivots are
    skipped in ``all`` mode (their terms vanish); naming one explicitly, or
    having one land in a top-k set, is a DomainError.
    """
    i1, i2 = world.x_index(x1), world.x_index(x2)
    idx = selected_pivots(world, i1, sel)
    py = world.p_y
    r1, r2 = world.p_y_given_x[i1], world.p_y_given_x[i2]
    total = 0.0
    for j in idx:
        if py[j] <= ZERO_TOL:
            if sel.mode == "all":
                continue
            raise DomainError(f"P(y) = 0 for selected pivot {world.y_labels[j]!r}")
        total += r1[j] * r2[j] / py[j]
    return float(total)


def s_mt_matrix(world: World, sel: PivotSelection = PivotSelection()) -> np.ndarray:
    n = world.n_source
    return np.array([[s_mt(world, a, b, sel) for b in range(n)] for a in range(n)])


def decomposition_check(world: World, x_s) -> float:
    """max_x_p |P(x_p | x_s) - P(x_p) S_MT(x_s, x_p)| with every pivot in play."""
    i = world.x_index(x_s)
    dist = roundtrip_dist(world, i).weights
    factored = np.array([world.p_x[p] * s_mt(world, i, p) for p in range(world.n_source)])
    return float(np.max(np.abs(dist - factored)))


def analyze(world: World, sel: PivotSelection = PivotSelection(), confound_threshold=0.4,
            strict_tol=1e-9) -> dict:
    """Round-trip report: paraphrase distributions, S_MT matrix, residuals, confounded pairs.

    A pair is confounded when its S_MT exceeds ``confound_threshold`` while
    the two sources' translation rows differ (strict similarity 0).
    """
    n = world.n_source
    labels = world.x_labels
    dists = {labels[i]: roundtrip_dist(world, i, sel).as_dict() for i in range(n)}
    matrix = s_mt_matrix(world, sel)
    residuals = {labels[i]: decomposition_check(world, i) for i in range(n)}
    confounded = []
    for a in range(n):
        for b in range(a + 1, n):
            # under TopK the matrix is asymmetric; take the larger direction
            score = max(matrix[a, b], matrix[b, a])
            if score > confound_threshold and strict_similarity(world, a, b, strict_tol) == 0:
                confounded.append({"x1": labels[a], "x2": labels[b], "s_mt": float(score)})
    return {
        "world_name": world.name,
        "pivot_selection": sel.describe(),
        "confound_threshold": confound_threshold,
        "x_labels": list(labels),
        "roundtrip": dists,
        "s_mt": matrix.tolist(),
        "decomposition_residuals": residuals,
        "max_decomposition_residual": max(residuals.values()),
        "confounded_pairs": confounded,
    }

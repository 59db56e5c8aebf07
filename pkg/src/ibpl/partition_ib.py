"""Information Bottleneck over deterministic encodings (set partitions of X).

A deterministic encoding T groups sources into clusters. Its information
loss I(X;Y) - I(T;Y) is the P(x)-weighted KL divergence of each member row
from its cluster's mixture row; ``info_loss`` computes that sum and
``info_loss_coarsened`` reaches the same number through the MI of the
coarsened joint. The two lower bounds on the loss live in ``mixture_bound``
(partial-mixture L1 form) and ``pairwise_bound`` (worst pair per cluster).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from . import _backend
from .errors import CapacityError, ValidationError
from .prob_core import (
    JointTable,
    ProbVector,
    World,
    entropy,
    kl_divergence,
    l1_distance,
    mutual_information,
)

STRICT_TOL = 1e-9
MAX_EXHAUSTIVE = 12
# H(T) values closer than this are ties in the exhaustive solver.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Cluster id per source, in canonical restricted-growth form."""

    assignment: tuple

    def __post_init__(self):
        a = tuple(int(c) for c in self.assignment)
        if not a:
            raise ValidationError("partition of an empty set")
        top = -1
        for c in a:
            if c < 0 or c > top + 1:
                raise ValidationError(f"assignment {a} is not in restricted-growth form")
            top = max(top, c)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Partition":
        """Canonicalize arbitrary cluster labels (first occurrence order)."""
        seen = {}
        return cls(tuple(seen.setdefault(lab, len(seen)) for lab in labels))

    @classmethod
    def from_blocks(cls, blocks, n: int) -> "Partition":
        labels = [None] * n
        for b, block in enumerate(blocks):
            for i in block:
                if labels[i] is not None:
                    raise ValidationError(f"item {i} appears in two blocks")
                labels[i] = b
        if any(lab is None for lab in labels):
            raise ValidationError("blocks do not cover every item")
        return cls.from_labels(labels)

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(tuple(range(n)))

    @classmethod
    def single(cls, n: int) -> "Partition":
        return cls((0,) * n)

    def __len__(self):
        return len(self.assignment)

    @property
    def n_clusters(self) -> int:
        return max(self.assignment) + 1

    def blocks(self) -> list:
        out = [[] for _ in range(self.n_clusters)]
        for i, c in enumerate(self.assignment):
            out[c].append(i)
        return out

    def merge(self, c1: int, c2: int) -> "Partition":
        return Partition.from_labels([c1 if c == c2 else c for c in self.assignment])

    def refines(self, other: "Partition") -> bool:
        """True when every cluster of self lies inside a cluster of other."""
        return all(len({other.assignment[i] for i in b}) == 1 for b in self.blocks())


def _check_partition(world: World, part: Partition):
    if len(part) != world.n_source:
        raise ValidationError(f"partition has {len(part)} items, world has {world.n_source} sources")


def strict_similarity(world: World, x1, x2, tol: float = STRICT_TOL) -> int:
    """1 when the two translation rows match within ``tol`` in L1, else 0."""
    if tol < 0:
        raise ValidationError("tol must be >= 0")
    return int(l1_distance(world.row(x1), world.row(x2)) <= tol)


def identical_rows_matrix(world: World, tol: float = STRICT_TOL) -> np.ndarray:
    rows = world.p_y_given_x
    d = np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
    return d <= tol


@dataclass(frozen=True, eq=False)
class ClusterReport:
    cluster_id: int
    members: tuple
    mixture: ProbVector
    weights: np.ndarray
    partial_mixtures: tuple
    partial_weights: np.ndarray

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "members": list(self.members),
            "mixture": self.mixture.as_dict(),
            "weights": self.weights.tolist(),
            "partial_mixtures": [None if pm is None else pm.as_dict() for pm in self.partial_mixtures],
            "partial_weights": self.partial_weights.tolist(),
        }


def cluster_mixture(world: World, members, cluster_id: int = 0) -> ClusterReport:
    """Mixture row P(y | x in S) and the leave-one-out partial mixtures.

    ``weights`` are alpha_i = P(x_i) / P(S). ``partial_mixtures[j]`` is the
    mixture with member j removed and the weights renormalized, and
    ``partial_weights[j]`` is beta_j = 1 - alpha_j. A singleton has no partial
    mixture (entry None) and beta = 0.
    """
    idx = [world.x_index(m) for m in members]
    if not idx:
        raise ValidationError("cluster needs at least one member")
    if len(set(idx)) != len(idx):
        raise ValidationError("cluster members must be distinct")
    px = world.p_x[idx]
    rows = world.p_y_given_x[idx]
    alpha = px / px.sum()
    mixture = ProbVector(alpha @ rows, world.y_labels)
    partial = []
    beta = np.empty(len(idx))
    for j in range(len(idx)):
        keep = [i for i in range(len(idx)) if i != j]
        beta[j] = px[keep].sum() / px.sum()
        if keep:
            w = px[keep] / px[keep].sum()
            partial.append(ProbVector(w @ rows[keep], world.y_labels))
        else:
            partial.append(None)
    return ClusterReport(
        cluster_id, tuple(world.x_labels[i] for i in idx), mixture, alpha, tuple(partial), beta
    )


def cluster_reports(world: World, part: Partition) -> list:
    _check_partition(world, part)
    return [cluster_mixture(world, b, c) for c, b in enumerate(part.blocks())]


def info_loss(world: World, part: Partition) -> float:
    """sum_S sum_{i in S} P(x_i) KL(P(y|x_i) || P(y|x in S))."""
    _check_partition(world, part)
    total = 0.0
    for block in part.blocks():
        mix = cluster_mixture(world, block).mixture
        for i in block:
            total += world.p_x[i] * kl_divergence(world.row(i), mix)
    return float(total)


def coarsen(world: World, part: Partition) -> JointTable:
    """Joint of (T, Y) where T is the cluster id."""
    _check_partition(world, part)
    mass = np.zeros((part.n_clusters, world.n_pivot))
    for i, c in enumerate(part.assignment):
        mass[c] += world.joint.mass[i]
    return JointTable(tuple(f"t{c}" for c in range(part.n_clusters)), world.y_labels, mass)


def info_loss_coarsened(world: World, part: Partition) -> float:
    """I(X;Y) - I(T;Y) from two direct MI evaluations."""
    return mutual_information(world.joint) - mutual_information(coarsen(world, part))


def encoding_information(world: World, part: Partition) -> float:
    """I(X;T) for a deterministic T, which equals H(T)."""
    _check_partition(world, part)
    mass = np.zeros(part.n_clusters)
    np.add.at(mass, np.asarray(part.assignment), world.p_x)
    return entropy(mass / mass.sum())


def relevant_information(world: World, part: Partition) -> float:
    """I(T;Y)."""
    return mutual_information(coarsen(world, part))


def mixture_inner_sum(world: World, members) -> float:
    """sum_i P(x_i) beta_i^2 / 2 * D_1(P(y|x_i), P^S_i)^2 for one cluster."""
    rep = cluster_mixture(world, members)
    total = 0.0
    for j, m in enumerate(rep.members):
        pm = rep.partial_mixtures[j]
        if pm is None:
            continue
        d1 = l1_distance(world.row(m), pm)
        total += world.p_x[world.x_index(m)] * rep.partial_weights[j] ** 2 / 2.0 * d1 * d1
    return float(total)


def pair_term(world: World, x1, x2) -> float:
    """P(x1) P(x2) / (2 (P(x1) + P(x2))) * D_1(P(y|x1), P(y|x2))^2."""
    p1, p2 = world.p_x[world.x_index(x1)], world.p_x[world.x_index(x2)]
    d1 = l1_distance(world.row(x1), world.row(x2))
    return float(p1 * p2 / (2.0 * (p1 + p2)) * d1 * d1)


def binary_cluster_closed_form(world: World, x1, x2) -> float:
    """Two-member reduction of the partial-mixture bound, written out term by term.

    For S = {x1, x2}: beta_1 = P(x2)/(P(x1)+P(x2)), beta_2 = P(x1)/(P(x1)+P(x2)),
    and each partial mixture is the other member's row.
    """
    p1, p2 = world.p_x[world.x_index(x1)], world.p_x[world.x_index(x2)]
    d1 = l1_distance(world.row(x1), world.row(x2))
    s = p1 + p2
    return float((p1 * p2 ** 2 / (2 * s ** 2) + p2 * p1 ** 2 / (2 * s ** 2)) * d1 ** 2)


def mixture_bound(world: World, part: Partition):
    """(partial-mixture lower bound, information loss); lhs <= loss."""
    _check_partition(world, part)
    lhs = sum(mixture_inner_sum(world, b) for b in part.blocks())
    return float(lhs), info_loss(world, part)


def pairwise_bound(world: World, part: Partition):
    """(sum over clusters of the largest pair term, information loss); lhs <= loss."""
    _check_partition(world, part)
    lhs = 0.0
    for block in part.blocks():
        if len(block) > 1:
            lhs += max(pair_term(world, a, b) for a, b in combinations(block, 2))
    return float(lhs), info_loss(world, part)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_partitions(n: int) -> Iterator[Partition]:
    """Every set partition of n items as a restricted-growth string, lexicographically."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n > MAX_EXHAUSTIVE:
        raise CapacityError(f"enumeration is capped at n = {MAX_EXHAUSTIVE} (got {n})")
    a = [0] * n
    top = [0] * n  # top[i] = max(a[:i+1])
    while True:
        yield Partition(tuple(a))
        i = n - 1
        while i > 0 and a[i] == top[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        top[i] = max(top[i - 1], a[i])
        for j in range(i + 1, n):
            a[j] = 0
            top[j] = top[i]


def solve_ib_exhaustive(world: World, epsilon: float, tol: float = STRICT_TOL,
                        backend: str = "auto") -> Partition:
    """Partition of least I(X;T) among those losing at most ``epsilon`` nats.

    Clusters that only group rows identical within ``tol`` count as lossless,
    so ``epsilon = 0`` yields the identical-row grouping even when floating
    point leaves a residual of order 1e-16 on the loss. Ties in I(X;T) go to
    fewer clusters, then to the first partition in canonical order.
    """
    if epsilon < 0:
        raise ValidationError("epsilon must be >= 0")
    if world.n_source > MAX_EXHAUSTIVE:
        raise CapacityError(
            f"exhaustive IB is capped at |X| = {MAX_EXHAUSTIVE} (got {world.n_source}); "
            "use agglomerative_ib"
        )
    k = _backend.get(backend)
    assignment, _, _, _ = k.exhaustive_search(
        world.p_x, world.joint.mass, identical_rows_matrix(world, tol), float(epsilon), TIE_TOL
    )
    return Partition(tuple(int(c) for c in assignment))


def merge_cost(world: World, block_a, block_b) -> float:
    """Increase in information loss from merging two clusters."""
    def term(block):
        rep = cluster_mixture(world, block)
        return sum(world.p_x[i] * kl_divergence(world.row(i), rep.mixture) for i in block)

    return term(list(block_a) + list(block_b)) - term(block_a) - term(block_b)


def agglomerative_ib(world: World, target_clusters: int) -> Partition:
    """Greedy bottom-up merging, cheapest information-loss increase first.

    Candidate pairs are scanned in order of cluster id; a later pair only
    replaces the incumbent if it is cheaper by more than TIE_TOL.
    """
    n = world.n_source
    if not 1 <= target_clusters <= n:
        raise ValidationError(f"target_clusters must be in [1, {n}]")
    part = Partition.identity(n)
    while part.n_clusters > target_clusters:
        blocks = part.blocks()
        best = None
        for a, b in combinations(range(len(blocks)), 2):
            cost = merge_cost(world, blocks[a], blocks[b])
            if best is None or cost < best[0] - TIE_TOL:
                best = (cost, a, b)
        part = part.merge(best[1], best[2])
    return part


def paraphrase_dist_partition(world: World, part: Partition, x_s) -> ProbVector:
    """P(x_p | T(x_s)): P(x_p) restricted to x_s's cluster and renormalized."""
    _check_partition(world, part)
    i = world.x_index(x_s)
    same = np.array([c == part.assignment[i] for c in part.assignment])
    mass = np.where(same, world.p_x, 0.0)
    return ProbVector(mass / mass.sum(), world.x_labels)


def solution_report(world: World, part: Partition) -> dict:
    """Everything the ib-solve command emits about a chosen partition."""
    loss = info_loss(world, part)
    mb, _ = mixture_bound(world, part)
    pb, _ = pairwise_bound(world, part)
    return {
        "partition": list(part.assignment),
        "clusters": [[world.x_labels[i] for i in b] for b in part.blocks()],
        "i_xy": mutual_information(world.joint),
        "i_xt": encoding_information(world, part),
        "i_ty": relevant_information(world, part),
        "info_loss": loss,
        "bounds": {"mixture_bound": mb, "pairwise_bound": pb, "loss": loss},
        "cluster_reports": [r.to_dict() for r in cluster_reports(world, part)],
    }


__all__ = [
    "Partition", "ClusterReport", "strict_similarity", "cluster_mixture", "cluster_reports",
    "info_loss", "info_loss_coarsened", "coarsen", "encoding_information",
    "relevant_information", "mixture_inner_sum", "pair_term", "binary_cluster_closed_form",
    "mixture_bound", "pairwise_bound", "enumerate_partitions", "bell_number", "solve_ib_exhaustive",
    "agglomerative_ib", "merge_cost", "paraphrase_dist_partition", "solution_report",
]

"""Exact information-theory primitives over finite distributions.

All quantities are in nats. Probabilities stay in linear space; the worlds
handled here are small (|X|, |Y| <= 64) so underflow is not a concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, ValidationError

NORM_TOL = 1e-9
EQ_TOL = 1e-12
# Masses below this are exact zeros for support checks.
ZERO_TOL = 1e-15

NATS_PER_BIT = math.log(2.0)


def to_bits(nats):
    return nats / NATS_PER_BIT


def _as_float_array(values, ndim, what):
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: not numeric ({exc})") from None
    if arr.ndim != ndim:
        raise ValidationError(f"{what}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: contains NaN or infinite entries")
    if np.any(arr < 0):
        raise ValidationError(f"{what}: contains negative entries")
    return arr


def _default_labels(prefix, n):
    return tuple(f"{prefix}{i}" for i in range(n))


@dataclass(frozen=True, eq=False)
class ProbVector:
    """A normalized weight vector with one label per entry."""

    weights: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        w = _as_float_array(self.weights, 1, "ProbVector.weights")
        if w.size < 1:
            raise ValidationError("ProbVector must have at least one entry")
        labels = tuple(str(s) for s in self.labels) if self.labels else _default_labels("i", w.size)
        if len(labels) != w.size:
            raise ValidationError(
                f"ProbVector: {w.size} weights but {len(labels)} labels"
            )
        total = float(w.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise ValidationError(f"ProbVector weights sum to {total!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.weights.size

    def __getitem__(self, label):
        return float(self.weights[self.index(label)])

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown label {label!r}") from None

    def as_dict(self):
        return {lab: float(w) for lab, w in zip(self.labels, self.weights)}

    def allclose(self, other, atol=EQ_TOL):
        return self.labels == other.labels and bool(
            np.allclose(self.weights, other.weights, rtol=0.0, atol=atol)
        )

    def relabel(self, permutation):
        """Return the vector with entries reordered by ``permutation``."""
        perm = list(permutation)
        return ProbVector(self.weights[perm], tuple(self.labels[i] for i in perm))


VectorLike = Union[ProbVector, Sequence[float], np.ndarray]


def as_prob_vector(p: VectorLike) -> ProbVector:
    return p if isinstance(p, ProbVector) else ProbVector(np.asarray(p, dtype=float))


def _pair(p: VectorLike, q: VectorLike):
    p, q = as_prob_vector(p), as_prob_vector(q)
    if len(p) != len(q):
        raise ValidationError(f"length mismatch: {len(p)} vs {len(q)}")
    if p.labels != q.labels:
        raise ValidationError("label orderings differ")
    return p, q


def entropy(p: VectorLike) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    w = as_prob_vector(p).weights
    nz = w[w > ZERO_TOL]
    return max(0.0, float(-np.sum(nz * np.log(nz))))


def kl_divergence(p: VectorLike, q: VectorLike) -> float:
    """KL(p || q) in nats.

    Raises DomainError naming the first label where q vanishes but p does not.
    """
    p, q = _pair(p, q)
    pw, qw = p.weights, q.weights
    support = pw > ZERO_TOL
    bad = support & (qw <= ZERO_TOL)
    if np.any(bad):
        label = p.labels[int(np.argmax(bad))]
        raise DomainError(f"KL undefined: q has no mass at {label!r} where p does")
    ps, qs = pw[support], qw[support]
    return max(0.0, float(np.sum(ps * np.log(ps / qs))))


def l1_distance(p: VectorLike, q: VectorLike) -> float:
    p, q = _pair(p, q)
    return float(np.sum(np.abs(p.weights - q.weights)))


def pinsker_gap(p: VectorLike, q: VectorLike):
    """Both sides of Pinsker's inequality: ``(KL(p||q), D_1(p, q)**2 / 2)``."""
    kl = kl_divergence(p, q)
    d1 = l1_distance(p, q)
    return kl, 0.5 * d1 * d1


@dataclass(frozen=True, eq=False)
class JointTable:
    """Joint distribution P(x, y) stored as an |X| x |Y| matrix."""

    x_labels: tuple
    y_labels: tuple
    mass: np.ndarray

    def __post_init__(self):
        m = _as_float_array(self.mass, 2, "JointTable.mass")
        xl = tuple(str(s) for s in self.x_labels)
        yl = tuple(str(s) for s in self.y_labels)
        if m.shape != (len(xl), len(yl)):
            raise ValidationError(
                f"JointTable: mass shape {m.shape} does not match labels ({len(xl)}, {len(yl)})"
            )
        if len(set(xl)) != len(xl) or len(set(yl)) != len(yl):
            raise ValidationError("JointTable: duplicate labels")
        total = float(m.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise ValidationError(f"JointTable mass sums to {total!r}, not 1")
        px = m.sum(axis=1)
        if np.any(px <= ZERO_TOL):
            label = xl[int(np.argmin(px))]
            raise ValidationError(f"source item {label!r} has zero probability")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "x_labels", xl)
        object.__setattr__(self, "y_labels", yl)

    @classmethod
    def from_array(cls, mass):
        mass = np.asarray(mass, dtype=float)
        return cls(_default_labels("x", mass.shape[0]), _default_labels("y", mass.shape[1]), mass)


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Rows P(over | given), one per conditioning label."""

    given_labels: tuple
    over_labels: tuple
    matrix: np.ndarray

    def row(self, label) -> ProbVector:
        try:
            i = self.given_labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown conditioning label {label!r}") from None
        return ProbVector(self.matrix[i], self.over_labels)


@dataclass(frozen=True, eq=False)
class World:
    """A bilingual probability world: sources X, pivots Y and their joint."""

    joint: JointTable
    name: str = "world"
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "metadata", {str(k): str(v) for k, v in self.metadata.items()})

    @classmethod
    def from_conditionals(cls, p_x, p_y_given_x, x_labels=None, y_labels=None,
                          name="world", metadata=None):
        px = np.asarray(p_x, dtype=float)
        rows = np.asarray(p_y_given_x, dtype=float)
        if rows.ndim != 2 or px.ndim != 1 or rows.shape[0] != px.size:
            raise ValidationError("p_x and p_y_given_x shapes disagree")
        for i, r in enumerate(rows):
            if abs(r.sum() - 1.0) > NORM_TOL:
                raise ValidationError(f"row {i} of P(y|x) sums to {r.sum()!r}")
        x_labels = x_labels or _default_labels("x", px.size)
        y_labels = y_labels or _default_labels("y", rows.shape[1])
        joint = JointTable(tuple(x_labels), tuple(y_labels), px[:, None] * rows)
        return cls(joint, name, metadata or {})

    @property
    def x_labels(self):
        return self.joint.x_labels

    @property
    def y_labels(self):
        return self.joint.y_labels

    @property
    def n_source(self):
        return len(self.joint.x_labels)

    @property
    def n_pivot(self):
        return len(self.joint.y_labels)

    @cached_property
    def p_x(self) -> np.ndarray:
        out = self.joint.mass.sum(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def p_y(self) -> np.ndarray:
        out = self.joint.mass.sum(axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def p_y_given_x(self) -> np.ndarray:
        out = self.joint.mass / self.p_x[:, None]
        out.setflags(write=False)
        return out

    def x_index(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.n_source:
                raise ValidationError(f"source index {x} out of range")
            return int(x)
        try:
            return self.x_labels.index(x)
        except ValueError:
            raise ValidationError(f"unknown source id {x!r}") from None

    def y_index(self, y) -> int:
        if isinstance(y, (int, np.integer)):
            if not 0 <= y < self.n_pivot:
                raise ValidationError(f"pivot index {y} out of range")
            return int(y)
        try:
            return self.y_labels.index(y)
        except ValueError:
            raise ValidationError(f"unknown pivot id {y!r}") from None

    def row(self, x) -> ProbVector:
        """P(y | x) as a ProbVector over pivots."""
        return ProbVector(self.p_y_given_x[self.x_index(x)], self.y_labels)

    def source_marginal(self) -> ProbVector:
        return ProbVector(self.p_x, self.x_labels)

    def pivot_marginal(self) -> ProbVector:
        return ProbVector(self.p_y, self.y_labels)


def _joint_mass(joint) -> np.ndarray:
    if isinstance(joint, World):
        return joint.joint.mass
    if isinstance(joint, JointTable):
        return joint.mass
    # raw matrices may carry empty rows (e.g. unused encoder clusters)
    m = _as_float_array(joint, 2, "joint")
    if abs(float(m.sum()) - 1.0) > NORM_TOL:
        raise ValidationError(f"joint mass sums to {float(m.sum())!r}, not 1")
    return m


def mutual_information(joint) -> float:
    """I(X;Y) summed directly over the joint: sum P(x,y) ln(P(x,y) / P(x)P(y))."""
    m = _joint_mass(joint)
    px = m.sum(axis=1)
    py = m.sum(axis=0)
    nz = m > ZERO_TOL
    ratio = m[nz] / np.outer(px, py)[nz]
    return max(0.0, float(np.sum(m[nz] * np.log(ratio))))


def mutual_information_kl(world: World) -> float:
    """I(X;Y) as E_x KL(P(y|x) || P(y)); a second code path for cross-checks."""
    py = world.pivot_marginal()
    return float(sum(
        px * kl_divergence(world.row(i), py) for i, px in enumerate(world.p_x)
    ))


def bayes_invert(world: World, pivots=None) -> ConditionalTable:
    """Rows P(x | y) = P(x, y) / P(y).

    With ``pivots=None`` every pivot of positive mass is returned and
    zero-mass pivots are left out. Explicitly requesting a zero-mass pivot
    raises DomainError.
    """
    py = world.p_y
    if pivots is None:
        idx = [j for j in range(world.n_pivot) if py[j] > ZERO_TOL]
    else:
        idx = [world.y_index(y) for y in pivots]
        for j in idx:
            if py[j] <= ZERO_TOL:
                raise DomainError(f"P(y) = 0 for pivot {world.y_labels[j]!r}")
    cols = world.joint.mass[:, idx]
    matrix = (cols / py[idx]).T
    return ConditionalTable(tuple(world.y_labels[j] for j in idx), world.x_labels, matrix)

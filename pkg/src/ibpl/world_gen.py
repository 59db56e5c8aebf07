"""Canonical and randomized toy bilingual worlds, plus parallel-corpus sampling.

Randomness comes from numpy's PCG64 bit generator (``numpy.random.PCG64``),
seeded directly with the user's 64-bit seed. A world or corpus is a
deterministic function of its inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, ValidationError
from .prob_core import JointTable, World

CONFOUNDER_SOURCES = ("he_school", "she_school", "he_market", "she_market")
# Genderless pivots come first in each block so that the Top-K index tie-break
# picks the ambiguous translation when it ties with the gender-marked one.
CONFOUNDER_PIVOTS = (
    "ira_escuela", "ella_escuela", "el_escuela",
    "ira_mercado", "ella_mercado", "el_mercado",
)
AMBIGUOUS_MASS = 0.5

# Row mass a shared pivot must carry in both rows of an ambiguity pair.
SHARED_PIVOT_FLOOR = 0.3
MAX_REDRAWS = 100


def build_confounder_world() -> World:
    """The he/she x school/market world with one genderless pivot per place.

    Each source puts AMBIGUOUS_MASS on the genderless pivot of its place and
    the rest on its own gender-marked pivot. P(x) is uniform.
    """
    gendered = {
        "he_school": "el_escuela", "she_school": "ella_escuela",
        "he_market": "el_mercado", "she_market": "ella_mercado",
    }
    rows = np.zeros((4, 6))
    for i, x in enumerate(CONFOUNDER_SOURCES):
        place = "escuela" if x.endswith("school") else "mercado"
        rows[i, CONFOUNDER_PIVOTS.index(f"ira_{place}")] = AMBIGUOUS_MASS
        rows[i, CONFOUNDER_PIVOTS.index(gendered[x])] = 1.0 - AMBIGUOUS_MASS
    return World.from_conditionals(
        np.full(4, 0.25), rows, CONFOUNDER_SOURCES, CONFOUNDER_PIVOTS,
        name="confounder", metadata={"generator": "confounder", "ambiguous_mass": "0.5"},
    )


def build_identity_world(n: int, p_x=None) -> World:
    """Each source has exactly one pivot of its own (a perfect round trip)."""
    if n < 1:
        raise ValidationError("identity world needs n >= 1")
    px = np.full(n, 1.0 / n) if p_x is None else np.asarray(p_x, dtype=float)
    return World.from_conditionals(
        px, np.eye(n),
        tuple(f"x{i}" for i in range(n)), tuple(f"y{i}" for i in range(n)),
        name=f"identity{n}", metadata={"generator": "identity"},
    )


def duplicate_rows(world: World, pairs) -> World:
    """Copy P(y|src) onto P(y|dst) for each ``(src, dst)``; P(x) is kept."""
    rows = np.array(world.p_y_given_x)
    for src, dst in pairs:
        rows[world.x_index(dst)] = rows[world.x_index(src)]
    meta = dict(world.metadata)
    meta["duplicated"] = ";".join(f"{s}->{d}" for s, d in pairs)
    return World.from_conditionals(
        world.p_x, rows, world.x_labels, world.y_labels, name=world.name + "+dup", metadata=meta
    )


@dataclass(frozen=True)
class WorldSpec:
    n_source: int
    n_pivot: int
    ambiguity_pairs: tuple = ()
    concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_source < 2 or self.n_pivot < 2:
            raise ValidationError("need n_source >= 2 and n_pivot >= 2")
        if not self.concentration > 0:
            raise ValidationError("concentration must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        pairs = tuple(tuple(int(v) for v in p) for p in self.ambiguity_pairs)
        for a, b, y in pairs:
            if not (0 <= a < self.n_source and 0 <= b < self.n_source):
                raise ValidationError(f"ambiguity pair ({a}, {b}, {y}): source index out of range")
            if not 0 <= y < self.n_pivot:
                raise ValidationError(f"ambiguity pair ({a}, {b}, {y}): pivot index out of range")
            if a == b:
                raise ValidationError(f"ambiguity pair ({a}, {b}, {y}): sources must differ")
        object.__setattr__(self, "ambiguity_pairs", pairs)


def _required_pivots(spec: WorldSpec):
    need = {}
    for a, b, y in spec.ambiguity_pairs:
        need.setdefault(a, set()).add(y)
        need.setdefault(b, set()).add(y)
    for x, ys in need.items():
        # a row can hold at most three pivots at >= 0.3 each
        if len(ys) * SHARED_PIVOT_FLOOR > 1.0:
            raise ConstructionError(
                f"source {x} must share {len(ys)} distinct pivots at >= {SHARED_PIVOT_FLOOR}; "
                "a row cannot hold that much mass"
            )
    return need


def _unrequested_overlaps(rows, requested):
    n = rows.shape[0]
    heavy = rows >= SHARED_PIVOT_FLOOR
    count = 0
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) in requested:
                continue
            if np.any(heavy[a] & heavy[b]):
                count += 1
    return count


def build_random_world(spec: WorldSpec) -> World:
    """Dirichlet rows with ambiguity pairs enforced by mass transplant.

    Rows are drawn from a symmetric Dirichlet(concentration). For every source
    that takes part in an ambiguity pair, a fixed share of its row is moved
    onto each required shared pivot. Draws where an *unrequested* pair of
    sources both put >= 0.3 on one pivot are re-drawn, up to MAX_REDRAWS
    times; the last draw is kept if none is clean and the overlap count is
    recorded in metadata. Draws with two identical rows are always re-drawn.
    """
    need = _required_pivots(spec)
    requested = {(min(a, b), max(a, b)) for a, b, _ in spec.ambiguity_pairs}
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    kept = None
    attempts = 0
    while attempts < MAX_REDRAWS:
        attempts += 1
        px = 0.5 * rng.dirichlet(np.ones(spec.n_source)) + 0.5 / spec.n_source
        rows = rng.dirichlet(np.full(spec.n_pivot, float(spec.concentration)), size=spec.n_source)
        for x, ys in need.items():
            share = 0.4 if len(ys) <= 2 else SHARED_PIVOT_FLOOR
            rows[x] *= 1.0 - share * len(ys)
            for y in sorted(ys):
                rows[x, y] += share
        rows /= rows.sum(axis=1, keepdims=True)
        distinct = all(
            np.sum(np.abs(rows[a] - rows[b])) > 0
            for a in range(spec.n_source) for b in range(a + 1, spec.n_source)
        )
        if not distinct:
            continue
        kept = (px, rows, _unrequested_overlaps(rows, requested))
        if kept[2] == 0:
            break
    if kept is None:
        raise ConstructionError("could not draw a world with pairwise distinct rows")
    px, rows, overlaps = kept
    px /= px.sum()
    meta = {
        "generator": "random",
        "seed": str(spec.seed),
        "concentration": repr(float(spec.concentration)),
        "ambiguity_pairs": json.dumps([list(p) for p in spec.ambiguity_pairs]),
        "attempts": str(attempts),
        "unrequested_overlaps": str(overlaps),
    }
    return World.from_conditionals(
        px, rows,
        tuple(f"x{i}" for i in range(spec.n_source)),
        tuple(f"y{j}" for j in range(spec.n_pivot)),
        name=f"random-s{spec.seed}", metadata=meta,
    )


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple
    world_name: str
    seed: int = 0
    x_labels: tuple = field(default=(), compare=False)
    y_labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        if not pairs:
            raise ValidationError("corpus must be non-empty")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def check_against(self, world: World):
        for a, b in self.pairs:
            if not (0 <= a < world.n_source and 0 <= b < world.n_pivot):
                raise ValidationError(f"corpus pair ({a}, {b}) outside world {world.name!r}")

    def empirical_joint(self, n_source, n_pivot):
        counts = np.zeros((n_source, n_pivot))
        idx = np.asarray(self.pairs)
        np.add.at(counts, (idx[:, 0], idx[:, 1]), 1.0)
        return counts / len(self.pairs)


def sample_corpus(world: World, n: int, seed: int) -> ParallelCorpus:
    """n i.i.d. (source, pivot) draws from the joint."""
    if n < 1:
        raise ValidationError("corpus size must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    flat = world.joint.mass.ravel()
    draws = rng.choice(flat.size, size=n, p=flat / flat.sum())
    xs, ys = np.divmod(draws, world.n_pivot)
    return ParallelCorpus(tuple(zip(xs.tolist(), ys.tolist())), world.name, seed,
                          world.x_labels, world.y_labels)


# -- serialization ---------------------------------------------------------

def world_to_dict(world: World) -> dict:
    return {
        "name": world.name,
        "x_labels": list(world.x_labels),
        "y_labels": list(world.y_labels),
        "joint": world.joint.mass.tolist(),
        "metadata": dict(world.metadata),
    }


def world_from_dict(doc: dict) -> World:
    try:
        joint = JointTable(tuple(doc["x_labels"]), tuple(doc["y_labels"]), np.asarray(doc["joint"], dtype=float))
        return World(joint, str(doc["name"]), dict(doc.get("metadata", {})))
    except KeyError as exc:
        raise ValidationError(f"world document missing key {exc}") from None


def dumps_world(world: World) -> str:
    return json.dumps(world_to_dict(world), indent=2) + "\n"


def loads_world(text: str) -> World:
    return world_from_dict(json.loads(text))


def corpus_to_dict(corpus: ParallelCorpus) -> dict:
    return {"world_name": corpus.world_name, "seed": corpus.seed, "pairs": [list(p) for p in corpus.pairs]}


def corpus_from_dict(doc: dict) -> ParallelCorpus:
    try:
        return ParallelCorpus(tuple(tuple(p) for p in doc["pairs"]), doc["world_name"], int(doc["seed"]))
    except KeyError as exc:
        raise ValidationError(f"corpus document missing key {exc}") from None

import json

import numpy as np
import pytest

import oracle_values as ov
from conftest import random_world
from ibpl.errors import ConstructionError, ValidationError
from ibpl.partition_ib import strict_similarity
from ibpl.prob_core import mutual_information
from ibpl.roundtrip import s_mt
from ibpl.world_gen import (
    CONFOUNDER_PIVOTS, CONFOUNDER_SOURCES, SHARED_PIVOT_FLOOR, WorldSpec, build_identity_world,
    build_random_world, corpus_from_dict, corpus_to_dict, duplicate_rows, dumps_world, loads_world,
    sample_corpus,
)


def test_confounder_shape(confounder):
    assert confounder.x_labels == CONFOUNDER_SOURCES
    assert confounder.y_labels == CONFOUNDER_PIVOTS
    assert np.allclose(confounder.p_x, 0.25)
    assert mutual_information(confounder) == pytest.approx(ov.CONF_IXY, abs=1e-12)
    assert strict_similarity(confounder, "he_school", "she_school") == 0
    assert s_mt(confounder, "he_school", "she_school") >= 0.4


def test_identity_world():
    w = build_identity_world(5)
    assert mutual_information(w) == pytest.approx(np.log(5), abs=1e-12)


def test_duplicate_rows_are_strictly_similar():
    w = duplicate_rows(random_world(3, 5, 6), [(0, 3)])
    assert strict_similarity(w, 0, 3) == 1
    assert np.allclose(w.p_x, random_world(3, 5, 6).p_x)


@pytest.mark.parametrize("seed", range(10))
def test_random_world_ambiguity_pairs(seed):
    pairs = ((0, 1, 2), (2, 3, 4))
    w = random_world(seed, 6, 8, pairs)
    for a, b, y in pairs:
        assert w.p_y_given_x[a, y] >= SHARED_PIVOT_FLOOR - 1e-12
        assert w.p_y_given_x[b, y] >= SHARED_PIVOT_FLOOR - 1e-12
        assert strict_similarity(w, a, b) == 0
    # every pair of rows distinct
    for a in range(6):
        for b in range(a + 1, 6):
            assert strict_similarity(w, a, b) == 0


def test_random_world_is_deterministic():
    assert dumps_world(random_world(11)) == dumps_world(random_world(11))
    assert dumps_world(random_world(11)) != dumps_world(random_world(12))


def test_infeasible_spec():
    # source 0 would need four pivots at >= 0.3 each
    with pytest.raises(ConstructionError):
        build_random_world(WorldSpec(5, 6, ((0, 1, 0), (0, 2, 1), (0, 3, 2), (0, 4, 3))))


@pytest.mark.parametrize("kwargs", [
    dict(n_source=1, n_pivot=3),
    dict(n_source=3, n_pivot=3, concentration=0.0),
    dict(n_source=3, n_pivot=3, ambiguity_pairs=((0, 0, 1),)),
    dict(n_source=3, n_pivot=3, ambiguity_pairs=((0, 5, 1),)),
])
def test_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        WorldSpec(**kwargs)


def test_world_json_round_trip(confounder):
    text = dumps_world(confounder)
    back = loads_world(text)
    assert dumps_world(back) == text
    assert np.array_equal(back.joint.mass, confounder.joint.mass)
    assert json.loads(text)["name"] == "confounder"


def test_corpus_sampling(confounder):
    c = sample_corpus(confounder, 20000, seed=4)
    assert c == sample_corpus(confounder, 20000, seed=4)
    emp = c.empirical_joint(4, 6)
    assert np.abs(emp - confounder.joint.mass).max() < 0.01
    assert emp[0, 1] == 0.0  # he_school never translates to ella_escuela
    back = corpus_from_dict(corpus_to_dict(c))
    assert back.pairs == c.pairs


def test_corpus_large_sample_statistics(confounder):
    c = sample_corpus(confounder, 100_000, seed=1)
    emp = c.empirical_joint(4, 6)
    assert 0.5 * np.abs(emp - confounder.joint.mass).sum() <= 0.02
    he = emp[0] / emp[0].sum()
    assert abs(he[confounder.y_index("ira_escuela")] - 0.5) <= 0.01


def test_single_draw_corpus(confounder):
    c = sample_corpus(confounder, 1, seed=0)
    c.check_against(confounder)
    assert len(c) == 1
    with pytest.raises(ValidationError):
        sample_corpus(confounder, 0, seed=0)


def test_seed_seven_twice():
    spec = WorldSpec(4, 6, ((0, 1, 2),), 1.0, 7)
    a, b = build_random_world(spec), build_random_world(spec)
    assert np.array_equal(a.joint.mass, b.joint.mass)
    assert np.abs(a.p_y_given_x[0] - a.p_y_given_x[1]).sum() > 0

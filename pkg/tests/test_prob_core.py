import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle_values as ov
from ibpl.errors import DomainError, ValidationError
from ibpl.prob_core import (
    JointTable, ProbVector, World, bayes_invert, entropy, kl_divergence, l1_distance,
    mutual_information, mutual_information_kl, pinsker_gap, to_bits,
)


def simplex(n, min_n=2):
    return st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n).map(
        lambda w: np.asarray(w) / np.sum(w)
    )


pairs_same_len = st.integers(2, 8).flatmap(lambda n: st.tuples(simplex(n), simplex(n)))


def test_prob_vector_rejects_bad_input():
    with pytest.raises(ValidationError):
        ProbVector([0.5, 0.6])
    with pytest.raises(ValidationError):
        ProbVector([1.5, -0.5])
    with pytest.raises(ValidationError):
        ProbVector([float("nan"), 1.0])
    with pytest.raises(ValidationError):
        ProbVector([0.5, 0.5], ("a",))


def test_prob_vector_is_read_only_and_labeled():
    p = ProbVector([0.25, 0.75], ("a", "b"))
    assert p["b"] == 0.75
    with pytest.raises(ValueError):
        p.weights[0] = 1.0
    assert p.relabel([1, 0]).labels == ("b", "a")


def test_entropy_examples():
    assert entropy([0.25, 0.75]) == pytest.approx(ov.H_QUARTER, abs=1e-12)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)
    assert to_bits(entropy([0.5, 0.5])) == pytest.approx(1.0, abs=1e-12)


def test_kl_examples():
    assert kl_divergence([0.3, 0.7], [0.6, 0.4]) == pytest.approx(ov.KL_37_64, abs=1e-12)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0


def test_kl_infinite_names_the_label():
    with pytest.raises(DomainError, match="'b'"):
        kl_divergence(ProbVector([0.5, 0.5], ("a", "b")), ProbVector([1.0, 0.0], ("a", "b")))


def test_mismatched_supports_rejected():
    with pytest.raises(ValidationError):
        l1_distance([0.5, 0.5], [1 / 3, 1 / 3, 1 / 3])
    with pytest.raises(ValidationError):
        kl_divergence(ProbVector([0.5, 0.5], ("a", "b")), ProbVector([0.5, 0.5], ("b", "a")))


def test_pinsker_example():
    kl, rhs = pinsker_gap([0.9, 0.1], [0.5, 0.5])
    assert kl == pytest.approx(ov.KL_91_55, abs=1e-12)
    assert rhs == pytest.approx(ov.PINSKER_91_55, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(pairs_same_len)
def test_pinsker_holds(pq):
    kl, rhs = pinsker_gap(*pq)
    assert kl >= rhs - 1e-12


@settings(max_examples=200, deadline=None)
@given(pairs_same_len)
def test_kl_nonnegative_and_l1_bounded(pq):
    p, q = pq
    assert kl_divergence(p, q) >= 0.0
    assert 0.0 <= l1_distance(p, q) <= 2.0 + 1e-12


def test_mutual_information_examples():
    assert mutual_information(np.array([[0.4, 0.1], [0.1, 0.4]])) == pytest.approx(ov.MI_DIAG, abs=1e-12)
    assert mutual_information(np.array([[0.5, 0.0], [0.0, 0.5]])) == pytest.approx(math.log(2), abs=1e-12)
    assert mutual_information(np.outer([0.3, 0.7], [0.2, 0.8])) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_mi_two_paths_agree(nx, ny, seed):
    rng = np.random.default_rng(seed)
    world = World(JointTable.from_array(rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)))
    mi = mutual_information(world)
    assert mi == pytest.approx(mutual_information_kl(world), abs=1e-10)
    assert 0.0 <= mi <= min(entropy(world.p_x), entropy(world.p_y)) + 1e-12


def test_joint_table_validation():
    with pytest.raises(ValidationError):
        JointTable.from_array([[0.5, 0.4]])
    with pytest.raises(ValidationError, match="zero probability"):
        JointTable(("a", "b"), ("y",), np.array([[1.0], [0.0]]))
    with pytest.raises(ValidationError, match="duplicate"):
        JointTable(("a", "a"), ("y",), np.array([[0.5], [0.5]]))


def test_bayes_invert_rows_normalized(confounder):
    inv = bayes_invert(confounder)
    assert np.allclose(inv.matrix.sum(axis=1), 1.0, atol=1e-12)
    row = inv.row("ira_escuela")
    assert row["he_school"] == pytest.approx(0.5) and row["she_school"] == pytest.approx(0.5)


def test_bayes_invert_zero_pivot():
    joint = np.array([[0.5, 0.0], [0.5, 0.0]])
    world = World(JointTable.from_array(joint))
    assert bayes_invert(world).given_labels == ("y0",)
    with pytest.raises(DomainError):
        bayes_invert(world, ["y1"])


def test_world_lookup_errors(confounder):
    with pytest.raises(ValidationError):
        confounder.x_index("nobody")
    with pytest.raises(ValidationError):
        confounder.y_index(17)
    assert confounder.row("he_school")["el_escuela"] == 0.5

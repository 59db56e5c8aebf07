import pytest
from hypothesis import given, settings, strategies as st

import oracle_values as ov
from ibpl.errors import ValidationError
from ibpl.eval_metrics import (
    MetricReport, ScoredCorpus, bleu, ibleu, ibleu_score, label_tokens, read_corpus, self_bleu,
    write_corpus,
)

words = st.sampled_from(["a", "b", "c", "d", "e", "f", "g"])
sentences = st.lists(words, min_size=1, max_size=8)
corpora = st.integers(1, 5).flatmap(
    lambda n: st.tuples(st.lists(sentences, min_size=n, max_size=n), st.lists(sentences, min_size=n, max_size=n))
)


def test_identical_is_100():
    c = ["he goes to school", "she is here"]
    assert bleu(c, c) == 100.0
    assert self_bleu(c, c) == 100.0


def test_pinned_golden_values():
    assert bleu(["a b c d"], ["a b c d e"]) == pytest.approx(ov.BLEU_BREVITY, abs=1e-9)
    assert bleu(ov.DISJOINT_CANDS, ov.DISJOINT_REFS) == ov.BLEU_DISJOINT
    assert bleu(ov.DISJOINT_CANDS, ov.DISJOINT_REFS) < 5.0
    assert bleu(ov.SINGLE_CANDS, ov.SINGLE_REFS) == pytest.approx(ov.BLEU_SINGLE_OVERLAP, abs=1e-9)
    assert self_bleu(ov.SINGLE_CANDS, ov.SINGLE_REFS) == pytest.approx(ov.BLEU_SINGLE_OVERLAP, abs=1e-9)
    assert bleu(ov.PARTIAL_CANDS, ov.PARTIAL_REFS) == pytest.approx(ov.BLEU_PARTIAL, abs=1e-9)


def test_ibleu_arithmetic():
    assert ibleu_score(23.0, 100.0, 0.7) == pytest.approx(ov.COPY_ROW_IBLEU, abs=1e-9)
    assert ibleu_score(0.0, 0.0) == 0.0
    assert ibleu_score(50.0, 20.0, 0.7) == pytest.approx(29.0, abs=1e-12)
    for bad in (-0.1, 1.5, float("nan")):
        with pytest.raises(ValidationError):
            ibleu_score(10.0, 10.0, bad)


def test_ibleu_report():
    c = ScoredCorpus(["he school"], ["he school"], ["she school"])
    rep = ibleu(c, 0.7)
    assert rep.self_bleu == 100.0
    assert rep.ibleu == pytest.approx(0.7 * rep.bleu - 0.3 * 100.0, abs=1e-12)
    with pytest.raises(ValidationError):
        MetricReport(10.0, 10.0, 5.0, 0.7)


def test_corpus_validation():
    with pytest.raises(ValidationError):
        bleu([], [])
    with pytest.raises(ValidationError):
        bleu(["a"], ["a", "b"])
    with pytest.raises(ValidationError):
        bleu([""], ["a"])
    with pytest.raises(ValidationError, match="lengths differ"):
        ScoredCorpus(["a"], ["a", "b"], ["a"])


@settings(max_examples=150, deadline=None)
@given(corpora)
def test_bleu_range_and_permutation(cr):
    cands, refs = cr
    b = bleu(cands, refs)
    assert 0.0 <= b <= 100.0
    assert bleu(cands[::-1], refs[::-1]) == pytest.approx(b, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(corpora, st.data())
def test_oov_replacement_never_helps(cr, data):
    cands, refs = cr
    i = data.draw(st.integers(0, len(cands) - 1))
    j = data.draw(st.integers(0, len(cands[i]) - 1))
    worse = [list(s) for s in cands]
    worse[i][j] = "<oov>"
    assert bleu(worse, refs) <= bleu(cands, refs) + 1e-9


def test_label_tokens():
    assert label_tokens("he_school") == ("he", "school")
    assert label_tokens("x3") == ("x3",)


def test_corpus_files(tmp_path):
    p = tmp_path / "c.txt"
    write_corpus(p, ["he school", ("she", "market")])
    assert read_corpus(p) == [("he", "school"), ("she", "market")]
    (tmp_path / "bad.txt").write_text("a\n\nb\n")
    with pytest.raises(ValidationError):
        read_corpus(tmp_path / "bad.txt")

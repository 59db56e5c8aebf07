import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

import oracle_values as ov
from conftest import random_world
from ibpl import __version__
from ibpl.adversarial_trainer import init_state, state_from_dict
from ibpl.cli import main
from ibpl.world_gen import build_identity_world, corpus_to_dict, duplicate_rows, dumps_world, loads_world, sample_corpus


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["generate-world", "--preset", "confounder", "--out", "w.json"]) == 0
    return tmp_path


def load(path):
    return json.loads(open(path).read())


def test_generate_world_preset_is_deterministic(work):
    first = (work / "w.json").read_bytes()
    assert main(["generate-world", "--preset", "confounder", "--out", "w2.json"]) == 0
    assert (work / "w2.json").read_bytes() == first
    assert loads_world(first.decode()).name == "confounder"


def test_generate_random_world(work):
    argv = ["generate-world", "--n-source", "5", "--n-pivot", "7", "--ambiguity-pairs", "0:1:2,3:4:5",
            "--concentration", "0.5", "--seed", "9", "--out", "r.json"]
    assert main(argv) == 0
    w = loads_world((work / "r.json").read_text())
    assert w.p_y_given_x[0, 2] >= 0.3 and w.p_y_given_x[1, 2] >= 0.3


@pytest.mark.parametrize("argv,code", [
    (["generate-world", "--n-source", "1", "--n-pivot", "3", "--out", "x.json"], 2),
    (["generate-world", "--n-source", "4", "--n-pivot", "5", "--ambiguity-pairs", "0:1", "--out", "x.json"], 2),
    (["generate-world", "--out", "x.json"], 2),
    (["generate-world", "--preset", "confounder"], 2),
    (["no-such-command"], 2),
    (["generate-world", "--n-source", "5", "--n-pivot", "6",
      "--ambiguity-pairs", "0:1:0,0:2:1,0:3:2,0:4:3", "--out", "x.json"], 1),
    (["roundtrip-analyze", "--world", "missing.json", "--out", "x.json"], 1),
    (["roundtrip-analyze", "--world", "w.json", "--pivot-mode", "topk", "--out", "x.json"], 2),
    (["ib-solve", "--world", "w.json", "--out", "x.json"], 2),
    (["train", "--world", "w.json", "--lambda", "1.5", "--out", "m"], 2),
])
def test_exit_codes(work, argv, code):
    assert main(argv) == code


def test_invalid_log_level(work, monkeypatch):
    monkeypatch.setenv("IBPL_LOG", "chatty")
    assert main(["generate-world", "--preset", "confounder", "--out", "x.json"]) == 2


def test_malformed_world_file(work):
    (work / "bad.json").write_text("{not json")
    assert main(["roundtrip-analyze", "--world", "bad.json", "--out", "x.json"]) == 2


def test_roundtrip_analyze(work):
    assert main(["roundtrip-analyze", "--world", "w.json", "--out", "rt.json"]) == 0
    rep = load("rt.json")
    pairs = {(p["x1"], p["x2"]) for p in rep["confounded_pairs"]}
    assert pairs == {("he_school", "she_school"), ("he_market", "she_market")}
    assert rep["roundtrip"]["he_school"]["she_school"] == pytest.approx(ov.CONF_RT_SHE)
    assert main(["roundtrip-analyze", "--world", "w.json", "--pivot-mode", "topk", "--k", "1",
                 "--out", "rt1.json"]) == 0
    top = {(p["x1"], p["x2"]): p["s_mt"] for p in load("rt1.json")["confounded_pairs"]}
    for p in rep["confounded_pairs"]:
        assert top[(p["x1"], p["x2"])] >= p["s_mt"]


def test_roundtrip_identity_world(work):
    (work / "id.json").write_text(dumps_world(build_identity_world(4)))
    assert main(["roundtrip-analyze", "--world", "id.json", "--out", "rt.json"]) == 0
    rep = load("rt.json")
    assert rep["confounded_pairs"] == []
    assert rep["max_decomposition_residual"] <= 1e-10


def test_ib_solve(work):
    eps = ov.CONF_GENDER_MERGE / 2
    assert main(["ib-solve", "--world", "w.json", "--epsilon", str(eps), "--out", "ib.json"]) == 0
    rep = load("ib.json")
    assert rep["partition"] == [0, 1, 2, 3]
    assert rep["bounds"]["mixture_bound"] <= eps and rep["bounds"]["pairwise_bound"] <= eps
    assert main(["ib-solve", "--world", "w.json", "--method", "agglomerative", "--clusters", "4",
                 "--out", "ag.json"]) == 0
    assert load("ag.json")["partition"] == [0, 1, 2, 3]
    assert main(["--bits", "ib-solve", "--world", "w.json", "--epsilon", "0", "--out", "bits.json"]) == 0
    bits = load("bits.json")
    assert bits["units"] == "bits" and bits["i_xy"] == pytest.approx(1.5)


def test_ib_solve_duplicates_and_capacity(work):
    (work / "dup.json").write_text(dumps_world(duplicate_rows(random_world(2, 5, 6), [(0, 3)])))
    assert main(["ib-solve", "--world", "dup.json", "--epsilon", "0", "--out", "ib.json"]) == 0
    assert load("ib.json")["partition"] == [0, 1, 2, 0, 3]
    (work / "big.json").write_text(dumps_world(build_identity_world(13)))
    assert main(["ib-solve", "--world", "big.json", "--epsilon", "0", "--out", "ib.json"]) == 1


def test_train_outputs(work):
    assert main(["train", "--world", "w.json", "--steps", "1000", "--out", "run/m"]) == 0
    man = load("run/m.manifest.json")
    for key in ("command", "argv", "config", "inputs", "outputs", "seed", "version", "duration_s"):
        assert key in man
    assert man["version"] == __version__
    res = man["results"]
    assert res["i_ty_over_i_xy"] == pytest.approx(res["i_ty"] / res["i_xy"])
    rows = list(csv.DictReader(open("run/m.trace.csv")))
    assert len(rows) == 1001 and rows[0]["i_xt"] != ""
    state, cfg, name = state_from_dict(load("run/m.model.json"))
    assert cfg.lam == 0.73 and cfg.k_frac == 0.7 and state.step == 1000


def test_train_lambda_one_records_adversary(work):
    assert main(["train", "--world", "w.json", "--lambda", "1.0", "--steps", "300", "--out", "m"]) == 0
    rows = list(csv.DictReader(open("m.trace.csv")))
    assert all(math.isfinite(float(r["l_adv"])) for r in rows)
    assert all(float(r["objective"]) == float(r["l_mt"]) for r in rows)


def test_train_zero_steps_is_init(work, confounder):
    assert main(["train", "--world", "w.json", "--steps", "0", "--seed", "4", "--out", "m"]) == 0
    state, cfg, _ = state_from_dict(load("m.model.json"))
    init = init_state(confounder, cfg)
    assert np.array_equal(state.encoder.logits, init.encoder.logits)
    assert np.array_equal(state.mt_decoder.logits, init.mt_decoder.logits)


def test_train_sampled_with_corpus(work, confounder):
    (work / "c.json").write_text(json.dumps(corpus_to_dict(sample_corpus(confounder, 400, 1))))
    assert main(["train", "--world", "w.json", "--mode", "sampled", "--corpus", "c.json",
                 "--steps", "200", "--out", "s"]) == 0
    assert "c.json" in load("s.manifest.json")["inputs"]
    assert main(["train", "--world", "w.json", "--corpus", "c.json", "--out", "s2"]) == 2


def test_tradeoff_curve(work):
    argv = ["tradeoff-curve", "--world", "w.json", "--lambdas", "0.9,0.55,0.7", "--steps", "2000",
            "--out", "tc.csv"]
    assert main(argv) == 0
    rows = list(csv.DictReader(open("tc.csv")))
    assert [float(r["lambda"]) for r in rows] == [0.55, 0.7, 0.9]
    assert list(rows[0]) == ["lambda", "i_xt", "i_ty", "bleu", "self_bleu", "ibleu"]
    first = (work / "tc.csv").read_bytes()
    assert main(argv[:-1] + ["tc2.csv"]) == 0
    assert (work / "tc2.csv").read_bytes() == first


def test_tradeoff_curve_eval_corpus(work):
    (work / "src.txt").write_text("he school\nshe market\n")
    (work / "ref.txt").write_text("she school\nhe market\n")
    assert main(["tradeoff-curve", "--world", "w.json", "--lambdas", "0.73", "--steps", "500",
                 "--eval-corpus", "src.txt,ref.txt", "--self-margin", "0.9", "--out", "tc.csv"]) == 0
    row = next(csv.DictReader(open("tc.csv")))
    # with a wide margin every candidate avoids copying its source
    assert float(row["self_bleu"]) < 100.0
    (work / "bad.txt").write_text("he office\n")
    assert main(["tradeoff-curve", "--world", "w.json", "--lambdas", "0.73", "--steps", "10",
                 "--eval-corpus", "bad.txt", "--out", "tc.csv"]) == 2


def test_evaluate(work):
    for name in ("s.txt", "c.txt", "r.txt"):
        (work / name).write_text("he goes to school\nshe goes to market\n")
    assert main(["evaluate", "--sources", "s.txt", "--candidates", "c.txt", "--references", "r.txt",
                 "--out", "ev.json"]) == 0
    rep = load("ev.json")
    assert rep["bleu"] == 100.0 and rep["self_bleu"] == 100.0
    assert rep["ibleu"] == pytest.approx(0.7 * 100 - 0.3 * 100)
    assert main(["evaluate", "--bleu", "23.0", "--self-bleu", "100.0", "--out", "copy.json"]) == 0
    assert load("copy.json")["ibleu"] == pytest.approx(ov.COPY_ROW_IBLEU, abs=1e-9)
    (work / "short.txt").write_text("he goes\n")
    assert main(["evaluate", "--sources", "s.txt", "--candidates", "short.txt", "--references", "r.txt",
                 "--out", "ev.json"]) == 2
    assert main(["evaluate", "--bleu", "23.0", "--out", "x.json"]) == 2
    assert main(["evaluate", "--bleu", "23", "--self-bleu", "100", "--alpha", "2", "--out", "x.json"]) == 2


def test_json_outputs_round_trip(work):
    assert main(["ib-solve", "--world", "w.json", "--epsilon", "0.2", "--out", "ib.json"]) == 0
    text = (work / "ib.json").read_text()
    assert json.dumps(json.loads(text), indent=2) + "\n" == text
    assert dumps_world(loads_world((work / "w.json").read_text())) == (work / "w.json").read_text()


def test_replay_unknown_manifest(work):
    (work / "junk.json").write_text("{}")
    assert main(["replay", "junk.json"]) == 2
    assert main(["replay", "nothing.json"]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ibpl", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout

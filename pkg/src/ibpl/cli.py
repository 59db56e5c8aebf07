"""Command-line entry point.

Every command writes its artifacts atomically and drops a ``.manifest.json``
next to them recording argv, working directory, resolved config, inputs,
outputs, seed, version and wall-clock duration. ``ibpl replay MANIFEST``
re-runs the recorded command; the artifacts themselves carry no timestamps,
so a replay reproduces them byte for byte.

Exit codes: 0 success, 1 runtime or domain failure, 2 usage or validation
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, adversarial_trainer as at, eval_metrics as em, partition_ib as pib
from . import roundtrip, world_gen
from ._backend import BACKEND
from .errors import IBPLError, ValidationError
from .prob_core import NATS_PER_BIT, World, mutual_information

log = logging.getLogger("ibpl")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
DEFAULT_LAMBDAS = "0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # raise instead of exiting so main() owns the exit code and tests can call it in-process
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


# -- io helpers --------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def load_world(path) -> World:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IBPLError(f"cannot read world file: {exc}") from None
    try:
        return world_gen.loads_world(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None


def load_corpus(path) -> world_gen.ParallelCorpus:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IBPLError(f"cannot read corpus file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return world_gen.corpus_from_dict(doc)


def read_text_corpus(path):
    try:
        return em.read_corpus(path)
    except OSError as exc:
        raise IBPLError(f"cannot read corpus file: {exc}") from None


class _Units:
    def __init__(self, bits: bool):
        self.name = "bits" if bits else "nats"
        self.scale = 1.0 / NATS_PER_BIT if bits else 1.0

    def __call__(self, nats):
        return float(nats) * self.scale


# -- commands ----------------------------------------------------------------

def _parse_pairs(text):
    pairs = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValidationError(f"ambiguity pair {item!r} is not of the form a:b:y")
        try:
            pairs.append(tuple(int(p) for p in parts))
        except ValueError:
            raise ValidationError(f"ambiguity pair {item!r} has a non-integer field") from None
    return tuple(pairs)


def cmd_generate_world(args, units):
    if args.preset:
        world = world_gen.build_confounder_world()
        config = {"preset": args.preset}
    else:
        missing = [f for f in ("n_source", "n_pivot") if getattr(args, f) is None]
        if missing:
            raise ValidationError("without --preset, --n-source and --n-pivot are required")
        spec = world_gen.WorldSpec(args.n_source, args.n_pivot, _parse_pairs(args.ambiguity_pairs),
                                   args.concentration, args.seed)
        world = world_gen.build_random_world(spec)
        config = {"n_source": spec.n_source, "n_pivot": spec.n_pivot,
                  "ambiguity_pairs": [list(p) for p in spec.ambiguity_pairs],
                  "concentration": spec.concentration, "seed": spec.seed}
    atomic_write(args.out, world_gen.dumps_world(world))
    return {"config": config, "inputs": [], "outputs": [args.out], "seed": config.get("seed")}


def cmd_roundtrip_analyze(args, units):
    world = load_world(args.world)
    if args.pivot_mode == "topk":
        if args.k is None:
            raise ValidationError("--pivot-mode topk needs --k")
        sel = roundtrip.PivotSelection.topk(args.k)
    else:
        sel = roundtrip.PivotSelection.all()
    report = roundtrip.analyze(world, sel, args.confound_threshold)
    atomic_write(args.out, dumps_json(report))
    return {"config": {"pivot_selection": sel.describe(),
                       "confound_threshold": args.confound_threshold},
            "inputs": [args.world], "outputs": [args.out]}


def cmd_ib_solve(args, units):
    world = load_world(args.world)
    if args.method == "exhaustive":
        if args.epsilon is None:
            raise ValidationError("--method exhaustive needs --epsilon")
        part = pib.solve_ib_exhaustive(world, args.epsilon)
    else:
        if args.clusters is None:
            raise ValidationError("--method agglomerative needs --clusters")
        part = pib.agglomerative_ib(world, args.clusters)
    report = pib.solution_report(world, part)
    for key in ("i_xy", "i_xt", "i_ty", "info_loss"):
        report[key] = units(report[key])
    report["bounds"] = {k: units(v) for k, v in report["bounds"].items()}
    report = {"world_name": world.name, "method": args.method, "epsilon": args.epsilon,
              "units": units.name, **report}
    atomic_write(args.out, dumps_json(report))
    return {"config": {"method": args.method, "epsilon": args.epsilon, "clusters": args.clusters},
            "inputs": [args.world], "outputs": [args.out]}


def _trainer_config(args, lam):
    return at.TrainerConfig(
        lam=lam, k_frac=args.k_frac, lr=args.lr, steps=args.steps, n_clusters=args.clusters,
        seed=args.seed, mode=args.mode, init=args.init,
    )


def cmd_train(args, units):
    world = load_world(args.world)
    config = _trainer_config(args, args.lam)
    corpus = load_corpus(args.corpus) if args.corpus else None
    if corpus is not None and config.mode != "sampled":
        raise ValidationError("--corpus only applies to --mode sampled")
    state = at.train(world, config, corpus)
    i_xt, i_ty = at.mi_report(world, state)
    i_xy = mutual_information(world.joint)
    prefix = args.out
    model, trace = f"{prefix}.model.json", f"{prefix}.trace.csv"
    atomic_write(model, at.dumps_state(state, config, world.name))
    atomic_write(trace, at.trace_csv(state, units))
    inputs = [args.world] + ([args.corpus] if args.corpus else [])
    return {
        "config": config.to_dict(), "inputs": inputs, "outputs": [model, trace],
        "seed": config.seed, "manifest_path": f"{prefix}.manifest.json",
        "results": {
            "units": units.name, "steps_run": state.step, "converged_step": state.converged_step,
            "adversarial_steps": state.adv_steps, "i_xt": units(i_xt), "i_ty": units(i_ty),
            "i_xy": units(i_xy), "i_ty_over_i_xy": i_ty / i_xy if i_xy > 0 else None,
            "final_objective": state.loss_trace[-1][3],
        },
    }


def _source_index(world: World, tokens):
    label = "_".join(tokens)
    try:
        return world.x_labels.index(label)
    except ValueError:
        raise ValidationError(f"evaluation sentence {' '.join(tokens)!r} names no source of the world") from None


def default_reference(world: World, i: int) -> int:
    """First other source whose translation row matches i's, else i itself."""
    for j in range(world.n_source):
        if j != i and pib.strict_similarity(world, i, j):
            return j
    return i


def pick_paraphrase(dist: np.ndarray, i: int, margin: float) -> int:
    """Argmax of the soft paraphrase distribution.

    With a positive margin, the source itself is passed over when some other
    source comes within ``margin`` of the top probability.
    """
    best = int(np.argmax(dist))
    if margin > 0 and best == i:
        others = [j for j in range(dist.size) if j != i and dist[j] >= dist[i] - margin]
        if others:
            best = max(others, key=lambda j: (dist[j], -j))
    return best


def cmd_tradeoff_curve(args, units):
    world = load_world(args.world)
    try:
        lambdas = sorted({float(v) for v in args.lambdas.split(",") if v.strip()})
    except ValueError:
        raise ValidationError(f"--lambdas must be comma-separated numbers, got {args.lambdas!r}") from None
    if not lambdas:
        raise ValidationError("--lambdas is empty")
    if args.self_margin < 0:
        raise ValidationError("--self-margin must be >= 0")
    inputs = [args.world]
    if args.eval_corpus:
        paths = [p for p in args.eval_corpus.split(",") if p]
        if len(paths) > 2:
            raise ValidationError("--eval-corpus takes SOURCES[,REFERENCES]")
        inputs += paths
        src_idx = [_source_index(world, s) for s in read_text_corpus(paths[0])]
        if len(paths) == 2:
            ref_idx = [_source_index(world, s) for s in read_text_corpus(paths[1])]
            if len(ref_idx) != len(src_idx):
                raise ValidationError("evaluation sources and references differ in length")
        else:
            ref_idx = [default_reference(world, i) for i in src_idx]
    else:
        src_idx = list(range(world.n_source))
        ref_idx = [default_reference(world, i) for i in src_idx]

    sentence = [em.label_tokens(lab) for lab in world.x_labels]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "i_xt", "i_ty", "bleu", "self_bleu", "ibleu"])
    for lam in lambdas:
        config = _trainer_config(args, lam)
        state = at.train(world, config)
        i_xt, i_ty = at.mi_report(world, state)
        cands = []
        for i in src_idx:
            dist = at.paraphrase_dist_soft(state, i).weights
            cands.append(sentence[pick_paraphrase(dist, i, args.self_margin)])
        corpus = em.ScoredCorpus([sentence[i] for i in src_idx], cands, [sentence[j] for j in ref_idx])
        rep = em.ibleu(corpus, args.alpha)
        log.info("lambda=%g i_xt=%.4f i_ty=%.4f bleu=%.2f self_bleu=%.2f",
                 lam, i_xt, i_ty, rep.bleu, rep.self_bleu)
        w.writerow([repr(lam), repr(units(i_xt)), repr(units(i_ty)),
                    repr(rep.bleu), repr(rep.self_bleu), repr(rep.ibleu)])
    atomic_write(args.out, buf.getvalue())
    config = _trainer_config(args, lambdas[0]).to_dict()
    config.pop("lam")
    config.update(lambdas=lambdas, self_margin=args.self_margin, alpha=args.alpha)
    return {"config": config, "inputs": inputs, "outputs": [args.out], "seed": args.seed}


def cmd_evaluate(args, units):
    if args.bleu is not None or args.self_bleu is not None:
        if args.bleu is None or args.self_bleu is None:
            raise ValidationError("--bleu and --self-bleu go together")
        if not (0 <= args.bleu <= 100 and 0 <= args.self_bleu <= 100):
            raise ValidationError("scores must lie in [0, 100]")
        score = em.ibleu_score(args.bleu, args.self_bleu, args.alpha)
        report = em.MetricReport(args.bleu, args.self_bleu, score, args.alpha)
        inputs = []
        n = None
    else:
        if not (args.sources and args.candidates and args.references):
            raise ValidationError("need --sources, --candidates and --references (or --bleu/--self-bleu)")
        corpus = em.ScoredCorpus(read_text_corpus(args.sources), read_text_corpus(args.candidates),
                                 read_text_corpus(args.references))
        report = em.ibleu(corpus, args.alpha)
        inputs = [args.sources, args.candidates, args.references]
        n = len(corpus)
    doc = {**report.to_dict(), "n_sentences": n}
    atomic_write(args.out, dumps_json(doc))
    return {"config": {"alpha": args.alpha}, "inputs": inputs, "outputs": [args.out]}


def cmd_replay(args, units):
    try:
        doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        argv, cwd = doc["argv"], doc["cwd"]
    except OSError as exc:
        raise IBPLError(f"cannot read manifest: {exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{args.manifest}: not a run manifest ({exc})") from None
    prev = os.getcwd()
    os.chdir(cwd)
    try:
        code = main(argv)
    finally:
        os.chdir(prev)
    if code:
        raise IBPLError(f"replayed command exited with status {code}")
    return None


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ibpl", description="Paraphrase similarity on finite bilingual worlds.")
    p.add_argument("--bits", action="store_true", help="report information quantities in bits")
    p.add_argument("--version", action="version", version=f"ibpl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate-world", help="write a world JSON file")
    g.add_argument("--preset", choices=["confounder"])
    g.add_argument("--n-source", type=int)
    g.add_argument("--n-pivot", type=int)
    g.add_argument("--ambiguity-pairs", default="", help="comma list of a:b:y triples")
    g.add_argument("--concentration", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_world)

    r = sub.add_parser("roundtrip-analyze", help="exact round-trip paraphrase report")
    r.add_argument("--world", required=True)
    r.add_argument("--pivot-mode", choices=["all", "topk"], default="all")
    r.add_argument("--k", type=int)
    r.add_argument("--confound-threshold", type=float, default=0.4)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_roundtrip_analyze)

    s = sub.add_parser("ib-solve", help="deterministic IB partition under a loss budget")
    s.add_argument("--world", required=True)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--method", choices=["exhaustive", "agglomerative"], default="exhaustive")
    s.add_argument("--clusters", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ib_solve)

    def trainer_flags(q):
        d = at.TrainerConfig()
        q.add_argument("--world", required=True)
        q.add_argument("--k-frac", type=float, default=d.k_frac)
        q.add_argument("--steps", type=int, default=d.steps)
        q.add_argument("--lr", type=float, default=d.lr)
        q.add_argument("--clusters", type=int)
        q.add_argument("--seed", type=int, default=d.seed)
        q.add_argument("--mode", choices=["exact", "sampled"], default=d.mode)
        q.add_argument("--init", choices=["copy", "random"], default=d.init)

    t = sub.add_parser("train", help="train the tabular adversarial model")
    trainer_flags(t)
    t.add_argument("--lambda", dest="lam", type=float, default=at.TrainerConfig().lam)
    t.add_argument("--corpus", help="parallel corpus JSON for sampled mode")
    t.add_argument("--out", required=True, help="output prefix")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("tradeoff-curve", help="lambda sweep CSV")
    trainer_flags(c)
    c.add_argument("--lambdas", default=DEFAULT_LAMBDAS)
    c.add_argument("--eval-corpus", help="SOURCES[,REFERENCES] text files, one sentence per line")
    c.add_argument("--self-margin", type=float, default=0.0)
    c.add_argument("--alpha", type=float, default=em.DEFAULT_ALPHA)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_tradeoff_curve)

    e = sub.add_parser("evaluate", help="BLEU, self-BLEU and iBLEU")
    e.add_argument("--sources")
    e.add_argument("--candidates")
    e.add_argument("--references")
    e.add_argument("--bleu", type=float, help="precomputed BLEU instead of corpora")
    e.add_argument("--self-bleu", type=float, help="precomputed self-BLEU instead of corpora")
    e.add_argument("--alpha", type=float, default=em.DEFAULT_ALPHA)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_replay)
    return p


def _setup_logging():
    level = os.environ.get("IBPL_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise _UsageError(f"IBPL_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("ibpl").setLevel(LOG_LEVELS[level])


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    units = _Units(args.bits)
    start = time.perf_counter()
    try:
        info = args.func(args, units)
    except ValidationError as exc:
        print(f"ibpl {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except (IBPLError, OSError) as exc:
        print(f"ibpl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if info is not None:
        manifest_path = info.pop("manifest_path", None) or f"{info['outputs'][0]}.manifest.json"
        manifest = {
            "command": args.command,
            "argv": argv,
            "cwd": os.getcwd(),
            "config": info.get("config", {}),
            "inputs": info.get("inputs", []),
            "outputs": info.get("outputs", []),
            "seed": info.get("seed"),
            "version": __version__,
            "backend": BACKEND,
            "duration_s": round(time.perf_counter() - start, 6),
        }
        if "results" in info:
            manifest["results"] = info["results"]
        atomic_write(manifest_path, dumps_json(manifest))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Tabular adversarial IB training.

A stochastic encoder q(t|x), an MT decoder q(y|t) and an adversarial decoder
q(x|t), each a row-softmax over a logit table. The encoder descends on

    J = lam * L_MT - (1 - lam) * L_Adv

with L_MT = -E[ln sum_t q(t|x) q(y|t)] and L_Adv = -E[ln sum_t q(t|x) q(x|t)].
The MT decoder descends on lam * L_MT. On a fraction K of steps (Bernoulli
per step) only the adversarial decoder moves, by descent on its own L_Adv
with the encoder frozen; J never sends gradient into the adversarial decoder.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import _backend, _pykernels
from .errors import TrainingError, ValidationError
from .partition_ib import Partition
from .prob_core import ProbVector, World, entropy, mutual_information
from .world_gen import ParallelCorpus, sample_corpus

log = logging.getLogger(__name__)

PROB_CLAMP = _pykernels.PROB_CLAMP
MI_EVERY = 100
CONVERGE_WINDOW = 100


def beta_from_lambda(lam: float) -> float:
    """Inverse of lam = beta / (1 + beta); infinite at lam = 1."""
    return math.inf if lam >= 1.0 else lam / (1.0 - lam)


def lambda_from_beta(beta: float) -> float:
    return beta / (1.0 + beta)


@dataclass(frozen=True)
class TrainerConfig:
    lam: float = 0.73
    k_frac: float = 0.7
    lr: float = 0.1
    steps: int = 20_000
    n_clusters: Optional[int] = None  # defaults to |X|
    batch_size: int = 64
    seed: int = 0
    mode: str = "exact"
    init: str = "copy"
    init_scale: float = 0.1
    copy_logit: float = 4.0
    converge_tol: Optional[float] = 1e-9
    sampled_corpus_size: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValidationError(f"lambda must be in (0, 1], got {self.lam}")
        if not 0.0 <= self.k_frac < 1.0:
            raise ValidationError(f"K must be in [0, 1), got {self.k_frac}")
        if not (self.lr >= 0.0 and math.isfinite(self.lr)):
            raise ValidationError("learning rate must be finite and non-negative")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValidationError("n_clusters must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.mode not in ("exact", "sampled"):
            raise ValidationError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.init not in ("copy", "random"):
            raise ValidationError(f"init must be 'copy' or 'random', got {self.init!r}")

    @property
    def beta(self):
        return beta_from_lambda(self.lam)

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class EncoderTable:
    """q(t|x) as the row softmax of an |X| x |T| logit table."""

    logits: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return _pykernels.softmax_rows(self.logits)

    @classmethod
    def from_probs(cls, probs):
        return cls(np.log(np.maximum(np.asarray(probs, dtype=float), PROB_CLAMP)))

    def copy(self):
        return type(self)(self.logits.copy())


class DecoderTable(EncoderTable):
    """q(.|t) as the row softmax of a |T| x (|Y| or |X|) logit table."""


@dataclass(eq=False)
class TrainState:
    encoder: EncoderTable
    mt_decoder: DecoderTable
    adv_decoder: DecoderTable
    x_labels: tuple
    y_labels: tuple
    step: int = 0
    loss_trace: list = field(default_factory=list)  # (step, l_mt, l_adv, objective)
    mi_trace: list = field(default_factory=list)  # (step, i_xt, i_ty)
    adv_steps: int = 0
    converged_step: Optional[int] = None

    @property
    def n_clusters(self):
        return self.encoder.logits.shape[1]

    def copy(self):
        return replace(
            self,
            encoder=self.encoder.copy(), mt_decoder=self.mt_decoder.copy(),
            adv_decoder=self.adv_decoder.copy(),
            loss_trace=list(self.loss_trace), mi_trace=list(self.mi_trace),
        )


class ObjectiveValue(NamedTuple):
    l_mt: float
    l_adv: float
    objective: float
    clamped: bool = False


class Gradients(NamedTuple):
    encoder: np.ndarray  # dJ/d encoder logits
    mt_decoder: np.ndarray  # dJ/d MT-decoder logits (= lam * dL_MT)
    adv_decoder: np.ndarray  # dL_Adv/d adversarial-decoder logits


def expectation_joint(source, n_source=None, n_pivot=None) -> np.ndarray:
    """The P(x, y) table expectations are taken under.

    A World gives its exact joint; a ParallelCorpus gives its empirical joint;
    a 2-d array is used as is.
    """
    if isinstance(source, World):
        return np.asarray(source.joint.mass)
    if isinstance(source, ParallelCorpus):
        nx = n_source or len(source.x_labels)
        ny = n_pivot or len(source.y_labels)
        if not nx or not ny:
            raise ValidationError("corpus without labels needs explicit n_source/n_pivot")
        return source.empirical_joint(nx, ny)
    arr = np.asarray(source, dtype=float)
    if arr.ndim != 2:
        raise ValidationError("joint must be a 2-d table")
    return arr


def init_state(world: World, config: TrainerConfig, rng=None) -> TrainState:
    """Seeded starting tables.

    All logits start as small normal noise. With ``init="copy"`` the encoder
    additionally gets ``copy_logit`` on entry (x, x mod |T|), so training
    starts from an encoder that keeps the source, the way a system warm-started
    from a trained translation model would. From a near-uniform encoder
    (``init="random"``) clusters that receive no mass early never train their
    decoders, and gradient descent tends to stall in coarse partitions.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    nx, ny = world.n_source, world.n_pivot
    nt = config.n_clusters or nx
    s = config.init_scale
    enc = rng.normal(0.0, s, (nx, nt))
    mt = rng.normal(0.0, s, (nt, ny))
    adv = rng.normal(0.0, s, (nt, nx))
    if config.init == "copy":
        enc[np.arange(nx), np.arange(nx) % nt] += config.copy_logit
    return TrainState(
        EncoderTable(enc), DecoderTable(mt), DecoderTable(adv), world.x_labels, world.y_labels,
    )


def objective(source, state: TrainState, lam: float) -> ObjectiveValue:
    joint = expectation_joint(source, len(state.x_labels), len(state.y_labels))
    *_, l_mt, l_adv, clamped = _pykernels.forward(
        state.encoder.logits, state.mt_decoder.logits, state.adv_decoder.logits, joint
    )
    if clamped:
        log.debug("probability underflow clamped at %g", PROB_CLAMP)
    return ObjectiveValue(l_mt, l_adv, lam * l_mt - (1.0 - lam) * l_adv, clamped)


def gradient(source, state: TrainState, lam: float) -> Gradients:
    joint = expectation_joint(source, len(state.x_labels), len(state.y_labels))
    E, D, Q, M, a, *_ = _pykernels.forward(
        state.encoder.logits, state.mt_decoder.logits, state.adv_decoder.logits, joint
    )
    return Gradients(*_pykernels.backward(E, D, Q, M, a, joint, lam))


def _draw_batch(corpus: ParallelCorpus, config: TrainerConfig, rng, nx, ny):
    idx = rng.integers(0, len(corpus), size=config.batch_size)
    pairs = np.asarray(corpus.pairs)[idx]
    joint = np.zeros((nx, ny))
    np.add.at(joint, (pairs[:, 0], pairs[:, 1]), 1.0 / config.batch_size)
    return joint


def train_step(source, state: TrainState, config: TrainerConfig, rng,
               backend: str = "auto") -> TrainState:
    """One step: adversarial-decoder update with probability K, else encoder + MT decoder.

    ``source`` is a World (exact expectations) or a ParallelCorpus (a minibatch
    of ``config.batch_size`` pairs is drawn from ``rng`` after the branch draw).
    """
    nx, ny = len(state.x_labels), len(state.y_labels)
    adversarial = bool(rng.random() < config.k_frac)
    if isinstance(source, ParallelCorpus):
        joint = _draw_batch(source, config, rng, nx, ny)
    else:
        joint = expectation_joint(source)
    new = state.copy()
    trace = np.zeros((1, 3))
    bad = _backend.get(backend).run_steps(
        new.encoder.logits, new.mt_decoder.logits, new.adv_decoder.logits,
        np.ascontiguousarray(joint), np.array([adversarial], dtype=np.uint8),
        float(config.lam), float(config.lr), trace,
    )
    new.step += 1
    new.adv_steps += int(adversarial)
    if bad >= 0:
        raise TrainingError(f"objective became non-finite at step {new.step}", new.step)
    new.loss_trace.append((new.step, *map(float, trace[0])))
    return new


def mi_report(world: World, state: TrainState):
    """Exact (I(X;T), I(T;Y)) for the stochastic encoder."""
    enc = state.encoder.probs
    i_xt = mutual_information(world.p_x[:, None] * enc)
    i_ty = mutual_information(enc.T @ world.joint.mass)
    return i_xt, i_ty


def train(world: World, config: TrainerConfig, corpus: Optional[ParallelCorpus] = None,
          backend: str = "auto") -> TrainState:
    """Run up to ``config.steps`` steps from the seeded initialization.

    Exact mode takes expectations under the world's joint; sampled mode draws
    minibatches from ``corpus`` (sampled from the world with the config seed
    when omitted). Training stops early once the objective moves by less than
    ``converge_tol`` across a 100-step window. I(X;T) and I(T;Y) are recorded
    every 100 steps.
    """
    kern = _backend.get(backend)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    state = init_state(world, config, rng)
    if config.mode == "sampled" and corpus is None:
        corpus = sample_corpus(world, config.sampled_corpus_size, config.seed)
    if corpus is not None:
        corpus.check_against(world)
    W, V, U = state.encoder.logits, state.mt_decoder.logits, state.adv_decoder.logits
    nx, ny = world.n_source, world.n_pivot

    first = objective(world, state, config.lam)
    state.loss_trace.append((0, first.l_mt, first.l_adv, first.objective))
    state.mi_trace.append((0, *mi_report(world, state)))
    exact_joint = np.ascontiguousarray(world.joint.mass)
    window_start = first.objective

    done = 0
    while done < config.steps:
        n = min(MI_EVERY - done % MI_EVERY, config.steps - done)
        trace = np.zeros((n, 3))
        if config.mode == "exact":
            flags = (rng.random(n) < config.k_frac).astype(np.uint8)
            bad = kern.run_steps(W, V, U, exact_joint, flags, float(config.lam), float(config.lr), trace)
        else:
            flags = np.zeros(n, dtype=np.uint8)
            bad = -1
            for s in range(n):
                flags[s] = rng.random() < config.k_frac
                batch = _draw_batch(corpus, config, rng, nx, ny)
                bad = kern.run_steps(W, V, U, batch, flags[s:s + 1], float(config.lam),
                                     float(config.lr), trace[s:s + 1])
                if bad >= 0:
                    bad = s
                    break
        if bad >= 0:
            raise TrainingError(f"objective became non-finite at step {done + bad + 1}", done + bad + 1)
        for s in range(n):
            state.loss_trace.append((done + s + 1, *map(float, trace[s])))
        state.adv_steps += int(flags.sum())
        done += n
        state.step = done
        if done % MI_EVERY == 0 or done == config.steps:
            state.mi_trace.append((done, *mi_report(world, state)))
        if done % CONVERGE_WINDOW == 0:
            current = state.loss_trace[-1][3]
            if config.converge_tol is not None and abs(current - window_start) < config.converge_tol:
                state.converged_step = done
                log.info("converged at step %d (|dJ| < %g over %d steps)",
                         done, config.converge_tol, CONVERGE_WINDOW)
                break
            window_start = current
    return state


def harden_encoder(state: TrainState) -> Partition:
    """Deterministic partition from argmax_t q(t|x), ties to the lowest t."""
    return Partition.from_labels(np.argmax(state.encoder.probs, axis=1).tolist())


def paraphrase_dist_soft(state: TrainState, x_s) -> ProbVector:
    """sum_t q(t|x_s) q_adv(x_p|t) over all sources x_p."""
    i = x_s if isinstance(x_s, (int, np.integer)) else state.x_labels.index(x_s)
    dist = state.encoder.probs[i] @ state.adv_decoder.probs
    return ProbVector(dist / dist.sum(), state.x_labels)


def true_conditionals(world: World, state: TrainState):
    """P(y|t) and P(x|t) implied by the encoder; unused clusters get uniform rows."""
    enc = state.encoder.probs
    joint_ty = enc.T @ world.joint.mass
    joint_tx = (world.p_x[:, None] * enc).T
    pt = joint_tx.sum(axis=1, keepdims=True)
    used = pt[:, 0] > 0
    p_y_t = np.full(joint_ty.shape, 1.0 / joint_ty.shape[1])
    p_x_t = np.full(joint_tx.shape, 1.0 / joint_tx.shape[1])
    p_y_t[used] = joint_ty[used] / pt[used]
    p_x_t[used] = joint_tx[used] / pt[used]
    return p_y_t, p_x_t


def optimal_decoders(world: World, state: TrainState) -> TrainState:
    """Both decoders set to the exact conditionals, the minimizers of their losses."""
    p_y_t, p_x_t = true_conditionals(world, state)
    new = state.copy()
    new.mt_decoder = DecoderTable.from_probs(p_y_t)
    new.adv_decoder = DecoderTable.from_probs(p_x_t)
    return new


def variational_mt_bound(world: World, state: TrainState) -> float:
    """E_{P(t,y)}[ln q(y|t)] + H(Y), a lower bound on I(T;Y)."""
    enc = state.encoder.probs
    log_dec = np.log(np.maximum(state.mt_decoder.probs, PROB_CLAMP))
    joint_ty = enc.T @ world.joint.mass
    return float(np.sum(joint_ty * log_dec)) + entropy(world.p_y)


# -- serialization -----------------------------------------------------------

def state_to_dict(state: TrainState, config: TrainerConfig, world_name: str) -> dict:
    return {
        "world_name": world_name,
        "config": config.to_dict(),
        "x_labels": list(state.x_labels),
        "y_labels": list(state.y_labels),
        "step": state.step,
        "encoder_logits": state.encoder.logits.tolist(),
        "mt_decoder_logits": state.mt_decoder.logits.tolist(),
        "adv_decoder_logits": state.adv_decoder.logits.tolist(),
    }


def state_from_dict(doc: dict):
    """Returns (state, config, world_name)."""
    try:
        state = TrainState(
            EncoderTable(np.asarray(doc["encoder_logits"], dtype=float)),
            DecoderTable(np.asarray(doc["mt_decoder_logits"], dtype=float)),
            DecoderTable(np.asarray(doc["adv_decoder_logits"], dtype=float)),
            tuple(doc["x_labels"]), tuple(doc["y_labels"]), int(doc.get("step", 0)),
        )
        return state, TrainerConfig(**doc["config"]), doc["world_name"]
    except KeyError as exc:
        raise ValidationError(f"model document missing key {exc}") from None


def trace_csv(state: TrainState, to_unit=lambda v: v) -> str:
    """Loss trace as CSV; MI columns are filled every 100 steps and blank otherwise."""
    mi = {s: (a, b) for s, a, b in state.mi_trace}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "l_mt", "l_adv", "objective", "i_xt", "i_ty"])
    for step, l_mt, l_adv, obj in state.loss_trace:
        row = [step, repr(l_mt), repr(l_adv), repr(obj)]
        if step in mi:
            row += [repr(to_unit(mi[step][0])), repr(to_unit(mi[step][1]))]
        else:
            row += ["", ""]
        w.writerow(row)
    return buf.getvalue()


def dumps_state(state: TrainState, config: TrainerConfig, world_name: str) -> str:
    return json.dumps(state_to_dict(state, config, world_name), indent=2) + "\n"

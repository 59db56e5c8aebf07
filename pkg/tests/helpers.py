"""Shared construction and finite-difference helpers for the trainer tests."""

import numpy as np

from conftest import random_world
from ibpl.adversarial_trainer import DecoderTable, EncoderTable, TrainState, gradient, objective

FD_H = 1e-5


def make_state(world, enc, mt, adv):
    return TrainState(EncoderTable(np.array(enc, dtype=float)), DecoderTable(np.array(mt, dtype=float)),
                      DecoderTable(np.array(adv, dtype=float)), world.x_labels, world.y_labels)


def random_state(world, n_clusters, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return make_state(world, rng.normal(0, scale, (world.n_source, n_clusters)),
                      rng.normal(0, scale, (n_clusters, world.n_pivot)),
                      rng.normal(0, scale, (n_clusters, world.n_source)))


def one_hot_logits(assignment, n_clusters, big=800.0):
    out = np.full((len(assignment), n_clusters), -big)
    out[np.arange(len(assignment)), assignment] = big
    return out


def _fd(f, arr):
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        keep = arr[idx]
        arr[idx] = keep + FD_H
        up = f()
        arr[idx] = keep - FD_H
        down = f()
        arr[idx] = keep
        out[idx] = (up - down) / (2 * FD_H)
    return out


def _rel_err(analytic, numeric):
    mask = np.maximum(np.abs(analytic), np.abs(numeric)) > 1e-8
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[mask] / np.maximum(np.abs(analytic), np.abs(numeric))[mask]))


GRAD_WORLDS = [
    ("confounder", None, 4),
    ("random-5x7", dict(seed=21, n_source=5, n_pivot=7), 5),
    ("random-4x6-T3", dict(seed=22, n_source=4, n_pivot=6, pairs=((0, 1, 2),)), 3),
]


def max_gradient_error(world, n_clusters, seed, lam=0.73):
    st = random_state(world, n_clusters, seed)
    g = gradient(world, st, lam)
    worst = 0.0
    worst = max(worst, _rel_err(g.encoder, _fd(lambda: objective(world, st, lam).objective, st.encoder.logits)))
    worst = max(worst, _rel_err(g.mt_decoder, _fd(lambda: lam * objective(world, st, lam).l_mt, st.mt_decoder.logits)))
    worst = max(worst, _rel_err(g.adv_decoder, _fd(lambda: objective(world, st, lam).l_adv, st.adv_decoder.logits)))
    return worst


def grad_world(spec, confounder):
    return confounder if spec is None else random_world(**spec)

"""Shared test utilities: random batch construction and finite differences."""

from __future__ import annotations

import numpy as np

from logicalign.losses import LossWeights, forward_backward
from logicalign.model import Batch, EncoderDims, EncoderParams, init_params


def random_batch(rng, n=4, d_img=16, vocab=30, n_neg=3):
    """A synthetic batch with ragged captions and random multi-hot labels."""
    images = rng.normal(size=(n, d_img))
    pos_tokens = [rng.integers(0, vocab, size=rng.integers(3, 9)) for _ in range(n)]
    neg_tokens = [[rng.integers(0, vocab, size=rng.integers(3, 9))
                   for _ in range(n_neg)] for _ in range(n)]
    pos_labels = (rng.random((n, 9)) < 0.3).astype(float)
    neg_labels = [(rng.random((n_neg, 9)) < 0.3).astype(float) for _ in range(n)]
    return Batch(images=images, pos_tokens=pos_tokens, neg_tokens=neg_tokens,
                 pos_labels=pos_labels, neg_labels=neg_labels)


def random_instance(seed, d=8, d_img=16):
    """Params plus batch with the hidden layer and modes varied by seed."""
    rng = np.random.default_rng(seed)
    hidden = int(rng.integers(0, 2)) * 5
    dims = EncoderDims(vocab=30, text_embed=6, joint=d, image=d_img, hidden=hidden)
    params = init_params(dims, seed=seed + 1)
    # Move temperature off its init so its gradient path is exercised at
    # varied scales while staying inside the clamp window.
    params.log_temperature = np.array(rng.uniform(-2.0, 0.5))
    batch = random_batch(rng, n=4, d_img=d_img, n_neg=int(rng.integers(2, 5)))
    weights = LossWeights(alpha=float(rng.uniform(0.5, 4.0)),
                          beta=float(rng.uniform(0.5, 4.0)),
                          gamma=float(rng.uniform(0.5, 4.0)))
    modes = {"raw_cosine": bool(rng.integers(0, 4) == 0),
             "negatives_as_distractors": bool(rng.integers(0, 4) == 0)}
    return params, batch, weights, modes


def flatten_named(tensors: dict) -> np.ndarray:
    keys = sorted(tensors)
    return np.concatenate([np.asarray(tensors[k], dtype=np.float64).ravel()
                           for k in keys])


def set_flat(params: EncoderParams, vec: np.ndarray) -> None:
    keys = sorted(params.named_tensors())
    offset = 0
    for k in keys:
        t = params.named_tensors()[k]
        size = t.size
        t[...] = vec[offset:offset + size].reshape(t.shape)
        offset += size
    assert offset == vec.size


def fd_check(params, batch, weights, modes, h=1e-5, rel_tol=1e-4):
    """Central finite differences on l_total vs the analytic gradient.

    Returns the worst relative error over every parameter coordinate, using
    max(|analytic|, |numeric|, 1e-6) as the denominator.
    """
    _, grads = forward_backward(params, batch, weights, **modes)
    ga = flatten_named(grads)

    base = flatten_named(params.named_tensors())
    work = params.copy()
    gfd = np.zeros_like(base)
    for j in range(base.size):
        for sign, slot in ((+1, 0), (-1, 1)):
            vec = base.copy()
            vec[j] += sign * h
            set_flat(work, vec)
            parts, _ = forward_backward(work, batch, weights,
                                        want_grad=False, **modes)
            if slot == 0:
                plus = parts.l_total
            else:
                minus = parts.l_total
        gfd[j] = (plus - minus) / (2.0 * h)
    set_flat(work, base)

    denom = np.maximum(np.maximum(np.abs(ga), np.abs(gfd)), 1e-6)
    rel = np.abs(ga - gfd) / denom
    return float(rel.max()), ga, gfd

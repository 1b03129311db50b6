"""Three-part training objective and its closed-form gradients.

All gradients here are derived and coded by hand against the forward math; the
finite-difference suite in tests/test_grad.py holds them to a 1e-4 relative
error. The total is always computed as the literal weighted sum of the three
parts so that logged components recompose bit for bit.

Shapes: N images, T captions (N positives first, negatives record-major),
embeddings unit-normalized rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Batch,
    EncoderError,
    EncoderParams,
    _image_preactivation,
    _normalize_rows,
    mean_embeddings,
    stack_token_lists,
    temperature,
    TAU_MIN,
    TAU_MAX,
)


@dataclass
class LossWeights:
    alpha: float = 4.0
    beta: float = 2.0
    gamma: float = 1.0

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass
class LossBreakdown:
    l_clip: float
    l_mc: float
    l_logic: float
    l_total: float
    tau: float = 1.0
    grad_norm: float = None

    def to_dict(self):
        out = {"l_clip": self.l_clip, "l_mc": self.l_mc,
               "l_logic": self.l_logic, "l_total": self.l_total, "tau": self.tau}
        if self.grad_norm is not None:
            out["grad_norm"] = self.grad_norm
        return out


def _log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(_log_softmax(logits, axis=axis))


def cosine_sim_matrix(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Pairwise dot products of unit rows: S[i, j] = cos(v_i, t_j)."""
    V = np.asarray(V)
    T = np.asarray(T)
    if V.ndim != 2 or T.ndim != 2 or V.shape[1] != T.shape[1]:
        raise EncoderError(f"incompatible embedding shapes {V.shape} and {T.shape}")
    return V @ T.T


def loss_clip(S: np.ndarray, tau: float) -> float:
    """Symmetric InfoNCE over a square similarity matrix with diagonal targets."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise EncoderError(f"similarity matrix must be square, got {S.shape}")
    n = S.shape[0]
    if n < 2:
        raise EncoderError("contrastive loss needs at least two pairs")
    logits = S / tau
    diag = np.arange(n)
    row = -_log_softmax(logits, axis=1)[diag, diag]
    col = -_log_softmax(logits, axis=0)[diag, diag]
    return float(0.5 * (row.mean() + col.mean()))


def loss_clip_rect(S: np.ndarray, tau: float) -> float:
    """Image-to-text InfoNCE when extra text columns act as distractors."""
    S = np.asarray(S, dtype=np.float64)
    n, t = S.shape
    if t < n or n < 2:
        raise EncoderError(f"distractor matrix must be (n, t>=n), got {S.shape}")
    diag = np.arange(n)
    row = -_log_softmax(S / tau, axis=1)[diag, diag]
    return float(row.mean())


def _option_ce(cosines: np.ndarray, pos_index: int, tau: float) -> float:
    c = np.asarray(cosines, dtype=np.float64)
    if c.ndim != 1 or c.size < 2:
        raise EncoderError("option scoring needs a flat vector of 2+ cosines")
    if not 0 <= pos_index < c.size:
        raise EncoderError("positive index outside the option list")
    return float(-_log_softmax(c / tau)[pos_index])


def loss_mc(image_vec: np.ndarray, option_embeddings: np.ndarray,
            pos_index: int, tau: float) -> float:
    """Cross entropy over one record's options scored by cosine to the image."""
    v = np.asarray(image_vec, dtype=np.float64).ravel()
    T = np.atleast_2d(np.asarray(option_embeddings, dtype=np.float64))
    if T.shape[1] != v.size:
        raise EncoderError(f"option dim {T.shape[1]} vs image dim {v.size}")
    return _option_ce(T @ v, pos_index, tau)


def _bce_with_logits(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # max(s,0) - s*y + log(1+exp(-|s|)) is the overflow-safe BCE form.
    return np.maximum(scores, 0.0) - scores * labels + np.log1p(np.exp(-np.abs(scores)))


def loss_logic(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean over captions of the mean per-category BCE with logits."""
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if s.shape != y.shape:
        raise EncoderError(f"scores {s.shape} and labels {y.shape} disagree")
    return float(_bce_with_logits(s, y).mean())


def combine(parts: LossBreakdown, weights: LossWeights) -> float:
    return (weights.alpha * parts.l_clip + weights.beta * parts.l_mc
            + weights.gamma * parts.l_logic)


def zero_grads(params: EncoderParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.named_tensors().items()}


def grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def forward_backward(params: EncoderParams, batch: Batch,
                     weights: LossWeights = None, *,
                     raw_cosine: bool = False,
                     negatives_as_distractors: bool = False,
                     want_grad: bool = True):
    """Compute all loss components and, optionally, every parameter gradient.

    Returns (LossBreakdown, grads dict or None). One pass covers the three
    parts so a finite-difference probe of l_total exercises everything.
    """
    weights = weights or LossWeights()
    n = batch.n
    if n < 2:
        raise EncoderError("need at least two records per batch")

    token_lists = batch.all_tokens()
    t_count = len(token_lists)

    # Forward: text path.
    ebar = mean_embeddings(params, token_lists)
    u = ebar @ params.text_projection + params.text_bias
    tm, tnorm = _normalize_rows(u)

    # Forward: image path.
    z, h = _image_preactivation(params, batch.images)
    v, vnorm = _normalize_rows(z)

    tau_raw = float(np.exp(params.log_temperature))
    tau = temperature(params, raw_cosine=raw_cosine)

    # Contrastive part. Distractor mode widens the matrix with every negative
    # caption as an extra column; plain mode is the square symmetric form.
    if negatives_as_distractors:
        S = v @ tm.T                      # (N, T)
        l_clip = loss_clip_rect(S, tau)
    else:
        S = v @ tm[:n].T                  # (N, N)
        l_clip = loss_clip(S, tau)

    # Option-ranking part.
    option_rows = [batch.option_rows(i) for i in range(n)]
    mc_terms = []
    mc_cos = []
    for i, rows in enumerate(option_rows):
        cos = tm[rows] @ v[i]
        mc_cos.append(cos)
        mc_terms.append(_option_ce(cos, 0, tau))
    l_mc = float(np.mean(mc_terms))

    # Category-consistency part, over every caption in the batch.
    y = np.asarray(batch.all_labels(), dtype=np.float64)
    if y.shape != (t_count, 9):
        raise EncoderError(f"expected ({t_count}, 9) labels, got {y.shape}")
    slog = tm @ params.logic_weight + params.logic_bias
    l_logic = loss_logic(slog, y)

    parts = LossBreakdown(l_clip=l_clip, l_mc=l_mc, l_logic=l_logic,
                          l_total=0.0, tau=tau)
    parts.l_total = combine(parts, weights)
    if not want_grad:
        return parts, None

    # ----- backward -----
    dtm = np.zeros_like(tm)
    dv = np.zeros_like(v)
    dtau = 0.0
    grads = zero_grads(params)

    # Contrastive gradients through S and tau.
    if negatives_as_distractors:
        p = _softmax(S / tau, axis=1)
        glogit = p.copy()
        glogit[np.arange(n), np.arange(n)] -= 1.0
        glogit /= n                        # d l_clip / d (S/tau)
        gs = weights.alpha * glogit / tau
        dv += gs @ tm
        dtm += gs.T @ v
        dtau += weights.alpha * float(np.sum(glogit * (-S / tau ** 2)))
    else:
        logits = S / tau
        pr = _softmax(logits, axis=1)
        pc = _softmax(logits, axis=0)
        eye = np.eye(n)
        glogit = (pr + pc - 2.0 * eye) / (2.0 * n)
        gs = weights.alpha * glogit / tau
        dv += gs @ tm[:n]
        dtm[:n] += gs.T @ v
        dtau += weights.alpha * float(np.sum(glogit * (-S / tau ** 2)))

    # Option-ranking gradients, one softmax per record.
    for i, rows in enumerate(option_rows):
        cos = mc_cos[i]
        p = _softmax(cos / tau)
        g = p.copy()
        g[0] -= 1.0
        g /= n                             # mean over records
        dcos = weights.beta * g / tau
        dv[i] += dcos @ tm[rows]
        np.add.at(dtm, rows, dcos[:, None] * v[i][None, :])
        dtau += weights.beta * float(np.sum(g * (-cos / tau ** 2)))

    # Category-consistency gradients.
    sig = 1.0 / (1.0 + np.exp(-slog))
    dslog = weights.gamma * (sig - y) / (9.0 * t_count)
    grads["logic_weight"] += tm.T @ dslog
    grads["logic_bias"] += dslog.sum(axis=0)
    dtm += dslog @ params.logic_weight.T

    # Through the unit normalizations: project out the radial component.
    du = (dtm - tm * np.sum(dtm * tm, axis=1, keepdims=True)) / tnorm
    dz = (dv - v * np.sum(dv * v, axis=1, keepdims=True)) / vnorm

    # Text linear and mean-embedding paths.
    grads["text_projection"] += ebar.T @ du
    grads["text_bias"] += du.sum(axis=0)
    debar = du @ params.text_projection.T
    flat, seg, counts = stack_token_lists(token_lists)
    np.add.at(grads["token_embeddings"], flat, debar[seg] / counts[seg, None])

    # Image path, with or without the hidden layer.
    if params.hidden_weight is not None:
        grads["image_projection"] += h.T @ dz
        grads["image_bias"] += dz.sum(axis=0)
        dh = dz @ params.image_projection.T
        dhpre = dh * (1.0 - h ** 2)
        X = np.asarray(batch.images, dtype=params.dtype)
        grads["hidden_weight"] += X.T @ dhpre
        grads["hidden_bias"] += dhpre.sum(axis=0)
    else:
        X = np.asarray(batch.images, dtype=params.dtype)
        grads["image_projection"] += X.T @ dz
        grads["image_bias"] += dz.sum(axis=0)

    # Temperature is exp-parameterized; a clamped value stops its gradient, as
    # does raw cosine mode where tau is pinned to 1.
    if raw_cosine or not (TAU_MIN < tau_raw < TAU_MAX):
        grads["log_temperature"] += 0.0
    else:
        grads["log_temperature"] += dtau * tau_raw

    parts.grad_norm = grad_norm(grads)
    return parts, grads


def loss_total(params: EncoderParams, batch: Batch,
               weights: LossWeights = None, **modes) -> LossBreakdown:
    parts, _ = forward_backward(params, batch, weights, want_grad=False, **modes)
    return parts


def grad(params: EncoderParams, batch: Batch,
         weights: LossWeights = None, **modes) -> dict:
    _, grads = forward_backward(params, batch, weights, want_grad=True, **modes)
    return grads

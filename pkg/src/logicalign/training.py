"""Training loop: decoupled-weight-decay Adam, warmup schedule, checkpoints.

Everything is deterministic from the config seed: vocabulary order, parameter
init, and the per-epoch shuffle all come from one generator chain, so two runs
with the same inputs produce byte-identical logs and checkpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .losses import LossWeights, forward_backward
from .model import Batch, EncoderDims, EncoderParams, Vocab, init_params
from .taxonomy import default_detector, category_vector

CHECKPOINT_VERSION = "logicalign-checkpoint-v1"

# Objective presets used by the ablation study: which loss parts are on.
PRESETS = {
    "variant1": LossWeights(0.0, 2.0, 0.0),
    "variant2": LossWeights(0.0, 0.0, 1.0),
    "variant3": LossWeights(4.0, 0.0, 0.0),
    "variant4": LossWeights(4.0, 2.0, 0.0),
    "full": LossWeights(4.0, 2.0, 1.0),
}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 16
    batch_size: int = 64
    learning_rate: float = 3e-3
    warmup_steps: int = None        # None: min(1000, total_steps // 10)
    weight_decay: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    raw_cosine: bool = False
    negatives_as_distractors: bool = False
    joint_dim: int = 64
    text_embed_dim: int = 64
    hidden_dim: int = 0
    dtype: str = "float64"

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "epochs", "batch_size", "learning_rate", "warmup_steps",
            "weight_decay", "beta1", "beta2", "eps", "seed", "raw_cosine",
            "negatives_as_distractors", "joint_dim", "text_embed_dim",
            "hidden_dim", "dtype")}
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        w = d.pop("weights", None)
        cfg = cls(**d)
        if w:
            cfg.weights = LossWeights(**w)
        return cfg

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise TrainingError(
                f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return replace(cls(**overrides), weights=PRESETS[name])


@dataclass
class TrainingSet:
    """Tokenized, labeled, feature-extracted view of a corpus, ready to batch."""

    vocab: Vocab
    images: np.ndarray
    pos_tokens: list
    neg_tokens: list
    pos_labels: np.ndarray
    neg_labels: list
    sample_ids: list

    @property
    def n(self):
        return len(self.pos_tokens)

    @property
    def image_dim(self):
        return self.images.shape[1]

    @classmethod
    def from_records(cls, records, vocab: Vocab = None) -> "TrainingSet":
        if not records:
            raise TrainingError("cannot train on an empty corpus")
        if vocab is None:
            texts = []
            for r in records:
                texts.extend(r.options())
            vocab = Vocab.build(texts)
        det = default_detector()
        images, pos_t, neg_t, pos_y, neg_y, ids = [], [], [], [], [], []
        for r in records:
            images.append(r.features())
            pos_t.append(vocab.encode(r.positive))
            neg_t.append([vocab.encode(t) for t in r.negatives])
            pos_y.append(category_vector(det.detect(r.positive)))
            neg_y.append(np.stack([category_vector(det.detect(t))
                                   for t in r.negatives]))
            ids.append(r.sample_id)
        return cls(vocab=vocab, images=np.stack(images), pos_tokens=pos_t,
                   neg_tokens=neg_t, pos_labels=np.stack(pos_y),
                   neg_labels=neg_y, sample_ids=ids)

    def batch(self, idx: np.ndarray) -> Batch:
        return Batch(
            images=self.images[idx],
            pos_tokens=[self.pos_tokens[i] for i in idx],
            neg_tokens=[self.neg_tokens[i] for i in idx],
            pos_labels=self.pos_labels[idx],
            neg_labels=[self.neg_labels[i] for i in idx],
        )


class AdamW:
    """Adam with bias correction and decoupled weight decay on matrices only."""

    def __init__(self, params: EncoderParams, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.2):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        tensors = params.named_tensors()
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.decayed = {k for k in tensors if k in EncoderParams.DECAYED}

    def step(self, params: EncoderParams, grads: dict, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        tensors = params.named_tensors()
        for k, p in tensors.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            if k in self.decayed:
                p[...] -= lr * self.weight_decay * p
            p[...] -= lr * mhat / (np.sqrt(vhat) + self.eps)


def warmup_lr(step: int, peak: float, warmup_steps: int) -> float:
    """Linear ramp to the peak over warmup_steps, then constant. 1-indexed."""
    if warmup_steps <= 0 or step >= warmup_steps:
        return peak
    return peak * step / warmup_steps


@dataclass
class TrainResult:
    params: EncoderParams
    vocab: Vocab
    dims: EncoderDims
    config: TrainConfig
    log: list                   # one dict per step
    initial_loss: float = None
    final_loss: float = None


def train(config: TrainConfig, records) -> TrainResult:
    trainset = TrainingSet.from_records(records)
    return train_prepared(config, trainset)


def train_prepared(config: TrainConfig, trainset: TrainingSet) -> TrainResult:
    dtype = np.float32 if config.dtype == "float32" else np.float64
    dims = EncoderDims(vocab=len(trainset.vocab),
                       text_embed=config.text_embed_dim,
                       joint=config.joint_dim,
                       image=trainset.image_dim,
                       hidden=config.hidden_dim)
    params = init_params(dims, seed=config.seed, dtype=dtype)
    n = trainset.n
    # Batches of fewer than 2 records cannot feed the contrastive term.
    if n < 2:
        raise TrainingError("need at least two records to train")
    # A trailing batch of one record cannot feed the contrastive term; drop it.
    per_epoch = n // config.batch_size + (1 if n % config.batch_size >= 2 else 0)
    total_steps = per_epoch * config.epochs
    warmup = config.warmup_steps
    if warmup is None:
        warmup = min(1000, total_steps // 10)

    opt = AdamW(params, beta1=config.beta1, beta2=config.beta2,
                eps=config.eps, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    log = []
    step = 0
    initial = final = None
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for b in range(per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            if len(idx) < 2:
                continue
            batch = trainset.batch(idx)
            step += 1
            lr = warmup_lr(step, config.learning_rate, warmup)
            parts, grads = forward_backward(
                params, batch, config.weights,
                raw_cosine=config.raw_cosine,
                negatives_as_distractors=config.negatives_as_distractors)
            if not math.isfinite(parts.l_total):
                raise TrainingError(
                    f"non-finite loss at step {step}: {parts.to_dict()}")
            # The logged total must recompose from its logged parts exactly.
            recomposed = (config.weights.alpha * parts.l_clip
                          + config.weights.beta * parts.l_mc
                          + config.weights.gamma * parts.l_logic)
            if recomposed != parts.l_total:
                raise TrainingError(f"loss decomposition broke at step {step}")
            opt.step(params, grads, lr)
            entry = {"step": step, "l_clip": parts.l_clip, "l_mc": parts.l_mc,
                     "l_logic": parts.l_logic, "l_total": parts.l_total,
                     "grad_norm": parts.grad_norm, "lr": lr, "tau": parts.tau}
            log.append(entry)
            if initial is None:
                initial = parts.l_total
            final = parts.l_total
    return TrainResult(params=params, vocab=trainset.vocab, dims=dims,
                       config=config, log=log,
                       initial_loss=initial, final_loss=final)


def write_step_log(path, log) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in log:
            f.write(json.dumps(entry, separators=(",", ":")) + "\n")


def read_step_log(path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_checkpoint(path, result: TrainResult) -> None:
    """One .npz holding every tensor plus JSON-encoded vocab, dims, config."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "dims": result.dims.to_dict(),
        "config": result.config.to_dict(),
        "vocab": result.vocab.tokens,
    }
    arrays = {f"tensor_{k}": v for k, v in result.params.named_tensors().items()}
    arrays["meta_json"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)


def load_checkpoint(path) -> TrainResult:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise TrainingError(
                f"unsupported checkpoint version {meta.get('version')!r}")
        tensors = {k[len("tensor_"):]: data[k] for k in data.files
                   if k.startswith("tensor_")}
    params = EncoderParams(**tensors)
    return TrainResult(
        params=params,
        vocab=Vocab(tokens=meta["vocab"]),
        dims=EncoderDims(**meta["dims"]),
        config=TrainConfig.from_dict(meta["config"]),
        log=[],
    )

"""Dual-encoder parameters and the text/image encoding paths.

Both encoders end in unit normalization, so similarities are plain dot
products. The text side is an order-free bag of tokens: mean embedding, linear
projection, normalize. The image side projects hashed scene features, with an
optional tanh hidden layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .taxonomy import tokenize

TAU_MIN = 0.01
TAU_MAX = 100.0
TAU_INIT = 0.07

UNK_TOKEN = "<unk>"


class EncoderError(ValueError):
    pass


@dataclass
class EncoderDims:
    vocab: int
    text_embed: int = 64
    joint: int = 64
    image: int = 128
    hidden: int = 0          # 0 disables the image-side hidden layer

    def to_dict(self):
        return {"vocab": self.vocab, "text_embed": self.text_embed,
                "joint": self.joint, "image": self.image, "hidden": self.hidden}


@dataclass
class EncoderParams:
    token_embeddings: np.ndarray      # (V, d_e)
    text_projection: np.ndarray       # (d_e, d)
    text_bias: np.ndarray             # (d,)
    image_projection: np.ndarray      # (d_img, d) or (h, d) with a hidden layer
    image_bias: np.ndarray            # (d,)
    logic_weight: np.ndarray          # (d, 9)
    logic_bias: np.ndarray            # (9,)
    log_temperature: np.ndarray       # scalar array
    hidden_weight: np.ndarray = None  # (d_img, h) when hidden enabled
    hidden_bias: np.ndarray = None    # (h,)

    def named_tensors(self) -> dict:
        out = {
            "token_embeddings": self.token_embeddings,
            "text_projection": self.text_projection,
            "text_bias": self.text_bias,
            "image_projection": self.image_projection,
            "image_bias": self.image_bias,
            "logic_weight": self.logic_weight,
            "logic_bias": self.logic_bias,
            "log_temperature": self.log_temperature,
        }
        if self.hidden_weight is not None:
            out["hidden_weight"] = self.hidden_weight
            out["hidden_bias"] = self.hidden_bias
        return out

    # Weight decay applies to matrices only, never to biases or temperature.
    DECAYED = ("token_embeddings", "text_projection", "image_projection",
               "logic_weight", "hidden_weight")

    def copy(self) -> "EncoderParams":
        kw = {k: v.copy() for k, v in self.named_tensors().items()}
        return EncoderParams(**kw)

    @property
    def dtype(self):
        return self.token_embeddings.dtype


def init_params(dims: EncoderDims, seed: int = 0, dtype=np.float64) -> EncoderParams:
    """Uniform init scaled by fan-in; temperature starts at the usual 0.07."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(dtype)

    image_in = dims.hidden if dims.hidden else dims.image
    hidden_weight = hidden_bias = None
    if dims.hidden:
        hidden_weight = uniform((dims.image, dims.hidden), dims.image)
        hidden_bias = np.zeros(dims.hidden, dtype=dtype)
    return EncoderParams(
        token_embeddings=uniform((dims.vocab, dims.text_embed), dims.text_embed),
        text_projection=uniform((dims.text_embed, dims.joint), dims.text_embed),
        text_bias=np.zeros(dims.joint, dtype=dtype),
        image_projection=uniform((image_in, dims.joint), image_in),
        image_bias=np.zeros(dims.joint, dtype=dtype),
        logic_weight=uniform((dims.joint, 9), dims.joint),
        logic_bias=np.zeros(9, dtype=dtype),
        log_temperature=np.array(np.log(TAU_INIT), dtype=dtype),
        hidden_weight=hidden_weight,
        hidden_bias=hidden_bias,
    )


def temperature(params: EncoderParams, raw_cosine: bool = False) -> float:
    """Clamped temperature; 1.0 when raw cosine mode disables scaling."""
    if raw_cosine:
        return 1.0
    return float(np.clip(np.exp(params.log_temperature), TAU_MIN, TAU_MAX))


@dataclass
class Vocab:
    """Closed token vocabulary; id 0 is the unknown token."""

    tokens: list = field(default_factory=lambda: [UNK_TOKEN])

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK_TOKEN:
            raise EncoderError("vocabulary must start with the unknown token")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def build(cls, texts) -> "Vocab":
        seen = set()
        for t in texts:
            seen.update(tokenize(t))
        return cls(tokens=[UNK_TOKEN] + sorted(seen))

    def encode(self, text: str) -> np.ndarray:
        toks = tokenize(text)
        if not toks:
            raise EncoderError(f"caption has no word tokens: {text!r}")
        return np.array([self.index.get(t, 0) for t in toks], dtype=np.int64)


def stack_token_lists(token_lists):
    """Flatten ragged token id lists for vectorized mean-embedding math."""
    counts = np.array([len(t) for t in token_lists], dtype=np.int64)
    if len(counts) == 0:
        raise EncoderError("empty batch of captions")
    if np.any(counts == 0):
        raise EncoderError("caption with no tokens in batch")
    flat = np.concatenate([np.asarray(t, dtype=np.int64) for t in token_lists])
    seg = np.repeat(np.arange(len(token_lists)), counts)
    return flat, seg, counts


def mean_embeddings(params: EncoderParams, token_lists) -> np.ndarray:
    flat, seg, counts = stack_token_lists(token_lists)
    if flat.size and flat.max() >= params.token_embeddings.shape[0]:
        raise EncoderError("token id outside vocabulary")
    out = np.zeros((len(token_lists), params.token_embeddings.shape[1]),
                   dtype=params.dtype)
    np.add.at(out, seg, params.token_embeddings[flat])
    return out / counts[:, None]


def _normalize_rows(M: np.ndarray):
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise EncoderError("zero-norm embedding; cannot normalize")
    return M / norms, norms


def encode_texts(params: EncoderParams, token_lists) -> np.ndarray:
    """Unit-norm text embeddings for a list of token id arrays."""
    ebar = mean_embeddings(params, token_lists)
    u = ebar @ params.text_projection + params.text_bias
    t, _ = _normalize_rows(u)
    return t


def _image_preactivation(params: EncoderParams, X: np.ndarray):
    X = np.asarray(X, dtype=params.dtype)
    if X.ndim != 2:
        raise EncoderError(f"expected (n, d_img) features, got shape {X.shape}")
    if params.hidden_weight is not None:
        hpre = X @ params.hidden_weight + params.hidden_bias
        h = np.tanh(hpre)
        return h @ params.image_projection + params.image_bias, h
    return X @ params.image_projection + params.image_bias, None


def encode_images(params: EncoderParams, X) -> np.ndarray:
    """Unit-norm image embeddings for a feature matrix."""
    z, _ = _image_preactivation(params, np.atleast_2d(np.asarray(X)))
    v, _ = _normalize_rows(z)
    return v


def logic_scores(params: EncoderParams, text_embeddings: np.ndarray) -> np.ndarray:
    """Raw multi-label category logits from unit text embeddings."""
    return text_embeddings @ params.logic_weight + params.logic_bias


@dataclass
class Batch:
    """One training batch: images, token ids, and per-caption category labels."""

    images: np.ndarray        # (N, d_img)
    pos_tokens: list          # N token id arrays
    neg_tokens: list          # N lists of token id arrays
    pos_labels: np.ndarray    # (N, 9) multi-hot
    neg_labels: list          # N arrays of shape (len(negs), 9)

    def __post_init__(self):
        n = len(self.pos_tokens)
        if self.images.shape[0] != n or len(self.neg_tokens) != n:
            raise EncoderError("batch fields disagree on record count")

    @property
    def n(self):
        return len(self.pos_tokens)

    def all_tokens(self) -> list:
        """Positives first, then negatives record-major; order drives indexing."""
        out = list(self.pos_tokens)
        for negs in self.neg_tokens:
            out.extend(negs)
        return out

    def all_labels(self) -> np.ndarray:
        parts = [self.pos_labels] + [l for l in self.neg_labels if len(l)]
        return np.concatenate(parts, axis=0)

    def option_rows(self, i: int) -> np.ndarray:
        """Text row indices of record i's options, positive first."""
        offset = self.n + sum(len(t) for t in self.neg_tokens[:i])
        return np.array([i] + list(range(offset, offset + len(self.neg_tokens[i]))),
                        dtype=np.int64)

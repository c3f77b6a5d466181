"""Frozen, seeded stand-ins for a pretrained text/image encoder pair.

The text encoder is a tiny transformer (default 2 layers, 2 heads) over
token embeddings, mean-pooled, projected and L2-normalized; it is fully
differentiable with respect to its *input* sequence so gradients reach
learnable prompt vectors, while its own weights never change. The image
encoder is a small feed-forward network over raw feature vectors; no
gradient ever flows through it, so it runs on plain numpy.

All weights are a pure function of the spec plus its seed (Gaussian,
std 0.02; image-encoder biases 0.01 so the zero vector still maps to a
well-defined unit embedding).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

WEIGHT_STD = 0.02


class UnknownTokenError(KeyError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"token not in vocabulary: {token!r}")


@dataclass(frozen=True)
class TextEncoderSpec:
    vocabulary: tuple[str, ...]
    token_dim: int = 32
    layers: int = 2
    heads: int = 2
    hidden_dim: int = 64
    out_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("vocabulary contains duplicate tokens")
        if self.token_dim % self.heads != 0:
            raise ValueError("token_dim must be divisible by heads")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vocabulary"] = list(self.vocabulary)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TextEncoderSpec":
        d = dict(d)
        d["vocabulary"] = tuple(d["vocabulary"])
        return cls(**d)


@dataclass(frozen=True)
class ImageEncoderSpec:
    in_dim: int = 16
    hidden_dims: tuple[int, ...] = (64,)
    out_dim: int = 32
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageEncoderSpec":
        d = dict(d)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


def save_spec(spec: TextEncoderSpec | ImageEncoderSpec, path) -> None:
    kind = "text" if isinstance(spec, TextEncoderSpec) else "image"
    with open(path, "w") as fh:
        json.dump({"kind": kind, "spec": spec.to_dict()}, fh, indent=2)


def load_spec(path) -> TextEncoderSpec | ImageEncoderSpec:
    with open(path) as fh:
        doc = json.load(fh)
    cls = TextEncoderSpec if doc["kind"] == "text" else ImageEncoderSpec
    return cls.from_dict(doc["spec"])


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sine/cosine position table so token order matters."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table


class TextEncoder:
    """Frozen transformer over token-embedding sequences."""

    def __init__(self, spec: TextEncoderSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        d, h = spec.token_dim, spec.hidden_dim

        def draw(*shape):
            return rng.normal(0.0, WEIGHT_STD, size=shape)

        self.token_table = draw(len(spec.vocabulary), d)
        self._token_index = {tok: i for i, tok in enumerate(spec.vocabulary)}
        self.blocks = []
        for _ in range(spec.layers):
            self.blocks.append(
                {
                    "wq": draw(d, d),
                    "wk": draw(d, d),
                    "wv": draw(d, d),
                    "wo": draw(d, d),
                    "w1": draw(d, h),
                    "b1": draw(h),
                    "w2": draw(h, d),
                    "b2": draw(d),
                }
            )
        self.w_proj = draw(d, spec.out_dim)
        self.b_proj = draw(spec.out_dim)
        for arr in self.weight_arrays():
            arr.setflags(write=False)

    def weight_arrays(self) -> list[np.ndarray]:
        arrays = [self.token_table]
        for block in self.blocks:
            arrays.extend(block[k] for k in sorted(block))
        arrays.extend([self.w_proj, self.b_proj])
        return arrays

    def weight_bytes(self) -> bytes:
        return b"".join(arr.tobytes() for arr in self.weight_arrays())

    def token_embedding(self, token: str) -> Tensor:
        """Frozen embedding row for one vocabulary token."""
        if token not in self._token_index:
            raise UnknownTokenError(token)
        return Tensor(self.token_table[self._token_index[token]])

    def token_sequence(self, tokens: Sequence[str]) -> np.ndarray:
        rows = []
        for token in tokens:
            if token not in self._token_index:
                raise UnknownTokenError(token)
            rows.append(self.token_table[self._token_index[token]])
        return np.stack(rows)

    def encode(self, sequence: Tensor | np.ndarray) -> Tensor:
        """Map (L, D) or (B, L, D) token embeddings to unit embeddings.

        Differentiable with respect to the input sequence; the weights
        themselves are constants.
        """
        x = sequence if isinstance(sequence, Tensor) else Tensor(sequence)
        single = x.ndim == 2
        if single:
            x = ad.reshape(x, (1,) + x.shape)
        if x.shape[-1] != self.spec.token_dim:
            raise ad.ShapeMismatchError("encode_text", x.shape, ("...", self.spec.token_dim))
        batch, length, d = x.shape
        heads = self.spec.heads
        head_dim = d // heads

        x = x + Tensor(sinusoidal_positions(length, d))
        for block in self.blocks:
            q = self._split_heads(x @ Tensor(block["wq"]), heads, head_dim)
            k = self._split_heads(x @ Tensor(block["wk"]), heads, head_dim)
            v = self._split_heads(x @ Tensor(block["wv"]), heads, head_dim)
            scores = (q @ ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(head_dim))
            attended = ad.softmax(scores, axis=-1) @ v
            merged = ad.reshape(
                ad.transpose(attended, (0, 2, 1, 3)), (batch, length, d)
            )
            x = ad.layer_norm(x + merged @ Tensor(block["wo"]))
            hidden = ad.tanh(x @ Tensor(block["w1"]) + Tensor(block["b1"]))
            x = ad.layer_norm(x + hidden @ Tensor(block["w2"]) + Tensor(block["b2"]))

        pooled = ad.mean(x, axis=1)
        projected = pooled @ Tensor(self.w_proj) + Tensor(self.b_proj)
        out = ad.l2_normalize(projected)
        if single:
            out = ad.reshape(out, (self.spec.out_dim,))
        return out

    @staticmethod
    def _split_heads(x: Tensor, heads: int, head_dim: int) -> Tensor:
        batch, length, _ = x.shape
        return ad.transpose(
            ad.reshape(x, (batch, length, heads, head_dim)), (0, 2, 1, 3)
        )


class ImageEncoder:
    """Frozen feed-forward map from raw features to unit embeddings."""

    def __init__(self, spec: ImageEncoderSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        dims = [spec.in_dim, *spec.hidden_dims, spec.out_dim]
        self.weights = [
            rng.normal(0.0, WEIGHT_STD, size=(a, b)) for a, b in zip(dims, dims[1:])
        ]
        self.biases = [np.full(b, 0.01) for b in dims[1:]]
        for arr in self.weight_arrays():
            arr.setflags(write=False)

    def weight_arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def weight_bytes(self) -> bytes:
        return b"".join(arr.tobytes() for arr in self.weight_arrays())

    def encode(self, features: np.ndarray) -> np.ndarray:
        """Map (in_dim,) or (B, in_dim) features to unit embeddings."""
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.spec.in_dim:
            raise ad.ShapeMismatchError("encode_image", x.shape, (self.spec.in_dim,))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.tanh(x @ w + b)
        x = x @ self.weights[-1] + self.biases[-1]
        norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
        if np.any(norm == 0.0):
            raise ad.NonFiniteError("encode_image")
        return x / norm

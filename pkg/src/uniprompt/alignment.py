"""Instance-level image-text alignment.

The probability of class c for an image from domain d is a temperature
softmax over every (domain tag, class) prompt pair, where the entry for
pair (a, j) in the denominator of component c is additionally inflated
by the stored negative semantic distance between textual classes j and
c under domain d:

    P[c] = exp(sim(text[d, c], img) / sigma)
           / sum_{a, j} exp((sim(text[a, j], img) + lam * M_d[j, c]) / sigma)

At lam = 0 this is the plain softmax over all prompt pairs. The memory
bank M_d holds 1 - cosine similarity between the class prompt embeddings
of domain d and is treated as a constant between refreshes. The instance
loss is the mean negative log-probability of the true class over a
labeled batch; pseudo-labels keep a target sample only when its maximum
zero-lam probability strictly exceeds the confidence threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import TextEncoder
from .prompts import PromptConfig, PromptParams, prompt_embedding_matrix


@dataclass
class MemoryBank:
    """Per-domain matrices of negative semantic distances between classes."""

    matrices: dict[str, np.ndarray]
    refresh_epoch: int = 0

    def matrix(self, domain_tag: str) -> np.ndarray:
        return self.matrices[domain_tag]


@dataclass
class PseudoLabelSet:
    """Accepted (sample id, class, confidence) triples, one per id."""

    entries: list[tuple[str, int, float]]
    threshold: float

    def __post_init__(self):
        ids = [e[0] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample ids in pseudo-label set")
        for sample_id, _, conf in self.entries:
            if not conf > self.threshold:
                raise ValueError(
                    f"confidence {conf} for {sample_id!r} does not exceed "
                    f"threshold {self.threshold}"
                )

    def labels(self) -> dict[str, int]:
        return {sample_id: cls for sample_id, cls, _ in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


def detached(params: PromptParams) -> PromptParams:
    """Constant view of the prompt parameters (no tape is built)."""
    return PromptParams(
        v=None if params.v is None else Tensor(params.v.values),
        t=None if params.t is None else Tensor(params.t.values),
    )


def refresh_memory_bank(
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    epoch: int = 0,
) -> MemoryBank:
    """Rebuild every per-domain matrix of 1 - cos(text_i, text_j).

    The result is exactly symmetric with a zero diagonal and entries
    clipped to [0, 2] (unit embeddings put cosines in [-1, 1]).
    """
    matrix = prompt_embedding_matrix(detached(params), config, encoder).values
    n_classes = config.num_classes
    matrices: dict[str, np.ndarray] = {}
    for a, tag in enumerate(config.domain_tags):
        block = matrix[a * n_classes : (a + 1) * n_classes]
        dist = 1.0 - block @ block.T
        dist = 0.5 * (dist + dist.T)
        np.fill_diagonal(dist, 0.0)
        matrices[tag] = np.clip(dist, 0.0, 2.0)
    return MemoryBank(matrices=matrices, refresh_epoch=epoch)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if np.any(norm == 0.0):
        raise ValueError("cannot take cosine similarity with a zero embedding")
    return x / norm


def _check_knobs(lam: float, sigma: float, bank: MemoryBank | None) -> None:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam > 0 and bank is None:
        raise ValueError("lam > 0 requires a refreshed memory bank")


def class_probabilities(
    image_embedding: np.ndarray,
    domain_tag: str,
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    lam: float,
    sigma: float,
    bank: MemoryBank | None = None,
    prompt_matrix: Tensor | None = None,
) -> Tensor:
    """Probability-like vector over the known classes for one sample.

    Differentiable with respect to the prompt parameters (through the
    prompt matrix); the image embedding and the bank are constants.
    """
    _check_knobs(lam, sigma, bank)
    if prompt_matrix is None:
        prompt_matrix = prompt_embedding_matrix(params, config, encoder)
    n_classes, n_tags = config.num_classes, config.num_tags
    tag = config.tag_index(domain_tag)

    img = _unit_rows(np.asarray(image_embedding, dtype=np.float64).reshape(1, -1))
    sims = ad.reshape(prompt_matrix @ Tensor(img.T), (n_tags * n_classes,))
    shift = float(sims.values.max())
    z = (sims - shift) * (1.0 / sigma)
    e = ad.exp(z)
    if lam > 0:
        weights = np.exp(lam * bank.matrix(domain_tag) / sigma)  # (j, c)
    else:
        weights = np.ones((n_classes, n_classes))
    pair_sums = ad.reshape(ad.tensor_sum(ad.reshape(e, (n_tags, n_classes)), axis=0), (1, n_classes))
    denom = ad.reshape(pair_sums @ Tensor(weights), (n_classes,))
    numer = e[tag * n_classes : (tag + 1) * n_classes]
    return numer / denom


def class_probability_rows(
    image_embeddings: np.ndarray,
    tag_indices: np.ndarray,
    config: PromptConfig,
    prompt_matrix: Tensor,
    lam: float,
    sigma: float,
    bank: MemoryBank | None = None,
) -> Tensor:
    """Batched probability vectors, one row per sample.

    Row i uses the domain tag (and bank matrix) of sample i. Returns a
    (B, num_classes) tensor on the same tape as `prompt_matrix`.
    """
    _check_knobs(lam, sigma, bank)
    n_classes, n_tags = config.num_classes, config.num_tags
    tag_indices = np.asarray(tag_indices, dtype=np.intp)
    batch = len(tag_indices)

    img = _unit_rows(image_embeddings)
    sims = Tensor(img) @ ad.transpose(prompt_matrix, (1, 0))  # (B, A*C)
    shift = sims.values.max(axis=1, keepdims=True)
    z = (sims - Tensor(shift)) * (1.0 / sigma)
    e = ad.exp(z)
    pair_sums = ad.tensor_sum(ad.reshape(e, (batch, n_tags, n_classes)), axis=1)

    chunks: list[Tensor] = []
    order: list[np.ndarray] = []
    for tag in sorted(set(tag_indices.tolist())):
        rows = np.flatnonzero(tag_indices == tag)
        order.append(rows)
        if lam > 0:
            weights = np.exp(lam * bank.matrix(config.domain_tags[tag]) / sigma)
            denom = pair_sums[rows] @ Tensor(weights)
        else:
            denom = ad.tensor_sum(pair_sums[rows], axis=1, keepdims=True)
        numer = e[rows, tag * n_classes : (tag + 1) * n_classes]
        chunks.append(numer / denom)

    stacked = chunks[0] if len(chunks) == 1 else ad.concat(chunks, axis=0)
    permutation = np.concatenate(order)
    if np.array_equal(permutation, np.arange(batch)):
        return stacked
    return stacked[np.argsort(permutation, kind="stable")]


def instance_loss(
    batch: Iterable[tuple[np.ndarray, int, str]],
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    lam: float,
    sigma: float,
    bank: MemoryBank | None = None,
    prompt_matrix: Tensor | None = None,
) -> Tensor:
    """Mean negative log-probability of the true class over a batch."""
    triples = list(batch)
    if not triples:
        raise ValueError("instance loss of an empty batch")
    _check_knobs(lam, sigma, bank)
    if prompt_matrix is None:
        prompt_matrix = prompt_embedding_matrix(params, config, encoder)
    n_classes, n_tags = config.num_classes, config.num_tags

    embeddings = np.stack([np.asarray(e, dtype=np.float64) for e, _, _ in triples])
    labels = np.array([label for _, label, _ in triples], dtype=np.intp)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError("label outside the known class range")
    tag_indices = np.array([config.tag_index(tag) for _, _, tag in triples], dtype=np.intp)

    img = _unit_rows(embeddings)
    sims = Tensor(img) @ ad.transpose(prompt_matrix, (1, 0))  # (B, A*C)
    shift = sims.values.max(axis=1, keepdims=True)
    z = (sims - Tensor(shift)) * (1.0 / sigma)
    e = ad.exp(z)

    if lam > 0:
        weight_cols = np.stack(
            [bank.matrix(config.domain_tags[t])[:, y] for t, y in zip(tag_indices, labels)]
        )  # (B, C): column y_i of the sample's bank
        weights = np.exp(
            lam * np.tile(weight_cols, (1, n_tags)) / sigma
        )  # (B, A*C), bank term repeats over domain tags
    else:
        weights = np.ones((len(triples), n_tags * n_classes))
    denom = ad.tensor_sum(e * Tensor(weights), axis=1)
    true_z = ad.take_per_row(z, tag_indices * n_classes + labels)
    return ad.mean(ad.log(denom) - true_z)


def assign_pseudo_labels(
    sample_ids: Sequence[str],
    image_embeddings: np.ndarray,
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    tau: float,
    sigma: float,
    prompt_matrix: Tensor | None = None,
) -> PseudoLabelSet:
    """Confident zero-lam predictions on target samples.

    A sample is kept iff its maximum class probability under the target
    domain tag strictly exceeds tau; argmax ties break to the lowest
    class index.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if prompt_matrix is None:
        prompt_matrix = prompt_embedding_matrix(detached(params), config, encoder)
    probs = _target_probability_rows(image_embeddings, config, prompt_matrix, sigma)
    entries: list[tuple[str, int, float]] = []
    for sample_id, row in zip(sample_ids, probs):
        best = int(np.argmax(row))
        confidence = float(row[best])
        if confidence > tau:
            entries.append((sample_id, best, confidence))
    return PseudoLabelSet(entries=entries, threshold=tau)


def max_target_probabilities(
    image_embeddings: np.ndarray,
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    sigma: float,
    prompt_matrix: Tensor | None = None,
) -> np.ndarray:
    """Per-sample maximum zero-lam class probability (target domain tag)."""
    if prompt_matrix is None:
        prompt_matrix = prompt_embedding_matrix(detached(params), config, encoder)
    return _target_probability_rows(image_embeddings, config, prompt_matrix, sigma).max(axis=1)


def _target_probability_rows(
    image_embeddings: np.ndarray,
    config: PromptConfig,
    prompt_matrix: Tensor,
    sigma: float,
) -> np.ndarray:
    """Plain-numpy zero-lam probability rows under the target tag."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    matrix = prompt_matrix.values
    n_classes = config.num_classes
    tag = config.tag_index(config.target_tag)
    img = _unit_rows(image_embeddings)
    sims = img @ matrix.T
    z = (sims - sims.max(axis=1, keepdims=True)) / sigma
    e = np.exp(z)
    return e[:, tag * n_classes : (tag + 1) * n_classes] / e.sum(axis=1, keepdims=True)


# inspection dumps ---------------------------------------------------------


def bank_to_csv(bank: MemoryBank, directory) -> list[str]:
    """One CSV per domain tag; returns the written paths."""
    import os

    paths = []
    for tag, matrix in sorted(bank.matrices.items()):
        path = os.path.join(str(directory), f"memory_bank_{tag}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in matrix:
                writer.writerow([repr(float(x)) for x in row])
        paths.append(path)
    return paths


def pseudo_labels_to_csv(labels: PseudoLabelSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "confidence"])
        for sample_id, cls, conf in labels.entries:
            writer.writerow([sample_id, cls, repr(float(conf))])

"""Energy-based unknown-sample modeling.

A sample's energy score combines its (frozen) negative Euclidean
distances to the known-class prototypes with its (learnable) class
probabilities:

    S = -log sum_c exp(phi_c + p_c)

so samples close to a prototype or confidently classified get low
scores. The margin loss hinges source and low-confidence-target scores
against a margin M in one of two sign conventions:

    literal:    sum max(0, S_src - M) + sum max(0, S_tgt + M)
    separating: sum max(0, S_src + M) + sum max(0, M - S_tgt)

`separating` pushes unknown-like targets ABOVE the sources and pairs
with the threshold delta = mean + 2 * std of the source scores;
`literal` keeps the printed signs, pairing with delta = mean - 2 * std.
Either way the decision rule is "score strictly above delta means
UNKNOWN".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .metrics import UNKNOWN

MODES = ("literal", "separating")


@dataclass
class Prototypes:
    """Per-class mean image embeddings with their sample counts."""

    m: np.ndarray  # (num_classes, out_dim)
    n: np.ndarray  # (num_classes,)


@dataclass
class EnergyStats:
    """Source-score statistics and the unknown-decision threshold."""

    u_s: float
    sigma_s: float
    delta: float
    mode: str

    def is_unknown(self, score: float) -> bool:
        return score > self.delta


def compute_prototypes(
    samples: Iterable[tuple[np.ndarray, int]], num_classes: int
) -> Prototypes:
    """Arithmetic mean embedding per known class.

    Every class in [0, num_classes) must appear at least once.
    """
    sums: np.ndarray | None = None
    counts = np.zeros(num_classes, dtype=np.int64)
    for embedding, label in samples:
        embedding = np.asarray(embedding, dtype=np.float64)
        if sums is None:
            sums = np.zeros((num_classes, embedding.shape[-1]))
        if not 0 <= label < num_classes:
            raise ValueError(f"label {label} outside known class range")
        sums[label] += embedding
        counts[label] += 1
    missing = np.flatnonzero(counts == 0)
    if sums is None or missing.size:
        names = ", ".join(str(c) for c in missing) if sums is not None else "all"
        raise ValueError(f"no source samples for class(es): {names}")
    return Prototypes(m=sums / counts[:, None], n=counts)


def feature_similarity(image_embedding: np.ndarray, prototypes: Prototypes) -> np.ndarray:
    """Negative Euclidean distance to each class prototype."""
    embedding = np.asarray(image_embedding, dtype=np.float64)
    if embedding.shape[-1] != prototypes.m.shape[-1]:
        raise ad.ShapeMismatchError(
            "feature_similarity", embedding.shape, prototypes.m.shape
        )
    delta = embedding[..., None, :] - prototypes.m
    return -np.sqrt((delta * delta).sum(axis=-1))


def energy_score(phi, probabilities) -> Tensor:
    """S = -log sum_c exp(phi_c + p_c), as a stable log-sum-exp."""
    phi_t = phi if isinstance(phi, Tensor) else Tensor(np.asarray(phi, dtype=np.float64))
    p_t = (
        probabilities
        if isinstance(probabilities, Tensor)
        else Tensor(np.asarray(probabilities, dtype=np.float64))
    )
    if phi_t.shape != p_t.shape:
        raise ad.ShapeMismatchError("energy_score", phi_t.shape, p_t.shape)
    return -ad.logsumexp(phi_t + p_t, axis=-1)


def margin_loss(source_scores, target_scores, margin: float, mode: str) -> Tensor:
    """Hinge the two score populations against the margin (summed)."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    total = Tensor(0.0)
    source = _as_score_tensor(source_scores)
    target = _as_score_tensor(target_scores)
    if source is not None:
        sign = -margin if mode == "literal" else margin
        total = total + ad.tensor_sum(ad.relu(source + sign))
    if target is not None:
        if mode == "literal":
            total = total + ad.tensor_sum(ad.relu(target + margin))
        else:
            total = total + ad.tensor_sum(ad.relu(margin - target))
    return total


def _as_score_tensor(scores) -> Tensor | None:
    if isinstance(scores, Tensor):
        return scores if scores.values.size else None
    values = np.asarray(list(scores), dtype=np.float64)
    return Tensor(values) if values.size else None


def unknown_threshold(source_scores, mode: str) -> EnergyStats:
    """Mean/population-std source statistics and the decision threshold."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    values = np.asarray(list(source_scores), dtype=np.float64)
    if values.size < 2:
        raise ValueError("need at least 2 source scores for the threshold")
    u = float(values.mean())
    sigma = float(values.std())  # population
    delta = u - 2.0 * sigma if mode == "literal" else u + 2.0 * sigma
    return EnergyStats(u_s=u, sigma_s=sigma, delta=delta, mode=mode)


def classify_target(
    image_embedding: np.ndarray,
    domain_tag: str,
    params,
    config,
    encoder,
    prototypes: Prototypes,
    stats: EnergyStats,
    sigma: float,
    prompt_matrix: Tensor | None = None,
):
    """Known-class index, or UNKNOWN when the energy score exceeds delta.

    Probabilities are zero-lam at inference; argmax ties break to the
    lowest class index; a score exactly at delta stays on the known path.
    """
    from .alignment import class_probabilities, detached

    p = class_probabilities(
        image_embedding,
        domain_tag,
        None if params is None else detached(params),
        config,
        encoder,
        lam=0.0,
        sigma=sigma,
        prompt_matrix=prompt_matrix,
    ).values
    phi = feature_similarity(image_embedding, prototypes)
    score = float(energy_score(phi, p).values)
    if stats.is_unknown(score):
        return UNKNOWN
    return int(np.argmax(p))


def energy_scores_batch(phi_rows: np.ndarray, probability_rows: Tensor) -> Tensor:
    """Row-wise energy scores for precomputed phi and probability rows."""
    phi_t = Tensor(np.asarray(phi_rows, dtype=np.float64))
    if phi_t.shape != probability_rows.shape:
        raise ad.ShapeMismatchError(
            "energy_score", phi_t.shape, probability_rows.shape
        )
    return -ad.logsumexp(phi_t + probability_rows, axis=-1)


def scores_to_csv(rows: list[tuple[str, str, float, str]], path) -> None:
    """Energy-score export: (sample id, domain, score, decision) rows."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "score", "decision"])
        for sample_id, domain, score, decision in rows:
            writer.writerow([sample_id, domain, repr(float(score)), decision])

"""Experiment orchestration: training loop, evaluation, ablations, sweeps.

Each epoch: refresh the memory bank when due, recompute prototypes and
source energy statistics, assign pseudo-labels on the target (strictly
above the confidence threshold) and collect low-confidence targets
(strictly below it), then iterate seeded mini-batches. A batch mixes
source samples with the epoch's pseudo-labeled targets for the instance
loss, and hinges the batch's source scores against its low-confidence
target scores for the margin loss. Only the prompt vectors receive SGD
updates; encoders and data never change.

Total loss per step: instance + margin_weight * margin. A run is a pure
function of its configuration, so repeated executions byte-match.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import alignment, prompts, synthbench, uncertainty
from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .encoders import ImageEncoder, ImageEncoderSpec, TextEncoder, TextEncoderSpec
from .metrics import (
    UNKNOWN,
    MetricsReport,
    accuracy_decomposition,
    config_fingerprint,
    h_score,
    roc_auc,
)
from .prompts import PromptConfig, PromptParams
from .synthbench import TARGET_TAG, Benchmark, BenchmarkSpec

SWEEPABLE = ("neg_weight", "margin", "pseudo_threshold", "margin_weight", "m1m2")

ABLATION_VARIANTS = (
    "baseline",            # conventional instance loss only
    "negative_semantics",  # + bank-weighted instance loss
    "full",                # + margin loss
    "no_class_context",    # drop per-class context vectors
    "template_only",       # drop class context and domain vectors
)


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: BenchmarkSpec = field(default_factory=lambda: synthbench.preset("default"))
    benchmark_path: str | None = None  # load an exported dataset instead
    m1: int = 16
    m2: int = 16
    negate_foreign_source_privates: bool = False
    use_class_context: bool = True
    use_domain_vectors: bool = True
    pseudo_threshold: float = 0.4
    neg_weight: float = 0.03
    temperature: float = 0.01
    margin: float = 8.0
    margin_weight: float = 0.1
    mode: str = "separating"
    learning_rate: float = 5e-4
    batch_size: int = 32
    epochs: int = 50
    bank_refresh_epochs: int = 1
    seed: int = 0
    runs: int = 3
    lr_schedule: str = "constant"
    phi_scale: float = 1.0
    token_dim: int = 32
    out_dim: int = 32
    text_layers: int = 2
    text_heads: int = 2
    text_hidden_dim: int = 64
    image_hidden_dims: tuple[int, ...] = (64,)
    encoder_seed: int = 0

    def __post_init__(self):
        if self.mode not in uncertainty.MODES:
            raise ValueError(f"mode must be one of {uncertainty.MODES}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.batch_size < 1 or self.epochs < 0 or self.runs < 1:
            raise ValueError("batch_size/epochs/runs out of range")
        if self.bank_refresh_epochs < 1:
            raise ValueError("bank_refresh_epochs must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["benchmark"] = self.benchmark.to_dict()
        d["image_hidden_dims"] = list(self.image_hidden_dims)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        d = dict(raw)
        bench = d.get("benchmark", {})
        if isinstance(bench, dict):
            bench = dict(bench)
            name = bench.pop("preset", None)
            if name is not None:
                spec = synthbench.preset(name)
                if bench:
                    spec = dataclasses.replace(spec, **_spec_overrides(bench))
            elif bench:
                spec = BenchmarkSpec.from_dict(bench)
            else:
                spec = synthbench.preset("default")
            d["benchmark"] = spec
        if "image_hidden_dims" in d:
            d["image_hidden_dims"] = tuple(d["image_hidden_dims"])
        return cls(**d)

    def fingerprint(self) -> str:
        return config_fingerprint(self.to_dict())


def _spec_overrides(raw: dict) -> dict:
    out = dict(raw)
    if "private_per_source" in out:
        out["private_per_source"] = tuple(out["private_per_source"])
    if isinstance(out.get("domain_shift"), dict):
        out["domain_shift"] = synthbench.DomainShift(**out["domain_shift"])
    return out


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# wiring ------------------------------------------------------------------------


@dataclass
class Experiment:
    """Benchmark, frozen encoders, and precomputed image embeddings."""

    config: ExperimentConfig
    benchmark: Benchmark
    text_encoder: TextEncoder
    image_encoder: ImageEncoder
    source_ids: list[str]
    source_embeddings: np.ndarray  # (Ns, out_dim)
    source_labels: np.ndarray      # (Ns,) known-class indices
    source_tag_indices: np.ndarray  # (Ns,) into prompt_config.domain_tags
    target_ids: list[str]
    target_embeddings: np.ndarray  # (Nt, out_dim)

    def prompt_config(self, config: ExperimentConfig | None = None) -> PromptConfig:
        config = config or self.config
        spec = self.benchmark.spec
        owners: list[str | None] = [None] * spec.num_known
        for n in range(spec.num_sources):
            for cls in spec.source_classes(n):
                if cls >= spec.common_classes:
                    owners[cls] = f"source{n + 1}"
        return PromptConfig(
            class_names=self.benchmark.known_class_names,
            domain_tags=spec.domain_tags,
            target_tag=TARGET_TAG,
            m1=config.m1,
            m2=config.m2,
            private_class_owner=tuple(owners),
            negate_foreign_source_privates=config.negate_foreign_source_privates,
            use_class_context=config.use_class_context,
            use_domain_vectors=config.use_domain_vectors,
            seed=config.seed,
        )


def build_experiment(config: ExperimentConfig) -> Experiment:
    if config.benchmark_path is not None:
        bench = synthbench.load_benchmark(config.benchmark_path)
    else:
        bench = synthbench.generate(config.benchmark)
    spec = bench.spec

    prompt_config_probe = PromptConfig(
        class_names=bench.known_class_names,
        domain_tags=spec.domain_tags,
        target_tag=TARGET_TAG,
        m1=config.m1,
        m2=config.m2,
        seed=config.seed,
    )
    text_encoder = TextEncoder(
        TextEncoderSpec(
            vocabulary=prompt_config_probe.vocabulary(),
            token_dim=config.token_dim,
            layers=config.text_layers,
            heads=config.text_heads,
            hidden_dim=config.text_hidden_dim,
            out_dim=config.out_dim,
            seed=config.encoder_seed,
        )
    )
    image_encoder = ImageEncoder(
        ImageEncoderSpec(
            in_dim=spec.feature_dim,
            hidden_dims=config.image_hidden_dims,
            out_dim=config.out_dim,
            seed=config.encoder_seed,
        )
    )
    if text_encoder.spec.out_dim != image_encoder.spec.out_dim:
        raise ad.ShapeMismatchError(
            "experiment wiring",
            (text_encoder.spec.out_dim,),
            (image_encoder.spec.out_dim,),
        )

    source = bench.source_samples()
    tag_to_index = {tag: i for i, tag in enumerate(spec.domain_tags)}
    experiment = Experiment(
        config=config,
        benchmark=bench,
        text_encoder=text_encoder,
        image_encoder=image_encoder,
        source_ids=[s.id for s in source],
        source_embeddings=image_encoder.encode(np.stack([s.features for s in source])),
        source_labels=np.array([s.true_label for s in source], dtype=np.intp),
        source_tag_indices=np.array(
            [tag_to_index[s.domain_tag] for s in source], dtype=np.intp
        ),
        target_ids=[s.id for s in bench.target_samples()],
        target_embeddings=image_encoder.encode(
            np.stack([s.features for s in bench.target_samples()])
        ),
    )
    return experiment


# training -----------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    l_inst: float
    l_margin: float
    l_total: float
    pseudo_count: int
    low_conf_count: int
    bank_refreshed: bool
    u_s: float
    sigma_s: float
    delta: float


@dataclass
class RunLog:
    run_index: int
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    report: MetricsReport | None = None

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "l_inst", "l_margin", "l_total", "pseudo_count",
                 "low_conf_count", "bank_refreshed", "u_s", "sigma_s", "delta"]
            )
            for r in self.epochs:
                writer.writerow(
                    [r.epoch, repr(r.l_inst), repr(r.l_margin), repr(r.l_total),
                     r.pseudo_count, r.low_conf_count, int(r.bank_refreshed),
                     repr(r.u_s), repr(r.sigma_s), repr(r.delta)]
                )


def run_seed(base_seed: int, run_index: int) -> int:
    return base_seed + 1000003 * run_index


def _source_energy_scores(
    experiment: Experiment,
    prompt_config: PromptConfig,
    matrix_values: np.ndarray,
    prototypes: uncertainty.Prototypes,
    config: ExperimentConfig,
) -> np.ndarray:
    """Zero-lam energy scores of every source sample (own domain tag)."""
    probs = alignment.class_probability_rows(
        experiment.source_embeddings,
        experiment.source_tag_indices,
        prompt_config,
        Tensor(matrix_values),
        lam=0.0,
        sigma=config.temperature,
    ).values
    phi = config.phi_scale * uncertainty.feature_similarity(
        experiment.source_embeddings, prototypes
    )
    return uncertainty.energy_scores_batch(phi, Tensor(probs)).values


def _target_energy_scores(
    experiment: Experiment,
    prompt_config: PromptConfig,
    matrix_values: np.ndarray,
    prototypes: uncertainty.Prototypes,
    config: ExperimentConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-lam probabilities and energy scores of every target sample."""
    probs = alignment._target_probability_rows(
        experiment.target_embeddings, prompt_config, Tensor(matrix_values),
        config.temperature,
    )
    phi = config.phi_scale * uncertainty.feature_similarity(
        experiment.target_embeddings, prototypes
    )
    scores = uncertainty.energy_scores_batch(phi, Tensor(probs)).values
    return probs, scores


def _even_chunks(items: np.ndarray, n_chunks: int) -> list[np.ndarray]:
    return [chunk for chunk in np.array_split(items, n_chunks)]


def train_run(
    config: ExperimentConfig,
    run_index: int = 0,
    experiment: Experiment | None = None,
) -> tuple[PromptParams, RunLog]:
    """One seeded training execution; returns trained prompts and the log."""
    experiment = experiment or build_experiment(config)
    seed = run_seed(config.seed, run_index)
    prompt_config = dataclasses.replace(experiment.prompt_config(config), seed=seed)
    params = prompts.init_params(prompt_config, experiment.text_encoder.spec.token_dim)
    param_set = params.param_set()
    rng = np.random.default_rng(seed)
    log = RunLog(run_index=run_index, seed=seed)

    n_source = len(experiment.source_ids)
    n_batches = max(1, math.ceil(n_source / config.batch_size))
    total_steps = max(1, config.epochs * n_batches)
    alpha = config.margin_weight
    bank: alignment.MemoryBank | None = None
    step = 0

    for epoch in range(config.epochs):
        refreshed = False
        detached_matrix = prompts.prompt_embedding_matrix(
            alignment.detached(params), prompt_config, experiment.text_encoder
        ).values
        if bank is None or epoch % config.bank_refresh_epochs == 0:
            bank = _bank_from_matrix(detached_matrix, prompt_config, epoch)
            refreshed = True

        prototypes = uncertainty.compute_prototypes(
            zip(experiment.source_embeddings, experiment.source_labels),
            prompt_config.num_classes,
        )
        source_scores = _source_energy_scores(
            experiment, prompt_config, detached_matrix, prototypes, config
        )
        stats = uncertainty.unknown_threshold(source_scores, config.mode)

        target_probs, _ = _target_energy_scores(
            experiment, prompt_config, detached_matrix, prototypes, config
        )
        max_probs = target_probs.max(axis=1)
        pseudo_rows = np.flatnonzero(max_probs > config.pseudo_threshold)
        pseudo_classes = target_probs[pseudo_rows].argmax(axis=1)
        low_conf_rows = np.flatnonzero(max_probs < config.pseudo_threshold)

        phi_source = config.phi_scale * uncertainty.feature_similarity(
            experiment.source_embeddings, prototypes
        )
        phi_target = config.phi_scale * uncertainty.feature_similarity(
            experiment.target_embeddings, prototypes
        )

        source_order = rng.permutation(n_source)
        pseudo_order = rng.permutation(len(pseudo_rows))
        low_conf_order = rng.permutation(len(low_conf_rows))
        source_chunks = _even_chunks(source_order, n_batches)
        pseudo_chunks = _even_chunks(pseudo_order, n_batches)
        low_conf_chunks = _even_chunks(low_conf_order, n_batches)

        epoch_inst, epoch_margin, epoch_total = [], [], []
        target_tag_index = prompt_config.tag_index(prompt_config.target_tag)

        for b in range(n_batches):
            src_idx = source_chunks[b]
            pl_idx = pseudo_rows[pseudo_chunks[b]] if len(pseudo_chunks[b]) else np.array([], dtype=np.intp)
            lc_idx = low_conf_rows[low_conf_chunks[b]] if len(low_conf_chunks[b]) else np.array([], dtype=np.intp)
            if len(src_idx) == 0 and len(pl_idx) == 0:
                continue

            param_set.zero_grad()
            matrix = prompts.prompt_embedding_matrix(
                params, prompt_config, experiment.text_encoder
            )

            inst_embeddings = [experiment.source_embeddings[src_idx]]
            inst_labels = [experiment.source_labels[src_idx]]
            inst_tags = [experiment.source_tag_indices[src_idx]]
            if len(pl_idx):
                inst_embeddings.append(experiment.target_embeddings[pl_idx])
                inst_labels.append(pseudo_classes[pseudo_chunks[b]])
                inst_tags.append(np.full(len(pl_idx), target_tag_index, dtype=np.intp))
            embeddings = np.concatenate(inst_embeddings)
            labels = np.concatenate(inst_labels).astype(np.intp)
            tags = np.concatenate(inst_tags).astype(np.intp)

            l_inst = _instance_loss_from_rows(
                embeddings, labels, tags, prompt_config, matrix, config, bank
            )

            if alpha > 0.0:
                margin_embeddings = np.concatenate(
                    [experiment.source_embeddings[src_idx], experiment.target_embeddings[lc_idx]]
                )
                margin_tags = np.concatenate(
                    [experiment.source_tag_indices[src_idx],
                     np.full(len(lc_idx), target_tag_index, dtype=np.intp)]
                )
                probs = alignment.class_probability_rows(
                    margin_embeddings, margin_tags, prompt_config, matrix,
                    lam=config.neg_weight, sigma=config.temperature, bank=bank,
                )
                phi = np.concatenate([phi_source[src_idx], phi_target[lc_idx]])
                scores = uncertainty.energy_scores_batch(phi, probs)
                n_src = len(src_idx)
                l_margin = uncertainty.margin_loss(
                    scores[:n_src], scores[n_src:], config.margin, config.mode
                )
                loss = l_inst + alpha * l_margin
                margin_value = l_margin.item()
            else:
                loss = l_inst
                margin_value = 0.0

            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NonFiniteError(f"loss at epoch {epoch} step {b}")
            loss.backward()

            lr = config.learning_rate
            if config.lr_schedule == "cosine":
                lr *= 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
            for name in param_set.names():
                tensor = param_set[name]
                if tensor.grad is not None:
                    if not np.all(np.isfinite(tensor.grad)):
                        raise NonFiniteError(f"gradient at epoch {epoch} step {b}")
                    tensor.values = tensor.values - lr * tensor.grad
            step += 1

            epoch_inst.append(l_inst.item())
            epoch_margin.append(margin_value)
            epoch_total.append(loss_value)

        log.epochs.append(
            EpochRecord(
                epoch=epoch,
                l_inst=float(np.mean(epoch_inst)) if epoch_inst else 0.0,
                l_margin=float(np.mean(epoch_margin)) if epoch_margin else 0.0,
                l_total=float(np.mean(epoch_total)) if epoch_total else 0.0,
                pseudo_count=int(len(pseudo_rows)),
                low_conf_count=int(len(low_conf_rows)),
                bank_refreshed=refreshed,
                u_s=stats.u_s,
                sigma_s=stats.sigma_s,
                delta=stats.delta,
            )
        )

    return params, log


def _bank_from_matrix(
    matrix_values: np.ndarray, prompt_config: PromptConfig, epoch: int
) -> alignment.MemoryBank:
    n_classes = prompt_config.num_classes
    matrices = {}
    for a, tag in enumerate(prompt_config.domain_tags):
        block = matrix_values[a * n_classes : (a + 1) * n_classes]
        dist = 1.0 - block @ block.T
        dist = 0.5 * (dist + dist.T)
        np.fill_diagonal(dist, 0.0)
        matrices[tag] = np.clip(dist, 0.0, 2.0)
    return alignment.MemoryBank(matrices=matrices, refresh_epoch=epoch)


def _instance_loss_from_rows(
    embeddings: np.ndarray,
    labels: np.ndarray,
    tag_indices: np.ndarray,
    prompt_config: PromptConfig,
    matrix: Tensor,
    config: ExperimentConfig,
    bank: alignment.MemoryBank,
) -> Tensor:
    triples = [
        (embeddings[i], int(labels[i]), prompt_config.domain_tags[tag_indices[i]])
        for i in range(len(labels))
    ]
    return alignment.instance_loss(
        triples,
        None,
        prompt_config,
        None,
        lam=config.neg_weight,
        sigma=config.temperature,
        bank=bank if config.neg_weight > 0 else None,
        prompt_matrix=matrix,
    )


def train(config: ExperimentConfig) -> tuple[PromptParams, RunLog]:
    """Train once with the base seed (run index 0)."""
    return train_run(config, 0)


# evaluation ---------------------------------------------------------------------


@dataclass
class EvaluationArtifacts:
    report: MetricsReport
    score_rows: list[tuple[str, str, float, str]]
    target_scores: dict[str, float]
    target_is_unknown: dict[str, bool]
    stats: uncertainty.EnergyStats


def evaluate_with_artifacts(
    params: PromptParams,
    config: ExperimentConfig,
    experiment: Experiment | None = None,
    prompt_config: PromptConfig | None = None,
) -> EvaluationArtifacts:
    experiment = experiment or build_experiment(config)
    prompt_config = prompt_config or experiment.prompt_config(config)
    matrix = prompts.prompt_embedding_matrix(
        alignment.detached(params), prompt_config, experiment.text_encoder
    ).values

    prototypes = uncertainty.compute_prototypes(
        zip(experiment.source_embeddings, experiment.source_labels),
        prompt_config.num_classes,
    )
    source_scores = _source_energy_scores(
        experiment, prompt_config, matrix, prototypes, config
    )
    stats = uncertainty.unknown_threshold(source_scores, config.mode)

    target_probs, target_scores = _target_energy_scores(
        experiment, prompt_config, matrix, prototypes, config
    )
    argmax = target_probs.argmax(axis=1)
    predictions: dict[str, int | str] = {}
    score_map: dict[str, float] = {}
    rows: list[tuple[str, str, float, str]] = []
    for i, sample_id in enumerate(experiment.target_ids):
        score = float(target_scores[i])
        decision: int | str = UNKNOWN if stats.is_unknown(score) else int(argmax[i])
        predictions[sample_id] = decision
        score_map[sample_id] = score
        rows.append((sample_id, TARGET_TAG, score, str(decision)))
    for i, sample_id in enumerate(experiment.source_ids):
        tag = prompt_config.domain_tags[experiment.source_tag_indices[i]]
        rows.append((sample_id, tag, float(source_scores[i]), "source"))

    truth = experiment.benchmark.ground_truth()
    report = build_report(
        predictions, truth, score_map, stats, config,
        source_scores=source_scores, target_scores=target_scores,
    )
    is_unknown = {k: v == UNKNOWN for k, v in truth.items()}
    return EvaluationArtifacts(
        report=report,
        score_rows=rows,
        target_scores=score_map,
        target_is_unknown=is_unknown,
        stats=stats,
    )


def build_report(
    predictions: dict[str, int | str],
    ground_truth: dict[str, int | str],
    energy_scores: dict[str, float],
    stats: uncertainty.EnergyStats,
    config: ExperimentConfig,
    source_scores: np.ndarray | None = None,
    target_scores: np.ndarray | None = None,
) -> MetricsReport:
    """Assemble the metrics report from predictions and scores.

    In separating mode unknown samples score high, so known-as-positive
    ranking uses the negated energy score; literal mode ranks raw.
    """
    breakdown = accuracy_decomposition(predictions, ground_truth)
    orientation = "negated" if config.mode == "separating" else "raw"
    sign = -1.0 if orientation == "negated" else 1.0
    ranking = {k: sign * v for k, v in energy_scores.items()}
    is_unknown = {k: v == UNKNOWN for k, v in ground_truth.items()}
    auc = roc_auc(ranking, is_unknown)

    quantiles: dict[str, float] = {}
    if target_scores is not None and len(target_scores):
        for q in (10, 25, 50, 75, 90):
            quantiles[f"q{q}"] = float(np.percentile(target_scores, q))
    energy_summary = {
        "u_s": stats.u_s,
        "sigma_s": stats.sigma_s,
        "delta": stats.delta,
        "target_quantiles": quantiles,
    }
    return MetricsReport(
        acc_known=breakdown.acc_known,
        acc_unknown=breakdown.acc_unknown,
        acc_known_pooled=breakdown.acc_known_pooled,
        h_score=h_score(breakdown.acc_known, breakdown.acc_unknown),
        auc=auc,
        auc_orientation=orientation,
        per_class_accuracy=breakdown.per_class,
        energy_summary=energy_summary,
        config_fingerprint=config.fingerprint(),
    )


def evaluate(
    params: PromptParams,
    config: ExperimentConfig,
    experiment: Experiment | None = None,
    prompt_config: PromptConfig | None = None,
) -> MetricsReport:
    return evaluate_with_artifacts(params, config, experiment, prompt_config).report


# multi-run protocols ---------------------------------------------------------------


@dataclass
class VariantResult:
    name: str
    config: ExperimentConfig
    reports: list[MetricsReport]
    logs: list[RunLog]

    def mean(self) -> dict[str, float]:
        return {
            "acc_known": float(np.mean([r.acc_known for r in self.reports])),
            "acc_unknown": float(np.mean([r.acc_unknown for r in self.reports])),
            "h_score": float(np.mean([r.h_score for r in self.reports])),
            "auc": float(np.mean([r.auc for r in self.reports])),
        }


def _max_workers() -> int:
    raw = os.environ.get("UNIPROMPT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_variant(
    name: str, config: ExperimentConfig, experiment: Experiment | None = None
) -> VariantResult:
    """`config.runs` independent seeded runs of train + evaluate."""
    experiment = experiment or build_experiment(config)
    prompt_config = experiment.prompt_config(config)

    def one_run(r: int) -> tuple[MetricsReport, RunLog]:
        params, log = train_run(config, r, experiment)
        report = evaluate(
            params, config, experiment,
            dataclasses.replace(prompt_config, seed=run_seed(config.seed, r)),
        )
        log.report = report
        return report, log

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_run, range(config.runs)))
    else:
        results = [one_run(r) for r in range(config.runs)]
    return VariantResult(
        name=name,
        config=config,
        reports=[r for r, _ in results],
        logs=[l for _, l in results],
    )


def ablation_config(config: ExperimentConfig, variant: str) -> ExperimentConfig:
    if variant == "baseline":
        return dataclasses.replace(config, neg_weight=0.0, margin_weight=0.0)
    if variant == "negative_semantics":
        return dataclasses.replace(config, margin_weight=0.0)
    if variant == "full":
        return config
    if variant == "no_class_context":
        return dataclasses.replace(config, use_class_context=False)
    if variant == "template_only":
        return dataclasses.replace(
            config, use_class_context=False, use_domain_vectors=False
        )
    raise ValueError(
        f"unknown ablation variant {variant!r}; available: {', '.join(ABLATION_VARIANTS)}"
    )


def ablate(
    config: ExperimentConfig, variants: tuple[str, ...] = ABLATION_VARIANTS
) -> list[VariantResult]:
    """One multi-run experiment per variant, shared benchmark and seeds."""
    experiment = build_experiment(config)
    return [
        run_variant(name, ablation_config(config, name), experiment)
        for name in variants
    ]


def sweep(config: ExperimentConfig, param: str, values: list[float]) -> list[VariantResult]:
    """One multi-run experiment per value of a single hyperparameter."""
    if param not in SWEEPABLE:
        raise ValueError(
            f"unknown sweep parameter {param!r}; available: {', '.join(SWEEPABLE)}"
        )
    experiment = build_experiment(config)
    results = []
    for value in values:
        if param == "m1m2":
            variant = dataclasses.replace(config, m1=int(value), m2=int(value))
        else:
            variant = dataclasses.replace(config, **{param: value})
        results.append(run_variant(f"{param}={value}", variant, experiment))
    return results

"""Learnable prompt construction.

Each (class, domain) pair gets a token-embedding sequence

    [a photo of] [v_1..v_M1 for the class] [class-name tokens]
    [, a] or [, not a] [t_1..t_M2 for the domain] [image]

where the v block is per-class learnable context, the t block is
per-domain learnable context shared across classes, and everything
else is frozen vocabulary embeddings. Either learnable block can be
disabled for ablations; with the domain block disabled the literal
domain-tag token fills its slot so the manual template stays intact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tensor
from .encoders import TextEncoder

PREFIX_TOKENS = ("a", "photo", "of")
POSITIVE_MID = (",", "a")
NEGATIVE_MID = (",", "not", "a")
SUFFIX_TOKENS = ("image",)
TEMPLATE_TOKENS = tuple(
    dict.fromkeys(PREFIX_TOKENS + POSITIVE_MID + NEGATIVE_MID + SUFFIX_TOKENS)
)

INIT_STD = 0.02


@dataclass(frozen=True)
class PromptConfig:
    class_names: tuple[str, ...]
    domain_tags: tuple[str, ...]
    target_tag: str
    m1: int = 16
    m2: int = 16
    # owner tag for source-private classes, None for shared classes;
    # drives the negative template when negate_foreign_source_privates is on
    private_class_owner: tuple[str | None, ...] = ()
    negate_foreign_source_privates: bool = False
    use_class_context: bool = True
    use_domain_vectors: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("m1 and m2 must be at least 1")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        if len(set(self.domain_tags)) != len(self.domain_tags):
            raise ValueError("domain tags must be unique")
        if self.target_tag not in self.domain_tags:
            raise ValueError(f"target tag {self.target_tag!r} not in domain tags")
        if self.private_class_owner and len(self.private_class_owner) != len(
            self.class_names
        ):
            raise ValueError("private_class_owner must align with class_names")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_tags(self) -> int:
        return len(self.domain_tags)

    def tag_index(self, tag: str) -> int:
        try:
            return self.domain_tags.index(tag)
        except ValueError:
            raise ValueError(f"unknown domain tag: {tag!r}") from None

    def polarity(self, class_index: int, domain_tag: str) -> str:
        """Template polarity for one (class, domain) pair."""
        if not self.negate_foreign_source_privates or not self.private_class_owner:
            return "positive"
        owner = self.private_class_owner[class_index]
        if owner is not None and domain_tag != owner:
            return "negative"
        return "positive"

    def vocabulary(self) -> tuple[str, ...]:
        """Template words, class-name tokens, and domain tags, deduplicated."""
        tokens: dict[str, None] = dict.fromkeys(TEMPLATE_TOKENS)
        for name in self.class_names:
            for tok in name.split():
                tokens.setdefault(tok, None)
        for tag in self.domain_tags:
            tokens.setdefault(tag, None)
        return tuple(tokens)


@dataclass
class PromptParams:
    """The only learnable state: class context v and domain vectors t."""

    v: Tensor | None  # (num_classes, m1, token_dim)
    t: Tensor | None  # (num_tags, m2, token_dim)

    def param_set(self) -> ParamSet:
        params = ParamSet()
        if self.v is not None:
            params.add("class_context", self.v)
        if self.t is not None:
            params.add("domain_vectors", self.t)
        return params

    def copy(self) -> "PromptParams":
        return PromptParams(
            v=None if self.v is None else Tensor(self.v.values.copy()),
            t=None if self.t is None else Tensor(self.t.values.copy()),
        )


def init_params(config: PromptConfig, token_dim: int) -> PromptParams:
    """Seeded Gaussian initialization of all enabled prompt vectors."""
    rng = np.random.default_rng(config.seed)
    v = t = None
    if config.use_class_context:
        v = Tensor(rng.normal(0.0, INIT_STD, size=(config.num_classes, config.m1, token_dim)))
    if config.use_domain_vectors:
        t = Tensor(rng.normal(0.0, INIT_STD, size=(config.num_tags, config.m2, token_dim)))
    return PromptParams(v=v, t=t)


def save_params(params: PromptParams, path) -> None:
    """Round-trip-exact JSON dump (python float repr preserves all bits)."""
    doc = {
        "class_context": None if params.v is None else params.v.values.tolist(),
        "domain_vectors": None if params.t is None else params.t.values.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path) -> PromptParams:
    with open(path) as fh:
        doc = json.load(fh)
    v = doc["class_context"]
    t = doc["domain_vectors"]
    return PromptParams(
        v=None if v is None else Tensor(np.array(v, dtype=np.float64)),
        t=None if t is None else Tensor(np.array(t, dtype=np.float64)),
    )


def _mid_tokens(polarity: str) -> tuple[str, ...]:
    if polarity == "positive":
        return POSITIVE_MID
    if polarity == "negative":
        return NEGATIVE_MID
    raise ValueError(f"unknown polarity: {polarity!r}")


def prompt_length(config: PromptConfig, class_index: int, polarity: str) -> int:
    """Token count of the assembled sequence for one (class, polarity)."""
    name_len = len(config.class_names[class_index].split())
    length = len(PREFIX_TOKENS) + name_len + len(_mid_tokens(polarity)) + len(SUFFIX_TOKENS)
    if config.use_class_context:
        length += config.m1
    if config.use_domain_vectors:
        length += config.m2
    else:
        length += 1  # literal domain-tag token fills the slot
    return length


def assemble_prompt(
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    class_index: int,
    domain_tag: str,
    polarity: str | None = None,
) -> Tensor:
    """Token-embedding sequence for one (class, domain) prompt.

    Learnable segments are views into PromptParams storage, so
    gradients through the sequence reach v and t directly.
    """
    if not 0 <= class_index < config.num_classes:
        raise ValueError(f"class index {class_index} out of range")
    tag_index = config.tag_index(domain_tag)
    if polarity is None:
        polarity = config.polarity(class_index, domain_tag)

    parts: list[Tensor] = [Tensor(encoder.token_sequence(PREFIX_TOKENS))]
    if config.use_class_context:
        parts.append(params.v[class_index])
    parts.append(
        Tensor(encoder.token_sequence(config.class_names[class_index].split()))
    )
    parts.append(Tensor(encoder.token_sequence(_mid_tokens(polarity))))
    if config.use_domain_vectors:
        parts.append(params.t[tag_index])
    else:
        parts.append(Tensor(encoder.token_sequence([domain_tag])))
    parts.append(Tensor(encoder.token_sequence(SUFFIX_TOKENS)))
    return ad.concat(parts, axis=0)


def text_class_embedding(
    params: PromptParams,
    config: PromptConfig,
    encoder: TextEncoder,
    class_index: int,
    domain_tag: str,
    polarity: str | None = None,
) -> Tensor:
    """Unit text embedding of one assembled prompt."""
    return encoder.encode(
        assemble_prompt(params, config, encoder, class_index, domain_tag, polarity)
    )


def prompt_index(config: PromptConfig, tag_index: int, class_index: int) -> int:
    """Row of the (domain-major) prompt matrix for a (tag, class) pair."""
    return tag_index * config.num_classes + class_index


def _assembly_plan(config: PromptConfig, encoder: TextEncoder):
    """Precomputed constant blocks and index arrays for batched assembly.

    Cached on the encoder: the template embeddings never change for a
    given (config, encoder) pair, only the learnable v/t rows do.
    """
    cache = getattr(encoder, "_assembly_plans", None)
    if cache is None:
        cache = {}
        encoder._assembly_plans = cache
    if config in cache:
        return cache[config]

    n_tags, n_classes = config.num_tags, config.num_classes
    groups: dict[tuple[int, str], list[tuple[int, int, int]]] = {}
    for a, tag in enumerate(config.domain_tags):
        for c in range(n_classes):
            polarity = config.polarity(c, tag)
            name_len = len(config.class_names[c].split())
            groups.setdefault((name_len, polarity), []).append(
                (a, c, prompt_index(config, a, c))
            )

    plan = []
    positions: list[int] = []
    for (_, polarity), members in sorted(groups.items()):
        tag_idx = np.array([m[0] for m in members], dtype=np.intp)
        cls_idx = np.array([m[1] for m in members], dtype=np.intp)
        positions.extend(m[2] for m in members)
        n = len(members)

        def constant_block(rows: np.ndarray, n=n) -> np.ndarray:
            return np.broadcast_to(rows, (n,) + rows.shape)

        name_rows = np.stack(
            [encoder.token_sequence(config.class_names[c].split()) for c in cls_idx]
        )
        tag_rows = None
        if not config.use_domain_vectors:
            tag_rows = np.stack(
                [encoder.token_sequence([config.domain_tags[a]]) for a in tag_idx]
            )
        plan.append(
            {
                "tag_idx": tag_idx,
                "cls_idx": cls_idx,
                "prefix": constant_block(encoder.token_sequence(PREFIX_TOKENS)),
                "names": name_rows,
                "mid": constant_block(encoder.token_sequence(_mid_tokens(polarity))),
                "tags": tag_rows,
                "suffix": constant_block(encoder.token_sequence(SUFFIX_TOKENS)),
            }
        )
    order = np.argsort(np.array(positions, dtype=np.intp))
    identity = bool(np.array_equal(order, np.arange(len(positions))))
    # one uniform group in canonical order: v tiles over tags, t repeats
    # over classes, so gradients flow through cheap reshape-sums
    fast = identity and len(plan) == 1
    cache[config] = (plan, order, identity, fast)
    return cache[config]


def prompt_embedding_matrix(
    params: PromptParams, config: PromptConfig, encoder: TextEncoder
) -> Tensor:
    """Unit text embeddings for every (domain tag, class) prompt.

    Row order is domain-major: row = tag_index * num_classes + class_index.
    Prompts sharing a sequence length are encoded as one batch; rows are
    then gathered back into canonical order, which keeps a full refresh
    (num_tags * num_classes transformer passes) down to a handful of
    batched calls.
    """
    plan, order, identity, fast = _assembly_plan(config, encoder)
    n_tags, n_classes = config.num_tags, config.num_classes

    encoded: list[Tensor] = []
    for group in plan:
        parts: list[Tensor] = [Tensor(group["prefix"])]
        if config.use_class_context:
            if fast:
                tiled = ad.tile_leading(params.v, n_tags)
                parts.append(
                    ad.reshape(tiled, (n_tags * n_classes,) + params.v.shape[1:])
                )
            else:
                parts.append(params.v[group["cls_idx"]])
        parts.append(Tensor(group["names"]))
        parts.append(Tensor(group["mid"]))
        if config.use_domain_vectors:
            if fast:
                parts.append(ad.repeat_rows(params.t, n_classes))
            else:
                parts.append(params.t[group["tag_idx"]])
        else:
            parts.append(Tensor(group["tags"]))
        parts.append(Tensor(group["suffix"]))
        encoded.append(encoder.encode(ad.concat(parts, axis=1)))

    stacked = encoded[0] if len(encoded) == 1 else ad.concat(encoded, axis=0)
    if identity:
        return stacked
    return stacked[order]

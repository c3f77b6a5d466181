"""Seeded synthetic multi-source adaptation problems.

Class means live on a sphere (min-distance rejection keeps them apart);
each domain applies its own seeded affine transform (rotation in a
random plane, log-uniform scale, random translation) and adds isotropic
Gaussian noise, giving a controllable, monotone shift knob. Sources
carry the common classes plus their own private classes; the target
carries the common classes plus target-private classes, which collapse
to UNKNOWN for evaluation.

Global class indices: common classes first, then source privates in
source order, then target privates last — so a known class's global
index doubles as its known-class index.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import UNKNOWN

TARGET_TAG = "target"


@dataclass(frozen=True)
class DomainShift:
    rotation: float = 0.25
    scale: float = 1.15
    translation: float = 0.4
    noise_std: float = 0.25


@dataclass(frozen=True)
class BenchmarkSpec:
    num_sources: int = 3
    common_classes: int = 10
    private_per_source: tuple[int, ...] = (2, 2, 2)
    target_private: int = 5
    samples_per_class: int = 20
    feature_dim: int = 16
    class_separation: float = 3.0
    domain_shift: DomainShift = field(default_factory=DomainShift)
    setting: str = "UniMDA"
    seed: int = 0

    def __post_init__(self):
        if self.num_sources < 1:
            raise ValueError("need at least one source domain")
        if len(self.private_per_source) != self.num_sources:
            raise ValueError("private_per_source must have one entry per source")
        if self.common_classes < 2:
            raise ValueError("need at least 2 common classes")
        if min(self.private_per_source, default=0) < 0 or self.target_private < 0:
            raise ValueError("class counts must be nonnegative")
        if self.setting == "UniMDA":
            if not any(self.private_per_source):
                raise ValueError("UniMDA requires at least one source-private class")
        elif self.setting == "OMDA":
            if any(self.private_per_source):
                raise ValueError("OMDA requires zero source-private classes")
        else:
            raise ValueError(f"unknown setting: {self.setting!r}")

    @property
    def num_known(self) -> int:
        return self.common_classes + sum(self.private_per_source)

    @property
    def num_global(self) -> int:
        return self.num_known + self.target_private

    @property
    def domain_tags(self) -> tuple[str, ...]:
        return (TARGET_TAG,) + tuple(f"source{n + 1}" for n in range(self.num_sources))

    def source_classes(self, n: int) -> tuple[int, ...]:
        """Global label set of source n (common + its privates)."""
        start = self.common_classes + sum(self.private_per_source[:n])
        privates = range(start, start + self.private_per_source[n])
        return tuple(range(self.common_classes)) + tuple(privates)

    def target_classes(self) -> tuple[int, ...]:
        privates = range(self.num_known, self.num_global)
        return tuple(range(self.common_classes)) + tuple(privates)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["private_per_source"] = list(self.private_per_source)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        d = dict(d)
        d["private_per_source"] = tuple(d["private_per_source"])
        if isinstance(d.get("domain_shift"), dict):
            d["domain_shift"] = DomainShift(**d["domain_shift"])
        return cls(**d)


@dataclass
class Sample:
    id: str
    features: np.ndarray
    domain_tag: str
    true_label: int
    eval_label: int | str  # known-class index, or UNKNOWN


@dataclass
class Benchmark:
    spec: BenchmarkSpec
    class_names: tuple[str, ...]
    domains: dict[str, list[Sample]]
    class_means: np.ndarray
    beta: float

    @property
    def known_class_names(self) -> tuple[str, ...]:
        return self.class_names[: self.spec.num_known]

    def source_samples(self) -> list[Sample]:
        out: list[Sample] = []
        for tag in self.spec.domain_tags:
            if tag != TARGET_TAG:
                out.extend(self.domains[tag])
        return out

    def target_samples(self) -> list[Sample]:
        return self.domains[TARGET_TAG]

    def target_training_view(self) -> list[tuple[str, np.ndarray]]:
        """(id, features) pairs only; labels stay withheld."""
        return [(s.id, s.features) for s in self.target_samples()]

    def ground_truth(self) -> dict[str, int | str]:
        return {s.id: s.eval_label for s in self.target_samples()}

    def validate_label_sets(self) -> None:
        """Set-algebra sanity: common/private splits behave as declared."""
        spec = self.spec
        target_set = set(spec.target_classes())
        commons = []
        for n in range(spec.num_sources):
            source_set = set(spec.source_classes(n))
            common_n = source_set & target_set
            private_n = source_set - common_n
            commons.append(common_n)
            assert common_n == set(range(spec.common_classes))
            assert len(private_n) == spec.private_per_source[n]
            tag = f"source{n + 1}"
            observed = {s.true_label for s in self.domains[tag]}
            assert observed == source_set
        assert set.union(*commons) == set(range(spec.common_classes))
        known = set().union(*(spec.source_classes(n) for n in range(spec.num_sources)))
        assert known == set(range(spec.num_known))
        target_privates = {s.true_label for s in self.target_samples()} - known
        assert target_privates == set(range(spec.num_known, spec.num_global))
        for tag, samples in self.domains.items():
            if tag != TARGET_TAG:
                assert all(s.true_label < spec.num_known for s in samples)


def commonness_beta(spec: BenchmarkSpec) -> float:
    """|known ∩ target| / |known ∪ target| over the induced label sets."""
    known = set().union(*(spec.source_classes(n) for n in range(spec.num_sources)))
    target = set(spec.target_classes())
    return len(known & target) / len(known | target)


def _class_means(rng: np.random.Generator, spec: BenchmarkSpec) -> np.ndarray:
    """Means on a sphere, rejecting pairs closer than half the radius."""
    radius = spec.class_separation
    means: list[np.ndarray] = []
    attempts = 0
    while len(means) < spec.num_global:
        attempts += 1
        if attempts > 1000 * spec.num_global:
            raise RuntimeError("could not place class means; separation too tight")
        direction = rng.normal(size=spec.feature_dim)
        point = radius * direction / np.linalg.norm(direction)
        if all(np.linalg.norm(point - m) >= 0.5 * radius for m in means):
            means.append(point)
    return np.stack(means)


def _domain_transform(rng: np.random.Generator, spec: BenchmarkSpec):
    """Seeded affine map: rotation in a random plane, scale, translation."""
    shift = spec.domain_shift
    dim = spec.feature_dim
    basis = rng.normal(size=(2, dim))
    u1 = basis[0] / np.linalg.norm(basis[0])
    u2 = basis[1] - (basis[1] @ u1) * u1
    u2 /= np.linalg.norm(u2)
    theta = shift.rotation
    rotation = (
        np.eye(dim)
        + (np.cos(theta) - 1.0) * (np.outer(u1, u1) + np.outer(u2, u2))
        + np.sin(theta) * (np.outer(u2, u1) - np.outer(u1, u2))
    )
    log_scale = np.log(shift.scale)
    scale = float(np.exp(rng.uniform(-log_scale, log_scale)))
    direction = rng.normal(size=dim)
    translation = shift.translation * direction / np.linalg.norm(direction)
    return lambda x: scale * (rotation @ x) + translation


def generate(spec: BenchmarkSpec) -> Benchmark:
    """Deterministic benchmark: same spec (including seed), same data."""
    seed_seq = np.random.SeedSequence(spec.seed)
    children = seed_seq.spawn(1 + len(spec.domain_tags))
    means = _class_means(np.random.default_rng(children[0]), spec)

    domains: dict[str, list[Sample]] = {}
    for d, tag in enumerate(spec.domain_tags):
        rng = np.random.default_rng(children[1 + d])
        transform = _domain_transform(rng, spec)
        if tag == TARGET_TAG:
            classes = spec.target_classes()
        else:
            classes = spec.source_classes(int(tag.removeprefix("source")) - 1)
        samples: list[Sample] = []
        for cls in classes:
            center = transform(means[cls])
            noise = rng.normal(
                0.0, spec.domain_shift.noise_std, size=(spec.samples_per_class, spec.feature_dim)
            )
            for k in range(spec.samples_per_class):
                eval_label: int | str = cls if cls < spec.num_known else UNKNOWN
                samples.append(
                    Sample(
                        id=f"{tag}-{len(samples):04d}",
                        features=center + noise[k],
                        domain_tag=tag,
                        true_label=cls,
                        eval_label=eval_label,
                    )
                )
        domains[tag] = samples

    names = tuple(f"class{i:02d}" for i in range(spec.num_global))
    bench = Benchmark(
        spec=spec,
        class_names=names,
        domains=domains,
        class_means=means,
        beta=commonness_beta(spec),
    )
    bench.validate_label_sets()
    return bench


# presets --------------------------------------------------------------------

_PRESETS: dict[str, dict] = {
    # 3 sources, 10 common, 2 privates each, 5 unknown target classes
    "default": {},
    # 10 common / 10 unknown, two sources with 5 privates each
    "office31-uni": dict(num_sources=2, private_per_source=(5, 5), target_private=10),
    # 20 known / 11 unknown, halved to 10 / 5, no source privates
    "office31-omda": dict(
        num_sources=2, private_per_source=(0, 0), target_private=5, setting="OMDA"
    ),
    # 10 common, two privates per source, 50 unknown scaled 1/5 to 10
    "officehome-uni": dict(target_private=10),
    # 45 known / 20 unknown scaled 1/5 to 9 / 4, three sources
    "officehome-omda": dict(
        common_classes=9,
        private_per_source=(0, 0, 0),
        target_private=4,
        setting="OMDA",
    ),
    # 100 common / 145 unknown / 50+50 privates scaled 1/10
    "domainnet-uni": dict(num_sources=2, private_per_source=(5, 5), target_private=14),
    # 100 known / 245 unknown scaled 1/10
    "domainnet-omda": dict(
        num_sources=2, private_per_source=(0, 0), target_private=24, setting="OMDA"
    ),
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str) -> BenchmarkSpec:
    """A named spec with proportionally scaled class counts, seed 0."""
    if name not in _PRESETS:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return BenchmarkSpec(**_PRESETS[name])


# CSV export / import ----------------------------------------------------------


def export_benchmark(bench: Benchmark, directory) -> dict[str, str]:
    """Write data.csv (target labels withheld), ground_truth.csv, benchmark.json."""
    directory = str(directory)
    os.makedirs(directory, exist_ok=True)
    dim = bench.spec.feature_dim
    data_path = os.path.join(directory, "data.csv")
    with open(data_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain_tag", "label"] + [f"feature_{i}" for i in range(dim)])
        for tag in bench.spec.domain_tags:
            for s in bench.domains[tag]:
                label = "" if tag == TARGET_TAG else s.true_label
                writer.writerow(
                    [s.id, s.domain_tag, label] + [repr(float(x)) for x in s.features]
                )
    truth_path = os.path.join(directory, "ground_truth.csv")
    with open(truth_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true_label", "eval_label"])
        for tag in bench.spec.domain_tags:
            for s in bench.domains[tag]:
                writer.writerow([s.id, s.true_label, s.eval_label])
    meta_path = os.path.join(directory, "benchmark.json")
    with open(meta_path, "w") as fh:
        json.dump(
            {
                "spec": bench.spec.to_dict(),
                "class_names": list(bench.class_names),
                "beta": bench.beta,
            },
            fh,
            indent=2,
        )
    return {"data": data_path, "ground_truth": truth_path, "meta": meta_path}


def load_benchmark(directory) -> Benchmark:
    directory = str(directory)
    with open(os.path.join(directory, "benchmark.json")) as fh:
        meta = json.load(fh)
    spec = BenchmarkSpec.from_dict(meta["spec"])
    truth: dict[str, tuple[int, int | str]] = {}
    with open(os.path.join(directory, "ground_truth.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            eval_label: int | str = row["eval_label"]
            if eval_label != UNKNOWN:
                eval_label = int(eval_label)
            truth[row["id"]] = (int(row["true_label"]), eval_label)
    domains: dict[str, list[Sample]] = {tag: [] for tag in spec.domain_tags}
    with open(os.path.join(directory, "data.csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        feature_cols = [c for c in reader.fieldnames if c.startswith("feature_")]
        for row in reader:
            true_label, eval_label = truth[row["id"]]
            domains[row["domain_tag"]].append(
                Sample(
                    id=row["id"],
                    features=np.array([float(row[c]) for c in feature_cols]),
                    domain_tag=row["domain_tag"],
                    true_label=true_label,
                    eval_label=eval_label,
                )
            )
    bench = Benchmark(
        spec=spec,
        class_names=tuple(meta["class_names"]),
        domains=domains,
        class_means=np.zeros((spec.num_global, spec.feature_dim)),
        beta=meta["beta"],
    )
    bench.validate_label_sets()
    return bench

"""Sample records, corpus files, and the synthetic corpus builder.

Corpus files are line-delimited JSON records with a sidecar manifest. Every
emitted record is verified against its scene: the positive caption's form must
evaluate true and every negative's form false.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captions import negative_captions, scene_to_caption, truth_eval
from .scenes import DEFAULT_IMAGE_DIM, gen_scene, scene_to_features
from .taxonomy import (
    LogicalCategory,
    category_from_name,
    category_names,
    default_detector,
)

logger = logging.getLogger(__name__)

SCENARIOS = ("image", "video", "anomaly", "medicine")

DEFAULT_SCENARIO_MIX = {"image": 0.4, "video": 0.3, "anomaly": 0.3}

MANIFEST_SUFFIX = ".manifest.json"


class CorpusError(ValueError):
    pass


@dataclass
class SampleRecord:
    """One evaluation item: an image, its true caption, and hard negatives."""

    sample_id: str
    scenario: str
    image_ref: object            # str reference or embedded feature vector
    positive: str
    negatives: list
    categories: frozenset
    option_count: int = 0

    def __post_init__(self):
        if self.option_count == 0:
            self.option_count = 1 + len(self.negatives)
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise CorpusError(f"unknown scenario: {self.scenario!r}")
        if not isinstance(self.positive, str) or not self.positive.strip():
            raise CorpusError(f"record {self.sample_id}: empty positive caption")
        if not self.negatives or any(not isinstance(n, str) or not n.strip() for n in self.negatives):
            raise CorpusError(f"record {self.sample_id}: bad negatives")
        if self.option_count != 1 + len(self.negatives):
            raise CorpusError(
                f"record {self.sample_id}: option_count {self.option_count} "
                f"!= 1 + {len(self.negatives)} negatives")

    def features(self) -> np.ndarray:
        if isinstance(self.image_ref, str):
            raise CorpusError(
                f"record {self.sample_id} carries an external image reference, "
                "not an embedded feature vector")
        return np.asarray(self.image_ref, dtype=np.float64)

    def options(self) -> list:
        """Canonical stored order: positive first, then negatives."""
        return [self.positive] + list(self.negatives)

    def to_dict(self) -> dict:
        ref = self.image_ref
        if not isinstance(ref, str):
            ref = [float(x) for x in np.asarray(ref)]
        return {
            "sample_id": self.sample_id,
            "scenario": self.scenario,
            "image_ref": ref,
            "positive": self.positive,
            "negatives": list(self.negatives),
            "categories": category_names(self.categories),
            "option_count": self.option_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        try:
            return cls(
                sample_id=d["sample_id"],
                scenario=d["scenario"],
                image_ref=d["image_ref"],
                positive=d["positive"],
                negatives=list(d["negatives"]),
                categories=frozenset(category_from_name(c) for c in d["categories"]),
                option_count=d["option_count"],
            )
        except KeyError as e:
            raise CorpusError(f"record missing field {e.args[0]!r}") from None


def dumps_line(obj: dict) -> str:
    """Canonical one-line JSON; identical input dict, identical bytes."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_corpus(path, records, manifest: dict):
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(dumps_line(rec.to_dict()))
    with Path(str(path) + MANIFEST_SUFFIX).open("w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def read_corpus(path):
    """Load records from a corpus file; returns (records, manifest or None)."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(SampleRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {e}") from None
    manifest = None
    mpath = Path(str(path) + MANIFEST_SUFFIX)
    if mpath.exists():
        manifest = json.loads(mpath.read_text("utf-8"))
    return records, manifest


@dataclass
class CorpusConfig:
    n_scenes: int = 100
    seed: int = 0
    scene_offset: int = 0
    image_dim: int = DEFAULT_IMAGE_DIM
    scenario_mix: dict = field(default_factory=lambda: dict(DEFAULT_SCENARIO_MIX))
    category_mix: dict = field(default_factory=dict)   # name -> weight; empty = uniform

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "seed": self.seed,
            "scene_offset": self.scene_offset,
            "image_dim": self.image_dim,
            "scenario_mix": dict(self.scenario_mix),
            "category_mix": dict(self.category_mix),
        }


def _quota_sequence(weights: dict, n: int, rng) -> list:
    """Largest-remainder apportionment of n slots, then a seeded shuffle."""
    keys = sorted(weights)
    total = sum(weights[k] for k in keys)
    if total <= 0:
        raise CorpusError("mix weights must sum to a positive value")
    exact = {k: n * weights[k] / total for k in keys}
    counts = {k: int(exact[k]) for k in keys}
    leftover = n - sum(counts.values())
    for k in sorted(keys, key=lambda k: (-(exact[k] - counts[k]), k))[:leftover]:
        counts[k] += 1
    seq = [k for k in keys for _ in range(counts[k])]
    rng.shuffle(seq)
    return seq


def build_corpus(config: CorpusConfig):
    """Generate records purely from (config, seed); returns (records, manifest)."""
    if config.n_scenes < 0:
        raise CorpusError("n_scenes must be non-negative")
    detector = default_detector()
    rng = np.random.default_rng([config.seed, config.scene_offset, 0x5EED])
    cat_mix = config.category_mix or {c.name.lower(): 1.0 for c in LogicalCategory}
    scen_mix = config.scenario_mix or dict(DEFAULT_SCENARIO_MIX)
    cat_seq = _quota_sequence(cat_mix, config.n_scenes, rng)
    scen_seq = _quota_sequence(scen_mix, config.n_scenes, rng)

    records = []
    by_category = {}
    by_assigned = {}
    by_scenario = {}
    n_captions = 0
    for i in range(config.n_scenes):
        scene_seed = config.seed * 1_000_000 + config.scene_offset + i
        scene = gen_scene(scene_seed)
        category = category_from_name(cat_seq[i])
        scenario = scen_seq[i]
        n_neg = 4 if scenario == "medicine" else 3

        pos_text, pos_form = scene_to_caption(scene, category, template_id=i, truth=True)
        if not truth_eval(scene, pos_form):
            raise CorpusError(
                f"internal: positive caption evaluated false for {scene.scene_id}")
        negs = negative_captions(scene, category, n_neg, start_id=i)
        neg_texts = [t for t, _ in negs]
        if pos_text in neg_texts:
            raise CorpusError(
                f"internal: negative equals positive for {scene.scene_id}")

        feats = scene_to_features(scene, config.image_dim)
        if feats.degenerate:
            logger.warning("skipping degenerate scene %s", scene.scene_id)
            continue
        cats = detector.detect(pos_text)
        rec = SampleRecord(
            sample_id=scene.scene_id,
            scenario=scenario,
            image_ref=feats.values,
            positive=pos_text,
            negatives=neg_texts,
            categories=cats,
        )
        records.append(rec)
        n_captions += rec.option_count
        by_scenario[scenario] = by_scenario.get(scenario, 0) + 1
        by_assigned[cat_seq[i]] = by_assigned.get(cat_seq[i], 0) + 1
        for name in category_names(cats):
            by_category[name] = by_category.get(name, 0) + 1

    manifest = {
        "seed": config.seed,
        "config": config.to_dict(),
        "rule_table_version": detector.rules_version_,
        "counts": {
            "records": len(records),
            "captions": n_captions,
            "positives": len(records),
            "negatives": n_captions - len(records),
            "by_category": dict(sorted(by_category.items())),
            "by_assigned_category": dict(sorted(by_assigned.items())),
            "by_scenario": dict(sorted(by_scenario.items())),
        },
    }
    return records, manifest

"""Synthetic scene specifications and their hashed feature vectors.

A scene is a small symbolic world: objects with attributes, pairwise relations,
a strict event order, causal links between events, and nouns asserted absent.
Captions about a scene stay mechanically decidable against it, and the feature
vector is a stable bag-of-facts hash so image encoders see presence patterns.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_IMAGE_DIM = 128

NOUNS = (
    "cat", "dog", "bird", "horse", "sheep", "cow", "rabbit", "fox",
    "mouse", "frog", "fish", "duck", "owl", "bear", "deer", "goat",
    "hen", "pig", "ball", "lamp", "chair", "table", "book", "cup",
    "plate", "basket", "ladder", "rope", "wheel", "drum", "bell", "kite",
    "boat", "truck", "bike", "car", "fence", "gate", "bench", "tent",
    "flag", "barrel", "crate", "mirror", "clock", "vase", "broom", "bucket",
)

ATTRIBUTES = (
    "red", "blue", "green", "yellow", "white", "black", "brown", "grey",
    "small", "large", "old", "new", "clean", "dirty", "wet", "dry",
    "bright", "dark",
)

SPATIAL_PREDICATES = (
    "beside", "behind", "above", "below", "near",
    "facing", "chasing", "watching", "holding", "touching",
)

# Comparative adjective pairs; the first member is the canonical direction
# stored in scene relations, the second is its opposite surface form.
COMPARATIVES = (
    ("bigger", "smaller"),
    ("taller", "shorter"),
    ("heavier", "lighter"),
    ("faster", "slower"),
    ("older", "newer"),
)

COMPARATIVE_OPPOSITE = {a: b for a, b in COMPARATIVES} | {b: a for a, b in COMPARATIVES}
CANONICAL_COMPARATIVES = tuple(a for a, _ in COMPARATIVES)

# Event id -> past-tense clause used in captions.
EVENTS = {
    "rain_started": "the rain started",
    "ground_got_wet": "the ground got wet",
    "dog_barked": "the dog barked",
    "cat_ran_off": "the cat ran off",
    "lights_came_on": "the lights came on",
    "music_stopped": "the music stopped",
    "door_opened": "the door opened",
    "crowd_cheered": "the crowd cheered",
    "bell_rang": "the bell rang",
    "glass_fell": "the glass fell",
    "car_braked": "the car braked",
    "bird_sang": "the bird sang",
}

EVENT_IDS = tuple(EVENTS)


@dataclass
class SceneSpec:
    """Symbolic scene contents; everything caption truth is decided against."""

    scene_id: str
    objects: list = field(default_factory=list)       # [(noun, [attributes])]
    relations: list = field(default_factory=list)     # [(subject, predicate, object)]
    event_order: list = field(default_factory=list)   # event ids, earliest first
    causal_links: list = field(default_factory=list)  # [(cause event, effect event)]
    excluded: list = field(default_factory=list)      # nouns asserted absent

    def nouns(self) -> list:
        return [n for n, _ in self.objects]

    def has_object(self, noun: str) -> bool:
        return any(n == noun for n, _ in self.objects)

    def has_attribute(self, noun: str, attr: str) -> bool:
        return any(n == noun and attr in attrs for n, attrs in self.objects)

    def facts(self) -> list:
        """Canonical fact strings, the unit of feature hashing.

        Facts are role marginals: object presence, attribute presence,
        per-role relation endpoints, event occurrence, and per-role causal
        endpoints. Marginals keep the fact inventory small and shared
        across scenes, so a caption token can align with the same feature
        bucket in every scene where the underlying fact holds; composite
        keys (full triples, ordered event pairs) would be near-unique per
        scene and act as image identifiers rather than evidence.
        """
        out = []
        for noun, attrs in self.objects:
            out.append(f"obj:{noun}")
            for a in attrs:
                out.append(f"attr:{a}")
        for s, p, o in self.relations:
            out.append(f"rel-s:{p}:{s}")
            out.append(f"rel-o:{p}:{o}")
        for e in self.event_order:
            out.append(f"ev:{e}")
        for c, e in self.causal_links:
            out.append(f"cause-s:{c}")
            out.append(f"cause-o:{e}")
        return out

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "objects": [[n, list(a)] for n, a in self.objects],
            "relations": [list(r) for r in self.relations],
            "event_order": list(self.event_order),
            "causal_links": [list(l) for l in self.causal_links],
            "excluded": list(self.excluded),
        }

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class FeatureVector:
    """Hashed bag-of-facts image feature; unit norm unless degenerate."""

    values: np.ndarray
    degenerate: bool = False


def fnv1a_64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 bytes; stable across platforms and runs."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def gen_scene(seed: int) -> SceneSpec:
    """Deterministically sample a scene; same seed, same scene."""
    rng = np.random.default_rng(seed)
    n_obj = int(rng.integers(2, 7))
    nouns = [NOUNS[i] for i in rng.choice(len(NOUNS), size=n_obj, replace=False)]
    objects = []
    for noun in nouns:
        n_attr = 1 + int(rng.random() < 0.4)
        attrs = [ATTRIBUTES[i] for i in rng.choice(len(ATTRIBUTES), size=n_attr, replace=False)]
        objects.append((noun, attrs))

    # Comparative relations come from a per-scene strict order over the objects,
    # so A-bigger-B and B-bigger-A never coexist.
    order = [nouns[i] for i in rng.permutation(n_obj)]
    relations = []
    n_comp = 1 + int(n_obj >= 3 and rng.random() < 0.5)
    for i in range(min(n_comp, n_obj - 1)):
        adj = CANONICAL_COMPARATIVES[int(rng.integers(len(CANONICAL_COMPARATIVES)))]
        relations.append((order[i], adj, order[i + 1]))
    if rng.random() < 0.5 and len(relations) < 3:
        pred = SPATIAL_PREDICATES[int(rng.integers(len(SPATIAL_PREDICATES)))]
        a, b = rng.choice(n_obj, size=2, replace=False)
        relations.append((nouns[int(a)], pred, nouns[int(b)]))

    n_ev = int(rng.integers(2, 5))
    event_order = [EVENT_IDS[i] for i in rng.choice(len(EVENT_IDS), size=n_ev, replace=False)]

    # Causal links always point forward in the event order; no cycles possible.
    pairs = [(i, j) for i in range(n_ev) for j in range(i + 1, n_ev)]
    n_links = 1 + int(n_ev >= 3 and rng.random() < 0.4)
    picked = rng.choice(len(pairs), size=min(n_links, len(pairs)), replace=False)
    causal_links = [(event_order[pairs[int(k)][0]], event_order[pairs[int(k)][1]]) for k in picked]

    absent = [n for n in NOUNS if n not in nouns]
    n_excl = int(rng.integers(1, 3))
    excluded = [absent[i] for i in rng.choice(len(absent), size=n_excl, replace=False)]

    return SceneSpec(
        scene_id=f"scene-{seed}",
        objects=objects,
        relations=relations,
        event_order=event_order,
        causal_links=causal_links,
        excluded=excluded,
    )


def scene_to_features(scene: SceneSpec, dim: int = DEFAULT_IMAGE_DIM) -> FeatureVector:
    """Hash each scene fact into a dim-wide count vector, then unit-scale it."""
    if dim <= 0:
        raise ValueError(f"feature dimension must be positive, got {dim}")
    v = np.zeros(dim, dtype=np.float64)
    facts = scene.facts()
    for fact in facts:
        v[fnv1a_64(fact) % dim] += 1.0
    if not facts:
        logger.warning("scene %s has no facts; emitting degenerate zero vector", scene.scene_id)
        return FeatureVector(values=v, degenerate=True)
    return FeatureVector(values=v / np.linalg.norm(v), degenerate=False)


def collision_fraction(scene: SceneSpec, dim: int = DEFAULT_IMAGE_DIM) -> float:
    """Fraction of a scene's facts that share a hashed index with another fact."""
    facts = scene.facts()
    if not facts:
        return 0.0
    idx = [fnv1a_64(f) % dim for f in facts]
    counts = {}
    for i in idx:
        counts[i] = counts.get(i, 0) + 1
    return sum(1 for i in idx if counts[i] > 1) / len(facts)

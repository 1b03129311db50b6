"""Evaluation: option ranking, retrieval, per-category metrics, diagnostics.

The model argument everywhere is anything with transform(texts) -> unit rows
and transform_images(features) -> unit rows; the estimator qualifies, as does
the thin checkpoint adapter below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import encode_images, encode_texts
from .scenes import fnv1a_64
from .taxonomy import LogicalCategory, detect_categories


class EvalError(ValueError):
    pass


class EncoderModel:
    """Checkpoint-backed adapter exposing the two transform directions."""

    def __init__(self, params, vocab):
        self.params = params
        self.vocab = vocab

    @classmethod
    def from_result(cls, result):
        return cls(result.params, result.vocab)

    def transform(self, texts):
        return encode_texts(self.params, [self.vocab.encode(t) for t in texts])

    def transform_images(self, X):
        return encode_images(self.params, np.asarray(X, dtype=np.float64))


def _embed_records(model, records):
    """Batch-encode every option text and every image once."""
    texts = []
    bounds = []
    for r in records:
        bounds.append((len(texts), len(texts) + r.option_count))
        texts.extend(r.options())
    T = model.transform(texts)
    V = model.transform_images(np.stack([r.features() for r in records]))
    return T, V, bounds


@dataclass
class MCQResult:
    rate: float
    correct: int
    total: int
    ties: int

    def to_dict(self):
        return {"rate": self.rate, "correct": self.correct,
                "total": self.total, "ties": self.ties}


def _option_shuffle(sample_id: str, shuffle_seed: int, m: int) -> np.ndarray:
    rng = np.random.default_rng([shuffle_seed & 0xFFFFFFFF, fnv1a_64(sample_id)])
    return rng.permutation(m)


def mcq_accuracy(model, records, shuffle_seed: int = 0) -> MCQResult:
    """Accuracy of picking the stored positive among seed-shuffled options.

    Ties on the max cosine go to the lowest shuffled index and are counted.
    """
    records = list(records)
    if not records:
        return MCQResult(rate=0.0, correct=0, total=0, ties=0)
    T, V, bounds = _embed_records(model, records)
    correct = ties = 0
    for i, r in enumerate(records):
        lo, hi = bounds[i]
        perm = _option_shuffle(r.sample_id, shuffle_seed, hi - lo)
        cos = (T[lo:hi] @ V[i])[perm]
        best = int(np.argmax(cos))
        if int(np.sum(cos == cos[best])) > 1:
            ties += 1
        # After shuffling, the stored positive sits where perm put option 0.
        pos_at = int(np.where(perm == 0)[0][0])
        if best == pos_at:
            correct += 1
    return MCQResult(rate=correct / len(records), correct=correct,
                     total=len(records), ties=ties)


@dataclass
class RecallResult:
    rate: float
    k: int
    pool: int

    def to_dict(self):
        return {"rate": self.rate, "k": self.k, "pool": self.pool}


def retrieval_recall(model, records, k: int = 1) -> RecallResult:
    """Text-to-image recall@k over the records' shared image pool.

    Each positive caption queries the whole pool; cosine ties are broken by
    image id so rankings are deterministic.
    """
    records = list(records)
    pool = len(records)
    if k < 1:
        raise EvalError("k must be at least 1")
    if k > pool:
        raise EvalError(f"k={k} exceeds pool of {pool} images")
    queries = model.transform([r.positive for r in records])
    images = model.transform_images(np.stack([r.features() for r in records]))
    S = queries @ images.T
    id_rank = np.argsort(np.argsort([r.sample_id for r in records]))
    hits = 0
    for q in range(pool):
        order = np.lexsort((id_rank, -S[q]))
        if q in order[:k]:
            hits += 1
    return RecallResult(rate=hits / pool, k=k, pool=pool)


@dataclass
class GapResult:
    gaps: list
    mean: float
    blindspot_rate: float

    def to_dict(self):
        return {"mean": self.mean, "blindspot_rate": self.blindspot_rate,
                "count": len(self.gaps)}


def perturbation_gap(model, records) -> GapResult:
    """Positive-vs-best-negative cosine margin; a gap <= 0 is a blindspot."""
    records = list(records)
    for r in records:
        if not r.negatives:
            raise EvalError(f"record {r.sample_id} has no negatives")
    T, V, bounds = _embed_records(model, records)
    gaps = []
    for i, _ in enumerate(records):
        lo, hi = bounds[i]
        cos = T[lo:hi] @ V[i]
        gaps.append(float(cos[0] - np.max(cos[1:])))
    mean = float(np.mean(gaps))
    blind = float(np.mean([g <= 0 for g in gaps]))
    return GapResult(gaps=gaps, mean=mean, blindspot_rate=blind)


@dataclass
class CategoryRow:
    count: int
    mcq: float = None
    recall_at_1: float = None
    recall_at_5: float = None

    def to_dict(self):
        return {"count": self.count, "mcq": self.mcq,
                "recall_at_1": self.recall_at_1, "recall_at_5": self.recall_at_5}


def _metric_row(model, subset, shuffle_seed) -> CategoryRow:
    row = CategoryRow(count=len(subset))
    if not subset:
        return row
    row.mcq = mcq_accuracy(model, subset, shuffle_seed).rate
    row.recall_at_1 = retrieval_recall(model, subset, k=1).rate
    if len(subset) >= 5:
        row.recall_at_5 = retrieval_recall(model, subset, k=5).rate
    return row


def _category_names(categories) -> set:
    return {c.name.lower() if isinstance(c, LogicalCategory) else str(c).lower()
            for c in categories}


def per_category_report(model, records, shuffle_seed: int = 0) -> dict:
    """Metric rows keyed by category name; multi-category records count in
    each of their categories, empty categories report absent values."""
    records = list(records)
    tagged = [(r, _category_names(r.categories)) for r in records]
    out = {}
    for cat in LogicalCategory:
        subset = [r for r, names in tagged if cat.name.lower() in names]
        out[cat.name.lower()] = _metric_row(model, subset, shuffle_seed)
    return out


# ---------------------------------------------------------------------------
# Category-separation probe: fixed sentence battery, centroid purity, and a
# deterministic 2D projection for plotting.

# Probe battery: four base content bundles, each realized under all nine
# category template families. Within a bundle the content words are shared and
# the surface family rotates with the bundle index, so texts of one category
# share neither wording skeleton nor content; clusters can only separate on
# the logical framing itself.
_BATTERY_BASES = [
    {"a": "cat", "b": "dog", "attr_a": "small", "attr_b": "large",
     "cmp": "bigger", "base": "big", "e1": "the rain started", "e2": "the ground got wet"},
    {"a": "ball", "b": "lamp", "attr_a": "old", "attr_b": "new",
     "cmp": "taller", "base": "tall", "e1": "the bell rang", "e2": "the dog barked"},
    {"a": "horse", "b": "sheep", "attr_a": "wet", "attr_b": "dry",
     "cmp": "faster", "base": "fast", "e1": "the door opened", "e2": "the lights came on"},
    {"a": "cup", "b": "plate", "attr_a": "clean", "attr_b": "dirty",
     "cmp": "heavier", "base": "heavy", "e1": "the car braked", "e2": "the glass fell"},
]

# Per category: the surface families as used by the corpus builders; bundle i
# renders family i modulo the family count.
_BATTERY_FAMILIES = [
    (LogicalCategory.CONJUNCTION, [
        "both the {a} and the {b} are in the scene",
        "there is both a {a} and a {b} in the scene",
        "the {a} as well as the {b} is in the scene",
        "the {a} together with the {b} appears in the scene",
    ]),
    (LogicalCategory.DISJUNCTION, [
        "either the {a} or the {b} is in the scene",
        "there is either a {a} or a {b} in the scene",
        "the {a} or the {b} is in the scene",
        "the scene has a {a} or a {b}",
    ]),
    (LogicalCategory.NEGATION, [
        "there is no {a} in the scene",
        "the scene has no {a}",
        "the {a} never appears in the scene",
    ]),
    (LogicalCategory.CONTRAST, [
        "the {a} is {attr_a} but the {b} is {attr_b}",
        "although the {a} is {attr_a}, the {b} is {attr_b}",
        "the {a} is {attr_a} whereas the {b} is {attr_b}",
        "the {a} is {attr_a}, however the {b} is {attr_b}",
    ]),
    (LogicalCategory.COMPARISON, [
        "the {a} is {cmp} than the {b}",
        "the {a} is as {base} as the {b}",
    ]),
    (LogicalCategory.CONDITION, [
        "if there is a {a} in the scene, there is a {b} too",
        "if the scene has a {a}, it has a {b} too",
        "provided that there is a {a}, there is a {b} too",
        "in case the scene has a {a}, it has a {b} too",
    ]),
    (LogicalCategory.CAUSALITY, [
        "{e2} because {e1}",
        "{e2} since {e1}",
    ]),
    (LogicalCategory.TEMPORALITY, [
        "{e2} after {e1}",
        "{e2} soon after {e1}",
        "{e1}, then {e2}",
    ]),
    (LogicalCategory.INCLUSION, [
        "the scene includes a {a}",
        "many things appear in the scene, such as the {a}",
        "there are many things here, including the {a}",
    ]),
]

BATTERY = [(fams[i % len(fams)].format(**base), cat)
           for cat, fams in _BATTERY_FAMILIES
           for i, base in enumerate(_BATTERY_BASES)]


def default_battery():
    return list(BATTERY)


@dataclass
class PurityResult:
    purity: float
    total: int
    assignments: list          # (text, true category name, assigned name)
    projection: list           # (text, category name, x, y)

    def to_dict(self):
        return {"purity": self.purity, "total": self.total}


def _top2_projection(E: np.ndarray) -> np.ndarray:
    """Principal top-2 projection with a fixed sign convention: each axis is
    flipped so its largest-magnitude loading is positive."""
    centered = E - E.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2]
    for i in range(axes.shape[0]):
        j = int(np.argmax(np.abs(axes[i])))
        if axes[i, j] < 0:
            axes[i] = -axes[i]
    return centered @ axes.T


def cluster_purity(model, battery=None) -> PurityResult:
    """Fraction of battery sentences landing on their own category centroid."""
    battery = list(battery) if battery is not None else default_battery()
    by_cat = {}
    for text, cat in battery:
        by_cat.setdefault(LogicalCategory(cat), []).append(text)
    for cat, texts in by_cat.items():
        if len(texts) < 2:
            raise EvalError(f"category {cat.name} has fewer than 2 variants")
    cats = sorted(by_cat)
    texts = [t for t, _ in battery]
    E = model.transform(texts)
    centroids = np.stack([
        E[[i for i, (_, c) in enumerate(battery)
           if LogicalCategory(c) == cat]].mean(axis=0)
        for cat in cats])
    # cosine assignment: centroid norms vary with cluster tightness and must
    # not bias the argmax
    norms = np.linalg.norm(centroids, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    sims = E @ (centroids / norms).T
    chosen = np.argmax(sims, axis=1)          # ties resolve to lowest index
    assignments = []
    hits = 0
    for i, (text, cat) in enumerate(battery):
        true = LogicalCategory(cat)
        got = cats[int(chosen[i])]
        hits += got == true
        assignments.append((text, true.name.lower(), got.name.lower()))
    proj = _top2_projection(E)
    projection = [(text, LogicalCategory(cat).name.lower(),
                   float(proj[i, 0]), float(proj[i, 1]))
                  for i, (text, cat) in enumerate(battery)]
    return PurityResult(purity=hits / len(battery), total=len(battery),
                        assignments=assignments, projection=projection)


def write_projection_csv(path, result: PurityResult) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["text", "category", "x", "y"])
        for row in result.projection:
            w.writerow(row)


# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    overall: CategoryRow
    mcq: MCQResult
    per_scenario: dict = field(default_factory=dict)
    per_category: dict = field(default_factory=dict)
    gap: GapResult = None
    purity: PurityResult = None

    def to_lines(self) -> list:
        lines = [{"section": "overall", **self.overall.to_dict(),
                  "ties": self.mcq.ties}]
        for name, row in sorted(self.per_scenario.items()):
            lines.append({"section": "scenario", "name": name, **row.to_dict()})
        for name, row in self.per_category.items():
            lines.append({"section": "category", "name": name, **row.to_dict()})
        if self.gap is not None:
            lines.append({"section": "perturbation", **self.gap.to_dict()})
        if self.purity is not None:
            lines.append({"section": "purity", **self.purity.to_dict()})
        return lines

    def to_table(self) -> str:
        def fmt(x):
            return "  --- " if x is None else f"{x:6.3f}"
        rows = [f"{'':14s} {'n':>5s} {'mcq':>6s} {'r@1':>6s} {'r@5':>6s}"]
        rows.append(f"{'overall':14s} {self.overall.count:5d} "
                    f"{fmt(self.overall.mcq)} {fmt(self.overall.recall_at_1)} "
                    f"{fmt(self.overall.recall_at_5)}")
        for name, row in sorted(self.per_scenario.items()):
            rows.append(f"{name:14s} {row.count:5d} {fmt(row.mcq)} "
                        f"{fmt(row.recall_at_1)} {fmt(row.recall_at_5)}")
        for name, row in self.per_category.items():
            rows.append(f"{name:14s} {row.count:5d} {fmt(row.mcq)} "
                        f"{fmt(row.recall_at_1)} {fmt(row.recall_at_5)}")
        if self.gap is not None:
            rows.append(f"perturbation gap mean {self.gap.mean:+.4f}  "
                        f"blindspots {self.gap.blindspot_rate:.3f}")
        if self.purity is not None:
            rows.append(f"cluster purity {self.purity.purity:.3f} "
                        f"over {self.purity.total} sentences")
        if self.mcq.ties:
            rows.append(f"cosine ties during option ranking: {self.mcq.ties}")
        return "\n".join(rows)


def evaluate(model, records, shuffle_seed: int = 0,
             battery=None, with_purity: bool = True) -> EvalReport:
    records = list(records)
    overall = _metric_row(model, records, shuffle_seed)
    mcq = mcq_accuracy(model, records, shuffle_seed)
    per_scenario = {}
    for scen in sorted({r.scenario for r in records}):
        subset = [r for r in records if r.scenario == scen]
        per_scenario[scen] = _metric_row(model, subset, shuffle_seed)
    report = EvalReport(
        overall=overall, mcq=mcq, per_scenario=per_scenario,
        per_category=per_category_report(model, records, shuffle_seed),
        gap=perturbation_gap(model, records) if records else None,
        purity=cluster_purity(model, battery) if with_purity else None)
    return report


def write_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in report.to_lines():
            f.write(json.dumps(line, separators=(",", ":")) + "\n")

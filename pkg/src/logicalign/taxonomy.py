"""Logical category taxonomy and the rule-based multi-label caption parser.

The parser is a token rule engine: captions are split into sentences, sentences
into lowercased word tokens, tokens into suffix-stripped stems, and a versioned
pattern table is matched against the stems. Multi-token patterns win over their
constituent single tokens, and a token consumed by a multi-token match no longer
feeds single-token rules in the same sentence.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

logger = logging.getLogger(__name__)

DEFAULT_MAX_GAP = 8


class LogicalCategory(enum.IntEnum):
    CONJUNCTION = 0
    DISJUNCTION = 1
    NEGATION = 2
    CONTRAST = 3
    COMPARISON = 4
    CONDITION = 5
    CAUSALITY = 6
    TEMPORALITY = 7
    INCLUSION = 8


N_CATEGORIES = len(LogicalCategory)

CATEGORY_NAMES = tuple(c.name.lower() for c in LogicalCategory)

_NAME_TO_CATEGORY = {c.name.lower(): c for c in LogicalCategory}


def category_from_name(name: str) -> LogicalCategory:
    try:
        return _NAME_TO_CATEGORY[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown logical category: {name!r}") from None


def category_vector(categories) -> np.ndarray:
    """Multi-hot float64 vector of length 9 for a set of categories."""
    v = np.zeros(N_CATEGORIES, dtype=np.float64)
    for c in categories:
        v[int(c)] = 1.0
    return v


def categories_from_vector(vec) -> frozenset:
    return frozenset(LogicalCategory(i) for i, x in enumerate(vec) if x >= 0.5)


def category_names(categories) -> list:
    """Stable serialization order: ascending category index."""
    return [c.name.lower() for c in sorted(categories)]


_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+")


def _scan_tokens(lowered: str):
    """Yield (token, start offset) for each maximal run of letters."""
    start = None
    for i, ch in enumerate(lowered):
        if ch.isalpha():
            if start is None:
                start = i
        elif start is not None:
            yield lowered[start:i], start
            start = None
    if start is not None:
        yield lowered[start:], start


def tokenize(text: str) -> list:
    """Lowercased word tokens, split on non-letter boundaries, punctuation dropped."""
    return [tok for tok, _ in _scan_tokens(text.lower())]


def stem(token: str) -> str:
    # Fixed suffix-strip table. Both rule keywords and caption tokens go through
    # this, so only consistency matters, not linguistic correctness.
    if token.endswith("ing") and len(token) >= 5:
        return token[:-3]
    if token.endswith("ed") and len(token) >= 4:
        return token[:-2]
    if token.endswith("es") and len(token) >= 4:
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and len(token) >= 4:
        return token[:-1]
    if token.endswith("e") and len(token) >= 4:
        return token[:-1]
    return token


@dataclass(frozen=True)
class RulePattern:
    """One row of the rule table.

    parts holds the stemmed pattern split at "..." markers; tokens inside a part
    must be consecutive, consecutive parts may be up to max_gap tokens apart.
    """

    category: LogicalCategory
    kind: str
    parts: tuple
    max_gap: int = DEFAULT_MAX_GAP

    @property
    def n_tokens(self) -> int:
        return sum(len(p) for p in self.parts)


class RuleTableError(ValueError):
    pass


def _parse_pattern(raw: str) -> tuple:
    parts = []
    for chunk in raw.split("..."):
        toks = tuple(stem(t) for t in tokenize(chunk))
        if toks:
            parts.append(toks)
    if not parts:
        raise RuleTableError(f"empty pattern: {raw!r}")
    return tuple(parts)


def load_rules(path=None, max_gap: int = DEFAULT_MAX_GAP):
    """Load (rules, version) from a TSV rule table; defaults to the bundled table."""
    if path is None:
        text = resources.files("logicalign").joinpath("data/rules.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    version = "unversioned"
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            m = re.search(r"\bv[\w.-]+\b", line)
            if version == "unversioned" and m:
                version = m.group(0)
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise RuleTableError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        cat_name, kind, pattern = fields
        category = category_from_name(cat_name)
        if kind not in ("single", "phrase", "gap"):
            raise RuleTableError(f"line {lineno}: unknown kind {kind!r}")
        parts = _parse_pattern(pattern)
        if kind == "single" and (len(parts) != 1 or len(parts[0]) != 1):
            raise RuleTableError(f"line {lineno}: single pattern must be one token")
        rules.append(RulePattern(category=category, kind=kind, parts=parts, max_gap=max_gap))
    if not rules:
        raise RuleTableError("rule table contains no patterns")
    return rules, version


# Clause-linking tokens that license a causal "so" when a comma is absent.
_CLAUSE_TOKENS = {"and", "then"}


def _causal_so_allowed(lowered: str, tok_index: int, tok_start: int, tokens) -> bool:
    # "so" reads as causal only sentence-medially, right after a comma,
    # semicolon, or clause-linking token.
    if tok_index == 0:
        return False
    j = tok_start - 1
    while j >= 0 and lowered[j].isspace():
        j -= 1
    if j >= 0 and lowered[j] in ",;":
        return True
    return tokens[tok_index - 1] in _CLAUSE_TOKENS


class _CompiledRules:
    """Rule table grouped by unique pattern shape, ordered most-specific first."""

    def __init__(self, rules):
        grouped = {}
        for r in rules:
            key = (r.parts, r.max_gap)
            grouped.setdefault(key, set()).add(r.category)
        multi = []
        single = {}
        for (parts, max_gap), cats in grouped.items():
            if len(parts) == 1 and len(parts[0]) == 1:
                single.setdefault(parts[0][0], set()).update(cats)
            else:
                multi.append((parts, max_gap, frozenset(cats)))
        # More tokens first, then fewer gaps, then lexicographic for determinism.
        multi.sort(key=lambda m: (-sum(len(p) for p in m[0]), len(m[0]), m[0]))
        self.multi = multi
        self.single = single


def _match_multi(stems, consumed, parts, max_gap):
    """Earliest match of a gapped pattern over unconsumed stems, or None."""
    n = len(stems)

    def part_at(part, start):
        if start + len(part) > n:
            return False
        for k, p in enumerate(part):
            if consumed[start + k] or stems[start + k] != p:
                return False
        return True

    def find_part(part, lo):
        for s in range(lo, n - len(part) + 1):
            if part_at(part, s):
                return s
        return -1

    start = 0
    while start <= n - len(parts[0]):
        s0 = find_part(parts[0], start)
        if s0 < 0:
            return None
        positions = list(range(s0, s0 + len(parts[0])))
        cursor = s0 + len(parts[0])
        ok = True
        for part in parts[1:]:
            found = -1
            for s in range(cursor, min(cursor + max_gap, n - len(part)) + 1):
                if part_at(part, s):
                    found = s
                    break
            if found < 0:
                ok = False
                break
            positions.extend(range(found, found + len(part)))
            cursor = found + len(part)
        if ok:
            return positions
        start = s0 + 1
    return None


class CategoryDetector(BaseEstimator, TransformerMixin):
    """Multi-label logical category detector over caption text.

    Wraps the rule engine in a transformer-style API: transform(texts) yields an
    (n, 9) multi-hot float array, detect(text) a frozenset of LogicalCategory.
    """

    def __init__(self, rules_path=None, max_gap: int = DEFAULT_MAX_GAP):
        self.rules_path = rules_path
        self.max_gap = max_gap

    def _ensure_loaded(self):
        if not hasattr(self, "rules_"):
            self.rules_, self.rules_version_ = load_rules(self.rules_path, self.max_gap)
            self.compiled_ = _CompiledRules(self.rules_)
        return self

    def fit(self, X=None, y=None):
        return self._ensure_loaded()

    def detect(self, text: str) -> frozenset:
        """All logical categories whose patterns fire anywhere in the text."""
        if not isinstance(text, str):
            raise TypeError(f"caption must be str, got {type(text).__name__}")
        self._ensure_loaded()
        found = set()
        for sentence in _SENTENCE_SPLIT_RE.split(text):
            lowered = sentence.lower()
            matches = list(_scan_tokens(lowered))
            if not matches:
                continue
            tokens = [t for t, _ in matches]
            stems = [stem(t) for t in tokens]
            consumed = [False] * len(stems)
            for parts, max_gap, cats in self.compiled_.multi:
                while True:
                    pos = _match_multi(stems, consumed, parts, max_gap)
                    if pos is None:
                        break
                    for p in pos:
                        consumed[p] = True
                    found.update(cats)
            for i, s in enumerate(stems):
                if consumed[i]:
                    continue
                cats = self.compiled_.single.get(s)
                if not cats:
                    continue
                for c in cats:
                    if c is LogicalCategory.CAUSALITY and s == "so":
                        if _causal_so_allowed(lowered, i, matches[i][1], tokens):
                            found.add(c)
                    else:
                        found.add(c)
        return frozenset(found)

    def transform(self, texts) -> np.ndarray:
        return np.stack([category_vector(self.detect(t)) for t in texts]) if len(texts) else np.zeros((0, N_CATEGORIES))

    def predict(self, texts) -> np.ndarray:
        return self.transform(texts) >= 0.5


_default_detector = None


def default_detector() -> CategoryDetector:
    global _default_detector
    if _default_detector is None:
        _default_detector = CategoryDetector().fit()
    return _default_detector


def detect_categories(text: str) -> frozenset:
    """Detect logical categories in a caption using the bundled rule table."""
    return default_detector().detect(text)


def filter_positive(records, detector=None):
    """Annotate corpus records with detected categories.

    records is an iterable of mappings with at least image_ref and caption keys.
    Malformed entries are skipped with a logged warning. Returns (annotated
    records, summary dict with kept/skipped counts).
    """
    det = detector or default_detector()
    kept = []
    skipped = 0
    for idx, rec in enumerate(records):
        if not isinstance(rec, dict) or not isinstance(rec.get("caption"), str) \
                or not isinstance(rec.get("image_ref"), str) or not rec.get("caption", "").strip():
            logger.warning("filter_positive: skipping malformed record %d", idx)
            skipped += 1
            continue
        out = dict(rec)
        out["categories"] = category_names(det.detect(rec["caption"]))
        kept.append(out)
    return kept, {"kept": len(kept), "skipped": skipped}

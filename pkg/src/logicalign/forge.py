"""Hard-negative proposal generation against chat-completion backends.

Each proposal is produced by one backend profile; profiles rotate round-robin
so no single endpoint dominates the dataset. A deterministic rule-based
perturbation path covers offline runs and backend outages, tagged so the
provenance stays visible to reviewers.
"""

from __future__ import annotations

import itertools
import json
import re
import threading
import time
import urllib.error
import urllib.request
import uuid
from dataclasses import dataclass, field

import numpy as np

from .captions import BASE_FORM
from .scenes import COMPARATIVE_OPPOSITE
from .taxonomy import LogicalCategory, category_from_name, default_detector

PROMPT_TEMPLATES = {
    "image": (
        "You are given a caption that describes an image and contains a "
        "{logic_type} logical structure.\n"
        "Your task is to generate THREE hard negative captions that:\n"
        "- Are fluent and grammatically correct.\n"
        "- Appear plausible and similar in structure.\n"
        "- Contain incorrect or conflicting {logic_type} logic.\n"
        "Caption: \"{caption}\"\n"
        "Image ID: {image_id}\n"
        "Please output only the THREE hard negative captions as a numbered "
        "list, one per line:\n"
        "1. <hard negative caption>\n"
        "2. <hard negative caption>\n"
        "3. <hard negative caption>\n"
    ),
    "video": (
        "You are given a caption that describes a video and contains a "
        "{logic_type} logical structure.\n"
        "Your task is to generate THREE hard negative captions that:\n"
        "- Are fluent and grammatically correct.\n"
        "- Appear plausible and similar in structure.\n"
        "- Contain incorrect or conflicting {logic_type} logic.\n"
        "Caption: \"{caption}\"\n"
        "Video ID: {video_id}\n"
        "Please output only the THREE hard negative captions as a numbered "
        "list, one per line:\n"
        "1. <hard negative caption>\n"
        "2. <hard negative caption>\n"
        "3. <hard negative caption>\n"
    ),
    "anomaly": (
        "You are given a caption that describes a abnormal video and contains "
        "a {logic_type} logical structure.\n"
        "Your task is to generate THREE hard negative captions that:\n"
        "- Are fluent and grammatically correct.\n"
        "- Appear plausible and similar in structure.\n"
        "- Contain incorrect or conflicting {logic_type} logic.\n"
        "Caption: \"{caption}\"\n"
        "Video ID: {video_id}\n"
        "Please output only the THREE hard negative captions as a numbered "
        "list, one per line:\n"
        "1. <hard negative caption>\n"
        "2. <hard negative caption>\n"
        "3. <hard negative caption>\n"
    ),
    "medicine": (
        "You are given a caption that describes a pathology report as "
        "follows: {report}\n"
        "Please follow the instructions below:\n"
        "1. Extract positive findings (statements without negation) and "
        "negative findings (statements with negation, e.g., \"no pleural "
        "effusion\").\n"
        "2. Construct ONE correct option using this rule-based format:\n"
        "   \"Because <positive finding> and <negative finding>, the "
        "impression is <IMPRESSION>.\"\n"
        "3. Generate FOUR hard negative options using logical perturbations:\n"
        "   - Negation Flip: Reverse negation (e.g., \"no effusion\" → "
        "\"effusion present\").\n"
        "   - Conjunction Trap: Combine correct and incorrect statements "
        "with \"and\".\n"
        "   - Disjunction Confusion: Use \"or\" with one correct and one "
        "incorrect clause.\n"
        "   - Causal Misalignment: Disrupt the cause-effect chain using "
        "\"because\", \"so\", or \"therefore\".\n"
        "4. Return exactly five options, labeled 1 to 5. Only the first "
        "option should be correct.\n"
        "Please use the following exact format:\n"
        "1. <Correct caption>\n"
        "2. <Hard negative caption>\n"
        "3. <Hard negative caption>\n"
        "4. <Hard negative caption>\n"
        "5. <Hard negative caption>\n"
    ),
}

OPTION_COUNT = {"image": 3, "video": 3, "anomaly": 3, "medicine": 5}

PROPOSAL_STATUSES = ("pending", "accepted", "rejected", "edited", "failed")


class ForgeError(ValueError):
    pass


class ParseError(ForgeError):
    """Malformed backend output; carries the raw text for the retry queue."""

    def __init__(self, reason: str, raw: str):
        super().__init__(reason)
        self.reason = reason
        self.raw = raw


class PerturbationError(ForgeError):
    """The caption offers no usable site for the requested category."""


def build_prompt(scenario: str, caption: str, logic_type=None, *,
                 image_id=None, video_id=None) -> str:
    """Fill one scenario template; substitution only, no other mutation."""
    if scenario not in PROMPT_TEMPLATES:
        raise ForgeError(f"unknown scenario: {scenario!r}")
    if not caption or not caption.strip():
        raise ForgeError("caption must be non-empty")
    if scenario == "medicine":
        return PROMPT_TEMPLATES["medicine"].format(report=caption)
    if logic_type is None:
        raise ForgeError("logic_type required for non-medicine scenarios")
    if isinstance(logic_type, LogicalCategory):
        logic_type = logic_type.name.lower()
    else:
        try:
            logic_type = category_from_name(logic_type).name.lower()
        except ValueError as e:
            raise ForgeError(str(e)) from None
    if scenario == "image":
        if image_id is None:
            raise ForgeError("image_id required for image scenario")
        return PROMPT_TEMPLATES["image"].format(
            logic_type=logic_type, caption=caption, image_id=image_id)
    if video_id is None:
        raise ForgeError(f"video_id required for {scenario} scenario")
    return PROMPT_TEMPLATES[scenario].format(
        logic_type=logic_type, caption=caption, video_id=video_id)


_OPTION_LINE = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*\S)\s*$")


def parse_llm_response(text: str, expected_count: int):
    """Extract `N. <caption>` lines numbered 1..expected_count in order.

    Lines that do not look like numbered options (preamble prose, blank
    lines) are skipped. Any numbering gap, duplicate, surplus, or empty
    caption is a ParseError carrying the raw text.
    """
    if expected_count not in (3, 5):
        raise ForgeError(f"expected_count must be 3 or 5, got {expected_count}")
    found = []
    seen = set()
    for line in text.splitlines():
        m = _OPTION_LINE.match(line)
        if not m:
            continue
        n = int(m.group(1))
        if n < 1 or n > expected_count:
            raise ParseError(f"option number {n} out of range", text)
        if n in seen:
            raise ParseError(f"duplicate option number {n}", text)
        seen.add(n)
        if n != len(found) + 1:
            raise ParseError(f"option {n} out of order", text)
        found.append(m.group(2).strip())
    if len(found) != expected_count:
        missing = [str(i) for i in range(1, expected_count + 1) if i not in seen]
        raise ParseError(
            f"expected {expected_count} options, found {len(found)}"
            + (f" (missing {', '.join(missing)})" if missing else ""), text)
    if any(not c for c in found):
        raise ParseError("empty caption in option list", text)
    return found


def render(captions) -> str:
    """Inverse of parse_llm_response for captions without embedded newlines."""
    out = []
    for i, c in enumerate(captions, 1):
        if len(c.splitlines()) != 1:
            raise ForgeError("caption contains a line break")
        out.append(f"{i}. {c}")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Rule-based perturbations. Each transform either swaps the category operator
# for a conflicting one or swaps the operands around it, mirroring the flip
# families the synthetic corpus uses.

COMPARATIVE_FORM = {base: cmp for cmp, base in BASE_FORM.items()}
_CMP = "|".join(COMPARATIVE_OPPOSITE)
_ADJ = "|".join(BASE_FORM.values())


def _match_case(original: str, new):
    """Keep sentence-initial capitalization across a substitution."""
    if new and original[:1].isupper() and new[:1].islower():
        new = new[0].upper() + new[1:]
    return new if new and new != original else None


def _sub(pattern, repl, text):
    return _match_case(
        text, re.sub(pattern, repl, text, count=1, flags=re.IGNORECASE))


def _opposite(m):
    return COMPARATIVE_OPPOSITE[m.group(0).lower()]


def _swap_around(pattern, text):
    """Swap the clauses on either side of the matched connective."""
    m = re.search(pattern, text, flags=re.IGNORECASE)
    if not m:
        return None
    left = text[:m.start()].strip().strip(",;").strip()
    right = text[m.end():].strip()
    tail = ""
    if right and right[-1] in ".!?":
        right, tail = right[:-1].rstrip(), right[-1]
    if not left or not right:
        return None
    if left[:1].isupper():
        left = left[0].lower() + left[1:]
        right = right[0].upper() + right[1:]
    return _match_case(text, right + " " + m.group(0).strip() + " " + left + tail)


_PERTURBATIONS = {
    LogicalCategory.CONJUNCTION: [
        lambda t: _sub(r"\bboth\b(.*?)\band\b", r"either\1or", t),
        lambda t: _sub(r"\bboth the (\w+) and the (\w+)\b", r"both the \2 and the \1", t),
        lambda t: _sub(r"\bboth (a|an) (\w+) and (a|an) (\w+)\b", r"both \3 \4 and \1 \2", t),
        lambda t: _sub(r"\band\b", "or", t),
        lambda t: _sub(r"\bas well as\b", "instead of", t),
        lambda t: _sub(r"\bas well as\b", "or", t),
        lambda t: _sub(r"\btogether with\b", "instead of", t),
        lambda t: _sub(r"\btogether with\b", "or", t),
        lambda t: _sub(r"\bnot only\b(.*?)\bbut also\b", r"either\1or", t),
        lambda t: _swap_around(r"\b(?:as well as|together with|and)\b", t),
    ],
    LogicalCategory.DISJUNCTION: [
        lambda t: _sub(r"\beither\b(.*?)\bor\b", r"both\1and", t),
        lambda t: _sub(r"\bneither\b(.*?)\bnor\b", r"both\1and", t),
        lambda t: _sub(r"\bneither\b(.*?)\bnor\b", r"either\1or", t),
        lambda t: _sub(r"\bneither the (\w+) nor the (\w+)\b", r"neither the \2 nor the \1", t),
        lambda t: _sub(r"\bthe (\w+) or the (\w+)\b", r"the \2 or the \1", t),
        lambda t: _sub(r"\b(a|an) (\w+) or (a|an) (\w+)\b", r"\3 \4 or \1 \2", t),
        lambda t: _sub(r"\bor\b", "and", t),
        lambda t: _sub(r"\botherwise\b", "and likewise", t),
        lambda t: _swap_around(r"\bor\b", t),
    ],
    LogicalCategory.NEGATION: [
        lambda t: _sub(r"\bno\b\s+", "", t),
        lambda t: _sub(r"\bno\b", "some", t),
        lambda t: _sub(r"\bno\b", "a", t),
        lambda t: _sub(r"\bno (\w+)(\b.*?)\bthe (\w+)", r"the \1\2no \3", t),
        lambda t: _sub(r"\bnot\b\s+", "", t),
        lambda t: _sub(r"\bnever\b", "always", t),
        lambda t: _sub(r"\bnever\b", "often", t),
        lambda t: _sub(r"\bnever\b\s+", "", t),
        lambda t: _sub(r"\bis without (a|an) (\w+)", r"has more than one \2", t),
        lambda t: _sub(r"\bwithout\b", "with", t),
        lambda t: _sub(r"\bwithout\b", "together with", t),
        lambda t: _sub(r"\bneither\b(.*?)\bnor\b", r"both\1and", t),
        lambda t: _sub(r"\bneither\b(.*?)\bnor\b", r"either\1or", t),
        lambda t: _sub(r"\bneither the (\w+) nor the (\w+)\b", r"neither the \2 nor the \1", t),
    ],
    LogicalCategory.CONTRAST: [
        lambda t: _sub(r"\bbut\b", "and", t),
        lambda t: _sub(r"\bbut\b", "and so", t),
        lambda t: _sub(r"\balthough\b", "because", t),
        lambda t: _sub(r"\balthough\b", "if", t),
        lambda t: _sub(r"\balthough (.*?), (.*?)([.!?]?)$", r"although \2, \1\3", t),
        lambda t: _sub(r"\bwhereas\b", "just like", t),
        lambda t: _sub(r"\bwhereas\b", "and", t),
        lambda t: _sub(r"\bhowever\b", "therefore", t),
        lambda t: _sub(r"\bhowever\b", "so", t),
        lambda t: _sub(r"\bhowever\b", "and", t),
        lambda t: _sub(r"\bin contrast\b", "likewise", t),
        lambda t: _swap_around(r"\b(?:but|whereas)\b", t),
    ],
    LogicalCategory.COMPARISON: [
        lambda t: _sub(rf"\b(?:{_CMP})\b", _opposite, t),
        lambda t: _sub(rf"\b({_CMP}) than\b",
                       lambda m: f"exactly as {BASE_FORM[m.group(1).lower()]} as", t),
        lambda t: _sub(rf"\bthe (\w+) is ({_CMP}) than the (\w+)",
                       r"the \3 is \2 than the \1", t),
        lambda t: _sub(r"\bmore\b(.*?)\bthan\b", r"less\1than", t),
        lambda t: _sub(r"\bless\b(.*?)\bthan\b", r"more\1than", t),
        lambda t: _sub(r"\bnot as\b", "as", t),
        lambda t: _sub(rf"\bis as ({_ADJ}) as\b", r"is not as \1 as", t),
        lambda t: _sub(rf"\bas ({_ADJ}) as\b",
                       lambda m: COMPARATIVE_FORM[m.group(1).lower()] + " than", t),
        lambda t: _sub(rf"\bthe (\w+) is (not )?as ({_ADJ}) as the (\w+)",
                       r"the \4 is \2as \3 as the \1", t),
        lambda t: _sub(r"\bmost\b", "least", t),
        lambda t: _sub(r"\bleast\b", "most", t),
    ],
    LogicalCategory.CONDITION: [
        lambda t: _sub(r"\bonly if\b", "even without", t),
        lambda t: _sub(r"\bif\b", "unless", t),
        lambda t: _sub(r"\bif\b", "although", t),
        lambda t: _sub(r"\bif\b", "whether or not", t),
        lambda t: _sub(r"\bunless\b", "if", t),
        lambda t: _sub(r"\bprovided that\b", "even though", t),
        lambda t: _sub(r"\bprovided that\b", "although", t),
        lambda t: _sub(r"\bin case\b", "although", t),
        lambda t: _sub(r"\bin case\b", "even though", t),
        lambda t: _sub(r"there is (a|an) (\w+) too\b", r"the \2 is missing", t),
        lambda t: _sub(r"it has (a|an) (\w+) too\b", r"the \2 is missing", t),
        lambda t: _sub(r"the (\w+) is missing\b", r"there is also a \1", t),
    ],
    LogicalCategory.CAUSALITY: [
        lambda t: _sub(r"\bbecause\b", "although", t),
        lambda t: _sub(r"\s+because\b", ", so", t),
        lambda t: _sub(r"\bsince\b", "before", t),
        lambda t: _sub(r"\s+since\b", ", so", t),
        lambda t: _sub(r"\bdue to\b", "despite", t),
        lambda t: _sub(r"\bas a result\b", "by coincidence", t),
        lambda t: _sub(r",\s*so\b", " because", t),
        lambda t: _swap_around(r"\b(?:because|since)\b", t),
    ],
    LogicalCategory.TEMPORALITY: [
        lambda t: _sub(r"\bafter\b", "before", t),
        lambda t: _sub(r"\bbefore\b", "after", t),
        lambda t: _sub(r"(?<!soon )\bafter\b", "at the same time as", t),
        lambda t: _sub(r"\bbefore\b", "at the same time as", t),
        lambda t: _sub(r"\bsoon after\b", "long before", t),
        lambda t: _sub(r"\bsoon after\b", "well before", t),
        lambda t: _sub(r"\bwhen\b", "long before", t),
        lambda t: _sub(r",\s*then\b", " before", t),
        lambda t: _sub(r"\bthen\b", "but first", t),
        lambda t: _sub(r"\bas soon as\b", "long before", t),
        lambda t: _swap_around(r"\b(?:soon after|after|before|then)\b", t),
    ],
    LogicalCategory.INCLUSION: [
        lambda t: _sub(r"\bincluding\b", "excluding", t),
        lambda t: _sub(r"\bincluding\b", "except", t),
        lambda t: _sub(r"\bincluding\b", "but not", t),
        lambda t: _sub(r"\bincludes\b", "excludes", t),
        lambda t: _sub(r"\bincludes\b", "is without", t),
        lambda t: _sub(r"\bincludes\b", "lacks", t),
        lambda t: _sub(r"\bsuch as\b", "rather than", t),
        lambda t: _sub(r"\bsuch as\b", "except", t),
        lambda t: _sub(r"\bsuch as\b", "but not", t),
        lambda t: _sub(r"\bexcept for\b", "especially", t),
        lambda t: _sub(r"\bexcept\b", "including", t),
        lambda t: _sub(r"\bexcept\b", "as well as", t),
        lambda t: _sub(r"\bis without (a|an) (\w+)", r"has more than one \2", t),
        lambda t: _sub(r"\bwithout\b", "with", t),
        lambda t: _sub(r"\bwithout\b", "together with", t),
    ],
}


def _perturb_all(caption: str, category, seed: int) -> list:
    """Every distinct flip of the category's operators, seed-ordered."""
    category = LogicalCategory(category)
    if category not in default_detector().detect(caption):
        raise PerturbationError(
            f"caption does not realize {category.name.lower()}")
    transforms = _PERTURBATIONS[category]
    order = np.random.default_rng([int(category), seed]).permutation(len(transforms))
    out = []
    for i in order:
        new = transforms[int(i)](caption)
        if new is not None and new != caption and new not in out:
            out.append(new)
    return out


def _perturb(caption: str, category, seed: int, count: int) -> list:
    out = _perturb_all(caption, category, seed)
    if len(out) < count:
        raise PerturbationError(
            f"only {len(out)} usable perturbation sites for "
            f"{LogicalCategory(category).name.lower()} in: {caption!r}")
    return out[:count]


def perturb_rule_based(caption: str, category, seed: int):
    """Three distinct deterministic flips of the category's operator family."""
    return _perturb(caption, category, seed, 3)


# ---------------------------------------------------------------------------
# Backend profiles and the proposal forge.


@dataclass
class BackendProfile:
    """One chat-completion HTTP endpoint.

    response_path walks the JSON reply (dot-separated keys, integer
    segments index lists) to the text payload; when the body is not JSON
    or the path misses, the raw body is used as-is.
    """

    name: str
    endpoint: str
    model: str
    auth_header: str = ""
    auth_value: str = ""
    response_path: str = "choices.0.message.content"
    timeout: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        self._gate = threading.Semaphore(self.max_in_flight)

    def complete(self, prompt: str) -> str:
        body = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if self.auth_header:
            req.add_header(self.auth_header, self.auth_value)
        with self._gate:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read().decode("utf-8", errors="replace")
        return self.extract_text(raw)

    def extract_text(self, raw: str) -> str:
        try:
            doc = json.loads(raw)
        except ValueError:
            return raw
        node = doc
        for part in self.response_path.split("."):
            try:
                node = node[int(part)] if part.lstrip("-").isdigit() else node[part]
            except (KeyError, IndexError, TypeError):
                return raw
        return node if isinstance(node, str) else raw


@dataclass
class RetryPolicy:
    max_retries: int = 3
    backoff_start: float = 1.0
    backoff_factor: float = 2.0
    sleep: object = field(default=time.sleep, repr=False)

    def delays(self) -> list:
        """Wait before each retry; one entry per attempt after the first."""
        return [self.backoff_start * self.backoff_factor ** i
                for i in range(self.max_retries - 1)]


_PROPOSAL_FIELDS = (
    "proposal_id", "source_sample_id", "source_image_ref", "source",
    "scenario", "logic_type", "candidates", "backend", "request", "status",
    "note", "first_is_correct", "diagnostics", "created_at", "updated_at")


@dataclass
class Proposal:
    """One reviewable batch of candidate negatives for a source caption.

    request keeps the exact prompt sent to the backend so reviewers can
    audit what produced the candidates; rule-based proposals leave it empty.
    """

    proposal_id: str
    source_sample_id: str
    source_image_ref: str
    source: str
    scenario: str
    logic_type: str
    candidates: list
    backend: str
    request: str = ""
    status: str = "pending"
    note: str = ""
    first_is_correct: bool = False
    diagnostics: list = field(default_factory=list)
    created_at: float = 0.0
    updated_at: float = 0.0

    def to_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in _PROPOSAL_FIELDS}
        doc["candidates"] = list(self.candidates)
        doc["diagnostics"] = list(self.diagnostics)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Proposal":
        try:
            return cls(**{k: doc[k] for k in _PROPOSAL_FIELDS})
        except KeyError as e:
            raise ForgeError(f"proposal missing field {e.args[0]!r}") from None


def generate_negatives(record, backends, retry_policy=None) -> "Proposal":
    """One-shot wrapper; hold a NegativeForge for fair rotation over a batch."""
    if isinstance(backends, BackendProfile):
        backends = [backends]
    return NegativeForge(backends, retry_policy).generate_negatives(record)


class NegativeForge:
    """Round-robin proposal generator over backend profiles.

    Thread-safe: rotation state is locked, in-flight requests per backend
    are bounded by the profile's semaphore.
    """

    def __init__(self, backends, retry_policy: RetryPolicy | None = None,
                 fallback_seed: int = 0, clock=time.time):
        self.backends = list(backends)
        self.retry_policy = retry_policy or RetryPolicy()
        self.fallback_seed = fallback_seed
        self.clock = clock
        self._lock = threading.Lock()
        self._cycle = itertools.cycle(range(len(self.backends))) if self.backends else None

    def _rotation(self):
        """Backends in request order starting at this proposal's turn."""
        with self._lock:
            start = next(self._cycle) if self._cycle else 0
        return [self.backends[(start + i) % len(self.backends)]
                for i in range(len(self.backends))]

    def generate_negatives(self, record) -> Proposal:
        cats = sorted(record.categories, key=int)
        if not cats:
            raise ForgeError(f"record {record.sample_id} has no categories")
        logic_type = cats[0].name.lower()
        expected = OPTION_COUNT[record.scenario]
        prompt = build_prompt(
            record.scenario, record.positive,
            logic_type if record.scenario != "medicine" else None,
            image_id=record.sample_id if record.scenario == "image" else None,
            video_id=record.sample_id if record.scenario in ("video", "anomaly") else None)
        diagnostics = []
        now = self.clock()
        for backend in self._rotation():
            candidates = self._try_backend(backend, prompt, expected,
                                           record.positive, diagnostics)
            if candidates is not None:
                return self._proposal(record, logic_type, candidates,
                                      backend.name, prompt, diagnostics, now)
        candidates = self._fallback(record, cats, diagnostics)
        if candidates is None:
            p = self._proposal(record, logic_type, [], "none", prompt,
                               diagnostics, now)
            p.status = "failed"
            return p
        return self._proposal(record, logic_type, candidates, "rule-based",
                              "", diagnostics, now)

    def _fallback(self, record, cats, diagnostics):
        if record.scenario == "medicine":
            # correct option first, restated in the report-impression shape
            # so no candidate is byte-identical to the source, then four
            # flips pooled across every detected category, mirroring the
            # four perturbation strategies of the medicine prompt
            correct = (f"Because {record.positive.rstrip('.')}, "
                       "the impression is as reported.")
            pool = [correct]
            for cat in cats:
                try:
                    flips = _perturb_all(record.positive, cat, self.fallback_seed)
                except PerturbationError as e:
                    diagnostics.append(f"rule-based/{cat.name.lower()}: {e}")
                    continue
                for flip in flips:
                    if flip not in pool:
                        pool.append(flip)
                        if len(pool) == 5:
                            return pool
            diagnostics.append(
                f"rule-based: only {len(pool) - 1} distinct flips, need 4")
            return None
        # a caption may lack a usable site for its first category; any of
        # its detected categories is an acceptable perturbation target
        for cat in cats:
            try:
                return _perturb(record.positive, cat, self.fallback_seed, 3)
            except PerturbationError as e:
                diagnostics.append(f"rule-based/{cat.name.lower()}: {e}")
        return None

    def _try_backend(self, backend, prompt, expected, source, diagnostics):
        delays = self.retry_policy.delays()
        for attempt in range(self.retry_policy.max_retries):
            try:
                text = backend.complete(prompt)
                candidates = parse_llm_response(text, expected)
                if any(c == source for c in candidates):
                    raise ParseError("candidate identical to source", text)
                return candidates
            except (ParseError, urllib.error.URLError, OSError) as e:
                reason = getattr(e, "reason", e)
                diagnostics.append(f"{backend.name}: {reason}")
                if attempt < len(delays):
                    self.retry_policy.sleep(delays[attempt])
        return None

    def _proposal(self, record, logic_type, candidates, backend_name,
                  request, diagnostics, now):
        return Proposal(
            proposal_id=str(uuid.uuid4()),
            source_sample_id=record.sample_id,
            source_image_ref=record.image_ref if isinstance(record.image_ref, str) else record.sample_id,
            source=record.positive,
            scenario=record.scenario,
            logic_type=logic_type,
            candidates=list(candidates),
            backend=backend_name,
            request=request,
            first_is_correct=record.scenario == "medicine",
            diagnostics=diagnostics,
            created_at=now,
            updated_at=now,
        )

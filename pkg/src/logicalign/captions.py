"""Caption templates over scenes, with mechanically decidable truth.

Every caption carries a CaptionForm: the logical skeleton (category + slots)
that truth_eval checks against a scene under closed-world semantics. False
captions flip exactly one operator or operand relative to a true statement of
the same family, so each negative stays a minimal logical perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenes import (
    ATTRIBUTES,
    CANONICAL_COMPARATIVES,
    COMPARATIVE_OPPOSITE,
    EVENTS,
    NOUNS,
    SceneSpec,
    fnv1a_64,
)
from .taxonomy import LogicalCategory

BASE_FORM = {
    "bigger": "big", "smaller": "small",
    "taller": "tall", "shorter": "short",
    "heavier": "heavy", "lighter": "light",
    "faster": "fast", "slower": "slow",
    "older": "old", "newer": "new",
}


class TemplateInapplicable(ValueError):
    """The scene lacks material for the requested category template."""


class SlotError(ValueError):
    """A caption form references a value outside the closed vocabulary."""


@dataclass
class CaptionForm:
    """Logical skeleton of one caption; slots feed truth_eval."""

    category: LogicalCategory
    template_id: int
    slots: dict = field(default_factory=dict)
    truth: bool = True

    def to_dict(self) -> dict:
        return {
            "category": self.category.name.lower(),
            "template_id": self.template_id,
            "slots": dict(self.slots),
            "truth": self.truth,
        }


def _art(noun: str) -> str:
    return "an" if noun[0] in "aeiou" else "a"


def _rng_for(scene: SceneSpec, category, template_id: int, truth: bool) -> np.random.Generator:
    return np.random.default_rng(
        [fnv1a_64(scene.scene_id), int(category), int(template_id), int(truth)]
    )


def _check_noun(n):
    if n not in NOUNS:
        raise SlotError(f"unknown noun: {n!r}")


def _check_attr(a):
    if a not in ATTRIBUTES:
        raise SlotError(f"unknown attribute: {a!r}")


def _check_event(e):
    if e not in EVENTS:
        raise SlotError(f"unknown event: {e!r}")


def _check_comparative(adj):
    if adj not in COMPARATIVE_OPPOSITE:
        raise SlotError(f"unknown comparative: {adj!r}")


def truth_eval(scene: SceneSpec, form: CaptionForm) -> bool:
    """Decide a caption form against the scene alone; ignores form.truth."""
    s = form.slots
    kind = s.get("kind")
    if kind == "pair":                       # both A and B present
        _check_noun(s["a"]), _check_noun(s["b"])
        return scene.has_object(s["a"]) and scene.has_object(s["b"])
    if kind == "either":                     # at least one present
        _check_noun(s["a"]), _check_noun(s["b"])
        return scene.has_object(s["a"]) or scene.has_object(s["b"])
    if kind == "neither":                    # both absent
        _check_noun(s["a"]), _check_noun(s["b"])
        return not scene.has_object(s["a"]) and not scene.has_object(s["b"])
    if kind == "absent":                     # operand absent
        _check_noun(s["z"])
        return not scene.has_object(s["z"])
    if kind == "present_claim":              # operand present
        _check_noun(s["z"])
        return scene.has_object(s["z"])
    if kind == "attrs":                      # two attribute facts hold
        _check_noun(s["a"]), _check_noun(s["b"])
        _check_attr(s["attr_a"]), _check_attr(s["attr_b"])
        return scene.has_attribute(s["a"], s["attr_a"]) and scene.has_attribute(s["b"], s["attr_b"])
    if kind == "cmp":                        # strict comparative claim
        _check_noun(s["a"]), _check_noun(s["b"]), _check_comparative(s["adj"])
        adj = s["adj"]
        if adj in CANONICAL_COMPARATIVES:
            return (s["a"], adj, s["b"]) in [tuple(r) for r in scene.relations]
        canon = COMPARATIVE_OPPOSITE[adj]
        return (s["b"], canon, s["a"]) in [tuple(r) for r in scene.relations]
    if kind == "as_as":                      # parity claim; false once either strict direction holds
        _check_noun(s["a"]), _check_noun(s["b"]), _check_comparative(s["family"])
        canon = s["family"] if s["family"] in CANONICAL_COMPARATIVES else COMPARATIVE_OPPOSITE[s["family"]]
        rels = [tuple(r) for r in scene.relations]
        return (s["a"], canon, s["b"]) not in rels and (s["b"], canon, s["a"]) not in rels
    if kind == "not_as":                     # A strictly below B in the family
        _check_noun(s["a"]), _check_noun(s["b"]), _check_comparative(s["family"])
        canon = s["family"] if s["family"] in CANONICAL_COMPARATIVES else COMPARATIVE_OPPOSITE[s["family"]]
        return (s["b"], canon, s["a"]) in [tuple(r) for r in scene.relations]
    if kind == "if_present":                 # material conditional over presence
        _check_noun(s["a"]), _check_noun(s["b"])
        if not scene.has_object(s["a"]):
            return True
        holds = scene.has_object(s["b"])
        return (not holds) if s.get("neg") else holds
    if kind == "link":                       # asserted causal direction
        _check_event(s["cause"]), _check_event(s["effect"])
        return (s["cause"], s["effect"]) in [tuple(l) for l in scene.causal_links]
    if kind == "seq":                        # first strictly precedes second
        _check_event(s["first"]), _check_event(s["second"])
        order = list(scene.event_order)
        if s["first"] not in order or s["second"] not in order:
            return False
        return order.index(s["first"]) < order.index(s["second"])
    raise SlotError(f"unknown form kind: {kind!r}")


def _absent_nouns(scene: SceneSpec) -> list:
    present = set(scene.nouns())
    return [n for n in NOUNS if n not in present]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _pick_two(rng, seq):
    i, j = rng.choice(len(seq), size=2, replace=False)
    return seq[int(i)], seq[int(j)]


# ---------------------------------------------------------------------------
# Per-category caption builders. Each returns (text, slots). Positive builders
# state something true; false builders apply one flip from the category family.
# Surface connectives keep one canonical polarity in positives (because/since,
# after) so that a bag-of-tokens text encoder can separate true from flipped.
# ---------------------------------------------------------------------------


def _surface_family(scene, k: int) -> int:
    """Surface family index for this scene, stable across captions.

    Families rotate across scenes so no single skeleton owns a category,
    but within one scene every caption of a record renders in the same
    family. Mixing families inside a record would add surface-token noise
    to the positive/negative margin that has nothing to do with truth.
    """
    return int(fnv1a_64("surface:" + scene.scene_id) % k)


def _render_pair(kind, a, b, fam):
    """Shared present-pair surface forms, identical for true and false uses."""
    if kind == "neither":
        return f"neither the {a} nor the {b} is in the scene"
    if kind == "either":
        if fam == 0:
            return f"either the {a} or the {b} is in the scene"
        if fam == 1:
            return f"there is either {_art(a)} {a} or {_art(b)} {b} in the scene"
        if fam == 2:
            return f"the {a} or the {b} is in the scene"
        return f"the scene has {_art(a)} {a} or {_art(b)} {b}"
    if fam == 0:
        return f"both the {a} and the {b} are in the scene"
    if fam == 1:
        return f"there is both {_art(a)} {a} and {_art(b)} {b} in the scene"
    if fam == 2:
        return f"the {a} as well as the {b} is in the scene"
    return f"the {a} together with the {b} appears in the scene"


def _conjunction(scene, rng, variant, truth):
    nouns = scene.nouns()
    if len(nouns) < 2:
        raise TemplateInapplicable("conjunction needs two present objects")
    a, b = _pick_two(rng, nouns)
    if truth:
        slots = {"kind": "pair", "a": a, "b": b}
    else:
        absent = _absent_nouns(scene)
        flip = variant % 4
        if flip == 0:
            slots = {"kind": "pair", "a": a, "b": _pick(rng, absent)}
        elif flip == 1:
            slots = {"kind": "pair", "a": _pick(rng, absent), "b": b}
        elif flip == 2:
            slots = {"kind": "neither", "a": a, "b": b}
        else:
            z1, z2 = _pick_two(rng, absent)
            slots = {"kind": "pair", "a": z1, "b": z2}
    fam = _surface_family(scene, 4)
    text = _render_pair(slots["kind"], slots["a"], slots["b"], fam)
    return text, slots


def _disjunction(scene, rng, variant, truth):
    nouns = scene.nouns()
    absent = _absent_nouns(scene)
    a = _pick(rng, nouns)
    b = _pick(rng, absent)
    if truth:
        # Inclusive or with both disjuncts present: the false pair flip then
        # always drops one present object, so presence decides, not wording.
        if len(nouns) >= 2:
            a, b = _pick_two(rng, nouns)
        slots = {"kind": "either", "a": a, "b": b}
    else:
        flip = variant % 4
        if flip == 0:
            slots = {"kind": "pair", "a": a, "b": b}
        elif flip == 1:
            z1, z2 = _pick_two(rng, absent)
            slots = {"kind": "either", "a": z1, "b": z2}
        elif flip == 2:
            slots = {"kind": "neither", "a": a, "b": b}
        else:
            z2 = _pick(rng, [z for z in absent if z != b])
            slots = {"kind": "either", "a": b, "b": z2}
    fam = _surface_family(scene, 4)
    text = _render_pair(slots["kind"], slots["a"], slots["b"], fam)
    return text, slots


def _negation(scene, rng, variant, truth):
    # Positive and negative share one skeleton per family; the only bag-level
    # difference is the negator itself, so the flip is what decides.
    fam = _surface_family(scene, 3)
    if truth:
        if not scene.excluded:
            raise TemplateInapplicable("negation needs an excluded noun")
        z = _pick(rng, scene.excluded)
        slots = {"kind": "absent", "z": z}
        if fam == 0:
            text = f"there is no {z} in the scene"
        elif fam == 1:
            text = f"the scene has no {z}"
        else:
            text = f"the {z} never appears in the scene"
        return text, slots
    z = _pick(rng, _absent_nouns(scene))
    slots = {"kind": "present_claim", "z": z}
    if fam == 0:
        text = f"there is {_art(z)} {z} in the scene"
    elif fam == 1:
        text = f"the scene has {_art(z)} {z}"
    else:
        text = f"the {z} appears in the scene"
    return text, slots


def _contrast(scene, rng, variant, truth):
    withattrs = [(n, attrs) for n, attrs in scene.objects if attrs]
    if len(withattrs) < 2:
        raise TemplateInapplicable("contrast needs two attributed objects")
    (a, attrs_a), (b, attrs_b) = _pick_two(rng, withattrs)
    attr_a = _pick(rng, attrs_a)
    attr_b = _pick(rng, attrs_b)
    slots = {"kind": "attrs", "a": a, "attr_a": attr_a, "b": b, "attr_b": attr_b}
    if not truth:
        # Wrong attributes come from outside the whole scene, not merely off
        # this object, so the flip is visible at the token level.
        scene_attrs = {x for _, attrs in scene.objects for x in attrs}
        wrong = [x for x in ATTRIBUTES if x not in scene_attrs]
        if not wrong:
            raise TemplateInapplicable("contrast flip needs an unused attribute")
        flip = variant % 4
        if flip == 0:
            slots["attr_b"] = _pick(rng, wrong)
        elif flip == 1:
            slots["b"] = _pick(rng, _absent_nouns(scene))
        elif flip == 2:
            slots["a"] = _pick(rng, _absent_nouns(scene))
        else:
            slots["attr_a"] = _pick(rng, wrong)
            slots["attr_b"] = _pick(rng, wrong)
    a, attr_a, b, attr_b = slots["a"], slots["attr_a"], slots["b"], slots["attr_b"]
    fam = _surface_family(scene, 4)
    if fam == 0:
        text = f"the {a} is {attr_a} but the {b} is {attr_b}"
    elif fam == 1:
        text = f"although the {a} is {attr_a}, the {b} is {attr_b}"
    elif fam == 2:
        text = f"the {a} is {attr_a} whereas the {b} is {attr_b}"
    else:
        text = f"the {a} is {attr_a}, however the {b} is {attr_b}"
    return text, slots


def _comparison(scene, rng, variant, truth):
    comps = [tuple(r) for r in scene.relations if r[1] in COMPARATIVE_OPPOSITE]
    if not comps:
        raise TemplateInapplicable("comparison needs a comparative relation")
    a, adj, b = _pick(rng, comps)
    if truth:
        slots = {"kind": "cmp", "a": a, "adj": adj, "b": b}
        text = f"the {a} is {adj} than the {b}"
        return text, slots
    flip = variant % 4
    if flip == 0:
        opp = COMPARATIVE_OPPOSITE[adj]
        slots = {"kind": "cmp", "a": a, "adj": opp, "b": b}
        text = f"the {a} is {opp} than the {b}"
    elif flip == 1:
        slots = {"kind": "as_as", "a": a, "b": b, "family": adj}
        text = f"the {a} is as {BASE_FORM[adj]} as the {b}"
    elif flip == 2:
        slots = {"kind": "not_as", "a": a, "b": b, "family": adj}
        text = f"the {a} is not as {BASE_FORM[adj]} as the {b}"
    else:
        other = _pick(rng, [c for c in CANONICAL_COMPARATIVES if c != adj])
        opp = COMPARATIVE_OPPOSITE[other]
        slots = {"kind": "cmp", "a": a, "adj": opp, "b": b}
        text = f"the {a} is {opp} than the {b}"
    return text, slots


def _condition(scene, rng, variant, truth):
    nouns = scene.nouns()
    if len(nouns) < 2:
        raise TemplateInapplicable("condition needs two present objects")
    a, b = _pick_two(rng, nouns)
    if truth:
        slots = {"kind": "if_present", "a": a, "b": b, "neg": False}
    else:
        flip = variant % 4
        absent = _absent_nouns(scene)
        if flip == 0:
            slots = {"kind": "if_present", "a": a, "b": _pick(rng, absent), "neg": False}
        elif flip == 1:
            slots = {"kind": "if_present", "a": a, "b": b, "neg": True}
        else:
            z = absent[int(rng.integers(len(absent)))]
            slots = {"kind": "if_present", "a": a, "b": z, "neg": False}
    a, b = slots["a"], slots["b"]
    fam = _surface_family(scene, 4)
    if slots["neg"]:
        # "missing" rather than "no": the bare "no" token belongs to negation
        # positives, and reusing it here would pull its polarity both ways.
        if fam == 0:
            text = f"if there is {_art(a)} {a} in the scene, the {b} is missing"
        elif fam == 1:
            text = f"if the scene has {_art(a)} {a}, the {b} is missing"
        elif fam == 2:
            text = f"provided that there is {_art(a)} {a}, the {b} is missing"
        else:
            text = f"in case the scene has {_art(a)} {a}, the {b} is missing"
    elif fam == 0:
        text = f"if there is {_art(a)} {a} in the scene, there is {_art(b)} {b} too"
    elif fam == 1:
        text = f"if the scene has {_art(a)} {a}, it has {_art(b)} {b} too"
    elif fam == 2:
        text = f"provided that there is {_art(a)} {a}, there is {_art(b)} {b} too"
    else:
        text = f"in case the scene has {_art(a)} {a}, it has {_art(b)} {b} too"
    return text, slots


def _render_link(cause, effect, fam):
    if fam == 0:
        return f"{EVENTS[effect]} because {EVENTS[cause]}"
    return f"{EVENTS[effect]} since {EVENTS[cause]}"


def _causality(scene, rng, variant, truth):
    if not scene.causal_links:
        raise TemplateInapplicable("causality needs a causal link")
    cause, effect = _pick(rng, [tuple(l) for l in scene.causal_links])
    fam = _surface_family(scene, 2)
    if truth:
        slots = {"kind": "link", "cause": cause, "effect": effect}
        return _render_link(cause, effect, fam), slots
    flip = variant % 4
    # Wrong events come from outside the scene, so the swap shows up in the
    # caption tokens and not just in the link table.
    outside = [e for e in EVENTS if e not in scene.event_order]
    if flip == 0:
        # "X, so Y" asserts X causes Y; scene links never run both ways.
        slots = {"kind": "link", "cause": effect, "effect": cause}
        text = f"{EVENTS[effect]}, so {EVENTS[cause]}"
        return text, slots
    if not outside:
        raise TemplateInapplicable("causality flip needs an unused event")
    z = _pick(rng, outside)
    if flip == 1:
        slots = {"kind": "link", "cause": z, "effect": effect}
    elif flip == 2:
        slots = {"kind": "link", "cause": cause, "effect": z}
    else:
        slots = {"kind": "link", "cause": z, "effect": cause}
    return _render_link(slots["cause"], slots["effect"], fam), slots


def _render_seq(first, second, fam):
    if fam == 0:
        return f"{EVENTS[second]} after {EVENTS[first]}"
    if fam == 1:
        return f"{EVENTS[second]} soon after {EVENTS[first]}"
    return f"{EVENTS[first]}, then {EVENTS[second]}"


def _temporality(scene, rng, variant, truth):
    order = list(scene.event_order)
    if len(order) < 2:
        raise TemplateInapplicable("temporality needs two ordered events")
    i = int(rng.integers(len(order) - 1))
    e1, e2 = order[i], order[i + 1]
    fam = _surface_family(scene, 3)
    if truth:
        slots = {"kind": "seq", "first": e1, "second": e2}
        return _render_seq(e1, e2, fam), slots
    flip = variant % 4
    outside = [e for e in EVENTS if e not in order]
    if flip == 0:
        slots = {"kind": "seq", "first": e2, "second": e1}
        return f"{EVENTS[e2]} before {EVENTS[e1]}", slots
    z = _pick(rng, outside)
    if flip == 1:
        slots = {"kind": "seq", "first": z, "second": e2}
    elif flip == 2:
        slots = {"kind": "seq", "first": e1, "second": z}
    else:
        slots = {"kind": "seq", "first": z, "second": e1}
    return _render_seq(slots["first"], slots["second"], fam), slots


def _render_membership(z, fam):
    if fam == 0:
        return f"the scene includes {_art(z)} {z}"
    if fam == 1:
        return f"many things appear in the scene, such as the {z}"
    return f"there are many things here, including the {z}"


def _inclusion(scene, rng, variant, truth):
    # Single-object membership claims; pair joiners like "and" would drag in
    # conjunction keywords, so inclusion stays on includes/such as/except.
    nouns = scene.nouns()
    if not nouns:
        raise TemplateInapplicable("inclusion needs a present object")
    a = _pick(rng, nouns)
    fam = _surface_family(scene, 3)
    if truth:
        slots = {"kind": "present_claim", "z": a}
        return _render_membership(a, fam), slots
    flip = variant % 4
    if flip == 1:
        slots = {"kind": "absent", "z": a}
        text = f"the scene includes everything except the {a}"
        return text, slots
    if flip == 2:
        slots = {"kind": "absent", "z": a}
        text = f"the scene is without {_art(a)} {a}"
        return text, slots
    z = _pick(rng, _absent_nouns(scene))
    slots = {"kind": "present_claim", "z": z}
    return _render_membership(z, fam), slots


_BUILDERS = {
    LogicalCategory.CONJUNCTION: _conjunction,
    LogicalCategory.DISJUNCTION: _disjunction,
    LogicalCategory.NEGATION: _negation,
    LogicalCategory.CONTRAST: _contrast,
    LogicalCategory.COMPARISON: _comparison,
    LogicalCategory.CONDITION: _condition,
    LogicalCategory.CAUSALITY: _causality,
    LogicalCategory.TEMPORALITY: _temporality,
    LogicalCategory.INCLUSION: _inclusion,
}


def scene_to_caption(scene: SceneSpec, category: LogicalCategory, template_id: int,
                     truth: bool = True):
    """Render one caption of the given category; deterministic in its arguments.

    Returns (text, CaptionForm). Raises TemplateInapplicable when the scene has
    no material for the category.
    """
    rng = _rng_for(scene, category, template_id, truth)
    text, slots = _BUILDERS[category](scene, rng, template_id, truth)
    form = CaptionForm(category=category, template_id=template_id, slots=slots, truth=truth)
    return text, form


def negative_captions(scene: SceneSpec, category: LogicalCategory, n: int, start_id: int = 0):
    """n distinct false captions of the category, all verified false for the scene."""
    out, seen = [], set()
    template_id = start_id
    attempts = 0
    while len(out) < n:
        if attempts > 40:
            raise TemplateInapplicable(
                f"could not draw {n} distinct false {category.name.lower()} captions")
        text, form = scene_to_caption(scene, category, template_id, truth=False)
        template_id += 1
        attempts += 1
        if text in seen:
            continue
        if truth_eval(scene, form):
            continue
        seen.add(text)
        out.append((text, form))
    return out

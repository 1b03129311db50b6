"""Acceptance battery: one test per release criterion, one verdict line each.

Every test prints a single ``[acceptance N] name: PASS/FAIL (detail)`` line
before asserting, so ``pytest -s tests/test_acceptance.py`` reads as a
checklist. The trained-model fixtures are module scoped and shared; the two
training runs dominate the wall time (roughly two minutes total).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from logicalign.cli import main
from logicalign.corpus import MANIFEST_SUFFIX, CorpusConfig, build_corpus, read_corpus
from logicalign.evaluation import (
    EncoderModel,
    cluster_purity,
    mcq_accuracy,
    retrieval_recall,
)
from logicalign.forge import (
    OPTION_COUNT,
    NegativeForge,
    parse_llm_response,
    render,
)
from logicalign.losses import loss_clip, loss_logic, loss_mc
from logicalign.model import encode_texts, init_params, logic_scores
from logicalign.review import ReviewStore
from logicalign.service import ReviewService
from logicalign.taxonomy import category_vector, default_detector
from logicalign.training import TrainConfig, train

from helpers import fd_check, random_instance
from test_forge import _FakeBackendServer, _completion_body, _no_sleep, _profile
from test_review import make_proposal
from test_taxonomy import BOUNDARY_TRAPS, CATEGORY_EXAMPLES


def _verdict(num, name, ok, detail=""):
    state = "PASS" if ok else "FAIL"
    extra = f" ({detail})" if detail else ""
    print(f"[acceptance {num}] {name}: {state}{extra}")
    return ok


@pytest.fixture(scope="module")
def corpora():
    train_recs, _ = build_corpus(CorpusConfig(n_scenes=2000, seed=7))
    held_recs, _ = build_corpus(CorpusConfig(n_scenes=500, seed=7, scene_offset=2000))
    return train_recs, held_recs


@pytest.fixture(scope="module")
def short_runs(corpora):
    """The full preset and both ablations at matched epochs, seeds, and data."""
    train_recs, _ = corpora
    out = {}
    for preset in ("full", "variant3", "variant1"):
        cfg = TrainConfig.preset(preset, epochs=16, batch_size=64,
                                 learning_rate=3e-3, seed=0)
        t0 = time.perf_counter()
        out[preset] = train(cfg, train_recs)
        out[preset + "_seconds"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def long_run(corpora):
    """A converged full-preset run; the logic head needs the extra epochs."""
    train_recs, _ = corpora
    cfg = TrainConfig.preset("full", epochs=400, batch_size=64,
                             learning_rate=3e-3, seed=0)
    return train(cfg, train_recs)


def test_1_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        params, batch, weights, modes = random_instance(seed)
        rel, _, _ = fd_check(params, batch, weights, modes, h=1e-5)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60.0
    assert _verdict(1, "analytic gradients vs central differences", ok,
                    f"max rel err {worst:.2e} over 100 instances, {elapsed:.1f}s")


def test_2_loss_value_oracles(short_runs, long_run):
    checks = []
    for n in (2, 4, 8):
        checks.append(abs(loss_clip(np.full((n, n), 0.37), 0.5) - math.log(n)) < 1e-9)
    v = np.array([1.0, 0.0])
    opts4 = np.tile(np.array([[0.6, 0.8]]), (4, 1))
    opts5 = np.tile(np.array([[0.6, 0.8]]), (5, 1))
    checks.append(abs(loss_mc(v, opts4, 0, 0.9) - math.log(4)) < 1e-9)
    checks.append(abs(loss_mc(v, opts5, 2, 0.9) - math.log(5)) < 1e-9)
    labels = np.array([[1, 0, 0, 1, 0, 0, 0, 1, 0],
                       [0, 1, 1, 0, 0, 0, 0, 0, 0],
                       [0, 0, 0, 0, 1, 0, 1, 0, 1]], dtype=float)
    checks.append(abs(loss_logic(np.zeros((3, 9)), labels) - math.log(2)) < 1e-9)

    # Logged totals must recompose from their logged parts with no tolerance.
    steps = 0
    exact = True
    for result in (short_runs["full"], short_runs["variant3"],
                   short_runs["variant1"], long_run):
        w = result.config.weights
        for e in result.log:
            total = w.alpha * e["l_clip"] + w.beta * e["l_mc"] + w.gamma * e["l_logic"]
            exact = exact and total == e["l_total"]
            steps += 1
    ok = all(checks) and exact
    assert _verdict(2, "loss oracles and exact decomposition", ok,
                    f"closed forms within 1e-9, {steps} logged steps bit-exact")


def test_3_parser_regression():
    det = default_detector()
    hits = sum(cat in det.detect(text) for text, cat in CATEGORY_EXAMPLES)
    traps = sum(cat not in det.detect(text) for text, cat in BOUNDARY_TRAPS)
    ok = hits == 9 and len(BOUNDARY_TRAPS) >= 20 and traps == len(BOUNDARY_TRAPS)
    assert _verdict(3, "category parser regression", ok,
                    f"{hits}/9 examples, {traps}/{len(BOUNDARY_TRAPS)} traps clean")


def test_4_closed_loop_training(short_runs, corpora):
    _, held = corpora
    model = EncoderModel.from_result(short_runs["full"])
    mcq = mcq_accuracy(model, held).rate
    r1 = retrieval_recall(model, held, k=1).rate
    seconds = short_runs["full_seconds"]
    floor = 10.0 / len(held)
    ok = mcq >= 0.75 and r1 >= floor and seconds < 600.0
    assert _verdict(4, "closed-loop training quality", ok,
                    f"MCQ {mcq:.3f} >= 0.75, R@1 {r1:.3f} >= {floor:.3f}, "
                    f"train {seconds:.0f}s < 600s")


def test_5_ablation_direction(short_runs, corpora):
    _, held = corpora
    rates = {}
    for preset in ("full", "variant3", "variant1"):
        model = EncoderModel.from_result(short_runs[preset])
        rates[preset] = (mcq_accuracy(model, held).rate,
                         retrieval_recall(model, held, k=1).rate)
    mcq_gap_ok = rates["variant3"][0] < rates["full"][0] - 0.05
    r1_order_ok = rates["variant1"][1] < rates["variant3"][1]
    ok = mcq_gap_ok and r1_order_ok
    assert _verdict(5, "ablation direction", ok,
                    f"MCQ variant3 {rates['variant3'][0]:.3f} < full "
                    f"{rates['full'][0]:.3f} - 0.05; R@1 variant1 "
                    f"{rates['variant1'][1]:.3f} < variant3 {rates['variant3'][1]:.3f}")


def test_6_logic_head_quality(long_run, corpora):
    _, held = corpora
    det = default_detector()
    texts, labels = [], []
    for r in held:
        for t in r.options():
            texts.append(t)
            labels.append(category_vector(det.detect(t)))
    Y = np.array(labels)
    toks = [long_run.vocab.encode(t) for t in texts]
    S = logic_scores(long_run.params, encode_texts(long_run.params, toks))
    P = (1.0 / (1.0 + np.exp(-S)) > 0.5).astype(float)
    f1s = []
    for c in range(9):
        tp = float(((P[:, c] == 1) & (Y[:, c] == 1)).sum())
        fp = float(((P[:, c] == 1) & (Y[:, c] == 0)).sum())
        fn = float(((P[:, c] == 0) & (Y[:, c] == 1)).sum())
        f1s.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    macro = float(np.mean(f1s))
    ok = macro >= 0.90
    assert _verdict(6, "logic head macro-F1", ok,
                    f"held-out macro-F1 {macro:.3f} >= 0.90 at threshold 0.5")


def test_7_embedding_separation(long_run):
    model = EncoderModel.from_result(long_run)
    trained = cluster_purity(model).purity
    blank = EncoderModel(params=init_params(long_run.dims, seed=99),
                         vocab=long_run.vocab)
    untrained = cluster_purity(blank).purity
    gap = trained - untrained
    ok = trained >= 0.80 and gap >= 0.30
    assert _verdict(7, "embedding separation", ok,
                    f"trained {trained:.3f} (floor 0.80), untrained "
                    f"{untrained:.3f}, gap {gap:+.3f} vs required +0.30")


def test_8_determinism(tmp_path):
    artifacts = []
    for run in ("a", "b"):
        root = tmp_path / run
        root.mkdir()
        corpus = root / "corpus.jsonl"
        ckpt = root / "model.npz"
        slog = root / "steps.jsonl"
        rep = root / "report.jsonl"
        runner = CliRunner()
        for args in (
            ["synth", "--scenes", "80", "--seed", "3", "--out", str(corpus)],
            ["train", "--corpus", str(corpus), "--preset", "full",
             "--epochs", "2", "--seed", "0", "--out", str(ckpt),
             "--log", str(slog)],
            ["eval", "--checkpoint", str(ckpt), "--corpus", str(corpus),
             "--out", str(rep)],
        ):
            res = runner.invoke(main, args)
            assert res.exit_code == 0, res.output
        manifest = Path(str(corpus) + MANIFEST_SUFFIX)
        artifacts.append(tuple(p.read_bytes()
                               for p in (corpus, manifest, slog, rep)))
    ok = artifacts[0] == artifacts[1]
    assert _verdict(8, "synth+train+eval determinism", ok,
                    "corpus, manifest, step log, and report byte-identical")


def test_9_forge_robustness():
    records, _ = build_corpus(CorpusConfig(n_scenes=60, seed=11))
    flake = np.random.default_rng(23)

    def script(idx, prompt):
        roll = flake.random()
        if roll < 0.10:
            return 200, _completion_body("no numbered options in this reply")
        if roll < 0.20:
            return 200, _completion_body("1. only one line\n2. and a second")
        if roll < 0.30:
            return 500, b'{"error": "upstream"}'
        return 200, _completion_body(
            f"1. stand-in negative {idx} alpha\n"
            f"2. stand-in negative {idx} beta\n"
            f"3. stand-in negative {idx} gamma")

    srv = _FakeBackendServer(script)
    try:
        forge = NegativeForge([_profile(srv)], retry_policy=_no_sleep())
        proposals = [forge.generate_negatives(r) for r in records]
    finally:
        srv.close()
    good = sum(
        p.status == "pending"
        and len(p.candidates) == OPTION_COUNT[p.scenario]
        and all(c and c != p.source for c in p.candidates)
        for p in proposals)

    rng = np.random.default_rng(7)
    words = ("drizzle", "lantern", "Before", "2.", "quiet", "orchard", "no",
             "naranja", "7", "falls,", "the", "stone;", "bright", "after")
    inverse_failures = 0
    for _ in range(1000):
        triple = [" ".join(rng.choice(words, size=rng.integers(1, 7)))
                  for _ in range(3)]
        if parse_llm_response(render(triple), 3) != triple:
            inverse_failures += 1
    ok = good == len(records) and inverse_failures == 0
    assert _verdict(9, "forge robustness under 30% malformed replies", ok,
                    f"{good}/{len(records)} valid proposals, "
                    f"{1000 - inverse_failures}/1000 triples round-trip")


def test_10_review_round_trip(tmp_path):
    store = ReviewStore(tmp_path / "store")
    proposals = [make_proposal(i) for i in range(20)]
    for p in proposals:
        store.add_proposal(p)
    service = ReviewService(store, port=0)
    service.start()

    import urllib.request

    def post(url, payload):
        import json as _json
        req = urllib.request.Request(
            url, data=_json.dumps(payload).encode(),
            headers={"Content-Type": "application/json"}, method="POST")
        with urllib.request.urlopen(req) as resp:
            return _json.loads(resp.read())

    try:
        base = service.url
        for p in proposals[:10]:
            post(f"{base}/proposals/{p.proposal_id}/decision",
                 {"action": "accept"})

        # Crash mid-session: drop the service and the store without closing.
        service.stop()
        store = ReviewStore(tmp_path / "store")
        survived = store.stats()["counts"]["accepted"]
        service = ReviewService(store, port=0)
        service.start()
        base = service.url

        for p in proposals[10:15]:
            post(f"{base}/proposals/{p.proposal_id}/decision",
                 {"action": "reject"})
        edited = {}
        for p in proposals[15:20]:
            texts = [f"edited {p.proposal_id[-2:]}-{j}" for j in range(3)]
            edited[p.proposal_id] = texts
            post(f"{base}/proposals/{p.proposal_id}/decision",
                 {"action": "edit", "texts": texts})
        out_path = tmp_path / "final.jsonl"
        post(f"{base}/datasets/finalize", {"path": str(out_path)})
    finally:
        service.stop()
        store.close()

    records, manifest = read_corpus(out_path)
    by_id = {r.sample_id: r for r in records}
    edits_kept = all(by_id[f"s{i}"].negatives == edited[proposals[i].proposal_id]
                     for i in range(15, 20))
    ok = (survived == 10 and len(records) == 15 and edits_kept
          and manifest["counts"]["records"] == 15)
    assert _verdict(10, "review round-trip with crash mid-session", ok,
                    f"{survived}/10 decisions survived restart, "
                    f"{len(records)} finalized records, edits kept: {edits_kept}")

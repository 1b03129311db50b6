"""Proposal review lifecycle: event-sourced store and dataset finalization.

Every state change is one appended event; a snapshot caps replay cost.
Replaying the log from the latest snapshot reproduces the store exactly,
so a crash between any two events loses nothing that was acknowledged.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from pathlib import Path

from .corpus import SampleRecord, dumps_line, write_corpus
from .forge import Proposal
from .taxonomy import detect_categories

logger = logging.getLogger(__name__)

EVENT_LOG = "events.jsonl"
SNAPSHOT = "snapshot.json"

DECISION_ACTIONS = ("accept", "reject", "edit")
_ACTION_STATUS = {"accept": "accepted", "reject": "rejected", "edit": "edited"}


class ReviewError(ValueError):
    pass


class UnknownProposalError(ReviewError):
    """No proposal with that id in the store."""


class ConflictError(ReviewError):
    """Decision on a proposal that is no longer pending."""


class ReviewStore:
    """Append-only event log plus snapshot over a directory.

    All mutations run under one writer lock: an event is fsynced to the log
    before the in-memory state changes, so acknowledged decisions survive a
    crash at any point. Reads take the same lock briefly to copy out a
    consistent view.
    """

    def __init__(self, root, snapshot_every: int = 100):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.snapshot_every = int(snapshot_every)
        self._lock = threading.Lock()
        self._proposals: dict = {}
        self._order: list = []
        self._events_since_snapshot = 0
        self._replay()
        self._log = (self.root / EVENT_LOG).open("a", encoding="utf-8")

    # -- persistence --------------------------------------------------------

    def _replay(self):
        snap_path = self.root / SNAPSHOT
        log_path = self.root / EVENT_LOG
        offset = 0
        if snap_path.exists():
            snap = json.loads(snap_path.read_text("utf-8"))
            offset = snap["event_count"]
            for doc in snap["proposals"]:
                p = Proposal.from_dict(doc)
                self._proposals[p.proposal_id] = p
                self._order.append(p.proposal_id)
        applied = 0
        replayed = 0
        if log_path.exists():
            lines = [l for l in log_path.read_text("utf-8").splitlines()
                     if l.strip()]
            events = []
            for i, line in enumerate(lines):
                try:
                    events.append(json.loads(line))
                except ValueError:
                    if i == len(lines) - 1:
                        # torn tail from a crash mid-append; the event was
                        # never acknowledged, so dropping it is correct
                        logger.warning("dropping torn final log line")
                        log_path.write_text(
                            "".join(dumps_line(e) for e in events), "utf-8")
                        break
                    raise ReviewError(f"corrupt event log at line {i + 1}")
            for event in events:
                applied += 1
                if applied <= offset:
                    continue
                self._apply(event)
                replayed += 1
        if applied < offset:
            raise ReviewError(
                f"snapshot claims {offset} events but log holds {applied}")
        self._events_since_snapshot = replayed
        if replayed:
            logger.info("replayed %d events on top of snapshot", replayed)
        self._event_count = applied

    def _apply(self, event: dict):
        kind = event["event"]
        if kind == "proposal_added":
            p = Proposal.from_dict(event["proposal"])
            if p.proposal_id in self._proposals:
                raise ReviewError(f"duplicate proposal {p.proposal_id}")
            self._proposals[p.proposal_id] = p
            self._order.append(p.proposal_id)
        elif kind == "decision":
            p = self._proposals.get(event["proposal_id"])
            if p is None:
                raise UnknownProposalError(event["proposal_id"])
            p.status = _ACTION_STATUS[event["action"]]
            if event["action"] == "edit":
                p.candidates = list(event["texts"])
            p.note = event.get("note", "")
            p.updated_at = event["at"]
        else:
            raise ReviewError(f"unknown event kind {kind!r}")

    def _append(self, event: dict):
        # write-ahead: the event is durable before the state mutates
        self._log.write(dumps_line(event))
        self._log.flush()
        os.fsync(self._log.fileno())
        self._apply(event)
        self._event_count += 1
        self._events_since_snapshot += 1
        if self._events_since_snapshot >= self.snapshot_every:
            self._write_snapshot()

    def _write_snapshot(self):
        snap = {
            "event_count": self._event_count,
            "proposals": [self._proposals[pid].to_dict() for pid in self._order],
        }
        tmp = self.root / (SNAPSHOT + ".tmp")
        with tmp.open("w", encoding="utf-8") as f:
            json.dump(snap, f, ensure_ascii=False, separators=(",", ":"))
            f.flush()
            os.fsync(f.fileno())
        tmp.replace(self.root / SNAPSHOT)
        self._events_since_snapshot = 0

    def snapshot(self):
        with self._lock:
            self._write_snapshot()

    def close(self):
        with self._lock:
            if not self._log.closed:
                self._log.close()

    # -- mutations ----------------------------------------------------------

    def add_proposal(self, proposal: Proposal) -> Proposal:
        with self._lock:
            if proposal.proposal_id in self._proposals:
                raise ReviewError(f"duplicate proposal {proposal.proposal_id}")
            self._append({"event": "proposal_added",
                          "proposal": proposal.to_dict()})
            return self._copy(self._proposals[proposal.proposal_id])

    def decide(self, proposal_id: str, action: str, texts=None,
               note: str = "", at=None) -> Proposal:
        if action not in DECISION_ACTIONS:
            raise ReviewError(f"unknown action {action!r}")
        with self._lock:
            p = self._proposals.get(proposal_id)
            if p is None:
                raise UnknownProposalError(f"no proposal {proposal_id}")
            if p.status != "pending":
                raise ConflictError(
                    f"proposal {proposal_id} already {p.status}")
            event = {"event": "decision", "proposal_id": proposal_id,
                     "action": action, "note": note or "",
                     "at": time.time() if at is None else at}
            if action == "edit":
                texts = self._check_edit_texts(p, texts)
                event["texts"] = texts
            elif texts:
                raise ReviewError("texts only apply to edit decisions")
            self._append(event)
            return self._copy(p)

    @staticmethod
    def _check_edit_texts(p: Proposal, texts) -> list:
        if not texts or not isinstance(texts, list):
            raise ReviewError("edit requires a list of replacement texts")
        if len(texts) != len(p.candidates):
            raise ReviewError(
                f"edit must supply {len(p.candidates)} texts, got {len(texts)}")
        clean = []
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise ReviewError("edit texts must be non-empty strings")
            clean.append(t)
        # the correct option of a medicine proposal may restate the source;
        # every other slot must stay a genuine negative
        start = 1 if p.first_is_correct else 0
        if any(t == p.source for t in clean[start:]):
            raise ReviewError("edited candidate equals the source caption")
        return clean

    # -- reads --------------------------------------------------------------

    @staticmethod
    def _copy(p: Proposal) -> Proposal:
        return Proposal.from_dict(p.to_dict())

    def get(self, proposal_id: str) -> Proposal:
        with self._lock:
            p = self._proposals.get(proposal_id)
            if p is None:
                raise UnknownProposalError(f"no proposal {proposal_id}")
            return self._copy(p)

    def list(self, status=None, limit: int = 50, offset: int = 0) -> dict:
        """Insertion-ordered page plus the total matching count."""
        if status is not None and status not in (
                "pending", "accepted", "rejected", "edited", "failed"):
            raise ReviewError(f"unknown status {status!r}")
        limit = max(0, int(limit))
        offset = max(0, int(offset))
        with self._lock:
            ids = [pid for pid in self._order
                   if status is None or self._proposals[pid].status == status]
            page = [self._copy(self._proposals[pid])
                    for pid in ids[offset:offset + limit]]
            return {"proposals": page, "total": len(ids),
                    "limit": limit, "offset": offset}

    def stats(self) -> dict:
        with self._lock:
            counts = {s: 0 for s in
                      ("pending", "accepted", "rejected", "edited", "failed")}
            by_logic: dict = {}
            for p in self._proposals.values():
                counts[p.status] += 1
                row = by_logic.setdefault(
                    p.logic_type,
                    {s: 0 for s in counts})
                row[p.status] += 1
            return {"counts": counts, "total": len(self._proposals),
                    "by_logic_type": {k: by_logic[k] for k in sorted(by_logic)},
                    "event_count": self._event_count}

    # -- finalization -------------------------------------------------------

    def finalize(self, out_path) -> dict:
        """Write accepted + edited proposals as a corpus file.

        Deterministic in the store state: same decisions, same bytes.
        Returns the manifest.
        """
        with self._lock:
            chosen = [self._copy(self._proposals[pid]) for pid in self._order
                      if self._proposals[pid].status in ("accepted", "edited")]
            counts = {s: 0 for s in
                      ("pending", "accepted", "rejected", "edited", "failed")}
            for p in self._proposals.values():
                counts[p.status] += 1
        records = [proposal_to_record(p) for p in chosen]
        manifest = {
            "source": "review",
            "counts": {
                "records": len(records),
                "by_review_status": counts,
            },
        }
        write_corpus(out_path, records, manifest)
        return manifest


def proposal_to_record(p: Proposal) -> SampleRecord:
    """An accepted or edited proposal as one MCQ record.

    Medicine proposals carry their correct option in slot 0; elsewhere the
    source caption is the positive and every candidate is a negative.
    """
    if p.first_is_correct:
        positive, negatives = p.candidates[0], list(p.candidates[1:])
    else:
        positive, negatives = p.source, list(p.candidates)
    return SampleRecord(
        sample_id=p.source_sample_id,
        scenario=p.scenario,
        image_ref=p.source_image_ref,
        positive=positive,
        negatives=negatives,
        categories=detect_categories(positive),
    )

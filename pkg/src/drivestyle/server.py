"""HTTP service for the manual annotation stage.

Serves segment time series (plus features and optional semantics for
context) to browser annotators, records one vote per annotator per
segment, and finalizes labels by strict majority over at least three
votes. All label mutations go through one lock and an append-only vote
log, so concurrent annotators cannot lose votes.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .errors import InputError
from .extraction import DrivingSegment, read_segments
from .features import FeatureVector, featurize, read_features
from .labeling import (LABEL_NAMES, MIN_MANUAL_VOTES, NAME_TO_LABEL,
                       PROVENANCE_MANUAL, StyleLabel, _majority, read_labels,
                       write_labels)
from .semantics import SemanticResult, read_semantic_results

STATUS_PENDING = "pending"
STATUS_LABELED = "labeled"
STATUS_DISPUTED = "disputed"


def normalize_label(value) -> int:
    if isinstance(value, str):
        if value in NAME_TO_LABEL:
            return NAME_TO_LABEL[value]
        if value.isdigit():
            value = int(value)
    if value in LABEL_NAMES:
        return int(value)
    raise InputError(f"unknown label value: {value!r}")


@dataclass
class SegmentState:
    segment: DrivingSegment
    features: Optional[FeatureVector] = None
    semantics: Optional[SemanticResult] = None
    stage_label: Optional[StyleLabel] = None  # rule or cluster provenance
    votes: dict[str, int] = field(default_factory=dict)
    final: Optional[StyleLabel] = None
    disputed: bool = False

    @property
    def status(self) -> str:
        if self.disputed:
            return STATUS_DISPUTED
        if self.final is not None or self.stage_label is not None:
            return STATUS_LABELED
        return STATUS_PENDING


class LabelStore:
    """Vote log plus derived per-segment state; single-writer semantics."""

    def __init__(self, store_dir: str | Path, segments: list[DrivingSegment],
                 stage_labels: Optional[list[StyleLabel]] = None,
                 features: Optional[list[FeatureVector]] = None,
                 semantics: Optional[list[SemanticResult]] = None):
        self.dir = Path(store_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.votes_log = self.dir / "votes.log.jsonl"
        self.final_path = self.dir / "manual_labels.jsonl"
        self.lock = threading.Lock()

        feature_by_id = {f.segment_id: f for f in features or []}
        semantics_by_id = {s.segment_id: s for s in semantics or []}
        self.state: dict[str, SegmentState] = {}
        for seg in segments:
            self.state[seg.segment_id] = SegmentState(
                segment=seg,
                features=feature_by_id.get(seg.segment_id) or featurize(seg),
                semantics=semantics_by_id.get(seg.segment_id),
            )
        for lab in stage_labels or []:
            if lab.segment_id in self.state:
                st = self.state[lab.segment_id]
                if lab.provenance == PROVENANCE_MANUAL:
                    st.final = lab
                    st.votes = dict(lab.votes or {})
                else:
                    st.stage_label = lab
        self._replay_log()

    def _replay_log(self) -> None:
        if not self.votes_log.exists():
            return
        with open(self.votes_log, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                st = self.state.get(rec["segment_id"])
                if st is not None:
                    st.votes[rec["annotator_id"]] = int(rec["label"])

    def record_vote(self, segment_id: str, annotator_id: str, label) -> dict:
        label = normalize_label(label)
        if not annotator_id:
            raise InputError("annotator_id must be non-empty")
        with self.lock:
            st = self._require(segment_id)
            st.votes[annotator_id] = label
            with open(self.votes_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "segment_id": segment_id,
                    "annotator_id": annotator_id,
                    "label": label,
                }, sort_keys=True))
                fh.write("\n")
            return {"segment_id": segment_id, "votes": dict(st.votes)}

    def finalize(self, segment_id: str) -> dict:
        with self.lock:
            st = self._require(segment_id)
            if len(st.votes) < MIN_MANUAL_VOTES:
                return {
                    "error": "not enough votes",
                    "required_votes": MIN_MANUAL_VOTES,
                    "votes": len(st.votes),
                    "_status": 409,
                }
            winner, _ = _majority(st.votes)
            if winner is None:
                st.disputed = True
                st.final = None
            else:
                st.disputed = False
                st.final = StyleLabel(
                    segment_id=segment_id, label=winner,
                    provenance=PROVENANCE_MANUAL, votes=dict(st.votes))
            self._write_final()
            return {"segment_id": segment_id, "status": st.status,
                    "label": winner, "votes": dict(st.votes)}

    def _write_final(self) -> None:
        finals = [st.final for st in self.state.values() if st.final is not None]
        write_labels(self.final_path, finals)

    def _require(self, segment_id: str) -> SegmentState:
        if segment_id not in self.state:
            raise KeyError(segment_id)
        return self.state[segment_id]

    def list_segments(self, status: Optional[str] = None) -> list[dict]:
        rows = []
        for sid in sorted(self.state):
            st = self.state[sid]
            if status and st.status != status:
                continue
            rows.append(self.summary(sid))
        return rows

    def summary(self, segment_id: str) -> dict:
        st = self._require(segment_id)
        stage = None
        if st.stage_label is not None:
            stage = {"label": st.stage_label.label,
                     "label_name": LABEL_NAMES[st.stage_label.label],
                     "provenance": st.stage_label.provenance}
        return {
            "segment_id": segment_id,
            "scenario": st.segment.scenario,
            "duration": st.segment.duration,
            "status": st.status,
            "stage_outcome": stage,
            "vote_count": len(st.votes),
            "final_label": None if st.final is None else st.final.label,
        }

    def detail(self, segment_id: str) -> dict:
        st = self._require(segment_id)
        seg = st.segment
        payload = self.summary(segment_id)
        payload["dt"] = seg.dt
        payload["t0"] = seg.t0
        payload["channels"] = {k: [float(v) for v in arr] for k, arr in seg.channels.items()}
        payload["feature_means"] = list(st.features.values) if st.features else None
        if seg.key_times is not None:
            payload["key_times"] = {
                "t_start": seg.key_times.t_start,
                "t_cross": seg.key_times.t_cross,
                "t_end": seg.key_times.t_end,
            }
        if st.semantics is not None:
            payload["semantics"] = st.semantics.semantics
            payload["reasoning"] = st.semantics.reasoning
        return payload

    def progress(self) -> dict:
        counts = {STATUS_PENDING: 0, STATUS_LABELED: 0, STATUS_DISPUTED: 0}
        by_annotator: dict[str, int] = {}
        for st in self.state.values():
            counts[st.status] += 1
            for annotator in st.votes:
                by_annotator[annotator] = by_annotator.get(annotator, 0) + 1
        return {"counts": counts, "votes_per_annotator": by_annotator,
                "total": len(self.state)}


class _Handler(BaseHTTPRequestHandler):
    store: LabelStore = None
    static_dir: Optional[Path] = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, payload, status=200):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts[:2] == ["api", "segments"] and len(parts) == 2:
                status = parse_qs(url.query).get("status", [None])[0]
                self._send_json(self.store.list_segments(status))
            elif parts[:2] == ["api", "segments"] and len(parts) == 3:
                self._send_json(self.store.detail(parts[2]))
            elif parts[:2] == ["api", "segments"] and len(parts) == 4 and parts[3] == "labels":
                st = self.store._require(parts[2])
                self._send_json({"segment_id": parts[2], "votes": dict(st.votes)})
            elif parts[:2] == ["api", "progress"]:
                self._send_json(self.store.progress())
            else:
                self._serve_static(url.path)
        except KeyError as exc:
            self._send_json({"error": f"unknown segment {exc}"}, status=404)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            body = self._read_body()
            if parts[:2] == ["api", "segments"] and len(parts) == 4 and parts[3] == "labels":
                result = self.store.record_vote(
                    parts[2], body.get("annotator_id", ""), body.get("label"))
                self._send_json(result)
            elif parts[:2] == ["api", "segments"] and len(parts) == 4 and parts[3] == "finalize":
                result = self.store.finalize(parts[2])
                status = result.pop("_status", 200)
                self._send_json(result, status=status)
            else:
                self._send_json({"error": "not found"}, status=404)
        except KeyError as exc:
            self._send_json({"error": f"unknown segment {exc}"}, status=404)
        except (InputError, json.JSONDecodeError) as exc:
            self._send_json({"error": str(exc)}, status=400)

    def _serve_static(self, path: str):
        if self.static_dir is None:
            self._send_json({"error": "not found"}, status=404)
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, status=404)
            return
        types = {".html": "text/html", ".js": "text/javascript",
                 ".css": "text/css", ".json": "application/json"}
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(port: int, store: LabelStore,
                static_dir: Optional[str | Path] = None) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {
        "store": store,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def load_store(segments_path: str | Path, store_dir: str | Path,
               labels_path: Optional[str | Path] = None,
               features_path: Optional[str | Path] = None,
               semantics_path: Optional[str | Path] = None) -> LabelStore:
    segments = read_segments(segments_path)
    stage = read_labels(labels_path) if labels_path and Path(labels_path).exists() else []
    features = (read_features(features_path)
                if features_path and Path(features_path).exists() else None)
    semantics = (read_semantic_results(semantics_path)
                 if semantics_path and Path(semantics_path).exists() else None)
    return LabelStore(store_dir, segments, stage, features, semantics)

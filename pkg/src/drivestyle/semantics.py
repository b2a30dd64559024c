"""Natural-language descriptions of driving segments.

A structured two-part prompt (system role + CSV user data) is sent to a
chat-completions backend, which must answer with tagged SEMANTICS and
REASONING sections. The mock backend reproduces that contract offline
from per-channel statistics, so the rest of the pipeline can run
deterministically without a hosted model.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ResponseFormatError, TransportError
from .extraction import (CAR_FOLLOWING, CF_CHANNELS, LANE_CHANGING,
                         LC_CHANNELS, DrivingSegment, segment_to_record)

TEMPLATE_VERSION = "v1"

SEMANTICS_TAG = "SEMANTICS:"
REASONING_TAG = "REASONING:"

_COLUMN_NOTES = {
    CAR_FOLLOWING: (
        ("v", "m/s", "ego vehicle speed"),
        ("a_lon", "m/s^2", "ego longitudinal acceleration"),
        ("dd", "m", "relative distance to the front vehicle"),
        ("dv", "m/s", "relative speed, ego minus front vehicle (positive while closing)"),
    ),
    LANE_CHANGING: (
        ("dd", "m", "relative distance to the lag vehicle in the target lane"),
        ("dv", "m/s", "relative speed, lane-changing vehicle minus lag vehicle "
                      "(positive while pulling away)"),
        ("a_lat", "m/s^2", "lateral acceleration of the lane-changing vehicle"),
    ),
}

_SCENARIO_TITLES = {CAR_FOLLOWING: "car-following", LANE_CHANGING: "lane-changing"}

_SYSTEM_TEMPLATE = """You are an expert driving behavior analyst. Given a table of {title} \
kinematics, assess how the vehicle is being driven.
Work through three phases, in order:
1. Magnitude analysis: compute representative statistics per column (mean, range) and judge \
their size against everyday highway driving.
2. Trend analysis: describe how each column evolves over the segment (increasing, decreasing \
or stable) and what that implies about the maneuver.
3. Semantics generation: combine both analyses into a concise natural-language description of \
the driving behavior.
Output format rules:
- Reply with exactly two sections.
- Start the first section with the tag '{sem_tag}' followed by the behavior description.
- Start the second section with the tag '{rea_tag}' followed by the statistics and trends \
that justify the description.
- Cite numeric values with two decimals and units.
Template version: {version}
"""

DATA_MARKER = "DATA (CSV):"


@dataclass(frozen=True)
class PromptBundle:
    segment_id: str
    system_message: str
    user_message: str
    template_version: str


@dataclass(frozen=True)
class SemanticResult:
    segment_id: str
    semantics: str
    reasoning: str
    model_id: str
    raw_response_hash: str

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "semantics": self.semantics,
            "reasoning": self.reasoning,
            "model_id": self.model_id,
            "raw_response_hash": self.raw_response_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SemanticResult":
        return cls(
            segment_id=data["segment_id"],
            semantics=data["semantics"],
            reasoning=data["reasoning"],
            model_id=data["model_id"],
            raw_response_hash=data["raw_response_hash"],
        )


def build_prompt(segment: DrivingSegment, scenario: Optional[str] = None) -> PromptBundle:
    """Deterministic two-part prompt for one segment (2-decimal data rows)."""
    scenario = scenario or segment.scenario
    if scenario != segment.scenario:
        raise ConfigError(
            f"requested scenario '{scenario}' does not match segment "
            f"scenario '{segment.scenario}'")
    if scenario not in _COLUMN_NOTES:
        raise ConfigError(f"unknown scenario '{scenario}'")
    notes = _COLUMN_NOTES[scenario]
    title = _SCENARIO_TITLES[scenario]
    version = f"{TEMPLATE_VERSION}-{scenario}"

    system_message = _SYSTEM_TEMPLATE.format(
        title=title, sem_tag=SEMANTICS_TAG, rea_tag=REASONING_TAG, version=version)

    names = [name for name, _, _ in notes]
    lines = [
        f"Below is one {title} segment sampled every {segment.dt:.3f} s "
        f"({len(segment)} samples, {segment.duration:.2f} s).",
        "Columns:",
    ]
    lines.extend(f"- {name} ({unit}): {desc}" for name, unit, desc in notes)
    lines.append(DATA_MARKER)
    lines.append(",".join(names))
    columns = [segment.channels[name] for name in names]
    for row in zip(*columns):
        lines.append(",".join(f"{v:.2f}" for v in row))
    return PromptBundle(
        segment_id=segment.segment_id,
        system_message=system_message,
        user_message="\n".join(lines) + "\n",
        template_version=version,
    )


def parse_response(raw: str) -> tuple[str, str]:
    """Split a tagged response into (semantics, reasoning)."""
    if SEMANTICS_TAG not in raw or REASONING_TAG not in raw:
        raise ResponseFormatError(
            f"response lacks {SEMANTICS_TAG} / {REASONING_TAG} tags", raw_text=raw)
    head, _, tail = raw.partition(SEMANTICS_TAG)
    semantics, _, reasoning = tail.partition(REASONING_TAG)
    semantics = semantics.strip()
    reasoning = reasoning.strip()
    if not semantics or not reasoning:
        raise ResponseFormatError("empty semantics or reasoning section", raw_text=raw)
    return semantics, reasoning


def _parse_user_csv(user_message: str) -> dict[str, np.ndarray]:
    _, _, block = user_message.partition(DATA_MARKER)
    rows = list(csv.reader(io.StringIO(block.strip())))
    if len(rows) < 2:
        raise ResponseFormatError("user message carries no data rows", raw_text=user_message)
    header = rows[0]
    data = np.asarray(rows[1:], dtype=float)
    return {name: data[:, k] for k, name in enumerate(header)}


def _trend(values: np.ndarray) -> str:
    """Classify the least-squares slope against 5% of the value range."""
    n = len(values)
    if n < 2:
        return "stable"
    idx = np.arange(n, dtype=float)
    slope = float(np.polyfit(idx, values, 1)[0])
    span = float(values.max() - values.min())
    if abs(slope) * (n - 1) <= 0.05 * span or span == 0.0:
        return "stable"
    return "increasing" if slope > 0 else "decreasing"

_TREND_PHRASE = {
    "increasing": "gradually increasing",
    "decreasing": "gradually decreasing",
    "stable": "remaining stable",
}


def _grade(value: float, low_cut: float, high_cut: float,
           low: str, mid: str, high: str) -> str:
    if value < low_cut:
        return low
    if value > high_cut:
        return high
    return mid


class MockChatBackend:
    """Offline stand-in for the hosted model.

    Reads the CSV block out of the user message, computes per-channel
    mean/range/trend, and writes templated sentences around them, so the
    numbers quoted in the semantics always match the data shown to it.
    """

    model_id = "mock-chat-v1"

    def complete(self, bundle: PromptBundle) -> str:
        channels = _parse_user_csv(bundle.user_message)
        stats = {
            name: {
                "mean": float(np.mean(vals)),
                "min": float(np.min(vals)),
                "max": float(np.max(vals)),
                "trend": _trend(vals),
            }
            for name, vals in channels.items()
        }
        if "v" in channels:  # car following carries the ego speed column
            semantics = self._cf_semantics(stats)
            units = {"v": "m/s", "a_lon": "m/s^2", "dd": "m", "dv": "m/s"}
        else:
            semantics = self._lc_semantics(stats)
            units = {"dd": "m", "dv": "m/s", "a_lat": "m/s^2"}
        reasoning_lines = [
            f"- {name}: mean {s['mean']:.2f} {units[name]}, min {s['min']:.2f}, "
            f"max {s['max']:.2f}, trend {s['trend']}"
            for name, s in stats.items()
        ]
        reasoning_lines.append(
            "The magnitude statistics and trends above are the basis for the description.")
        return (
            f"{SEMANTICS_TAG}\n{' '.join(semantics)}\n\n"
            f"{REASONING_TAG}\n" + "\n".join(reasoning_lines) + "\n"
        )

    @staticmethod
    def _cf_semantics(stats) -> list[str]:
        dd, v, a, dv = stats["dd"], stats["v"], stats["a_lon"], stats["dv"]
        kmh = v["mean"] * 3.6
        grade_d = _grade(dd["mean"], 30.0, 70.0, "relatively close", "moderate", "relatively far")
        grade_v = _grade(kmh, 60.0, 90.0, "low", "moderate", "high")
        closing = ("closing in on the front vehicle" if dv["mean"] > 0.1
                   else "falling behind the front vehicle" if dv["mean"] < -0.1
                   else "holding its distance to the front vehicle")
        return [
            f"The ego vehicle maintains a {grade_d} distance to the front vehicle "
            f"(average relative distance of {dd['mean']:.2f} m).",
            f"It travels at {grade_v} speed (average speed of {kmh:.2f} km/h).",
            f"Longitudinal acceleration averages {a['mean']:.2f} m/s^2.",
            f"On average it is {closing} (average relative speed of {dv['mean']:.2f} m/s).",
            f"Over the segment, the relative distance is {_TREND_PHRASE[dd['trend']]} "
            f"and the speed is {_TREND_PHRASE[v['trend']]}.",
        ]

    @staticmethod
    def _lc_semantics(stats) -> list[str]:
        dd, dv, al = stats["dd"], stats["dv"], stats["a_lat"]
        grade_d = _grade(dd["mean"], 15.0, 40.0, "relatively close", "moderate", "relatively far")
        interaction = ("it is overtaking the lag vehicle" if dv["mean"] > 0.1
                       else "the lag vehicle is closing in" if dv["mean"] < -0.1
                       else "speeds are closely matched")
        steering = ("abrupt" if abs(al["mean"]) > 0.5 else "smooth")
        return [
            f"The lane-changing vehicle keeps a {grade_d} distance from the lag vehicle "
            f"(average relative distance of {dd['mean']:.2f} m).",
            f"With an average relative speed of {dv['mean']:.2f} m/s, {interaction}.",
            f"Lateral movements are {steering} "
            f"(average lateral acceleration of {al['mean']:.2f} m/s^2).",
            f"Over the maneuver, the relative distance is {_TREND_PHRASE[dd['trend']]} "
            f"and the relative speed is {_TREND_PHRASE[dv['trend']]}.",
        ]


def request_with_backoff(url: str, payload: dict, headers: dict,
                         timeout_s: float, max_retries: int,
                         backoff_base_s: float = 0.5) -> dict:
    """POST JSON with bounded retries and exponential backoff.

    Retries connection failures, 429 and 5xx; other HTTP errors fail
    immediately. Raises TransportError once retries are exhausted.
    """
    import requests

    last = "no attempt made"
    for attempt in range(max_retries):
        if attempt > 0:
            time.sleep(backoff_base_s * 2 ** (attempt - 1))
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
        except requests.RequestException as exc:
            last = f"connection error: {exc}"
            continue
        if resp.status_code == 200:
            try:
                return resp.json()
            except ValueError as exc:
                raise ResponseFormatError(
                    f"non-JSON body from {url}: {exc}", raw_text=resp.text[:2000]) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            continue
        raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:500]}")
    raise TransportError(f"request to {url} failed after {max_retries} attempts ({last})")


class RemoteChatBackend:
    """Chat-completions client (temperature 0, one system + one user message)."""

    def __init__(self, endpoint_url: str, model_id: str,
                 api_key_env_var: str = "", timeout_s: float = 120.0,
                 max_retries: int = 4, backoff_base_s: float = 0.5):
        self.endpoint_url = endpoint_url
        self.model_id = model_id
        self.api_key = os.environ.get(api_key_env_var, "") if api_key_env_var else ""
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s

    def complete(self, bundle: PromptBundle) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model_id,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": bundle.system_message},
                {"role": "user", "content": bundle.user_message},
            ],
        }
        body = request_with_backoff(
            self.endpoint_url, payload, headers,
            self.timeout_s, self.max_retries, self.backoff_base_s)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ResponseFormatError(
                f"chat response missing choices/message/content: {exc}",
                raw_text=json.dumps(body)[:2000]) from exc


def describe(bundle: PromptBundle, backend) -> SemanticResult:
    """Run one prompt through a backend and parse the tagged sections."""
    raw = backend.complete(bundle)
    semantics, reasoning = parse_response(raw)
    return SemanticResult(
        segment_id=bundle.segment_id,
        semantics=semantics,
        reasoning=reasoning,
        model_id=backend.model_id,
        raw_response_hash=hashlib.sha256(raw.encode("utf-8")).hexdigest(),
    )


def segment_content_hash(segment: DrivingSegment) -> str:
    record = segment_to_record(segment)
    return hashlib.sha256(json.dumps(record, sort_keys=True).encode("utf-8")).hexdigest()


def _cache_key(segment: DrivingSegment, template_version: str, model_id: str) -> str:
    tag = f"{segment_content_hash(segment)}|{template_version}|{model_id}"
    return hashlib.sha256(tag.encode("utf-8")).hexdigest()


def _atomic_write_json(path: Path, data: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class BatchDescribeResult:
    results: list[SemanticResult] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    backend_calls: int = 0
    cache_hits: int = 0


def batch_describe(
    segments: Sequence[DrivingSegment],
    backend,
    concurrency_limit: int = 4,
    cache_dir: str | Path | None = None,
) -> BatchDescribeResult:
    """Describe many segments with caching and bounded concurrency.

    Results are cached per (segment content, template version, model);
    cached entries are never re-fetched. Failures are collected per
    segment while every success is persisted immediately.
    """
    out = BatchDescribeResult()
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)

    slots: dict[str, SemanticResult] = {}
    misses = []
    keys = {}
    for seg in segments:
        bundle = build_prompt(seg)
        key = _cache_key(seg, bundle.template_version, backend.model_id)
        keys[seg.segment_id] = key
        cached = cache / f"{key}.json" if cache is not None else None
        if cached is not None and cached.exists():
            with open(cached, "r", encoding="utf-8") as fh:
                slots[seg.segment_id] = SemanticResult.from_dict(json.load(fh))
            out.cache_hits += 1
        else:
            misses.append((seg, bundle))

    def run_one(item):
        seg, bundle = item
        return seg, describe(bundle, backend)

    if misses:
        with ThreadPoolExecutor(max_workers=max(1, concurrency_limit)) as pool:
            futures = [pool.submit(run_one, item) for item in misses]
            for (seg, _), fut in zip(misses, futures):
                try:
                    _, result = fut.result()
                except (TransportError, ResponseFormatError) as exc:
                    out.failures[seg.segment_id] = str(exc)
                    continue
                out.backend_calls += 1
                slots[seg.segment_id] = result
                if cache is not None:
                    _atomic_write_json(cache / f"{keys[seg.segment_id]}.json", result.to_dict())

    out.results = [slots[seg.segment_id] for seg in segments if seg.segment_id in slots]
    return out


def write_semantic_results(path: str | Path, results: Sequence[SemanticResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True))
            fh.write("\n")


def read_semantic_results(path: str | Path) -> list[SemanticResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SemanticResult.from_dict(json.loads(line)))
    return out

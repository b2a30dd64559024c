"""Three-stage style labeling: threshold rules, density clustering, manual queue.

Stage 1 flags clearly aggressive segments with hard rules, stage 2 marks
the dominant density cluster of the remainder as moderate, and stage 3
queues everything still unlabeled for human annotators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArtifactError, InputError
from .extraction import CAR_FOLLOWING, LANE_CHANGING, DrivingSegment
from .features import FeatureVector

CONSERVATIVE, MODERATE, AGGRESSIVE = 1, 2, 3
LABEL_NAMES = {CONSERVATIVE: "conservative", MODERATE: "moderate", AGGRESSIVE: "aggressive"}
NAME_TO_LABEL = {v: k for k, v in LABEL_NAMES.items()}

PROVENANCE_RULE = "rule"
PROVENANCE_CLUSTER = "cluster"
PROVENANCE_MANUAL = "manual"

NOISE = -1

MIN_MANUAL_VOTES = 3


@dataclass(frozen=True)
class StyleLabel:
    segment_id: str
    label: int
    provenance: str
    votes: Optional[dict[str, int]] = None

    def __post_init__(self):
        if self.label not in LABEL_NAMES:
            raise InputError(f"label must be one of {sorted(LABEL_NAMES)}, got {self.label}")
        if self.provenance == PROVENANCE_MANUAL:
            if self.votes is None or len(self.votes) < MIN_MANUAL_VOTES:
                raise InputError(
                    f"manual label for {self.segment_id} requires >= {MIN_MANUAL_VOTES} votes"
                )
            winner, count = _majority(self.votes)
            if winner != self.label:
                raise InputError(f"manual label for {self.segment_id} does not match vote majority")


def _majority(votes: dict[str, int]) -> tuple[Optional[int], int]:
    """(winning label, count) under strict majority; (None, top count) on a tie."""
    counts: dict[int, int] = {}
    for label in votes.values():
        counts[label] = counts.get(label, 0) + 1
    top = max(counts.values())
    winners = [lab for lab, c in counts.items() if c == top]
    if len(winners) == 1 and 2 * top > len(votes):
        return winners[0], top
    return None, top


@dataclass
class RuleConfig:
    """Aggressive-style thresholds; all comparisons are strict."""

    cf_speed_max_ms: float = 120.0 / 3.6
    cf_ttc_min_s: float = 5.0
    lc_gap_min_m: float = 20.0
    lc_dv_min_ms: float = 0.0
    lc_a_lat_max_ms2: float = 0.5


def rule_label(
    fv: FeatureVector, segment: DrivingSegment | None = None, rules: RuleConfig | None = None
) -> Optional[StyleLabel]:
    """Aggressive label when any hard rule fires, otherwise None.

    Car following: mean speed above the 120 km/h limit or mean TTC under
    5 s. Lane changing: mean gap under 20 m, mean relative speed below 0
    (the lag vehicle is closing in), or mean lateral acceleration whose
    magnitude exceeds 0.5 m/s^2.
    """
    rules = rules or RuleConfig()
    if segment is not None and segment.scenario != fv.scenario:
        raise InputError(f"feature/segment scenario mismatch for {fv.segment_id}")
    a, b, c = fv.values
    if fv.scenario == CAR_FOLLOWING:
        fired = a > rules.cf_speed_max_ms or c < rules.cf_ttc_min_s
    elif fv.scenario == LANE_CHANGING:
        fired = a < rules.lc_gap_min_m or b < rules.lc_dv_min_ms or abs(c) > rules.lc_a_lat_max_ms2
    else:
        raise InputError(f"unknown scenario '{fv.scenario}'")
    if fired:
        return StyleLabel(segment_id=fv.segment_id, label=AGGRESSIVE, provenance=PROVENANCE_RULE)
    return None


def dbscan_cluster(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Plain DBSCAN with Euclidean distances.

    Returns one integer per point: a cluster id starting at 0, or NOISE
    (-1). Core points have at least min_pts neighbors (self included)
    within eps; clusters grow by density reachability. Callers are
    expected to standardize points beforehand when scales differ.
    """
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return np.empty(0, dtype=int)
    if eps <= 0 or min_pts < 1:
        raise InputError(f"need eps > 0 and min_pts >= 1, got eps={eps}, min_pts={min_pts}")
    n = len(points)
    sq = np.sum(points ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    within = d2 <= eps * eps + 1e-12
    neighbor_lists = [np.flatnonzero(within[i]) for i in range(n)]
    is_core = np.array([len(nb) >= min_pts for nb in neighbor_lists])

    labels = np.full(n, NOISE, dtype=int)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not is_core[i]:
            continue
        # expand one cluster from this core point
        queue = [i]
        visited[i] = True
        labels[i] = cluster
        while queue:
            p = queue.pop()
            if not is_core[p]:
                continue
            for q in neighbor_lists[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                if not visited[q]:
                    visited[q] = True
                    queue.append(q)
        cluster += 1
    return labels


def knee_eps(points: np.ndarray, k: int = 4) -> float:
    """Pick eps at the maximum-curvature point of the sorted k-NN distance curve."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n <= k:
        raise InputError(f"need more than {k} points to estimate eps, got {n}")
    sq = np.sum(points ** 2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    knn = np.sort(np.sqrt(np.sort(d2, axis=1)[:, k]))
    if knn[-1] <= 0:
        return 1e-9
    # curvature of the normalized curve; ends excluded for the 2nd difference
    x = np.linspace(0.0, 1.0, n)
    y = knn / knn[-1]
    dy = np.gradient(y, x)
    d2y = np.gradient(dy, x)
    curvature = np.abs(d2y) / (1.0 + dy ** 2) ** 1.5
    idx = int(np.argmax(curvature[1:-1])) + 1 if n > 2 else n - 1
    return float(max(knn[idx], 1e-9))


@dataclass
class DbscanParams:
    eps: Optional[float] = None  # None: knee of the 4-NN distance curve
    min_pts: Optional[int] = None  # None: 2 * dim


def zscore(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    std[std == 0] = 1.0
    return (points - mean) / std


def stage_labels(
    fvs: list[FeatureVector],
    segments: list[DrivingSegment] | None = None,
    rules: RuleConfig | None = None,
    dbscan_params: DbscanParams | None = None,
) -> tuple[list[StyleLabel], list[str]]:
    """Run the rule and clustering stages; return labels plus the manual queue.

    Stage 2 standardizes the not-yet-labeled feature vectors, clusters
    them, and labels the largest cluster moderate; smaller clusters and
    noise stay pending for human annotation.
    """
    rules = rules or RuleConfig()
    dbscan_params = dbscan_params or DbscanParams()
    by_id = {s.segment_id: s for s in (segments or [])}

    labeled: list[StyleLabel] = []
    remainder: list[FeatureVector] = []
    for fv in fvs:
        lab = rule_label(fv, by_id.get(fv.segment_id), rules)
        if lab is not None:
            labeled.append(lab)
        else:
            remainder.append(fv)

    pending: list[str] = []
    if remainder:
        pts = zscore(np.array([fv.values for fv in remainder]))
        min_pts = dbscan_params.min_pts or 2 * pts.shape[1]
        if len(pts) > 4 or dbscan_params.eps is not None:
            eps = dbscan_params.eps if dbscan_params.eps is not None else knee_eps(pts)
            assignments = dbscan_cluster(pts, eps=eps, min_pts=min_pts)
        else:
            assignments = np.full(len(pts), NOISE, dtype=int)
        ids, counts = np.unique(assignments[assignments != NOISE], return_counts=True)
        largest = ids[np.argmax(counts)] if len(ids) else None
        for fv, a in zip(remainder, assignments):
            if largest is not None and a == largest:
                labeled.append(StyleLabel(
                    segment_id=fv.segment_id, label=MODERATE, provenance=PROVENANCE_CLUSTER))
            else:
                pending.append(fv.segment_id)
    return labeled, pending


def write_labels(path: str | Path, labels: list[StyleLabel]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in labels:
            rec = {"segment_id": lab.segment_id, "label": lab.label, "provenance": lab.provenance}
            if lab.votes is not None:
                rec["votes"] = lab.votes
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_labels(path: str | Path) -> list[StyleLabel]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                out.append(StyleLabel(
                    segment_id=rec["segment_id"],
                    label=int(rec["label"]),
                    provenance=rec["provenance"],
                    votes=rec.get("votes"),
                ))
            except KeyError as exc:
                raise ArtifactError(f"malformed label record in {path}: missing {exc}") from exc
    return out

"""Segment-level feature vectors (3 kinematic means per segment)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactError, DataError
from .extraction import CAR_FOLLOWING, LANE_CHANGING, DrivingSegment

DEFAULT_TTC_CAP_S = 99.0
DEFAULT_CLOSING_EPS_MS = 0.1

CF_FEATURE_NAMES = ("mean_v", "mean_a_lon", "mean_ttc")
LC_FEATURE_NAMES = ("mean_dd", "mean_dv", "mean_a_lat")


@dataclass(frozen=True)
class FeatureVector:
    segment_id: str
    scenario: str
    values: tuple[float, float, float]

    def __post_init__(self):
        if len(self.values) != 3 or not all(np.isfinite(self.values)):
            raise DataError(f"feature vector for {self.segment_id} must have 3 finite components")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def compute_ttc_series(
    dd: np.ndarray,
    dv: np.ndarray,
    ttc_cap: float = DEFAULT_TTC_CAP_S,
    closing_eps: float = DEFAULT_CLOSING_EPS_MS,
) -> np.ndarray:
    """Time to collision per sample, capped at ttc_cap.

    TTC = dd/dv only while actually closing (dv > closing_eps); otherwise
    there is no collision course and the value is ttc_cap. Values above
    the cap are clipped to it so segment means stay in (0, ttc_cap].
    """
    dd = np.asarray(dd, dtype=float)
    dv = np.asarray(dv, dtype=float)
    if dd.shape != dv.shape:
        raise DataError("dd and dv series must be aligned")
    if np.any(dd <= 0):
        raise DataError("non-positive gap in TTC input (vehicles overlapping)")
    closing = dv > closing_eps
    ttc = np.full(dd.shape, float(ttc_cap))
    ttc[closing] = np.minimum(dd[closing] / dv[closing], ttc_cap)
    return ttc


def featurize(segment: DrivingSegment, ttc_cap: float = DEFAULT_TTC_CAP_S) -> FeatureVector:
    """Element-wise means of the segment's style-relevant channels.

    Car following: (mean speed, mean longitudinal acceleration, mean TTC).
    Lane changing: (mean gap to lag vehicle, mean relative speed, mean
    lateral acceleration). The lateral acceleration mean keeps its sign;
    rules compare it by magnitude.
    """
    ch = segment.channels
    if segment.scenario == CAR_FOLLOWING:
        ttc = compute_ttc_series(ch["dd"], ch["dv"], ttc_cap)
        values = (float(np.mean(ch["v"])), float(np.mean(ch["a_lon"])), float(np.mean(ttc)))
    elif segment.scenario == LANE_CHANGING:
        values = (float(np.mean(ch["dd"])), float(np.mean(ch["dv"])), float(np.mean(ch["a_lat"])))
    else:
        raise DataError(f"unknown scenario '{segment.scenario}'")
    return FeatureVector(segment_id=segment.segment_id, scenario=segment.scenario, values=values)


def write_features(path: str | Path, fvs: list[FeatureVector]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fv in fvs:
            fh.write(json.dumps({
                "segment_id": fv.segment_id,
                "scenario": fv.scenario,
                "values": list(fv.values),
            }, sort_keys=True))
            fh.write("\n")


def read_features(path: str | Path) -> list[FeatureVector]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                out.append(FeatureVector(
                    segment_id=rec["segment_id"],
                    scenario=rec["scenario"],
                    values=tuple(rec["values"]),
                ))
            except KeyError as exc:
                raise ArtifactError(f"malformed feature record in {path}: missing {exc}") from exc
    return out

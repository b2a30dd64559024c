"""Car-following and lane-changing event extraction.

Sign conventions used throughout:
  - car following: dv = v_ego - v_lead, so dv > 0 means the gap is
    closing and TTC = dd/dv is positive on a collision course.
  - lane changing: dd = x_lcv - x_lag (gap to the lag vehicle in the
    target lane), dv = v_lcv - v_lag (positive while overtaking it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArtifactError, ConfigError, DataError, ExtractionError
from .trajectory import RecordingMeta, VehicleSeries, contiguous_runs, lane_band

SEGMENT_STORE_VERSION = 1

CF_CHANNELS = ("v", "a_lon", "dd", "dv")
LC_CHANNELS = ("dd", "dv", "a_lat")

CAR_FOLLOWING = "car_following"
LANE_CHANGING = "lane_changing"


@dataclass(frozen=True)
class KeyTimes:
    t_start: float
    t_cross: float
    t_end: float

    def __post_init__(self):
        if not (self.t_start < self.t_cross < self.t_end):
            raise DataError(
                f"key times must be ordered t_start < t_cross < t_end, got "
                f"({self.t_start}, {self.t_cross}, {self.t_end})"
            )


@dataclass
class DrivingSegment:
    """A contiguous car-following or lane-changing event."""

    segment_id: str
    scenario: str
    source: str
    dt: float
    t0: float
    channels: dict[str, np.ndarray]
    key_times: Optional[KeyTimes] = None
    lag_vehicle_id: Optional[int] = None

    def __post_init__(self):
        lengths = {len(arr) for arr in self.channels.values()}
        if len(lengths) != 1:
            raise DataError(f"segment {self.segment_id}: channels differ in length")
        if lengths.pop() == 0:
            raise DataError(f"segment {self.segment_id}: empty channels")
        expected = CF_CHANNELS if self.scenario == CAR_FOLLOWING else LC_CHANNELS
        if self.scenario not in (CAR_FOLLOWING, LANE_CHANGING):
            raise ConfigError(f"unknown scenario '{self.scenario}'")
        if set(self.channels) != set(expected):
            raise DataError(
                f"segment {self.segment_id}: expected channels {expected}, "
                f"got {tuple(self.channels)}"
            )

    def __len__(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) * self.dt


@dataclass
class CfExtractionParams:
    """Gating conditions for car-following segments (all overridable)."""

    max_gap_m: float = 120.0
    min_duration_s: float = 15.0
    min_speed_ms: float = 5.0
    require_same_lead: bool = True
    require_no_lane_change: bool = True


@dataclass
class LcThresholds:
    """Lateral-speed and interaction thresholds for lane-change events."""

    v_lat_start: float = 0.34
    v_lat_end: float = 0.2
    max_thw_s: float = 2.0


@dataclass
class LcExtractionSummary:
    """Counts of lane-change candidates dropped at each validation step."""

    candidates: int = 0
    no_lag_vehicle: int = 0
    lag_incomplete: int = 0
    thw_filtered: int = 0
    retained: int = 0


def _frame_index(series: VehicleSeries) -> dict[int, int]:
    return {int(f): i for i, f in enumerate(series.frame_keys())}


def extract_car_following(
    all_series: list[VehicleSeries],
    params: CfExtractionParams,
    source: str = "rec",
) -> list[DrivingSegment]:
    """Extract car-following segments from a multi-vehicle recording.

    A segment is a maximal run over which the ego keeps one lead vehicle
    within params.max_gap_m, stays at or above params.min_speed_ms, and
    keeps its lane; runs shorter than params.min_duration_s are dropped.
    Segments split whenever the lead vehicle changes.
    """
    if not any(s.preceding_id is not None for s in all_series):
        raise ExtractionError("no lead-vehicle information in input (preceding_id unmapped)")

    by_id = {s.vehicle_id: s for s in all_series}
    frame_maps = {s.vehicle_id: _frame_index(s) for s in all_series}
    segments = []
    for ego in all_series:
        if ego.preceding_id is None:
            continue
        for chunk in contiguous_runs(ego):
            segments.extend(
                _cf_segments_for_chunk(chunk, by_id, frame_maps, params, source)
            )
    return segments


def _cf_segments_for_chunk(ego, by_id, frame_maps, params, source):
    n = len(ego)
    frames = ego.frame_keys()
    lead_ids = ego.preceding_id
    dd = np.full(n, np.nan)
    dv = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    for i in range(n):
        lead_id = int(lead_ids[i])
        if lead_id <= 0:
            continue
        lead = by_id.get(lead_id)
        if lead is None:
            continue
        j = frame_maps[lead_id].get(int(frames[i]))
        if j is None:
            continue
        dd[i] = ego.dhw[i] if ego.dhw is not None else float(lead.x[j] - ego.x[i])
        dv[i] = float(ego.v[i] - lead.v[j])
        valid[i] = True

    valid &= np.nan_to_num(dd, nan=np.inf) <= params.max_gap_m
    valid &= np.nan_to_num(dd, nan=-1.0) > 0.0
    valid &= ego.v >= params.min_speed_ms

    min_len = int(round(params.min_duration_s / ego.dt))
    out = []
    start = 0
    while start < n:
        if not valid[start]:
            start += 1
            continue
        stop = start + 1
        while (
            stop < n
            and valid[stop]
            and (not params.require_same_lead or lead_ids[stop] == lead_ids[start])
            and (not params.require_no_lane_change or ego.lane_id[stop] == ego.lane_id[start])
        ):
            stop += 1
        if stop - start >= min_len:
            out.append(DrivingSegment(
                segment_id=f"cf-{source}-{ego.vehicle_id}-{int(frames[start])}",
                scenario=CAR_FOLLOWING,
                source=source,
                dt=ego.dt,
                t0=float(ego.t[start]),
                channels={
                    "v": ego.v[start:stop].copy(),
                    "a_lon": ego.a_lon[start:stop].copy(),
                    "dd": dd[start:stop].copy(),
                    "dv": dv[start:stop].copy(),
                },
            ))
        start = stop
    return out


def _iter_lane_change_events(series: VehicleSeries, meta: RecordingMeta, th: LcThresholds):
    """Yield (start_idx, t_cross, end_idx, band_from, band_to) per complete event."""
    if len(meta.lane_boundaries) == 0:
        raise ConfigError("lane boundary list is empty")
    bands = np.asarray(lane_band(series.y, meta.lane_boundaries))
    abs_vlat = np.abs(series.v_lat)
    n = len(series)
    resume = 0
    for k in range(n - 1):
        if k < resume or bands[k + 1] == bands[k]:
            continue
        band_from, band_to = int(bands[k]), int(bands[k + 1])
        if abs(band_to - band_from) != 1:
            continue
        boundary = meta.lane_boundaries[max(band_from, band_to) - 1]
        # sub-frame crossing time by linear interpolation of y
        frac = (boundary - series.y[k]) / (series.y[k + 1] - series.y[k])
        t_cross = float(series.t[k] + frac * (series.t[k + 1] - series.t[k]))

        # first-crossing semantics on |v_lat|, scanning back from the crossing
        anchor = k if abs_vlat[k] > th.v_lat_start else (
            k + 1 if abs_vlat[k + 1] > th.v_lat_start else None)
        if anchor is None:
            continue
        start_idx = anchor
        while start_idx > 0 and abs_vlat[start_idx - 1] > th.v_lat_start:
            start_idx -= 1
        if not series.t[start_idx] < t_cross:
            continue

        # completion: |v_lat| decays below the end threshold in the target lane
        end_idx = None
        for e in range(k + 1, n):
            if bands[e] != band_to:
                end_idx = None
                break
            if abs_vlat[e] < th.v_lat_end:
                end_idx = e
                break
        if end_idx is None:
            continue
        yield start_idx, t_cross, end_idx, band_from, band_to
        resume = end_idx + 1


def detect_lane_change_times(
    series: VehicleSeries, meta: RecordingMeta, thresholds: LcThresholds
) -> Optional[KeyTimes]:
    """Key timestamps of the first complete lane change, or None.

    t_start is the first sample where |v_lat| exceeds thresholds.v_lat_start
    (searching back from the boundary crossing), t_cross is the interpolated
    instant the centerline crosses the lane boundary, and t_end is the first
    sample after t_cross where |v_lat| drops below thresholds.v_lat_end.
    """
    for start_idx, t_cross, end_idx, _, _ in _iter_lane_change_events(series, meta, thresholds):
        return KeyTimes(float(series.t[start_idx]), t_cross, float(series.t[end_idx]))
    return None


def _interp_at(series: VehicleSeries, attr: str, t: float) -> float:
    arr = getattr(series, attr)
    return float(np.interp(t, series.t, arr))


def extract_lane_changes(
    all_series: list[VehicleSeries],
    meta: RecordingMeta,
    thresholds: LcThresholds,
    source: str = "",
) -> tuple[list[DrivingSegment], LcExtractionSummary]:
    """Extract validated lane-changing segments with their lag vehicles.

    Candidates are dropped (and counted in the summary) when no lag
    vehicle exists in the target lane at t_end, when the lag vehicle
    leaves the lane or the recording during [t_start, t_end], or when
    the time headway at t_cross is not strictly below thresholds.max_thw_s.
    """
    source = source or meta.recording_id
    summary = LcExtractionSummary()
    frame_maps = {s.vehicle_id: _frame_index(s) for s in all_series}
    segments = []
    for lcv in all_series:
        for chunk in contiguous_runs(lcv):
            for start_idx, t_cross, end_idx, _, band_to in _iter_lane_change_events(
                chunk, meta, thresholds
            ):
                summary.candidates += 1
                seg = _build_lc_segment(
                    chunk, all_series, frame_maps, meta, thresholds,
                    start_idx, t_cross, end_idx, band_to, source, summary,
                )
                if seg is not None:
                    segments.append(seg)
                    summary.retained += 1
    return segments, summary


def _build_lc_segment(lcv, all_series, frame_maps, meta, th,
                      start_idx, t_cross, end_idx, band_to, source, summary):
    frames = lcv.frame_keys()
    frame_end = int(frames[end_idx])

    # lag vehicle: spatially closest to the rear in the target lane at t_end
    lag = None
    lag_x = -np.inf
    for other in all_series:
        if other.vehicle_id == lcv.vehicle_id:
            continue
        j = frame_maps[other.vehicle_id].get(frame_end)
        if j is None:
            continue
        if lane_band(other.y[j], meta.lane_boundaries) != band_to:
            continue
        if other.x[j] < lcv.x[end_idx] and other.x[j] > lag_x:
            lag, lag_x = other, other.x[j]
    if lag is None:
        summary.no_lag_vehicle += 1
        return None

    # completeness: lag present and in the target lane at every frame
    lag_map = frame_maps[lag.vehicle_id]
    span = range(int(frames[start_idx]), frame_end + 1)
    lag_idx = []
    for f in span:
        j = lag_map.get(f)
        if j is None or lane_band(lag.y[j], meta.lane_boundaries) != band_to:
            summary.lag_incomplete += 1
            return None
        lag_idx.append(j)
    lag_idx = np.asarray(lag_idx)

    # interaction: time headway of the lag vehicle at the crossing instant
    gap_at_cross = _interp_at(lcv, "x", t_cross) - _interp_at(lag, "x", t_cross)
    v_lag_at_cross = _interp_at(lag, "v", t_cross)
    thw = gap_at_cross / v_lag_at_cross if v_lag_at_cross > 0 else np.inf
    if not thw < th.max_thw_s:
        summary.thw_filtered += 1
        return None

    sl = slice(start_idx, end_idx + 1)
    return DrivingSegment(
        segment_id=f"lc-{source}-{lcv.vehicle_id}-{int(frames[start_idx])}",
        scenario=LANE_CHANGING,
        source=source,
        dt=lcv.dt,
        t0=float(lcv.t[start_idx]),
        channels={
            "dd": (lcv.x[sl] - lag.x[lag_idx]).copy(),
            "dv": (lcv.v[sl] - lag.v[lag_idx]).copy(),
            "a_lat": lcv.a_lat[sl].copy(),
        },
        key_times=KeyTimes(float(lcv.t[start_idx]), t_cross, float(lcv.t[end_idx])),
        lag_vehicle_id=lag.vehicle_id,
    )


def segment_to_record(seg: DrivingSegment) -> dict:
    rec = {
        "format_version": SEGMENT_STORE_VERSION,
        "segment_id": seg.segment_id,
        "scenario": seg.scenario,
        "source": seg.source,
        "dt": seg.dt,
        "t0": seg.t0,
        "channels": {name: [float(v) for v in arr] for name, arr in seg.channels.items()},
    }
    if seg.key_times is not None:
        rec["key_times"] = {
            "t_start": seg.key_times.t_start,
            "t_cross": seg.key_times.t_cross,
            "t_end": seg.key_times.t_end,
        }
    if seg.lag_vehicle_id is not None:
        rec["lag_vehicle_id"] = seg.lag_vehicle_id
    return rec


def segment_from_record(rec: dict) -> DrivingSegment:
    version = rec.get("format_version")
    if version != SEGMENT_STORE_VERSION:
        raise ArtifactError(f"unknown segment store format_version: {version!r}")
    key_times = None
    if "key_times" in rec:
        kt = rec["key_times"]
        key_times = KeyTimes(kt["t_start"], kt["t_cross"], kt["t_end"])
    return DrivingSegment(
        segment_id=rec["segment_id"],
        scenario=rec["scenario"],
        source=rec.get("source", ""),
        dt=rec["dt"],
        t0=rec.get("t0", 0.0),
        channels={name: np.asarray(vals, dtype=float) for name, vals in rec["channels"].items()},
        key_times=key_times,
        lag_vehicle_id=rec.get("lag_vehicle_id"),
    )


def write_segments(path: str | Path, segments: list[DrivingSegment]) -> None:
    """Write the segment store as JSON Lines (deterministic byte layout)."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(json.dumps(segment_to_record(seg), sort_keys=True))
            fh.write("\n")


def read_segments(path: str | Path) -> list[DrivingSegment]:
    segments = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                segments.append(segment_from_record(json.loads(line)))
    return segments

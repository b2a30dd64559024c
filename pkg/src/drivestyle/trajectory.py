"""Trajectory data model and CSV ingestion.

All internal quantities are SI (meters, seconds, m/s, m/s^2). Unit
conversion happens once, at ingestion, driven by a declarative schema
config so that differently laid out sources (instrumented-vehicle CAN
exports, highD-style tracks files) map onto one in-memory model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, SchemaError

# Logical fields every recording must provide.
REQUIRED_FIELDS = ("vehicle_id", "t", "x", "y", "v", "v_lat", "a_lon", "a_lat", "lane_id")
# Fields that may be absent and are recomputed downstream when needed.
OPTIONAL_FIELDS = ("preceding_id", "following_id", "dhw", "thw")

_ID_FIELDS = {"vehicle_id", "lane_id", "preceding_id", "following_id"}


@dataclass(frozen=True)
class RecordingMeta:
    """Per-recording constants needed to interpret the trajectories."""

    recording_id: str
    frame_rate: float
    lane_boundaries: tuple[float, ...] = ()
    speed_limit_kmh: Optional[float] = None

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ConfigError(f"frame_rate must be > 0, got {self.frame_rate}")
        bounds = tuple(float(b) for b in self.lane_boundaries)
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ConfigError(f"lane_boundaries must be strictly increasing: {bounds}")
        object.__setattr__(self, "lane_boundaries", bounds)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate


@dataclass(frozen=True)
class TrajectorySample:
    """One timestamped row of vehicle state, SI units."""

    t: float
    vehicle_id: int
    x: float
    y: float
    v: float
    v_lat: float
    a_lon: float
    a_lat: float
    lane_id: int
    preceding_id: Optional[int] = None
    following_id: Optional[int] = None
    dhw: Optional[float] = None
    thw: Optional[float] = None


@dataclass
class VehicleSeries:
    """Time-sorted columnar samples for one vehicle.

    Arrays share one index; optional columns are None when the source
    had no such column. Treated as immutable once loaded.
    """

    vehicle_id: int
    dt: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    v_lat: np.ndarray
    a_lon: np.ndarray
    a_lat: np.ndarray
    lane_id: np.ndarray
    preceding_id: Optional[np.ndarray] = None
    following_id: Optional[np.ndarray] = None
    dhw: Optional[np.ndarray] = None
    thw: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.t)

    def frame_keys(self) -> np.ndarray:
        """Integer frame index of each sample (t quantized by dt)."""
        return np.rint(self.t / self.dt).astype(np.int64)

    def slice(self, start: int, stop: int) -> "VehicleSeries":
        """View of samples [start, stop)."""
        cols = {}
        for name in ("t", "x", "y", "v", "v_lat", "a_lon", "a_lat", "lane_id",
                     "preceding_id", "following_id", "dhw", "thw"):
            arr = getattr(self, name)
            cols[name] = None if arr is None else arr[start:stop]
        return VehicleSeries(vehicle_id=self.vehicle_id, dt=self.dt, **cols)

    def samples(self) -> Iterator[TrajectorySample]:
        for i in range(len(self)):
            yield TrajectorySample(
                t=float(self.t[i]),
                vehicle_id=self.vehicle_id,
                x=float(self.x[i]),
                y=float(self.y[i]),
                v=float(self.v[i]),
                v_lat=float(self.v_lat[i]),
                a_lon=float(self.a_lon[i]),
                a_lat=float(self.a_lat[i]),
                lane_id=int(self.lane_id[i]),
                preceding_id=None if self.preceding_id is None else int(self.preceding_id[i]),
                following_id=None if self.following_id is None else int(self.following_id[i]),
                dhw=None if self.dhw is None else float(self.dhw[i]),
                thw=None if self.thw is None else float(self.thw[i]),
            )


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    unit: str = ""


@dataclass(frozen=True)
class SchemaConfig:
    """Declarative mapping from logical fields to source columns + units."""

    columns: dict[str, ColumnSpec]
    meta: RecordingMeta

    @classmethod
    def from_file(cls, path: str | Path) -> "SchemaConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaConfig":
        if "columns" not in raw:
            raise SchemaError("schema config is missing the 'columns' section")
        cols = {}
        for field_name, spec in raw["columns"].items():
            if "name" not in spec:
                raise SchemaError(f"schema column for field '{field_name}' has no 'name'")
            cols[field_name] = ColumnSpec(name=spec["name"], unit=spec.get("unit", ""))
        missing = [f for f in REQUIRED_FIELDS if f not in cols]
        if missing:
            raise SchemaError(f"schema config does not map required fields: {missing}")
        if "frame_rate" not in raw:
            raise SchemaError("schema config must declare frame_rate explicitly")
        meta = RecordingMeta(
            recording_id=str(raw.get("recording_id", "unknown")),
            frame_rate=float(raw["frame_rate"]),
            lane_boundaries=tuple(raw.get("lane_boundaries", ())),
            speed_limit_kmh=raw.get("speed_limit_kmh"),
        )
        return cls(columns=cols, meta=meta)


def _to_si(values: pd.Series, unit: str, frame_rate: float, column: str) -> np.ndarray:
    arr = values.to_numpy(dtype=float)
    if unit in ("", "m", "s", "m/s", "m/s^2"):
        return arr
    if unit == "km/h":
        return arr / 3.6
    if unit == "frame":
        return arr / frame_rate
    raise SchemaError(f"unknown unit '{unit}' declared for column '{column}'")


def _from_si(values: np.ndarray, unit: str, frame_rate: float) -> np.ndarray:
    if unit in ("", "m", "s", "m/s", "m/s^2"):
        return values
    if unit == "km/h":
        return values * 3.6
    if unit == "frame":
        return values * frame_rate
    raise SchemaError(f"unknown unit '{unit}'")


def load_trajectories(path: str | Path, schema: SchemaConfig) -> list[VehicleSeries]:
    """Load a CSV into per-vehicle, time-sorted series in SI units.

    Raises SchemaError when a required column is absent and DataError
    when timestamps are not strictly increasing for a vehicle. An empty
    file yields an empty list.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file does not exist: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return []
    if df.empty and len(df.columns) == 0:
        return []

    for field_name, spec in schema.columns.items():
        if spec.name not in df.columns:
            if field_name in REQUIRED_FIELDS:
                raise SchemaError(
                    f"required column '{spec.name}' (field '{field_name}') missing from {path.name}"
                )
    if df.empty:
        return []

    frame_rate = schema.meta.frame_rate
    converted: dict[str, np.ndarray] = {}
    for field_name, spec in schema.columns.items():
        if spec.name not in df.columns:
            continue
        if field_name in _ID_FIELDS:
            converted[field_name] = df[spec.name].to_numpy()
        else:
            converted[field_name] = _to_si(df[spec.name], spec.unit, frame_rate, spec.name)

    vehicle_ids = converted["vehicle_id"]
    result = []
    for vid in pd.unique(vehicle_ids):
        mask = vehicle_ids == vid
        t = converted["t"][mask]
        order = np.argsort(t, kind="stable")
        t = t[order]
        if np.any(np.diff(t) <= 0):
            raise DataError(f"timestamps not strictly increasing for vehicle_id={vid}")
        cols = {}
        for name in REQUIRED_FIELDS + OPTIONAL_FIELDS:
            if name in ("vehicle_id", "t"):
                continue
            if name not in converted:
                cols[name] = None
                continue
            arr = converted[name][mask][order]
            if name in _ID_FIELDS:
                arr = np.nan_to_num(arr.astype(float), nan=0.0).astype(np.int64)
            cols[name] = arr
        if np.any(cols["v"] < 0):
            raise DataError(f"negative speed for vehicle_id={vid}; check unit/sign conventions")
        result.append(VehicleSeries(
            vehicle_id=int(vid), dt=schema.meta.dt, t=t,
            x=cols["x"], y=cols["y"], v=cols["v"], v_lat=cols["v_lat"],
            a_lon=cols["a_lon"], a_lat=cols["a_lat"],
            lane_id=cols["lane_id"].astype(np.int64),
            preceding_id=cols["preceding_id"], following_id=cols["following_id"],
            dhw=cols["dhw"], thw=cols["thw"],
        ))
    return result


def write_trajectories(path: str | Path, series: list[VehicleSeries], schema: SchemaConfig) -> None:
    """Write series back to CSV under the same schema (inverse conversions)."""
    frame_rate = schema.meta.frame_rate
    frames = []
    for s in series:
        row_data = {}
        for field_name, spec in schema.columns.items():
            if field_name == "vehicle_id":
                row_data[spec.name] = np.full(len(s), s.vehicle_id)
                continue
            arr = getattr(s, field_name, None)
            if arr is None:
                continue
            if field_name in _ID_FIELDS:
                row_data[spec.name] = arr
            else:
                row_data[spec.name] = _from_si(np.asarray(arr, dtype=float), spec.unit, frame_rate)
        frames.append(pd.DataFrame(row_data))
    out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=[spec.name for spec in schema.columns.values()])
    out.to_csv(path, index=False)


def resample_gaps(series: VehicleSeries, max_gap: float) -> list[VehicleSeries]:
    """Split a series wherever successive timestamps differ by more than max_gap.

    No interpolation happens; the total sample count is conserved.
    """
    if len(series) == 0:
        return []
    gaps = np.flatnonzero(np.diff(series.t) > max_gap)
    if len(gaps) == 0:
        return [series]
    pieces = []
    start = 0
    for g in gaps:
        pieces.append(series.slice(start, g + 1))
        start = g + 1
    pieces.append(series.slice(start, len(series)))
    return pieces


def contiguous_runs(series: VehicleSeries, tol: float = 0.5) -> list[VehicleSeries]:
    """Split on frame gaps larger than tol*dt beyond one sample period."""
    return resample_gaps(series, series.dt * (1.0 + tol))


def lane_band(y: float | np.ndarray, boundaries: tuple[float, ...]) -> np.ndarray | int:
    """Index of the lane band containing lateral position y.

    Bands are numbered by how many boundaries lie at or below y, so two
    positions are in the same lane iff their band indices match.
    """
    if len(boundaries) == 0:
        raise ConfigError("lane boundary list is empty")
    return np.searchsorted(np.asarray(boundaries), y, side="left")


def write_series_store(path: str | Path, series: list[VehicleSeries]) -> None:
    """Canonical per-vehicle series store, one JSON record per line (SI units)."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in series:
            rec = {"vehicle_id": s.vehicle_id, "dt": s.dt}
            for name in ("t", "x", "y", "v", "v_lat", "a_lon", "a_lat"):
                rec[name] = [float(v) for v in getattr(s, name)]
            rec["lane_id"] = [int(v) for v in s.lane_id]
            for name in ("preceding_id", "following_id"):
                arr = getattr(s, name)
                rec[name] = None if arr is None else [int(v) for v in arr]
            for name in ("dhw", "thw"):
                arr = getattr(s, name)
                rec[name] = None if arr is None else [float(v) for v in arr]
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_series_store(path: str | Path) -> list[VehicleSeries]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(VehicleSeries(
                vehicle_id=int(rec["vehicle_id"]),
                dt=float(rec["dt"]),
                t=np.asarray(rec["t"], dtype=float),
                x=np.asarray(rec["x"], dtype=float),
                y=np.asarray(rec["y"], dtype=float),
                v=np.asarray(rec["v"], dtype=float),
                v_lat=np.asarray(rec["v_lat"], dtype=float),
                a_lon=np.asarray(rec["a_lon"], dtype=float),
                a_lat=np.asarray(rec["a_lat"], dtype=float),
                lane_id=np.asarray(rec["lane_id"], dtype=np.int64),
                preceding_id=None if rec.get("preceding_id") is None
                else np.asarray(rec["preceding_id"], dtype=np.int64),
                following_id=None if rec.get("following_id") is None
                else np.asarray(rec["following_id"], dtype=np.int64),
                dhw=None if rec.get("dhw") is None else np.asarray(rec["dhw"], dtype=float),
                thw=None if rec.get("thw") is None else np.asarray(rec["thw"], dtype=float),
            ))
    return out

"""Generate the bundled recording fixtures (run once; outputs are committed).

fixtures/highd_scene:  4-vehicle lane-change scene with an analytically
known key-time triple, plus two car-following egos (one with a mid-recording
lead change). 25 Hz, lanes at y = 0/4/8.

fixtures/pipeline_cf:  22 ego/lead pairs spanning three driving styles,
sized so the rule stage catches the aggressive pairs, clustering marks the
moderate majority, and the conservative remainder goes to the manual queue
(finalized votes shipped alongside). 10 Hz.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

HIGHD_COLUMNS = ["id", "frame", "x", "y", "xVelocity", "yVelocity",
                 "xAcceleration", "yAcceleration", "laneId", "precedingId",
                 "followingId", "dhw", "thw"]


def sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


def rows_for(vid, frames, x, y, v, v_lat, a_lon, a_lat, lane, preceding=0, dhw=None):
    n = len(frames)
    arr = lambda val: np.full(n, val, dtype=float) if np.isscalar(val) else np.asarray(val, float)
    dhw_arr = arr(dhw) if dhw is not None else np.zeros(n)
    v_arr = arr(v)
    thw = np.where(v_arr > 0, dhw_arr / np.maximum(v_arr, 1e-9), 0.0)
    return pd.DataFrame({
        "id": np.full(n, vid, dtype=int),
        "frame": np.asarray(frames, dtype=int),
        "x": arr(x).round(4),
        "y": arr(y).round(6),
        "xVelocity": v_arr.round(6),
        "yVelocity": arr(v_lat).round(6),
        "xAcceleration": arr(a_lon).round(6),
        "yAcceleration": arr(a_lat).round(6),
        "laneId": np.asarray(lane, dtype=int) if not np.isscalar(lane) else np.full(n, lane, int),
        "precedingId": np.full(n, preceding, dtype=int),
        "followingId": np.zeros(n, dtype=int),
        "dhw": dhw_arr.round(4),
        "thw": thw.round(4),
    })


def make_highd_scene() -> None:
    out = FIXTURES / "highd_scene"
    out.mkdir(parents=True, exist_ok=True)
    fr = 25.0
    dt = 1.0 / fr
    frames = np.arange(0, 501)  # 0..20 s
    t = frames * dt
    parts = []

    # vehicle 1: lane change, logistic lateral profile centered at t = 10
    u = t - 10.0
    y1 = 2.0 + 4.0 * sigmoid(u)
    vlat1 = 4.0 * sigmoid(u) * (1.0 - sigmoid(u))
    alat1 = 4.0 * sigmoid(u) * (1.0 - sigmoid(u)) * (1.0 - 2.0 * sigmoid(u))
    lane1 = np.where(y1 < 4.0, 1, 2)
    x1 = 100.0 + 25.0 * t
    parts.append(rows_for(1, frames, x1, y1, 25.0, vlat1, 0.0, alat1, lane1))

    # vehicle 2: lag vehicle in the target lane, constant 30 m behind
    parts.append(rows_for(2, frames, x1 - 30.0, 6.0, 25.0, 0.0, 0.0, 0.0, 2))

    # vehicle 3: lead in the origin lane, irrelevant to the maneuver
    parts.append(rows_for(3, frames, x1 + 40.0, 2.0, 25.0, 0.0, 0.0, 0.0, 1))

    # vehicle 4: aborted lane change (|v_lat| exceeds the start threshold,
    # but the centerline never reaches the boundary)
    bump = 1.5 * np.exp(-((t - 10.0) / 1.5) ** 2)
    y4 = 2.0 + bump
    vlat4 = 1.5 * (-2.0 * (t - 10.0) / 1.5 ** 2) * np.exp(-((t - 10.0) / 1.5) ** 2)
    parts.append(rows_for(4, frames, 60.0 + 25.0 * t, y4, 25.0, vlat4, 0.0, 0.0, 1))

    # vehicles 5/6: a clean 20 s car-following pair in lane 1
    gap56 = 25.0 + 1.5 * np.sin(2 * np.pi * t / 10.0)
    v5 = 20.0 + 0.8 * np.sin(2 * np.pi * t / 8.0)
    a5 = 0.8 * (2 * np.pi / 8.0) * np.cos(2 * np.pi * t / 8.0)
    x5 = 500.0 + np.cumsum(np.concatenate([[0.0], v5[:-1] * dt]))
    parts.append(rows_for(5, frames, x5, 2.0, v5, 0.0, a5, 0.0, 1, preceding=6, dhw=gap56))
    parts.append(rows_for(6, frames, x5 + gap56, 2.0, v5, 0.0, a5, 0.0, 1))

    # vehicles 7/8/9: ego 7 follows 8 for 20 s, then 9 for 20 s; both runs
    # clear the minimum duration, so the lead change splits one follow
    # into exactly two segments
    frames40 = np.arange(0, 1001)
    t40 = frames40 * dt
    prec = np.where(frames40 < 500, 8, 9)
    gap7 = np.full(len(frames40), 30.0)
    x7 = 900.0 + 22.0 * t40
    df7 = rows_for(7, frames40, x7, 2.0, 22.0, 0.0, 0.0, 0.0, 1, dhw=gap7)
    df7["precedingId"] = prec
    parts.append(df7)
    parts.append(rows_for(8, frames40, x7 + 30.0, 2.0, 22.0, 0.0, 0.0, 0.0, 1))
    parts.append(rows_for(9, frames40, x7 + 30.0 + 3.0, 2.0, 22.0, 0.0, 0.0, 0.0, 1))

    df = pd.concat(parts, ignore_index=True)[HIGHD_COLUMNS]
    df.to_csv(out / "tracks.csv", index=False)
    schema = {
        "recording_id": "highd-scene-01",
        "frame_rate": fr,
        "lane_boundaries": [0.0, 4.0, 8.0],
        "speed_limit_kmh": 120,
        "columns": {
            "vehicle_id": {"name": "id"},
            "t": {"name": "frame", "unit": "frame"},
            "x": {"name": "x", "unit": "m"},
            "y": {"name": "y", "unit": "m"},
            "v": {"name": "xVelocity", "unit": "m/s"},
            "v_lat": {"name": "yVelocity", "unit": "m/s"},
            "a_lon": {"name": "xAcceleration", "unit": "m/s^2"},
            "a_lat": {"name": "yAcceleration", "unit": "m/s^2"},
            "lane_id": {"name": "laneId"},
            "preceding_id": {"name": "precedingId"},
            "following_id": {"name": "followingId"},
            "dhw": {"name": "dhw", "unit": "m"},
            "thw": {"name": "thw", "unit": "s"},
        },
    }
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    print(f"wrote {out}/tracks.csv ({len(df)} rows)")


def make_pipeline_cf() -> None:
    out = FIXTURES / "pipeline_cf"
    out.mkdir(parents=True, exist_ok=True)
    fr = 10.0
    dt = 1.0 / fr
    frames = np.arange(0, 160)  # 16 s
    t = frames * dt
    rng = np.random.default_rng(42)
    parts = []
    styles = []  # (ego_id, style)

    def add_pair(k, v_ego, gap, dv, style, drift=0.0):
        ego, lead = 100 + 2 * k, 101 + 2 * k
        # integer number of wiggle periods over the segment, so the net
        # speed change (hence the mean acceleration) is set by drift alone
        wig = 0.25 * np.sin(2 * np.pi * t / 4.0 + rng.uniform(0, 6.28))
        v_e = v_ego + drift * t + wig
        a_e = np.gradient(v_e, dt)
        x_e = 1000.0 * k + np.cumsum(np.concatenate([[0.0], v_e[:-1] * dt]))
        gap_arr = gap if not np.isscalar(gap) else np.full(len(t), float(gap))
        parts.append(rows_for(ego, frames, x_e, 2.0, v_e, 0.0, a_e, 0.0, 1,
                              preceding=lead, dhw=gap_arr))
        v_l = v_e - dv
        parts.append(rows_for(lead, frames, x_e + gap_arr, 2.0, v_l, 0.0, a_e, 0.0, 1))
        styles.append((ego, style))

    k = 0
    for _ in range(3):  # aggressive by speed rule (> 120 km/h)
        add_pair(k, 34.2 + rng.uniform(0, 0.3), 55.0, 0.0, "aggressive", drift=0.10)
        k += 1
    for _ in range(3):  # aggressive by TTC rule (gap/dv around 4.5 s)
        gap = 9.0 + 0.4 * np.sin(2 * np.pi * t / 5.0)
        add_pair(k, 25.0 + rng.uniform(-0.3, 0.3), gap, 2.0, "aggressive", drift=0.10)
        k += 1
    for i in range(10):  # moderate: mid speed, mid gap, steady pace
        add_pair(k, 25.0 + rng.uniform(-0.1, 0.1), 40.0 + rng.uniform(-3, 3), 0.0, "moderate")
        k += 1
    for i in range(6):  # conservative: slow, large gap, easing off
        add_pair(k, 18.0 + rng.uniform(-0.1, 0.1), 70.0 + rng.uniform(-3, 3), 0.0,
                 "conservative", drift=-0.06)
        k += 1

    df = pd.concat(parts, ignore_index=True)[HIGHD_COLUMNS]
    df.to_csv(out / "tracks.csv", index=False)
    schema = {
        "recording_id": "pipeline-cf-01",
        "frame_rate": fr,
        "lane_boundaries": [0.0, 4.0],
        "speed_limit_kmh": 120,
        "columns": {
            "vehicle_id": {"name": "id"},
            "t": {"name": "frame", "unit": "frame"},
            "x": {"name": "x", "unit": "m"},
            "y": {"name": "y", "unit": "m"},
            "v": {"name": "xVelocity", "unit": "m/s"},
            "v_lat": {"name": "yVelocity", "unit": "m/s"},
            "a_lon": {"name": "xAcceleration", "unit": "m/s^2"},
            "a_lat": {"name": "yAcceleration", "unit": "m/s^2"},
            "lane_id": {"name": "laneId"},
            "preceding_id": {"name": "precedingId"},
            "following_id": {"name": "followingId"},
            "dhw": {"name": "dhw", "unit": "m"},
            "thw": {"name": "thw", "unit": "s"},
        },
    }
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")

    # manual votes for everything the rule and cluster stages leave
    # pending, mirroring the real annotation workflow end to end
    sys.path.insert(0, str(ROOT / "src"))
    from drivestyle.extraction import CfExtractionParams, extract_car_following
    from drivestyle.features import featurize
    from drivestyle.labeling import NAME_TO_LABEL, stage_labels
    from drivestyle.trajectory import SchemaConfig, load_trajectories

    cfg = SchemaConfig.from_dict(schema)
    series = load_trajectories(out / "tracks.csv", cfg)
    segments = extract_car_following(series, CfExtractionParams(),
                                     source=cfg.meta.recording_id)
    fvs = [featurize(seg) for seg in segments]
    _, pending = stage_labels(fvs, segments)
    style_by_ego = dict(styles)
    with open(out / "manual_labels.jsonl", "w") as fh:
        for sid in sorted(pending):
            ego = int(sid.split("-")[-2])
            label = NAME_TO_LABEL[style_by_ego[ego]]
            fh.write(json.dumps({
                "segment_id": sid,
                "label": label,
                "provenance": "manual",
                "votes": {"annotator-1": label, "annotator-2": label, "annotator-3": label},
            }, sort_keys=True))
            fh.write("\n")
    print(f"wrote {out}/tracks.csv ({len(df)} rows), {len(segments)} segments, "
          f"{len(pending)} pending -> manual")


if __name__ == "__main__":
    make_highd_scene()
    make_pipeline_cf()

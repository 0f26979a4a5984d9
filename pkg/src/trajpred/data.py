"""Scene ingestion, coordinate frames, and model input encoding.

Sequences follow the common motion-forecasting CSV layout: one observation
per row with columns TIMESTAMP, TRACK_ID, OBJECT_TYPE, X, Y, sampled at
10 Hz. OBJECT_TYPE is "AGENT" for the single target vehicle. Timesteps are
integers with t = 0 at the target's last observed frame (grid slot 19), a
20-step history at t in [-19, 0] and an optional 30-step future at [1, 30].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

HISTORY_STEPS = 20
FUTURE_STEPS = 30
ANCHOR_SLOT = HISTORY_STEPS - 1  # grid slot that maps to t = 0
STEP_SECONDS = 0.1

RAW = "raw"
TARGET_LOCAL = "target-local"


class DataError(ValueError):
    """Unusable scene input (missing target, duplicate rows, gaps, ...)."""


@dataclass
class Track:
    track_id: str
    timesteps: np.ndarray  # (L,) strictly increasing ints
    positions: np.ndarray  # (L, 2) meters
    role: str = "other"  # "target" | "other"

    def position_at(self, t: int) -> np.ndarray | None:
        hit = np.nonzero(self.timesteps == t)[0]
        return self.positions[hit[0]] if hit.size else None

    def observed_at(self, t: int) -> bool:
        return bool(np.any(self.timesteps == t))


@dataclass
class Scene:
    scene_id: str
    tracks: list[Track]
    t_h: int = HISTORY_STEPS
    t_f: int = FUTURE_STEPS
    frame: str = RAW
    transform: tuple[np.ndarray, float] | None = None  # (origin, rotation angle)
    metadata: dict = field(default_factory=dict)

    @property
    def target(self) -> Track:
        return self.tracks[0]

    @property
    def num_vehicles(self) -> int:
        return len(self.tracks)

    def validate(self) -> None:
        roles = [t.role for t in self.tracks]
        if roles.count("target") != 1 or roles[0] != "target":
            raise DataError(f"scene {self.scene_id}: expected a single leading target track")
        for tr in self.tracks:
            if np.any(np.diff(tr.timesteps) <= 0):
                raise DataError(f"scene {self.scene_id}: track {tr.track_id} timesteps not increasing")
            if not tr.observed_at(0):
                raise DataError(f"scene {self.scene_id}: track {tr.track_id} unobserved at t=0")
        tgt = self.target
        for t in range(-self.t_h + 1, 1):
            if not tgt.observed_at(t):
                raise DataError(f"scene {self.scene_id}: target missing history step t={t}")

    def has_future(self) -> bool:
        return self.target.observed_at(self.t_f)

    def target_future(self) -> np.ndarray:
        """(t_f, 2) ground-truth future of the target; requires a full future."""
        out = np.empty((self.t_f, 2))
        for i, t in enumerate(range(1, self.t_f + 1)):
            pos = self.target.position_at(t)
            if pos is None:
                raise DataError(f"scene {self.scene_id}: target missing future step t={t}")
            out[i] = pos
        return out


@dataclass
class ActorInput:
    """Per-vehicle encoder input: t_h rows of (dx, dy, observed flag)."""

    track_id: str
    features: np.ndarray  # (t_h, 3)
    pos0: np.ndarray  # (2,) position at t = 0


def load_scene_csv(path, scene_id: str | None = None) -> Scene:
    """Read one sequence file into a raw-frame Scene.

    Timestamps are snapped to the nearest 0.1 s grid slot relative to the
    earliest row; a collision after snapping is rejected. Tracks without an
    observation at the target's t=0 frame are dropped.
    """
    path = Path(path)
    rows: list[tuple[float, str, str, float, float]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"TIMESTAMP", "TRACK_ID", "OBJECT_TYPE", "X", "Y"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise DataError(f"{path}: missing columns, need {sorted(needed)}")
        for rec in reader:
            rows.append((float(rec["TIMESTAMP"]), rec["TRACK_ID"], rec["OBJECT_TYPE"],
                         float(rec["X"]), float(rec["Y"])))
    if not rows:
        raise DataError(f"{path}: empty sequence")

    ts0 = min(r[0] for r in rows)
    per_track: dict[str, dict[int, tuple[float, float]]] = {}
    track_order: list[str] = []
    agent_ids = set()
    for ts, tid, otype, x, y in rows:
        slot = int(round((ts - ts0) / STEP_SECONDS))
        t = slot - ANCHOR_SLOT
        if t < -ANCHOR_SLOT or t > FUTURE_STEPS:
            raise DataError(f"{path}: timestamp {ts} outside the supported 5 s window")
        obs = per_track.setdefault(tid, {})
        if t in obs:
            raise DataError(f"{path}: duplicate observation for track {tid} at slot {slot}")
        obs[t] = (x, y)
        if tid not in track_order:
            track_order.append(tid)
        if otype == "AGENT":
            agent_ids.add(tid)

    if len(agent_ids) != 1:
        raise DataError(f"{path}: expected exactly one AGENT track, found {len(agent_ids)}")
    agent_id = next(iter(agent_ids))

    tracks: list[Track] = []
    for tid in [agent_id] + [t for t in track_order if t != agent_id]:
        obs = per_track[tid]
        if 0 not in obs:
            continue  # only vehicles observable at t=0 are kept
        steps = np.array(sorted(obs), dtype=np.int64)
        pos = np.array([obs[t] for t in steps], dtype=np.float64)
        tracks.append(Track(tid, steps, pos, role="target" if tid == agent_id else "other"))

    scene = Scene(scene_id=scene_id or path.stem, tracks=tracks)
    scene.validate()
    if scene.target.timesteps.max() > 0:  # any future rows demand a complete future
        for t in range(1, FUTURE_STEPS + 1):
            if not scene.target.observed_at(t):
                raise DataError(f"{path}: target future has a gap at t={t}")
    return scene


def save_scene_csv(scene: Scene, path) -> None:
    """Write a raw-frame scene back to the standard CSV layout."""
    if scene.frame != RAW:
        raise DataError("save_scene_csv expects a raw-frame scene")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["TIMESTAMP", "TRACK_ID", "OBJECT_TYPE", "X", "Y"])
        for tr in scene.tracks:
            otype = "AGENT" if tr.role == "target" else "OTHERS"
            for t, (x, y) in zip(tr.timesteps, tr.positions):
                ts = (int(t) + ANCHOR_SLOT) * STEP_SECONDS
                writer.writerow([f"{ts:.1f}", tr.track_id, otype, repr(float(x)), repr(float(y))])


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def to_target_frame(scene: Scene) -> Scene:
    """Translate to the target's t=0 position and rotate its last observed
    heading (t=0 minus t=-1) onto the +x axis. A stationary target keeps
    rotation 0."""
    if scene.frame != RAW:
        raise DataError(f"scene {scene.scene_id} is already in frame {scene.frame}")
    origin = scene.target.position_at(0).copy()
    prev = scene.target.position_at(-1)
    heading = origin - prev
    angle = 0.0 if np.linalg.norm(heading) < 1e-12 else math.atan2(heading[1], heading[0])
    rot = _rotation(-angle)
    tracks = [Track(tr.track_id, tr.timesteps.copy(), (tr.positions - origin) @ rot.T, tr.role)
              for tr in scene.tracks]
    return replace(scene, tracks=tracks, frame=TARGET_LOCAL, transform=(origin, angle))


def from_target_frame(positions: np.ndarray, transform: tuple[np.ndarray, float]) -> np.ndarray:
    """Invert :func:`to_target_frame` for an (..., 2) array of positions."""
    origin, angle = transform
    rot = _rotation(angle)
    return positions @ rot.T + origin


def encode_inputs(scene: Scene) -> list[ActorInput]:
    """Displacement encoding of every retained vehicle, target first.

    Slot s (0-based, s = t + t_h - 1) holds the displacement from t-1 to t
    with flag 1 when both endpoints were observed, and (0, 0, 0) otherwise.
    The earliest slot has no predecessor inside the window and is always
    (0, 0, 0).
    """
    if scene.frame != TARGET_LOCAL:
        raise DataError("encode_inputs expects a target-local scene")
    out = []
    for tr in scene.tracks:
        feats = np.zeros((scene.t_h, 3))
        for s in range(1, scene.t_h):
            t = s - (scene.t_h - 1)
            cur = tr.position_at(t)
            prev = tr.position_at(t - 1)
            if cur is not None and prev is not None:
                feats[s, 0:2] = cur - prev
                feats[s, 2] = 1.0
        out.append(ActorInput(tr.track_id, feats, tr.position_at(0).copy()))
    return out


# ---------------------------------------------------------------------------
# dataset manifests

MANIFEST_COLUMNS = ["scene_id", "file", "split", "kind", "causal_track", "turn"]


def save_manifest(path, entries: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        for e in entries:
            writer.writerow({c: e.get(c, "") for c in MANIFEST_COLUMNS})


def load_manifest(path) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        entries = list(csv.DictReader(fh))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def load_split(manifest_path, split: str) -> list[Scene]:
    """Load all scenes of one split, in manifest order, with metadata attached."""
    manifest_path = Path(manifest_path)
    scenes = []
    for entry in load_manifest(manifest_path):
        if entry["split"] != split:
            continue
        scene = load_scene_csv(manifest_path.parent / entry["file"], scene_id=entry["scene_id"])
        scene.metadata["kind"] = entry.get("kind", "")
        if entry.get("causal_track"):
            scene.metadata["causal_track"] = entry["causal_track"]
        if entry.get("turn"):
            scene.metadata["turn"] = entry["turn"]
        scenes.append(scene)
    if not scenes:
        raise DataError(f"{manifest_path}: no scenes in split {split!r}")
    return scenes

"""Seeded synthetic scene generators.

Four scenario kinds, all 5 s at 10 Hz in the raw frame, sized to urban
traffic (speeds 5-15 m/s, headways 5-30 m):

* ``constant-velocity``: a crowd of straight-line movers. Values are snapped
  to a 1/1024 m grid so the ground-truth future equals linear extrapolation
  of the history bit-exactly.
* ``leader-follower``: the target follows a leader that either cruises or
  brakes late in the history window; the follower reacts strictly later,
  inside the future window. Distractor vehicles (parked, oncoming, trailing)
  are placed so the nearest vehicle is frequently not the leader. Scenes
  carry the leader's id as a causal label.
* ``intersection``: the target yields to (or ignores) a crossing vehicle.
* ``bimodal-turn``: pairs of scenes with bit-identical histories whose
  futures split 50/50 into a gentle left arc and a sharp decelerating right
  turn. The asymmetric geometry keeps the two future families well apart.
"""

from __future__ import annotations

import math

import numpy as np

from .data import ANCHOR_SLOT, FUTURE_STEPS, HISTORY_STEPS, STEP_SECONDS, Scene, Track

KINDS = ("constant-velocity", "leader-follower", "intersection", "bimodal-turn")

_TOTAL = HISTORY_STEPS + FUTURE_STEPS  # 50 frames
_ALL_STEPS = np.arange(-ANCHOR_SLOT, FUTURE_STEPS + 1, dtype=np.int64)


def _snap(x):
    return np.round(np.asarray(x, dtype=np.float64) * 1024.0) / 1024.0


def _integrate(speeds: np.ndarray, headings: np.ndarray, anchor_pos: np.ndarray) -> np.ndarray:
    """Positions for all 50 frames from per-segment speeds/headings (length 49),
    anchored so frame ANCHOR_SLOT sits at ``anchor_pos``."""
    steps = np.stack([speeds * STEP_SECONDS * np.cos(headings),
                      speeds * STEP_SECONDS * np.sin(headings)], axis=1)
    pos = np.zeros((_TOTAL, 2))
    pos[1:] = np.cumsum(steps, axis=0)
    return pos - pos[ANCHOR_SLOT] + anchor_pos


def _brake_profile(v0: float, onset_step: int, decel: float, v_end: float) -> np.ndarray:
    """Per-segment speeds (length 49): v0 until the onset frame, then a
    constant-deceleration ramp down to v_end."""
    speeds = np.full(_TOTAL - 1, v0)
    for i in range(_TOTAL - 1):
        t = i - ANCHOR_SLOT  # segment from frame t to t+1
        if t >= onset_step:
            speeds[i] = max(v_end, v0 - decel * (t - onset_step + 1) * STEP_SECONDS)
    return speeds


def _world_pose(rng: np.random.Generator) -> tuple[np.ndarray, float]:
    shift = rng.uniform(-80.0, 80.0, size=2)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    return shift, angle


def _apply_pose(pos: np.ndarray, pose: tuple[np.ndarray, float]) -> np.ndarray:
    shift, angle = pose
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return pos @ rot.T + shift


def _track(track_id: str, pos: np.ndarray, role: str = "other",
           first_step: int | None = None) -> Track:
    steps = _ALL_STEPS
    if first_step is not None:
        mask = steps >= first_step
        steps, pos = steps[mask], pos[mask]
    return Track(track_id, steps.copy(), np.asarray(pos, dtype=np.float64), role=role)


def _constant_velocity_scene(rng: np.random.Generator, scene_id: str) -> Scene:
    frames = np.arange(_TOTAL, dtype=np.float64).reshape(-1, 1)

    def mover(min_speed: float = 0.0):
        while True:
            step = _snap(rng.uniform(-1.2, 1.2, size=2))  # displacement per frame
            if np.linalg.norm(step) * 10.0 >= min_speed:
                break
        p0 = _snap(rng.uniform(-60.0, 60.0, size=2))
        return p0 + frames * step  # exact: all terms on the 1/1024 grid

    tracks = [_track("target", mover(min_speed=2.0), role="target")]
    for i in range(int(rng.integers(2, 6))):
        tracks.append(_track(f"other-{i}", mover()))
    return Scene(scene_id, tracks, metadata={"kind": "constant-velocity"})


def _leader_follower_scene(rng: np.random.Generator, scene_id: str) -> Scene:
    """Follower (target) cruises behind a leader; in half the scenes the
    leader brakes late in the history and the follower reacts after a delay,
    strictly inside the future window. Distractor composition is randomized
    per scene so no distractor kind is a stable feature anchor: parked cars
    are often nearer to the target than the leader, oncoming traffic may be
    partially observed, and a trailing car may tag along."""
    v = rng.uniform(8.0, 14.0)
    headway = rng.uniform(8.0, 25.0)
    braking = bool(rng.random() < 0.5)
    zero_heading = np.zeros(_TOTAL - 1)

    if braking:
        leader_onset = int(rng.integers(-6, -2))  # inside the history window
        decel = rng.uniform(3.0, 6.0)
        # fixed reaction time: the follower's future is fully determined by
        # the leader's observable braking, so reading the leader pays off
        follower_onset = leader_onset + 7  # strictly inside the future
        leader_speeds = _brake_profile(v, leader_onset, decel, rng.uniform(0.0, 1.0))
        follower_speeds = _brake_profile(v, follower_onset, decel, 0.0)
    else:
        leader_onset = follower_onset = None
        leader_speeds = np.full(_TOTAL - 1, v)
        follower_speeds = np.full(_TOTAL - 1, v)

    follower = _integrate(follower_speeds, zero_heading, np.zeros(2))
    leader = _integrate(leader_speeds, zero_heading, np.array([headway, 0.0]))

    pose = _world_pose(rng)
    tracks = [
        _track("target", _apply_pose(follower, pose), role="target"),
        _track("leader", _apply_pose(leader, pose)),
    ]
    n_parked = int(rng.integers(1, 3))
    for i in range(n_parked):
        side = 1.0 if rng.random() < 0.5 else -1.0
        pos = np.array([rng.uniform(-6.0, 15.0), side * rng.uniform(2.5, 7.0)])
        tracks.append(_track(f"parked-{i}", _apply_pose(np.tile(pos, (_TOTAL, 1)), pose)))
    for i in range(int(rng.integers(0, 3))):
        speed = rng.uniform(8.0, 14.0)
        lane = -(3.5 + 0.6 * i) if rng.random() < 0.8 else (3.5 + 0.6 * i)
        pos = _integrate(np.full(_TOTAL - 1, speed), np.full(_TOTAL - 1, math.pi),
                         np.array([rng.uniform(10.0, 60.0), lane]))
        first = int(rng.integers(-19, -4)) if rng.random() < 0.5 else None
        tracks.append(_track(f"oncoming-{i}", _apply_pose(pos, pose), first_step=first))
    if rng.random() < 0.6:
        pos = _integrate(np.full(_TOTAL - 1, v), zero_heading,
                         np.array([-rng.uniform(6.0, 20.0), 0.0]))
        tracks.append(_track("trailing", _apply_pose(pos, pose)))

    meta = {"kind": "leader-follower", "causal_track": "leader",
            "braking": braking, "leader_onset": leader_onset,
            "follower_onset": follower_onset}
    return Scene(scene_id, tracks, metadata=meta)


def _intersection_scene(rng: np.random.Generator, scene_id: str) -> Scene:
    v = rng.uniform(6.0, 10.0)
    vc = rng.uniform(6.0, 12.0)
    cross_anchor = np.array([0.0, -rng.uniform(8.0, 25.0)])
    crossing = _integrate(np.full(_TOTAL - 1, vc), np.full(_TOTAL - 1, math.pi / 2.0),
                          cross_anchor)

    # The target yields if the crossing vehicle reaches the conflict zone first.
    target_eta = rng.uniform(12.0, 20.0) / v
    cross_eta = -cross_anchor[1] / vc
    yields = cross_eta < target_eta + 1.0
    x0 = -target_eta * v  # target distance from the conflict point at t=0
    speeds = np.full(_TOTAL - 1, v)
    if yields:
        cross_clear = cross_eta + 6.0 / vc
        for i in range(_TOTAL - 1):
            t_sec = (i - ANCHOR_SLOT) * STEP_SECONDS
            if 0.0 <= t_sec < cross_clear:
                speeds[i] = max(0.0, v - rng.uniform(2.5, 4.0) * t_sec)
            elif t_sec >= cross_clear:
                speeds[i] = min(v, speeds[i - 1] + 2.5 * STEP_SECONDS)
    target = _integrate(speeds, np.zeros(_TOTAL - 1), np.array([x0, 0.0]))

    parked = np.tile(np.array([rng.uniform(-10.0, 0.0), rng.uniform(4.0, 7.0)]), (_TOTAL, 1))
    pose = _world_pose(rng)
    tracks = [
        _track("target", _apply_pose(target, pose), role="target"),
        _track("crossing", _apply_pose(crossing, pose)),
        _track("parked", _apply_pose(parked, pose)),
    ]
    return Scene(scene_id, tracks, metadata={"kind": "intersection", "yields": yields})


def _bimodal_pair(rng: np.random.Generator, scene_id_base: str) -> list[Scene]:
    v = rng.uniform(8.0, 12.0)
    pose = _world_pose(rng)
    hist_frames = np.arange(-ANCHOR_SLOT, 1, dtype=np.float64).reshape(-1, 1)
    history = hist_frames * np.array([v * STEP_SECONDS, 0.0])  # straight, ends at origin

    # Gentle left arc at constant speed: a quarter circle traversed in 3 s.
    radius = 3.0 * v / (math.pi / 2.0)
    omega = v / radius
    t_fut = np.arange(1, FUTURE_STEPS + 1, dtype=np.float64) * STEP_SECONDS
    left = np.stack([radius * np.sin(omega * t_fut),
                     radius * (1.0 - np.cos(omega * t_fut))], axis=1)

    # Sharp right turn with deceleration, integrated stepwise.
    right = np.zeros((FUTURE_STEPS, 2))
    pos = np.zeros(2)
    heading = 0.0
    speed = v
    dheading = -(math.pi / 2.0) / FUTURE_STEPS
    dspeed = (v / 3.0 - v) / FUTURE_STEPS
    for i in range(FUTURE_STEPS):
        pos = pos + speed * STEP_SECONDS * np.array([math.cos(heading), math.sin(heading)])
        right[i] = pos
        heading += dheading
        speed += dspeed

    scenes = []
    for suffix, fut, turn in (("L", left, "left"), ("R", right, "right")):
        full = np.vstack([history, fut])
        track = _track("target", _apply_pose(full, pose), role="target")
        scenes.append(Scene(f"{scene_id_base}{suffix}", [track],
                            metadata={"kind": "bimodal-turn", "turn": turn,
                                      "pair": scene_id_base}))
    return scenes


def generate_synthetic(kind: str, n_scenes: int, seed: int) -> list[Scene]:
    """Generate ``n_scenes`` scenes of one kind; the seed fixes everything."""
    if kind not in KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; choose from {KINDS}")
    rng = np.random.default_rng(seed)
    scenes: list[Scene] = []
    if kind == "bimodal-turn":
        if n_scenes % 2 != 0:
            raise ValueError("bimodal-turn needs an even scene count (left/right pairs)")
        for i in range(n_scenes // 2):
            scenes.extend(_bimodal_pair(rng, f"{kind}-{seed}-{i:04d}"))
    else:
        builder = {"constant-velocity": _constant_velocity_scene,
                   "leader-follower": _leader_follower_scene,
                   "intersection": _intersection_scene}[kind]
        for i in range(n_scenes):
            scenes.append(builder(rng, f"{kind}-{seed}-{i:04d}"))
    for s in scenes:
        s.validate()
    return scenes

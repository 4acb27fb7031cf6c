"""Rule-based annotation tooling: sliding-window frame labeling, keyframe
detection, phase-change detection, deterministic state-history summaries,
and a pluggable text-generation client for trajectory-level scene
descriptions.

Every operation here is pure given (episode, config): repeated runs produce
byte-identical output, so labeled datasets are reproducible as long as the
threshold config is recorded alongside them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import numpy as np

from . import kinematics
from .errors import CLIENT_UNAVAILABLE, InsufficientFramesError
from .trajectory import ARMS, ArmLabel, Episode, FrameLabel

CAUSE_GRIPPER = "gripper_transition"
CAUSE_MOTION = "motion_extremum"
CAUSE_SEGMENT = "segment_boundary"
_CAUSE_RANK = {CAUSE_GRIPPER: 0, CAUSE_MOTION: 1, CAUSE_SEGMENT: 2}


@dataclass(frozen=True)
class LabelConfig:
    """Thresholds for rule-based labeling.

    ``direction_vocabulary`` holds the six motion labels in the order
    +x, -x, +y, -y, +z, -z. ``gripper_open_at_one`` selects whether gripper
    value 1 means fully open (the default convention) or fully closed.
    """

    window: int = 5
    stationary_speed: float = 0.01
    gripper_open_threshold: float = 0.9
    gripper_closed_threshold: float = 0.1
    gripper_delta: float = 0.1
    direction_vocabulary: tuple[str, str, str, str, str, str] = ("+x", "-x", "+y", "-y", "+z", "-z")
    gripper_open_at_one: bool = True

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.stationary_speed <= 0:
            raise ValueError("stationary_speed must be > 0")
        if not (0.0 <= self.gripper_closed_threshold < self.gripper_open_threshold <= 1.0):
            raise ValueError("need 0 <= closed_threshold < open_threshold <= 1")
        if len(self.direction_vocabulary) != 6:
            raise ValueError("direction_vocabulary needs exactly 6 labels")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction_vocabulary"] = list(self.direction_vocabulary)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "LabelConfig":
        if "direction_vocabulary" in data:
            data = dict(data)
            data["direction_vocabulary"] = tuple(data["direction_vocabulary"])
        return cls(**data)


@dataclass(frozen=True)
class Keyframe:
    frame: int
    cause: str


def _window_bounds(i: int, n: int, window: int) -> tuple[int, int]:
    # Centered window, clamped (shrunk) at the episode edges.
    half = window // 2
    return max(0, i - half), min(n - 1, i + half)


def _windowed_mean_speed(speeds: np.ndarray, window: int) -> np.ndarray:
    n = len(speeds)
    csum = np.concatenate([[0.0], np.cumsum(speeds)])
    out = np.empty(n)
    for i in range(n):
        a, b = _window_bounds(i, n, window)
        out[i] = (csum[b + 1] - csum[a]) / (b - a + 1)
    return out


def _gripper_label(grips: np.ndarray, i: int, cfg: LabelConfig) -> str:
    n = len(grips)
    a, b = _window_bounds(i, n, cfg.window)
    g = grips if cfg.gripper_open_at_one else 1.0 - grips
    delta = g[b] - g[a]
    if delta >= cfg.gripper_delta:
        return "opening"
    if delta <= -cfg.gripper_delta:
        return "closing"
    if g[i] >= cfg.gripper_open_threshold:
        return "open"
    if g[i] <= cfg.gripper_closed_threshold:
        return "closed"
    return "partial"


def _motion_label(positions: np.ndarray, wspeed: float, i: int, cfg: LabelConfig) -> str:
    if wspeed < cfg.stationary_speed:
        return "stationary"
    a, b = _window_bounds(i, len(positions), cfg.window)
    disp = positions[b] - positions[a]
    mags = np.abs(disp)
    if not mags.any():
        # Net-zero displacement with nonzero mean speed: motion in place.
        return "stationary"
    axis = int(np.argmax(mags))  # ties resolve to the earlier axis (x, y, z)
    return cfg.direction_vocabulary[2 * axis + (0 if disp[axis] > 0 else 1)]


def label_frames(ep: Episode, cfg: LabelConfig | None = None) -> list[FrameLabel]:
    """Assign one (motion, gripper_state, speed) label per frame and arm.

    Motion is "stationary" below the windowed-mean-speed threshold,
    otherwise the direction label of the dominant axis of the net windowed
    displacement. Gripper labels come from thresholds on the value and the
    signed change across the window.
    """
    cfg = cfg or LabelConfig()
    n = len(ep.frames)
    if n < cfg.window:
        raise InsufficientFramesError(f"{n} frames < window {cfg.window}")

    per_arm: dict[str, list[ArmLabel]] = {}
    for arm in ARMS:
        speeds, _ = kinematics.linear_velocity(ep, arm)
        wspeeds = _windowed_mean_speed(speeds, cfg.window)
        positions = kinematics.arm_positions(ep, arm)
        grips = kinematics.arm_grippers(ep, arm)
        per_arm[arm] = [
            ArmLabel(
                motion=_motion_label(positions, wspeeds[i], i, cfg),
                gripper_state=_gripper_label(grips, i, cfg),
                speed=float(wspeeds[i]),
            )
            for i in range(n)
        ]
    return [FrameLabel(left=per_arm["left"][i], right=per_arm["right"][i]) for i in range(n)]


def detect_keyframes(ep: Episode, cfg: LabelConfig | None = None) -> list[Keyframe]:
    """Find behavioral-change frames: gripper threshold crossings, speed
    minima below the stationary threshold bounded by motion on both sides,
    and annotated segment boundaries.

    Candidates closer than one window length are de-duplicated; the
    earliest one wins (ties on the same frame resolve by cause order:
    gripper, motion, segment).
    """
    cfg = cfg or LabelConfig()
    n = len(ep.frames)
    candidates: list[tuple[int, int, str]] = []

    for arm in ARMS:
        grips = kinematics.arm_grippers(ep, arm)
        for thr in (cfg.gripper_open_threshold, cfg.gripper_closed_threshold):
            below = grips < thr
            for i in range(1, n):
                if below[i] != below[i - 1]:
                    candidates.append((i, _CAUSE_RANK[CAUSE_GRIPPER], CAUSE_GRIPPER))

        if n >= 2:
            speeds, _ = kinematics.linear_velocity(ep, arm)
            wspeeds = _windowed_mean_speed(speeds, cfg.window)
            slow = wspeeds < cfg.stationary_speed
            # Each maximal slow run bounded by motion on both sides yields
            # one keyframe at the run's speed minimum.
            i = 0
            while i < n:
                if not slow[i]:
                    i += 1
                    continue
                j = i
                while j + 1 < n and slow[j + 1]:
                    j += 1
                if i > 0 and j < n - 1:
                    k = i + int(np.argmin(wspeeds[i : j + 1]))
                    candidates.append((k, _CAUSE_RANK[CAUSE_MOTION], CAUSE_MOTION))
                i = j + 1

    for seg in ep.annotation.segment_level:
        candidates.append((seg.start_frame, _CAUSE_RANK[CAUSE_SEGMENT], CAUSE_SEGMENT))
        candidates.append((seg.end_frame, _CAUSE_RANK[CAUSE_SEGMENT], CAUSE_SEGMENT))

    keyframes: list[Keyframe] = []
    last = None
    for frame, _, cause in sorted(set(candidates)):
        if last is not None and frame - last < cfg.window:
            continue
        keyframes.append(Keyframe(frame=frame, cause=cause))
        last = frame
    return keyframes


def detect_phase_change(labels: Sequence[FrameLabel], at: int) -> bool:
    """True iff any arm's motion or gripper label differs between frames
    ``at - 1`` and ``at``."""
    if at < 1 or at >= len(labels):
        raise IndexError(f"frame {at} out of range for {len(labels)} labels (need 1 <= at < n)")
    prev, cur = labels[at - 1], labels[at]
    for arm in ARMS:
        p, c = getattr(prev, arm), getattr(cur, arm)
        if p.motion != c.motion or p.gripper_state != c.gripper_state:
            return True
    return False


def _runs(states: list[tuple[str, str]]) -> list[tuple[int, int, str, str]]:
    runs = []
    start = 0
    for i in range(1, len(states) + 1):
        if i == len(states) or states[i] != states[start]:
            motion, gripper = states[start]
            runs.append((start, i - 1, motion, gripper))
            start = i
    return runs


def _run_phrase(motion: str, gripper: str) -> str:
    moving = "stationary" if motion == "stationary" else f"moving {motion}"
    if gripper in ("opening", "closing"):
        return f"{gripper} while {moving}"
    return moving


def summarize_history(
    labels: Sequence[FrameLabel],
    upto: int,
    max_items: int,
    timestamps: Sequence[float] | None = None,
) -> str:
    """Render each arm's recent label history as deterministic text.

    Labels up to ``upto`` (inclusive) are run-length encoded per arm; only
    the most recent ``max_items`` runs are kept, rendered oldest first.
    Durations render in seconds when ``timestamps`` are supplied, else as
    frame counts. Identical inputs yield byte-identical text.
    """
    if not (0 <= upto < len(labels)):
        raise IndexError(f"frame {upto} out of range for {len(labels)} labels")
    clauses: list[str] = []
    for arm in ARMS:
        states = [(getattr(l, arm).motion, getattr(l, arm).gripper_state) for l in labels[: upto + 1]]
        for start, end, motion, gripper in _runs(states)[-max_items:]:
            if timestamps is not None:
                span = f"{timestamps[end] - timestamps[start]:.1f} s"
            else:
                span = f"{end - start + 1} frames"
            clauses.append(f"{arm}: {_run_phrase(motion, gripper)} ({span})")
    return "; ".join(clauses)


# ---------------------------------------------------------------------------
# scene description


@dataclass(frozen=True)
class Detection:
    label: str
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 in pixels
    camera: str = "head"


def detections_from_json(text: str | bytes) -> list[Detection]:
    """Parse the detections input format: a JSON list of
    {label, box: [x1, y1, x2, y2], camera} objects."""
    data = json.loads(text)
    out = []
    for i, d in enumerate(data):
        box = d["box"]
        if len(box) != 4:
            raise ValueError(f"detection {i}: box must have 4 coordinates")
        out.append(Detection(label=d["label"], box=tuple(float(v) for v in box), camera=d.get("camera", "head")))
    return out


class TextClient(Protocol):
    """Single request/response text generation: {system, prompt} -> text."""

    def generate(self, system: str, prompt: str) -> str: ...


@dataclass(frozen=True)
class SceneDescription:
    """Result plus the audit record of what was (or would have been) sent."""

    text: str
    system: str
    prompt: str
    from_client: bool
    error: str | None = None


_SCENE_SYSTEM = (
    "You describe a robot manipulation scene. Given object detections as "
    "JSON, write one short natural-language paragraph covering the objects "
    "and their placement."
)


def _template_description(detections: Sequence[Detection]) -> str:
    if not detections:
        return "no objects detected"
    parts = []
    for d in detections:
        cx = (d.box[0] + d.box[2]) / 2.0
        cy = (d.box[1] + d.box[3]) / 2.0
        parts.append(f"a {d.label} centered at ({cx:.0f}, {cy:.0f}) in the {d.camera} view")
    return "; ".join(parts) + "."


def describe_scene(detections: Sequence[Detection], client: TextClient | None = None) -> SceneDescription:
    """Turn detections into scene text.

    Without a client this is the deterministic template enumeration. With a
    client, the structured prompt is forwarded and the reply returned
    verbatim; transport failure falls back to the template with error code
    CLIENT_UNAVAILABLE. The prompt is always recorded for audit.
    """
    prompt = json.dumps(
        {"detections": [{"label": d.label, "box": list(d.box), "camera": d.camera} for d in detections]},
        sort_keys=True,
    )
    if client is None:
        return SceneDescription(
            text=_template_description(detections), system=_SCENE_SYSTEM, prompt=prompt, from_client=False
        )
    try:
        text = client.generate(_SCENE_SYSTEM, prompt)
    except Exception:
        return SceneDescription(
            text=_template_description(detections),
            system=_SCENE_SYSTEM,
            prompt=prompt,
            from_client=False,
            error=CLIENT_UNAVAILABLE,
        )
    return SceneDescription(text=text, system=_SCENE_SYSTEM, prompt=prompt, from_client=True)

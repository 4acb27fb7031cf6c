"""Episode data model: synchronized bimanual end-effector frames plus the
three-level annotation containers (trajectory text, subtask segments,
per-frame labels).

Conventions: distances in meters, timestamps in seconds relative to the
first frame, orientations as the first two columns of a rotation matrix
("6D" representation), gripper articulation normalized to [0, 1].
Episodes are immutable after load and safe to share across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, IO, Iterable

import numpy as np

from .errors import DegenerateOrientationError, EpisodeParseError, EpisodeSchemaError

Vec3 = tuple[float, float, float]
Orientation6D = tuple[Vec3, Vec3]

ARMS = ("left", "right")
SEGMENT_ARMS = ("left", "right", "both")

# Closed default vocabularies for frame-level labels. The annotator module
# builds labels from these; validation checks closure against them.
MOTION_LABELS = ("stationary", "+x", "-x", "+y", "-y", "+z", "-z")
GRIPPER_LABELS = ("open", "closed", "opening", "closing", "partial")

# Below this residual norm the Gram-Schmidt step is considered degenerate.
_DEGENERACY_EPS = 1e-8

IDENTITY_6D: Orientation6D = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))


@dataclass(frozen=True)
class EffectorState:
    """One arm's end-effector sample: position, 6D orientation, gripper."""

    position: Vec3
    orientation: Orientation6D = IDENTITY_6D
    gripper: float = 1.0


@dataclass(frozen=True)
class Frame:
    timestamp: float
    left: EffectorState
    right: EffectorState
    joints: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Segment:
    """A subtask span over frame indices (inclusive on both ends)."""

    subtask: str
    start_frame: int
    end_frame: int
    arm: str
    exception: bool = False


@dataclass(frozen=True)
class ArmLabel:
    """Per-arm portion of a frame label."""

    motion: str
    gripper_state: str
    speed: float


@dataclass(frozen=True)
class FrameLabel:
    left: ArmLabel
    right: ArmLabel


@dataclass(frozen=True)
class PyramidAnnotation:
    """Three-level annotation container.

    ``frame_level``, when present, must hold one label per frame.
    ``keyframes`` is an optional list of (frame index, cause) pairs written
    by the annotation tooling.
    """

    trajectory_level: str | None = None
    segment_level: tuple[Segment, ...] = ()
    frame_level: tuple[FrameLabel, ...] | None = None
    keyframes: tuple[tuple[int, str], ...] | None = None


@dataclass(frozen=True)
class Episode:
    id: str
    embodiment: str
    task_id: str
    environment: str
    frames: tuple[Frame, ...]
    annotation: PyramidAnnotation = field(default_factory=PyramidAnnotation)
    frequency_hint: float | None = None

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ValidationFinding:
    """One validation defect; findings are data, never exceptions."""

    code: str
    message: str
    frame: int | None = None
    segment: int | None = None
    arm: str | None = None


# ---------------------------------------------------------------------------
# orientation helpers


def orthonormalize(o: Orientation6D) -> tuple[np.ndarray, np.ndarray]:
    """Gram-Schmidt the two 6D columns into an orthonormal pair.

    Raises DegenerateOrientationError when either vector collapses
    (zero first column, or second column parallel to the first).
    """
    v1 = np.asarray(o[0], dtype=float)
    v2 = np.asarray(o[1], dtype=float)
    n1 = np.linalg.norm(v1)
    if n1 < _DEGENERACY_EPS:
        raise DegenerateOrientationError("first orientation column has zero norm")
    c1 = v1 / n1
    v2p = v2 - np.dot(c1, v2) * c1
    n2 = np.linalg.norm(v2p)
    if n2 < _DEGENERACY_EPS:
        raise DegenerateOrientationError("orientation columns are parallel")
    return c1, v2p / n2


def orientation_matrix(o: Orientation6D) -> np.ndarray:
    """Recover the full 3x3 rotation matrix from a 6D orientation.

    Columns are the orthonormalized input pair and their cross product, so
    the result is orthogonal with determinant +1 regardless of input scale.
    All angular metrics downstream are handedness-invariant, so results do
    not depend on the dataset's axis convention.
    """
    c1, c2 = orthonormalize(o)
    return np.column_stack([c1, c2, np.cross(c1, c2)])


def _orientation_degenerate(o: Orientation6D) -> bool:
    try:
        orthonormalize(o)
    except DegenerateOrientationError:
        return True
    return False


# ---------------------------------------------------------------------------
# loading / serialization

Number = (int, float)


def _require(obj: dict, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise EpisodeSchemaError("TYPE_MISMATCH", path, f"expected object at {path}")
    if key not in obj:
        raise EpisodeSchemaError("MISSING_FIELD", f"{path}.{key}" if path else key)
    return obj[key]


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, Number):
        raise EpisodeSchemaError("TYPE_MISMATCH", path, f"expected number at {path}")
    return float(value)


def _as_vec3(value: Any, path: str) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise EpisodeSchemaError("TYPE_MISMATCH", path, f"expected 3-element array at {path}")
    return tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value))  # type: ignore[return-value]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise EpisodeSchemaError("TYPE_MISMATCH", path, f"expected string at {path}")
    return value


def _effector_from_dict(obj: Any, path: str) -> EffectorState:
    pos = _as_vec3(_require(obj, "pos", path), f"{path}.pos")
    rot = _require(obj, "rot6d", path)
    if not isinstance(rot, list) or len(rot) != 2:
        raise EpisodeSchemaError("TYPE_MISMATCH", f"{path}.rot6d", f"expected two 3-vectors at {path}.rot6d")
    orientation = (_as_vec3(rot[0], f"{path}.rot6d[0]"), _as_vec3(rot[1], f"{path}.rot6d[1]"))
    grip = _as_float(_require(obj, "grip", path), f"{path}.grip")
    return EffectorState(position=pos, orientation=orientation, gripper=grip)


def _arm_label_from_dict(obj: Any, path: str) -> ArmLabel:
    return ArmLabel(
        motion=_as_str(_require(obj, "motion", path), f"{path}.motion"),
        gripper_state=_as_str(_require(obj, "gripper_state", path), f"{path}.gripper_state"),
        speed=_as_float(_require(obj, "speed", path), f"{path}.speed"),
    )


def episode_from_dict(data: dict) -> Episode:
    """Build an Episode from parsed episode JSON (structural checks only)."""
    frames = []
    raw_frames = _require(data, "frames", "")
    if not isinstance(raw_frames, list):
        raise EpisodeSchemaError("TYPE_MISMATCH", "frames", "expected array at frames")
    for i, rf in enumerate(raw_frames):
        path = f"frames[{i}]"
        joints = rf.get("joints") if isinstance(rf, dict) else None
        frames.append(
            Frame(
                timestamp=_as_float(_require(rf, "t", path), f"{path}.t"),
                left=_effector_from_dict(_require(rf, "left", path), f"{path}.left"),
                right=_effector_from_dict(_require(rf, "right", path), f"{path}.right"),
                joints=tuple(_as_float(j, f"{path}.joints[{k}]") for k, j in enumerate(joints))
                if joints is not None
                else None,
            )
        )

    raw_ann = data.get("annotation") or {}
    segments = []
    for i, rs in enumerate(raw_ann.get("segments") or []):
        path = f"annotation.segments[{i}]"
        arm = _as_str(_require(rs, "arm", path), f"{path}.arm")
        if arm not in SEGMENT_ARMS:
            raise EpisodeSchemaError("TYPE_MISMATCH", f"{path}.arm", f"arm must be one of {SEGMENT_ARMS}")
        segments.append(
            Segment(
                subtask=_as_str(_require(rs, "subtask", path), f"{path}.subtask"),
                start_frame=int(_as_float(_require(rs, "start", path), f"{path}.start")),
                end_frame=int(_as_float(_require(rs, "end", path), f"{path}.end")),
                arm=arm,
                exception=bool(rs.get("exception", False)),
            )
        )

    frame_labels = None
    if raw_ann.get("frame_labels") is not None:
        frame_labels = tuple(
            FrameLabel(
                left=_arm_label_from_dict(_require(rl, "left", f"annotation.frame_labels[{i}]"), f"annotation.frame_labels[{i}].left"),
                right=_arm_label_from_dict(_require(rl, "right", f"annotation.frame_labels[{i}]"), f"annotation.frame_labels[{i}].right"),
            )
            for i, rl in enumerate(raw_ann["frame_labels"])
        )

    keyframes = None
    if raw_ann.get("keyframes") is not None:
        keyframes = tuple(
            (int(_as_float(_require(rk, "frame", f"annotation.keyframes[{i}]"), f"annotation.keyframes[{i}].frame")),
             _as_str(_require(rk, "cause", f"annotation.keyframes[{i}]"), f"annotation.keyframes[{i}].cause"))
            for i, rk in enumerate(raw_ann["keyframes"])
        )

    annotation = PyramidAnnotation(
        trajectory_level=raw_ann.get("trajectory_level"),
        segment_level=tuple(segments),
        frame_level=frame_labels,
        keyframes=keyframes,
    )

    freq = data.get("frequency_hint")
    return Episode(
        id=_as_str(_require(data, "id", ""), "id"),
        embodiment=_as_str(_require(data, "embodiment", ""), "embodiment"),
        task_id=_as_str(_require(data, "task_id", ""), "task_id"),
        environment=_as_str(_require(data, "environment", ""), "environment"),
        frames=tuple(frames),
        annotation=annotation,
        frequency_hint=_as_float(freq, "frequency_hint") if freq is not None else None,
    )


def load_episode(source: bytes | str | IO) -> Episode:
    """Parse one episode from JSON bytes, text, or a readable stream.

    Only structural conformance is enforced here; semantic invariants
    (index bounds, monotonic time, ...) are deferred to validate_episode so
    that curation tooling can load broken data in order to report on it.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise EpisodeParseError(f"malformed episode JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise EpisodeSchemaError("TYPE_MISMATCH", "", "episode top level must be an object")
    return episode_from_dict(data)


def _effector_to_dict(e: EffectorState) -> dict:
    return {
        "pos": list(e.position),
        "rot6d": [list(e.orientation[0]), list(e.orientation[1])],
        "grip": e.gripper,
    }


def episode_to_dict(ep: Episode) -> dict:
    ann: dict[str, Any] = {
        "trajectory_level": ep.annotation.trajectory_level,
        "segments": [
            {
                "subtask": s.subtask,
                "start": s.start_frame,
                "end": s.end_frame,
                "arm": s.arm,
                "exception": s.exception,
            }
            for s in ep.annotation.segment_level
        ],
    }
    if ep.annotation.frame_level is not None:
        ann["frame_labels"] = [
            {
                "left": {"motion": fl.left.motion, "gripper_state": fl.left.gripper_state, "speed": fl.left.speed},
                "right": {"motion": fl.right.motion, "gripper_state": fl.right.gripper_state, "speed": fl.right.speed},
            }
            for fl in ep.annotation.frame_level
        ]
    if ep.annotation.keyframes is not None:
        ann["keyframes"] = [{"frame": k, "cause": c} for k, c in ep.annotation.keyframes]

    out: dict[str, Any] = {
        "id": ep.id,
        "embodiment": ep.embodiment,
        "task_id": ep.task_id,
        "environment": ep.environment,
    }
    if ep.frequency_hint is not None:
        out["frequency_hint"] = ep.frequency_hint
    out["frames"] = [
        {
            "t": f.timestamp,
            "left": _effector_to_dict(f.left),
            "right": _effector_to_dict(f.right),
            **({"joints": list(f.joints)} if f.joints is not None else {}),
        }
        for f in ep.frames
    ]
    out["annotation"] = ann
    return out


def serialize_episode(ep: Episode) -> str:
    """Render the episode to canonical JSON text (full float precision)."""
    return json.dumps(episode_to_dict(ep), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# validation


def validate_episode(
    ep: Episode,
    motion_vocabulary: Iterable[str] = MOTION_LABELS,
    gripper_vocabulary: Iterable[str] = GRIPPER_LABELS,
) -> list[ValidationFinding]:
    """Check every episode invariant; returns an empty list iff all hold.

    Codes: EMPTY_EPISODE, GRIPPER_RANGE, DEGENERATE_ORIENTATION,
    NON_MONOTONIC_TIME, SEGMENT_INDEX, SEGMENT_OVERLAP, FRAME_LABEL_COUNT,
    LABEL_VOCABULARY.
    """
    findings: list[ValidationFinding] = []
    n = len(ep.frames)
    if n == 0:
        return [ValidationFinding("EMPTY_EPISODE", "episode has no frames")]

    motion_vocab = set(motion_vocabulary)
    gripper_vocab = set(gripper_vocabulary)

    prev_t = None
    for i, frame in enumerate(ep.frames):
        if prev_t is not None and frame.timestamp <= prev_t:
            findings.append(
                ValidationFinding(
                    "NON_MONOTONIC_TIME",
                    f"timestamp {frame.timestamp} at frame {i} does not increase past {prev_t}",
                    frame=i,
                )
            )
        prev_t = frame.timestamp
        for arm in ARMS:
            state: EffectorState = getattr(frame, arm)
            if not (0.0 <= state.gripper <= 1.0) or math.isnan(state.gripper):
                findings.append(
                    ValidationFinding(
                        "GRIPPER_RANGE",
                        f"gripper value {state.gripper} outside [0, 1]",
                        frame=i,
                        arm=arm,
                    )
                )
            if _orientation_degenerate(state.orientation):
                findings.append(
                    ValidationFinding(
                        "DEGENERATE_ORIENTATION",
                        "6D orientation columns do not span a plane",
                        frame=i,
                        arm=arm,
                    )
                )

    for si, seg in enumerate(ep.annotation.segment_level):
        if not (0 <= seg.start_frame <= seg.end_frame < n):
            findings.append(
                ValidationFinding(
                    "SEGMENT_INDEX",
                    f"segment [{seg.start_frame}, {seg.end_frame}] out of range for {n} frames",
                    segment=si,
                )
            )

    # Same-arm segments must not overlap; "both" occupies both arms.
    for arm in ARMS:
        occupying = [
            (seg.start_frame, seg.end_frame, si)
            for si, seg in enumerate(ep.annotation.segment_level)
            if seg.arm in (arm, "both") and 0 <= seg.start_frame <= seg.end_frame < n
        ]
        occupying.sort()
        for (s1, e1, _), (s2, e2, si2) in zip(occupying, occupying[1:]):
            if s2 <= e1:
                findings.append(
                    ValidationFinding(
                        "SEGMENT_OVERLAP",
                        f"segments of arm {arm} overlap at frames [{s2}, {min(e1, e2)}]",
                        segment=si2,
                        arm=arm,
                    )
                )

    labels = ep.annotation.frame_level
    if labels is not None:
        if len(labels) != n:
            findings.append(
                ValidationFinding(
                    "FRAME_LABEL_COUNT",
                    f"{len(labels)} frame labels for {n} frames",
                )
            )
        for i, fl in enumerate(labels):
            for arm in ARMS:
                al: ArmLabel = getattr(fl, arm)
                if al.motion not in motion_vocab or al.gripper_state not in gripper_vocab:
                    findings.append(
                        ValidationFinding(
                            "LABEL_VOCABULARY",
                            f"label ({al.motion!r}, {al.gripper_state!r}) outside configured vocabulary",
                            frame=i,
                            arm=arm,
                        )
                    )

    return findings


def with_annotation(ep: Episode, annotation: PyramidAnnotation) -> Episode:
    """Functional update preserving immutability."""
    return replace(ep, annotation=annotation)

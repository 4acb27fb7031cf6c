"""RTML document model, strict parser, validator, and serializer.

RTML is a YAML-form constraint language over robot trajectories: a document
declares global constraints (velocity, acceleration, workspace, temporal)
for the whole trajectory and an ordered list of stage constraints that bind
to annotated subtask segments. The accepted grammar is closed: any key
outside it is rejected with a path-qualified error. Anchors, aliases and
multi-document streams are rejected; comments are ignored, except that a
leading ``# RTML V<version>`` header sets the document version.

Units are fixed by the grammar and never declared in documents:
m, m/s, m/s^2, rad, rad^2, s.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import SpecParseError

Vec3 = tuple[float, float, float]

DEFAULT_VERSION = "1.0"
_VERSION_RE = re.compile(r"^#\s*RTML\s+V(\S+)\s*$")


@dataclass(frozen=True)
class VelocityConstraint:
    linear_max: float | None = None
    linear_mean_max: float | None = None
    linear_std_max: float | None = None


@dataclass(frozen=True)
class AccelerationConstraint:
    linear_max: float | None = None


@dataclass(frozen=True)
class ArmBox:
    min: Vec3
    max: Vec3


@dataclass(frozen=True)
class WorkspaceConstraint:
    left: ArmBox | None = None
    right: ArmBox | None = None


@dataclass(frozen=True)
class ArmOrientation:
    angular_mean_deviation_max: float | None = None
    std_max: Vec3 | None = None
    angular_variance_max: float | None = None


@dataclass(frozen=True)
class OrientationConstraint:
    left: ArmOrientation | None = None
    right: ArmOrientation | None = None


@dataclass(frozen=True)
class IdleArmConstraint:
    arm: str
    velocity_linear_mean_max: float


@dataclass(frozen=True)
class TemporalConstraint:
    duration_min: float | None = None
    duration_max: float | None = None


@dataclass(frozen=True)
class ConstraintSet:
    workspace: WorkspaceConstraint | None = None
    velocity: VelocityConstraint | None = None
    acceleration: AccelerationConstraint | None = None
    orientation: OrientationConstraint | None = None
    idle_arm: IdleArmConstraint | None = None
    temporal: TemporalConstraint | None = None


@dataclass(frozen=True)
class GlobalConstraints:
    velocity: VelocityConstraint | None = None
    acceleration: AccelerationConstraint | None = None
    workspace: WorkspaceConstraint | None = None
    temporal: TemporalConstraint | None = None


@dataclass(frozen=True)
class StageConstraint:
    id: str
    match_subtask: str
    constraints: ConstraintSet = field(default_factory=ConstraintSet)


@dataclass(frozen=True)
class RtmlDocument:
    task_id: str
    version: str = DEFAULT_VERSION
    global_constraints: GlobalConstraints = field(default_factory=GlobalConstraints)
    stages: tuple[StageConstraint, ...] = ()


@dataclass(frozen=True)
class SpecFinding:
    """One well-formedness defect in a parsed document."""

    code: str
    path: str
    message: str


# ---------------------------------------------------------------------------
# parsing


def _reject_anchors_and_multidoc(text: str) -> None:
    doc_count = 0
    try:
        for event in yaml.parse(text, Loader=yaml.SafeLoader):
            if isinstance(event, yaml.DocumentStartEvent):
                doc_count += 1
                if doc_count > 1:
                    raise SpecParseError("MULTI_DOCUMENT", "multi-document streams are not allowed")
            if isinstance(event, yaml.AliasEvent):
                raise SpecParseError("ANCHOR_ALIAS", "aliases are not allowed")
            if getattr(event, "anchor", None) is not None and not isinstance(event, yaml.AliasEvent):
                raise SpecParseError("ANCHOR_ALIAS", "anchors are not allowed")
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecParseError(
            "SYNTAX_ERROR",
            f"YAML syntax error: {getattr(exc, 'problem', exc)}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        ) from exc


def _expect_mapping(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SpecParseError("TYPE_MISMATCH", f"expected mapping at {path}", path=path)
    return value


def _check_keys(mapping: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in mapping:
        if key not in allowed:
            full = f"{path}.{key}" if path else str(key)
            raise SpecParseError("UNKNOWN_FIELD", f"unknown field {full}", path=full)


def _scalar(mapping: dict, key: str, path: str) -> float | None:
    if key not in mapping or mapping[key] is None:
        return None
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecParseError("TYPE_MISMATCH", f"expected number at {path}.{key}", path=f"{path}.{key}")
    return float(value)


def _string(mapping: dict, key: str, path: str, required: bool = False) -> str | None:
    if key not in mapping or mapping[key] is None:
        if required:
            raise SpecParseError("MISSING_FIELD", f"missing required field {path}.{key}", path=f"{path}.{key}")
        return None
    value = mapping[key]
    if not isinstance(value, str):
        raise SpecParseError("TYPE_MISMATCH", f"expected string at {path}.{key}", path=f"{path}.{key}")
    return value


def _vec3(mapping: dict, key: str, path: str) -> Vec3 | None:
    if key not in mapping or mapping[key] is None:
        return None
    value = mapping[key]
    if not isinstance(value, list) or len(value) != 3 or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
    ):
        raise SpecParseError("TYPE_MISMATCH", f"expected 3-element number list at {path}.{key}", path=f"{path}.{key}")
    return (float(value[0]), float(value[1]), float(value[2]))


def _parse_velocity(raw: Any, path: str) -> VelocityConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("linear",), path)
    lin = _expect_mapping(m.get("linear"), f"{path}.linear")
    _check_keys(lin, ("max", "mean_max", "std_max"), f"{path}.linear")
    return VelocityConstraint(
        linear_max=_scalar(lin, "max", f"{path}.linear"),
        linear_mean_max=_scalar(lin, "mean_max", f"{path}.linear"),
        linear_std_max=_scalar(lin, "std_max", f"{path}.linear"),
    )


def _parse_acceleration(raw: Any, path: str) -> AccelerationConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("linear",), path)
    lin = _expect_mapping(m.get("linear"), f"{path}.linear")
    _check_keys(lin, ("max",), f"{path}.linear")
    return AccelerationConstraint(linear_max=_scalar(lin, "max", f"{path}.linear"))


def _parse_arm_box(raw: Any, path: str) -> ArmBox:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("min", "max"), path)
    lo = _vec3(m, "min", path)
    hi = _vec3(m, "max", path)
    if lo is None or hi is None:
        raise SpecParseError("MISSING_FIELD", f"workspace box at {path} needs both min and max", path=path)
    return ArmBox(min=lo, max=hi)


def _parse_workspace(raw: Any, path: str) -> WorkspaceConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("left", "right"), path)
    return WorkspaceConstraint(
        left=_parse_arm_box(m["left"], f"{path}.left") if m.get("left") is not None else None,
        right=_parse_arm_box(m["right"], f"{path}.right") if m.get("right") is not None else None,
    )


def _parse_arm_orientation(raw: Any, path: str) -> ArmOrientation:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("angular_mean_deviation_max", "std_max", "angular_variance_max"), path)
    return ArmOrientation(
        angular_mean_deviation_max=_scalar(m, "angular_mean_deviation_max", path),
        std_max=_vec3(m, "std_max", path),
        angular_variance_max=_scalar(m, "angular_variance_max", path),
    )


def _parse_orientation(raw: Any, path: str) -> OrientationConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("left", "right"), path)
    return OrientationConstraint(
        left=_parse_arm_orientation(m["left"], f"{path}.left") if m.get("left") is not None else None,
        right=_parse_arm_orientation(m["right"], f"{path}.right") if m.get("right") is not None else None,
    )


def _parse_idle_arm(raw: Any, path: str) -> IdleArmConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("arm", "velocity_linear_mean_max"), path)
    arm = _string(m, "arm", path, required=True)
    if arm not in ("left", "right"):
        raise SpecParseError("TYPE_MISMATCH", f"idle arm must be left or right at {path}.arm", path=f"{path}.arm")
    limit = _scalar(m, "velocity_linear_mean_max", path)
    if limit is None:
        raise SpecParseError(
            "MISSING_FIELD", f"missing required field {path}.velocity_linear_mean_max",
            path=f"{path}.velocity_linear_mean_max",
        )
    return IdleArmConstraint(arm=arm, velocity_linear_mean_max=limit)


def _parse_temporal(raw: Any, path: str) -> TemporalConstraint:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("duration_min", "duration_max"), path)
    return TemporalConstraint(
        duration_min=_scalar(m, "duration_min", path),
        duration_max=_scalar(m, "duration_max", path),
    )


def _parse_constraint_set(raw: Any, path: str) -> ConstraintSet:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("workspace", "velocity", "acceleration", "orientation", "idle_arm", "temporal"), path)
    return ConstraintSet(
        workspace=_parse_workspace(m["workspace"], f"{path}.workspace") if m.get("workspace") is not None else None,
        velocity=_parse_velocity(m["velocity"], f"{path}.velocity") if m.get("velocity") is not None else None,
        acceleration=_parse_acceleration(m["acceleration"], f"{path}.acceleration")
        if m.get("acceleration") is not None
        else None,
        orientation=_parse_orientation(m["orientation"], f"{path}.orientation")
        if m.get("orientation") is not None
        else None,
        idle_arm=_parse_idle_arm(m["idle_arm"], f"{path}.idle_arm") if m.get("idle_arm") is not None else None,
        temporal=_parse_temporal(m["temporal"], f"{path}.temporal") if m.get("temporal") is not None else None,
    )


def _parse_global(raw: Any, path: str) -> GlobalConstraints:
    m = _expect_mapping(raw, path)
    _check_keys(m, ("velocity", "acceleration", "workspace", "temporal"), path)
    return GlobalConstraints(
        velocity=_parse_velocity(m["velocity"], f"{path}.velocity") if m.get("velocity") is not None else None,
        acceleration=_parse_acceleration(m["acceleration"], f"{path}.acceleration")
        if m.get("acceleration") is not None
        else None,
        workspace=_parse_workspace(m["workspace"], f"{path}.workspace") if m.get("workspace") is not None else None,
        temporal=_parse_temporal(m["temporal"], f"{path}.temporal") if m.get("temporal") is not None else None,
    )


def _parse_stage(raw: Any, index: int) -> StageConstraint:
    path = f"stages[{index}]"
    m = _expect_mapping(raw, path)
    _check_keys(m, ("id", "match_subtask", "constraints"), path)
    stage_id = _string(m, "id", path, required=True)
    match_subtask = _string(m, "match_subtask", path, required=True)
    constraints = _parse_constraint_set(m.get("constraints"), f"{path}.constraints")
    return StageConstraint(id=stage_id, match_subtask=match_subtask, constraints=constraints)


def _extract_version(text: str) -> str:
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        m = _VERSION_RE.match(stripped)
        if m:
            return m.group(1)
        if not stripped.startswith("#"):
            break
    return DEFAULT_VERSION


def parse_rtml(text: str | bytes) -> RtmlDocument:
    """Parse RTML text into a document, preserving stage order.

    Never crashes on arbitrary input: raises SpecParseError with a located
    code (SYNTAX_ERROR / UNKNOWN_FIELD / TYPE_MISMATCH / MISSING_FIELD /
    ANCHOR_ALIAS / MULTI_DOCUMENT) for anything outside the grammar.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SpecParseError("SYNTAX_ERROR", f"input is not valid UTF-8: {exc}") from exc
    _reject_anchors_and_multidoc(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecParseError(
            "SYNTAX_ERROR",
            f"YAML syntax error: {getattr(exc, 'problem', exc)}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        ) from exc

    if data is None:
        raise SpecParseError("MISSING_FIELD", "document is empty; expected a task mapping", path="task")
    root = _expect_mapping(data, "")
    _check_keys(root, ("task",), "")
    task = _expect_mapping(root.get("task"), "task")
    _check_keys(task, ("id", "global_constraints", "stages"), "task")
    task_id = _string(task, "id", "task", required=True)

    global_constraints = (
        _parse_global(task["global_constraints"], "global_constraints")
        if task.get("global_constraints") is not None
        else GlobalConstraints()
    )

    raw_stages = task.get("stages")
    stages: list[StageConstraint] = []
    if raw_stages is not None:
        if not isinstance(raw_stages, list):
            raise SpecParseError("TYPE_MISMATCH", "expected sequence at stages", path="stages")
        stages = [_parse_stage(rs, i) for i, rs in enumerate(raw_stages)]

    return RtmlDocument(
        task_id=task_id,
        version=_extract_version(text),
        global_constraints=global_constraints,
        stages=tuple(stages),
    )


# ---------------------------------------------------------------------------
# validation


def _finding(findings: list[SpecFinding], code: str, path: str, message: str) -> None:
    findings.append(SpecFinding(code=code, path=path, message=message))


def _validate_velocity(v: VelocityConstraint, path: str, findings: list[SpecFinding]) -> None:
    for name, value in (("max", v.linear_max), ("mean_max", v.linear_mean_max), ("std_max", v.linear_std_max)):
        if value is not None and value <= 0:
            _finding(findings, "VALUE_NOT_POSITIVE", f"{path}.linear.{name}", f"{name} must be > 0")
    if v.linear_max is not None and v.linear_mean_max is not None and v.linear_mean_max > v.linear_max:
        _finding(findings, "MEAN_ABOVE_MAX", f"{path}.linear.mean_max", "mean_max exceeds max")


def _validate_workspace(w: WorkspaceConstraint, path: str, findings: list[SpecFinding]) -> None:
    for arm in ("left", "right"):
        box: ArmBox | None = getattr(w, arm)
        if box is None:
            continue
        if any(box.min[i] > box.max[i] for i in range(3)):
            _finding(findings, "BOX_INVERTED", f"{path}.{arm}", "workspace min exceeds max on some axis")


def _validate_orientation(o: OrientationConstraint, path: str, findings: list[SpecFinding]) -> None:
    for arm in ("left", "right"):
        ao: ArmOrientation | None = getattr(o, arm)
        if ao is None:
            continue
        if ao.angular_mean_deviation_max is not None and ao.angular_mean_deviation_max < 0:
            _finding(findings, "VALUE_NEGATIVE", f"{path}.{arm}.angular_mean_deviation_max", "must be >= 0")
        if ao.angular_variance_max is not None and ao.angular_variance_max < 0:
            _finding(findings, "VALUE_NEGATIVE", f"{path}.{arm}.angular_variance_max", "must be >= 0")
        if ao.std_max is not None and any(c < 0 for c in ao.std_max):
            _finding(findings, "VALUE_NEGATIVE", f"{path}.{arm}.std_max", "components must be >= 0")


def _validate_temporal(t: TemporalConstraint, path: str, findings: list[SpecFinding]) -> None:
    if t.duration_min is not None and t.duration_max is not None and t.duration_min > t.duration_max:
        _finding(findings, "DURATION_INVERTED", path, "duration_min exceeds duration_max")


def _validate_constraint_set(c: ConstraintSet, path: str, findings: list[SpecFinding]) -> None:
    if c.velocity is not None:
        _validate_velocity(c.velocity, f"{path}.velocity", findings)
    if c.acceleration is not None and c.acceleration.linear_max is not None and c.acceleration.linear_max <= 0:
        _finding(findings, "VALUE_NOT_POSITIVE", f"{path}.acceleration.linear.max", "max must be > 0")
    if c.workspace is not None:
        _validate_workspace(c.workspace, f"{path}.workspace", findings)
    if c.orientation is not None:
        _validate_orientation(c.orientation, f"{path}.orientation", findings)
    if c.idle_arm is not None and c.idle_arm.velocity_linear_mean_max <= 0:
        _finding(findings, "VALUE_NOT_POSITIVE", f"{path}.idle_arm.velocity_linear_mean_max", "must be > 0")
    if c.temporal is not None:
        _validate_temporal(c.temporal, f"{path}.temporal", findings)


def validate_spec(doc: RtmlDocument) -> list[SpecFinding]:
    """Check type invariants beyond syntax; empty list iff the document is
    well-formed."""
    findings: list[SpecFinding] = []
    g = doc.global_constraints
    if g.velocity is not None:
        _validate_velocity(g.velocity, "global_constraints.velocity", findings)
    if g.acceleration is not None and g.acceleration.linear_max is not None and g.acceleration.linear_max <= 0:
        _finding(findings, "VALUE_NOT_POSITIVE", "global_constraints.acceleration.linear.max", "max must be > 0")
    if g.workspace is not None:
        _validate_workspace(g.workspace, "global_constraints.workspace", findings)
    if g.temporal is not None:
        _validate_temporal(g.temporal, "global_constraints.temporal", findings)

    seen: set[str] = set()
    for i, stage in enumerate(doc.stages):
        path = f"stages[{i}]"
        if not stage.id:
            _finding(findings, "EMPTY_ID", f"{path}.id", "stage id must be non-empty")
        if not stage.match_subtask:
            _finding(findings, "EMPTY_MATCH_SUBTASK", f"{path}.match_subtask", "match_subtask must be non-empty")
        if stage.id in seen:
            _finding(findings, "DUPLICATE_STAGE_ID", f"{path}.id", f"duplicate stage id {stage.id!r}")
        seen.add(stage.id)
        _validate_constraint_set(stage.constraints, path, findings)
    return findings


# ---------------------------------------------------------------------------
# serialization


def _velocity_dict(v: VelocityConstraint) -> dict:
    lin: dict[str, float] = {}
    if v.linear_max is not None:
        lin["max"] = v.linear_max
    if v.linear_mean_max is not None:
        lin["mean_max"] = v.linear_mean_max
    if v.linear_std_max is not None:
        lin["std_max"] = v.linear_std_max
    return {"linear": lin}


def _workspace_dict(w: WorkspaceConstraint) -> dict:
    out: dict[str, Any] = {}
    for arm in ("left", "right"):
        box: ArmBox | None = getattr(w, arm)
        if box is not None:
            out[arm] = {"min": list(box.min), "max": list(box.max)}
    return out


def _orientation_dict(o: OrientationConstraint) -> dict:
    out: dict[str, Any] = {}
    for arm in ("left", "right"):
        ao: ArmOrientation | None = getattr(o, arm)
        if ao is None:
            continue
        entry: dict[str, Any] = {}
        if ao.angular_mean_deviation_max is not None:
            entry["angular_mean_deviation_max"] = ao.angular_mean_deviation_max
        if ao.std_max is not None:
            entry["std_max"] = list(ao.std_max)
        if ao.angular_variance_max is not None:
            entry["angular_variance_max"] = ao.angular_variance_max
        out[arm] = entry
    return out


def _temporal_dict(t: TemporalConstraint) -> dict:
    out: dict[str, float] = {}
    if t.duration_min is not None:
        out["duration_min"] = t.duration_min
    if t.duration_max is not None:
        out["duration_max"] = t.duration_max
    return out


def _constraint_set_dict(c: ConstraintSet) -> dict:
    out: dict[str, Any] = {}
    if c.workspace is not None:
        out["workspace"] = _workspace_dict(c.workspace)
    if c.orientation is not None:
        out["orientation"] = _orientation_dict(c.orientation)
    if c.velocity is not None:
        out["velocity"] = _velocity_dict(c.velocity)
    if c.acceleration is not None:
        out["acceleration"] = {"linear": {"max": c.acceleration.linear_max}}
    if c.idle_arm is not None:
        out["idle_arm"] = {"arm": c.idle_arm.arm, "velocity_linear_mean_max": c.idle_arm.velocity_linear_mean_max}
    if c.temporal is not None:
        out["temporal"] = _temporal_dict(c.temporal)
    return out


def serialize_rtml(doc: RtmlDocument) -> str:
    """Render a document to RTML text; parse_rtml round-trips it exactly."""
    task: dict[str, Any] = {"id": doc.task_id}
    g = doc.global_constraints
    gc: dict[str, Any] = {}
    if g.velocity is not None:
        gc["velocity"] = _velocity_dict(g.velocity)
    if g.acceleration is not None:
        gc["acceleration"] = {"linear": {"max": g.acceleration.linear_max}}
    if g.workspace is not None:
        gc["workspace"] = _workspace_dict(g.workspace)
    if g.temporal is not None:
        gc["temporal"] = _temporal_dict(g.temporal)
    if gc:
        task["global_constraints"] = gc
    if doc.stages:
        task["stages"] = [
            {"id": s.id, "match_subtask": s.match_subtask, "constraints": _constraint_set_dict(s.constraints)}
            for s in doc.stages
        ]
    body = yaml.safe_dump({"task": task}, sort_keys=False, default_flow_style=None, allow_unicode=True)
    return f"# RTML V{doc.version}\n{body}"

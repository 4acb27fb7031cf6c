"""Constraint evaluation: binds RTML stages to annotated segments, checks
every declared global and stage constraint against derived kinematics, and
reduces the outcomes to pass levels and a quality score.

Semantics fixed here:

- All limits are inclusive (observed <= max passes, observed >= min passes),
  so exact-boundary synthetic data behaves predictably.
- A declared constraint always yields a check; a missing optional field
  yields none, so score denominators reflect only declared constraints.
- Stage velocity/acceleration checks apply to the bound segment's active
  arm(s); a "both" segment is evaluated per arm independently. Arm-keyed
  families (workspace, orientation) follow their document keys.
- Checks that cannot be computed (too few frames, unmatched stage) are
  emitted as failed checks of the "structure" family, never as exceptions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from . import kinematics
from .errors import EpisodeInvalidError, NoChecksError
from .rtml import ConstraintSet, RtmlDocument, StageConstraint
from .trajectory import ARMS, Episode, validate_episode

Scalar3 = tuple[float, float, float]

FAMILY_WORKSPACE = "workspace"
FAMILY_VELOCITY = "velocity"
FAMILY_ACCELERATION = "acceleration"
FAMILY_ORIENTATION = "orientation"
FAMILY_IDLE_ARM = "idle_arm"
FAMILY_TEMPORAL = "temporal"
FAMILY_STRUCTURE = "structure"

GLOBAL_SCOPE = "global"


@dataclass(frozen=True)
class CheckResult:
    path: str
    scope: str  # "global" or "stage:<id>"
    family: str
    observed: float | Scalar3 | None
    limit: float | Scalar3 | None
    passed: bool
    frames: tuple[int, int]


@dataclass(frozen=True)
class StageBinding:
    stage_id: str
    segment_index: int | None
    frames: tuple[int, int] | None
    matched: bool


@dataclass(frozen=True)
class EvaluationReport:
    episode_id: str
    checks: tuple[CheckResult, ...]
    coarse_pass: bool
    fine_pass: bool
    score: float
    first_failed_phase: str | None


_TRAILING_PUNCT = re.compile(r"[\s.,;:!?]+$")


def normalize_subtask(text: str) -> str:
    """Case-fold, collapse whitespace, strip trailing punctuation."""
    collapsed = " ".join(text.split())
    return _TRAILING_PUNCT.sub("", collapsed).casefold()


def match_stages(doc: RtmlDocument, ep: Episode) -> list[StageBinding]:
    """Bind each stage to the earliest unconsumed segment with the same
    normalized subtask text, respecting stage order: a later stage never
    binds a segment that starts before an earlier stage's bound segment.
    Unmatched stages yield matched=False bindings rather than errors.
    """
    segments = list(enumerate(ep.annotation.segment_level))
    consumed: set[int] = set()
    last_start = -1
    bindings: list[StageBinding] = []
    for stage in doc.stages:
        wanted = normalize_subtask(stage.match_subtask)
        candidates = [
            (seg.start_frame, idx)
            for idx, seg in segments
            if idx not in consumed
            and seg.start_frame >= last_start
            and normalize_subtask(seg.subtask) == wanted
        ]
        if candidates:
            start, idx = min(candidates)
            seg = ep.annotation.segment_level[idx]
            consumed.add(idx)
            last_start = start
            bindings.append(
                StageBinding(stage_id=stage.id, segment_index=idx, frames=(seg.start_frame, seg.end_frame), matched=True)
            )
        else:
            bindings.append(StageBinding(stage_id=stage.id, segment_index=None, frames=None, matched=False))
    return bindings


# ---------------------------------------------------------------------------
# check construction helpers


def _vec(values) -> Scalar3:
    return (float(values[0]), float(values[1]), float(values[2]))


def _leq(observed, limit) -> bool:
    if isinstance(observed, tuple):
        return all(o <= l for o, l in zip(observed, limit))
    return observed <= limit


def _geq(observed, limit) -> bool:
    if isinstance(observed, tuple):
        return all(o >= l for o, l in zip(observed, limit))
    return observed >= limit


def _max_check(path, scope, family, observed, limit, frames) -> CheckResult:
    return CheckResult(path, scope, family, observed, limit, _leq(observed, limit), frames)


def _min_check(path, scope, family, observed, limit, frames) -> CheckResult:
    return CheckResult(path, scope, family, observed, limit, _geq(observed, limit), frames)


def _structure_fail(path, scope, frames, observed=0.0, limit=1.0) -> CheckResult:
    return CheckResult(path, scope, FAMILY_STRUCTURE, observed, limit, False, frames)


def _active_arms(ep: Episode, binding: StageBinding) -> tuple[str, ...]:
    if binding.segment_index is None:
        return ARMS
    arm = ep.annotation.segment_level[binding.segment_index].arm
    return ARMS if arm == "both" else (arm,)


# ---------------------------------------------------------------------------
# global and stage evaluation


def evaluate_global(doc: RtmlDocument, ep: Episode) -> list[CheckResult]:
    """Evaluate every declared global constraint over the whole episode."""
    n = len(ep.frames)
    whole = (0, n - 1)
    g = doc.global_constraints
    checks: list[CheckResult] = []

    if g.velocity is not None:
        v = g.velocity
        if n < 2:
            for name, value in (("max", v.linear_max), ("mean_max", v.linear_mean_max), ("std_max", v.linear_std_max)):
                if value is not None:
                    checks.append(_structure_fail(f"global_constraints.velocity.linear.{name}", GLOBAL_SCOPE, whole))
        else:
            speeds = {arm: kinematics.linear_velocity(ep, arm)[0] for arm in ARMS}
            if v.linear_max is not None:
                observed = max(float(speeds[arm].max()) for arm in ARMS)
                checks.append(
                    _max_check("global_constraints.velocity.linear.max", GLOBAL_SCOPE, FAMILY_VELOCITY, observed, v.linear_max, whole)
                )
            if v.linear_mean_max is not None:
                for arm in ARMS:
                    checks.append(
                        _max_check(
                            f"global_constraints.velocity.linear.mean_max.{arm}",
                            GLOBAL_SCOPE, FAMILY_VELOCITY, float(speeds[arm].mean()), v.linear_mean_max, whole,
                        )
                    )
            if v.linear_std_max is not None:
                for arm in ARMS:
                    checks.append(
                        _max_check(
                            f"global_constraints.velocity.linear.std_max.{arm}",
                            GLOBAL_SCOPE, FAMILY_VELOCITY, float(speeds[arm].std()), v.linear_std_max, whole,
                        )
                    )

    if g.acceleration is not None and g.acceleration.linear_max is not None:
        if n < 3:
            checks.append(_structure_fail("global_constraints.acceleration.linear.max", GLOBAL_SCOPE, whole))
        else:
            observed = max(float(kinematics.linear_acceleration(ep, arm).max()) for arm in ARMS)
            checks.append(
                _max_check(
                    "global_constraints.acceleration.linear.max",
                    GLOBAL_SCOPE, FAMILY_ACCELERATION, observed, g.acceleration.linear_max, whole,
                )
            )

    if g.workspace is not None:
        for arm in ARMS:
            box = getattr(g.workspace, arm)
            if box is None:
                continue
            pos = kinematics.arm_positions(ep, arm)
            checks.append(
                _min_check(f"global_constraints.workspace.{arm}.min", GLOBAL_SCOPE, FAMILY_WORKSPACE,
                           _vec(pos.min(axis=0)), box.min, whole)
            )
            checks.append(
                _max_check(f"global_constraints.workspace.{arm}.max", GLOBAL_SCOPE, FAMILY_WORKSPACE,
                           _vec(pos.max(axis=0)), box.max, whole)
            )

    if g.temporal is not None:
        dur = kinematics.duration(ep)
        if g.temporal.duration_min is not None:
            checks.append(
                _min_check("global_constraints.temporal.duration_min", GLOBAL_SCOPE, FAMILY_TEMPORAL,
                           dur, g.temporal.duration_min, whole)
            )
        if g.temporal.duration_max is not None:
            checks.append(
                _max_check("global_constraints.temporal.duration_max", GLOBAL_SCOPE, FAMILY_TEMPORAL,
                           dur, g.temporal.duration_max, whole)
            )

    return checks


def evaluate_stage(
    stage: StageConstraint, ep: Episode, binding: StageBinding, stage_index: int = 0
) -> list[CheckResult]:
    """Evaluate one stage's constraints over its bound frame interval.

    An unmatched binding yields a single failed structure check anchored to
    the whole episode (the interval that was searched).
    """
    n = len(ep.frames)
    scope = f"stage:{stage.id}"
    prefix = f"stages[{stage_index}]"
    if not binding.matched or binding.frames is None:
        return [_structure_fail(f"{prefix}.match_subtask", scope, (0, n - 1))]

    rng = binding.frames
    length = rng[1] - rng[0] + 1
    cons: ConstraintSet = stage.constraints
    arms = _active_arms(ep, binding)
    checks: list[CheckResult] = []

    if cons.workspace is not None:
        for arm in ARMS:
            box = getattr(cons.workspace, arm)
            if box is None:
                continue
            pos = kinematics.arm_positions(ep, arm, rng)
            checks.append(
                _min_check(f"{prefix}.workspace.{arm}.min", scope, FAMILY_WORKSPACE, _vec(pos.min(axis=0)), box.min, rng)
            )
            checks.append(
                _max_check(f"{prefix}.workspace.{arm}.max", scope, FAMILY_WORKSPACE, _vec(pos.max(axis=0)), box.max, rng)
            )

    if cons.velocity is not None:
        v = cons.velocity
        declared = [("max", v.linear_max, "max"), ("mean_max", v.linear_mean_max, "mean"), ("std_max", v.linear_std_max, "std")]
        for name, limit, statfield in declared:
            if limit is None:
                continue
            for arm in arms:
                path = f"{prefix}.velocity.linear.{name}.{arm}"
                if length < 2:
                    checks.append(_structure_fail(path, scope, rng))
                    continue
                stats = kinematics.series_stats(kinematics.linear_velocity(ep, arm, rng)[0])
                checks.append(_max_check(path, scope, FAMILY_VELOCITY, getattr(stats, statfield), limit, rng))

    if cons.acceleration is not None and cons.acceleration.linear_max is not None:
        for arm in arms:
            path = f"{prefix}.acceleration.linear.max.{arm}"
            if length < 3:
                checks.append(_structure_fail(path, scope, rng))
                continue
            observed = float(kinematics.linear_acceleration(ep, arm, rng).max())
            checks.append(_max_check(path, scope, FAMILY_ACCELERATION, observed, cons.acceleration.linear_max, rng))

    if cons.orientation is not None:
        for arm in ARMS:
            ao = getattr(cons.orientation, arm)
            if ao is None:
                continue
            declared = [
                ("angular_mean_deviation_max", ao.angular_mean_deviation_max),
                ("std_max", ao.std_max),
                ("angular_variance_max", ao.angular_variance_max),
            ]
            if all(limit is None for _, limit in declared):
                continue
            if length < 2:
                for name, limit in declared:
                    if limit is not None:
                        checks.append(_structure_fail(f"{prefix}.orientation.{arm}.{name}", scope, rng))
                continue
            stats = kinematics.angular_stats(ep, arm, rng)
            if ao.angular_mean_deviation_max is not None:
                checks.append(
                    _max_check(f"{prefix}.orientation.{arm}.angular_mean_deviation_max", scope, FAMILY_ORIENTATION,
                               stats.mean_deviation, ao.angular_mean_deviation_max, rng)
                )
            if ao.std_max is not None:
                checks.append(
                    _max_check(f"{prefix}.orientation.{arm}.std_max", scope, FAMILY_ORIENTATION,
                               stats.per_axis_std, ao.std_max, rng)
                )
            if ao.angular_variance_max is not None:
                checks.append(
                    _max_check(f"{prefix}.orientation.{arm}.angular_variance_max", scope, FAMILY_ORIENTATION,
                               stats.variance, ao.angular_variance_max, rng)
                )

    if cons.idle_arm is not None:
        path = f"{prefix}.idle_arm.velocity_linear_mean_max"
        if length < 2:
            checks.append(_structure_fail(path, scope, rng))
        else:
            speeds, _ = kinematics.linear_velocity(ep, cons.idle_arm.arm, rng)
            checks.append(
                _max_check(path, scope, FAMILY_IDLE_ARM, float(speeds.mean()), cons.idle_arm.velocity_linear_mean_max, rng)
            )

    if cons.temporal is not None:
        dur = kinematics.duration(ep, rng)
        if cons.temporal.duration_min is not None:
            checks.append(
                _min_check(f"{prefix}.temporal.duration_min", scope, FAMILY_TEMPORAL, dur, cons.temporal.duration_min, rng)
            )
        if cons.temporal.duration_max is not None:
            checks.append(
                _max_check(f"{prefix}.temporal.duration_max", scope, FAMILY_TEMPORAL, dur, cons.temporal.duration_max, rng)
            )

    return checks


def quality_score(checks: Iterable[CheckResult], structure_weight: float = 2.0) -> float:
    """Weighted pass fraction in [0, 1]; structure checks carry double
    weight by default. 1.0 iff every check passed."""
    total = 0.0
    failed = 0.0
    count = 0
    for c in checks:
        w = structure_weight if c.family == FAMILY_STRUCTURE else 1.0
        total += w
        if not c.passed:
            failed += w
        count += 1
    if count == 0:
        raise NoChecksError("no checks to score")
    return 1.0 - failed / total


def evaluate(doc: RtmlDocument, ep: Episode) -> EvaluationReport:
    """Full evaluation of one episode against one document.

    Raises EpisodeInvalidError (carrying the findings) if the episode fails
    validation; otherwise always returns a report. Pure and deterministic:
    identical inputs give identical reports.
    """
    findings = validate_episode(ep)
    if findings:
        raise EpisodeInvalidError(findings)

    bindings = match_stages(doc, ep)
    checks: list[CheckResult] = evaluate_global(doc, ep)
    for i, (stage, binding) in enumerate(zip(doc.stages, bindings)):
        checks.extend(evaluate_stage(stage, ep, binding, i))

    coarse = all(c.passed for c in checks if c.scope == GLOBAL_SCOPE)
    fine = all(c.passed for c in checks)
    score = quality_score(checks) if checks else 1.0

    first_failed: str | None = None
    best_start: int | None = None
    for c in checks:
        if c.passed or c.scope == GLOBAL_SCOPE:
            continue
        if best_start is None or c.frames[0] < best_start:
            best_start = c.frames[0]
            first_failed = c.scope.removeprefix("stage:")

    return EvaluationReport(
        episode_id=ep.id,
        checks=tuple(checks),
        coarse_pass=coarse,
        fine_pass=fine,
        score=score,
        first_failed_phase=first_failed,
    )


# ---------------------------------------------------------------------------
# report serialization


def _obs_to_json(value):
    if value is None:
        return None
    if isinstance(value, tuple):
        return list(value)
    return value


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "episode_id": report.episode_id,
        "coarse_pass": report.coarse_pass,
        "fine_pass": report.fine_pass,
        "score": report.score,
        "first_failed_phase": report.first_failed_phase,
        "checks": [
            {
                "path": c.path,
                "scope": c.scope,
                "family": c.family,
                "observed": _obs_to_json(c.observed),
                "limit": _obs_to_json(c.limit),
                "passed": c.passed,
                "frames": [c.frames[0], c.frames[1]],
            }
            for c in report.checks
        ],
    }


def _obs_from_json(value):
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    return value


def report_from_dict(data: dict) -> EvaluationReport:
    checks = tuple(
        CheckResult(
            path=c["path"],
            scope=c["scope"],
            family=c["family"],
            observed=_obs_from_json(c.get("observed")),
            limit=_obs_from_json(c.get("limit")),
            passed=bool(c["passed"]),
            frames=(int(c["frames"][0]), int(c["frames"][1])),
        )
        for c in data.get("checks", [])
    )
    return EvaluationReport(
        episode_id=data["episode_id"],
        checks=checks,
        coarse_pass=bool(data["coarse_pass"]),
        fine_pass=bool(data["fine_pass"]),
        score=float(data["score"]),
        first_failed_phase=data.get("first_failed_phase"),
    )

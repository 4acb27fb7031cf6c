"""Dataset-level aggregation and curation: disqualification breakdowns by
phase and by metric family, raw/coarse/fine filter manifests, and mining of
individually constraint-satisfying segments out of episodes that fail as
wholes (possibly episodes of other tasks).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EpisodeInvalidError, UnknownStageError
from .evaluator import (
    EvaluationReport,
    StageBinding,
    evaluate,
    evaluate_stage,
    match_stages,
    normalize_subtask,
)
from .rtml import RtmlDocument
from .trajectory import Episode, validate_episode

GLOBAL_BUCKET = "global"
FILTER_LEVELS = ("raw", "coarse", "fine")
EPISODE_INVALID_REASON = "EPISODE_INVALID"


@dataclass(frozen=True)
class DisqualificationBreakdown:
    """Phase-wise and metric-wise attribution of failures.

    ``by_phase`` fractions are over disqualified (not fine-passing)
    episodes, keyed by first-failure stage id or "global"; ``by_metric``
    fractions are over all failed checks across all reports, keyed by
    constraint family. Each fraction set sums to 1 when its denominator is
    nonzero.
    """

    by_phase: dict[str, float]
    by_metric: dict[str, float]
    n_episodes: int
    n_disqualified: int


@dataclass(frozen=True)
class ExcludedEpisode:
    id: str
    reason: str


@dataclass(frozen=True)
class FilterManifest:
    level: str
    included: tuple[str, ...]
    excluded: tuple[ExcludedEpisode, ...]


@dataclass(frozen=True)
class MinedSegment:
    episode_id: str
    frames: tuple[int, int]
    stage_id: str
    source_task_id: str


def aggregate(reports: Sequence[EvaluationReport]) -> DisqualificationBreakdown:
    """Fold evaluation reports into a disqualification breakdown.

    Order-independent: shuffling the input changes nothing.
    """
    disqualified = [r for r in reports if not r.fine_pass]
    phase_counts = Counter((r.first_failed_phase or GLOBAL_BUCKET) for r in disqualified)
    metric_counts = Counter(c.family for r in reports for c in r.checks if not c.passed)

    by_phase = (
        {k: v / len(disqualified) for k, v in sorted(phase_counts.items())} if disqualified else {}
    )
    total_failed = sum(metric_counts.values())
    by_metric = (
        {k: v / total_failed for k, v in sorted(metric_counts.items())} if total_failed else {}
    )
    return DisqualificationBreakdown(
        by_phase=by_phase,
        by_metric=by_metric,
        n_episodes=len(reports),
        n_disqualified=len(disqualified),
    )


def _first_failed_reason(report: EvaluationReport, level: str) -> str:
    for check in report.checks:
        if check.passed:
            continue
        if level == "coarse" and check.scope != "global":
            continue
        return check.path
    return "unknown"


def filter_dataset(episodes: Sequence[Episode], doc: RtmlDocument, level: str) -> FilterManifest:
    """Partition episodes into included/excluded at the given level.

    raw includes everything; coarse includes episodes passing all global
    checks; fine includes episodes passing all checks. Episodes that fail
    validation are excluded at coarse and fine with reason EPISODE_INVALID.
    """
    if level not in FILTER_LEVELS:
        raise ValueError(f"level must be one of {FILTER_LEVELS}, got {level!r}")
    included: list[str] = []
    excluded: list[ExcludedEpisode] = []
    for ep in episodes:
        if level == "raw":
            included.append(ep.id)
            continue
        try:
            report = evaluate(doc, ep)
        except EpisodeInvalidError:
            excluded.append(ExcludedEpisode(ep.id, EPISODE_INVALID_REASON))
            continue
        ok = report.coarse_pass if level == "coarse" else report.fine_pass
        if ok:
            included.append(ep.id)
        else:
            excluded.append(ExcludedEpisode(ep.id, _first_failed_reason(report, level)))
    return FilterManifest(
        level=level,
        included=tuple(sorted(included)),
        excluded=tuple(sorted(excluded, key=lambda e: e.id)),
    )


def mine_segments(
    episodes: Sequence[Episode], doc: RtmlDocument, target_stage_ids: Iterable[str]
) -> list[MinedSegment]:
    """Harvest segments that individually satisfy a target stage's
    constraints, regardless of how their episode fares overall.

    Matching is by normalized segment label, not by task, so cross-task
    harvest is possible. Episodes with validation findings contribute
    nothing (their kinematics cannot be trusted). Overlapping intervals
    from one episode are never returned twice for the same stage.
    """
    stage_lookup = {s.id: (i, s) for i, s in enumerate(doc.stages)}
    targets = list(target_stage_ids)
    for sid in targets:
        if sid not in stage_lookup:
            raise UnknownStageError(f"stage id {sid!r} not present in document")

    mined: list[MinedSegment] = []
    for ep in episodes:
        if validate_episode(ep):
            continue
        for sid in targets:
            stage_index, stage = stage_lookup[sid]
            wanted = normalize_subtask(stage.match_subtask)
            taken: list[tuple[int, int]] = []
            candidates = sorted(
                (seg.start_frame, seg.end_frame, idx)
                for idx, seg in enumerate(ep.annotation.segment_level)
                if normalize_subtask(seg.subtask) == wanted
            )
            for start, end, idx in candidates:
                if any(start <= e and s <= end for s, e in taken):
                    continue
                binding = StageBinding(stage_id=sid, segment_index=idx, frames=(start, end), matched=True)
                checks = evaluate_stage(stage, ep, binding, stage_index)
                if checks and all(c.passed for c in checks):
                    taken.append((start, end))
                    mined.append(
                        MinedSegment(episode_id=ep.id, frames=(start, end), stage_id=sid, source_task_id=ep.task_id)
                    )
    mined.sort(key=lambda m: (m.episode_id, m.stage_id, m.frames))
    return mined


# ---------------------------------------------------------------------------
# serialization


def breakdown_to_dict(b: DisqualificationBreakdown) -> dict:
    return {
        "n_episodes": b.n_episodes,
        "n_disqualified": b.n_disqualified,
        "by_phase": dict(b.by_phase),
        "by_metric": dict(b.by_metric),
    }


def breakdown_to_csv(b: DisqualificationBreakdown) -> tuple[str, str]:
    """Render (phase_csv, metric_csv), each with header ``bucket,fraction``."""

    def render(rows: dict[str, float]) -> str:
        lines = ["bucket,fraction"]
        lines.extend(f"{bucket},{fraction!r}" for bucket, fraction in rows.items())
        return "\n".join(lines) + "\n"

    return render(b.by_phase), render(b.by_metric)


def manifest_to_dict(m: FilterManifest) -> dict:
    return {
        "level": m.level,
        "included": list(m.included),
        "excluded": [{"id": e.id, "reason": e.reason} for e in m.excluded],
    }


def manifest_from_dict(data: dict) -> FilterManifest:
    return FilterManifest(
        level=data["level"],
        included=tuple(data["included"]),
        excluded=tuple(ExcludedEpisode(e["id"], e["reason"]) for e in data["excluded"]),
    )


def mined_to_dicts(mined: Sequence[MinedSegment]) -> list[dict]:
    return [
        {
            "episode_id": m.episode_id,
            "frames": [m.frames[0], m.frames[1]],
            "stage_id": m.stage_id,
            "source_task_id": m.source_task_id,
        }
        for m in mined
    ]

import math

import numpy as np
import pytest

from rtml_engine.errors import EpisodeInvalidError, NoChecksError
from rtml_engine.evaluator import (
    CheckResult,
    evaluate,
    evaluate_global,
    evaluate_stage,
    match_stages,
    normalize_subtask,
    quality_score,
    report_from_dict,
    report_to_dict,
    StageBinding,
)
from rtml_engine.trajectory import Segment

from .corpus import SUBTASKS, build_task_episode, episode_from_tracks


def line_episode(speed, n=50, dt=0.1, segments=()):
    t = np.arange(n) * dt
    pos = speed * t[:, None] * np.array([1.0, 0.0, 0.0])
    return episode_from_tracks(t, pos, pos.copy(), segments=segments)


class TestNormalizeSubtask:
    def test_case_whitespace_punctuation(self):
        assert normalize_subtask("  Grasp   the Bread. ") == "grasp the bread"
        assert normalize_subtask("End") == normalize_subtask("end!")
        assert normalize_subtask("a b") != normalize_subtask("ab")


class TestMatchStages:
    def test_reference_six_in_order(self, reference_doc, planted):
        episodes, _ = planted
        bindings = match_stages(reference_doc, episodes[0])
        assert len(bindings) == 6
        assert all(b.matched for b in bindings)
        starts = [b.frames[0] for b in bindings]
        assert starts == sorted(starts)

    def test_missing_end_segment(self, reference_doc):
        ep = build_task_episode("x", violation="unmatched_stage")
        bindings = match_stages(reference_doc, ep)
        assert sum(b.matched for b in bindings) == 5
        assert bindings[-1].stage_id == "End"
        assert not bindings[-1].matched

    def test_duplicate_segment_binds_first(self, reference_doc):
        n = 200
        t = np.arange(n) * 0.1
        pos = np.zeros((n, 3))
        subtask = SUBTASKS["grasp_long"][0]
        segs = [Segment(subtask, 10, 60, "left"), Segment(subtask, 80, 130, "left")]
        ep = episode_from_tracks(t, pos, pos, segments=segs)
        bindings = match_stages(reference_doc, ep)
        grasp = next(b for b in bindings if b.stage_id == "grasp_long_bread_left")
        assert grasp.matched and b_frames(grasp) == (10, 60)

    def test_order_constraint_never_binds_backwards(self):
        from rtml_engine.rtml import parse_rtml

        doc = parse_rtml(
            "task:\n  id: t\n  stages:\n"
            "    - {id: s1, match_subtask: alpha}\n"
            "    - {id: s2, match_subtask: beta}\n"
        )
        n = 100
        t = np.arange(n) * 0.1
        pos = np.zeros((n, 3))
        # beta occurs only before alpha's match: s2 must stay unmatched.
        segs = [Segment("beta", 0, 10, "left"), Segment("alpha", 20, 40, "right")]
        ep = episode_from_tracks(t, pos, pos, segments=segs)
        bindings = match_stages(doc, ep)
        assert bindings[0].matched and b_frames(bindings[0]) == (20, 40)
        assert not bindings[1].matched


def b_frames(binding: StageBinding):
    return binding.frames


class TestEvaluateGlobal:
    def test_conforming_straight_line(self, reference_doc):
        ep = line_episode(0.2)
        checks = evaluate_global(reference_doc, ep)
        assert checks and all(c.passed for c in checks)
        paths = {c.path for c in checks}
        assert "global_constraints.velocity.linear.max" in paths
        assert "global_constraints.velocity.linear.mean_max.left" in paths

    def test_overspeed_fails_with_observed(self, reference_doc):
        ep = line_episode(0.6)
        checks = evaluate_global(reference_doc, ep)
        vmax = next(c for c in checks if c.path == "global_constraints.velocity.linear.max")
        assert not vmax.passed
        assert math.isclose(vmax.observed, 0.6, abs_tol=1e-9)
        assert vmax.limit == 0.5
        # 0.6 m/s also exceeds the 0.3 mean limit; acceleration stays clean.
        accel = next(c for c in checks if c.family == "acceleration")
        assert accel.passed

    def test_zero_motion_passes(self, reference_doc):
        ep = line_episode(0.0)
        assert all(c.passed for c in evaluate_global(reference_doc, ep))

    def test_two_frames_acceleration_becomes_structure_failure(self, reference_doc):
        ep = line_episode(0.0, n=2)
        checks = evaluate_global(reference_doc, ep)
        accel = next(c for c in checks if "acceleration" in c.path)
        assert accel.family == "structure" and not accel.passed
        velocity_checks = [c for c in checks if c.family == "velocity"]
        assert velocity_checks and all(c.passed for c in velocity_checks)


class TestEvaluateStage:
    def test_workspace_interior_point_passes(self, reference_doc):
        grasp = reference_doc.stages[1]
        n = 60
        t = np.arange(n) * 0.1
        left = np.tile([0.15, 0.15, 0.10], (n, 1))
        seg = Segment(grasp.match_subtask, 5, 55, "left")
        ep = episode_from_tracks(t, left, np.zeros((n, 3)), segments=[seg])
        binding = StageBinding(grasp.id, 0, (5, 55), True)
        checks = evaluate_stage(grasp, ep, binding, 1)
        ws = [c for c in checks if c.family == "workspace"]
        assert len(ws) == 2 and all(c.passed for c in ws)

    def test_idle_arm_constant_motion_fails_observed_010(self, reference_doc):
        grasp = reference_doc.stages[1]  # idle arm: right, limit 0.05
        n = 60
        t = np.arange(n) * 0.1
        left = np.tile([0.15, 0.15, 0.10], (n, 1))
        right = 0.10 * t[:, None] * np.array([1.0, 0.0, 0.0])
        seg = Segment(grasp.match_subtask, 5, 55, "left")
        ep = episode_from_tracks(t, left, right, segments=[seg])
        binding = StageBinding(grasp.id, 0, (5, 55), True)
        idle = next(c for c in evaluate_stage(grasp, ep, binding, 1) if c.family == "idle_arm")
        assert not idle.passed
        assert math.isclose(idle.observed, 0.10, abs_tol=1e-9)
        assert idle.limit == 0.05

    def test_duration_over_max_fails(self, reference_doc):
        grasp = reference_doc.stages[1]  # duration_max 8.0
        n = 120
        t = np.arange(n) * 0.1
        left = np.tile([0.15, 0.15, 0.10], (n, 1))
        seg = Segment(grasp.match_subtask, 0, 90, "left")  # 9.0 s
        ep = episode_from_tracks(t, left, np.zeros((n, 3)), segments=[seg])
        binding = StageBinding(grasp.id, 0, (0, 90), True)
        checks = evaluate_stage(grasp, ep, binding, 1)
        dmax = next(c for c in checks if c.path.endswith("duration_max"))
        assert not dmax.passed and math.isclose(dmax.observed, 9.0)
        dmin = next(c for c in checks if c.path.endswith("duration_min"))
        assert dmin.passed

    def test_unmatched_binding_single_structure_check(self, reference_doc):
        ep = build_task_episode("x")
        binding = StageBinding("End", None, None, False)
        checks = evaluate_stage(reference_doc.stages[5], ep, binding, 5)
        assert len(checks) == 1
        assert checks[0].family == "structure" and not checks[0].passed


class TestEvaluate:
    def test_conforming_episode_fine_pass_score_one(self, reference_doc):
        report = evaluate(reference_doc, build_task_episode("ok"))
        assert report.fine_pass and report.coarse_pass
        assert report.score == 1.0
        assert report.first_failed_phase is None

    def test_planted_duration_first_failed_phase(self, reference_doc):
        report = evaluate(reference_doc, build_task_episode("d", violation="grasp_duration"))
        assert report.coarse_pass and not report.fine_pass
        assert report.first_failed_phase == "grasp_long_bread_left"

    def test_planted_global_spike_fails_coarse(self, reference_doc):
        report = evaluate(reference_doc, build_task_episode("g", violation="global_speed"))
        assert not report.coarse_pass and not report.fine_pass
        assert report.first_failed_phase is None

    def test_invalid_episode_raises_with_findings(self, reference_doc):
        t = [0.0, 0.0, 0.1]
        pos = np.zeros((3, 3))
        ep = episode_from_tracks(t, pos, pos)
        with pytest.raises(EpisodeInvalidError) as exc:
            evaluate(reference_doc, ep)
        assert any(f.code == "NON_MONOTONIC_TIME" for f in exc.value.findings)

    def test_determinism_bit_for_bit(self, reference_doc):
        import json

        ep = build_task_episode("det", violation="idle_arm")
        a = evaluate(reference_doc, ep)
        b = evaluate(reference_doc, ep)
        assert a == b
        assert json.dumps(report_to_dict(a), sort_keys=True) == json.dumps(report_to_dict(b), sort_keys=True)

    def test_check_locality(self, reference_doc):
        # Mutating frames outside a stage's interval must not change that
        # stage's results (global checks may change).
        ep = build_task_episode("loc")
        report = evaluate(reference_doc, ep)
        bindings = match_stages(reference_doc, ep)
        grasp_binding = bindings[1]
        a, b = grasp_binding.frames

        frames = list(ep.frames)
        victim = a - 5  # inside the preceding gap
        from dataclasses import replace

        moved = replace(
            frames[victim],
            left=replace(frames[victim].left, position=(0.9, 0.9, 0.9)),
        )
        frames[victim] = moved
        mutated = replace(ep, frames=tuple(frames))

        before = [c for c in report.checks if c.scope == "stage:grasp_long_bread_left"]
        after = [c for c in evaluate(reference_doc, mutated).checks if c.scope == "stage:grasp_long_bread_left"]
        assert before == after

    def test_report_round_trip(self, reference_doc):
        report = evaluate(reference_doc, build_task_episode("rt", violation="workspace"))
        assert report_from_dict(report_to_dict(report)) == report


class TestQualityScore:
    def _checks(self, n_pass, n_fail, fail_family="velocity"):
        out = []
        for i in range(n_pass):
            out.append(CheckResult(f"p{i}", "global", "velocity", 0.1, 0.5, True, (0, 1)))
        for i in range(n_fail):
            out.append(CheckResult(f"f{i}", "global", fail_family, 0.9, 0.5, False, (0, 1)))
        return out

    def test_all_pass(self):
        assert quality_score(self._checks(10, 0)) == 1.0

    def test_one_of_ten_non_structure(self):
        assert math.isclose(quality_score(self._checks(9, 1)), 0.9)

    def test_structure_failure_double_weight(self):
        checks = self._checks(9, 1, fail_family="structure")
        assert math.isclose(quality_score(checks), 9.0 / 11.0)

    def test_empty_raises(self):
        with pytest.raises(NoChecksError):
            quality_score([])

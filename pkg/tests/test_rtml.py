import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtml_engine.errors import SpecParseError
from rtml_engine.rtml import RtmlDocument, parse_rtml, serialize_rtml, validate_spec

from .corpus import random_document

EXPECTED_SUBTASKS = [
    "Move the pink bowl to the center of table with right hand",
    "Grasp the long bread with left hand",
    "Place the long bread in pink bowl with left hand",
    "Grasp the round bread with left hand",
    "Place the round bread in pink bowl with left hand",
    "End",
]


class TestParseReferenceDocument:
    def test_header_values(self, reference_doc):
        assert reference_doc.task_id == "pull_bowl_storage_bread"
        assert reference_doc.version == "1.0"
        g = reference_doc.global_constraints
        assert g.velocity.linear_max == 0.5
        assert g.velocity.linear_mean_max == 0.3
        assert g.acceleration.linear_max == 12.0
        assert g.workspace is None
        assert g.temporal is None

    def test_six_stages_in_order(self, reference_doc):
        assert len(reference_doc.stages) == 6
        assert [s.match_subtask for s in reference_doc.stages] == EXPECTED_SUBTASKS
        assert reference_doc.stages[-1].id == "End"

    def test_stage_details(self, reference_doc):
        move = reference_doc.stages[0]
        assert move.id == "move_bowl_right"
        assert move.constraints.workspace.right.min == (0.10, -0.40, 0.10)
        assert move.constraints.workspace.right.max == (0.25, -0.20, 0.30)
        assert move.constraints.velocity.linear_mean_max == 0.10
        assert move.constraints.velocity.linear_std_max == 0.08
        assert move.constraints.idle_arm.arm == "left"
        assert move.constraints.idle_arm.velocity_linear_mean_max == 0.05
        assert move.constraints.temporal.duration_min == 2.0
        assert move.constraints.temporal.duration_max == 6.0

        grasp = reference_doc.stages[1]
        assert grasp.constraints.orientation.left.angular_mean_deviation_max == 0.8
        assert grasp.constraints.orientation.left.std_max == (0.5, 0.5, 0.8)
        assert grasp.constraints.orientation.left.angular_variance_max == 0.15

        end = reference_doc.stages[5]
        assert end.constraints.temporal.duration_min is None
        assert end.constraints.temporal.duration_max == 6.0

    def test_reference_document_has_no_findings(self, reference_doc):
        assert validate_spec(reference_doc) == []


class TestParseErrors:
    def test_minimal_document(self):
        doc = parse_rtml("task: {id: t}")
        assert doc.task_id == "t"
        assert doc.stages == ()
        assert doc.global_constraints.velocity is None

    def test_mean_max_list_is_type_mismatch(self, reference_spec_text):
        broken = reference_spec_text.replace("mean_max: 0.3 ", "mean_max: [0.3]")
        with pytest.raises(SpecParseError) as exc:
            parse_rtml(broken)
        assert exc.value.code == "TYPE_MISMATCH"
        assert exc.value.path == "global_constraints.velocity.linear.mean_max"

    def test_unknown_field_full_path(self):
        text = "task:\n  id: t\n  global_constraints:\n    velocity:\n      linear:\n        turbo: 1.0\n"
        with pytest.raises(SpecParseError) as exc:
            parse_rtml(text)
        assert exc.value.code == "UNKNOWN_FIELD"
        assert exc.value.path == "global_constraints.velocity.linear.turbo"

    def test_missing_task_id(self):
        with pytest.raises(SpecParseError) as exc:
            parse_rtml("task: {stages: []}")
        assert exc.value.code == "MISSING_FIELD"

    def test_yaml_syntax_error_located(self):
        with pytest.raises(SpecParseError) as exc:
            parse_rtml("task:\n  id: [unclosed\n")
        assert exc.value.code == "SYNTAX_ERROR"

    def test_alias_rejected(self):
        text = "task:\n  id: &a t\n  stages: []\n"
        with pytest.raises(SpecParseError) as exc:
            parse_rtml(text)
        assert exc.value.code == "ANCHOR_ALIAS"

    def test_multidoc_rejected(self):
        with pytest.raises(SpecParseError) as exc:
            parse_rtml("---\ntask: {id: a}\n---\ntask: {id: b}\n")
        assert exc.value.code == "MULTI_DOCUMENT"

    def test_scalar_where_mapping_expected(self):
        with pytest.raises(SpecParseError) as exc:
            parse_rtml("task:\n  id: t\n  global_constraints: fast\n")
        assert exc.value.code == "TYPE_MISMATCH"

    def test_bad_idle_arm(self):
        text = "task:\n  id: t\n  stages:\n    - id: s\n      match_subtask: m\n      constraints:\n        idle_arm:\n          arm: middle\n          velocity_linear_mean_max: 0.1\n"
        with pytest.raises(SpecParseError) as exc:
            parse_rtml(text)
        assert exc.value.code == "TYPE_MISMATCH"

    def test_version_header_parsed(self):
        doc = parse_rtml("# RTML V2.3\ntask: {id: t}")
        assert doc.version == "2.3"
        assert parse_rtml("task: {id: t}").version == "1.0"


class TestValidateSpec:
    def test_inverted_box(self):
        text = (
            "task:\n  id: t\n  stages:\n    - id: s\n      match_subtask: m\n"
            "      constraints:\n        workspace:\n          left:\n"
            "            min: [0.3, 0, 0]\n            max: [0.1, 0, 0]\n"
        )
        findings = validate_spec(parse_rtml(text))
        assert [f.code for f in findings] == ["BOX_INVERTED"]

    def test_duplicate_stage_id(self):
        text = (
            "task:\n  id: t\n  stages:\n"
            "    - {id: s, match_subtask: a}\n"
            "    - {id: s, match_subtask: b}\n"
        )
        findings = validate_spec(parse_rtml(text))
        assert [f.code for f in findings] == ["DUPLICATE_STAGE_ID"]

    def test_mean_above_max(self):
        text = "task:\n  id: t\n  global_constraints:\n    velocity:\n      linear:\n        max: 0.2\n        mean_max: 0.4\n"
        findings = validate_spec(parse_rtml(text))
        assert [f.code for f in findings] == ["MEAN_ABOVE_MAX"]

    def test_nonpositive_and_negative_values(self):
        text = (
            "task:\n  id: t\n  global_constraints:\n    velocity:\n      linear:\n        max: -0.5\n"
            "  stages:\n    - id: s\n      match_subtask: m\n      constraints:\n"
            "        orientation:\n          left:\n            angular_mean_deviation_max: -0.1\n"
        )
        codes = {f.code for f in validate_spec(parse_rtml(text))}
        assert codes == {"VALUE_NOT_POSITIVE", "VALUE_NEGATIVE"}

    def test_duration_inverted(self):
        text = "task:\n  id: t\n  global_constraints:\n    temporal:\n      duration_min: 5.0\n      duration_max: 2.0\n"
        assert [f.code for f in validate_spec(parse_rtml(text))] == ["DURATION_INVERTED"]


class TestRoundTrip:
    def test_reference_round_trip(self, reference_doc):
        assert parse_rtml(serialize_rtml(reference_doc)) == reference_doc

    def test_empty_stage_document_round_trip(self):
        doc = parse_rtml("task: {id: t}")
        assert parse_rtml(serialize_rtml(doc)) == doc

    def test_version_round_trip(self):
        doc = parse_rtml("# RTML V7.1\ntask: {id: t}")
        assert parse_rtml(serialize_rtml(doc)).version == "7.1"

    def test_100_random_documents_round_trip(self):
        rng = random.Random(1234)
        for _ in range(100):
            doc = random_document(rng)
            assert validate_spec(doc) == []
            assert parse_rtml(serialize_rtml(doc)) == doc


class TestParserTotality:
    @given(st.text(max_size=400))
    @settings(max_examples=300, deadline=None)
    def test_arbitrary_text_never_crashes(self, text):
        try:
            doc = parse_rtml(text)
            assert isinstance(doc, RtmlDocument)
        except SpecParseError:
            pass

    @given(st.binary(max_size=300))
    @settings(max_examples=200, deadline=None)
    def test_arbitrary_bytes_never_crash(self, raw):
        try:
            parse_rtml(raw)
        except SpecParseError:
            pass

    def test_reference_mutations_never_crash(self, reference_spec_text):
        rng = random.Random(99)
        chars = list(reference_spec_text)
        for _ in range(300):
            mutated = list(chars)
            for _ in range(rng.randint(1, 6)):
                op = rng.randrange(3)
                pos = rng.randrange(len(mutated))
                if op == 0:
                    mutated[pos] = chr(rng.randrange(32, 1000))
                elif op == 1:
                    del mutated[pos]
                else:
                    mutated.insert(pos, rng.choice(" :-[]{}\"'\n\t#&*"))
            try:
                parse_rtml("".join(mutated))
            except SpecParseError:
                pass

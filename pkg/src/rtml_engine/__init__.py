"""Trajectory-quality engine for bimanual robot episodes.

Parses RTML constraint documents, derives end-effector kinematics from
episode frame streams, evaluates global and per-phase constraints into
reports and quality scores, filters and mines datasets, generates
rule-based annotations, and manages episode collections as tag-composable
atomic subsets.
"""

from .analytics import (
    DisqualificationBreakdown,
    FilterManifest,
    MinedSegment,
    aggregate,
    filter_dataset,
    mine_segments,
)
from .annotator import (
    Detection,
    Keyframe,
    LabelConfig,
    SceneDescription,
    describe_scene,
    detect_keyframes,
    detect_phase_change,
    label_frames,
    summarize_history,
)
from .dataset_store import (
    AtomicSubset,
    DatasetManifest,
    DatasetView,
    attach_filter,
    compose,
    parse_query,
    partition,
)
from .evaluator import (
    CheckResult,
    EvaluationReport,
    StageBinding,
    evaluate,
    evaluate_global,
    evaluate_stage,
    match_stages,
    quality_score,
)
from .kinematics import (
    AngularStats,
    SeriesStats,
    angular_stats,
    duration,
    linear_acceleration,
    linear_velocity,
    series_stats,
)
from .rtml import RtmlDocument, SpecFinding, StageConstraint, parse_rtml, serialize_rtml, validate_spec
from .trajectory import (
    EffectorState,
    Episode,
    Frame,
    FrameLabel,
    PyramidAnnotation,
    Segment,
    ValidationFinding,
    load_episode,
    orientation_matrix,
    serialize_episode,
    validate_episode,
)

__version__ = "0.1.0"

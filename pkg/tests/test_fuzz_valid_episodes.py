"""Every operation must be defined (no crashes, only documented typed
errors) on any episode that validates clean, whatever its content.
"""

import random

from rtml_engine.analytics import filter_dataset, mine_segments
from rtml_engine.annotator import LabelConfig, detect_keyframes, label_frames, summarize_history
from rtml_engine.dataset_store import attach_filter, compose, partition
from rtml_engine.evaluator import evaluate
from rtml_engine.kinematics import angular_stats, duration, linear_acceleration, linear_velocity
from rtml_engine.trajectory import load_episode, serialize_episode, validate_episode

from .corpus import random_document, random_valid_episode


def test_all_operations_defined_on_random_valid_episodes():
    rng = random.Random(13)
    cfg = LabelConfig()
    for _ in range(150):
        ep = random_valid_episode(rng, min_frames=cfg.window, max_frames=40)
        assert validate_episode(ep) == []
        doc = random_document(rng, [s.subtask for s in ep.annotation.segment_level] or ["none"])

        report = evaluate(doc, ep)
        assert 0.0 <= report.score <= 1.0

        for arm in ("left", "right"):
            linear_velocity(ep, arm)
            if len(ep) >= 3:
                linear_acceleration(ep, arm)
            angular_stats(ep, arm)
        duration(ep)

        labels = label_frames(ep, cfg)
        assert len(labels) == len(ep)
        detect_keyframes(ep, cfg)
        summarize_history(labels, len(labels) - 1, 3)

        for level in ("raw", "coarse", "fine"):
            filter_dataset([ep], doc, level)
        if doc.stages:
            mine_segments([ep], doc, [doc.stages[0].id])

        manifest = partition([ep])
        compose(manifest, f'"{ep.embodiment}"')

        assert load_episode(serialize_episode(ep)) == ep

"""Batch CLI binding the library into curation workflows.

Exit codes are stable: 0 success, 1 validation findings present, 2
input/parse error, 3 internal error. All outputs are written atomically
(temp file + rename) and sorted by episode id, so results are byte-stable
regardless of the --jobs setting.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analytics, annotator, dataset_store, evaluator, plotting, rtml
from .errors import EngineError, EpisodeInvalidError
from .jsonio import atomic_write_text, canonical_json, dump_json, load_json
from .trajectory import Episode, PyramidAnnotation, episode_to_dict, load_episode, validate_episode, with_annotation

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("RTML_ENGINE_JOBS", "1")))
    except ValueError:
        return 1


def _episode_files(path: Path, recursive: bool) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(f"no such file or directory: {path}")
    pattern = "**/*.json" if recursive else "*.json"
    return sorted(p for p in path.glob(pattern) if p.is_file())


def _load_spec(path: Path) -> rtml.RtmlDocument:
    doc = rtml.parse_rtml(path.read_text(encoding="utf-8"))
    findings = rtml.validate_spec(doc)
    if findings:
        details = "; ".join(f"{f.code} at {f.path}" for f in findings)
        raise EngineError(f"spec has findings: {details}")
    return doc


def _load_episodes(files: list[Path]) -> list[Episode]:
    return [load_episode(p.read_bytes()) for p in files]


# ---------------------------------------------------------------------------
# commands


def cmd_check_spec(args) -> int:
    path = Path(args.path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        doc = rtml.parse_rtml(text)
    except EngineError as exc:
        print(f"parse error [{exc.code}]: {exc.message}", file=sys.stderr)
        return EXIT_INPUT
    findings = rtml.validate_spec(doc)
    for f in findings:
        print(f"{f.code} {f.path}: {f.message}")
    if findings:
        return EXIT_FINDINGS
    print(f"OK task {doc.task_id!r}: {len(doc.stages)} stages, no findings")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    doc = _load_spec(Path(args.spec))
    files = _episode_files(Path(args.episodes), args.recursive)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def process(path: Path):
        try:
            ep = load_episode(path.read_bytes())
        except EngineError as exc:
            return (path.stem, {"episode_id": path.stem, "error": exc.code, "message": exc.message}, None)
        try:
            report = evaluator.evaluate(doc, ep)
        except EpisodeInvalidError as exc:
            record = {
                "episode_id": ep.id,
                "error": exc.code,
                "findings": [
                    {"code": f.code, "message": f.message, "frame": f.frame, "segment": f.segment, "arm": f.arm}
                    for f in exc.findings
                ],
            }
            return (ep.id, record, None)
        return (ep.id, None, report)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = sorted(pool.map(process, files), key=lambda r: r[0])

    n = len(results)
    n_invalid = 0
    n_coarse = 0
    n_fine = 0
    for key, error_record, report in results:
        if report is None:
            n_invalid += 1
            dump_json(error_record, out_dir / f"{key}.invalid.json")
            continue
        n_coarse += report.coarse_pass
        n_fine += report.fine_pass
        dump_json(evaluator.report_to_dict(report), out_dir / f"{key}.report.json")

    evaluated = n - n_invalid
    print(
        f"n={n} evaluated={evaluated} invalid={n_invalid} "
        f"coarse_pass={n_coarse}/{evaluated} fine_pass={n_fine}/{evaluated}"
    )
    return EXIT_FINDINGS if n_invalid else EXIT_OK


def cmd_report(args) -> int:
    reports_dir = Path(args.reports)
    files = sorted(reports_dir.glob("*.report.json"))
    reports = [evaluator.report_from_dict(load_json(p)) for p in files]
    breakdown = analytics.aggregate(reports) if reports else analytics.DisqualificationBreakdown({}, {}, 0, 0)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(analytics.breakdown_to_dict(breakdown), out_dir / "breakdown.json")
    phase_csv, metric_csv = analytics.breakdown_to_csv(breakdown)
    atomic_write_text(out_dir / "phase_breakdown.csv", phase_csv)
    atomic_write_text(out_dir / "metric_breakdown.csv", metric_csv)
    figures = plotting.save_breakdown_figures(breakdown, out_dir)

    # Post-write sanity: each written fraction set must sum to 1.
    for rows in (breakdown.by_phase, breakdown.by_metric):
        if rows and abs(sum(rows.values()) - 1.0) > 1e-9:
            raise AssertionError("breakdown fractions do not sum to 1")
    print(
        f"n={breakdown.n_episodes} disqualified={breakdown.n_disqualified} "
        f"wrote breakdown.json, 2 csv files, {len(figures)} figures to {out_dir}"
    )
    return EXIT_OK


def _manifest_paths(out: str) -> tuple[Path, Path]:
    base = out[: -len(".json")] if out.endswith(".json") else out
    return Path(f"{base}.json"), Path(f"{base}.ids.txt")


def cmd_filter(args) -> int:
    if args.level not in analytics.FILTER_LEVELS:
        print(f"error: bad level {args.level!r}", file=sys.stderr)
        return EXIT_INPUT
    doc = _load_spec(Path(args.spec))
    episodes = _load_episodes(_episode_files(Path(args.episodes), args.recursive))
    manifest = analytics.filter_dataset(episodes, doc, args.level)
    json_path, ids_path = _manifest_paths(args.out)
    dump_json(analytics.manifest_to_dict(manifest), json_path)
    atomic_write_text(ids_path, "".join(f"{eid}\n" for eid in manifest.included))
    print(f"level={manifest.level} included={len(manifest.included)} excluded={len(manifest.excluded)}")
    return EXIT_OK


def cmd_mine(args) -> int:
    doc = _load_spec(Path(args.spec))
    episodes = _load_episodes(_episode_files(Path(args.episodes), args.recursive))
    stage_ids = [s.strip() for s in args.stages.split(",") if s.strip()]
    mined = analytics.mine_segments(episodes, doc, stage_ids)
    dump_json(analytics.mined_to_dicts(mined), Path(args.out))
    print(f"mined={len(mined)} segments for stages {','.join(stage_ids)}")
    return EXIT_OK


def cmd_annotate(args) -> int:
    if args.config:
        cfg = annotator.LabelConfig.from_dict(load_json(args.config))
    else:
        cfg = annotator.LabelConfig()
    files = _episode_files(Path(args.episodes), args.recursive)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_invalid = 0
    for path in sorted(files):
        ep = load_episode(path.read_bytes())
        findings = validate_episode(ep)
        if findings:
            n_invalid += 1
            dump_json(
                {"episode_id": ep.id, "error": "EPISODE_INVALID", "findings": [f.code for f in findings]},
                out_dir / f"{ep.id}.invalid.json",
            )
            continue
        labels = annotator.label_frames(ep, cfg)
        keyframes = annotator.detect_keyframes(ep, cfg)
        annotated = with_annotation(
            ep,
            PyramidAnnotation(
                trajectory_level=ep.annotation.trajectory_level,
                segment_level=ep.annotation.segment_level,
                frame_level=tuple(labels),
                keyframes=tuple((k.frame, k.cause) for k in keyframes),
            ),
        )
        payload = episode_to_dict(annotated)
        payload["annotation_provenance"] = {"label_config": cfg.to_dict()}
        dump_json(payload, out_dir / f"{ep.id}.json")
    print(f"annotated={len(files) - n_invalid} invalid={n_invalid}")
    return EXIT_FINDINGS if n_invalid else EXIT_OK


def cmd_store(args) -> int:
    if args.store_cmd == "partition":
        episodes = _load_episodes(_episode_files(Path(args.episodes), args.recursive))
        manifest = dataset_store.partition(episodes)
        dump_json(dataset_store.manifest_to_dict(manifest), Path(args.out))
        print(f"version={manifest.version} subsets={len(manifest.subsets)}")
        return EXIT_OK
    if args.store_cmd == "compose":
        manifest = dataset_store.manifest_from_dict(load_json(args.manifest))
        view = dataset_store.compose(manifest, args.query)
        for eid in view.episode_ids:
            print(eid)
        if args.out:
            dump_json(
                {"episodes": list(view.episode_ids), "subsets": [s.subset_id for s in view.subsets]},
                Path(args.out),
            )
        return EXIT_OK
    if args.store_cmd == "attach":
        manifest = dataset_store.manifest_from_dict(load_json(args.manifest))
        fm = analytics.manifest_from_dict(load_json(args.filter))
        updated = dataset_store.attach_filter(manifest, fm, args.tag)
        dump_json(dataset_store.manifest_to_dict(updated), Path(args.out))
        print(f"version={updated.version} parent={updated.parent} subsets={len(updated.subsets)}")
        return EXIT_OK
    raise EngineError(f"unknown store subcommand {args.store_cmd!r}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtml-engine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-spec", help="parse and validate an RTML file")
    p.add_argument("path")
    p.set_defaults(func=cmd_check_spec)

    def add_common(p, spec=True):
        if spec:
            p.add_argument("--spec", required=True, help="RTML file")
        p.add_argument("--episodes", required=True, help="episode JSON file or directory")
        p.add_argument("--recursive", action="store_true", help="scan episode directories recursively")

    p = sub.add_parser("evaluate", help="evaluate episodes against a spec")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory for report JSON files")
    p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker pool size (env RTML_ENGINE_JOBS)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate evaluation reports into breakdowns")
    p.add_argument("--reports", required=True, help="directory of *.report.json files")
    p.add_argument("--out", required=True, help="output directory for breakdown files and figures")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("filter", help="write a raw/coarse/fine filter manifest")
    add_common(p)
    p.add_argument("--level", required=True, choices=analytics.FILTER_LEVELS)
    p.add_argument("--out", required=True, help="manifest output path (writes .json and .ids.txt)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("mine", help="mine stage-satisfying segments from episodes")
    add_common(p)
    p.add_argument("--stages", required=True, help="comma-separated stage ids")
    p.add_argument("--out", required=True, help="mined segment list JSON path")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("annotate", help="write episodes with frame labels and keyframes")
    add_common(p, spec=False)
    p.add_argument("--config", help="label config JSON file")
    p.add_argument("--out", required=True, help="output directory for annotated episodes")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("store", help="atomic subset storage operations")
    store_sub = p.add_subparsers(dest="store_cmd", required=True)

    sp = store_sub.add_parser("partition", help="partition episodes into atomic subsets")
    add_common(sp, spec=False)
    sp.add_argument("--out", required=True, help="manifest JSON path")
    sp.set_defaults(func=cmd_store)

    sp = store_sub.add_parser("compose", help="select subsets by tag query")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--query", required=True, help='tag query, e.g. \'"tag-a" AND NOT "tag-b"\'')
    sp.add_argument("--out", help="optional view JSON path")
    sp.set_defaults(func=cmd_store)

    sp = store_sub.add_parser("attach", help="attach a filter manifest as a tag")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--filter", required=True, help="filter manifest JSON path")
    sp.add_argument("--tag", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_store)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

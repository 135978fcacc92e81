"""Command-line interface.

Subcommands mirror the pipeline stages so each is usable standalone on files:
``segment``, ``diarize``, ``pseudo-label``, ``score``, ``norm``, ``fuse``,
``calibrate``, ``eval-ver``, ``eval-dia``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .corpus import (
    load_embedding_archive,
    parse_manifest,
    parse_rttm,
    parse_trials,
)
from .errors import ToolkitError
from .metrics import DcfConfig, DerBreakdown, der, eer, jer, min_dcf
from .pseudolabel import write_labels
from .scoring import (
    Cohort,
    NormConfig,
    calibrate,
    fuse,
    normalize_trials,
    parse_scores,
    score_trials,
    write_scores,
)

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _read(path) -> str:
    return Path(path).read_text()


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> pipeline.PipelineConfig:
    base = None
    if getattr(args, "config", None):
        base = pipeline.parse_config(_read(args.config))
    overrides = {}
    for name in (
        "seed",
        "win",
        "hop",
        "spectral_threshold",
        "k_max",
        "overlap_extend",
        "asnorm_top",
        "p_target",
        "collar",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "rounds", None):
        overrides["purify_rounds"] = pipeline.parse_round_spec(args.rounds)
    if getattr(args, "weights", None):
        overrides["fusion_weights"] = tuple(
            float(w) for w in args.weights.split(",")
        )
    if base is None:
        if "seed" not in overrides:
            overrides.setdefault("seed", 0)
        return pipeline.PipelineConfig(**overrides)
    from dataclasses import replace

    return replace(base, **overrides)


def _cohort_from_archive(path) -> Cohort:
    archive = load_embedding_archive(path)
    return Cohort(list(archive.ids), archive.vectors.astype(float))


# --- subcommand handlers ----------------------------------------------------


def _cmd_segment(args) -> int:
    config = _load_config(args)
    tracks = pipeline.parse_posteriors(_read(args.posteriors))
    records = pipeline.segment_posteriors(tracks, config)
    _emit(pipeline.write_segments(records), args.out)
    return 0


def _cmd_diarize(args) -> int:
    config = _load_config(args)
    embeddings = load_embedding_archive(args.embeddings)
    if args.segments:
        records = pipeline.parse_segments(_read(args.segments))
    else:
        tracks = pipeline.parse_posteriors(_read(args.posteriors))
        records = pipeline.segment_posteriors(tracks, config)
    overlaps = []
    if args.overlap:
        from .timeline import Segment

        overlaps = [
            Segment(r.recording, r.start, r.end)
            for r in pipeline.parse_segments(_read(args.overlap))
        ]
    rttm = pipeline.run_diarize(
        embeddings,
        records,
        config,
        k=args.k,
        overlap_segments=overlaps,
        workers=args.workers,
    )
    _emit(rttm, args.out)
    return 0


def _cmd_pseudo_label(args) -> int:
    config = _load_config(args)
    if not config.purify_rounds:
        raise ToolkitError("no purification rounds configured")
    archives = [load_embedding_archive(p) for p in args.embeddings]
    manifest = parse_manifest(_read(args.manifest))
    results = pipeline.run_pseudo_label(archives, manifest, config, k=args.k)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for labels, stats in results:
        print(stats.summary())
        if out_dir:
            (out_dir / f"round{stats.round_index}.labels").write_text(
                write_labels(labels)
            )
    return 0


def _cmd_score(args) -> int:
    trials = parse_trials(_read(args.trials))
    embeddings = load_embedding_archive(args.embeddings)
    scored = score_trials(trials, embeddings)
    _emit(write_scores(scored), args.out)
    return 0


def _cmd_norm(args) -> int:
    config = _load_config(args)
    scored = parse_scores(_read(args.scores))
    embeddings = load_embedding_archive(args.embeddings)
    cohort = _cohort_from_archive(args.cohort)
    normalized = normalize_trials(
        scored, embeddings, cohort, NormConfig(config.asnorm_top)
    )
    _emit(write_scores(normalized), args.out)
    return 0


def _cmd_fuse(args) -> int:
    lists = [parse_scores(_read(p)) for p in args.scores]
    weights = [float(w) for w in args.weights.split(",")]
    first = lists[0]
    for i, lst in enumerate(lists[1:], start=1):
        if [(t.enroll, t.test) for t in lst] != [(t.enroll, t.test) for t in first]:
            raise ToolkitError(f"score file {i} is not aligned with file 0")
    fused = fuse([[t.score for t in lst] for lst in lists], weights)
    rows = [
        type(first[0])(t.enroll, t.test, float(v)) for t, v in zip(first, fused)
    ]
    _emit(write_scores(rows), args.out)
    return 0


def _labeled_scores(score_path, trials_path):
    scored = parse_scores(_read(score_path))
    trials = parse_trials(_read(trials_path))
    if len(trials) != len(scored):
        raise ToolkitError(
            f"{len(scored)} scores for {len(trials)} trials"
        )
    labels = []
    for s, t in zip(scored, trials):
        if (s.enroll, s.test) != (t.enroll, t.test):
            raise ToolkitError(
                f"score/trial mismatch: ({s.enroll}, {s.test}) vs ({t.enroll}, {t.test})"
            )
        if t.label is None:
            raise ToolkitError("trial list has no labels")
        labels.append(t.label)
    return [s.score for s in scored], labels


def _cmd_calibrate(args) -> int:
    scores, labels = _labeled_scores(args.scores, args.trials)
    a, b = calibrate(scores, labels)
    print(f"a={a:.6f} b={b:.6f}")
    if args.out:
        scored = parse_scores(_read(args.scores))
        rows = [type(s)(s.enroll, s.test, a * s.score + b) for s in scored]
        Path(args.out).write_text(write_scores(rows))
    return 0


def _cmd_eval_ver(args) -> int:
    scores, labels = _labeled_scores(args.scores, args.trials)
    config = DcfConfig(p_target=args.p_target, c_miss=args.c_miss, c_fa=args.c_fa)
    print(f"EER={eer(scores, labels):.4f} minDCF={min_dcf(scores, labels, config):.4f}")
    return 0


def _cmd_eval_dia(args) -> int:
    reference = parse_rttm(_read(args.ref))
    hypothesis = parse_rttm(_read(args.hyp))
    breakdown: DerBreakdown = der(reference, hypothesis, collar=args.collar)
    j = jer(reference, hypothesis, collar=args.collar)
    print(
        f"DER={breakdown.der * 100:.2f} MISS={breakdown.missed / breakdown.scored * 100:.2f} "
        f"FA={breakdown.false_alarm / breakdown.scored * 100:.2f} "
        f"CONF={breakdown.confusion / breakdown.scored * 100:.2f} JER={j * 100:.2f}"
    )
    return 0


def _add_config_flags(p: argparse.ArgumentParser, *names) -> None:
    flags = {
        "seed": dict(type=int),
        "win": dict(type=float),
        "hop": dict(type=float),
        "spectral_threshold": dict(type=float),
        "k_max": dict(type=int),
        "overlap_extend": dict(type=float),
        "asnorm_top": dict(type=int),
        "p_target": dict(type=float),
        "collar": dict(type=float),
    }
    p.add_argument("--config", help="key=value config file")
    for name in names:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, **flags[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diarkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="VAD-smooth posteriors and emit segments")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--out")
    _add_config_flags(p, "win", "hop")
    p.set_defaults(handler=_cmd_segment)

    p = sub.add_parser("diarize", help="cluster segment embeddings into RTTM")
    p.add_argument("--embeddings", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--segments")
    src.add_argument("--posteriors")
    p.add_argument("--overlap", help="overlap segments file")
    p.add_argument("--k", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    _add_config_flags(
        p, "seed", "win", "hop", "spectral_threshold", "k_max", "overlap_extend"
    )
    p.set_defaults(handler=_cmd_diarize)

    p = sub.add_parser("pseudo-label", help="iterative pseudo-label rounds")
    p.add_argument("--embeddings", nargs="+", required=True, help="one archive per round")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--rounds", help="per-round purification, e.g. 0.6:8,0.4:10")
    p.add_argument("--out-dir")
    _add_config_flags(p, "seed")
    p.set_defaults(handler=_cmd_pseudo_label)

    p = sub.add_parser("score", help="cosine-score a trial list")
    p.add_argument("--trials", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser("norm", help="AS-Norm a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--cohort", required=True, help="EMB1 archive of cohort embeddings")
    p.add_argument("--out")
    _add_config_flags(p, "asnorm_top")
    p.set_defaults(handler=_cmd_norm)

    p = sub.add_parser("fuse", help="weighted fusion of aligned score files")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--weights", required=True, help="comma-separated, e.g. 1,1.2,1")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_fuse)

    p = sub.add_parser("calibrate", help="affine logistic calibration")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", required=True, help="labeled trial list")
    p.add_argument("--out", help="write calibrated scores here")
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("eval-ver", help="EER / minDCF of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", required=True, help="labeled trial list")
    p.add_argument("--p-target", type=float, default=0.05)
    p.add_argument("--c-miss", type=float, default=1.0)
    p.add_argument("--c-fa", type=float, default=1.0)
    p.set_defaults(handler=_cmd_eval_ver)

    p = sub.add_parser("eval-dia", help="DER / JER of hypothesis vs reference RTTM")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.25)
    p.set_defaults(handler=_cmd_eval_dia)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ToolkitError, LookupError) as exc:
        print(f"diarkit {args.command}: {exc}", file=sys.stderr)
        return DATA_EXIT
    except FileNotFoundError as exc:
        print(f"diarkit {args.command}: {exc}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as exc:
        print(f"diarkit {args.command}: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())

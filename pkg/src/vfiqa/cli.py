"""Command-line entry points: score, train, eval, corr, annotate-auto,
select-patch, and serve."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np


def _cmd_score(args) -> int:
    from .autodiff import no_grad
    from .data import load_clip
    from .model import MetricModel, score

    model = MetricModel.load(args.model)
    a = load_clip(args.a)
    ref = load_clip(args.ref)
    with no_grad():
        d = score(a.frames, ref.frames, model).item()
    print(f"{d:.6f}")
    return 0


def _cmd_train(args) -> int:
    from .model import TrainConfig, train

    config = TrainConfig(lr=args.lr, batch_size=args.batch, epochs=args.epochs,
                         seed=args.seed)
    _, history = train(args.manifest, config, model_out_path=args.out)
    for stats in history:
        print(f"epoch {stats.epoch}: steps={stats.steps} mean_loss={stats.mean_loss:.6f}")
    print(f"saved model to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .autodiff import no_grad
    from .data import load_clip, read_manifest
    from .model import MetricModel, score
    from .stats import PairedResult, two_afc, write_results_json

    model = MetricModel.load(args.model)
    manifest = Path(args.manifest)
    triplets = [t for t in read_manifest(manifest) if t.h is not None]
    if not triplets:
        print("manifest holds no labeled triplets", file=sys.stderr)
        return 1
    root = manifest.parent

    def frames(ref: str) -> np.ndarray:
        p = Path(ref)
        return load_clip(p if p.is_absolute() else root / ref).frames

    results = []
    with no_grad():
        for t in triplets:
            r = frames(t.ref)
            d_a = score(frames(t.a), r, model).item()
            d_b = score(frames(t.b), r, model).item()
            results.append(PairedResult(t.id, d_a, d_b, t.h))
    afc = two_afc(results)
    print(f"two_afc: {afc:.6f} over {len(results)} triplets")
    if args.out:
        write_results_json(args.out, two_afc_score=afc)
        print(f"wrote {args.out}")
    return 0


def _cmd_corr(args) -> int:
    from .stats import rank_correlations, read_mos_csv, write_results_json

    report = rank_correlations(read_mos_csv(args.csv))
    print(f"srocc: {report.mean['srocc']:.6f}")
    print(f"plcc:  {report.mean['plcc']:.6f}")
    print(f"krocc: {report.mean['krocc']:.6f}")
    print(f"groups: {report.groups} (excluded: {len(report.excluded)})")
    if args.out:
        write_results_json(args.out, correlations=report)
        print(f"wrote {args.out}")
    return 0


def _cmd_annotate_auto(args) -> int:
    from .data import (MultiScalePixelMetric, auto_annotate, load_clip,
                       read_manifest, write_manifest)

    manifest = Path(args.manifest)
    triplets = read_manifest(manifest)
    root = manifest.parent
    metric = MultiScalePixelMetric()
    labeled = deferred = 0
    for t in triplets:
        if t.source != "unlabeled":
            continue

        def clip(ref):
            p = Path(ref)
            return load_clip(p if p.is_absolute() else root / ref)

        h = auto_annotate(clip(t.a), clip(t.b), clip(t.ref), metric, args.threshold)
        if h is None:
            deferred += 1
        else:
            t.h = h
            t.source = "auto"
            labeled += 1
    out = Path(args.out) if args.out else manifest
    write_manifest(out, triplets)
    print(f"labeled {labeled}, deferred {deferred} -> {out}")
    return 0


def _cmd_select_patch(args) -> int:
    from .data import load_clip, select_patch

    row, col = select_patch(load_clip(args.a), load_clip(args.b), patch=args.size)
    print(f"{row} {col}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.manifest, args.judgments, args.port, frontend_dir=args.frontend,
          host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfiqa",
                                     description="Perceptual quality metric for frame-interpolated video")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score one video against its reference")
    p.add_argument("--a", required=True, help="interpolated clip directory")
    p.add_argument("--ref", required=True, help="reference clip directory")
    p.add_argument("--model", required=True, help="weights file")
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("train", help="train the metric on a triplet manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="2AFC agreement of a model with a labeled manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="results JSON path")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("corr", help="rank correlations from a MOS csv")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", help="results JSON path")
    p.set_defaults(fn=_cmd_corr)

    p = sub.add_parser("annotate-auto", help="label decisive triplets with the bundled metric")
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float, default=0.15)
    p.add_argument("--out", help="write the updated manifest here instead of in place")
    p.set_defaults(fn=_cmd_annotate_auto)

    p = sub.add_parser("select-patch", help="highest-error patch between two clips")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--size", type=int, default=256)
    p.set_defaults(fn=_cmd_select_patch)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--judgments", default="judgments.jsonl")
    p.add_argument("--frontend", help="static frontend directory to mount at /")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

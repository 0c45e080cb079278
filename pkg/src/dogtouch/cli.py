"""Command-line front door.

Subcommands cover the whole desk workflow: synthesize datasets, train
and evaluate both models, translate histories, generate interaction
corpora, and run the live service (optionally with the built-in demo
touch source or static UI assets).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import frames
from .action_engine import load_action_table
from .classifier import (
    ClassifierConfig,
    evaluate,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .pipeline import (
    Pipeline,
    SegmentationConfig,
    load_session,
    replay_frames,
    save_session,
)
from .simulate import NoiseModel, generate_dataset, scripted_stream, split_dataset
from .taxonomy import load_taxonomy
from .translator import (
    GestureSentence,
    TranslatorConfig,
    bleu,
    generate_pairs,
    load_pairs,
    load_translator,
    make_pair_dataset,
    save_pairs,
    save_translator,
    train_translator,
    translate,
)


def _load_config(path, cls):
    if path is None:
        return cls()
    return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def _segmentation_args(parser: argparse.ArgumentParser):
    parser.add_argument("--activity-threshold", type=int, default=8)
    parser.add_argument("--mass-min", type=int, default=40)
    parser.add_argument("--min-active", type=int, default=2)
    parser.add_argument("--idle-gap", type=int, default=5)


def _segmentation_from(args) -> SegmentationConfig:
    return SegmentationConfig(
        activity_threshold=args.activity_threshold, mass_min=args.mass_min,
        min_active=args.min_active, idle_gap=args.idle_gap,
    )


def cmd_synth(args):
    taxonomy = load_taxonomy(args.taxonomy)
    noise = NoiseModel(baseline_std=args.noise_std, spike_probability=args.spike_prob,
                       seed=args.seed)
    dataset = generate_dataset(args.per_class, args.actors, args.seed, taxonomy, noise)
    started = time.time()
    count = frames.write_container(
        args.out, (frames.encode_window(w) for w in dataset.windows())
    )
    manifest_path = Path(args.out).with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(dataset.manifest(), indent=2), "utf-8")
    print(f"wrote {count} windows to {args.out} in {time.time() - started:.1f}s")
    print(f"manifest: {manifest_path}")


def _load_window_container(path):
    stacks, labels = [], []
    for record in frames.read_container(path):
        window = frames.decode_window(record)
        stacks.append(window.stack())
        labels.append(-1 if window.label is None else window.label)
    return np.array(stacks, dtype=np.uint8), np.array(labels, dtype=np.int64)


def cmd_train_classifier(args):
    taxonomy = load_taxonomy(args.taxonomy)
    config = _load_config(args.config, ClassifierConfig)
    if args.data:
        stacks, labels = _load_window_container(args.data)
    else:
        dataset = generate_dataset(args.per_class, args.actors, args.seed, taxonomy)
        train, _ = split_dataset(dataset, args.train_fraction, args.seed)
        print(f"synthesizing {len(train)} training windows...")
        stacks, labels = train.materialize()
    model, curve = train_classifier(stacks, labels, config, log=print)
    save_classifier(args.out, model, taxonomy)
    print(f"saved checkpoint to {args.out} (final loss {curve[-1]:.4f})")


def cmd_eval_classifier(args):
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_classifier(args.ckpt, taxonomy)
    stacks, labels = _load_window_container(args.data)
    report = evaluate(model, stacks, labels)
    print(report.summary())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict()), "utf-8")
        print(f"full report: {args.report}")
    if args.heatmap:
        _save_heatmap(report.confusion, args.heatmap)
        print(f"confusion heatmap: {args.heatmap}")


def _save_heatmap(confusion: np.ndarray, path: str):
    """Confusion matrix as a grayscale PNG (pure-stdlib fallback format: PGM)."""
    norm = confusion.astype(np.float64)
    norm = norm / max(norm.max(), 1)
    img = (255 * (1 - norm)).astype(np.uint8)
    scale = 6
    img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def cmd_gen_pairs(args):
    taxonomy = load_taxonomy(args.taxonomy)
    pairs = generate_pairs(taxonomy, args.count, args.seed,
                           alternative_rate=args.alternative_rate)
    save_pairs(args.out, pairs)
    print(f"wrote {len(pairs)} interaction pairs to {args.out}")


def cmd_train_translator(args):
    taxonomy = load_taxonomy(args.taxonomy)
    config = _load_config(args.config, TranslatorConfig)
    if args.pairs:
        pairs = load_pairs(args.pairs, taxonomy)
    else:
        pairs = generate_pairs(taxonomy, args.count, args.seed)
    train, _ = make_pair_dataset(pairs, args.train_fraction, args.seed)
    model, curve = train_translator(train, config, taxonomy, log=print)
    save_translator(args.out, model, taxonomy)
    print(f"saved checkpoint to {args.out} (final loss {curve[-1]:.4f})")


def cmd_eval_translator(args):
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_translator(args.ckpt, taxonomy)
    pairs = load_pairs(args.pairs, taxonomy)
    candidates = [translate(model, p.source, taxonomy) for p in pairs]
    references = [p.target for p in pairs]
    for n in range(1, args.max_n + 1):
        print(f"BLEU-{n}: {bleu(candidates, references, n):.4f}")


def cmd_translate(args):
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_translator(args.ckpt, taxonomy)
    sentence = GestureSentence(tuple(args.history.split()))
    decoded = translate(model, sentence, taxonomy)
    print(" ".join(decoded.words) if decoded.words else "<empty>")


def _build_pipeline(args):
    taxonomy = load_taxonomy(args.taxonomy)
    table = load_action_table(args.action_table, taxonomy)
    classifier = load_classifier(args.classifier, taxonomy)
    translator = load_translator(args.translator, taxonomy)
    return Pipeline(classifier, translator, taxonomy, table,
                    segmentation=_segmentation_from(args)), taxonomy


def cmd_serve(args):
    from .service import PipelineServer

    pipeline, taxonomy = _build_pipeline(args)
    server = PipelineServer(pipeline, host=args.bind, port=args.port,
                            ui_dir=args.ui).start()
    print(f"serving on {server.host}:{server.port}"
          + (f" (ui assets: {args.ui})" if args.ui else ""), flush=True)
    _serve_until_interrupt(server, args)


def cmd_demo(args):
    from .service import PipelineServer

    pipeline, taxonomy = _build_pipeline(args)
    server = PipelineServer(pipeline, host=args.bind, port=args.port,
                            ui_dir=args.ui).start()
    print(f"demo serving on {server.host}:{server.port}", flush=True)

    import threading

    def touch_source():
        noise = NoiseModel(seed=args.seed)
        period = 1.0 / frames.FRAME_RATE_HZ / max(args.speed, 1e-6)
        for canvas, _ in scripted_stream(taxonomy, seed=args.seed, noise=noise):
            server.submit_canvas(canvas)
            time.sleep(period)

    threading.Thread(target=touch_source, daemon=True).start()
    _serve_until_interrupt(server, args)


def _serve_until_interrupt(server, args):
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.close()
        if getattr(args, "session_out", None):
            save_session(args.session_out, server.pipeline.log)
            print(f"session log: {args.session_out}")


def cmd_replay(args):
    log = load_session(args.log)
    frames_only = [r for r in log.records if r.kind == "frame"]
    print(f"replaying {len(frames_only)} frames at {args.speed}x")
    if args.classifier and not args.translator:
        raise ValueError("--classifier requires --translator for re-inference")
    if args.classifier:
        pipeline, _ = _build_pipeline(args)
        for canvas in replay_frames(log, speed=args.speed):
            pipeline.feed(canvas)
        pipeline.flush()
        for record in pipeline.log.decision_records():
            print(f"tick {record.tick}: {record.kind} {json.dumps(record.payload)}")
    else:
        for canvas in replay_frames(log, speed=args.speed):
            pass
        for record in log.decision_records():
            print(f"tick {record.tick}: {record.kind} {json.dumps(record.payload)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dogtouch",
        description="Tactile human/robot-dog interaction pipeline tools",
    )
    parser.add_argument("--taxonomy", help="taxonomy config JSON (default: shipped)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a labeled gesture dataset")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--actors", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=2.0)
    p.add_argument("--spike-prob", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train-classifier", help="train the gesture classifier")
    p.add_argument("--data", help="dataset container (default: synthesize)")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--actors", type=int, default=3)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="ClassifierConfig JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("eval-classifier", help="evaluate a classifier checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="write the full EvalReport JSON here")
    p.add_argument("--heatmap", help="write a confusion heatmap image (PGM)")
    p.set_defaults(fn=cmd_eval_classifier)

    p = sub.add_parser("gen-pairs", help="generate a synthetic interaction corpus")
    p.add_argument("--count", type=int, default=1212)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alternative-rate", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_pairs)

    p = sub.add_parser("train-translator", help="train the action translator")
    p.add_argument("--pairs", help="interaction corpus file (default: synthesize)")
    p.add_argument("--count", type=int, default=1212)
    p.add_argument("--train-fraction", type=float, default=5 / 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="TranslatorConfig JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_translator)

    p = sub.add_parser("eval-translator", help="corpus BLEU of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--max-n", type=int, default=4)
    p.set_defaults(fn=cmd_eval_translator)

    p = sub.add_parser("translate", help="translate a gesture history")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--history", required=True, help='space-separated gesture words')
    p.set_defaults(fn=cmd_translate)

    for name, fn in (("serve", cmd_serve), ("demo", cmd_demo)):
        p = sub.add_parser(name, help=f"{name} the live pipeline")
        p.add_argument("--bind", default="127.0.0.1")
        p.add_argument("--port", type=int, default=7430)
        p.add_argument("--classifier", required=True)
        p.add_argument("--translator", required=True)
        p.add_argument("--action-table", help="action table JSON (default: shipped)")
        p.add_argument("--ui", help="directory of static UI assets to serve")
        p.add_argument("--session-out", help="write the session log here on exit")
        if name == "demo":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--speed", type=float, default=1.0)
        _segmentation_args(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("replay", help="re-emit a recorded session")
    p.add_argument("--log", required=True)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--classifier", help="re-run inference over the replayed frames")
    p.add_argument("--translator")
    p.add_argument("--action-table")
    _segmentation_args(p)
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

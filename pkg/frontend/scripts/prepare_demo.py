"""Train (and cache) the small demo checkpoints the UI tests run against.

Usage: python3 frontend/scripts/prepare_demo.py [--out DIR]
Prints the checkpoint paths on success. Retraining happens only when the
cache is missing; everything is seeded, so the artifacts are stable.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from dogtouch.action_engine import load_action_table
from dogtouch.classifier import (
    ClassifierConfig,
    load_classifier,
    save_classifier,
    train_classifier,
)
from dogtouch.simulate import ZERO_NOISE, generate_dataset
from dogtouch.taxonomy import load_taxonomy
from dogtouch.translator import (
    ActionSentence,
    GestureSentence,
    InteractionPair,
    TranslatorConfig,
    load_translator,
    save_translator,
    train_translator,
)

CLASSIFIER_CONFIG = ClassifierConfig(base_width=8, epochs=12, batch_size=32,
                                     learning_rate=3e-3, augment_shift=2, seed=11)
TRANSLATOR_CONFIG = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, epochs=160,
                                     batch_size=32, learning_rate=3e-3, seed=12)


def demo_grammar(taxonomy, table):
    standing_ok = [
        a.name for a in taxonomy.performable_actions
        if a.in_translation_vocab and "standing" in table.spec(a.name).valid_from
    ]
    rng = np.random.default_rng(1234)
    return {
        token: standing_ok[int(rng.integers(0, len(standing_ok)))]
        for token in taxonomy.gesture_vocab.content_tokens
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / ".cache"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clf_path = out / "demo-classifier.dtck"
    trn_path = out / "demo-translator.dtck"

    taxonomy = load_taxonomy()
    table = load_action_table(taxonomy=taxonomy)

    if not clf_path.exists():
        ds = generate_dataset(6, 1, seed=505, taxonomy=taxonomy, noise=ZERO_NOISE)
        stacks, labels = ds.materialize()
        model, _ = train_classifier(stacks, labels, CLASSIFIER_CONFIG)
        save_classifier(clf_path, model, taxonomy)
    else:
        load_classifier(clf_path, taxonomy)  # validate cache

    if not trn_path.exists():
        grammar = demo_grammar(taxonomy, table)
        pairs = [
            InteractionPair(GestureSentence((token,)), ActionSentence((action,)))
            for token, action in sorted(grammar.items())
        ]
        model, _ = train_translator(pairs, TRANSLATOR_CONFIG, taxonomy)
        save_translator(trn_path, model, taxonomy)
    else:
        load_translator(trn_path, taxonomy)

    print(f"classifier={clf_path}")
    print(f"translator={trn_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Shared fixtures: taxonomy, action table, and small overfit models.

The toy models are deliberately tiny (narrow CNN, small transformer)
but train on real synthesized windows / a real grammar, so closed-loop
tests exercise the genuine inference path.
"""
import numpy as np
import pytest

ACCEPTANCE_RESULTS: list = []


def record_criterion(name: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

from dogtouch.action_engine import load_action_table
from dogtouch.classifier import ClassifierConfig, train_classifier
from dogtouch.simulate import ZERO_NOISE, generate_dataset
from dogtouch.taxonomy import load_taxonomy
from dogtouch.translator import (
    ActionSentence,
    GestureSentence,
    InteractionPair,
    TranslatorConfig,
    train_translator,
)


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="session")
def action_table(taxonomy):
    return load_action_table(taxonomy=taxonomy)


@pytest.fixture(scope="session")
def toy_classifier(taxonomy):
    """Narrow, quickly trained classifier.

    Good enough to drive the pipeline plumbing (and to tell silence from
    touch); kind-level fidelity is covered by the acceptance experiment,
    which trains the real desk model.
    """
    ds = generate_dataset(4, 1, seed=404, taxonomy=taxonomy, noise=ZERO_NOISE)
    stacks, labels = ds.materialize()
    config = ClassifierConfig(base_width=8, epochs=10, batch_size=32,
                              learning_rate=3e-3, seed=2)
    model, curve = train_classifier(stacks, labels, config)
    assert curve[-1] < curve[0]
    return model


@pytest.fixture(scope="session")
def toy_grammar(taxonomy, action_table):
    """Gesture token -> action dispatchable from standing, seeded."""
    standing_ok = [
        a.name for a in taxonomy.performable_actions
        if a.in_translation_vocab and "standing" in action_table.spec(a.name).valid_from
    ]
    rng = np.random.default_rng(77)
    return {
        token: standing_ok[int(rng.integers(0, len(standing_ok)))]
        for token in taxonomy.gesture_vocab.content_tokens
    }


@pytest.fixture(scope="session")
def toy_translator(taxonomy, toy_grammar):
    """Transformer memorizing the toy grammar from single-word pairs."""
    pairs = [
        InteractionPair(GestureSentence((token,)), ActionSentence((action,)))
        for token, action in sorted(toy_grammar.items())
    ]
    config = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, epochs=160,
                              batch_size=32, learning_rate=3e-3, seed=3)
    model, _ = train_translator(pairs, config, taxonomy)
    return model

import math

import numpy as np
import pytest

from dogtouch.nn import UsageError, no_grad
from dogtouch.taxonomy import EOS_ID, PAD_ID, load_taxonomy
from dogtouch.translator import (
    ActionSentence,
    GestureSentence,
    InteractionPair,
    SentenceError,
    TranslatorConfig,
    bleu,
    build_translator,
    encode_pairs,
    generate_pairs,
    greedy_decode_ids,
    load_pairs,
    load_translator,
    make_pair_dataset,
    predict_action,
    save_pairs,
    save_translator,
    synthetic_grammar,
    train_translator,
    translate,
    validate_pair,
)

SMALL = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, epochs=150,
                         batch_size=16, learning_rate=3e-3, seed=0)


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="module")
def memorized(taxonomy):
    """A 10-pair corpus and a model trained to reproduce it."""
    pairs = generate_pairs(taxonomy, 10, seed=1)
    model, curve = train_translator(pairs, SMALL, taxonomy)
    return pairs, model, curve


class TestSentences:
    def test_word_cap(self):
        GestureSentence(tuple(["none"] * 18))
        with pytest.raises(SentenceError):
            GestureSentence(tuple(["none"] * 19))

    def test_tokens_wrap_bos_eos(self):
        s = ActionSentence(("sit", "nod"))
        assert s.tokens[0] == "<bos>" and s.tokens[-1] == "<eos>"

    def test_vocab_validation(self, taxonomy):
        good = InteractionPair(GestureSentence(("stroke_head",)), ActionSentence(("sit",)))
        validate_pair(good, taxonomy)
        bad = InteractionPair(GestureSentence(("fly_tail",)), ActionSentence(("sit",)))
        with pytest.raises(SentenceError):
            validate_pair(bad, taxonomy)
        # tumble is one of the four actions outside the 40-word vocabulary
        off_vocab = InteractionPair(GestureSentence(("stroke_head",)), ActionSentence(("tumble",)))
        with pytest.raises(SentenceError):
            validate_pair(off_vocab, taxonomy)


class TestSplit:
    def test_paper_arithmetic(self, taxonomy):
        pairs = generate_pairs(taxonomy, 1212, seed=0)
        train, test = make_pair_dataset(pairs, 5 / 6, seed=0)
        assert (len(train), len(test)) == (1010, 202)

    def test_tiny(self, taxonomy):
        pairs = generate_pairs(taxonomy, 6, seed=0)
        train, test = make_pair_dataset(pairs, 5 / 6, seed=0)
        assert (len(train), len(test)) == (5, 1)

    def test_deterministic_and_disjoint(self, taxonomy):
        pairs = generate_pairs(taxonomy, 30, seed=2)
        a = make_pair_dataset(pairs, 0.5, seed=5)
        b = make_pair_dataset(pairs, 0.5, seed=5)
        assert a == b
        train, test = a
        assert len(train) + len(test) == 30
        ids = {id(p) for p in train} | {id(p) for p in test}
        assert len(ids) == 30


class TestTraining:
    def test_zero_epochs_equals_init(self, taxonomy):
        pairs = generate_pairs(taxonomy, 4, seed=3)
        cfg = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, epochs=0, seed=11)
        model, curve = train_translator(pairs, cfg, taxonomy)
        fresh = build_translator(cfg, taxonomy)
        assert curve == []
        for (na, pa), (nb, pb) in zip(model.named_parameters(), fresh.named_parameters()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_empty_corpus_rejected(self, taxonomy):
        with pytest.raises(UsageError):
            train_translator([], SMALL, taxonomy)

    def test_oversized_sentence_fails_at_load(self, taxonomy):
        # the sentence type enforces the cap before training can start
        with pytest.raises(SentenceError):
            InteractionPair(
                GestureSentence(tuple(["none"] * 21)), ActionSentence(("sit",))
            )

    def test_loss_decreases(self, memorized):
        _, _, curve = memorized
        assert curve[-1] < curve[0]

    def test_memorizes_corpus_next_token(self, taxonomy, memorized):
        pairs, model, _ = memorized
        src, tgt_in, tgt_out = encode_pairs(pairs, taxonomy)
        with no_grad():
            logits = model(src, tgt_in).data
        pred = logits.argmax(axis=-1)
        keep = tgt_out != PAD_ID
        assert (pred[keep] == tgt_out[keep]).all(), "next-token accuracy below 100%"

    def test_memorized_translation_exact(self, taxonomy, memorized):
        pairs, model, _ = memorized
        for pair in pairs:
            assert translate(model, pair.source, taxonomy).words == pair.target.words


class TestDecoding:
    def test_wellformed_on_untrained_model(self, taxonomy):
        cfg = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, seed=5)
        model = build_translator(cfg, taxonomy)
        rng = np.random.default_rng(0)
        tokens = list(taxonomy.gesture_vocab.content_tokens)
        for _ in range(10):
            words = tuple(rng.choice(tokens, size=rng.integers(1, 19)))
            ids = greedy_decode_ids(
                model,
                np.array([1] + [taxonomy.gesture_vocab.encode(w) for w in words] + [2]
                         + [0] * (20 - 2 - len(words)), dtype=np.int64),
            )
            assert ids[0] == 1
            assert ids[-1] == EOS_ID
            assert len(ids) <= 20

    def test_deterministic(self, taxonomy, memorized):
        pairs, model, _ = memorized
        a = translate(model, pairs[0].source, taxonomy)
        b = translate(model, pairs[0].source, taxonomy)
        assert a == b

    def test_decoder_causality(self, taxonomy):
        # logits at step t must ignore decoder inputs after t
        cfg = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, seed=6)
        model = build_translator(cfg, taxonomy)
        src = np.array([[1, 5, 9, 2, 0, 0]], dtype=np.int64)
        tgt_a = np.array([[1, 4, 7, 3, 8]], dtype=np.int64)
        tgt_b = tgt_a.copy()
        tgt_b[0, 3:] = [9, 5]  # tamper only with the future
        with no_grad():
            la = model(src, tgt_a).data
            lb = model(src, tgt_b).data
        assert np.allclose(la[0, :3], lb[0, :3], atol=1e-5)


class TestPredictAction:
    def test_overfit_single_pair(self, taxonomy):
        pair = generate_pairs(taxonomy, 1, seed=9)[0]
        cfg = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, epochs=120,
                               batch_size=1, learning_rate=3e-3, seed=1)
        model, _ = train_translator([pair], cfg, taxonomy)
        action, fallback = predict_action(model, list(pair.source.words), taxonomy)
        assert action.name == pair.target.words[-1]
        assert not fallback

    def test_fallback_on_empty_decode(self, taxonomy):
        cfg = TranslatorConfig(model_dim=32, ff_dim=64, head_count=2, seed=7)
        model = build_translator(cfg, taxonomy)
        model.out.bias.data[:] = -100.0
        model.out.bias.data[EOS_ID] = 100.0  # every step decodes straight to EOS
        action, fallback = predict_action(model, ["stroke_head"], taxonomy)
        assert action.name == "idle"
        assert fallback

    def test_history_truncated_to_18(self, taxonomy, memorized):
        _, model, _ = memorized
        tokens = list(taxonomy.gesture_vocab.content_tokens)
        history = [tokens[i % len(tokens)] for i in range(25)]
        long_action, _ = predict_action(model, history, taxonomy)
        short_action, _ = predict_action(model, history[-18:], taxonomy)
        assert long_action.name == short_action.name

    def test_empty_history_rejected(self, taxonomy, memorized):
        _, model, _ = memorized
        with pytest.raises(UsageError):
            predict_action(model, [], taxonomy)


class TestBleu:
    def test_identity_is_one(self):
        corpus = [["sit", "nod"], ["stand"], ["sit", "sit", "stand"]]
        assert bleu(corpus, corpus, 4) == pytest.approx(1.0)

    def test_clipped_unigram_oracle(self):
        # hand count: candidate 'the'*7 vs 'the cat is on the mat':
        # clipped matches 2 of 7, candidate longer than reference -> no penalty
        cand = [["the"] * 7]
        ref = [["the", "cat", "is", "on", "the", "mat"]]
        assert bleu(cand, ref, 1) == pytest.approx(2 / 7)

    def test_two_gram_hand_value(self):
        # 1-gram: 2/3; 2-gram: 1/2; same lengths -> sqrt(1/3)
        assert bleu([["a", "b", "c"]], [["a", "b", "d"]], 2) == pytest.approx(math.sqrt(1 / 3))

    def test_brevity_penalty(self):
        # all matches but half length: p1 = 1, bp = exp(1 - 2) = e^-1
        assert bleu([["a"]], [["a", "b"]], 1) == pytest.approx(math.exp(-1) * 1.0)

    def test_empty_candidate_scores_zero(self):
        assert bleu([[]], [["a"]], 1) == 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(UsageError):
            bleu([], [], 1)
        with pytest.raises(UsageError):
            bleu([["a"]], [["a"], ["b"]], 1)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(12)
        alphabet = [f"w{i}" for i in range(10)]
        cands = [[alphabet[i] for i in rng.integers(0, 10, size=rng.integers(1, 8))]
                 for _ in range(20)]
        refs = [[alphabet[i] for i in rng.integers(0, 10, size=rng.integers(1, 8))]
                for _ in range(20)]
        mapping = {w: f"x{i}" for i, w in enumerate(reversed(alphabet))}
        relabel = lambda corpus: [[mapping[w] for w in s] for s in corpus]
        for n in (1, 2, 3):
            assert bleu(cands, refs, n) == pytest.approx(bleu(relabel(cands), relabel(refs), n))

    def test_range(self):
        rng = np.random.default_rng(13)
        words = ["a", "b", "c", "d"]
        for _ in range(30):
            cands = [[words[i] for i in rng.integers(0, 4, size=rng.integers(0, 6))]]
            refs = [[words[i] for i in rng.integers(0, 4, size=rng.integers(1, 6))]]
            score = bleu(cands, refs, 2)
            assert 0.0 <= score <= 1.0


class TestGrammarAndIO:
    def test_grammar_deterministic(self, taxonomy):
        assert synthetic_grammar(taxonomy, 5) == synthetic_grammar(taxonomy, 5)
        assert synthetic_grammar(taxonomy, 5) != synthetic_grammar(taxonomy, 6)

    def test_pairs_follow_grammar(self, taxonomy):
        grammar = synthetic_grammar(taxonomy, 8)
        pairs = generate_pairs(taxonomy, 50, seed=8, grammar=grammar)
        for p in pairs:
            assert len(p.source.words) == len(p.target.words)
            for s, t in zip(p.source.words, p.target.words):
                assert grammar[s] == t

    def test_alternative_rate_perturbs(self, taxonomy):
        grammar = synthetic_grammar(taxonomy, 8)
        noisy = generate_pairs(taxonomy, 200, seed=8, grammar=grammar, alternative_rate=0.5)
        deviations = sum(
            grammar[s] != t for p in noisy for s, t in zip(p.source.words, p.target.words)
        )
        assert deviations > 0

    def test_corpus_file_round_trip(self, taxonomy, tmp_path):
        pairs = generate_pairs(taxonomy, 12, seed=4)
        path = tmp_path / "pairs.tsv"
        save_pairs(path, pairs)
        again = load_pairs(path, taxonomy)
        assert again == pairs

    def test_load_reports_line(self, taxonomy, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("stroke_head\tsit\nbogus_word\tsit\n", encoding="utf-8")
        with pytest.raises(SentenceError, match="bad.tsv:2"):
            load_pairs(path, taxonomy)

    def test_checkpoint_round_trip(self, taxonomy, tmp_path, memorized):
        pairs, model, _ = memorized
        path = tmp_path / "translator.dtck"
        save_translator(path, model, taxonomy)
        clone = load_translator(path, taxonomy)
        assert translate(clone, pairs[0].source, taxonomy).words == pairs[0].target.words

"""End-to-end CLI smoke tests with tiny configs."""
import json

import pytest

from dogtouch.cli import main
from dogtouch.frames import decode_window, read_container
from dogtouch.pipeline import SessionLog, SessionRecord, save_session
from dogtouch.simulate import ZERO_NOISE, scripted_stream


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, taxonomy):
    """Artifacts shared along the CLI chain."""
    root = tmp_path_factory.mktemp("cli")
    assert main([
        "synth", "--per-class", "1", "--actors", "1", "--seed", "5",
        "--noise-std", "0", "--spike-prob", "0", "--out", str(root / "data.tdc"),
    ]) == 0
    clf_config = root / "clf.json"
    clf_config.write_text(json.dumps({
        "base_width": 8, "epochs": 2, "batch_size": 32, "learning_rate": 0.003, "seed": 1,
    }))
    assert main([
        "train-classifier", "--data", str(root / "data.tdc"),
        "--config", str(clf_config), "--out", str(root / "clf.dtck"),
    ]) == 0
    trn_config = root / "trn.json"
    trn_config.write_text(json.dumps({
        "model_dim": 32, "ff_dim": 64, "head_count": 2, "epochs": 2,
        "batch_size": 16, "seed": 1,
    }))
    assert main([
        "gen-pairs", "--count", "24", "--seed", "4", "--out", str(root / "pairs.tsv"),
    ]) == 0
    assert main([
        "train-translator", "--pairs", str(root / "pairs.tsv"),
        "--config", str(trn_config), "--out", str(root / "trn.dtck"),
    ]) == 0
    return root


class TestSynth:
    def test_container_and_manifest(self, workdir):
        records = list(read_container(workdir / "data.tdc"))
        assert len(records) == 81
        window = decode_window(records[0])
        assert window.label is not None
        manifest = json.loads((workdir / "data.manifest.json").read_text())
        assert manifest["count"] == 81
        assert manifest["seed"] == 5


class TestClassifierCommands:
    def test_eval_classifier(self, workdir, capsys):
        assert main([
            "eval-classifier", "--ckpt", str(workdir / "clf.dtck"),
            "--data", str(workdir / "data.tdc"),
            "--report", str(workdir / "report.json"),
            "--heatmap", str(workdir / "confusion.pgm"),
        ]) == 0
        out = capsys.readouterr().out
        assert "accuracy" in out
        report = json.loads((workdir / "report.json").read_text())
        assert len(report["confusion"]) == 81
        assert (workdir / "confusion.pgm").read_bytes().startswith(b"P5\n")


class TestTranslatorCommands:
    def test_eval_translator(self, workdir, capsys):
        assert main([
            "eval-translator", "--ckpt", str(workdir / "trn.dtck"),
            "--pairs", str(workdir / "pairs.tsv"), "--max-n", "2",
        ]) == 0
        out = capsys.readouterr().out
        assert "BLEU-1" in out and "BLEU-2" in out

    def test_translate_history(self, workdir, capsys):
        assert main([
            "translate", "--ckpt", str(workdir / "trn.dtck"),
            "--history", "stroke_head pat_back_front",
        ]) == 0
        assert capsys.readouterr().out.strip()

    def test_bad_history_word_is_an_error(self, workdir, capsys):
        assert main([
            "translate", "--ckpt", str(workdir / "trn.dtck"), "--history", "no_such_word",
        ]) == 1
        assert "error" in capsys.readouterr().err


class TestReplayCommand:
    def test_replay_without_inference(self, workdir, taxonomy, capsys):
        stream = [c for c, _ in scripted_stream(taxonomy, seed=3, noise=ZERO_NOISE,
                                                gestures=1)]
        log = SessionLog(records=[SessionRecord(c.tick, "frame", c) for c in stream])
        log.records.append(SessionRecord(99, "gesture", {"tick": 99, "token": "pat_head"}))
        path = workdir / "session.tdc"
        save_session(path, log)
        assert main(["replay", "--log", str(path), "--speed", "0"]) == 0
        out = capsys.readouterr().out
        assert "replaying" in out and "pat_head" in out

    def test_replay_with_reinference(self, workdir, capsys):
        assert main([
            "replay", "--log", str(workdir / "session.tdc"), "--speed", "0",
            "--classifier", str(workdir / "clf.dtck"),
            "--translator", str(workdir / "trn.dtck"),
        ]) == 0
        out = capsys.readouterr().out
        assert "gesture" in out  # re-inference produced fresh records

    def test_missing_translator_rejected(self, workdir, capsys):
        assert main([
            "replay", "--log", str(workdir / "session.tdc"), "--speed", "0",
            "--classifier", str(workdir / "clf.dtck"),
        ]) == 1
        assert "requires --translator" in capsys.readouterr().err

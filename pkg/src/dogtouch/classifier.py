"""81-class gesture classifier: residual CNN over 20-frame windows.

Windows enter as 20-channel 64x128 images (frame index = channel). The
desk default keeps one block per stage for CPU tractability; the
classic four-stage [3, 4, 6, 3] layout is available via
ClassifierConfig.paper_shape(). Normalization is per-channel over
spatial dims (batch-size independent) rather than batch statistics,
a deliberate deviation suited to tiny desk-scale batches.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .frames import CANVAS_COLS, CANVAS_ROWS, GestureWindow, WINDOW_FRAMES
from .nn import Adam, ChannelNorm, Conv2d, Linear, MaxPool2d, Module, ResidualBlock
from .nn.tensor import Tensor, cross_entropy, no_grad, relu
from .taxonomy import Taxonomy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    input_height: int = CANVAS_ROWS
    input_width: int = CANVAS_COLS
    input_channels: int = WINDOW_FRAMES
    class_count: int = 81
    stage_blocks: tuple = (1, 1, 1, 1)
    base_width: int = 16
    epochs: int = 12
    batch_size: int = 32
    learning_rate: float = 2e-3
    lr_floor_scale: float = 0.05  # cosine decay endpoint as a fraction of learning_rate
    augment_shift: int = 0   # random temporal shift up to +/- N frames (off by default)
    augment_flip: bool = False  # horizontal mirror; breaks left/right parts, keep off
    seed: int = 0

    @classmethod
    def paper_shape(cls, **overrides) -> "ClassifierConfig":
        """The full-depth residual layout; slow on CPU but available."""
        return cls(stage_blocks=(3, 4, 6, 3), base_width=64, **overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_blocks"] = list(self.stage_blocks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        d = dict(d)
        if "stage_blocks" in d:
            d["stage_blocks"] = tuple(d["stage_blocks"])
        return cls(**d)


class GestureClassifier(Module):
    def __init__(self, config: ClassifierConfig, rng):
        if len(config.stage_blocks) != 4:
            raise ConfigError(f"need 4 stage block counts, got {config.stage_blocks}")
        self.config = config
        w = config.base_width
        self.stem = Conv2d(config.input_channels, w, 3, rng, stride=2, padding=1, bias=False)
        self.stem_norm = ChannelNorm(w)
        self.pool = MaxPool2d(2)
        widths = [w, 2 * w, 4 * w, 8 * w]
        self.stages = []
        in_ch = w
        for stage_idx, (blocks, out_ch) in enumerate(zip(config.stage_blocks, widths)):
            for block_idx in range(blocks):
                stride = 2 if (stage_idx > 0 and block_idx == 0) else 1
                self.stages.append(ResidualBlock(in_ch, out_ch, rng, stride=stride))
                in_ch = out_ch
        self.head = Linear(widths[-1], config.class_count, rng)

    def forward(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        expected = (self.config.input_channels, self.config.input_height, self.config.input_width)
        if x.shape[1:] != expected:
            raise nn.ShapeError(f"classifier input {x.shape[1:]} != expected {expected}")
        h = self.pool(relu(self.stem_norm(self.stem(x))))
        for block in self.stages:
            h = block(h)
        h = h.mean(axis=(2, 3))
        logits = self.head(h)
        assert logits.shape == (n, self.config.class_count)
        return logits


def build_classifier(config: ClassifierConfig, taxonomy: Taxonomy | None = None,
                     seed: int | None = None) -> GestureClassifier:
    """Seeded deterministic construction; validates class count vs taxonomy."""
    if taxonomy is not None and config.class_count != len(taxonomy.classes):
        raise ConfigError(
            f"config class_count {config.class_count} != taxonomy classes {len(taxonomy.classes)}"
        )
    rng = np.random.default_rng(np.random.SeedSequence((config.seed if seed is None else seed, 0xC1)))
    return GestureClassifier(config, rng)


def window_to_tensor(window: GestureWindow) -> np.ndarray:
    """One window as a float32 (20, 64, 128) array scaled to [0, 1]."""
    return window.stack().astype(np.float32) / 255.0


def batch_to_tensor(stacks: np.ndarray) -> np.ndarray:
    """uint8 (n, 20, 64, 128) -> float32 in [0, 1]."""
    return stacks.astype(np.float32) / 255.0


def predict_logits(model: GestureClassifier, stacks: np.ndarray,
                   batch_size: int = 64) -> np.ndarray:
    """Forward a uint8 window batch without building the tape."""
    outputs = []
    with no_grad():
        for lo in range(0, len(stacks), batch_size):
            x = Tensor(batch_to_tensor(stacks[lo : lo + batch_size]))
            outputs.append(model(x).data)
    return np.concatenate(outputs) if outputs else np.zeros((0, model.config.class_count))


def predict_window(model: GestureClassifier, window: GestureWindow) -> tuple[int, float]:
    """(class_id, confidence) for one window; ties break to the lowest id."""
    logits = predict_logits(model, window.stack()[None])[0]
    shifted = logits - logits.max()
    probs = np.exp(shifted) / np.exp(shifted).sum()
    class_id = int(logits.argmax())
    return class_id, float(probs[class_id])


def _augment(batch: np.ndarray, config: ClassifierConfig, rng) -> np.ndarray:
    if config.augment_shift:
        shifted = np.zeros_like(batch)
        for i in range(len(batch)):
            k = int(rng.integers(-config.augment_shift, config.augment_shift + 1))
            if k > 0:
                shifted[i, k:] = batch[i, :-k]
            elif k < 0:
                shifted[i, :k] = batch[i, -k:]
            else:
                shifted[i] = batch[i]
        batch = shifted
    if config.augment_flip:
        flip = rng.random(len(batch)) < 0.5
        batch = batch.copy()
        batch[flip] = batch[flip, :, :, ::-1]
    return batch


def train_classifier(stacks: np.ndarray, labels: np.ndarray, config: ClassifierConfig,
                     log=None) -> tuple[GestureClassifier, list[float]]:
    """Minibatch Adam training; returns the model and per-epoch mean loss.

    Deterministic for a fixed config seed: initialization, shuffles,
    augmentation draws and batch math all derive from it.
    """
    if len(stacks) == 0:
        raise nn.UsageError("training set is empty")
    if len(stacks) != len(labels):
        raise nn.ShapeError(f"{len(stacks)} windows vs {len(labels)} labels")
    model = build_classifier(config)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    curve: list[float] = []
    floor = config.learning_rate * config.lr_floor_scale
    augmenting = config.augment_shift or config.augment_flip
    for epoch in range(config.epochs):
        if config.epochs > 1:
            cos = 0.5 * (1 + np.cos(np.pi * epoch / (config.epochs - 1)))
            optimizer.lr = floor + (config.learning_rate - floor) * cos
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xB0, epoch)))
        order = rng.permutation(len(stacks))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch = stacks[idx]
            if augmenting:
                batch = _augment(batch, config, rng)
            x = Tensor(batch_to_tensor(batch))
            loss = cross_entropy(model(x), labels[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        curve.append(float(np.mean(losses)))
        if log:
            log(f"epoch {epoch + 1}/{config.epochs} loss {curve[-1]:.4f}")
    return model, curve


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # (classes, classes), rows = true class
    precision: np.ndarray
    recall: np.ndarray

    def summary(self) -> str:
        lines = [f"accuracy {self.accuracy:.4f}"]
        worst = np.argsort(self.recall)[:5]
        for c in worst:
            lines.append(f"  class {c}: precision {self.precision[c]:.3f} recall {self.recall[c]:.3f}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
        }


def evaluate(model: GestureClassifier, stacks: np.ndarray, labels: np.ndarray,
             batch_size: int = 64) -> EvalReport:
    if len(stacks) == 0:
        raise nn.UsageError("evaluation set is empty")
    k = model.config.class_count
    predictions = predict_logits(model, stacks, batch_size).argmax(axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    diag = np.diag(confusion).astype(np.float64)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
    accuracy = float(diag.sum() / confusion.sum())
    return EvalReport(accuracy=accuracy, confusion=confusion, precision=precision, recall=recall)


CHECKPOINT_KIND = "gesture-classifier"


def save_classifier(path, model: GestureClassifier, taxonomy: Taxonomy):
    nn.save_model(path, model, meta={
        "kind": CHECKPOINT_KIND,
        "config": model.config.to_dict(),
        "taxonomy_fingerprint": taxonomy.fingerprint(),
    })


def load_classifier(path, taxonomy: Taxonomy) -> GestureClassifier:
    state, meta = nn.load_checkpoint(path)
    if not meta or meta.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{path} is not a classifier checkpoint")
    if meta["taxonomy_fingerprint"] != taxonomy.fingerprint():
        raise ConfigError("checkpoint was trained against a different taxonomy")
    config = ClassifierConfig.from_dict(meta["config"])
    model = build_classifier(config, taxonomy)
    model.load_state_dict(state)
    return model

"""The live loop: canvases in, gesture/action records out.

Touch events are segmented online from the canvas stream: a frame is
"active" when its above-threshold pixel mass reaches mass_min; an event
opens after min_active consecutive active frames and closes once
idle_gap consecutive silent frames pass (or the stream ends). Each
event is windowed to 20 frames (centered, zero-padded when short),
classified, appended to the gesture history and translated into a dog
action that the action engine dispatches.

Everything is keyed to the frame tick; wall-clock pacing exists only at
the transport edge, so replaying a recorded session reproduces the
gesture/action records bit for bit.
"""
from __future__ import annotations

import json
import struct
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .action_engine import (
    ActionCommand,
    ActionTable,
    DogState,
    apply_command,
    dispatch,
    step,
)
from .classifier import GestureClassifier, predict_window
from .frames import (
    CANVAS_COLS,
    CANVAS_ROWS,
    GestureWindow,
    TactileCanvas,
    WINDOW_FRAMES,
    read_container,
    write_container,
)
from .taxonomy import Taxonomy
from .translator import Translator, predict_action

RECORD_FRAME = 0x01
RECORD_GESTURE = 0x10
RECORD_ACTION = 0x11
RECORD_REJECTION = 0x12

_KIND_NAMES = {
    RECORD_FRAME: "frame",
    RECORD_GESTURE: "gesture",
    RECORD_ACTION: "action",
    RECORD_REJECTION: "rejection",
}


class SessionLogError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentationConfig:
    activity_threshold: int = 8  # 8-bit pixel floor; pixels above it count
    mass_min: int = 40           # summed above-threshold mass for an active frame
    min_active: int = 2          # consecutive active frames that open an event
    idle_gap: int = 5            # consecutive silent frames that close an event

    def __post_init__(self):
        if min(self.activity_threshold, self.mass_min, self.min_active, self.idle_gap) < 0:
            raise ValueError("segmentation thresholds must be non-negative")


def frame_mass(pixels: np.ndarray, config: SegmentationConfig) -> int:
    """Summed value of pixels above the activity threshold."""
    above = pixels > config.activity_threshold
    return int(pixels[above].astype(np.int64).sum())


def frame_active(pixels: np.ndarray, config: SegmentationConfig) -> bool:
    return frame_mass(pixels, config) >= config.mass_min


@dataclass(frozen=True)
class TouchEvent:
    start_tick: int
    end_tick: int
    window: GestureWindow
    predicted_class: int | None = None
    class_token: str | None = None
    confidence: float | None = None


def build_event_window(span_frames) -> GestureWindow:
    """The 20 frames best covering an active span.

    Longer spans are center-cropped; shorter ones are zero-padded
    symmetrically. Window ticks are renumbered consecutively so the
    padded frames fit; the event keeps the true span boundaries.
    """
    frames = list(span_frames)
    n = len(frames)
    if n >= WINDOW_FRAMES:
        offset = (n - WINDOW_FRAMES) // 2
        picked = frames[offset : offset + WINDOW_FRAMES]
        base = picked[0].tick
        canvases = [TactileCanvas(base + i, f.pixels) for i, f in enumerate(picked)]
        return GestureWindow(frames=tuple(canvases))
    left = (WINDOW_FRAMES - n) // 2
    base = max(frames[0].tick - left, 0)
    zeros = np.zeros((CANVAS_ROWS, CANVAS_COLS), dtype=np.uint8)
    canvases = []
    for i in range(WINDOW_FRAMES):
        j = i - left
        pixels = frames[j].pixels if 0 <= j < n else zeros
        canvases.append(TactileCanvas(base + i, pixels))
    return GestureWindow(frames=tuple(canvases))


class OnlineSegmenter:
    """Streaming touch-event segmentation; no lookahead beyond idle_gap."""

    def __init__(self, config: SegmentationConfig):
        self.config = config
        self._streak: list[TactileCanvas] = []  # consecutive active frames while idle
        self._span: list[TactileCanvas] = []    # frames of the open event's active span
        self._open = False
        self._silent = 0

    def feed(self, canvas: TactileCanvas) -> list[TouchEvent]:
        active = frame_active(canvas.pixels, self.config)
        if not self._open:
            if active:
                self._streak.append(canvas)
                if len(self._streak) >= self.config.min_active:
                    self._open = True
                    self._span = list(self._streak)
                    self._streak = []
                    self._silent = 0
            else:
                self._streak = []
            return []
        if active:
            self._span.append(canvas)
            self._silent = 0
            return []
        self._silent += 1
        if self._silent >= self.config.idle_gap:
            return [self._close()]
        return []

    def flush(self) -> list[TouchEvent]:
        """Close any open event at stream end."""
        if self._open:
            return [self._close()]
        self._streak = []
        return []

    def _close(self) -> TouchEvent:
        span = self._span
        self._span = []
        self._open = False
        self._silent = 0
        return TouchEvent(
            start_tick=span[0].tick,
            end_tick=span[-1].tick,
            window=build_event_window(span),
        )


@dataclass(frozen=True)
class SessionRecord:
    tick: int
    kind: str   # frame | gesture | action | rejection
    payload: object  # TactileCanvas for frames, dict otherwise


@dataclass
class SessionLog:
    records: list = field(default_factory=list)
    dropped_frames: int = 0

    def of_kind(self, kind: str) -> list:
        return [r for r in self.records if r.kind == kind]

    def decision_records(self) -> list:
        """Everything except raw frames; the replay-invariant part."""
        return [r for r in self.records if r.kind != "frame"]


class Pipeline:
    """Single-threaded inference core; owns the models and the dog state."""

    def __init__(self, classifier: GestureClassifier, translator: Translator,
                 taxonomy: Taxonomy, action_table: ActionTable,
                 segmentation: SegmentationConfig | None = None,
                 history_capacity: int = 18, record_frames: bool = True):
        if classifier.config.class_count != len(taxonomy.classes):
            raise ValueError(
                f"classifier emits {classifier.config.class_count} classes, "
                f"taxonomy defines {len(taxonomy.classes)}"
            )
        self.classifier = classifier
        self.translator = translator
        self.taxonomy = taxonomy
        self.action_table = action_table
        self.segmenter = OnlineSegmenter(segmentation or SegmentationConfig())
        self.history: deque = deque(maxlen=history_capacity)
        self.dog = DogState()
        self.record_frames = record_frames
        self.log = SessionLog()
        self._last_tick: int | None = None
        self.event_seconds: list = []  # per-event handling latency

    def feed(self, canvas: TactileCanvas) -> list[SessionRecord]:
        """Advance one tick; returns the records this canvas produced."""
        out: list[SessionRecord] = []
        if self.record_frames:
            out.append(SessionRecord(canvas.tick, "frame", canvas))
        if self._last_tick is not None and canvas.tick > self._last_tick:
            self.dog = step(self.dog, canvas.tick - self._last_tick)
        self._last_tick = canvas.tick
        for event in self.segmenter.feed(canvas):
            out.extend(self._handle_event(event, canvas.tick))
        self.log.records.extend(out)
        return out

    def flush(self) -> list[SessionRecord]:
        out: list[SessionRecord] = []
        tick = self._last_tick if self._last_tick is not None else 0
        for event in self.segmenter.flush():
            out.extend(self._handle_event(event, tick))
        self.log.records.extend(out)
        return out

    def _handle_event(self, event: TouchEvent, tick: int) -> list[SessionRecord]:
        started = time.perf_counter()
        class_id, confidence = predict_window(self.classifier, event.window)
        gesture_class = self.taxonomy.class_by_id(class_id)
        token = gesture_class.token
        records = [SessionRecord(tick, "gesture", {
            "tick": tick,
            "start_tick": event.start_tick,
            "end_tick": event.end_tick,
            "class_id": class_id,
            "token": token,
            "kind": gesture_class.kind.name,
            "part": gesture_class.part.name if gesture_class.part else None,
            "confidence": round(confidence, 6),
        })]
        if gesture_class.kind.requires_part:
            self.history.append(token)
            action, fallback = predict_action(self.translator, list(self.history), self.taxonomy)
            outcome = dispatch(self.dog, action.name, self.action_table, self.taxonomy)
            if isinstance(outcome, ActionCommand):
                self.dog = apply_command(self.dog, outcome)
                records.append(SessionRecord(tick, "action", {
                    "tick": tick,
                    "action": outcome.action,
                    "duration_ticks": outcome.duration_ticks,
                    "resulting_posture": outcome.resulting_posture,
                    "motor_params": dict(outcome.motor_params),
                    "trigger": token,
                    "fallback": fallback,
                }))
            else:
                records.append(SessionRecord(tick, "rejection", {
                    "tick": tick,
                    "action": outcome.action,
                    "reason": outcome.reason,
                    "trigger": token,
                }))
        self.event_seconds.append(time.perf_counter() - started)
        return records

    def state_snapshot(self) -> dict:
        return {
            "tick": self._last_tick if self._last_tick is not None else -1,
            "posture": self.dog.posture,
            "current_action": self.dog.current_action,
            "remaining_ticks": self.dog.remaining_ticks,
            "history": list(self.history),
        }


def run_pipeline(canvases, classifier, translator, taxonomy, action_table,
                 segmentation: SegmentationConfig | None = None,
                 record_frames: bool = True) -> SessionLog:
    """Drive a Pipeline over a finite canvas stream and return its log."""
    pipe = Pipeline(classifier, translator, taxonomy, action_table,
                    segmentation=segmentation, record_frames=record_frames)
    for canvas in canvases:
        pipe.feed(canvas)
    pipe.flush()
    return pipe.log


# --- session log files -----------------------------------------------------------

_FRAME_HEAD = struct.Struct("<q")


def _encode_record(record: SessionRecord) -> bytes:
    if record.kind == "frame":
        canvas: TactileCanvas = record.payload
        return bytes([RECORD_FRAME]) + _FRAME_HEAD.pack(canvas.tick) + canvas.pixels.tobytes()
    tag = {"gesture": RECORD_GESTURE, "action": RECORD_ACTION,
           "rejection": RECORD_REJECTION}[record.kind]
    blob = json.dumps(record.payload, sort_keys=True, separators=(",", ":"))
    return bytes([tag]) + _FRAME_HEAD.pack(record.tick) + blob.encode("utf-8")


def _decode_record(data: bytes, index: int) -> SessionRecord:
    if not data:
        raise SessionLogError(f"record {index}: empty")
    tag = data[0]
    if tag not in _KIND_NAMES:
        raise SessionLogError(f"record {index}: unknown tag 0x{tag:02x}")
    (tick,) = _FRAME_HEAD.unpack_from(data, 1)
    body = data[1 + _FRAME_HEAD.size :]
    if tag == RECORD_FRAME:
        expected = CANVAS_ROWS * CANVAS_COLS
        if len(body) != expected:
            raise SessionLogError(f"record {index}: frame payload {len(body)} != {expected}")
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(CANVAS_ROWS, CANVAS_COLS)
        return SessionRecord(tick, "frame", TactileCanvas(tick, pixels.copy()))
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise SessionLogError(f"record {index}: bad payload: {err}") from None
    return SessionRecord(tick, _KIND_NAMES[tag], payload)


def save_session(path, log: SessionLog):
    write_container(path, (_encode_record(r) for r in log.records))


def load_session(path) -> SessionLog:
    records = [
        _decode_record(raw, i) for i, raw in enumerate(read_container(path))
    ]
    return SessionLog(records=records)


def replay_frames(log: SessionLog, speed: float = 1.0, tick_seconds: float = 0.1):
    """Re-emit a session's canvases at original tick spacing / speed.

    speed <= 0 disables pacing entirely (as-fast-as-possible replay).
    """
    last_tick = None
    for record in log.records:
        if record.kind != "frame":
            continue
        canvas: TactileCanvas = record.payload
        if speed > 0 and last_tick is not None and canvas.tick > last_tick:
            time.sleep((canvas.tick - last_tick) * tick_seconds / speed)
        last_tick = canvas.tick
        yield canvas

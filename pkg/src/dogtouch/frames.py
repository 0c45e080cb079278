"""Pressure-frame data model and the binary wire codec.

A reading board delivers a 32x32 grid of 8-bit pressure samples per tick.
Eight synchronized boards tile a 64x128 canvas (2 rows x 4 columns of
32x32 tiles, board b -> tile (b // 4, b % 4)). Twenty consecutive
canvases form one gesture window. The byte-level layout of the wire
codec and the dataset container is documented in docs/protocol.md.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

CANVAS_ROWS = 64
CANVAS_COLS = 128
BOARD_ROWS = 32
BOARD_COLS = 32
BOARD_COUNT = 8
TILE_COLS = 4
WINDOW_FRAMES = 20
FRAME_RATE_HZ = 10

FRAME_MAGIC = b"TDF1"
FRAME_VERSION = 1
# magic(4) version(1) board_id(1) rows(2) cols(2) tick(8), little-endian
_HEADER = struct.Struct("<4sBBHHQ")
HEADER_SIZE = _HEADER.size
CHECKSUM_SIZE = 4
BOARD_FRAME_WIRE_SIZE = HEADER_SIZE + BOARD_ROWS * BOARD_COLS + CHECKSUM_SIZE

CONTAINER_MAGIC = b"TDC1"
CONTAINER_VERSION = 1


class FrameCodecError(ValueError):
    """Base class for wire-format failures."""


class FrameFormatError(FrameCodecError):
    """Bad magic, unsupported version, or inconsistent header fields."""


class FrameChecksumError(FrameCodecError):
    """Payload checksum does not match the header."""


class FrameLengthError(FrameCodecError):
    """Byte sequence is shorter or longer than the header implies."""


class AssemblyError(ValueError):
    """Missing or duplicated board ids in a canvas assembly."""


class SynchronizationError(ValueError):
    """Boards of one assembly carry different ticks."""

    def __init__(self, message: str, offending_boards: list[int]):
        super().__init__(message)
        self.offending_boards = offending_boards


def _as_u8(samples, shape) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.uint8)
    if arr.shape != shape:
        raise ValueError(f"expected samples of shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class BoardFrame:
    """One board's quantized pressure grid at one tick."""

    board_id: int
    tick: int
    samples: np.ndarray  # (rows, cols) uint8
    rows: int = BOARD_ROWS
    cols: int = BOARD_COLS

    def __post_init__(self):
        if not 0 <= self.board_id < BOARD_COUNT:
            raise ValueError(f"board_id {self.board_id} outside [0, {BOARD_COUNT})")
        if self.tick < 0:
            raise ValueError("tick must be non-negative")
        object.__setattr__(self, "samples", _as_u8(self.samples, (self.rows, self.cols)))

    def __eq__(self, other):
        return (
            isinstance(other, BoardFrame)
            and self.board_id == other.board_id
            and self.tick == other.tick
            and self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True, eq=False)
class TactileCanvas:
    """The assembled 64x128 pressure image at one tick."""

    tick: int
    pixels: np.ndarray  # (64, 128) uint8

    def __post_init__(self):
        object.__setattr__(self, "pixels", _as_u8(self.pixels, (CANVAS_ROWS, CANVAS_COLS)))

    def __eq__(self, other):
        return (
            isinstance(other, TactileCanvas)
            and self.tick == other.tick
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class GestureWindow:
    """Twenty consecutive canvases; the classifier's input unit."""

    frames: tuple
    label: int | None = None  # gesture class id

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) != WINDOW_FRAMES:
            raise ValueError(f"window needs exactly {WINDOW_FRAMES} frames, got {len(frames)}")
        ticks = [f.tick for f in frames]
        if any(b - a != 1 for a, b in zip(ticks, ticks[1:])):
            raise ValueError("window ticks must be strictly consecutive")
        object.__setattr__(self, "frames", frames)

    @property
    def start_tick(self) -> int:
        return self.frames[0].tick

    def stack(self) -> np.ndarray:
        """Window as one (20, 64, 128) uint8 array."""
        return np.stack([f.pixels for f in self.frames])

    @classmethod
    def from_stack(cls, pixels: np.ndarray, start_tick: int = 0, label: int | None = None):
        pixels = np.asarray(pixels, dtype=np.uint8)
        if pixels.shape != (WINDOW_FRAMES, CANVAS_ROWS, CANVAS_COLS):
            raise ValueError(f"bad window stack shape {pixels.shape}")
        frames = tuple(TactileCanvas(start_tick + i, pixels[i]) for i in range(WINDOW_FRAMES))
        return cls(frames=frames, label=label)

    def __eq__(self, other):
        return (
            isinstance(other, GestureWindow)
            and self.label == other.label
            and self.frames == other.frames
        )


def board_tile(board_id: int) -> tuple[int, int]:
    """Canvas (row, col) origin of a board's 32x32 tile."""
    if not 0 <= board_id < BOARD_COUNT:
        raise ValueError(f"board_id {board_id} outside [0, {BOARD_COUNT})")
    return (board_id // TILE_COLS) * BOARD_ROWS, (board_id % TILE_COLS) * BOARD_COLS


def quantize_pressure(force_kg: float, range_max_kg: float) -> int:
    """Linear 8-bit quantization of a force reading, clamped to [0, 255]."""
    if force_kg < 0:
        raise ValueError(f"force must be non-negative, got {force_kg}")
    if range_max_kg <= 0:
        raise ValueError(f"range_max must be positive, got {range_max_kg}")
    return int(min(255, round(force_kg / range_max_kg * 255)))


def assemble_canvas(boards) -> TactileCanvas:
    """Tile 8 synchronized board frames into one canvas.

    Raises AssemblyError on missing/duplicate board ids and
    SynchronizationError (naming the offenders) on tick mismatch.
    """
    boards = list(boards)
    ids = sorted(b.board_id for b in boards)
    if ids != list(range(BOARD_COUNT)):
        raise AssemblyError(f"need board ids 0..{BOARD_COUNT - 1} exactly once, got {ids}")
    ticks = {}
    for b in boards:
        ticks.setdefault(b.tick, []).append(b.board_id)
    if len(ticks) > 1:
        # majority tick is the reference; ties resolved toward the lower tick
        reference = max(sorted(ticks), key=lambda t: len(ticks[t]))
        offending = sorted(i for t, bids in ticks.items() if t != reference for i in bids)
        raise SynchronizationError(
            f"boards {offending} are not synchronized to tick {reference}", offending
        )
    pixels = np.zeros((CANVAS_ROWS, CANVAS_COLS), dtype=np.uint8)
    for b in boards:
        r0, c0 = board_tile(b.board_id)
        pixels[r0 : r0 + BOARD_ROWS, c0 : c0 + BOARD_COLS] = b.samples
    return TactileCanvas(tick=boards[0].tick, pixels=pixels)


def disassemble_canvas(canvas: TactileCanvas) -> list[BoardFrame]:
    """Inverse of assemble_canvas: cut the canvas back into 8 board frames."""
    out = []
    for board_id in range(BOARD_COUNT):
        r0, c0 = board_tile(board_id)
        tile = canvas.pixels[r0 : r0 + BOARD_ROWS, c0 : c0 + BOARD_COLS]
        out.append(BoardFrame(board_id=board_id, tick=canvas.tick, samples=tile.copy()))
    return out


def encode_frame(frame: BoardFrame) -> bytes:
    """Canonical byte encoding: header, raw payload, CRC32 over both."""
    header = _HEADER.pack(
        FRAME_MAGIC, FRAME_VERSION, frame.board_id, frame.rows, frame.cols, frame.tick
    )
    payload = frame.samples.tobytes()
    checksum = zlib.crc32(header + payload)
    return header + payload + struct.pack("<I", checksum)


def decode_frame(data: bytes) -> BoardFrame:
    """Decode one wire frame, validating magic, length and checksum."""
    if len(data) < HEADER_SIZE:
        raise FrameLengthError(f"truncated header: {len(data)} < {HEADER_SIZE} bytes")
    magic, version, board_id, rows, cols, tick = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise FrameFormatError(f"bad magic {magic!r}")
    if version != FRAME_VERSION:
        raise FrameFormatError(f"unsupported frame version {version}")
    expected = HEADER_SIZE + rows * cols + CHECKSUM_SIZE
    if len(data) != expected:
        raise FrameLengthError(f"expected {expected} bytes for {rows}x{cols} frame, got {len(data)}")
    body = data[: HEADER_SIZE + rows * cols]
    (checksum,) = struct.unpack_from("<I", data, HEADER_SIZE + rows * cols)
    if zlib.crc32(body) != checksum:
        raise FrameChecksumError("payload checksum mismatch")
    if not 0 <= board_id < BOARD_COUNT:
        raise FrameFormatError(f"board_id {board_id} outside [0, {BOARD_COUNT})")
    samples = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=HEADER_SIZE)
    return BoardFrame(
        board_id=board_id, tick=tick, samples=samples.reshape(rows, cols).copy(),
        rows=rows, cols=cols,
    )


# --- dataset / log container -------------------------------------------------

def write_container(path, records, version: int = CONTAINER_VERSION) -> int:
    """Write length-prefixed records to a container file. Returns the count."""
    records = iter(records)
    count = 0
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC + struct.pack("<BI", version, 0))
        for rec in records:
            fh.write(struct.pack("<I", len(rec)))
            fh.write(rec)
            count += 1
        fh.seek(len(CONTAINER_MAGIC) + 1)
        fh.write(struct.pack("<I", count))
    return count


def read_container(path):
    """Yield the raw records of a container file.

    Raises FrameFormatError on bad magic and FrameLengthError with the
    index of the last valid record on truncation.
    """
    with open(path, "rb") as fh:
        head = fh.read(len(CONTAINER_MAGIC) + 5)
        if len(head) < len(CONTAINER_MAGIC) + 5 or head[: len(CONTAINER_MAGIC)] != CONTAINER_MAGIC:
            raise FrameFormatError("not a container file")
        version, count = struct.unpack_from("<BI", head, len(CONTAINER_MAGIC))
        if version != CONTAINER_VERSION:
            raise FrameFormatError(f"unsupported container version {version}")
        for index in range(count):
            size_bytes = fh.read(4)
            if len(size_bytes) < 4:
                raise FrameLengthError(f"container truncated after record {index - 1}")
            (size,) = struct.unpack("<I", size_bytes)
            rec = fh.read(size)
            if len(rec) < size:
                raise FrameLengthError(f"container truncated after record {index - 1}")
            yield rec


_WINDOW_HEAD = struct.Struct("<qi")  # start_tick, label (-1 = unlabeled)


def encode_window(window: GestureWindow) -> bytes:
    label = -1 if window.label is None else int(window.label)
    return _WINDOW_HEAD.pack(window.start_tick, label) + window.stack().tobytes()


def decode_window(data: bytes) -> GestureWindow:
    expected = _WINDOW_HEAD.size + WINDOW_FRAMES * CANVAS_ROWS * CANVAS_COLS
    if len(data) != expected:
        raise FrameLengthError(f"window record must be {expected} bytes, got {len(data)}")
    start_tick, label = _WINDOW_HEAD.unpack_from(data)
    pixels = np.frombuffer(data, dtype=np.uint8, offset=_WINDOW_HEAD.size)
    pixels = pixels.reshape(WINDOW_FRAMES, CANVAS_ROWS, CANVAS_COLS)
    return GestureWindow.from_stack(pixels, start_tick, None if label < 0 else label)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dogtouch import frames
from dogtouch.frames import (
    BOARD_FRAME_WIRE_SIZE,
    BoardFrame,
    FrameChecksumError,
    FrameCodecError,
    FrameFormatError,
    FrameLengthError,
    GestureWindow,
    SynchronizationError,
    TactileCanvas,
    assemble_canvas,
    board_tile,
    decode_frame,
    decode_window,
    disassemble_canvas,
    encode_frame,
    encode_window,
    quantize_pressure,
    read_container,
    write_container,
)


def random_board(rng, board_id=None, tick=None):
    return BoardFrame(
        board_id=int(rng.integers(0, 8)) if board_id is None else board_id,
        tick=int(rng.integers(0, 2**40)) if tick is None else tick,
        samples=rng.integers(0, 256, size=(32, 32), dtype=np.uint8),
    )


class TestQuantize:
    def test_zero_force(self):
        assert quantize_pressure(0.0, 2.0) == 0

    def test_full_scale(self):
        assert quantize_pressure(2.0, 2.0) == 255

    def test_clamped_above_range(self):
        assert quantize_pressure(3.0, 2.0) == 255

    def test_negative_force_rejected(self):
        with pytest.raises(ValueError):
            quantize_pressure(-0.1, 2.0)

    @given(st.floats(0, 30), st.floats(0, 30))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert quantize_pressure(lo, 25.0) <= quantize_pressure(hi, 25.0)


class TestAssemble:
    def test_all_zero(self):
        boards = [BoardFrame(i, 7, np.zeros((32, 32), np.uint8)) for i in range(8)]
        canvas = assemble_canvas(boards)
        assert canvas.tick == 7
        assert not canvas.pixels.any()

    def test_board0_lands_top_left(self):
        boards = [
            BoardFrame(i, 0, np.full((32, 32), 255 if i == 0 else 0, np.uint8))
            for i in range(8)
        ]
        canvas = assemble_canvas(boards)
        assert (canvas.pixels[:32, :32] == 255).all()
        total = int(canvas.pixels.astype(np.int64).sum())
        assert total == 255 * 32 * 32  # nothing anywhere else

    def test_tiling_table(self):
        # each board's tile origin follows (b // 4, b % 4)
        for b in range(8):
            r0, c0 = board_tile(b)
            assert r0 == (b // 4) * 32
            assert c0 == (b % 4) * 32

    def test_duplicate_board_rejected(self):
        rng = np.random.default_rng(0)
        boards = [random_board(rng, board_id=i, tick=3) for i in range(8)]
        boards[3] = BoardFrame(2, 3, boards[3].samples)
        with pytest.raises(frames.AssemblyError):
            assemble_canvas(boards)

    def test_tick_mismatch_names_offender(self):
        rng = np.random.default_rng(1)
        boards = [random_board(rng, board_id=i, tick=5) for i in range(7)]
        boards.append(random_board(rng, board_id=7, tick=6))
        with pytest.raises(SynchronizationError) as exc:
            assemble_canvas(boards)
        assert exc.value.offending_boards == [7]

    def test_round_trip_via_disassemble(self):
        rng = np.random.default_rng(2)
        boards = [random_board(rng, board_id=i, tick=11) for i in range(8)]
        canvas = assemble_canvas(boards)
        again = disassemble_canvas(canvas)
        assert again == boards


class TestWireCodec:
    def test_documented_length(self):
        # header 18 + payload 1024 + crc 4
        assert BOARD_FRAME_WIRE_SIZE == 1046
        rng = np.random.default_rng(3)
        assert len(encode_frame(random_board(rng))) == 1046

    def test_round_trip_thousand_random_frames(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            f = random_board(rng)
            assert decode_frame(encode_frame(f)) == f

    def test_encoding_canonical(self):
        rng = np.random.default_rng(5)
        f = random_board(rng)
        assert encode_frame(f) == encode_frame(decode_frame(encode_frame(f)))

    def test_bad_magic(self):
        rng = np.random.default_rng(6)
        data = bytearray(encode_frame(random_board(rng)))
        data[0] ^= 0xFF
        with pytest.raises(FrameFormatError):
            decode_frame(bytes(data))

    def test_checksum_mismatch(self):
        rng = np.random.default_rng(7)
        data = bytearray(encode_frame(random_board(rng)))
        data[100] ^= 0x01
        with pytest.raises(FrameChecksumError):
            decode_frame(bytes(data))

    def test_truncation(self):
        rng = np.random.default_rng(8)
        data = encode_frame(random_board(rng))
        with pytest.raises(FrameLengthError):
            decode_frame(data[:-3])
        with pytest.raises(FrameLengthError):
            decode_frame(data[:10])

    @settings(max_examples=200)
    @given(st.integers(0, 1045), st.integers(1, 255))
    def test_single_byte_corruption_never_crashes(self, pos, flip):
        rng = np.random.default_rng(9)
        data = bytearray(encode_frame(random_board(rng)))
        data[pos] ^= flip
        try:
            decode_frame(bytes(data))
        except FrameCodecError:
            pass  # rejection is fine; crashing is not


class TestWindow:
    def test_requires_20_consecutive(self):
        pix = np.zeros((64, 128), np.uint8)
        with pytest.raises(ValueError):
            GestureWindow(frames=[TactileCanvas(t, pix) for t in range(19)])
        with pytest.raises(ValueError):
            GestureWindow(frames=[TactileCanvas(t * 2, pix) for t in range(20)])

    def test_stack_round_trip(self):
        rng = np.random.default_rng(10)
        stack = rng.integers(0, 256, size=(20, 64, 128), dtype=np.uint8)
        w = GestureWindow.from_stack(stack, start_tick=5, label=12)
        assert np.array_equal(w.stack(), stack)
        assert w.start_tick == 5

    def test_window_codec_round_trip(self):
        rng = np.random.default_rng(11)
        stack = rng.integers(0, 256, size=(20, 64, 128), dtype=np.uint8)
        w = GestureWindow.from_stack(stack, start_tick=1000, label=80)
        assert decode_window(encode_window(w)) == w
        unlabeled = GestureWindow.from_stack(stack, start_tick=0, label=None)
        assert decode_window(encode_window(unlabeled)).label is None


class TestContainer:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "records.tdc"
        records = [bytes([i]) * (i + 1) for i in range(5)]
        assert write_container(path, records) == 5
        assert list(read_container(path)) == records

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.tdc"
        write_container(path, [])
        assert list(read_container(path)) == []

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tdc"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FrameFormatError):
            list(read_container(path))

    def test_truncation_names_last_valid_record(self, tmp_path):
        path = tmp_path / "trunc.tdc"
        write_container(path, [b"aaaa", b"bbbb", b"cccc"])
        data = path.read_bytes()
        path.write_bytes(data[:-6])
        with pytest.raises(FrameLengthError, match="record 1"):
            list(read_container(path))

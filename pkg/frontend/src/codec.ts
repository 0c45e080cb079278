/**
 * Board-frame wire codec, bit-compatible with the server
 * (see docs/protocol.md for the byte layout).
 */

export const FRAME_MAGIC = [0x54, 0x44, 0x46, 0x31]; // "TDF1"
export const FRAME_VERSION = 1;
export const BOARD_ROWS = 32;
export const BOARD_COLS = 32;
export const BOARD_COUNT = 8;
export const HEADER_SIZE = 18;
export const CHECKSUM_SIZE = 4;
export const BOARD_FRAME_WIRE_SIZE = HEADER_SIZE + BOARD_ROWS * BOARD_COLS + CHECKSUM_SIZE;

export interface BoardFrame {
  boardId: number;
  tick: number; // safe integers only; ticks stay far below 2^53
  samples: Uint8Array; // row-major 32x32
}

export class CodecError extends Error {}
export class FrameFormatError extends CodecError {}
export class FrameLengthError extends CodecError {}
export class FrameChecksumError extends CodecError {}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = CRC_TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function encodeFrame(frame: BoardFrame): Uint8Array {
  if (frame.samples.length !== BOARD_ROWS * BOARD_COLS) {
    throw new FrameFormatError(`expected ${BOARD_ROWS * BOARD_COLS} samples`);
  }
  if (frame.boardId < 0 || frame.boardId >= BOARD_COUNT) {
    throw new FrameFormatError(`board id ${frame.boardId} outside [0, ${BOARD_COUNT})`);
  }
  const out = new Uint8Array(BOARD_FRAME_WIRE_SIZE);
  const view = new DataView(out.buffer);
  out.set(FRAME_MAGIC, 0);
  out[4] = FRAME_VERSION;
  out[5] = frame.boardId;
  view.setUint16(6, BOARD_ROWS, true);
  view.setUint16(8, BOARD_COLS, true);
  view.setBigUint64(10, BigInt(frame.tick), true);
  out.set(frame.samples, HEADER_SIZE);
  const checksum = crc32(out.subarray(0, HEADER_SIZE + frame.samples.length));
  view.setUint32(HEADER_SIZE + frame.samples.length, checksum, true);
  return out;
}

export function decodeFrame(data: Uint8Array): BoardFrame {
  if (data.length < HEADER_SIZE) {
    throw new FrameLengthError(`truncated header: ${data.length} bytes`);
  }
  for (let i = 0; i < 4; i++) {
    if (data[i] !== FRAME_MAGIC[i]) throw new FrameFormatError("bad magic");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (data[4] !== FRAME_VERSION) {
    throw new FrameFormatError(`unsupported version ${data[4]}`);
  }
  const boardId = data[5];
  const rows = view.getUint16(6, true);
  const cols = view.getUint16(8, true);
  const tick = Number(view.getBigUint64(10, true));
  const expected = HEADER_SIZE + rows * cols + CHECKSUM_SIZE;
  if (data.length !== expected) {
    throw new FrameLengthError(`expected ${expected} bytes, got ${data.length}`);
  }
  const body = data.subarray(0, HEADER_SIZE + rows * cols);
  const checksum = view.getUint32(HEADER_SIZE + rows * cols, true);
  if (crc32(body) !== checksum) {
    throw new FrameChecksumError("payload checksum mismatch");
  }
  if (boardId >= BOARD_COUNT) {
    throw new FrameFormatError(`board id ${boardId} outside [0, ${BOARD_COUNT})`);
  }
  return {
    boardId,
    tick,
    samples: data.slice(HEADER_SIZE, HEADER_SIZE + rows * cols),
  };
}

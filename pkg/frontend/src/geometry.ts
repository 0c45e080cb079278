/** Canvas/board geometry: tiling table, zone hit tests, brush stamps. */

import { BOARD_COLS, BOARD_COUNT, BOARD_ROWS, BoardFrame } from "./codec.js";
import { PartGeometry } from "./protocol.js";

export const CANVAS_ROWS = 64;
export const CANVAS_COLS = 128;
export const TILE_COLS = 4;

/** Canvas origin (row, col) of a board's 32x32 tile: (b div 4, b mod 4). */
export function boardTile(boardId: number): [number, number] {
  return [Math.floor(boardId / TILE_COLS) * BOARD_ROWS, (boardId % TILE_COLS) * BOARD_COLS];
}

/** Cut a 64x128 canvas into the 8 board frames of one tick. */
export function disassembleCanvas(pixels: Uint8Array, tick: number): BoardFrame[] {
  if (pixels.length !== CANVAS_ROWS * CANVAS_COLS) {
    throw new Error(`canvas must be ${CANVAS_ROWS * CANVAS_COLS} pixels`);
  }
  const frames: BoardFrame[] = [];
  for (let b = 0; b < BOARD_COUNT; b++) {
    const [r0, c0] = boardTile(b);
    const samples = new Uint8Array(BOARD_ROWS * BOARD_COLS);
    for (let r = 0; r < BOARD_ROWS; r++) {
      const src = (r0 + r) * CANVAS_COLS + c0;
      samples.set(pixels.subarray(src, src + BOARD_COLS), r * BOARD_COLS);
    }
    frames.push({ boardId: b, tick, samples });
  }
  return frames;
}

export interface Zone {
  name: string;
  row: number;
  col: number;
  height: number;
  width: number;
}

export function zonesFromParts(parts: PartGeometry[]): Zone[] {
  return parts.map((p) => ({
    name: p.name,
    row: p.region[0],
    col: p.region[1],
    height: p.region[2],
    width: p.region[3],
  }));
}

export function zoneAt(zones: Zone[], row: number, col: number): Zone | null {
  for (const z of zones) {
    if (row >= z.row && row < z.row + z.height && col >= z.col && col < z.col + z.width) {
      return z;
    }
  }
  return null;
}

/** CRC32 of the canonical parts JSON; must equal the server's value.
 * Matches python json.dumps(..., sort_keys=True, separators=(",", ":")):
 * compact JSON with keys in sorted order (name < region). */
export function geometryChecksum(parts: PartGeometry[], crc: (d: Uint8Array) => number): number {
  const text = JSON.stringify(parts.map((p) => ({ name: p.name, region: p.region })));
  return crc(new TextEncoder().encode(text));
}

/**
 * Paint surface: pressures in quantized units (0..255) on the 64x128
 * canvas. Stamps are radial falloff discs clipped to body zones, so
 * off-body touches never register; a per-tick decay fades released
 * contact.
 */
export class PaintSurface {
  readonly values: Float32Array;
  private zones: Zone[];

  constructor(zones: Zone[]) {
    this.values = new Float32Array(CANVAS_ROWS * CANVAS_COLS);
    this.zones = zones;
  }

  setZones(zones: Zone[]) {
    this.zones = zones;
  }

  stamp(row: number, col: number, radius: number, pressure: number) {
    const zone = zoneAt(this.zones, Math.round(row), Math.round(col));
    if (!zone) return; // off-body touch
    const r0 = Math.max(zone.row, Math.floor(row - 2.5 * radius));
    const r1 = Math.min(zone.row + zone.height - 1, Math.ceil(row + 2.5 * radius));
    const c0 = Math.max(zone.col, Math.floor(col - 2.5 * radius));
    const c1 = Math.min(zone.col + zone.width - 1, Math.ceil(col + 2.5 * radius));
    for (let r = r0; r <= r1; r++) {
      for (let c = c0; c <= c1; c++) {
        const d2 = ((r - row) ** 2 + (c - col) ** 2) / (radius * radius);
        if (d2 > 6.25) continue;
        const value = pressure * Math.exp(-0.5 * d2);
        const idx = r * CANVAS_COLS + c;
        if (value > this.values[idx]) this.values[idx] = value;
      }
    }
  }

  /** Quantized snapshot for the current tick, then decay. */
  snapshot(decay = 0.45): Uint8Array {
    const out = new Uint8Array(CANVAS_ROWS * CANVAS_COLS);
    for (let i = 0; i < out.length; i++) {
      out[i] = Math.max(0, Math.min(255, Math.round(this.values[i])));
      this.values[i] *= decay;
      if (this.values[i] < 1) this.values[i] = 0;
    }
    return out;
  }

  clear() {
    this.values.fill(0);
  }
}

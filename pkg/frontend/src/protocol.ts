/** Message framing and typed payloads of the pipeline service protocol. */

export const MSG_FRAME = 0x01;
export const MSG_CONTROL = 0x02;
export const MSG_GESTURE = 0x10;
export const MSG_ACTION = 0x11;
export const MSG_REJECTION = 0x12;
export const MSG_STATE = 0x13;
export const MSG_TAXONOMY = 0x14;
export const MSG_ERROR = 0x1f;

export const MAX_MESSAGE_SIZE = 1 << 20;

export interface Message {
  type: number;
  payload: Uint8Array;
}

export interface PartGeometry {
  name: string;
  region: [number, number, number, number]; // row, col, height, width
}

export interface TaxonomyMessage {
  protocol_version: number;
  schema_version: number;
  parts: PartGeometry[];
  gesture_kinds: string[];
  geometry_checksum: number;
  postures: string[];
}

export interface GestureMessage {
  tick: number;
  start_tick: number;
  end_tick: number;
  class_id: number;
  token: string;
  kind: string;
  part: string | null;
  confidence: number;
}

export interface ActionMessage {
  tick: number;
  action: string;
  duration_ticks: number;
  resulting_posture: string;
  motor_params: Record<string, number>;
  trigger: string;
  fallback: boolean;
}

export interface RejectionMessage {
  tick: number;
  action: string;
  reason: string;
  trigger: string;
}

export interface StateMessage {
  tick: number;
  posture: string;
  current_action: string | null;
  remaining_ticks: number;
  history: string[];
}

export function packMessage(type: number, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(4 + 1 + payload.length);
  new DataView(out.buffer).setUint32(0, 1 + payload.length, true);
  out[4] = type;
  out.set(payload, 5);
  return out;
}

export function packJson(type: number, value: unknown): Uint8Array {
  return packMessage(type, new TextEncoder().encode(JSON.stringify(value)));
}

export function decodeJson<T>(payload: Uint8Array): T {
  return JSON.parse(new TextDecoder().decode(payload)) as T;
}

/**
 * Incremental reader: feed arbitrary byte chunks, get whole messages.
 * Works for the TCP byte stream; WebSocket transports deliver one
 * framed record per binary message and can feed them whole.
 */
export class MessageReader {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): Message[] {
    const joined = new Uint8Array(this.buffer.length + chunk.length);
    joined.set(this.buffer, 0);
    joined.set(chunk, this.buffer.length);
    this.buffer = joined;
    const out: Message[] = [];
    while (this.buffer.length >= 4) {
      const size = new DataView(this.buffer.buffer, this.buffer.byteOffset).getUint32(0, true);
      if (size < 1 || size > MAX_MESSAGE_SIZE) {
        throw new Error(`bad message size ${size}`);
      }
      if (this.buffer.length < 4 + size) break;
      out.push({
        type: this.buffer[4],
        payload: this.buffer.slice(5, 4 + size),
      });
      this.buffer = this.buffer.slice(4 + size);
    }
    return out;
  }
}

/**
 * Transport-agnostic protocol client.
 *
 * The browser uses the WebSocket transport (one framed record per
 * binary message); tests drive the same client over raw TCP from node.
 * Outgoing frames are buffered at most ~2 s while disconnected, then
 * dropped oldest-first.
 */

import { BoardFrame, encodeFrame } from "./codec.js";
import {
  ActionMessage,
  GestureMessage,
  Message,
  MessageReader,
  MSG_ACTION,
  MSG_CONTROL,
  MSG_ERROR,
  MSG_FRAME,
  MSG_GESTURE,
  MSG_REJECTION,
  MSG_STATE,
  MSG_TAXONOMY,
  packJson,
  packMessage,
  decodeJson,
  RejectionMessage,
  StateMessage,
  TaxonomyMessage,
} from "./protocol.js";

export interface Transport {
  send(data: Uint8Array): void;
  close(): void;
  onData(cb: (chunk: Uint8Array) => void): void;
  onClose(cb: () => void): void;
}

export function webSocketTransport(url: string, onOpen: () => void): Transport {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  let dataCb: (chunk: Uint8Array) => void = () => {};
  let closeCb: () => void = () => {};
  ws.onopen = onOpen;
  ws.onmessage = (ev) => {
    if (ev.data instanceof ArrayBuffer) dataCb(new Uint8Array(ev.data));
  };
  ws.onclose = () => closeCb();
  ws.onerror = () => ws.close();
  return {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onData: (cb) => (dataCb = cb),
    onClose: (cb) => (closeCb = cb),
  };
}

export interface ClientEvents {
  taxonomy?: (msg: TaxonomyMessage) => void;
  gesture?: (msg: GestureMessage) => void;
  action?: (msg: ActionMessage) => void;
  rejection?: (msg: RejectionMessage) => void;
  state?: (msg: StateMessage) => void;
  error?: (msg: Record<string, unknown>) => void;
  disconnected?: () => void;
  unknown?: (msg: Message) => void;
}

const BUFFER_LIMIT = 20; // ~2 s of ticks at 10 Hz

export class PipelineClient {
  private transport: Transport | null = null;
  private reader = new MessageReader();
  private pending: Uint8Array[] = [];
  connected = false;

  constructor(private events: ClientEvents) {}

  attach(transport: Transport) {
    this.transport = transport;
    this.reader = new MessageReader();
    transport.onData((chunk) => {
      let messages: Message[];
      try {
        messages = this.reader.push(chunk);
      } catch {
        this.events.error?.({ reason: "bad_stream" });
        transport.close();
        return;
      }
      for (const m of messages) this.dispatch(m);
    });
    transport.onClose(() => {
      this.connected = false;
      this.transport = null;
      this.events.disconnected?.();
    });
  }

  /** Call once the transport is open (WS onopen / TCP connect). */
  handshake() {
    this.connected = true;
    this.sendRaw(packJson(MSG_CONTROL, { op: "hello" }));
    for (const record of this.pending.splice(0)) this.sendRaw(record);
  }

  private dispatch(message: Message) {
    switch (message.type) {
      case MSG_TAXONOMY:
        this.events.taxonomy?.(decodeJson<TaxonomyMessage>(message.payload));
        break;
      case MSG_GESTURE:
        this.events.gesture?.(decodeJson<GestureMessage>(message.payload));
        break;
      case MSG_ACTION:
        this.events.action?.(decodeJson<ActionMessage>(message.payload));
        break;
      case MSG_REJECTION:
        this.events.rejection?.(decodeJson<RejectionMessage>(message.payload));
        break;
      case MSG_STATE:
        this.events.state?.(decodeJson<StateMessage>(message.payload));
        break;
      case MSG_ERROR:
        this.events.error?.(decodeJson<Record<string, unknown>>(message.payload));
        break;
      default:
        // unknown message types are noted and skipped; the stream continues
        console.warn(`ignoring unknown message type 0x${message.type.toString(16)}`);
        this.events.unknown?.(message);
    }
  }

  private sendRaw(record: Uint8Array) {
    if (this.connected && this.transport) {
      this.transport.send(record);
    } else {
      this.pending.push(record);
      if (this.pending.length > BUFFER_LIMIT) this.pending.shift();
    }
  }

  sendBoardFrame(frame: BoardFrame) {
    this.sendRaw(packMessage(MSG_FRAME, encodeFrame(frame)));
  }

  sendFrames(frames: BoardFrame[]) {
    for (const f of frames) this.sendBoardFrame(f);
  }

  requestState() {
    this.sendRaw(packJson(MSG_CONTROL, { op: "state" }));
  }

  close() {
    this.transport?.close();
  }
}
